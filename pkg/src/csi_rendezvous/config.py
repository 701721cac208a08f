"""World configuration: dataclasses, TOML loading and ``key=value`` overrides.

Config files are TOML.  Top-level keys set scalar world fields; each section
(``[noise]``, ``[radio]``, ...) sets one sub-config.  Angles are written in
degrees under a ``_deg`` suffix (``sigma_rot_deg = 5``) and stored in radians.
Every field is addressable as a dotted key, e.g. ``noise.sigma_rot_deg``.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import tomli

from .aoa import AoaNoiseParams
from .channel import RadioEnvironment
from .geometry import PoseNoiseModel
from .obstacles import ObstacleSet, Rect
from .outlier import OutlierPolicy
from .rendezvous import RendezvousParams

STRATEGIES = ("active", "random")
ANCHOR_MODES = ("all", "first")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class SensingConfig:
    """Quarter-turn capture and profile handling."""

    snapshots: int = 90
    heading_jitter: float = math.radians(2.0)
    n_peaks: int = 4
    multipath: bool = True
    reweight_online: bool = False
    refine_peaks: bool = True

    def __post_init__(self):
        if self.snapshots < 8:
            raise ValueError("snapshots must be >= 8")
        if self.heading_jitter < 0:
            raise ValueError("heading_jitter must be >= 0")
        if self.n_peaks < 1:
            raise ValueError("n_peaks must be >= 1")


@dataclass(frozen=True)
class WorldConfig:
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 45.0, 45.0)
    obstacles: tuple[tuple[float, ...], ...] = ()
    n_robots: int = 10
    n_iterations: int = 50
    step_length: float = 2.0
    sensor_range: float = 2.2
    strategy: str = "active"
    seed: int = 0
    q_default: float = 12.0
    alpha_default: float = 1.0
    anchor_mode: str = "all"
    info_trans: float = 1.0
    info_rot: float = 1.0
    noise: PoseNoiseModel = field(default_factory=PoseNoiseModel)
    drift: PoseNoiseModel = field(default_factory=lambda: PoseNoiseModel(0.9, math.radians(10.0)))
    radio: RadioEnvironment = field(default_factory=RadioEnvironment)
    rendezvous: RendezvousParams = field(default_factory=RendezvousParams)
    aoa: AoaNoiseParams = field(default_factory=AoaNoiseParams)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    outliers: OutlierPolicy = field(default_factory=lambda: OutlierPolicy(fraction=0.0))

    def __post_init__(self):
        if self.n_robots < 2:
            raise ValueError("n_robots must be >= 2")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.step_length <= 0 or self.sensor_range <= 0:
            raise ValueError("step_length and sensor_range must be > 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.anchor_mode not in ANCHOR_MODES:
            raise ValueError(f"anchor_mode must be one of {ANCHOR_MODES}")
        if self.q_default <= 0 or self.alpha_default < 0:
            raise ValueError("q_default must be > 0 and alpha_default >= 0")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.info_trans <= 0 or self.info_rot <= 0:
            raise ValueError("info_trans and info_rot must be > 0")
        self.obstacle_set()  # validates containment

    def obstacle_set(self) -> ObstacleSet:
        rects = []
        for o in self.obstacles:
            if len(o) not in (4, 5):
                raise ValueError(f"obstacle {o!r} needs [xmin, ymin, xmax, ymax] or [..., tall]")
            rects.append(Rect(*[float(v) for v in o[:4]], tall=bool(o[4]) if len(o) == 5 else True))
        return ObstacleSet(Rect(*[float(v) for v in self.bounds]), tuple(rects))

    def replace(self, **changes) -> "WorldConfig":
        return dataclasses.replace(self, **changes)


SECTIONS: dict[str, type] = {
    "noise": PoseNoiseModel,
    "drift": PoseNoiseModel,
    "radio": RadioEnvironment,
    "rendezvous": RendezvousParams,
    "aoa": AoaNoiseParams,
    "sensing": SensingConfig,
    "outliers": OutlierPolicy,
}

ANGLE_FIELDS = {
    ("noise", "sigma_rot"),
    ("drift", "sigma_rot"),
    ("aoa", "sigma_theta"),
    ("aoa", "sigma_phi"),
    ("aoa", "delta"),
    ("sensing", "heading_jitter"),
}


def _field_names(cls) -> dict[str, dataclasses.Field]:
    return {f.name: f for f in dataclasses.fields(cls)}


def _coerce(value: Any, current: Any, key: str) -> Any:
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{key} expects true or false, got {value!r}")
        return value
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{key} expects an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{key} expects a number, got {value!r}")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ValueError(f"{key} expects a string, got {value!r}")
        return value
    if isinstance(current, tuple):
        if not isinstance(value, list):
            raise ValueError(f"{key} expects an array, got {value!r}")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def _resolve(section: str | None, key: str) -> tuple[str, bool]:
    """Map a file key to (field name, is_degrees)."""
    if key.endswith("_deg"):
        name = key[: -len("_deg")]
        if section is not None and (section, name) in ANGLE_FIELDS:
            return name, True
        raise KeyError(key)
    if section is not None and (section, key) in ANGLE_FIELDS:
        raise KeyError(f"{key} (angles are given in degrees as {key}_deg)")
    return key, False


def _apply(config: WorldConfig, flat: Mapping[str, tuple[Any, int | None]], source: str | None) -> WorldConfig:
    top: dict[str, Any] = {}
    sub: dict[str, dict[str, Any]] = {}
    world_fields = _field_names(WorldConfig)
    for dotted, (value, line) in flat.items():
        parts = dotted.split(".")
        try:
            if len(parts) == 1:
                name = parts[0]
                if name not in world_fields or name in SECTIONS:
                    raise KeyError(name)
                top[name] = _coerce(value, getattr(config, name), name)
            elif len(parts) == 2 and parts[0] in SECTIONS:
                sect, key = parts
                name, deg = _resolve(sect, key)
                current_obj = getattr(config, sect)
                if name not in _field_names(type(current_obj)):
                    raise KeyError(key)
                v = _coerce(value, getattr(current_obj, name), dotted)
                sub.setdefault(sect, {})[name] = math.radians(v) if deg else v
            else:
                raise KeyError(dotted)
        except KeyError as exc:
            raise ConfigError(f"unknown config key {exc.args[0]!r} in {dotted!r}", line, source) from None
        except ValueError as exc:
            raise ConfigError(str(exc), line, source) from None
    try:
        for sect, changes in sub.items():
            top[sect] = dataclasses.replace(getattr(config, sect), **changes)
        return dataclasses.replace(config, **top)
    except (ValueError, TypeError) as exc:
        line = max((ln for _, ln in flat.values() if ln is not None), default=None) if len(flat) == 1 else None
        raise ConfigError(f"invalid configuration: {exc}", line, source) from None


_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_]+)\s*\]")
_KEY = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=")


def _key_lines(text: str) -> dict[str, int]:
    lines: dict[str, int] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(raw)
        if m:
            section = m.group(1)
            continue
        m = _KEY.match(raw)
        if m:
            key = m.group(1) if section is None else f"{section}.{m.group(1)}"
            lines.setdefault(key, n)
    return lines


def _flatten(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_config(text: str, source: str | None = None, base: WorldConfig | None = None) -> WorldConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None, source) from None
    lines = _key_lines(text)
    flat = {k: (v, lines.get(k)) for k, v in _flatten(data).items()}
    if len(flat) > 1:
        # validate keys one at a time so a bad value is reported at its own line
        for k, item in flat.items():
            _apply(base or WorldConfig(), {k: item}, source)
    return _apply(base or WorldConfig(), flat, source)


def load_config(path: str | Path, base: WorldConfig | None = None) -> WorldConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    return parse_config(text, str(p), base)


def _parse_value(raw: str) -> Any:
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def apply_overrides(config: WorldConfig, overrides: list[str] | tuple[str, ...]) -> WorldConfig:
    """Apply ``key=value`` strings (values parsed as TOML, bare words as strings)."""
    flat: dict[str, tuple[Any, int | None]] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value", None, "--set")
        key, raw = item.split("=", 1)
        flat[key.strip()] = (_parse_value(raw.strip()), None)
    for k, v in flat.items():
        _apply(config, {k: v}, f"--set {k}")
    return _apply(config, flat, "--set")


def to_flat_dict(config: WorldConfig) -> dict[str, Any]:
    """Dotted keys in file units (degrees for angles), for logging."""
    out: dict[str, Any] = {}
    for f in dataclasses.fields(WorldConfig):
        v = getattr(config, f.name)
        if f.name in SECTIONS:
            for g in dataclasses.fields(v):
                val = getattr(v, g.name)
                if (f.name, g.name) in ANGLE_FIELDS:
                    out[f"{f.name}.{g.name}_deg"] = math.degrees(val)
                else:
                    out[f"{f.name}.{g.name}"] = val
        elif isinstance(v, tuple):
            out[f.name] = [list(x) if isinstance(x, tuple) else x for x in v]
        else:
            out[f.name] = v
    return out
