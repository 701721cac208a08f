"""Synthetic radio environment: ESNR path loss, image-method multipath and
two-antenna CSI snapshots taken while the receiver turns in place."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .obstacles import ObstacleSet, Rect


@dataclass(frozen=True)
class RadioEnvironment:
    wavelength: float = 0.06
    antenna_separation: float = 0.22
    esnr_ref_db: float = 30.0
    ref_distance: float = 1.0
    path_loss_exponent: float = 2.2
    shadowing_std_db: float = 2.0
    wall_attenuation_db: float = 6.0
    reflection_loss_db: float = 3.0
    max_reflections: int = 4
    noise_snr_db: float = 20.0
    sensing_range: float = 60.0
    comm_range: float = 10.0
    rate_scale: float = 1.0

    def __post_init__(self):
        if self.wavelength <= 0 or self.antenna_separation < 0:
            raise ValueError("wavelength must be > 0 and antenna_separation >= 0")
        if not (self.sensing_range >= self.comm_range > 0):
            raise ValueError("need sensing_range >= comm_range > 0")
        if self.ref_distance <= 0:
            raise ValueError("ref_distance must be > 0")


@dataclass(frozen=True)
class PathComponent:
    azimuth: float
    polar: float
    length: float
    gain: complex
    source: tuple[float, float, float]  # transmitter or its mirror image


@dataclass(frozen=True)
class QuarterTurn:
    """Receiver rotating in place about ``center`` starting at world yaw ``start_heading``."""

    center: tuple[float, float, float]
    start_heading: float = 0.0
    count: int = 90
    sweep: float = np.pi / 2
    heading_jitter: float = 0.0  # std of true-vs-recorded heading, radians

    def nominal_headings(self) -> np.ndarray:
        return np.arange(self.count) * (self.sweep / self.count)


@dataclass(frozen=True)
class SnapshotArray:
    ratios: np.ndarray  # complex h1/h2 per snapshot
    headings: np.ndarray  # recorded heading offsets from the start of the turn
    tx_orientation: tuple[float, float] = (0.0, 0.0)  # (B, Gamma)
    arc_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    wavelength: float = 0.06
    antenna_separation: float = 0.22
    regenerated: int = 0

    @property
    def count(self) -> int:
        return len(self.ratios)

    def __post_init__(self):
        if len(self.ratios) != len(self.headings):
            raise ValueError("ratios and headings must have equal length")
        if len(self.ratios) < 8:
            raise ValueError("at least 8 snapshots are required")


def esnr(env: RadioEnvironment, p_tx, p_rx, walls_crossed: int = 0, rng: np.random.Generator | None = None) -> float:
    """Log-distance path loss in dB; shadowing only when a generator is given."""
    d = float(np.linalg.norm(np.asarray(p_tx, float) - np.asarray(p_rx, float)))
    if d == 0.0:
        d = env.ref_distance
    value = env.esnr_ref_db - 10.0 * env.path_loss_exponent * np.log10(d / env.ref_distance)
    value -= walls_crossed * env.wall_attenuation_db
    if rng is not None:
        value += rng.normal(0.0, 1.0) * env.shadowing_std_db
    return float(value)


def rate_from_esnr(esnr_db: float, scale: float = 1.0) -> float:
    return max(0.0, scale * float(np.log2(1.0 + 10.0 ** (esnr_db / 10.0))))


def _direction(from_p: np.ndarray, to_p: np.ndarray) -> tuple[float, float]:
    d = to_p - from_p
    return float(np.arctan2(d[1], d[0])), float(np.arctan2(d[2], np.hypot(d[0], d[1])))


def _mirror(p: np.ndarray, axis: str, coord: float) -> np.ndarray:
    m = p.copy()
    k = 0 if axis == "x" else 1
    m[k] = 2.0 * coord - p[k]
    return m


def propagation_paths(env: RadioEnvironment, p_tx, p_rx, obstacles: ObstacleSet | None = None) -> list[PathComponent]:
    """Direct path plus first-order specular reflections off vertical obstacle faces."""
    tx = np.asarray(p_tx, dtype=float)
    rx = np.asarray(p_rx, dtype=float)
    rects: Sequence[Rect] = obstacles.rects if obstacles is not None else ()
    paths: list[PathComponent] = []

    d = float(np.linalg.norm(tx - rx))
    if d > 0.0:
        walls = obstacles.crossings(tx, rx) if obstacles is not None else 0
        az, pol = _direction(rx, tx)
        amp = (1.0 / d) * 10.0 ** (-walls * env.wall_attenuation_db / 20.0)
        paths.append(PathComponent(az, pol, d, complex(amp), tuple(tx)))

    reflected: list[PathComponent] = []
    refl_amp = 10.0 ** (-env.reflection_loss_db / 20.0)
    for rect in rects:
        if not rect.tall:
            continue
        for axis, coord, lo, hi, outward in rect.faces():
            k = 0 if axis == "x" else 1
            # both ends must be in front of the face
            if (tx[k] - coord) * outward <= 0 or (rx[k] - coord) * outward <= 0:
                continue
            image = _mirror(tx, axis, coord)
            t = (coord - rx[k]) / (image[k] - rx[k])
            hit = rx + t * (image - rx)
            other = hit[1 - k]
            if not (lo <= other <= hi):
                continue
            length = float(np.linalg.norm(image - rx))
            walls = 0
            if obstacles is not None:
                walls = obstacles.crossings(tx, hit, exclude=rect) + obstacles.crossings(hit, rx, exclude=rect)
            amp = (1.0 / length) * refl_amp * 10.0 ** (-walls * env.wall_attenuation_db / 20.0)
            az, pol = _direction(rx, image)
            reflected.append(PathComponent(az, pol, length, complex(amp), tuple(image)))
    reflected.sort(key=lambda c: c.length)
    paths.extend(reflected[: env.max_reflections])
    return paths


def antenna_positions(center, heading: float, separation: float) -> tuple[np.ndarray, np.ndarray]:
    """Antenna 1 sits to the left of the heading, antenna 2 to the right."""
    c = np.asarray(center, dtype=float)
    u = np.array([-np.sin(heading), np.cos(heading), 0.0])
    return c + 0.5 * separation * u, c - 0.5 * separation * u


def synthesize_csi(
    env: RadioEnvironment,
    paths: Sequence[PathComponent],
    arc: QuarterTurn,
    rng: np.random.Generator | None = None,
    noise: bool = True,
) -> SnapshotArray:
    """Per-antenna channel from exact antenna-to-source distances; returns h1/h2.

    Snapshot noise is circular complex Gaussian at ``env.noise_snr_db`` relative
    to the summed path power. ``noise=False`` or ``rng=None`` gives clean data.
    """
    if not paths:
        raise ValueError("no propagation paths")
    nominal = arc.nominal_headings()
    jitter = np.zeros(arc.count)
    if rng is not None and arc.heading_jitter > 0:
        jitter = rng.normal(0.0, arc.heading_jitter, size=arc.count)
    true_heading = arc.start_heading + nominal + jitter

    sources = np.array([p.source for p in paths])
    gains = np.array([p.gain for p in paths], dtype=complex)
    k_wave = 2.0 * np.pi / env.wavelength
    h = np.zeros((2, arc.count), dtype=complex)
    for s, psi in enumerate(true_heading):
        a1, a2 = antenna_positions(arc.center, psi, env.antenna_separation)
        d1 = np.linalg.norm(sources - a1, axis=1)
        d2 = np.linalg.norm(sources - a2, axis=1)
        h[0, s] = np.sum(gains * np.exp(-1j * k_wave * d1))
        h[1, s] = np.sum(gains * np.exp(-1j * k_wave * d2))

    regenerated = 0
    use_noise = noise and rng is not None and np.isfinite(env.noise_snr_db)
    sigma = np.sqrt(np.sum(np.abs(gains) ** 2) / 10.0 ** (env.noise_snr_db / 10.0)) if use_noise else 0.0
    ratios = np.empty(arc.count, dtype=complex)
    for s in range(arc.count):
        while True:
            if use_noise:
                n = (rng.normal(size=2) + 1j * rng.normal(size=2)) * (sigma / np.sqrt(2.0))
            else:
                n = np.zeros(2, dtype=complex)
            h1, h2 = h[0, s] + n[0], h[1, s] + n[1]
            if abs(h2) >= 1e-12:
                break
            regenerated += 1
            if not use_noise:
                raise ValueError("second antenna channel vanishes without noise")
        ratios[s] = h1 / h2
    return SnapshotArray(
        ratios=ratios,
        headings=nominal,
        tx_orientation=(0.0, 0.0),
        arc_center=tuple(float(v) for v in arc.center),
        wavelength=env.wavelength,
        antenna_separation=env.antenna_separation,
        regenerated=regenerated,
    )


def snapshots_to_csv(snaps: SnapshotArray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "heading_rad", "re_ratio", "im_ratio"])
    for k, (hd, r) in enumerate(zip(snaps.headings, snaps.ratios)):
        w.writerow([k, repr(float(hd)), repr(float(r.real)), repr(float(r.imag))])
    return buf.getvalue()
