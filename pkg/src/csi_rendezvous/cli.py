"""Command-line experiment runner."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aoa import compute_profile, extract_peaks, refine_peaks
from .channel import QuarterTurn, propagation_paths, snapshots_to_csv, synthesize_csi
from .config import ConfigError, WorldConfig, apply_overrides, load_config
from .experiments import compare, dumps, evaluate_outliers, outlier_csv, outlier_summary, run_batch
from .rng import substream
from .sim import run_experiment

OUT_ENV = "CSI_RENDEZVOUS_OUT"

log = logging.getLogger("csi_rendezvous")


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8")


def _resolve_config(args) -> WorldConfig:
    cfg = load_config(args.config) if args.config else WorldConfig()
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "strategy", None):
        overrides.append(f'strategy="{args.strategy}"')
    return apply_overrides(cfg, overrides) if overrides else cfg


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    res = run_experiment(cfg)
    _write(out, "ticks.csv", res.ticks_csv())
    _write(out, "events.jsonl", res.events_jsonl())
    _write(out, "summary.json", res.summary_json())
    _write(out, "timing.json", dumps({"wall_time_s": res.wall_time}))
    s = res.summary
    print(
        f"strategy={s['strategy']} seed={s['seed']} ate_trans={s['ate_trans_m2']:.6g} "
        f"err_final={s['err_final_mean']:.6g} rendezvous={s['rendezvous']}"
    )
    return 0


def _seeds(cfg: WorldConfig, repeats: int) -> list[int]:
    return [cfg.seed + k for k in range(repeats)]


def cmd_compare(args) -> int:
    if args.repeats < 2:
        raise ConfigError("compare needs --repeats >= 2")
    cfg = _resolve_config(args)
    out = _out_dir(args)
    comp = compare(cfg, _seeds(cfg, args.repeats), workers=args.workers)
    summary = comp.summary()
    _write(out, "compare_ticks.csv", comp.aggregate_csv())
    _write(out, "compare_summary.json", dumps(summary))
    print(
        f"seeds={len(comp.seeds)} err_active={summary['active_final_err_mean']:.6g} "
        f"err_random={summary['random_final_err_mean']:.6g} ratio={summary['err_ratio_random_over_active']:.4g} "
        f"ate_reduction_pct={summary['ate_reduction_pct_mean']:.4g}"
    )
    return 0


def cmd_outlier_eval(args) -> int:
    cfg = _resolve_config(args)
    if cfg.outliers.fraction <= 0:
        raise ConfigError("outlier-eval needs outliers.fraction > 0")
    cfg = cfg.replace(strategy="active")
    out = _out_dir(args)
    runs = run_batch([cfg.replace(seed=s) for s in _seeds(cfg, args.repeats)], workers=args.workers)
    evals = [evaluate_outliers(r) for r in runs]
    summary = outlier_summary(evals, cfg)
    _write(out, "outlier_edges.csv", outlier_csv(evals))
    _write(out, "outlier_summary.json", dumps(summary))
    print(
        f"seeds={len(evals)} reduction_pct={summary['reduction_pct_mean']:.4g} "
        f"worst_increase_pct={summary['worst_increase_pct']:.4g}"
    )
    return 0


def _floats(text: str, n: int, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"{what} must be {n} comma-separated numbers") from None
    if len(vals) != n:
        raise ConfigError(f"{what} must be {n} comma-separated numbers")
    return vals


def cmd_dump_profile(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    rx_x, rx_y, rx_yaw = _floats(args.rx, 3, "--rx")
    tx_x, tx_y = _floats(args.tx, 2, "--tx")
    obstacles = cfg.obstacle_set()
    rx = np.array([rx_x, rx_y, 0.0])
    tx = np.array([tx_x, tx_y, 0.0])
    paths = propagation_paths(cfg.radio, tx, rx, obstacles)
    if not cfg.sensing.multipath:
        paths = paths[:1]
    if not paths:
        raise ConfigError("transmitter and receiver coincide")
    arc = QuarterTurn(tuple(rx), np.radians(rx_yaw), count=cfg.sensing.snapshots, heading_jitter=cfg.sensing.heading_jitter)
    # --noiseless drops heading jitter as well as snapshot noise
    rng = None if args.noiseless else substream(cfg.seed, "channel")
    snaps = synthesize_csi(cfg.radio, paths, arc, rng)
    profile = compute_profile(snaps)
    peaks = extract_peaks(profile, cfg.sensing.n_peaks)
    if cfg.sensing.refine_peaks:
        peaks = refine_peaks(peaks, snaps)
    _write(out, "snapshots.csv", snapshots_to_csv(snaps))
    _write(out, "profile.csv", profile.to_csv())
    _write(out, "peaks.json", peaks.to_json() + "\n")
    top = peaks.top
    print(f"paths={len(paths)} top_theta_deg={np.degrees(top.theta):.4g} top_phi_deg={np.degrees(top.phi):.4g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field, repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="csi-rendezvous", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="one simulation run")
    r.add_argument("--strategy", choices=["active", "random"])
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", parents=[common], help="active vs random over consecutive seeds")
    c.add_argument("--repeats", type=int, default=5)
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_compare)

    o = sub.add_parser("outlier-eval", parents=[common], help="weighted vs unweighted final solves")
    o.add_argument("--repeats", type=int, default=5)
    o.add_argument("--workers", type=int, default=1)
    o.set_defaults(func=cmd_outlier_eval)

    d = sub.add_parser("dump-profile", parents=[common], help="signal profile for one transmitter/receiver placement")
    d.add_argument("--rx", required=True, help="receiver x,y,yaw_deg")
    d.add_argument("--tx", required=True, help="transmitter x,y")
    d.add_argument("--noiseless", action="store_true")
    d.set_defaults(func=cmd_dump_profile)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "repeats", 1) < 1:
            raise ConfigError("--repeats must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
