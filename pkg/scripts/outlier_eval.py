"""Unit, AOA-weighted and oracle-weighted final solves on the outlier config."""

import argparse
from pathlib import Path

from csi_rendezvous.config import load_config
from csi_rendezvous.experiments import evaluate_outliers, run_batch, solve_with_weights
from csi_rendezvous.outlier import MIN_WEIGHT

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "outliers.toml"))
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()

    cfg = load_config(args.config)
    runs = run_batch([cfg.replace(seed=cfg.seed + k) for k in range(args.seeds)], workers=args.workers)
    print(f"{'seed':>5} {'edges':>6} {'outl':>5} {'unit':>10} {'aoa':>10} {'oracle':>10} {'aoa %':>7} {'oracle %':>8}")
    for r in runs:
        ev = evaluate_outliers(r)
        recs = r.world.edge_records
        oracle = {rec.index: (MIN_WEIGHT if rec.is_outlier else 1.0) for rec in recs}
        best, _ = solve_with_weights(r, oracle)
        n_out = sum(rec.is_outlier for rec in recs)
        print(
            f"{ev.seed:>5} {len(recs):>6} {n_out:>5} {ev.ate_unweighted:>10.4g} {ev.ate_weighted:>10.4g} {best:>10.4g} "
            f"{100 * ev.reduction:>7.1f} {100 * (1 - best / ev.ate_unweighted):>8.1f}"
        )


if __name__ == "__main__":
    main()
