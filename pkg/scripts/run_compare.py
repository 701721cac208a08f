"""Active vs random rendezvous over consecutive seeds, with a coarse Err trace."""

import argparse
from pathlib import Path

import numpy as np

from csi_rendezvous.config import load_config
from csi_rendezvous.experiments import compare

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk.toml"))
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--every", type=int, default=25, help="print every n-th tick")
    args = ap.parse_args()

    cfg = load_config(args.config)
    comp = compare(cfg, [cfg.seed + k for k in range(args.seeds)], workers=args.workers)
    sa = np.array([r.err_series() for r in comp.active]).mean(axis=0)
    sr = np.array([r.err_series() for r in comp.random]).mean(axis=0)
    print(f"{'tick':>6} {'active':>10} {'random':>10}")
    for t in range(0, len(sa), args.every):
        print(f"{t + 1:>6} {sa[t]:>10.3f} {sr[t]:>10.3f}")
    s = comp.summary()
    print(f"final Err active={s['active_final_err_mean']:.3f} random={s['random_final_err_mean']:.3f} ratio={s['err_ratio_random_over_active']:.2f}")
    print(f"ATE_trans active={s['active_ate_trans_mean']:.4g} random={s['random_ate_trans_mean']:.4g} reduction={s['ate_reduction_pct_mean']:.1f}%")


if __name__ == "__main__":
    main()
