"""Absolute trajectory error against ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geometry import Pose


@dataclass
class TrajectoryPair:
    estimated: Mapping[int, Sequence[Pose]]
    reference: Mapping[int, Sequence[Pose]]

    def __post_init__(self):
        if set(self.estimated) != set(self.reference):
            raise ValueError("estimated and reference cover different robots")
        for r in self.estimated:
            if len(self.estimated[r]) != len(self.reference[r]):
                raise ValueError(f"robot {r}: {len(self.estimated[r])} estimated poses vs {len(self.reference[r])} reference")
        if sum(len(v) for v in self.estimated.values()) == 0:
            raise ValueError("empty trajectories")

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        robots = sorted(self.estimated)
        est = [p for r in robots for p in self.estimated[r]]
        ref = [p for r in robots for p in self.reference[r]]
        return (
            np.array([p.position for p in est]),
            np.array([p.position for p in ref]),
            np.array([p.rotation for p in est]),
            np.array([p.rotation for p in ref]),
        )


def rigid_alignment(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares (R, t) with dst ~ R src + t (Kabsch, no scale)."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    H = (src - mu_s).T @ (dst - mu_d)
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    return R, mu_d - R @ mu_s


def ate_trans(pair: TrajectoryPair, align: bool = False) -> float:
    est, ref, _, _ = pair.stacked()
    if align:
        R, t = rigid_alignment(est, ref)
        est = est @ R.T + t
    return float(np.mean(np.sum((est - ref) ** 2, axis=1)))


def ate_rot(pair: TrajectoryPair, align: bool = False) -> float:
    est_p, ref_p, est_R, ref_R = pair.stacked()
    if align:
        R, _ = rigid_alignment(est_p, ref_p)
        est_R = np.einsum("ij,njk->nik", R, est_R)
    # |R_est^T R_ref - I|_F = |R_ref - R_est|_F for rotations; the second form is exactly 0 on equal inputs
    D = ref_R - est_R
    return float(np.mean(np.sum(D**2, axis=(1, 2))))
