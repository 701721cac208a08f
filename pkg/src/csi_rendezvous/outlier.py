"""Outlier injection and AOA-consistency reweighting of inter-robot edges."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aoa import AoaNoiseParams, PeakSet, angular_distance, closest_peak, likelihood_weight, relative_angles
from .geometry import Pose, PoseNoiseModel, inverse, random_rotation_of_angle, random_unit_vector
from .pose_graph import INTER_ROBOT, MeasurementEdge

log = logging.getLogger(__name__)

MIN_WEIGHT = 1e-12


@dataclass(frozen=True)
class OutlierPolicy:
    fraction: float = 0.2
    low_mult: float = 2.0
    high_mult: float = 3.0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        if not 2.0 <= self.low_mult < self.high_mult:
            raise ValueError("need 2 <= low_mult < high_mult")


def corrupt_edge(edge: MeasurementEdge, policy: OutlierPolicy, noise: PoseNoiseModel, rng: np.random.Generator) -> MeasurementEdge:
    """Add a translation error of length U(lo, hi)*sigma_t and a rotation of angle U(lo, hi)*sigma_R."""
    t_mag = rng.uniform(policy.low_mult, policy.high_mult) * noise.sigma_trans
    r_mag = rng.uniform(policy.low_mult, policy.high_mult) * noise.sigma_rot
    dt = random_unit_vector(rng) * t_mag
    dR = random_rotation_of_angle(r_mag, rng)
    z = edge.z_bar
    return MeasurementEdge(
        edge.source,
        edge.target,
        Pose(z.rotation @ dR, z.position + dt),
        edge.info_trans,
        edge.info_rot,
        edge.kind,
        edge.weight,
    )


def inject_outliers(
    edges: Sequence[MeasurementEdge],
    policy: OutlierPolicy,
    noise: PoseNoiseModel,
    rng: np.random.Generator,
) -> tuple[list[MeasurementEdge], list[bool]]:
    """Corrupt ``round(fraction * n_inter)`` randomly chosen inter-robot edges."""
    out = list(edges)
    labels = [False] * len(out)
    inter = [k for k, e in enumerate(out) if e.kind == INTER_ROBOT]
    n_bad = int(round(policy.fraction * len(inter)))
    if n_bad == 0:
        return out, labels
    chosen = sorted(rng.choice(len(inter), size=n_bad, replace=False))
    for c in chosen:
        k = inter[c]
        out[k] = corrupt_edge(out[k], policy, noise, rng)
        labels[k] = True
    return out, labels


def implied_direction(edge: MeasurementEdge, receiver: int | None = None) -> tuple[float, float]:
    """(phi, theta) of the partner as implied by the measurement, in the receiver's body frame."""
    if receiver is None or receiver == edge.source.robot:
        rel = edge.z_bar
    elif receiver == edge.target.robot:
        rel = inverse(edge.z_bar)
    else:
        raise ValueError(f"robot {receiver} is not an endpoint of the edge")
    return relative_angles(np.zeros(3), rel.position)


@dataclass(frozen=True)
class ReweightResult:
    edge: MeasurementEdge
    theta_dev: float
    phi_dev: float
    flagged: bool
    weight: float


def reweight_edge(
    edge: MeasurementEdge,
    peaks: PeakSet,
    params: AoaNoiseParams,
    receiver: int | None = None,
) -> ReweightResult:
    """Scale the edge weight by the AOA likelihood when the closest peak is >= delta away.

    The profile cannot tell +phi from -phi, so elevations are compared by magnitude.
    """
    if not peaks.peaks:
        log.warning("no profile peaks to validate edge %s -> %s; weight left unchanged", edge.source, edge.target)
        return ReweightResult(edge, float("nan"), float("nan"), False, edge.weight)
    phi_ij, theta_ij = implied_direction(edge, receiver)
    phi_ij = abs(phi_ij)
    peak = closest_peak(peaks, phi_ij, theta_ij)
    dtheta = angular_distance(theta_ij, peak.theta)
    dphi = abs(phi_ij - peak.phi)
    flagged = dtheta >= params.delta or dphi >= params.delta
    if not flagged:
        return ReweightResult(edge, dtheta, dphi, False, edge.weight)
    w = max(likelihood_weight(params, dphi, dtheta), MIN_WEIGHT)
    new_weight = edge.weight * w
    return ReweightResult(edge.with_weight(max(new_weight, MIN_WEIGHT)), dtheta, dphi, True, new_weight)


def evaluation_csv(rows: Sequence[tuple[int, bool, float, float, float]]) -> str:
    """Rows of (edge_id, is_outlier_truth, theta_dev_rad, phi_dev_rad, weight)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["edge_id", "is_outlier_truth", "theta_dev_deg", "phi_dev_deg", "weight"])
    for edge_id, truth, dth, dph, weight in rows:
        w.writerow([edge_id, int(bool(truth)), f"{np.degrees(dth):.6f}", f"{np.degrees(dph):.6f}", repr(float(weight))])
    return buf.getvalue()
