"""Angle-of-arrival signal profiles from two-antenna channel ratios.

The profile over (polar, azimuth) is the reciprocal of the steering vector's
energy outside the span of the measured ratio vector h::

    F(phi, theta) = 1 / ( |a|^2 - |h^H a|^2 / |h|^2 )

with ``a_k = exp(i * (2 pi r / lambda) cos(phi - B) sin(theta - Gamma - psi_k))``
and ``psi_k`` the receiver's recorded heading offset at snapshot ``k``.
Azimuths are relative to the receiver body heading at the start of the turn.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .channel import SnapshotArray


@dataclass(frozen=True)
class ProfileGrid:
    theta_step: float = np.radians(1.0)
    phi_min: float = 0.0
    phi_max: float = np.radians(40.0)
    phi_step: float = np.radians(2.0)

    def thetas(self) -> np.ndarray:
        n = int(round(2 * np.pi / self.theta_step))
        # (-pi, pi]
        return -np.pi + self.theta_step * np.arange(1, n + 1)

    def phis(self) -> np.ndarray:
        n = int(round((self.phi_max - self.phi_min) / self.phi_step)) + 1
        return self.phi_min + self.phi_step * np.arange(n)


@dataclass(frozen=True)
class SourceMeta:
    wavelength: float
    separation: float
    tx_polar: float = 0.0  # B
    tx_azimuth: float = 0.0  # Gamma


@dataclass
class SignalProfile:
    theta_grid: np.ndarray
    phi_grid: np.ndarray
    values: np.ndarray  # shape (len(phi_grid), len(theta_grid))
    source_meta: SourceMeta

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return float(self.phi_grid[i]), float(self.theta_grid[j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta_deg", "phi_deg", "value"])
        for i, phi in enumerate(self.phi_grid):
            for j, th in enumerate(self.theta_grid):
                w.writerow([f"{np.degrees(th):.6g}", f"{np.degrees(phi):.6g}", repr(float(self.values[i, j]))])
        return buf.getvalue()


@dataclass(frozen=True)
class Peak:
    phi: float
    theta: float
    value: float


@dataclass
class PeakSet:
    peaks: list[Peak] = field(default_factory=list)
    n_kept: int = 4

    def __len__(self) -> int:
        return len(self.peaks)

    def __bool__(self) -> bool:
        return bool(self.peaks)

    @property
    def top(self) -> Peak:
        if not self.peaks:
            raise ValueError("empty peak set")
        return self.peaks[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_kept": self.n_kept,
                "peaks": [
                    {"phi_deg": float(np.degrees(p.phi)), "theta_deg": float(np.degrees(p.theta)), "value": float(p.value)}
                    for p in self.peaks
                ],
            }
        )


@dataclass(frozen=True)
class AoaNoiseParams:
    sigma_theta: float = np.radians(8.5)
    sigma_phi: float = np.radians(8.5)
    delta: float = np.radians(8.5)
    likelihood_unit: str = "deg"  # angle unit in which the capped Gaussian is evaluated

    def __post_init__(self):
        if not (self.sigma_theta > 0 and self.sigma_phi > 0 and self.delta > 0):
            raise ValueError("AOA noise parameters must be positive")
        if self.likelihood_unit not in ("deg", "rad"):
            raise ValueError("likelihood_unit must be 'deg' or 'rad'")


def wrap_angle(a):
    """Map to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def steering_phase(phi, theta, meta: SourceMeta, heading=0.0):
    """(2 pi r / lambda) cos(phi - B) sin(theta - Gamma - heading)."""
    k = 2.0 * np.pi * meta.separation / meta.wavelength
    return k * np.cos(np.asarray(phi) - meta.tx_polar) * np.sin(np.asarray(theta) - meta.tx_azimuth - heading)


@lru_cache(maxsize=32)
def _steering_matrix(grid: ProfileGrid, meta: SourceMeta, headings: tuple[float, ...]) -> np.ndarray:
    phis = grid.phis()
    thetas = grid.thetas()
    h = np.asarray(headings)
    Phi = steering_phase(phis[:, None, None], thetas[None, :, None], meta, h[None, None, :])
    A = np.exp(1j * Phi).reshape(len(phis) * len(thetas), len(h))
    A.setflags(write=False)
    return A


def compute_profile(snapshots: SnapshotArray, grid: ProfileGrid | None = None) -> SignalProfile:
    grid = grid or ProfileGrid()
    h = np.asarray(snapshots.ratios, dtype=complex)
    norm2 = float(np.vdot(h, h).real)
    if norm2 == 0.0:
        raise ValueError("all-zero channel ratio vector")
    B, G = snapshots.tx_orientation
    meta = SourceMeta(snapshots.wavelength, snapshots.antenna_separation, float(B), float(G))
    A = _steering_matrix(grid, meta, tuple(float(x) for x in snapshots.headings))
    K = A.shape[1]
    proj = np.abs(A @ np.conj(h)) ** 2 / norm2
    denom = np.maximum(K - proj, 1e-12 * K)
    phis, thetas = grid.phis(), grid.thetas()
    values = (1.0 / denom).reshape(len(phis), len(thetas))
    return SignalProfile(thetas, phis, values, meta)


def extract_peaks(profile: SignalProfile, n: int = 4) -> PeakSet:
    """Strict 8-neighbour local maxima (azimuth wraps, polar clamps), top ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    V = profile.values
    padded = np.pad(V, ((1, 1), (0, 0)), constant_values=-np.inf)
    is_peak = np.ones(V.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = np.roll(padded, shift=(-di, -dj), axis=(0, 1))[1:-1]
            is_peak &= V > shifted
    rows, cols = np.nonzero(is_peak)
    order = sorted(zip(rows, cols), key=lambda rc: (-V[rc], rc))
    peaks = [Peak(float(profile.phi_grid[i]), float(profile.theta_grid[j]), float(V[i, j])) for i, j in order[:n]]
    return PeakSet(peaks, n)


def refine_peaks(peaks: PeakSet, snapshots: SnapshotArray, grid: ProfileGrid | None = None) -> PeakSet:
    """Move each grid peak to the continuous maximum of the profile nearby.

    Azimuth may shift by up to one grid step; polar angle is free over the grid's
    range.  The profile is flat in polar angle near zero (it enters only through a
    cosine), so a half-step azimuth offset can otherwise show up as several
    degrees of spurious elevation.
    """
    grid = grid or ProfileGrid()
    h = np.asarray(snapshots.ratios, dtype=complex)
    norm2 = float(np.vdot(h, h).real)
    B, G = snapshots.tx_orientation
    meta = SourceMeta(snapshots.wavelength, snapshots.antenna_separation, float(B), float(G))
    headings = np.asarray(snapshots.headings, dtype=float)
    K = len(h)

    def denom(x):
        a = np.exp(1j * steering_phase(x[0], x[1], meta, headings))
        return K - abs(np.vdot(a, h)) ** 2 / norm2

    out = []
    for p in peaks.peaks:
        bounds = [(grid.phi_min, grid.phi_max), (p.theta - grid.theta_step, p.theta + grid.theta_step)]
        res = minimize(denom, np.array([p.phi, p.theta]), method="L-BFGS-B", bounds=bounds)
        phi, theta = (float(v) for v in res.x) if res.fun <= denom([p.phi, p.theta]) else (p.phi, p.theta)
        out.append(Peak(phi, float(wrap_angle(theta)), 1.0 / max(float(denom([phi, theta])), 1e-12 * K)))
    out.sort(key=lambda q: -q.value)
    return PeakSet(out, peaks.n_kept)


def relative_angles(p_i, p_j) -> tuple[float, float]:
    """(phi, theta) of ``p_j`` seen from ``p_i``: elevation and azimuth."""
    d = np.asarray(p_j, dtype=float) - np.asarray(p_i, dtype=float)
    if not np.any(d):
        raise ValueError("coincident points have no relative direction")
    theta = float(np.arctan2(d[1], d[0]))
    phi = float(np.arctan2(d[2], np.hypot(d[0], d[1])))
    return phi, theta


def angular_distance(a: float, b: float) -> float:
    return abs(wrap_angle(a - b))


def closest_peak(peaks: PeakSet, phi_ij: float, theta_ij: float) -> Peak:
    """Peak minimising |dtheta| (wrapped) + |dphi|; ties go to the larger peak."""
    if not peaks.peaks:
        raise ValueError("empty peak set")
    return min(
        peaks.peaks,
        key=lambda p: (angular_distance(p.theta, theta_ij) + abs(p.phi - phi_ij), -p.value),
    )


def capped_gaussian(x: float, sigma: float) -> float:
    """min(1, sqrt(2 pi) * N(x; 0, sigma^2))."""
    return min(1.0, float(np.exp(-0.5 * (x / sigma) ** 2) / sigma))


def likelihood_weight(params: AoaNoiseParams, dphi: float, dtheta: float) -> float:
    """Product of capped Gaussians; inputs in radians, evaluated in ``params.likelihood_unit``."""
    s = np.degrees(1.0) if params.likelihood_unit == "deg" else 1.0
    return capped_gaussian(dphi * s, params.sigma_phi * s) * capped_gaussian(dtheta * s, params.sigma_theta * s)
