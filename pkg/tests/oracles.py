"""Brute-force and closed-form references used only by the tests.

Nothing here imports the production solver, channel or AOA code; only the
``Pose`` container is shared.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_GRID_POINTS = 10**6


# -- tiny planar pose graphs -------------------------------------------------


@dataclass(frozen=True)
class TinyPlanarProblem:
    """At most three SE(2) poses; pose 0 is held at ``anchor``.

    ``edges`` holds (i, j, dx, dy, dyaw) measurements of pose j in the frame of pose i.
    The search grid for each free pose is ``center +- half_width`` with ``n`` points per axis.
    """

    anchor: tuple[float, float, float]
    edges: tuple[tuple[int, int, float, float, float], ...]
    centers: tuple[tuple[float, float, float], ...]
    half_width: tuple[float, float, float] = (0.5, 0.5, 0.3)
    n: int = 10
    info_trans: float = 1.0
    info_rot: float = 1.0

    def __post_init__(self):
        if len(self.centers) > 2 or len(self.edges) > 3:
            raise ValueError("tiny problems have at most 3 poses and 3 edges")
        if self.n ** (3 * len(self.centers)) > MAX_GRID_POINTS:
            raise ValueError("grid too large")

    @property
    def cell(self) -> np.ndarray:
        return 2.0 * np.asarray(self.half_width) / (self.n - 1)

    def axes(self, k: int) -> list[np.ndarray]:
        c = self.centers[k]
        return [np.linspace(c[a] - self.half_width[a], c[a] + self.half_width[a], self.n) for a in range(3)]


def planar_edge_cost(xi, yi, ti, xj, yj, tj, dx, dy, dt, info_trans=1.0, info_rot=1.0):
    """Summed-squares cost of one planar edge, written out component by component."""
    c, s = np.cos(ti), np.sin(ti)
    rx = xj - xi - (c * dx - s * dy)
    ry = yj - yi - (s * dx + c * dy)
    # |Rz(a) - Rz(b)|_F^2 = 4 - 4 cos(a - b)
    rot = 4.0 - 4.0 * np.cos(tj - ti - dt)
    return info_trans * (rx * rx + ry * ry) + info_rot * rot


def brute_force_pgo(problem: TinyPlanarProblem) -> tuple[list[tuple[float, float, float]], float]:
    """Global grid minimum of the summed edge cost."""
    n_free = len(problem.centers)
    grids = []
    for k in range(n_free):
        ax = problem.axes(k)
        shape = [1] * (3 * n_free)
        mesh = []
        for a in range(3):
            s = list(shape)
            s[3 * k + a] = problem.n
            mesh.append(ax[a].reshape(s))
        grids.append(mesh)

    def pose(idx):
        if idx == 0:
            return tuple(np.float64(v) for v in problem.anchor)
        return tuple(grids[idx - 1])

    total = 0.0
    for i, j, dx, dy, dt in problem.edges:
        total = total + planar_edge_cost(*pose(i), *pose(j), dx, dy, dt, problem.info_trans, problem.info_rot)
    total = np.broadcast_to(total, [problem.n] * (3 * n_free))
    flat = int(np.argmin(total))
    idx = np.unravel_index(flat, total.shape)
    best = []
    for k in range(n_free):
        ax = problem.axes(k)
        best.append(tuple(float(ax[a][idx[3 * k + a]]) for a in range(3)))
    return best, float(total[idx])


def tiny_problem_cost(problem: TinyPlanarProblem, free_poses) -> float:
    poses = [problem.anchor] + [tuple(p) for p in free_poses]
    return float(
        sum(
            planar_edge_cost(*poses[i], *poses[j], dx, dy, dt, problem.info_trans, problem.info_rot)
            for i, j, dx, dy, dt in problem.edges
        )
    )


# -- channel -------------------------------------------------------------------


def analytic_single_path_ratio(tx, center, start_heading, offsets, wavelength, separation) -> np.ndarray:
    """h1/h2 for one line-of-sight path: exp(-i k (d1 - d2)) per snapshot."""
    tx = np.asarray(tx, dtype=float)
    cx, cy, cz = (float(v) for v in center)
    out = []
    for off in offsets:
        psi = start_heading + off
        half = 0.5 * separation
        a1 = np.array([cx - half * math.sin(psi), cy + half * math.cos(psi), cz])
        a2 = np.array([cx + half * math.sin(psi), cy - half * math.cos(psi), cz])
        d1 = math.dist(tx, a1)
        d2 = math.dist(tx, a2)
        out.append(np.exp(-1j * 2.0 * math.pi / wavelength * (d1 - d2)))
    return np.array(out)


def mirror_reflection(tx, rx, axis: str, coord: float) -> tuple[float, float, tuple[float, float]]:
    """Image-method path off the infinite wall ``axis = coord``: (length, azimuth at rx, hit point)."""
    tx = np.asarray(tx, dtype=float)[:2]
    rx = np.asarray(rx, dtype=float)[:2]
    img = tx.copy()
    k = 0 if axis == "x" else 1
    img[k] = 2 * coord - tx[k]
    length = float(np.hypot(*(img - rx)))
    az = math.atan2(img[1] - rx[1], img[0] - rx[0])
    t = (coord - rx[k]) / (img[k] - rx[k])
    hit = rx + t * (img - rx)
    return length, az, (float(hit[0]), float(hit[1]))


# -- AOA weighting ---------------------------------------------------------------


def normalized_gaussian(x: float, sigma: float) -> float:
    """min(1, sqrt(2 pi) * pdf)."""
    pdf = math.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    return min(1.0, math.sqrt(2.0 * math.pi) * pdf)


def eq5_weight(dphi: float, dtheta: float, sigma_phi: float, sigma_theta: float) -> float:
    return normalized_gaussian(dphi, sigma_phi) * normalized_gaussian(dtheta, sigma_theta)


def eq7_weight(dphi: float, dtheta: float, sigma_phi: float, sigma_theta: float, delta: float) -> float:
    if abs(dtheta) >= delta or abs(dphi) >= delta:
        return eq5_weight(dphi, dtheta, sigma_phi, sigma_theta)
    return 1.0


def lattice(values_a, values_b):
    return list(itertools.product(values_a, values_b))
