"""Error monitoring, partner selection and AOA-guided active rendezvous.

The agent-side logic here only sees its own state and the messages it is
handed.  Everything that touches the world (radio, motion, sensing) goes
through a :class:`RendezvousServices` object supplied by the simulator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .aoa import PeakSet
from .channel import rate_from_esnr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RendezvousParams:
    delta: float = 10.0
    kappa: int = 9
    epsilon: float = 0.1
    sigma_profile: float = 0.5
    max_steps: int = 40
    iterations_per_tick: int = 3

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if not 0.0 < self.sigma_profile < 1.0:
            raise ValueError("sigma_profile must lie in (0, 1)")
        if self.max_steps < 1 or self.iterations_per_tick < 1:
            raise ValueError("max_steps and iterations_per_tick must be >= 1")


@dataclass(frozen=True)
class ServiceLink:
    requester: int
    server: int
    q: float
    alpha: float
    rho: float

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("q must be > 0")
        if self.alpha < 0 or self.rho < 0:
            raise ValueError("alpha and rho must be >= 0")


def service_discrepancy(link: ServiceLink) -> float:
    # alpha * (q - rho) / q written so that the result never exceeds alpha in floating point
    return link.alpha * max(1.0 - link.rho / link.q, 0.0)


# -- messages ---------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    sender: int
    receiver: int
    err: float


@dataclass(frozen=True)
class Accept:
    sender: int
    receiver: int
    rho: float
    err: float


@dataclass(frozen=True)
class Reject:
    sender: int
    receiver: int


Message = Request | Accept | Reject


def error_monitor_tick(robot: int, err: float, delta: float, neighbors: Sequence[int]) -> list[Request] | None:
    """None means keep exploring; an empty list means a retry is due next tick."""
    if not err > delta:
        return None
    return [Request(robot, j, err) for j in sorted(neighbors) if j != robot]


def neighbor_accept_policy(
    requests: Sequence[Request],
    self_id: int,
    self_err: float,
    esnr_db: Mapping[int, float],
    rate_scale: float = 1.0,
) -> list[Accept | Reject]:
    """Accept the requester heard with the highest ESNR; equal ESNR favours the larger error."""
    if not requests:
        raise ValueError("no requests to answer")
    best = min(requests, key=lambda r: (-esnr_db[r.sender], -r.err, r.sender))
    replies: list[Accept | Reject] = []
    for r in sorted(requests, key=lambda r: r.sender):
        if r is best:
            rho = rate_from_esnr(esnr_db[r.sender], rate_scale)
            replies.append(Accept(self_id, r.sender, rho, self_err))
        else:
            replies.append(Reject(self_id, r.sender))
    return replies


def select_partner(accepts: Sequence[Accept], q: float, alpha: float) -> int | None:
    if not accepts:
        return None

    def key(a: Accept):
        w = service_discrepancy(ServiceLink(a.receiver, a.sender, q, alpha, a.rho))
        return (w, a.err, a.sender)

    return min(accepts, key=key).sender


# -- guidance ---------------------------------------------------------------


@dataclass(frozen=True)
class AoaGuidance:
    v_max: np.ndarray
    M: np.ndarray
    virtual_target: np.ndarray


def build_guidance(peaks: PeakSet, p_j, w: float, sigma: float, heading: float = 0.0) -> AoaGuidance:
    """Top-peak azimuth (body frame) is rotated by ``heading`` into the world plane."""
    if not peaks:
        raise ValueError("cannot build guidance from an empty peak set")
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    ang = heading + peaks.top.theta
    v = np.array([np.cos(ang), np.sin(ang)])
    Q = np.column_stack([v, [-v[1], v[0]]])
    M = Q @ np.diag([1.0 / sigma**2, 1.0]) @ Q.T
    M = 0.5 * (M + M.T)
    p = np.asarray(p_j, dtype=float)[:2]
    return AoaGuidance(v, M, p + w * v)


def edge_cost(g: AoaGuidance, p) -> float:
    d = g.virtual_target - np.asarray(p, dtype=float)[:2]
    return float(d @ g.M @ d)


def gradient_step(g: AoaGuidance, p_j, w: float) -> np.ndarray:
    p = np.asarray(p_j, dtype=float)[:2]
    grad = g.M @ (g.virtual_target - p)
    return p + w * grad


# -- rendezvous loop --------------------------------------------------------


class RendezvousServices(Protocol):
    def link_rate(self, requester: int, server: int) -> float: ...

    def capture_peaks(self, mover: int, stationary: int) -> PeakSet: ...

    def mover_estimate(self, mover: int) -> tuple[np.ndarray, float]: ...

    def observe(self, mover: int, stationary: int, peaks: PeakSet) -> bool: ...

    def move(self, mover: int, waypoint: np.ndarray) -> float: ...


@dataclass
class RendezvousSession:
    """Robot ``stationary`` (the requester) waits while ``mover`` walks toward it."""

    stationary: int
    mover: int
    q: float
    alpha: float
    params: RendezvousParams
    start_tick: int = 0
    pre_err: float = float("nan")
    steps: int = 0
    new_edges: int = 0
    w_history: list[float] = field(default_factory=list)
    rho_history: list[float] = field(default_factory=list)
    q_history: list[float] = field(default_factory=list)
    incomplete: bool = False

    @property
    def done(self) -> bool:
        return self.new_edges >= self.params.kappa or self.steps >= self.params.max_steps

    def link(self, rho: float) -> ServiceLink:
        return ServiceLink(self.stationary, self.mover, self.q, self.alpha, rho)

    def iterate(self, services: RendezvousServices) -> float:
        """One pass of the loop body; returns the distance the mover travelled."""
        if self.done:
            return 0.0
        rho = services.link_rate(self.stationary, self.mover)
        w = service_discrepancy(self.link(rho))
        self.w_history.append(w)
        self.rho_history.append(rho)

        peaks = services.capture_peaks(self.mover, self.stationary)
        if services.observe(self.mover, self.stationary, peaks):
            self.new_edges += 1

        travelled = 0.0
        p_est, yaw_est = services.mover_estimate(self.mover)
        if peaks:
            g = build_guidance(peaks, p_est, w, self.params.sigma_profile, yaw_est)
            target = gradient_step(g, p_est, w)
        else:
            target = np.asarray(p_est, dtype=float)[:2]
        travelled = services.move(self.mover, target)

        rho = services.link_rate(self.stationary, self.mover)
        if self.q <= rho:
            self.q = rho + self.params.epsilon
        self.q_history.append(self.q)
        self.steps += 1
        if self.steps >= self.params.max_steps and self.new_edges < self.params.kappa:
            self.incomplete = True
            log.info("rendezvous %d<-%d hit max_steps with %d edges", self.stationary, self.mover, self.new_edges)
        return travelled


def active_rendezvous(session: RendezvousSession, services: RendezvousServices) -> RendezvousSession:
    """Run the loop to completion (edges gathered or step budget spent)."""
    while not session.done:
        session.iterate(services)
    return session
