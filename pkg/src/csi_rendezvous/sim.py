"""Deterministic multi-robot simulator and the active/random strategy loop.

Each robot keeps two things apart: the relative-motion *measurements* it
adds to the pose graph (noise model ``config.noise``) and the dead-reckoned
estimate it propagates between optimizations (noise ``config.drift``).  The
gap between them is what the trajectory error picks up.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .aoa import PeakSet, ProfileGrid, compute_profile, extract_peaks, refine_peaks
from .channel import QuarterTurn, esnr, propagation_paths, rate_from_esnr, synthesize_csi
from .config import WorldConfig, to_flat_dict
from .geometry import (
    Pose,
    compose,
    perturb,
    relative_pose,
    rot_z,
    sample_planar_pose_noise,
    sample_pose_noise,
)
from .metrics import TrajectoryPair, ate_rot, ate_trans
from .outlier import corrupt_edge, reweight_edge
from .pose_graph import INTER_ROBOT, ODOMETRY, MeasurementEdge, NodeId, PoseGraph, optimize, trajectory_error
from .rendezvous import (
    Accept,
    Reject,
    Request,
    RendezvousSession,
    error_monitor_tick,
    neighbor_accept_policy,
    select_partner,
)
from . import __version__ as VERSION
from .rng import RandomStreams

log = logging.getLogger(__name__)

EXPLORING = "exploring"
MOVER = "rendezvous_mover"
ANCHOR = "rendezvous_anchor"

EXPLORE_ATTEMPTS = 20
TICK_COLUMNS = ("tick", "robot", "err", "mode", "x", "y", "est_x", "est_y")


@dataclass
class RobotAgent:
    id: int
    true_pose: Pose
    q: float
    alpha: float
    mode: str = EXPLORING
    history: list[NodeId] = field(default_factory=list)
    local_edges: list[int] = field(default_factory=list)  # edge indices since the last joint optimization

    @property
    def node(self) -> NodeId:
        return self.history[-1]

    def next_node(self) -> NodeId:
        return NodeId(self.id, self.node.step + 1)


@dataclass
class EdgeRecord:
    """Bookkeeping for one inter-robot edge gathered during a rendezvous."""

    index: int
    receiver: int
    peaks: PeakSet | None
    is_outlier: bool


def explore_policy(agent: RobotAgent, world: "World", rng: np.random.Generator) -> tuple[np.ndarray, float] | None:
    """Uniform heading, one step; None if every attempt hits an obstacle or the border."""
    p = agent.true_pose.position
    L = world.config.step_length
    for _ in range(EXPLORE_ATTEMPTS):
        heading = rng.uniform(-np.pi, np.pi)
        cand = p + L * np.array([np.cos(heading), np.sin(heading), 0.0])
        if world.obstacles.free(cand) and world.obstacles.segment_free(p, cand):
            return cand, heading
    return None


class World:
    def __init__(self, config: WorldConfig):
        self.config = config
        self.obstacles = config.obstacle_set()
        self.streams = RandomStreams(config.seed)
        self.grid = ProfileGrid()
        self.graph = PoseGraph(anchor=NodeId(0, 0))
        self.truth: dict[NodeId, Pose] = {}
        self.agents: list[RobotAgent] = []
        self.tick = 0
        self.events: list[dict] = []
        self.rows: list[tuple] = []
        self.edge_records: list[EdgeRecord] = []
        self.sessions: list[RendezvousSession] = []
        self.joint_optimizations = 0
        # rendezvous edges travel with the mover until the pair exchanges data
        self.pending: dict[int, list[tuple[MeasurementEdge, PeakSet | None, bool]]] = {}
        self._spawn()

    # -- setup --------------------------------------------------------------

    def _spawn(self) -> None:
        rng = self.streams["start"]
        for i in range(self.config.n_robots):
            p = self.obstacles.sample_free_point(rng, margin=0.5)
            pose = Pose(rot_z(rng.uniform(-np.pi, np.pi)), p)
            agent = RobotAgent(i, pose, self.config.q_default, self.config.alpha_default)
            node = NodeId(i, 0)
            self.graph.add_node(node, pose)
            self.truth[node] = pose
            agent.history.append(node)
            if self.config.anchor_mode == "all" or i == 0:
                self.graph.fix(node)
            self.agents.append(agent)

    # -- queries ------------------------------------------------------------

    def estimate(self, robot: int) -> Pose:
        return self.graph.nodes[self.agents[robot].node]

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.agents[i].true_pose.position - self.agents[j].true_pose.position))

    def neighbors(self, i: int) -> set[int]:
        """Robots close enough to sense robot i's radio."""
        rng = self.config.radio.sensing_range
        return {a.id for a in self.agents if a.id != i and self.distance(i, a.id) <= rng}

    def err(self, robot: int) -> float:
        agent = self.agents[robot]
        return trajectory_error(self.graph, edges=[self.graph.edges[k] for k in agent.local_edges])

    def link_esnr(self, i: int, j: int) -> float:
        a, b = self.agents[i].true_pose.position, self.agents[j].true_pose.position
        walls = self.obstacles.crossings(a, b)
        return esnr(self.config.radio, a, b, walls, self.streams["shadowing"])

    # -- graph updates ------------------------------------------------------

    def _add_edge(self, edge: MeasurementEdge) -> int:
        k = self.graph.add_edge(edge)
        for r in {edge.source.robot, edge.target.robot}:
            self.agents[r].local_edges.append(k)
        return k

    def _advance(self, agent: RobotAgent, new_true: Pose) -> None:
        """New node: odometry measurement into the graph, dead reckoning for the estimate."""
        cfg = self.config
        rel = relative_pose(agent.true_pose, new_true)
        z = perturb(rel, sample_pose_noise(cfg.noise, self.streams.per_robot("measurement", agent.id)))
        moved = float(np.linalg.norm(rel.position))
        scale = max(moved / cfg.step_length, 0.1)
        d = sample_planar_pose_noise(cfg.drift, self.streams.per_robot("drift", agent.id))
        d = Pose(rot_z(d.yaw * scale), d.position * scale)
        est = compose(self.estimate(agent.id), compose(rel, d))
        node = agent.next_node()
        self.graph.add_node(node, est)
        self.truth[node] = new_true
        agent.history.append(node)
        agent.true_pose = new_true
        self._add_edge(MeasurementEdge(agent.history[-2], node, z, cfg.info_trans, cfg.info_rot, ODOMETRY))

    def explore(self, agent: RobotAgent) -> None:
        step = explore_policy(agent, self, self.streams.per_robot("exploration", agent.id))
        if step is None:
            new_true = agent.true_pose
        else:
            p, heading = step
            new_true = Pose(rot_z(heading), p)
        self._advance(agent, new_true)

    def inter_robot_edge(self, observer: int, target: int) -> MeasurementEdge:
        cfg = self.config
        a, b = self.agents[observer], self.agents[target]
        rel = relative_pose(a.true_pose, b.true_pose)
        z = perturb(rel, sample_pose_noise(cfg.noise, self.streams["inter"]))
        return MeasurementEdge(a.node, b.node, z, cfg.info_trans, cfg.info_rot, INTER_ROBOT)

    def generate_observations(self, skip: set[frozenset[int]] = frozenset()) -> list[tuple[int, int]]:
        """Inter-robot edges for every unordered pair within sensor range."""
        met = []
        n = len(self.agents)
        for i in range(n):
            for j in range(i + 1, n):
                if frozenset((i, j)) in skip:
                    continue
                if self.distance(i, j) <= self.config.sensor_range:
                    self._add_edge(self.inter_robot_edge(i, j))
                    met.append((i, j))
        return met

    def joint_optimize(self, robots: tuple[int, ...], hold_robot: int) -> tuple[dict[int, float], dict[int, float]]:
        """Optimize the merged subgraph of ``robots``; other robots are untouched."""
        sub = self.graph.subgraph_for_robots(robots)
        if not sub.held:
            sub.fix(self.agents[hold_robot].history[0])
        pre = {r: self.err(r) for r in robots}
        solved, _ = optimize(sub)
        for node, pose in solved.nodes.items():
            self.graph.nodes[node] = pose
        post = {r: self.err(r) for r in robots}
        for r in robots:
            self.agents[r].local_edges = []
        self.joint_optimizations += 1
        return pre, post

    # -- rendezvous services ------------------------------------------------

    def link_rate(self, requester: int, server: int) -> float:
        return rate_from_esnr(self.link_esnr(requester, server), self.config.radio.rate_scale)

    def capture_peaks(self, mover: int, stationary: int) -> PeakSet:
        cfg = self.config
        rx, tx = self.agents[mover].true_pose, self.agents[stationary].true_pose
        paths = propagation_paths(cfg.radio, tx.position, rx.position, self.obstacles)
        if not cfg.sensing.multipath:
            paths = paths[:1]
        if not paths:
            return PeakSet([], cfg.sensing.n_peaks)
        arc = QuarterTurn(
            tuple(rx.position),
            rx.yaw,
            count=cfg.sensing.snapshots,
            heading_jitter=cfg.sensing.heading_jitter,
        )
        snaps = synthesize_csi(cfg.radio, paths, arc, self.streams["channel"])
        peaks = extract_peaks(compute_profile(snaps, self.grid), cfg.sensing.n_peaks)
        return refine_peaks(peaks, snaps, self.grid) if cfg.sensing.refine_peaks else peaks

    def mover_estimate(self, mover: int) -> tuple[np.ndarray, float]:
        est = self.estimate(mover)
        return est.position[:2].copy(), est.yaw

    def observe(self, mover: int, stationary: int, peaks: PeakSet) -> bool:
        if self.distance(mover, stationary) > self.config.sensor_range:
            return False
        cfg = self.config
        edge = self.inter_robot_edge(mover, stationary)
        bad = False
        if cfg.outliers.fraction > 0:
            rng = self.streams["outliers"]
            if rng.random() < cfg.outliers.fraction:
                edge = corrupt_edge(edge, cfg.outliers, cfg.noise, rng)
                bad = True
        if cfg.sensing.reweight_online and peaks:
            edge = reweight_edge(edge, peaks, cfg.aoa, receiver=mover).edge
        self.pending.setdefault(mover, []).append((edge, peaks if peaks else None, bad))
        return True

    def move(self, mover: int, waypoint: np.ndarray) -> float:
        """Drive toward an estimated-frame waypoint; the offset is applied in the body frame."""
        agent = self.agents[mover]
        p_est, yaw_est = self.mover_estimate(mover)
        d = np.asarray(waypoint, dtype=float)[:2] - p_est
        dist = min(float(np.hypot(d[0], d[1])), self.config.step_length)
        true = agent.true_pose
        if dist < 1e-9:
            self._advance(agent, Pose(true.rotation @ rot_z(np.pi / 2), true.position))
            return 0.0
        bearing = true.yaw + (np.arctan2(d[1], d[0]) - yaw_est)
        for length in (dist, 0.5 * dist):
            for turn in (0.0, 0.35, -0.35, 0.7, -0.7, 1.05, -1.05, 1.4, -1.4):
                h = bearing + turn
                cand = true.position + length * np.array([np.cos(h), np.sin(h), 0.0])
                if self.obstacles.free(cand) and self.obstacles.segment_free(true.position, cand):
                    self._advance(agent, Pose(rot_z(h), cand))
                    return length
        self._advance(agent, Pose(true.rotation @ rot_z(np.pi / 2), true.position))
        return 0.0

    # -- tick ---------------------------------------------------------------

    def _log(self, kind: str, **fields) -> None:
        self.events.append({"tick": self.tick, "type": kind, **fields})

    def _negotiate(self) -> None:
        cfg = self.config
        outgoing: dict[int, list[Request]] = {}
        for agent in self.agents:
            if agent.mode != EXPLORING:
                continue
            err = self.err(agent.id)
            reqs = error_monitor_tick(agent.id, err, cfg.rendezvous.delta, sorted(self.neighbors(agent.id)))
            if reqs is None:
                continue
            if not reqs:
                self._log("retry", robot=agent.id, reason="no_neighbors", err=err)
                continue
            outgoing[agent.id] = reqs
        if not outgoing:
            return

        inbox: dict[int, list[Request]] = {}
        for reqs in outgoing.values():
            for r in reqs:
                inbox.setdefault(r.receiver, []).append(r)
        accepts: dict[int, list[Accept]] = {}
        for server in sorted(inbox):
            reqs = inbox[server]
            agent = self.agents[server]
            if agent.mode != EXPLORING:
                replies = [Reject(server, r.sender) for r in sorted(reqs, key=lambda r: r.sender)]
            else:
                esnrs = {r.sender: self.link_esnr(r.sender, server) for r in reqs}
                replies = neighbor_accept_policy(reqs, server, self.err(server), esnrs, cfg.radio.rate_scale)
            for rep in replies:
                if isinstance(rep, Accept):
                    accepts.setdefault(rep.receiver, []).append(rep)

        paired: set[int] = set()
        for requester in sorted(outgoing):
            if requester in paired:
                continue
            agent = self.agents[requester]
            mine = [a for a in accepts.get(requester, []) if a.sender not in paired]
            partner = select_partner(mine, agent.q, agent.alpha)
            if partner is None:
                self._log("retry", robot=requester, reason="no_accepts", err=outgoing[requester][0].err)
                continue
            paired.update((requester, partner))
            s = RendezvousSession(requester, partner, agent.q, agent.alpha, cfg.rendezvous, start_tick=self.tick)
            s.pre_err = outgoing[requester][0].err
            agent.mode = ANCHOR
            self.agents[partner].mode = MOVER
            self.sessions.append(s)
            self._log("pair", requester=requester, partner=partner, err=s.pre_err)

    def _run_sessions(self) -> None:
        budget = self.config.step_length
        for s in list(self.sessions):
            travelled = 0.0
            for _ in range(self.config.rendezvous.iterations_per_tick):
                if s.done or travelled >= budget:
                    break
                travelled += s.iterate(self)
            if s.done:
                self._finish_session(s)

    def _finish_session(self, s: RendezvousSession) -> None:
        for edge, peaks, bad in self.pending.pop(s.mover, []):
            k = self._add_edge(edge)
            self.edge_records.append(EdgeRecord(k, s.mover, peaks, bad))
        pre, post = self.joint_optimize((s.stationary, s.mover), s.stationary)
        requester = self.agents[s.stationary]
        requester.q = s.q
        requester.mode = EXPLORING
        self.agents[s.mover].mode = EXPLORING
        self.sessions.remove(s)
        self._log(
            "rendezvous",
            requester=s.stationary,
            partner=s.mover,
            start_tick=s.start_tick,
            steps=s.steps,
            edges=s.new_edges,
            incomplete=s.incomplete,
            w_history=s.w_history,
            rho_history=s.rho_history,
            request_err=s.pre_err,
            pre_err=pre[s.stationary],
            post_err=post[s.stationary],
            partner_pre_err=pre[s.mover],
            partner_post_err=post[s.mover],
        )

    def step(self) -> None:
        self.tick += 1
        active = self.config.strategy == "active"
        if active:
            self._negotiate()
        for agent in self.agents:
            if agent.mode == EXPLORING:
                self.explore(agent)
        if active:
            self._run_sessions()
        # chance encounters: both strategies exchange data and optimize jointly
        skip = {frozenset((s.stationary, s.mover)) for s in self.sessions}
        met = self.generate_observations(skip)
        for i, j in met:
            pre, post = self.joint_optimize((i, j), i)
            self._log("encounter", robots=[i, j], pre_err=[pre[i], pre[j]], post_err=[post[i], post[j]])
        self._record()

    def _record(self) -> None:
        for agent in self.agents:
            est = self.estimate(agent.id)
            p = agent.true_pose.position
            self.rows.append((self.tick, agent.id, self.err(agent.id), agent.mode, p[0], p[1], est.position[0], est.position[1]))

    # -- results ------------------------------------------------------------

    def trajectories(self) -> TrajectoryPair:
        est = {a.id: [self.graph.nodes[n] for n in a.history] for a in self.agents}
        ref = {a.id: [self.truth[n] for n in a.history] for a in self.agents}
        return TrajectoryPair(est, ref)


@dataclass
class RunResult:
    config: WorldConfig
    world: World
    summary: dict
    wall_time: float

    @property
    def rows(self) -> list[tuple]:
        return self.world.rows

    @property
    def events(self) -> list[dict]:
        return self.world.events

    def final_errs(self) -> list[float]:
        last = self.world.tick
        return [r[2] for r in self.world.rows if r[0] == last]

    def err_series(self) -> np.ndarray:
        """Mean Err over robots per tick."""
        n = self.config.n_robots
        errs = np.array([r[2] for r in self.world.rows]).reshape(-1, n)
        return errs.mean(axis=1)

    def ticks_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TICK_COLUMNS)
        for tick, robot, err, mode, x, y, ex, ey in self.world.rows:
            w.writerow([tick, robot, repr(float(err)), mode, repr(float(x)), repr(float(y)), repr(float(ex)), repr(float(ey))])
        return buf.getvalue()

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.world.events)

    def summary_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=2) + "\n"


def run_experiment(config: WorldConfig, progress: Callable[[World], None] | None = None) -> RunResult:
    t0 = time.perf_counter()
    world = World(config)
    for _ in range(config.n_iterations):
        world.step()
        if progress is not None:
            progress(world)
    pair = world.trajectories()
    final = [r[2] for r in world.rows if r[0] == world.tick]
    summary = {
        "version": VERSION,
        "strategy": config.strategy,
        "seed": config.seed,
        "ticks": world.tick,
        "ate_trans_m2": ate_trans(pair),
        "ate_rot": ate_rot(pair),
        "err_final_mean": float(np.mean(final)),
        "rendezvous": sum(1 for e in world.events if e["type"] == "rendezvous"),
        "encounters": sum(1 for e in world.events if e["type"] == "encounter"),
        "joint_optimizations": world.joint_optimizations,
        "open_sessions": len(world.sessions),
        "n_nodes": len(world.graph.nodes),
        "n_edges": len(world.graph.edges),
        "config": to_flat_dict(config),
    }
    return RunResult(config, world, summary, time.perf_counter() - t0)
