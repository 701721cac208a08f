"""Pose graph container, trajectory error and a Levenberg-Marquardt solver.

The cost of an edge (i -> j) with measurement ``(R_bar, p_bar)`` is::

    weight * ( info_trans * |p_j - p_i - R_i p_bar|^2
             + info_rot   * |R_j - R_i R_bar|_F^2 )

and the trajectory error of a set of edges is the sum of those costs.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Pose, pose_to_quat, quat_to_rotation

ODOMETRY = "odometry"
INTER_ROBOT = "inter_robot"
EDGE_KINDS = (ODOMETRY, INTER_ROBOT)


class GraphError(ValueError):
    pass


class DisconnectedGraphError(GraphError):
    pass


@dataclass(frozen=True, order=True)
class NodeId:
    robot: int
    step: int


@dataclass(frozen=True)
class MeasurementEdge:
    source: NodeId
    target: NodeId
    z_bar: Pose
    info_trans: float = 1.0
    info_rot: float = 1.0
    kind: str = ODOMETRY
    weight: float = 1.0

    def __post_init__(self):
        if not (self.info_trans > 0 and self.info_rot > 0):
            raise GraphError("information values must be positive")
        if not (0.0 < self.weight <= 1.0):
            raise GraphError(f"edge weight must lie in (0, 1], got {self.weight}")
        if self.kind not in EDGE_KINDS:
            raise GraphError(f"unknown edge kind {self.kind!r}")

    def with_weight(self, weight: float) -> "MeasurementEdge":
        return dataclasses.replace(self, weight=float(weight))

    def touches(self, robot: int) -> bool:
        return self.source.robot == robot or self.target.robot == robot


class PoseGraph:
    """Nodes (current estimates), edges and the gauge-fixing set.

    ``anchor`` is the primary gauge node; ``fixed`` holds further nodes whose
    poses are known in the shared world frame (e.g. every robot's start pose).
    """

    def __init__(self, anchor: NodeId | None = None):
        self.nodes: dict[NodeId, Pose] = {}
        self.edges: list[MeasurementEdge] = []
        self.anchor = anchor
        self.fixed: set[NodeId] = set()
        self._last_step: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, node: NodeId, pose: Pose) -> None:
        if node in self.nodes:
            raise GraphError(f"duplicate node {node}")
        last = self._last_step.get(node.robot)
        if last is not None and node.step <= last:
            raise GraphError(f"steps of robot {node.robot} must increase ({node.step} after {last})")
        self.nodes[node] = pose
        self._last_step[node.robot] = node.step
        if self.anchor is None:
            self.anchor = node

    def add_edge(self, edge: MeasurementEdge) -> int:
        for end in (edge.source, edge.target):
            if end not in self.nodes:
                raise GraphError(f"edge endpoint {end} is not a node")
        self.edges.append(edge)
        return len(self.edges) - 1

    def fix(self, node: NodeId) -> None:
        if node not in self.nodes:
            raise GraphError(f"cannot fix unknown node {node}")
        self.fixed.add(node)

    @property
    def held(self) -> set[NodeId]:
        held = {n for n in self.fixed if n in self.nodes}
        if self.anchor is not None and self.anchor in self.nodes:
            held.add(self.anchor)
        return held

    def set_pose(self, node: NodeId, pose: Pose) -> None:
        if node not in self.nodes:
            raise GraphError(f"unknown node {node}")
        self.nodes[node] = pose

    def robots(self) -> list[int]:
        return sorted({n.robot for n in self.nodes})

    def robot_nodes(self, robot: int) -> list[NodeId]:
        return sorted(n for n in self.nodes if n.robot == robot)

    def edges_for_robot(self, robot: int) -> list[MeasurementEdge]:
        return [e for e in self.edges if e.touches(robot)]

    def copy(self) -> "PoseGraph":
        g = PoseGraph(self.anchor)
        g.nodes = dict(self.nodes)
        g.edges = list(self.edges)
        g.fixed = set(self.fixed)
        g._last_step = dict(self._last_step)
        return g

    def subgraph_for_robots(self, robots: Iterable[int]) -> "PoseGraph":
        keep = set(robots)
        g = PoseGraph()
        for node in sorted(self.nodes):
            if node.robot in keep:
                g.add_node(node, self.nodes[node])
        g.anchor = self.anchor if self.anchor in g.nodes else (min(g.nodes) if g.nodes else None)
        g.fixed = {n for n in self.fixed if n in g.nodes}
        g.edges = [e for e in self.edges if e.source in g.nodes and e.target in g.nodes]
        return g


# ---------------------------------------------------------------------------
# cost


def edge_cost(edge: MeasurementEdge, x_i: Pose, x_j: Pose) -> float:
    rt = x_j.position - x_i.position - x_i.rotation @ edge.z_bar.position
    rr = x_j.rotation - x_i.rotation @ edge.z_bar.rotation
    return edge.weight * (edge.info_trans * float(rt @ rt) + edge.info_rot * float(np.sum(rr * rr)))


def trajectory_error(
    graph: PoseGraph,
    robot: int | None = None,
    edges: Sequence[MeasurementEdge] | None = None,
) -> float:
    """Summed edge cost; ``robot`` restricts to edges incident to that robot."""
    if edges is None:
        edges = graph.edges if robot is None else graph.edges_for_robot(robot)
    elif robot is not None:
        edges = [e for e in edges if e.touches(robot)]
    total = 0.0
    for e in edges:
        total += edge_cost(e, graph.nodes[e.source], graph.nodes[e.target])
    return total


# ---------------------------------------------------------------------------
# solver


@dataclass
class OptimizeReport:
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    accepted_costs: list[float] = field(default_factory=list)


class _Problem:
    """Vectorised residuals and Jacobian over the free nodes of a graph."""

    def __init__(self, graph: PoseGraph):
        held = graph.held
        order = sorted(graph.nodes)
        self.order = order
        self.free = [n for n in order if n not in held]
        self.col = {n: k for k, n in enumerate(self.free)}
        self.index = {n: k for k, n in enumerate(order)}
        edges = graph.edges
        self.n_edges = len(edges)
        self.src = np.array([self.index[e.source] for e in edges], dtype=int)
        self.dst = np.array([self.index[e.target] for e in edges], dtype=int)
        self.src_col = np.array([self.col.get(e.source, -1) for e in edges], dtype=int)
        self.dst_col = np.array([self.col.get(e.target, -1) for e in edges], dtype=int)
        self.Rbar = np.array([e.z_bar.rotation for e in edges]).reshape(-1, 3, 3)
        self.pbar = np.array([e.z_bar.position for e in edges]).reshape(-1, 3)
        self.st = np.sqrt(np.array([e.weight * e.info_trans for e in edges]))
        self.sr = np.sqrt(np.array([e.weight * e.info_rot for e in edges]))

    def residuals(self, R: np.ndarray, p: np.ndarray) -> np.ndarray:
        Ri, Rj = R[self.src], R[self.dst]
        rt = p[self.dst] - p[self.src] - np.einsum("eab,eb->ea", Ri, self.pbar)
        rr = Rj - Ri @ self.Rbar
        return np.concatenate(
            [rt * self.st[:, None], rr.reshape(-1, 9) * self.sr[:, None]], axis=1
        )

    def jacobian(self, R: np.ndarray) -> sp.csr_matrix:
        E = self.n_edges
        n = 6 * len(self.free)
        Ri, Rj = R[self.src], R[self.dst]
        gens = np.array([_hat_basis(k) for k in range(3)])  # (3,3,3)
        rows, cols, vals = [], [], []
        eye = np.eye(3)
        base = np.arange(E) * 12

        def put(mask, block, row_off, col_idx, col_off):
            # block: (E, r, c)
            e_idx = np.nonzero(mask)[0]
            if e_idx.size == 0:
                return
            b = block[e_idx]
            r, c = b.shape[1], b.shape[2]
            rr = base[e_idx][:, None, None] + row_off + np.arange(r)[None, :, None]
            cc = 6 * col_idx[e_idx][:, None, None] + col_off + np.arange(c)[None, None, :]
            rows.append(np.broadcast_to(rr, b.shape).ravel())
            cols.append(np.broadcast_to(cc, b.shape).ravel())
            vals.append(b.ravel())

        st = self.st[:, None, None]
        sr = self.sr[:, None, None]
        free_i = self.src_col >= 0
        free_j = self.dst_col >= 0
        # translation residual
        put(free_j, np.broadcast_to(eye, (E, 3, 3)) * st, 0, self.dst_col, 0)
        put(free_i, -np.broadcast_to(eye, (E, 3, 3)) * st, 0, self.src_col, 0)
        pbar_hat = np.zeros((E, 3, 3))
        pbar_hat[:, 0, 1], pbar_hat[:, 0, 2] = -self.pbar[:, 2], self.pbar[:, 1]
        pbar_hat[:, 1, 0], pbar_hat[:, 1, 2] = self.pbar[:, 2], -self.pbar[:, 0]
        pbar_hat[:, 2, 0], pbar_hat[:, 2, 1] = -self.pbar[:, 1], self.pbar[:, 0]
        put(free_i, (Ri @ pbar_hat) * st, 0, self.src_col, 3)
        # rotation residual: d(Rj)/dθ_k = Rj G_k ; d(-Ri Rbar)/dθ_k = -Ri G_k Rbar
        dj = np.einsum("eab,kbc->eack", Rj, gens).reshape(E, 9, 3)
        di = -np.einsum("eab,kbc,ecd->eadk", Ri, gens, self.Rbar).reshape(E, 9, 3)
        put(free_j, dj * sr, 3, self.dst_col, 3)
        put(free_i, di * sr, 3, self.src_col, 3)
        if rows:
            rows_a = np.concatenate(rows)
            cols_a = np.concatenate(cols)
            vals_a = np.concatenate(vals)
        else:
            rows_a = cols_a = np.zeros(0, dtype=int)
            vals_a = np.zeros(0)
        return sp.csr_matrix((vals_a, (rows_a, cols_a)), shape=(12 * E, n))


def _hat_basis(k: int) -> np.ndarray:
    w = np.zeros(3)
    w[k] = 1.0
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _batch_exp(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w, axis=1)
    out = np.repeat(np.eye(3)[None], len(w), axis=0)
    K = np.zeros((len(w), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -w[:, 2], w[:, 1]
    K[:, 1, 0], K[:, 1, 2] = w[:, 2], -w[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -w[:, 1], w[:, 0]
    small = theta < 1e-9
    t = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(t) / t)
    b = np.where(small, 0.5, (1.0 - np.cos(t)) / (t * t))
    return out + a[:, None, None] * K + b[:, None, None] * (K @ K)


def check_connected(graph: PoseGraph) -> None:
    held = graph.held
    if not held:
        raise DisconnectedGraphError("graph has no anchor")
    adj: dict[NodeId, list[NodeId]] = {n: [] for n in graph.nodes}
    for e in graph.edges:
        adj[e.source].append(e.target)
        adj[e.target].append(e.source)
    seen = set(held)
    queue = deque(held)
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m not in seen:
                seen.add(m)
                queue.append(m)
    missing = [n for n in graph.nodes if n not in seen]
    if missing:
        raise DisconnectedGraphError(f"{len(missing)} node(s) not connected to a held node, e.g. {missing[0]}")


def initialize_from_measurements(graph: PoseGraph) -> PoseGraph:
    """Breadth-first propagation of measurements outward from the held nodes."""
    check_connected(graph)
    out = graph.copy()
    adj: dict[NodeId, list[tuple[MeasurementEdge, bool]]] = {n: [] for n in graph.nodes}
    for e in graph.edges:
        adj[e.source].append((e, True))
        adj[e.target].append((e, False))
    for n in adj:
        # odometry first so chains are followed before inter-robot links
        adj[n].sort(key=lambda item: item[0].kind != ODOMETRY)
    seen = set(graph.held)
    queue = deque(sorted(seen))
    while queue:
        n = queue.popleft()
        xn = out.nodes[n]
        for e, forward in adj[n]:
            m = e.target if forward else e.source
            if m in seen:
                continue
            z = e.z_bar
            if forward:
                xm = Pose(xn.rotation @ z.rotation, xn.position + xn.rotation @ z.position)
            else:
                R = xn.rotation @ z.rotation.T
                xm = Pose(R, xn.position - R @ z.position)
            out.nodes[m] = xm
            seen.add(m)
            queue.append(m)
    return out


def optimize(
    graph: PoseGraph,
    max_iterations: int = 100,
    rel_tol: float = 1e-8,
    initial_lambda: float = 1e-4,
    initialize: bool = False,
) -> tuple[PoseGraph, OptimizeReport]:
    """Damped Gauss-Newton on the summed edge cost with held nodes fixed.

    The input graph is left untouched. A step is accepted only if it lowers
    the cost; otherwise the damping grows tenfold and the step is retried.
    """
    check_connected(graph)
    work = initialize_from_measurements(graph) if initialize else graph
    prob = _Problem(work)
    order = prob.order
    R = np.array([work.nodes[n].rotation for n in order]).reshape(-1, 3, 3)
    p = np.array([work.nodes[n].position for n in order]).reshape(-1, 3)
    free_idx = np.array([prob.index[n] for n in prob.free], dtype=int)

    r = prob.residuals(R, p)
    cost = float(np.sum(r * r))
    initial_cost = trajectory_error(graph)
    report = OptimizeReport(initial_cost=initial_cost, final_cost=cost, iterations=0, converged=False)
    report.accepted_costs.append(cost)

    if free_idx.size == 0 or prob.n_edges == 0:
        report.converged = True
        return _finish(graph, order, R, p, report)

    lam = initial_lambda
    for it in range(1, max_iterations + 1):
        report.iterations = it
        J = prob.jacobian(R)
        rv = r.ravel()
        H = (J.T @ J).tocsc()
        g = J.T @ rv
        diag = H.diagonal()
        improved = False
        while lam < 1e12:
            A = H + sp.diags(lam * np.maximum(diag, 1e-9), format="csc")
            try:
                delta = -spla.spsolve(A, g)
            except RuntimeError:
                lam *= 10.0
                continue
            if not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            d = delta.reshape(-1, 6)
            p_new = p.copy()
            R_new = R.copy()
            p_new[free_idx] += d[:, :3]
            R_new[free_idx] = R[free_idx] @ _batch_exp(d[:, 3:])
            r_new = prob.residuals(R_new, p_new)
            cost_new = float(np.sum(r_new * r_new))
            if cost_new < cost:
                improved = True
                break
            lam *= 10.0
        if not improved:
            report.converged = True
            break
        decrease = (cost - cost_new) / max(cost, 1e-300)
        R, p, r, cost = R_new, p_new, r_new, cost_new
        report.accepted_costs.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if decrease < rel_tol or cost < 1e-24:
            report.converged = True
            break
    report.final_cost = cost
    return _finish(graph, order, R, p, report)


def _finish(graph, order, R, p, report):
    out = graph.copy()
    held = graph.held
    for k, n in enumerate(order):
        if n in held:
            continue
        out.nodes[n] = Pose(_reorthonormalize(R[k]), p[k])
    report.final_cost = trajectory_error(out)
    return out, report


def _reorthonormalize(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    Q = u @ vt
    if np.linalg.det(Q) < 0:
        u[:, -1] *= -1
        Q = u @ vt
    return Q


# ---------------------------------------------------------------------------
# text format


def dump_graph(graph: PoseGraph) -> str:
    """Line format: VERTEX / EDGE / ANCHOR / FIX records, quaternions as (qx qy qz qw)."""
    ids = {n: k for k, n in enumerate(sorted(graph.nodes))}
    lines = []
    for n, k in ids.items():
        x = graph.nodes[n]
        qx, qy, qz, qw = pose_to_quat(x)
        px, py, pz = x.position
        lines.append(f"VERTEX {k} {n.robot} {n.step} {qx:.17g} {qy:.17g} {qz:.17g} {qw:.17g} {px:.17g} {py:.17g} {pz:.17g}")
    for e in graph.edges:
        qx, qy, qz, qw = pose_to_quat(e.z_bar)
        px, py, pz = e.z_bar.position
        lines.append(
            f"EDGE {ids[e.source]} {ids[e.target]} {px:.17g} {py:.17g} {pz:.17g} "
            f"{qx:.17g} {qy:.17g} {qz:.17g} {qw:.17g} "
            f"{e.info_trans:.17g} {e.info_rot:.17g} {e.weight:.17g} {e.kind}"
        )
    if graph.anchor is not None:
        lines.append(f"ANCHOR {ids[graph.anchor]}")
    for n in sorted(graph.fixed):
        if n != graph.anchor:
            lines.append(f"FIX {ids[n]}")
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> PoseGraph:
    g = PoseGraph()
    by_id: dict[int, NodeId] = {}
    anchor = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        try:
            if tok[0] == "VERTEX":
                k, robot, step = int(tok[1]), int(tok[2]), int(tok[3])
                qx, qy, qz, qw, x, y, z = map(float, tok[4:11])
                node = NodeId(robot, step)
                by_id[k] = node
                g.nodes[node] = Pose(quat_to_rotation(qx, qy, qz, qw), [x, y, z])
                g._last_step[robot] = max(step, g._last_step.get(robot, step))
            elif tok[0] == "EDGE":
                a, b = by_id[int(tok[1])], by_id[int(tok[2])]
                x, y, z, qx, qy, qz, qw = map(float, tok[3:10])
                info_t, info_r, w = map(float, tok[10:13])
                g.edges.append(
                    MeasurementEdge(a, b, Pose(quat_to_rotation(qx, qy, qz, qw), [x, y, z]), info_t, info_r, tok[13], w)
                )
            elif tok[0] == "ANCHOR":
                anchor = by_id[int(tok[1])]
            elif tok[0] == "FIX":
                g.fixed.add(by_id[int(tok[1])])
            else:
                raise GraphError(f"unknown record {tok[0]!r}")
        except (IndexError, KeyError, ValueError) as exc:
            raise GraphError(f"line {lineno}: {exc}") from exc
    g.anchor = anchor if anchor is not None else (min(g.nodes) if g.nodes else None)
    return g
