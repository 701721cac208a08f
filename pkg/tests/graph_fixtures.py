"""Graph builders shared by the solver tests and the acceptance suite."""

import numpy as np

from csi_rendezvous.geometry import Pose, compose, exp_so3, relative_pose, rot_z
from csi_rendezvous.pose_graph import MeasurementEdge, NodeId, PoseGraph, optimize

from oracles import TinyPlanarProblem


def chain_truth(n, rng, loops=0):
    truth = [Pose.planar(0, 0, 0)]
    for _ in range(n - 1):
        step = Pose(exp_so3(rng.normal(0, 0.2, 3)), rng.normal(0, 1.0, 3))
        truth.append(compose(truth[-1], step))
    g = PoseGraph(anchor=NodeId(0, 0))
    for k, x in enumerate(truth):
        g.add_node(NodeId(0, k), x)
    for k in range(n - 1):
        g.add_edge(MeasurementEdge(NodeId(0, k), NodeId(0, k + 1), relative_pose(truth[k], truth[k + 1])))
    for _ in range(loops):
        a, b = sorted(rng.choice(n, size=2, replace=False))
        g.add_edge(MeasurementEdge(NodeId(0, a), NodeId(0, b), relative_pose(truth[a], truth[b])))
    return g, truth


def perturbed(g, rng, trans=0.5, rot=0.3):
    out = g.copy()
    for n in g.nodes:
        if n in g.held:
            continue
        x = g.nodes[n]
        w = rng.normal(size=3)
        w *= rot * rng.uniform() / np.linalg.norm(w)
        out.set_pose(n, Pose(x.rotation @ exp_so3(w), x.position + rng.uniform(-trans, trans, 3)))
    return out


def random_tiny(rng):
    truth = [(0.0, 0.0, 0.0)]
    for _ in range(2):
        x, y, t = truth[-1]
        d, h = rng.uniform(0.8, 1.5), rng.uniform(-1.0, 1.0)
        truth.append((x + d * np.cos(t + h), y + d * np.sin(t + h), t + rng.uniform(-0.5, 0.5)))

    def meas(i, j):
        xi, yi, ti = truth[i]
        xj, yj, tj = truth[j]
        c, s = np.cos(ti), np.sin(ti)
        dx, dy = xj - xi, yj - yi
        return (i, j, c * dx + s * dy + rng.normal(0, 0.05), -s * dx + c * dy + rng.normal(0, 0.05), tj - ti + rng.normal(0, 0.03))

    edges = (meas(0, 1), meas(1, 2), meas(0, 2))
    centers = tuple(truth[1:])
    return TinyPlanarProblem(anchor=truth[0], edges=edges, centers=centers, half_width=(0.3, 0.3, 0.2), n=10)


def solve_tiny(problem):
    g = PoseGraph(anchor=NodeId(0, 0))
    g.add_node(NodeId(0, 0), Pose.planar(*problem.anchor))
    for k, c in enumerate(problem.centers, start=1):
        g.add_node(NodeId(0, k), Pose.planar(*c))
    for i, j, dx, dy, dt in problem.edges:
        g.add_edge(MeasurementEdge(NodeId(0, i), NodeId(0, j), Pose(rot_z(dt), np.array([dx, dy, 0.0]))))
    sol, _ = optimize(g)
    out = []
    for k in range(1, len(problem.centers) + 1):
        x = sol.nodes[NodeId(0, k)]
        out.append((x.position[0], x.position[1], x.yaw))
    return out
