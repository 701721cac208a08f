"""Batch experiments: paired strategy comparison and outlier-rejection evaluation."""

from __future__ import annotations

import csv
import io
import json
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .config import WorldConfig, to_flat_dict
from .metrics import TrajectoryPair, ate_rot, ate_trans
from .outlier import evaluation_csv, reweight_edge
from .pose_graph import PoseGraph, optimize
from .sim import RunResult, World, run_experiment


def run_batch(configs: Sequence[WorldConfig], workers: int = 1) -> list[RunResult]:
    """Results come back in input order whatever the worker count."""
    if workers <= 1:
        return [run_experiment(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, configs))


# -- compare ------------------------------------------------------------------


@dataclass
class Comparison:
    seeds: list[int]
    active: list[RunResult]
    random: list[RunResult]

    def final_err(self, strategy: str) -> np.ndarray:
        runs = self.active if strategy == "active" else self.random
        return np.array([np.mean(r.final_errs()) for r in runs])

    def ate(self, strategy: str) -> np.ndarray:
        runs = self.active if strategy == "active" else self.random
        return np.array([r.summary["ate_trans_m2"] for r in runs])

    def summary(self) -> dict:
        fa, fr = self.final_err("active"), self.final_err("random")
        aa, ar = self.ate("active"), self.ate("random")
        return {
            "version": __version__,
            "seeds": self.seeds,
            "active_final_err_mean": float(fa.mean()),
            "random_final_err_mean": float(fr.mean()),
            "err_ratio_random_over_active": float(fr.mean() / fa.mean()) if fa.mean() > 0 else float("inf"),
            "active_ate_trans_mean": float(aa.mean()),
            "random_ate_trans_mean": float(ar.mean()),
            "ate_reduction_pct_mean": float(100.0 * np.mean(1.0 - aa / ar)),
            "ate_reduction_pct_per_seed": [float(100.0 * (1.0 - a / r)) for a, r in zip(aa, ar)],
            "config": to_flat_dict(self.active[0].config),
        }

    def aggregate_csv(self) -> str:
        """Mean and std of per-tick mean Err for each strategy."""
        sa = np.array([r.err_series() for r in self.active])
        sr = np.array([r.err_series() for r in self.random])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tick", "active_err_mean", "active_err_std", "random_err_mean", "random_err_std"])
        for t in range(sa.shape[1]):
            w.writerow([t + 1] + [repr(float(v)) for v in (sa[:, t].mean(), sa[:, t].std(), sr[:, t].mean(), sr[:, t].std())])
        return buf.getvalue()


def compare(config: WorldConfig, seeds: Sequence[int], workers: int = 1) -> Comparison:
    if len(seeds) < 2:
        raise ValueError("compare needs at least two seeds")
    cfgs = [config.replace(strategy=s, seed=int(seed)) for s in ("active", "random") for seed in seeds]
    runs = run_batch(cfgs, workers)
    n = len(seeds)
    return Comparison(list(map(int, seeds)), runs[:n], runs[n:])


# -- outlier evaluation ---------------------------------------------------------


def _reach(graph: PoseGraph) -> PoseGraph:
    """Fix the first node of every robot not connected to an already held node."""
    g = graph.copy()
    adj: dict = {n: [] for n in g.nodes}
    for e in g.edges:
        adj[e.source].append(e.target)
        adj[e.target].append(e.source)
    seen: set = set()

    def flood(start):
        queue = deque(start)
        seen.update(start)
        while queue:
            n = queue.popleft()
            for m in adj[n]:
                if m not in seen:
                    seen.add(m)
                    queue.append(m)

    flood(sorted(g.held))
    for robot in g.robots():
        first = g.robot_nodes(robot)[0]
        if first not in seen:
            g.fix(first)
            flood([first])
    return g


@dataclass
class OutlierEvaluation:
    seed: int
    ate_unweighted: float
    ate_weighted: float
    ate_rot_unweighted: float
    ate_rot_weighted: float
    rows: list[tuple[int, bool, float, float, float]]

    @property
    def reduction(self) -> float:
        return 1.0 - self.ate_weighted / self.ate_unweighted


def solve_with_weights(result: RunResult, weights: Mapping[int, float]) -> tuple[float, float]:
    """Re-solve the final graph of ``result`` with the given per-edge weights.

    Edges listed in ``weights`` get that weight; every other edge keeps its own.
    Returns (ATE_trans, ATE_rot) of the solution.
    """
    world: World = result.world
    g = _reach(world.graph)
    for k, w in weights.items():
        g.edges[k] = g.edges[k].with_weight(w)
    sol, _ = optimize(g, max_iterations=200)
    est = {a.id: [sol.nodes[n] for n in a.history] for a in world.agents}
    ref = {a.id: [world.truth[n] for n in a.history] for a in world.agents}
    pair = TrajectoryPair(est, ref)
    return ate_trans(pair), ate_rot(pair)


def evaluate_outliers(result: RunResult) -> OutlierEvaluation:
    """Solve the final graph with unit weights and with AOA-consistency weights."""
    world: World = result.world
    cfg = result.config
    unit: dict[int, float] = {}
    aoa: dict[int, float] = {}
    rows = []
    for rec in world.edge_records:
        edge = world.graph.edges[rec.index].with_weight(1.0)
        unit[rec.index] = 1.0
        if rec.peaks is None:
            aoa[rec.index] = 1.0
            rows.append((rec.index, rec.is_outlier, float("nan"), float("nan"), 1.0))
            continue
        rw = reweight_edge(edge, rec.peaks, cfg.aoa, receiver=rec.receiver)
        aoa[rec.index] = rw.edge.weight
        rows.append((rec.index, rec.is_outlier, rw.theta_dev, rw.phi_dev, rw.edge.weight))
    tu, ru = solve_with_weights(result, unit)
    tw, rw_ = solve_with_weights(result, aoa)
    return OutlierEvaluation(cfg.seed, tu, tw, ru, rw_, rows)


def outlier_summary(evals: Sequence[OutlierEvaluation], config: WorldConfig) -> dict:
    red = [e.reduction for e in evals]
    return {
        "version": __version__,
        "seeds": [e.seed for e in evals],
        "ate_trans_unweighted": [e.ate_unweighted for e in evals],
        "ate_trans_weighted": [e.ate_weighted for e in evals],
        "reduction_pct_per_seed": [100.0 * r for r in red],
        "reduction_pct_mean": 100.0 * float(np.mean(red)),
        "worst_increase_pct": 100.0 * float(max(0.0, -min(red))),
        "config": to_flat_dict(config),
    }


def outlier_csv(evals: Sequence[OutlierEvaluation]) -> str:
    """Per-edge rows; edge ids are prefixed by the seed to stay unique across runs."""
    out = []
    for e in evals:
        text = evaluation_csv(e.rows)
        lines = text.splitlines()
        if not out:
            out.append("seed," + lines[0])
        out.extend(f"{e.seed},{ln}" for ln in lines[1:])
    return "\n".join(out) + "\n"


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
