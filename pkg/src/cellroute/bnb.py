"""Depth-first branch and bound for the conflict-free min-max MGTSP.

Every node assigns a subset of tasks to each agent (homes are fixed at
the root).  Its per-agent bound is the optimal GTSP over the agent's
assigned groups, cached by ``(agent, task bitmask)``.  Three bounding
approaches are available:

1. ``max_k b_k``
2. the geometric child filter plus the reachability-aware partition bound
   (greedy partition bound once 10 or more tasks are open)
3. the geometric child filter plus the greedy partition bound

All approaches order children the same way, so approach 3 never visits a
node that approach 1 skips.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import gtsp
from .bounds import GroupGeometry, increment_delta, lifted_bound
from .errors import InfeasibleError, SizeLimitError
from .model import Instance, Tour, solution_makespan

PRUNE_TOL = 1e-9


@dataclass
class BnbConfig:
    approach: int = 3
    seed: int = 0
    node_limit: int | None = None
    time_limit: float | None = None
    exact_limit: int = gtsp.EXACT_LIMIT
    initial: str = "greedy"  # or "none"
    partition_cutoff: int = 10
    cache_cap: int | None = None
    # pipeline hooks: assignments to skip, and tasks pinned to an agent
    nogoods: frozenset = frozenset()
    frozen: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.approach not in (1, 2, 3):
            raise ValueError(f"approach must be 1, 2 or 3, got {self.approach}")
        for name in ("node_limit", "time_limit", "cache_cap"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.initial not in ("greedy", "none"):
            raise ValueError(f"unknown initial-solution strategy {self.initial!r}")


@dataclass
class BnbStats:
    nodes: int = 0
    elapsed: float = 0.0
    history: list = field(default_factory=list)  # (nodes, seconds, makespan)
    cache_hits: int = 0
    cache_misses: int = 0
    filtered: int = 0
    pruned: int = 0
    workers: int = 1

    @property
    def hit_rate(self) -> float:
        total = self.cache_hits + self.cache_misses
        return self.cache_hits / total if total else 0.0


@dataclass
class BnbResult:
    tours: list
    makespan: float
    lower_bound: float
    optimal: bool
    stats: BnbStats
    assignment: tuple  # agent index per task

    @property
    def gap(self) -> float:
        if self.lower_bound <= 0:
            return 0.0 if self.makespan <= 0 else math.inf
        return (self.makespan - self.lower_bound) / self.lower_bound


@dataclass
class Node:
    masks: tuple  # per agent, bitmask of assigned tasks
    bounds: tuple  # per agent GTSP value
    open: tuple  # unassigned tasks
    lb: float
    depth: int = 0


def _bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


class BranchAndBound:
    def __init__(self, instance: Instance, config: BnbConfig | None = None):
        self.inst = instance
        self.cfg = config or BnbConfig()
        self.geo = GroupGeometry(instance)
        self.stats = BnbStats()
        self._cache: dict[tuple[int, int], gtsp.GtspSolution] = {}
        self._costs = [gtsp.DenseCost(instance.travel(k)) for k in range(instance.n_agents)]
        rng = np.random.default_rng(self.cfg.seed)
        self._rank = rng.permutation(instance.n_tasks)
        self.reach = [[k for k in range(instance.n_agents) if instance.reachable(k, t)]
                      for t in range(instance.n_tasks)]
        for t, agent in self.cfg.frozen.items():
            if agent not in self.reach[t]:
                raise InfeasibleError(f"task {instance.tasks[t]} frozen to an agent that cannot reach it")
            self.reach[t] = [agent]
        for t in range(instance.n_agents, instance.n_tasks):
            if not self.reach[t]:
                raise InfeasibleError(f"task {instance.tasks[t]} is reachable by no agent")
        self.incumbent = math.inf
        self.best_masks: tuple | None = None

    # -- GTSP subproblems ---------------------------------------------------

    def gtsp(self, agent: int, mask: int) -> gtsp.GtspSolution:
        key = (agent, mask)
        sol = self._cache.get(key)
        if sol is not None:
            self.stats.cache_hits += 1
            return sol
        self.stats.cache_misses += 1
        tasks = _bits(mask)
        if len(tasks) > self.cfg.exact_limit:
            raise SizeLimitError(f"agent {agent} would need an exact GTSP over {len(tasks)} groups")
        prob = gtsp.GtspProblem([self.inst.groups[agent][t] for t in tasks], self._costs[agent],
                                start_group=tasks.index(agent), processing=self.inst.c_g)
        sol = gtsp.solve_exact_dp(prob, limit=self.cfg.exact_limit)
        if self.cfg.cache_cap is not None and len(self._cache) >= self.cfg.cache_cap:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = sol
        return sol

    def node_bound(self, bounds, open_tasks) -> float:
        reach = [self.reach[t] for t in open_tasks]
        return lifted_bound(self.cfg.approach, bounds, reach, self.inst.c_g, self.cfg.partition_cutoff)

    # -- tree --------------------------------------------------------------

    def root(self) -> Node:
        n_a = self.inst.n_agents
        masks = tuple(1 << k for k in range(n_a))
        bounds = tuple(self.gtsp(k, masks[k]).objective for k in range(n_a))
        open_tasks = tuple(range(n_a, self.inst.n_tasks))
        return Node(masks, bounds, open_tasks, self.node_bound(bounds, open_tasks))

    def select_task(self, node: Node) -> int:
        """Farthest task first: largest distance to the nearest assigned group of any able agent."""
        best, best_key = None, None
        for t in node.open:
            est = min(self.geo.min_to(k, t, _bits(node.masks[k])) for k in self.reach[t])
            key = (est, -int(self._rank[t]))
            if best_key is None or key > best_key:
                best, best_key = t, key
        return best

    def branch(self, node: Node, task: int) -> list[Node]:
        """Children of ``node`` assigning ``task``, best first.

        Approaches 2 and 3 drop a child before solving its GTSP when the
        geometric increment already reaches the incumbent.
        """
        open_tasks = tuple(t for t in node.open if t != task)
        children = []
        for k in self.reach[task]:
            b_k = node.bounds[k]
            if self.cfg.approach in (2, 3):
                delta = increment_delta(self.geo, k, _bits(node.masks[k]), task)
                if not max(b_k, b_k + delta) < self.incumbent:
                    self.stats.filtered += 1
                    continue
            masks = list(node.masks)
            masks[k] |= 1 << task
            bounds = list(node.bounds)
            bounds[k] = self.gtsp(k, masks[k]).objective
            if not math.isfinite(bounds[k]):
                continue
            lb = self.node_bound(bounds, open_tasks)
            if lb >= self.incumbent - PRUNE_TOL:
                self.stats.pruned += 1
                continue
            children.append((max(bounds), k, Node(tuple(masks), tuple(bounds), open_tasks, lb, node.depth + 1)))
        children.sort(key=lambda c: (c[0], c[1]))
        return [c[2] for c in children]

    def assignment_of(self, masks) -> tuple:
        owner = [0] * self.inst.n_tasks
        for k, m in enumerate(masks):
            for t in _bits(m):
                owner[t] = k
        return tuple(owner)

    def tours_of(self, masks) -> list[Tour]:
        tours = []
        for k, m in enumerate(masks):
            sol = self.gtsp(k, m)
            tours.append(Tour(k, sol.tour))
        return tours

    def _offer(self, masks, value: float, t0: float) -> None:
        if self.cfg.nogoods and self.assignment_of(masks) in self.cfg.nogoods:
            return
        if value < self.incumbent - PRUNE_TOL:
            self.incumbent = value
            self.best_masks = tuple(masks)
            self.stats.history.append((self.stats.nodes, time.perf_counter() - t0, value))

    # -- search ------------------------------------------------------------

    def solve(self) -> BnbResult:
        t0 = time.perf_counter()
        if self.cfg.initial == "greedy":
            masks = initial_masks(self)
            if masks is not None:
                value = max(self.gtsp(k, m).objective for k, m in enumerate(masks))
                self._offer(masks, value, t0)
        root = self.root()
        stack = [root]
        complete = True
        frontier_lb = math.inf
        while stack:
            if self._limit_hit(t0):
                complete = False
                frontier_lb = min(n.lb for n in stack)
                break
            node = stack.pop()
            if node.lb >= self.incumbent - PRUNE_TOL:
                self.stats.pruned += 1
                continue
            self.stats.nodes += 1
            if not node.open:
                self._offer(node.masks, max(node.bounds), t0)
                continue
            task = self.select_task(node)
            stack.extend(reversed(self.branch(node, task)))
        self.stats.elapsed = time.perf_counter() - t0
        if self.best_masks is None:
            if complete:
                raise InfeasibleError("no assignment satisfies the reachability and exclusion constraints")
            raise InfeasibleError("search limit reached before any feasible assignment was found")
        lb = self.incumbent if complete else min(frontier_lb, self.incumbent)
        return BnbResult(self.tours_of(self.best_masks), self.incumbent, lb, complete, self.stats,
                         self.assignment_of(self.best_masks))

    def _limit_hit(self, t0: float) -> bool:
        c = self.cfg
        if c.node_limit is not None and self.stats.nodes >= c.node_limit:
            return True
        return c.time_limit is not None and time.perf_counter() - t0 > c.time_limit


def initial_masks(bb: BranchAndBound):
    """Greedy assignment: repeatedly place the (task, agent) pair whose
    heuristic GTSP re-solve yields the smallest resulting max load."""
    inst = bb.inst
    n_a = inst.n_agents
    masks = [1 << k for k in range(n_a)]
    loads = [_heuristic_value(bb, k, masks[k]) for k in range(n_a)]
    left = set(range(n_a, inst.n_tasks))
    while left:
        best = None
        for t in sorted(left):
            for k in bb.reach[t]:
                v = _heuristic_value(bb, k, masks[k] | 1 << t)
                if not math.isfinite(v):
                    continue
                worst = max(v, max(loads[j] for j in range(n_a) if j != k)) if n_a > 1 else v
                key = (worst, v - loads[k], t, k)
                if best is None or key < best[0]:
                    best = (key, t, k, v)
        if best is None:
            return None
        _, t, k, v = best
        masks[k] |= 1 << t
        loads[k] = v
        left.remove(t)
    return tuple(masks)


def _heuristic_value(bb: BranchAndBound, agent: int, mask: int) -> float:
    tasks = _bits(mask)
    prob = gtsp.GtspProblem([bb.inst.groups[agent][t] for t in tasks], bb._costs[agent],
                            start_group=tasks.index(agent), processing=bb.inst.c_g)
    return gtsp.solve_heuristic(prob, seed=bb.cfg.seed, budget=20, restarts=1).objective


def initial_incumbent(instance: Instance, config: BnbConfig | None = None):
    """Greedy starting solution: ``(tours, makespan)``."""
    bb = BranchAndBound(instance, config)
    masks = initial_masks(bb)
    if masks is None:
        raise InfeasibleError("greedy construction found no feasible assignment")
    tours = []
    for k, m in enumerate(masks):
        tasks = _bits(m)
        prob = gtsp.GtspProblem([instance.groups[k][t] for t in tasks], bb._costs[k],
                                start_group=tasks.index(k), processing=instance.c_g)
        tours.append(Tour(k, gtsp.solve_heuristic(prob, seed=bb.cfg.seed, budget=20, restarts=1).tour))
    return tours, solution_makespan(instance, tours)


def branch(bb: BranchAndBound, node: Node, task: int) -> list[Node]:
    return bb.branch(node, task)


def solve(instance: Instance, config: BnbConfig | None = None) -> BnbResult:
    return BranchAndBound(instance, config).solve()


def run_report(instance: Instance, result: BnbResult, config: BnbConfig) -> dict:
    return {
        "instance": instance.name,
        "approach": config.approach,
        "best": result.makespan,
        "nodes": result.stats.nodes,
        "seconds": round(result.stats.elapsed, 6),
        "optimal": result.optimal,
        "lower_bound": result.lower_bound,
        "cache_hit_rate": round(result.stats.hit_rate, 6),
        "c_g": instance.c_g,
        "n_agents": instance.n_agents,
        "seed": config.seed,
        "workers": result.stats.workers,
        "tours": [[instance.vertex_ids[v] for v in t.sequence] for t in result.tours],
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1)
