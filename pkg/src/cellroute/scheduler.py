"""Asynchronous timing of fixed waypoint sequences under mutual exclusion.

Every agent follows its waypoints in order at full speed and may only wait
at vertices.  The free variables are the leave times ``L[k][i]``; arrival
at position ``i + 1`` is ``L[k][i] + c[k][i]``.  Each occupancy interval
(an arc traversal or a vertex dwell) has endpoints of the form
``node + offset``, with ``node`` a leave-time variable or the time origin.

Two conflicting occupancies of different agents form a disjunctive pair:
one must end before the other starts.  The branch and bound keeps the
earliest times satisfying the oriented pairs (longest paths), branches on
the unoriented pair that overlaps most, and prunes by makespan.
"""
from __future__ import annotations

import itertools
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InfeasibleError, InstanceError
from .model import (EPS, ConflictSet, Instance, ScheduledTour, arc, check_active_conflicts, intervals_overlap,
                    processing_dwell, vertex)

SRC = 0


@dataclass(frozen=True)
class Occupancy:
    agent: int
    position: int
    element: tuple
    start: tuple  # (node, offset)
    end: tuple


@dataclass
class SchedulingProblem:
    instance: Instance
    waypoints: list  # per agent, starts and ends at the agent's home
    conflicts: ConflictSet | None = None

    def __post_init__(self):
        inst = self.instance
        if len(self.waypoints) != inst.n_agents:
            raise InstanceError("need one waypoint list per agent")
        self.waypoints = [[int(v) for v in w] for w in self.waypoints]
        for k, w in enumerate(self.waypoints):
            if not w:
                raise InstanceError(f"agent {inst.agents[k]} has no waypoints")
            if inst.vertex_task[w[0]] != k or w[-1] != w[0]:
                raise InstanceError(f"waypoints of agent {inst.agents[k]} must start and end at its home")
            if any(a == b for a, b in zip(w, w[1:])):
                raise InstanceError("consecutive duplicate waypoints")
        if self.conflicts is None:
            self.conflicts = inst.conflicts
        # node numbering: 0 is the origin, then one node per leave time
        self.offset = []
        n = 1
        for w in self.waypoints:
            self.offset.append(n)
            n += len(w)
        self.n_nodes = n
        self.durations = []
        self.dwell = []
        for k, w in enumerate(self.waypoints):
            m = inst.travel(k)
            self.durations.append([float(m[a, b]) for a, b in zip(w, w[1:])])
            d = processing_dwell(inst, w)
            if len(w) > 1:
                d[-1] = 0.0
            self.dwell.append(d)
        self.occupancies = self._occupancies()
        self.pairs = self._pairs()

    def node(self, agent: int, position: int) -> int:
        return self.offset[agent] + position

    def _occupancies(self) -> list[Occupancy]:
        out = []
        for k, w in enumerate(self.waypoints):
            c = self.durations[k]
            for i, v in enumerate(w):
                start = (SRC, 0.0) if i == 0 else (self.node(k, i - 1), c[i - 1])
                out.append(Occupancy(k, i, vertex(k, v), start, (self.node(k, i), 0.0)))
            for i in range(len(w) - 1):
                n = self.node(k, i)
                out.append(Occupancy(k, i, arc(k, w[i], w[i + 1]), (n, 0.0), (n, c[i])))
        return out

    def _pairs(self) -> list[tuple[Occupancy, Occupancy]]:
        cs = self.conflicts
        by_elem: dict[tuple, list[Occupancy]] = {}
        for o in self.occupancies:
            by_elem.setdefault(o.element, []).append(o)
        out = []
        for a, b in cs.pairs():
            for oa in by_elem.get(a, ()):
                for ob in by_elem.get(b, ()):
                    out.append((oa, ob))
        out.sort(key=lambda p: (p[0].agent, p[0].position, p[1].agent, p[1].position, p[0].element, p[1].element))
        return out

    def base_edges(self) -> list[tuple[int, int, float]]:
        edges = []
        for k, w in enumerate(self.waypoints):
            edges.append((SRC, self.node(k, 0), self.dwell[k][0]))
            for i in range(1, len(w)):
                edges.append((self.node(k, i - 1), self.node(k, i), self.durations[k][i - 1] + self.dwell[k][i]))
        return edges

    def horizon(self) -> float:
        return big_m(self)


def big_m(problem: SchedulingProblem) -> float:
    """Smallest safe big-M: every arc duration and dwell of every agent."""
    return sum(sum(c) for c in problem.durations) + sum(sum(d) for d in problem.dwell)


def order_edge(first: Occupancy, second: Occupancy) -> tuple[int, int, float]:
    """Edge encoding ``end(first) <= start(second)``."""
    (u, ou), (v, ov) = first.end, second.start
    return u, v, ou - ov


def _times(labels, occ: Occupancy) -> tuple[float, float]:
    return labels[occ.start[0]] + occ.start[1], labels[occ.end[0]] + occ.end[1]


class _Graph:
    def __init__(self, n: int, edges):
        self.n = n
        self.out: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for u, v, w in edges:
            self.out[u].append((v, w))

    def longest(self, labels=None, start=None):
        """Longest path labels from the origin; ``None`` on a positive cycle.

        With ``labels`` and ``start`` given, only updates reachable from
        ``start`` are propagated (labels never decrease when edges are added).
        """
        if labels is None:
            labels = [-math.inf] * self.n
            labels[SRC] = 0.0
            queue = deque([SRC])
        else:
            labels = list(labels)
            queue = deque([start])
        count = [0] * self.n
        inq = [False] * self.n
        for q in queue:
            inq[q] = True
        while queue:
            u = queue.popleft()
            inq[u] = False
            lu = labels[u]
            for v, w in self.out[u]:
                if lu + w > labels[v] + 1e-12:
                    labels[v] = lu + w
                    if not inq[v]:
                        count[v] += 1
                        if count[v] > self.n:
                            return None
                        inq[v] = True
                        queue.append(v)
        return labels

    def with_edge(self, u, v, w) -> "_Graph":
        g = _Graph.__new__(_Graph)
        g.n = self.n
        g.out = list(self.out)
        g.out[u] = self.out[u] + [(v, w)]
        return g


@dataclass
class ScheduleResult:
    schedules: list
    makespan: float
    lower_bound: float
    optimal: bool
    nodes: int
    elapsed: float = 0.0
    orientation: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return 0.0 if self.optimal or self.lower_bound <= 0 else (self.makespan - self.lower_bound) / self.lower_bound


def to_schedules(problem: SchedulingProblem, labels) -> list[ScheduledTour]:
    out = []
    for k, w in enumerate(problem.waypoints):
        leave = [labels[problem.node(k, i)] for i in range(len(w))]
        arrive = [0.0] + [leave[i - 1] + problem.durations[k][i - 1] for i in range(1, len(w))]
        out.append(ScheduledTour(k, tuple(w), tuple(arrive), tuple(leave)))
    return out


def _makespan(problem: SchedulingProblem, labels) -> float:
    return max(labels[problem.node(k, len(w) - 1)] for k, w in enumerate(problem.waypoints))


def _most_overlapping(problem: SchedulingProblem, labels, oriented, eps):
    best, best_ov = None, -1.0
    for idx, (a, b) in enumerate(problem.pairs):
        if idx in oriented:
            continue
        ta, tb = _times(labels, a), _times(labels, b)
        if intervals_overlap(ta, tb, eps):
            ov = min(ta[1], tb[1]) - max(ta[0], tb[0])
            if ov > best_ov + 1e-12:
                best, best_ov = idx, ov
    return best


def schedule(problem: SchedulingProblem, node_limit: int | None = None, time_limit: float | None = None,
             initial: Sequence[ScheduledTour] | None = None, eps: float = EPS) -> ScheduleResult:
    """Minimum-makespan conflict-free timing by disjunctive branch and bound.

    ``initial`` may hold a known conflict-free schedule of the same
    waypoints; it seeds the incumbent.
    """
    t0 = time.perf_counter()
    g0 = _Graph(problem.n_nodes, problem.base_edges())
    root = g0.longest()
    if root is None:  # cannot happen without orientation edges, kept for safety
        raise InfeasibleError("precedence constraints are cyclic")
    best_val, best_sched, best_orient = math.inf, None, {}
    if initial is not None:
        if check_active_conflicts(problem.conflicts, initial, eps):
            raise ValueError("initial schedule has active conflicts")
        best_val = max(s.makespan for s in initial)
        best_sched = list(initial)
    nodes = 0
    complete = True
    frontier = math.inf
    stack = [(g0, root, {})]
    while stack:
        if (node_limit is not None and nodes >= node_limit) or \
                (time_limit is not None and time.perf_counter() - t0 > time_limit):
            complete = False
            frontier = min(_makespan(problem, lab) for _, lab, _ in stack)
            break
        g, labels, oriented = stack.pop()
        lb = _makespan(problem, labels)
        if lb >= best_val - 1e-9:
            continue
        nodes += 1
        idx = _most_overlapping(problem, labels, oriented, eps)
        if idx is None:
            best_val, best_orient = lb, oriented
            best_sched = to_schedules(problem, labels)
            continue
        a, b = problem.pairs[idx]
        children = []
        for first, second, flag in ((a, b, 0), (b, a, 1)):
            u, v, w = order_edge(first, second)
            g2 = g.with_edge(u, v, w)
            lab2 = g2.longest(labels, u)
            if lab2 is None:
                continue
            o2 = dict(oriented)
            o2[idx] = flag
            children.append((_makespan(problem, lab2), flag, (g2, lab2, o2)))
        children.sort(key=lambda c: (c[0], c[1]))
        stack.extend(c[2] for c in reversed(children))
    if best_sched is None:
        if complete:
            raise InfeasibleError("every orientation of the conflict pairs is cyclic")
        raise InfeasibleError("search limit reached before a conflict-free schedule was found")
    lower = best_val if complete else min(best_val, frontier)
    return ScheduleResult(best_sched, best_val, lower, complete, nodes, time.perf_counter() - t0, best_orient)


def enumerate_orientations(problem: SchedulingProblem) -> float:
    """Exhaustive reference: best makespan over all 2^pairs orientations."""
    g0 = _Graph(problem.n_nodes, problem.base_edges())
    best = math.inf
    for flags in itertools.product((0, 1), repeat=len(problem.pairs)):
        edges = problem.base_edges()
        for (a, b), f in zip(problem.pairs, flags):
            edges.append(order_edge(a, b) if f == 0 else order_edge(b, a))
        labels = _Graph(g0.n, edges).longest()
        if labels is not None:
            best = min(best, _makespan(problem, labels))
    return best


def schedule_tours(instance: Instance, tours, conflicts: ConflictSet | None = None, **limits) -> ScheduleResult:
    """Time closed tours (e.g. branch-and-bound output) without re-ordering them."""
    wps = [[] for _ in range(instance.n_agents)]
    for t in tours:
        wps[t.agent] = t.waypoints()
    return schedule(SchedulingProblem(instance, wps, conflicts), **limits)


def smooth_sync(solution, node_limit: int | None = None, time_limit: float | None = None) -> ScheduleResult:
    """Drop the lock-step assumption for a synchronized solution, keeping each agent's waypoint order."""
    from .sync import sync_schedules

    p = solution.problem
    wps = [solution.projections[k] for k in range(p.instance.n_agents)]
    problem = SchedulingProblem(p.instance, wps, p.conflicts)
    initial = sync_schedules(p, solution.states)
    res = schedule(problem, node_limit=node_limit, time_limit=time_limit, initial=initial)
    if res.makespan > solution.makespan + 1e-9:
        raise AssertionError("smoothing made the synchronized schedule worse")
    return res
