"""Lower bounds for partial task assignments.

``increment_delta`` filters children before their GTSP is solved.  The two
partition bounds lift ``max_k b_k`` by the processing time the unassigned
tasks will certainly add: ``partition_bound_exact`` respects reachability,
``partition_bound_greedy`` ignores it and is available in closed form.
"""
from __future__ import annotations

import bisect
import logging
import math
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InfeasibleError
from .model import Instance

log = logging.getLogger(__name__)


class GroupGeometry:
    """Per-agent task-pair distance summaries.

    ``near[k][i, j]`` is the smallest travel cost between a vertex of D^k_i
    and a vertex of D^k_j; ``far[k][i, j]`` the largest cost between two
    distinct vertices drawn from D^k_i and D^k_j (``-inf`` when there is no
    such pair).
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        n_g = instance.n_tasks
        self.near, self.far = [], []
        for k in range(instance.n_agents):
            m = instance.travel(k)
            groups = instance.groups[k]
            near = np.full((n_g, n_g), np.inf)
            far = np.full((n_g, n_g), -np.inf)
            for i in range(n_g):
                gi = groups[i]
                if len(gi) == 0:
                    continue
                for j in range(i, n_g):
                    gj = groups[j]
                    if len(gj) == 0:
                        continue
                    block = m[np.ix_(gi, gj)]
                    near[i, j] = near[j, i] = block.min()
                    if i == j:
                        if len(gi) > 1:
                            far[i, i] = block.max()
                    else:
                        far[i, j] = far[j, i] = block.max()
            self.near.append(near)
            self.far.append(far)

    def min_to(self, agent: int, task: int, assigned: Sequence[int]) -> float:
        return float(self.near[agent][task, list(assigned)].min())

    def diameter(self, agent: int, assigned: Sequence[int]) -> float:
        idx = list(assigned)
        d = float(self.far[agent][np.ix_(idx, idx)].max())
        return max(d, 0.0)


def increment_delta(geometry: GroupGeometry, agent: int, assigned: Sequence[int], task: int) -> float:
    """``2 min(task, assigned) - max(assigned)``; zero for an empty set.

    The optimal tour grows by at least this much when ``task`` joins
    ``assigned``: removing the new vertex and joining its neighbours
    saves two arcs of at least ``min`` and adds one of at most ``max``.
    No triangle inequality is needed for that; the companion bound
    "the tour does not shrink" does need it.
    """
    if not assigned:
        return 0.0
    return 2.0 * geometry.min_to(agent, task, assigned) - geometry.diameter(agent, assigned)


def delta_from_points(cost: np.ndarray, assigned_vertices: Sequence[int], candidate_vertices: Sequence[int]) -> float:
    """Same quantity computed directly from vertex lists and a cost matrix."""
    a = list(assigned_vertices)
    if not a:
        return 0.0
    near = float(cost[np.ix_(list(candidate_vertices), a)].min())
    if len(a) < 2:
        far = 0.0
    else:
        sub = cost[np.ix_(a, a)]
        far = float(sub[~np.eye(len(a), dtype=bool)].max())
    return 2.0 * near - far


# -- exact set-partition bound ---------------------------------------------


def _assignable(reach: list[list[int]], caps: list[int]) -> bool:
    """Can every task go to a reachable agent without exceeding ``caps``?"""
    n_a = len(caps)
    load = [0] * n_a
    holder: list[list[int]] = [[] for _ in range(n_a)]

    def augment(t, seen):
        for k in reach[t]:
            if k in seen:
                continue
            seen.add(k)
            if load[k] < caps[k]:
                load[k] += 1
                holder[k].append(t)
                return True
            for i, other in enumerate(holder[k]):
                if augment(other, seen):
                    holder[k][i] = t
                    return True
        return False

    for t in sorted(range(len(reach)), key=lambda t: len(reach[t])):
        if not augment(t, set()):
            return False
    return True


def partition_bound_exact(bounds: Sequence[float], reach: Sequence[Sequence[int]], c_g: float) -> float:
    """Optimum of the reachability-constrained min-max set partition.

    ``bounds[k]`` is the GTSP value of agent k's assigned tasks, ``reach[t]``
    the agents able to perform unassigned task ``t``.  The optimum is one of
    the values ``bounds[k] + c_g * n``; the smallest one admitting a
    capacity-respecting assignment is found by bisection.
    """
    bounds = [float(b) for b in bounds]
    reach = [sorted(set(r)) for r in reach]
    for t, r in enumerate(reach):
        if not r:
            raise InfeasibleError(f"unassigned task #{t} is reachable by no agent")
    top = max(bounds)
    if not reach or c_g == 0:
        return top
    n = len(reach)
    cands = sorted({b + c_g * i for b in bounds for i in range(n + 1) if b + c_g * i >= top})

    def feasible(c):
        caps = [max(0, min(n, int(math.floor((c - b) / c_g + 1e-9)))) for b in bounds]
        return _assignable(reach, caps)

    lo, hi = 0, len(cands) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(cands[mid]):
            hi = mid
        else:
            lo = mid + 1
    return cands[lo]


def partition_bound_milp(bounds: Sequence[float], reach: Sequence[Sequence[int]], c_g: float) -> float:
    """Alias kept for the set-partition model's usual name; no MILP solver is used."""
    return partition_bound_exact(bounds, reach, c_g)


# -- greedy bound ----------------------------------------------------------


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def greedy_fill(d: Sequence, n: int) -> Fraction:
    """Give ``n`` unit tasks, one at a time, to the currently lightest agent."""
    loads = [_frac(x) for x in d]
    for _ in range(n):
        k = min(range(len(loads)), key=lambda i: (loads[i], i))
        loads[k] += 1
    return max(loads)


def closed_form(d: Sequence, n: int) -> Fraction:
    """Closed-form optimum of the unit-task min-max fill."""
    d = [_frac(x) for x in d]
    top = max(d)
    slack = sum(math.floor(top - x) for x in d)
    if n <= slack:
        return top
    n_a = len(d)
    return min(dj + math.ceil(Fraction(n + sum(math.ceil(dk - dj) for dk in d), n_a)) for dj in d)


def partition_bound_greedy(bounds: Sequence[float], n_unassigned: int, c_g: float, check: bool = True) -> float:
    """Reachability-free partition bound, in the units of ``bounds``.

    Loads are normalized by ``c_g`` so each task adds one unit.  With
    ``check`` set, the closed form is compared against the greedy fill; on
    a mismatch the greedy value wins and a warning is logged.
    """
    top = max(float(b) for b in bounds)
    if c_g == 0 or n_unassigned == 0:
        return top
    cg = _frac(c_g)
    d = [_frac(float(b)) / cg for b in bounds]
    cf = closed_form(d, n_unassigned)
    if check:
        gr = greedy_fill(d, n_unassigned)
        if gr != cf:
            log.warning("closed-form fill %s disagrees with greedy %s for d=%s n=%d; using greedy",
                        cf, gr, [float(x) for x in d], n_unassigned)
            cf = gr
    return float(cf * cg)


def lifted_bound(approach: int, bounds: Sequence[float], reach: Sequence[Sequence[int]], c_g: float,
                 exact_cutoff: int = 10, check: bool = False) -> float:
    """Node lower bound for the given approach.

    Approach 1 is ``max(bounds)``.  Approach 2 solves the exact partition
    bound while fewer than ``exact_cutoff`` tasks are open and falls back
    to approach 3's greedy bound otherwise.
    """
    if approach == 1 or not reach:
        return max(bounds)
    if approach == 2 and len(reach) < exact_cutoff:
        return partition_bound_exact(bounds, reach, c_g)
    return partition_bound_greedy(bounds, len(reach), c_g, check=check)
