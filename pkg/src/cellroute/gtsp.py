"""Single-agent generalized TSP: exact subset DP and construct-and-improve search.

Forbidden arcs carry the cost ``FORBIDDEN`` (``math.inf``), so an
infeasible tour is recognized exactly instead of through a large penalty.
Cost providers expose two vectorized lookups::

    cost.block(us, vs) -> array of shape (len(us), len(vs))
    cost.pairs(us, vs) -> array of shape (len(us),)   # elementwise
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InstanceError, SizeLimitError

FORBIDDEN = math.inf
EXACT_LIMIT = 14
EPS = 1e-9


class DenseCost:
    """Cost provider backed by a full matrix."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def block(self, us, vs):
        return self.matrix[np.ix_(np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64))]

    def pairs(self, us, vs):
        return self.matrix[np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64)]


@dataclass
class GtspProblem:
    groups: list
    cost: object
    start_group: int = 0
    processing: float = 0.0

    def __post_init__(self):
        self.groups = [np.unique(np.asarray(g, dtype=np.int64)) for g in self.groups]
        if not self.groups or any(len(g) == 0 for g in self.groups):
            raise InstanceError("GTSP groups must be nonempty")
        if not 0 <= self.start_group < len(self.groups):
            raise InstanceError("start group out of range")
        allv = np.concatenate(self.groups)
        if len(np.unique(allv)) != len(allv):
            raise InstanceError("GTSP groups must be pairwise disjoint")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def group_index(self) -> dict[int, int]:
        return {int(v): i for i, g in enumerate(self.groups) for v in g}

    def cycle_travel(self, tour: Sequence[int]) -> float:
        t = np.asarray(tour, dtype=np.int64)
        if len(t) < 2:
            return 0.0
        return float(self.cost.pairs(t, np.roll(t, -1)).sum())

    def objective(self, tour: Sequence[int]) -> float:
        return self.cycle_travel(tour) + self.processing * len(tour)


@dataclass
class GtspSolution:
    tour: tuple[int, ...]
    objective: float
    exact: bool
    feasible: bool = True
    history: list = field(default_factory=list)

    @classmethod
    def infeasible(cls, exact: bool) -> "GtspSolution":
        return cls((), FORBIDDEN, exact, feasible=False)


def _rotate_to_start(problem: GtspProblem, tour: list[int]) -> tuple[int, ...]:
    start = set(problem.groups[problem.start_group].tolist())
    for i, v in enumerate(tour):
        if v in start:
            return tuple(tour[i:] + tour[:i])
    return tuple(tour)


def check_solution(problem: GtspProblem, sol: GtspSolution, tol: float = 1e-6) -> None:
    """Raise AssertionError unless ``sol`` visits every group exactly once at its stated cost."""
    if not sol.feasible:
        return
    gi = problem.group_index()
    seen = sorted(gi[v] for v in sol.tour)
    assert seen == list(range(problem.n_groups)), "tour does not visit each group once"
    assert abs(problem.objective(sol.tour) - sol.objective) <= tol * max(1.0, abs(sol.objective))


# -- exact -----------------------------------------------------------------


def solve_exact_dp(problem: GtspProblem, limit: int = EXACT_LIMIT) -> GtspSolution:
    """Held-Karp over (visited groups, last vertex), once per start vertex.

    The start vertices of the start group are handled together as the
    leading axis of the DP table.
    """
    m = problem.n_groups
    if m > limit:
        raise SizeLimitError(f"{m} groups exceed the exact DP limit of {limit}")
    cost = problem.cost
    S = problem.groups[problem.start_group]
    if m == 1:
        return GtspSolution((int(S[0]),), problem.processing, exact=True)

    others = [g for i, g in enumerate(problem.groups) if i != problem.start_group]
    r = len(others)
    allv = np.concatenate(others)
    owner = np.concatenate([np.full(len(g), j) for j, g in enumerate(others)])
    cols = [np.flatnonzero(owner == j) for j in range(r)]
    c_sv = cost.block(S, allv)
    c_vv = cost.block(allv, allv)
    c_vs = cost.block(allv, S)
    n_s, n = len(S), len(allv)

    dp = np.full((1 << r, n_s, n), np.inf)
    par = np.full((1 << r, n_s, n), -1, dtype=np.int32)
    for j in range(r):
        dp[1 << j][:, cols[j]] = c_sv[:, cols[j]]

    member_cols = [None] * (1 << r)
    for mask in range(1, 1 << r):
        low = mask & -mask
        j = low.bit_length() - 1
        rest = member_cols[mask ^ low]
        member_cols[mask] = cols[j] if rest is None else np.concatenate([rest, cols[j]])

    for mask in range(1, (1 << r) - 1):
        mc = member_cols[mask]
        sub = dp[mask][:, mc]
        if not np.isfinite(sub).any():
            continue
        tot = sub[:, :, None] + c_vv[mc][None, :, :]
        arg = tot.argmin(axis=1)
        best = np.take_along_axis(tot, arg[:, None, :], axis=1)[:, 0, :]
        for j in range(r):
            if mask >> j & 1:
                continue
            tgt = mask | (1 << j)
            cj = cols[j]
            cand = best[:, cj]
            better = cand < dp[tgt][:, cj]
            if better.any():
                dp[tgt][:, cj] = np.where(better, cand, dp[tgt][:, cj])
                par[tgt][:, cj] = np.where(better, mc[arg[:, cj]], par[tgt][:, cj])

    full = (1 << r) - 1
    close = dp[full] + c_vs.T
    flat = int(np.argmin(close))
    s_i, v_i = divmod(flat, n)
    travel = close[s_i, v_i]
    if not math.isfinite(travel):
        return GtspSolution.infeasible(exact=True)
    seq = []
    mask = full
    while v_i >= 0:
        seq.append(int(allv[v_i]))
        prev = int(par[mask][s_i, v_i])
        mask ^= 1 << int(owner[v_i])
        v_i = prev
    tour = [int(S[s_i])] + seq[::-1]
    return GtspSolution(tuple(tour), float(travel) + problem.processing * m, exact=True)


# -- heuristic -------------------------------------------------------------


def _construct(problem: GtspProblem, rng, randomize: bool):
    """Nearest-group insertion; returns None when some group cannot be inserted finitely."""
    cost = problem.cost
    S = problem.groups[problem.start_group]
    v0 = int(S[rng.integers(len(S))]) if randomize else int(S[0])
    tour = [v0]
    left = [i for i in range(problem.n_groups) if i != problem.start_group]
    while left:
        t = np.asarray(tour)
        nearest = []
        for gi in left:
            d = cost.block(t, problem.groups[gi])
            nearest.append(d.min())
        order = np.argsort(np.asarray(nearest), kind="stable")
        if randomize and len(order) > 1:
            k = min(3, len(order))
            order = np.concatenate([[order[rng.integers(k)]], order])
        placed = False
        for oi in order:
            gi = left[int(oi)]
            pos, v, _ = _best_insertion(cost, t, problem.groups[gi])
            if pos is not None:
                tour.insert(pos + 1, v)
                left.remove(gi)
                placed = True
                break
        if not placed:
            return None
    return tour


def _best_insertion(cost, t: np.ndarray, group: np.ndarray):
    """Cheapest finite insertion of one vertex of ``group`` into the cycle ``t``."""
    if len(t) == 1:
        d = cost.block(t, group)[0] + cost.block(group, t)[:, 0]
        j = int(np.argmin(d))
        if not math.isfinite(d[j]):
            return None, None, FORBIDDEN
        return 0, int(group[j]), float(d[j])
    nxt = np.roll(t, -1)
    edge = cost.pairs(t, nxt)
    ins = cost.block(t, group) + cost.block(nxt, group) - edge[:, None]
    flat = int(np.argmin(ins))
    q, j = divmod(flat, len(group))
    if not math.isfinite(ins[q, j]):
        return None, None, FORBIDDEN
    return q, int(group[j]), float(ins[q, j])


def _two_opt(cost, tour: list[int]) -> bool:
    n = len(tour)
    if n < 4:
        return False
    changed = False
    improved = True
    while improved:
        improved = False
        t = np.asarray(tour)
        nxt = np.roll(t, -1)
        edge = cost.pairs(t, nxt)
        for i in range(n - 2):
            js = np.arange(i + 2, n if i > 0 else n - 1)
            if len(js) == 0:
                continue
            new = cost.block([t[i]], t[js])[0] + cost.block([nxt[i]], nxt[js])[0]
            delta = new - edge[i] - edge[js]
            j = int(np.argmin(delta))
            if delta[j] < -EPS:
                jj = int(js[j])
                tour[i + 1:jj + 1] = tour[i + 1:jj + 1][::-1]
                improved = changed = True
                break
    return changed


def _reinsert(problem: GtspProblem, tour: list[int]) -> bool:
    """Move one group to its best position, re-choosing its vertex."""
    cost = problem.cost
    gi = problem.group_index()
    n = len(tour)
    if n < 3:
        return False
    changed = False
    p = 0
    while p < n:
        t = np.asarray(tour)
        x = tour[p]
        g = problem.groups[gi[x]]
        prev, nxt = tour[p - 1], tour[(p + 1) % n]
        old = cost.block([prev], [x])[0, 0] + cost.block([x], [nxt])[0, 0]
        # same slot, different vertex
        same = cost.block([prev], g)[0] + cost.block(g, [nxt])[:, 0] - old
        # another slot
        red = np.delete(t, p)
        rn = np.roll(red, -1)
        close_gap = cost.block([prev], [nxt])[0, 0] - old
        with np.errstate(invalid="ignore"):
            ins = cost.block(red, g) + cost.block(rn, g) - cost.pairs(red, rn)[:, None]
        # slot p-1 of ``red`` is the (prev, nxt) gap itself, possibly inf - inf
        ins[(p - 1) % len(red), :] = np.inf
        best_same = float(same.min())
        best_other = close_gap + float(ins.min()) if math.isfinite(close_gap) else math.inf
        if best_same < -EPS and best_same <= best_other:
            tour[p] = int(g[int(np.argmin(same))])
            changed = True
            continue
        if best_other < -EPS:
            q, j = divmod(int(np.argmin(ins)), len(g))
            red_list = red.tolist()
            red_list.insert(q + 1, int(g[j]))
            tour[:] = red_list
            changed = True
            p = 0
            continue
        p += 1
    return changed


def reselect_vertices(problem: GtspProblem, order: Sequence[int], tour: Sequence[int] | None = None,
                      work_limit: int = 20_000_000) -> tuple[list[int], float]:
    """Optimal vertex per group for a fixed cyclic group order (shortest path DP).

    All vertices of the smallest group are tried as anchor when the work
    estimate allows; otherwise the anchor stays at the vertex ``tour``
    currently uses there, which still never returns a worse tour.
    """
    cost = problem.cost
    groups = [problem.groups[i] for i in order]
    m = len(groups)
    if m == 1:
        return [int(groups[0][0])], 0.0
    a = int(np.argmin([len(g) for g in groups]))
    groups = groups[a:] + groups[:a]
    anchors = groups[0]
    sizes = [len(g) for g in groups]
    work = len(anchors) * sum(sizes[i] * sizes[(i + 1) % m] for i in range(m))
    if work > work_limit and tour is not None:
        cur = set(int(v) for v in tour)
        anchors = np.array([v for v in anchors if int(v) in cur][:1], dtype=np.int64)
    dist = cost.block(anchors, groups[1])
    back = []
    for i in range(1, m - 1):
        tot = dist[:, :, None] + cost.block(groups[i], groups[i + 1])[None, :, :]
        arg = tot.argmin(axis=1)
        back.append(arg)
        dist = np.take_along_axis(tot, arg[:, None, :], axis=1)[:, 0, :]
    close = dist + cost.block(groups[m - 1], anchors).T
    s_i, v_i = divmod(int(np.argmin(close)), close.shape[1])
    best = float(close[s_i, v_i])
    picks = [v_i]
    for arg in reversed(back):
        picks.append(int(arg[s_i, picks[-1]]))
    picks.reverse()
    out = [int(anchors[s_i])] + [int(groups[i + 1][picks[i]]) for i in range(m - 1)]
    return out, best


def _cluster_opt(problem: GtspProblem, tour: list[int]) -> bool:
    gi = problem.group_index()
    order = [gi[v] for v in tour]
    new, val = reselect_vertices(problem, order, tour)
    if val < problem.cycle_travel(tour) - EPS:
        tour[:] = new
        return True
    return False


def _improve(problem: GtspProblem, tour: list[int], budget: int, history: list) -> list[int]:
    val = problem.objective(tour)
    history.append(val)
    for _ in range(budget):
        a = _two_opt(problem.cost, tour)
        b = _reinsert(problem, tour)
        c = _cluster_opt(problem, tour)
        new = problem.objective(tour)
        assert new <= val + 1e-7 * max(1.0, abs(val)), "local search increased the objective"
        history.append(new)
        val = new
        if not (a or b or c):
            break
    return tour


def solve_heuristic(problem: GtspProblem, seed: int = 0, budget: int = 50, restarts: int = 3) -> GtspSolution:
    """Nearest-group insertion followed by 2-opt, group re-insertion and
    vertex re-selection sweeps.  ``budget`` bounds the sweeps per start;
    failed constructions are retried from other start vertices, also
    within ``budget`` attempts.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    best, best_val, best_hist = None, math.inf, []
    attempts = 0
    starts = 0
    while starts < restarts and attempts < budget + restarts:
        attempts += 1
        tour = _construct(problem, rng, randomize=attempts > 1)
        if tour is None:
            continue
        starts += 1
        hist: list = []
        tour = _improve(problem, tour, budget, hist)
        val = problem.objective(tour)
        if val < best_val - EPS:
            best, best_val, best_hist = list(tour), val, hist
    if best is None:
        return GtspSolution.infeasible(exact=False)
    return GtspSolution(_rotate_to_start(problem, best), best_val, exact=False, history=best_hist)


def solve(problem: GtspProblem, exact_limit: int = EXACT_LIMIT, seed: int = 0, budget: int = 50) -> GtspSolution:
    """Exact DP when the group count allows, heuristic otherwise."""
    if problem.n_groups <= exact_limit:
        return solve_exact_dp(problem, exact_limit)
    return solve_heuristic(problem, seed=seed, budget=budget)
