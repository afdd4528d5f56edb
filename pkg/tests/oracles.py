"""Brute-force references and random instance generators shared by the tests."""
from __future__ import annotations

import itertools
import math

import numpy as np

from cellroute import gtsp, scheduler, sync
from cellroute.model import ConflictSet, check_active_conflicts, euclidean_instance

# criterion number -> (passed, message); filled by test_acceptance, printed by conftest
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, passed: bool, message: str) -> None:
    ACCEPTANCE[n] = (bool(passed), message)


def acceptance_lines() -> list[str]:
    return [f"criterion {n}: {'PASS' if ok else 'FAIL'}  {msg}" for n, (ok, msg) in sorted(ACCEPTANCE.items())]


def brute_gtsp(problem: gtsp.GtspProblem) -> float:
    """Every group order from the start group; for each order the best
    vertex choice (a shortest cycle through the layers, per start vertex)."""
    others = [i for i in range(problem.n_groups) if i != problem.start_group]
    m = problem.cost.matrix
    first = problem.groups[problem.start_group]
    best = math.inf
    for perm in itertools.permutations(others):
        layers = [problem.groups[g] for g in perm]
        for s in first:
            d = np.array([0.0])
            prev = np.array([s])
            for layer in layers:
                d = (d[:, None] + m[np.ix_(prev, layer)]).min(axis=0)
                prev = layer
            best = min(best, float((d + m[prev, s]).min()))
    return best + problem.processing * problem.n_groups


def brute_gtsp_full(problem: gtsp.GtspProblem) -> float:
    """Plain enumeration of orders and vertex choices, for very small cases."""
    others = [i for i in range(problem.n_groups) if i != problem.start_group]
    best = math.inf
    for perm in itertools.permutations(others):
        order = [problem.start_group, *perm]
        for vs in itertools.product(*(problem.groups[g] for g in order)):
            best = min(best, problem.objective(vs))
    return best


def agent_problem(inst, agent: int, tasks) -> gtsp.GtspProblem:
    tasks = sorted(tasks)
    return gtsp.GtspProblem([inst.groups[agent][t] for t in tasks], gtsp.DenseCost(inst.travel(agent)),
                            tasks.index(agent), inst.c_g)


def brute_mgtsp(inst) -> float:
    """Min-max optimum over every assignment of the non-home tasks."""
    n_a, n_g = inst.n_agents, inst.n_tasks
    memo: dict = {}

    def value(k, tasks):
        if (k, tasks) not in memo:
            memo[k, tasks] = brute_gtsp(agent_problem(inst, k, tasks))
        return memo[k, tasks]

    best = math.inf
    for assign in itertools.product(range(n_a), repeat=n_g - n_a):
        owner = list(range(n_a)) + list(assign)
        if any(not inst.reachable(owner[t], t) for t in range(n_g)):
            continue
        worst = max(value(k, tuple(t for t in range(n_g) if owner[t] == k)) for k in range(n_a))
        best = min(best, worst)
    return best


def random_mgtsp(rng, max_tasks=8, max_agents=3, max_group=3, restrict=False, c_g=None):
    n_a = int(rng.integers(1, max_agents + 1))
    n_g = int(rng.integers(n_a, max_tasks + 1))
    vt = []
    for g in range(n_g):
        vt += [g] * int(rng.integers(1, max_group + 1))
    pts = rng.random((len(vt), 2)) * 100
    va = None
    if restrict:
        va = [frozenset(k for k in range(n_a) if rng.random() < 0.7)
              | {vt[v] if vt[v] < n_a else int(rng.integers(n_a))} for v in range(len(vt))]
    if c_g is None:
        c_g = float(rng.integers(0, 3)) * 5
    return euclidean_instance(pts, vt, n_a, c_g=c_g, vertex_agents=va)


def random_gtsp(rng, max_groups=7, max_group=4, processing=0.0) -> gtsp.GtspProblem:
    m = int(rng.integers(2, max_groups + 1))
    sizes = rng.integers(1, max_group + 1, m)
    pts = rng.random((int(sizes.sum()), 2)) * 100
    cost = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    groups = np.split(np.arange(len(pts)), np.cumsum(sizes)[:-1])
    return gtsp.GtspProblem(groups, gtsp.DenseCost(cost), 0, processing)


def random_schedule_problem(rng, max_pairs=6) -> scheduler.SchedulingProblem:
    """Two or three agents with private vertices and random conflict pairs."""
    n_a = int(rng.integers(2, 4))
    vt = list(range(n_a))
    va = [{k} for k in range(n_a)]
    wps = []
    nxt = n_a
    for k in range(n_a):
        m = int(rng.integers(1, 4))
        vs = list(range(nxt, nxt + m))
        nxt += m
        vt += vs
        va += [{k}] * m
        wps.append([k, *vs, k])
    pts = rng.random((len(vt), 2)) * 10
    inst = euclidean_instance(pts, vt, n_a, c_g=float(rng.integers(0, 2)), vertex_agents=va)
    elements = [o.element for o in scheduler.SchedulingProblem(inst, wps, ConflictSet()).occupancies]
    target = int(rng.integers(0, max_pairs + 1))
    pairs: set = set()
    while len(pairs) < target:
        a, b = elements[rng.integers(len(elements))], elements[rng.integers(len(elements))]
        if a[1] != b[1]:
            pairs.add((a, b))
    return scheduler.SchedulingProblem(inst, wps, ConflictSet(pairs))


def brute_sync_no_revisit(problem: sync.SyncProblem, routes) -> float:
    """Best conflict-free lock-step schedule in which every agent follows its
    route (home, tasks, home) without revisits; each step advances a nonempty
    subset of agents by one position."""
    n_a = len(routes)
    ends = tuple(len(r) - 1 for r in routes)
    best = math.inf

    def extend(pos, states):
        nonlocal best
        if pos == ends:
            sch = sync.sync_schedules(problem, states)
            if not check_active_conflicts(problem.conflicts, sch):
                best = min(best, max(s.makespan for s in sch))
            return
        movable = [k for k in range(n_a) if pos[k] < ends[k]]
        for r in range(1, len(movable) + 1):
            for movers in itertools.combinations(movable, r):
                nxt = tuple(p + (k in movers) for k, p in enumerate(pos))
                state = tuple(routes[k][nxt[k]] for k in range(n_a))
                extend(nxt, states if nxt == ends else states + [state])

    extend(tuple(0 for _ in routes), [tuple(r[0] for r in routes)])
    return best
