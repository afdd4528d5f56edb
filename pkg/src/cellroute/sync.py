"""Synchronous re-sequencing of fixed agent loads as a layered GTSP.

A joint state picks one load vertex per agent.  All agents leave a state
together; the transition lasts as long as the slowest mover.  Layer ``k``
holds a copy of every joint state, grouped by agent k's coordinate, so a
GTSP tour covers every load vertex of every agent while joint states (and
therefore single-agent vertices) may repeat.

Transitions are forbidden when the motion they imply meets a conflict:

* two movers whose arcs conflict;
* a mover whose arc conflicts with a stationary agent's vertex;
* a target or source state holding two conflicting vertices;
* a mover that arrives early and waits on a vertex conflicting with a
  slower mover's arc.  Both endpoints are checked so that reversing a cycle
  preserves feasibility.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import gtsp
from .errors import InfeasibleError, InstanceError, SizeLimitError
from .model import (ConflictSet, Instance, ScheduledTour, arc, check_active_conflicts, vertex)

STATE_BUDGET = 200_000


@dataclass
class SyncProblem:
    """Per-agent loads (home vertex first) of an instance."""

    instance: Instance
    loads: list  # loads[k] = vertex indices, loads[k][0] is agent k's home vertex
    conflicts: ConflictSet | None = None

    def __post_init__(self):
        inst = self.instance
        if len(self.loads) != inst.n_agents:
            raise InstanceError("need one load per agent")
        self.loads = [list(dict.fromkeys(int(v) for v in load)) for load in self.loads]
        seen: dict[int, int] = {}
        for k, load in enumerate(self.loads):
            if not load or inst.vertex_task[load[0]] != k:
                raise InstanceError(f"load of agent {inst.agents[k]} must start at its home vertex")
            tasks = [inst.vertex_task[v] for v in load]
            if len(set(tasks)) != len(tasks):
                raise InstanceError(f"load of agent {inst.agents[k]} holds two vertices of one task")
            for v, t in zip(load, tasks):
                if k not in inst.vertex_agents[v]:
                    raise InstanceError(f"vertex {inst.vertex_ids[v]} unavailable to agent {inst.agents[k]}")
                if t in seen and seen[t] != k:
                    raise InstanceError(f"task {inst.tasks[t]} appears in two loads")
                seen[t] = k
        base = inst.conflicts if self.conflicts is None else self.conflicts
        self.conflicts = base.restrict({k: load for k, load in enumerate(self.loads)})

    @classmethod
    def from_tours(cls, instance: Instance, tours, conflicts: ConflictSet | None = None) -> "SyncProblem":
        loads = [[] for _ in range(instance.n_agents)]
        for t in tours:
            loads[t.agent] = list(t.sequence)
        return cls(instance, loads, conflicts)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(load) for load in self.loads)


class SyncCost:
    """Layered-GTSP cost provider; vertex ``layer * n_states + state``."""

    def __init__(self, problem: SyncProblem):
        self.problem = problem
        inst = problem.instance
        cs = problem.conflicts
        loads = problem.loads
        self.shape = problem.shape
        self.n_states = int(np.prod(self.shape))
        self.n_agents = len(loads)
        self.travel = [inst.travel(k)[np.ix_(load, load)].astype(float) for k, load in enumerate(loads)]
        coords = np.indices(self.shape).reshape(self.n_agents, -1)
        self.coords = coords  # coords[k, s] = agent k's load index in state s

        def va(k, a, l, b, b2):
            return b != b2 and cs.conflicts(vertex(k, loads[k][a]), arc(l, loads[l][b], loads[l][b2]))

        self.pair_forbidden = {}
        invalid = np.zeros(self.n_states, dtype=bool)
        for k in range(self.n_agents):
            for l in range(k + 1, self.n_agents):
                nk, nl = self.shape[k], self.shape[l]
                vv = np.zeros((nk, nl), dtype=bool)
                for a in range(nk):
                    for b in range(nl):
                        vv[a, b] = cs.conflicts(vertex(k, loads[k][a]), vertex(l, loads[l][b]))
                invalid |= vv[coords[k], coords[l]]
                F = np.zeros((nk, nk, nl, nl), dtype=bool)
                Tk, Tl = self.travel[k], self.travel[l]
                for a in range(nk):
                    for a2 in range(nk):
                        for b in range(nl):
                            for b2 in range(nl):
                                mk, ml = a != a2, b != b2
                                if mk and ml:
                                    bad = cs.conflicts(arc(k, loads[k][a], loads[k][a2]),
                                                       arc(l, loads[l][b], loads[l][b2]))
                                    if not bad and Tk[a, a2] < Tl[b, b2]:
                                        bad = va(k, a, l, b, b2) or va(k, a2, l, b, b2)
                                    if not bad and Tl[b, b2] < Tk[a, a2]:
                                        bad = va(l, b, k, a, a2) or va(l, b2, k, a, a2)
                                elif mk:
                                    bad = va(l, b, k, a, a2)
                                elif ml:
                                    bad = va(k, a, l, b, b2)
                                else:
                                    bad = False
                                F[a, a2, b, b2] = bad
                self.pair_forbidden[(k, l)] = F
        self.invalid = invalid

    def state_block(self, su, sv) -> np.ndarray:
        su = np.asarray(su, dtype=np.int64)
        sv = np.asarray(sv, dtype=np.int64)
        cu, cv = self.coords[:, su], self.coords[:, sv]
        out = np.zeros((len(su), len(sv)))
        for k in range(self.n_agents):
            out = np.maximum(out, self.travel[k][cu[k][:, None], cv[k][None, :]])
        bad = self.invalid[su][:, None] | self.invalid[sv][None, :]
        for (k, l), F in self.pair_forbidden.items():
            if F.any():
                bad |= F[cu[k][:, None], cv[k][None, :], cu[l][:, None], cv[l][None, :]]
        out[bad] = math.inf
        return out

    def state_pairs(self, su, sv) -> np.ndarray:
        su = np.asarray(su, dtype=np.int64)
        sv = np.asarray(sv, dtype=np.int64)
        cu, cv = self.coords[:, su], self.coords[:, sv]
        out = np.zeros(len(su))
        for k in range(self.n_agents):
            out = np.maximum(out, self.travel[k][cu[k], cv[k]])
        bad = self.invalid[su] | self.invalid[sv]
        for (k, l), F in self.pair_forbidden.items():
            if F.any():
                bad |= F[cu[k], cv[k], cu[l], cv[l]]
        out[bad] = math.inf
        return out

    def block(self, us, vs):
        return self.state_block(np.asarray(us) % self.n_states, np.asarray(vs) % self.n_states)

    def pairs(self, us, vs):
        return self.state_pairs(np.asarray(us) % self.n_states, np.asarray(vs) % self.n_states)

    def cost(self, s, t) -> float:
        return float(self.state_pairs([s], [t])[0])


@dataclass
class LayeredGtsp:
    problem: SyncProblem
    cost: SyncCost
    groups: list  # groups[g] = layered vertex ids
    group_of: list  # (agent, load index) per group

    @property
    def n_vertices(self) -> int:
        return self.cost.n_agents * self.cost.n_states

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def state(self, layered_vertex: int) -> int:
        return int(layered_vertex) % self.cost.n_states

    def to_dict(self) -> dict:
        """Plain-data dump (costs included for small encodings only)."""
        doc = {
            "n_vertices": self.n_vertices,
            "groups": [[int(v) for v in g] for g in self.groups],
            "group_of": [list(x) for x in self.group_of],
            "state_shape": list(self.cost.shape),
        }
        if self.cost.n_states <= 400:
            c = self.cost.state_block(np.arange(self.cost.n_states), np.arange(self.cost.n_states))
            doc["state_cost"] = [[None if not math.isfinite(x) else float(x) for x in row] for row in c]
        return doc


def build_layered_gtsp(problem: SyncProblem, state_budget: int = STATE_BUDGET) -> LayeredGtsp:
    shape = problem.shape
    n_states = int(np.prod(shape))
    n_a = len(shape)
    if n_a * n_states > state_budget:
        raise SizeLimitError(f"{n_a} layers of {n_states} joint states exceed the budget of {state_budget} "
                             "vertices; reduce the per-agent loads")
    cost = SyncCost(problem)
    groups, group_of = [], []
    for k in range(n_a):
        for i in range(shape[k]):
            states = np.flatnonzero(cost.coords[k] == i)
            groups.append(k * n_states + states)
            group_of.append((k, i))
    return LayeredGtsp(problem, cost, groups, group_of)


@dataclass
class SyncSolution:
    problem: SyncProblem
    states: list  # joint states as tuples of vertex indices, starting at the all-home state
    cycle_cost: float
    makespan: float
    projections: dict = field(default_factory=dict)  # agent -> waypoints, closing home included
    exact: bool = False

    def schedule(self) -> list[ScheduledTour]:
        return sync_schedules(self.problem, self.states)


def _collapse_cycle(seq: list) -> list:
    out = []
    for s in seq:
        if not out or out[-1] != s:
            out.append(s)
    while len(out) > 1 and out[-1] == out[0]:
        out.pop()
    return out


def project(solution_or_states, agent: int) -> list[int]:
    """Agent's waypoints along the joint cycle, duplicates collapsed, home appended at the end."""
    states = solution_or_states.states if isinstance(solution_or_states, SyncSolution) else solution_or_states
    seq = [s[agent] for s in states] + [states[0][agent]]
    out = []
    for v in seq:
        if not out or out[-1] != v:
            out.append(v)
    return out


def sync_schedules(problem: SyncProblem, states: Sequence[tuple]) -> list[ScheduledTour]:
    """Synchronous timing of a joint cycle.

    Everyone processes home during ``[0, c_g]``.  Each transition starts
    when the previous one ends; movers leave at once at full speed and
    wait at their target, processing it first when it is a first visit.
    The transition lasts as long as the slowest mover needs.
    """
    inst = problem.instance
    c_g = inst.c_g
    n_a = inst.n_agents
    cyc = list(states) + [states[0]]
    visited = [{inst.vertex_task[states[0][k]]} for k in range(n_a)]
    wps = [[states[0][k]] for k in range(n_a)]
    arr = [[0.0] for _ in range(n_a)]
    lv: list[list[float]] = [[] for _ in range(n_a)]
    t = c_g
    for s, s2 in zip(cyc, cyc[1:]):
        durations = [0.0] * n_a
        moves = []
        for k in range(n_a):
            if s[k] == s2[k]:
                continue
            travel = float(inst.travel(k)[s[k], s2[k]])
            task = inst.vertex_task[s2[k]]
            dwell = 0.0 if task in visited[k] else c_g
            visited[k].add(task)
            durations[k] = travel + dwell
            moves.append((k, travel))
        d = max(durations) if moves else 0.0
        for k, travel in moves:
            lv[k].append(t)
            wps[k].append(s2[k])
            arr[k].append(t + travel)
        t += d
    out = []
    for k in range(n_a):
        lv[k].append(arr[k][-1] if len(wps[k]) > 1 else c_g)
        if len(wps[k]) == 1:
            arr[k][-1] = 0.0
        out.append(ScheduledTour(k, tuple(wps[k]), tuple(arr[k]), tuple(lv[k])))
    return out


def sync_makespan(problem: SyncProblem, states: Sequence[tuple]) -> float:
    return max(s.makespan for s in sync_schedules(problem, states))


def cycle_cost(cost: SyncCost, states_idx: Sequence[int]) -> float:
    s = np.asarray(states_idx, dtype=np.int64)
    if len(s) < 2:
        return 0.0
    return float(cost.state_pairs(s, np.roll(s, -1)).sum())


def _diagnostics(layered: LayeredGtsp) -> list[str]:
    p = layered.problem
    inst = p.instance
    c = layered.cost
    home = int(np.ravel_multi_index(tuple(0 for _ in p.loads), c.shape))
    out = []
    if c.invalid[home]:
        out.append("the all-home joint state holds conflicting vertices")
    out.append(f"{int(c.invalid.sum())} of {c.n_states} joint states hold conflicting vertices")
    allowed = np.isfinite(c.state_block(np.arange(c.n_states), np.arange(c.n_states)))
    np.fill_diagonal(allowed, False)
    out.append(f"{int(allowed.sum()) // 2} allowed joint transitions")
    for a, b in p.conflicts.pairs():
        def name(e):
            vs = "-".join(str(inst.vertex_ids[v]) for v in e[2:])
            return f"{e[0]}({inst.agents[e[1]]}:{vs})"
        out.append(f"conflict {name(a)} / {name(b)}")
    return out


def solve_sync(problem: SyncProblem, seed: int = 0, budget: int = 50, exact_limit: int = gtsp.EXACT_LIMIT,
               state_budget: int = STATE_BUDGET) -> SyncSolution:
    """Best synchronized joint cycle through the all-home state.

    Raises :class:`InfeasibleError` with diagnostics when no conflict-free
    cycle exists in the layered encoding.
    """
    layered = build_layered_gtsp(problem, state_budget)
    c = layered.cost
    home = int(np.ravel_multi_index(tuple(0 for _ in problem.loads), c.shape))
    groups = list(layered.groups)
    groups[0] = np.array([home], dtype=np.int64)  # layer 0, agent 0 at home: anchor the cycle
    gp = gtsp.GtspProblem(groups, c, start_group=0)
    if gp.n_groups <= exact_limit:
        sol = gtsp.solve_exact_dp(gp, exact_limit)
    else:
        sol = gtsp.solve_heuristic(gp, seed=seed, budget=budget)
    if not sol.feasible:
        raise InfeasibleError("no conflict-free synchronized cycle in the layered encoding",
                              diagnostics=_diagnostics(layered))
    idx = _collapse_cycle([layered.state(v) for v in sol.tour])
    r = idx.index(home)
    idx = idx[r:] + idx[:r]
    loads = problem.loads
    states = [tuple(loads[k][int(c.coords[k, s])] for k in range(c.n_agents)) for s in idx]
    value = cycle_cost(c, idx)
    if not math.isfinite(value):
        raise InfeasibleError("decoded cycle uses a forbidden transition", diagnostics=_diagnostics(layered))
    schedules = sync_schedules(problem, states)
    violations = check_active_conflicts(problem.conflicts, schedules)
    if violations:
        raise AssertionError(f"synchronized schedule has active conflicts: {violations[:3]}")
    for k, load in enumerate(loads):
        missing = set(load) - set(s[k] for s in states)
        if missing:
            raise AssertionError(f"agent {k} never visits {sorted(missing)}")
    return SyncSolution(problem, states, value, max(s.makespan for s in schedules),
                        {k: project(states, k) for k in range(c.n_agents)}, exact=sol.exact)
