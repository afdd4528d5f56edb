"""Iterative lazy optimization.

Each iteration: conflict-blind branch and bound, straight-line paths,
corridor conflict detection, then two coordination variants on the same
loads (time the B&B tours directly, or re-sequence synchronously and then
smooth).  The better conflict-free schedule is kept.  Later iterations
exclude the assignments already tried and stop as soon as the next
conflict-blind optimum can no longer beat the best schedule found.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from . import bnb, scheduler, sync
from .errors import InfeasibleError, SizeLimitError
from .geometry import DiscWorld, detect_conflicts
from .model import ConflictSet, Instance, ScheduledTour, Tour, check_active_conflicts

REDISTRIBUTE = ("when_infeasible", "always", "never")


@dataclass
class StopCriteria:
    max_iterations: int | None = 10
    max_time: float | None = None
    gap: float | None = 0.01

    def __post_init__(self):
        if self.max_iterations is None and self.max_time is None and self.gap is None:
            raise ValueError("at least one stop criterion must be finite")


@dataclass
class PipelineConfig:
    approach: int = 3
    seed: int = 0
    redistribute: str = "when_infeasible"
    radius: float | None = None
    bnb_node_limit: int | None = None
    bnb_time_limit: float | None = None
    schedule_node_limit: int | None = 20_000
    sync_budget: int = 50
    state_budget: int = sync.STATE_BUDGET

    def __post_init__(self):
        if self.redistribute not in REDISTRIBUTE:
            raise ValueError(f"redistribute must be one of {REDISTRIBUTE}")


@dataclass
class PipelineState:
    iteration: int = 0
    conflicts: ConflictSet = field(default_factory=ConflictSet)
    best: list | None = None
    best_makespan: float = math.inf
    lower_bound: float | None = None
    tried: set = field(default_factory=set)

    @property
    def gap(self) -> float | None:
        if self.best is None or self.lower_bound is None:
            return None
        if self.lower_bound <= 0:
            return 0.0 if self.best_makespan <= 0 else math.inf
        return max(0.0, (self.best_makespan - self.lower_bound) / self.lower_bound)


@dataclass
class PipelineResult:
    report: dict
    schedules: list | None
    conflicts: ConflictSet


def plan_paths(instance: Instance, tours: list[Tour]) -> list[Tour]:
    """Path-planning stage: straight segments, so tours pass through unchanged."""
    return tours


def find_conflicts(instance: Instance, tours: list[Tour], radius: float | None) -> ConflictSet:
    found = instance.conflicts
    r = radius if radius is not None else instance.radius
    if r is not None and instance.coords is not None:
        found = found.union(detect_conflicts(DiscWorld(instance.coords, r), instance, tours))
    return found


def _coordinate(instance, tours, conflicts, cfg: PipelineConfig, record: dict):
    """Both coordination variants; returns ``[(makespan, schedules, label)]`` for the feasible ones."""
    out = []
    try:
        res = scheduler.schedule_tours(instance, tours, conflicts, node_limit=cfg.schedule_node_limit)
        record["smooth_bnb"] = res.makespan
        out.append((res.makespan, res.schedules, "smooth_bnb"))
    except InfeasibleError as exc:
        record["smooth_bnb"] = None
        record.setdefault("notes", []).append(f"smooth_bnb: {exc}")
    try:
        sp = sync.SyncProblem.from_tours(instance, tours, conflicts)
        sol = sync.solve_sync(sp, seed=cfg.seed, budget=cfg.sync_budget, state_budget=cfg.state_budget)
        record["sync"] = sol.makespan
        res = scheduler.smooth_sync(sol, node_limit=cfg.schedule_node_limit)
        record["smooth_sync"] = res.makespan
        out.append((res.makespan, res.schedules, "smooth_sync"))
    except (InfeasibleError, SizeLimitError) as exc:
        record["sync"] = record["smooth_sync"] = None
        record["sync_feasible"] = False
        record.setdefault("notes", []).append(f"sync: {exc}")
        if isinstance(exc, InfeasibleError) and exc.diagnostics:
            record["sync_diagnostics"] = exc.diagnostics
    else:
        record["sync_feasible"] = True
    return out


def schedules_to_dict(instance: Instance, schedules: list[ScheduledTour]) -> dict:
    return {
        instance.agents[s.agent]: [[instance.vertex_ids[v], a, l] for v, a, l in zip(s.waypoints, s.arrive, s.leave)]
        for s in schedules
    }


def schedules_from_dict(instance: Instance, doc: dict) -> list[ScheduledTour]:
    out = []
    for k, name in enumerate(instance.agents):
        rows = doc[name]
        out.append(ScheduledTour(k, tuple(instance.index_of[int(r[0])] for r in rows),
                                 tuple(float(r[1]) for r in rows), tuple(float(r[2]) for r in rows)))
    return out


def run_pipeline(instance: Instance, criteria: StopCriteria | None = None,
                 config: PipelineConfig | None = None) -> PipelineResult:
    criteria = criteria or StopCriteria()
    cfg = config or PipelineConfig()
    st = PipelineState(conflicts=instance.conflicts)
    t0 = time.perf_counter()
    per_iteration = []
    stop = "max_iterations"
    while True:
        st.iteration += 1
        bcfg = bnb.BnbConfig(approach=cfg.approach, seed=cfg.seed, node_limit=cfg.bnb_node_limit,
                             time_limit=cfg.bnb_time_limit, nogoods=frozenset(st.tried))
        record: dict = {"iteration": st.iteration}
        try:
            res = bnb.solve(instance, bcfg)
        except InfeasibleError as exc:
            if st.iteration == 1:
                raise
            record["bnb"] = None
            record["notes"] = [f"bnb: {exc}"]
            per_iteration.append(record)
            stop = "assignments_exhausted"
            break
        if st.iteration == 1:
            st.lower_bound = res.lower_bound
        record.update(bnb=res.makespan, bnb_optimal=res.optimal, bnb_nodes=res.stats.nodes,
                      assignment=[instance.agents[a] for a in res.assignment])
        if res.lower_bound >= st.best_makespan - 1e-9:
            record["notes"] = ["next conflict-blind optimum cannot beat the best schedule"]
            per_iteration.append(record)
            stop = "bound"
            break
        st.tried.add(res.assignment)
        tours = plan_paths(instance, res.tours)
        st.conflicts = st.conflicts.union(find_conflicts(instance, tours, cfg.radius))
        record["conflicts"] = len(st.conflicts)
        candidates = _coordinate(instance, tours, st.conflicts, cfg, record)
        for value, schedules, label in sorted(candidates, key=lambda c: (c[0], c[2])):
            if check_active_conflicts(st.conflicts, schedules):
                raise AssertionError(f"{label} produced an infeasible schedule")
            if value < st.best_makespan - 1e-9:
                st.best_makespan, st.best = value, schedules
                record["improved_by"] = label
            break
        record["best"] = None if st.best is None else st.best_makespan
        record["gap"] = st.gap
        per_iteration.append(record)
        if criteria.gap is not None and st.gap is not None and st.gap <= criteria.gap + 1e-12:
            stop = "gap"
            break
        if criteria.max_iterations is not None and st.iteration >= criteria.max_iterations:
            stop = "max_iterations"
            break
        if criteria.max_time is not None and time.perf_counter() - t0 > criteria.max_time:
            stop = "max_time"
            break
        redistribute = cfg.redistribute == "always" or (
            cfg.redistribute == "when_infeasible" and not record.get("sync_feasible", False))
        if not redistribute:
            # loads stay frozen; with straight-line paths nothing else changes
            stop = "converged"
            break
    report = {
        "instance": instance.name,
        "iterations": st.iteration,
        "best_makespan": None if st.best is None else st.best_makespan,
        "lower_bound": st.lower_bound,
        "gap": st.gap,
        "stop": stop,
        "per_iteration": per_iteration,
        "seed": cfg.seed,
        "workers": 1,
        "approach": cfg.approach,
        "redistribute": cfg.redistribute,
        "c_g": instance.c_g,
        "n_agents": instance.n_agents,
    }
    if st.best is not None:
        report["schedule"] = schedules_to_dict(instance, st.best)
    return PipelineResult(report, st.best, st.conflicts)
