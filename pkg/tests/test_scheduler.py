import math

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

import oracles
from cellroute import InfeasibleError, InstanceError, scheduler
from cellroute.model import ConflictSet, ExplicitCost, Instance, arc, check_active_conflicts, vertex


def milp_makespan(sp: scheduler.SchedulingProblem) -> float:
    """Big-M formulation: leave times, makespan, one binary per conflict pair."""
    n, p = sp.n_nodes, len(sp.pairs)
    z = n
    nv = n + 1 + p
    big = scheduler.big_m(sp)
    rows, lo = [], []

    def row():
        r = np.zeros(nv)
        rows.append(r)
        return r

    for u, v, w in sp.base_edges():  # L_v - L_u >= w
        r = row()
        r[v] += 1
        r[u] -= 1
        lo.append(w)
    for k, w in enumerate(sp.waypoints):
        r = row()
        r[z] = 1
        r[sp.node(k, len(w) - 1)] -= 1
        lo.append(0.0)
    for j, (a, b) in enumerate(sp.pairs):
        # y=0: end(a) <= start(b);  y=1: end(b) <= start(a)
        for first, second, sign in ((a, b, 1), (b, a, -1)):
            (u, ou), (v, ov) = first.end, second.start
            r = row()
            r[v] += 1
            r[u] -= 1
            r[n + 1 + j] = big if sign == 1 else -big
            lo.append(ou - ov - (0 if sign == 1 else big))
    c = np.zeros(nv)
    c[z] = 1
    A = np.array(rows)
    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    ub[0] = 0.0
    ub[n + 1:] = 1
    integrality = np.zeros(nv)
    integrality[n + 1:] = 1
    res = milp(c, constraints=LinearConstraint(A, np.array(lo), np.inf), bounds=Bounds(lb, ub),
               integrality=integrality)
    return float(res.fun) if res.success else math.inf


def test_branch_and_bound_matches_enumeration_and_milp():
    rng = np.random.default_rng(40)
    for _ in range(60):
        sp = oracles.random_schedule_problem(rng)
        ref = scheduler.enumerate_orientations(sp)
        mip = milp_makespan(sp)
        if math.isinf(ref):
            assert math.isinf(mip)
            with pytest.raises(InfeasibleError):
                scheduler.schedule(sp)
            continue
        assert mip == pytest.approx(ref, abs=1e-6)
        res = scheduler.schedule(sp)
        assert res.optimal and res.makespan == pytest.approx(ref, abs=1e-9)
        assert not check_active_conflicts(sp.conflicts, res.schedules)
        for s in res.schedules:
            s.validate(sp.instance)


def triangle_instance(c_g=0.0):
    # per agent: home h, then a and b; h-a = 1, a-b = 0.5, b-h = 0.5
    m = np.zeros((6, 6))
    for h, a, b in ((0, 2, 3), (1, 4, 5)):
        m[h, a] = m[a, h] = 1.0
        m[a, b] = m[b, a] = 0.5
        m[b, h] = m[h, b] = 0.5
    m[m == 0] = 10.0
    np.fill_diagonal(m, c_g)
    return Instance(("a1", "a2"), ("h1", "h2", "g3", "g4", "g5", "g6"), tuple(range(6)), tuple(range(6)),
                    ({0}, {1}, {0}, {0}, {1}, {1}), ExplicitCost([m, m], c_g),
                    ConflictSet([(arc(0, 0, 2), arc(1, 1, 4))]))


def test_conflicting_first_arcs_cost_one_unit_of_waiting():
    inst = triangle_instance()
    sp = scheduler.SchedulingProblem(inst, [[0, 2, 3, 0], [1, 4, 5, 1]])
    res = scheduler.schedule(sp)
    assert res.makespan == pytest.approx(3.0)
    assert sorted(s.makespan for s in res.schedules) == [2.0, 3.0]


def test_out_and_back_tours_share_the_conflicting_arc():
    inst = triangle_instance()
    sp = scheduler.SchedulingProblem(inst, [[0, 2, 0], [1, 4, 1]])
    assert scheduler.schedule(sp).makespan == pytest.approx(4.0)


def test_initial_schedule_seeds_incumbent_and_limits():
    rng = np.random.default_rng(41)
    for _ in range(20):
        sp = oracles.random_schedule_problem(rng)
        try:
            full = scheduler.schedule(sp)
        except InfeasibleError:
            continue
        again = scheduler.schedule(sp, initial=full.schedules)
        assert again.makespan == pytest.approx(full.makespan)
        cut = scheduler.schedule(sp, node_limit=1, initial=full.schedules)
        assert cut.lower_bound <= full.makespan + 1e-9


def test_conflicting_initial_schedule_is_rejected():
    inst = triangle_instance()
    sp = scheduler.SchedulingProblem(inst, [[0, 2, 3, 0], [1, 4, 5, 1]])
    from cellroute.model import earliest_schedule

    naive = [earliest_schedule(inst, 0, [0, 2, 3, 0]), earliest_schedule(inst, 1, [1, 4, 5, 1])]
    with pytest.raises(ValueError):
        scheduler.schedule(sp, initial=naive)


def test_conflicting_homes():
    homes = ConflictSet([(vertex(0, 0), vertex(1, 1))])
    wps = [[0, 2, 3, 0], [1, 4, 5, 1]]
    # both agents process their homes at time 0
    with pytest.raises(InfeasibleError):
        scheduler.schedule(scheduler.SchedulingProblem(triangle_instance(1.0).with_conflicts(homes), wps))
    # without processing the home stays are instants, which never overlap
    res = scheduler.schedule(scheduler.SchedulingProblem(triangle_instance().with_conflicts(homes), wps))
    assert res.makespan == pytest.approx(2.0)


def test_waypoint_validation():
    inst = triangle_instance()
    with pytest.raises(InstanceError):
        scheduler.SchedulingProblem(inst, [[2, 0, 2], [1, 4, 1]])
    with pytest.raises(InstanceError):
        scheduler.SchedulingProblem(inst, [[0, 2, 2, 0], [1, 4, 1]])
