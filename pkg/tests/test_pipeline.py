import json

import numpy as np
import pytest

from cellroute import pipeline
from cellroute.model import ConflictSet, check_active_conflicts, euclidean_instance


def test_crossing_pipeline_reaches_the_bound(crossing):
    out = pipeline.run_pipeline(crossing.with_conflicts(ConflictSet()))
    rep = out.report
    assert rep["best_makespan"] == pytest.approx(4.0)
    assert rep["lower_bound"] == pytest.approx(4.0)
    assert rep["stop"] == "gap" and rep["iterations"] == 1
    first = rep["per_iteration"][0]
    assert first["smooth_bnb"] == pytest.approx(6.8)
    assert first["sync"] == pytest.approx(6.0) and first["smooth_sync"] == pytest.approx(4.0)
    assert first["improved_by"] == "smooth_sync"
    assert not check_active_conflicts(out.conflicts, out.schedules)
    json.dumps(rep)


@pytest.mark.parametrize("policy", pipeline.REDISTRIBUTE)
def test_policies_agree_on_crossing(crossing, policy):
    out = pipeline.run_pipeline(crossing, config=pipeline.PipelineConfig(redistribute=policy))
    assert out.report["best_makespan"] == pytest.approx(4.0)
    assert out.report["redistribute"] == policy


def diagonal_instance():
    # two agents whose straight tours cross in the middle of the square
    pts = [(0, 0), (10, 0), (10, 10), (0, 10), (5, 9), (5, 1)]
    return euclidean_instance(pts, [0, 1, 2, 3, 4, 5], 2, radius=1.0,
                              vertex_agents=[{0}, {1}, {0}, {1}, {0, 1}, {0, 1}])


def test_iterations_do_not_repeat_assignments():
    out = pipeline.run_pipeline(diagonal_instance(), pipeline.StopCriteria(max_iterations=4, gap=None),
                                pipeline.PipelineConfig(redistribute="always"))
    rep = out.report
    seen = [tuple(r["assignment"]) for r in rep["per_iteration"] if r.get("assignment") and "conflicts" in r]
    assert len(seen) == len(set(seen))
    assert rep["stop"] in ("max_iterations", "bound", "assignments_exhausted")
    assert rep["best_makespan"] >= rep["lower_bound"] - 1e-9
    assert not check_active_conflicts(out.conflicts, out.schedules)


def test_never_policy_stops_after_one_round():
    out = pipeline.run_pipeline(diagonal_instance(), pipeline.StopCriteria(gap=None),
                                pipeline.PipelineConfig(redistribute="never"))
    assert out.report["iterations"] == 1
    assert out.report["stop"] in ("converged", "gap")


def test_schedule_dict_roundtrip(crossing):
    out = pipeline.run_pipeline(crossing)
    doc = pipeline.schedules_to_dict(crossing, out.schedules)
    back = pipeline.schedules_from_dict(crossing, json.loads(json.dumps(doc)))
    assert [s.waypoints for s in back] == [s.waypoints for s in out.schedules]
    assert np.allclose([s.makespan for s in back], [s.makespan for s in out.schedules])


def test_config_validation():
    with pytest.raises(ValueError):
        pipeline.StopCriteria(None, None, None)
    with pytest.raises(ValueError):
        pipeline.PipelineConfig(redistribute="sometimes")
