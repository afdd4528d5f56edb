import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellroute import InstanceError, data_path
from cellroute.geometry import (DiscWorld, chebyshev_time, detect_conflicts, farthest_point_clusters, ingest_tsplib,
                                point_segment_distance, read_tsplib, render_svg, segment_distance,
                                segments_intersect, write_tsplib)
from cellroute.model import Tour, arc, euclidean_instance, vertex

joint = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3)
point = st.tuples(st.floats(-10, 10, allow_nan=False), st.floats(-10, 10, allow_nan=False))


@settings(max_examples=200, deadline=None)
@given(joint, joint, joint)
def test_chebyshev_time_is_a_metric(a, b, c):
    w = [1.0, 0.5, 2.0]
    assert chebyshev_time(a, c, w) <= chebyshev_time(a, b, w) + chebyshev_time(b, c, w) + 1e-9
    assert chebyshev_time(a, b, w) == pytest.approx(chebyshev_time(b, a, w))
    assert chebyshev_time(a, a, w) == 0.0


def test_chebyshev_time_checks_input():
    assert chebyshev_time([0, 0], [2, 1], [1, 0.25]) == 4.0
    with pytest.raises(ValueError):
        chebyshev_time([0], [1], [0])
    with pytest.raises(ValueError):
        chebyshev_time([0, 1], [1], [1])


@settings(max_examples=200, deadline=None)
@given(point, point, point, point)
def test_segment_distance_properties(a, b, c, d):
    dist = segment_distance(a, b, c, d)
    assert dist == pytest.approx(segment_distance(c, d, a, b))
    assert dist <= point_segment_distance(a, c, d) + 1e-9
    # sample both segments densely: the true distance is never larger than the samples
    t = np.linspace(0, 1, 41)[:, None]
    p = np.asarray(a) + t * (np.asarray(b) - np.asarray(a))
    q = np.asarray(c) + t * (np.asarray(d) - np.asarray(c))
    sampled = np.sqrt(((p[:, None] - q[None]) ** 2).sum(-1)).min()
    assert dist <= sampled + 1e-9


def test_segment_intersection_cases():
    assert segments_intersect((0, 0), (2, 2), (0, 2), (2, 0))
    assert not segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))
    assert segments_intersect((0, 0), (2, 0), (1, 0), (3, 0))  # collinear overlap
    assert segment_distance((0, 0), (1, 0), (0, 1), (1, 1)) == pytest.approx(1.0)
    assert point_segment_distance((5, 0), (0, 0), (0, 0)) == 5.0


def test_detect_conflicts_disc_threshold():
    # a1 home (0,0), task (4,0); a2 home (2,1), task (2,3); corridor width 2r
    pts = [(0, 0), (2, 1), (4, 0), (2, 3)]
    inst = euclidean_instance(pts, [0, 1, 2, 3], 2, vertex_agents=[{0}, {1}, {0}, {1}])
    loads = {0: [0, 2], 1: [1, 3]}
    assert not detect_conflicts(DiscWorld(inst.coords, 0.45), inst, loads)
    cs = detect_conflicts(DiscWorld(inst.coords, 0.55), inst, loads)
    assert cs.conflicts(arc(0, 0, 2), vertex(1, 1))
    assert cs.conflicts(arc(0, 0, 2), arc(1, 1, 3))
    assert not cs.conflicts(vertex(0, 0), vertex(1, 1))
    # tours give the same loads
    assert detect_conflicts(DiscWorld(inst.coords, 0.55), inst, [Tour(0, [0, 2]), Tour(1, [1, 3])]) == cs


def test_disc_world_validation(crossing):
    with pytest.raises(InstanceError):
        DiscWorld(np.zeros((2, 2)), 0.0)
    assert DiscWorld.of(crossing).radius == 0.15
    with pytest.raises(InstanceError):
        DiscWorld.of(euclidean_instance([(0, 0)], [0], 1))


def test_crossing_fixture_conflicts_come_from_geometry(crossing):
    ix = crossing.index_of
    cs = detect_conflicts(DiscWorld.of(crossing), crossing, {0: [ix[1], ix[3]], 1: [ix[2], ix[4], ix[5]]})
    assert cs == crossing.conflicts


def test_tsplib_roundtrip(tmp_path):
    name, coords = read_tsplib(data_path("eil51.tsp"))
    assert name == "eil51" and coords.shape == (51, 2)
    assert tuple(coords[0]) == (37.0, 52.0)
    out = tmp_path / "x.tsp"
    write_tsplib(out, "x", coords[:5])
    assert np.array_equal(read_tsplib(out)[1], coords[:5])
    assert read_tsplib(data_path("st70.tsp"))[1].shape == (70, 2)


def test_tsplib_errors(tmp_path):
    bad = tmp_path / "bad.tsp"
    bad.write_text("NAME : bad\nEDGE_WEIGHT_TYPE : GEO\nNODE_COORD_SECTION\n1 0 0\nEOF\n")
    with pytest.raises(InstanceError, match="GEO"):
        read_tsplib(bad)
    bad.write_text("NAME : bad\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0\nEOF\n")
    with pytest.raises(InstanceError, match="bad.tsp:4"):
        read_tsplib(bad)


def test_clustering_and_ingest():
    pts = np.array([(0, 0), (0, 1), (10, 0), (10, 1), (5, 10)], dtype=float)
    labels, centers = farthest_point_clusters(pts, 3)
    assert centers[0] == 0 and len(set(centers)) == 3
    assert labels[0] == labels[1] and labels[2] == labels[3] and len(set(labels)) == 3
    inst = ingest_tsplib(data_path("eil51.tsp"), 11, 4)
    assert inst.name == "11eil51" and inst.n_tasks == 11 and inst.n_agents == 4
    assert inst.vertex_ids[0] == 1
    by_index = ingest_tsplib(data_path("eil51.tsp"), 11, 4, order="index")
    assert by_index.vertex_task[0] == 0
    with pytest.raises(InstanceError):
        ingest_tsplib(data_path("eil51.tsp"), 3, 4)


def test_svg_is_well_formed(tmp_path, crossing):
    ix = crossing.index_of
    path = tmp_path / "f.svg"
    text = render_svg(DiscWorld.of(crossing), [Tour(0, [ix[1], ix[3]]), Tour(1, [ix[2], ix[4], ix[5]])], path,
                      labels=["<1>", "2", "3", "4", "5"])
    root = ET.fromstring(path.read_text())
    assert root.tag.endswith("svg") and text == path.read_text()
    ns = {"s": "http://www.w3.org/2000/svg"}
    assert len(root.findall(".//s:polyline[@class='swept']", ns)) == 2
    assert len(root.findall(".//s:circle", ns)) == 5
