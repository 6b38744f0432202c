import json

import pytest

from conftest import dataset, scene
from holoflow.errors import SignatureAmbiguity
from holoflow.geometry import BoundaryPoint
from holoflow.tracing import Tracer
from holoflow.trajspace import GraphLocation, build_graph, gamma_project, locate_fiber


@pytest.fixture(scope="module")
def annulus_graph():
    return build_graph(dataset("annulus"))


class TestInvariants:
    @pytest.mark.parametrize("name, V, E, chi, hist", [
        ("disk", 2, 1, 1, {1: 2}),
        ("ellipse", 2, 1, 1, {1: 2}),
        ("annulus", 4, 4, 0, {1: 2, 3: 2}),
        ("two_holes", 6, 7, -1, {1: 2, 3: 4}),
        ("three_holes", 8, 10, -2, {1: 2, 3: 6}),
        ("four_holes", 10, 13, -3, {1: 2, 3: 8}),
    ])
    def test_frozen(self, name, V, E, chi, hist):
        inv = build_graph(dataset(name)).invariants()
        assert (inv["vertices"], inv["edges"], inv["chi"], inv["valence_histogram"], inv["components"]) == (
            V, E, chi, hist, 1)

    def test_annulus_edges(self, annulus_graph):
        got = [(e.ends, e.curve_id, round(e.t0, 4), round(e.t1, 4)) for e in annulus_graph.edges]
        assert got == [((1, 3), 0, 0.5, 0.6667), ((3, 2), 0, 0.6667, 0.8333),
                       ((2, 0), 0, 0.8333, 0.0), ((2, 3), 1, 0.0, 0.5)]
        assert annulus_graph.edges[1].signature == ((0, "entry"), (1, "exit"))

    def test_vertex_kinds(self, annulus_graph):
        assert [(v.kind, v.valence, len(v.fiber)) for v in annulus_graph.vertices] == [
            ("external", 1, 1), ("external", 1, 1), ("internal", 3, 3), ("internal", 3, 3)]

    def test_isomorphic_under_conformal_change(self, annulus_graph):
        from conftest import LAMBDA
        assert annulus_graph.isomorphic(build_graph(dataset("annulus", 100.0, LAMBDA)))
        assert not annulus_graph.isomorphic(build_graph(dataset("two_holes")))

    def test_export_is_json(self, annulus_graph):
        d = json.loads(json.dumps(annulus_graph.to_dict()))
        assert len(d["vertices"]) == 4 and d["edges"][3]["signature"] == ["1:entry", "0:exit"]


class TestLocation:
    def test_gamma_projection(self, annulus_graph):
        sc = scene("annulus")
        tr = Tracer(sc.domain, sc.flow)
        # above the hole: the fiber enters at the top of the hole, halfway along its positive arc
        assert gamma_project(annulus_graph, tr, (0.0, 1.5)) == GraphLocation("edge", 3, pytest.approx(0.5))
        assert gamma_project(annulus_graph, tr, BoundaryPoint(1, 0.5)) == GraphLocation("vertex", 3)
        loc = gamma_project(annulus_graph, tr, (1.5, 0.0))
        assert loc.kind == "edge" and loc.index == 2

    def test_near_tangency_fiber_is_not_snapped(self, annulus_graph):
        v = annulus_graph.vertices[2]
        c, t = v.fiber[0][:2]
        near = ((c, t + 1e-5, 0.0, "entry"),) + tuple(v.fiber[1:])
        assert locate_fiber(annulus_graph, near).kind == "edge"

    def test_unknown_fiber(self, annulus_graph):
        with pytest.raises(SignatureAmbiguity):
            locate_fiber(annulus_graph, ((7, 0.3, 0.0, "entry"),))
