import math

import numpy as np
import pytest

from conftest import LAMBDA, dataset, scene
from holoflow.errors import CommutationViolation, LevelOutOfRange, VersionMismatch
from holoflow.geometry import BoundaryPoint
from holoflow.holography import (BoundaryData, BoundaryMap, build_alpha_model, chain_fibers, compare_with_truth,
                                 extend_boundary_map, extract_boundary_data, interior_grid, level_point,
                                 reconstruct_invariants)
from holoflow.tracing import Tracer
from holoflow.trajspace import GraphLocation


@pytest.fixture(scope="module")
def annulus_bd():
    return extract_boundary_data(dataset("annulus"), scene("annulus").domain)


class TestBoundaryData:
    def test_round_trip(self, annulus_bd):
        again = BoundaryData.from_json(annulus_bd.to_json())
        assert again == annulus_bd and again.digest() == annulus_bd.digest()

    def test_lengths(self, annulus_bd):
        assert annulus_bd.circle_lengths == pytest.approx((4 * math.pi, 2 * math.pi))

    def test_rejects_other_formats(self):
        with pytest.raises(VersionMismatch):
            BoundaryData.from_json('{"format": "holoflow-boundary", "version": 2}')

    def test_chaining_recovers_every_fiber(self, annulus_bd):
        fibers = chain_fibers(annulus_bd)
        assert fibers == [s.fiber for s in dataset("annulus").samples]


class TestAlphaModel:
    def test_annulus(self, annulus_bd):
        m = build_alpha_model(annulus_bd)
        assert reconstruct_invariants(m) == {"chi_X": 0, "boundary_components": 2,
                                             "valence_histogram": {1: 2, 3: 2}}
        # internal tangency fibers run from the bottom to the top of the outer circle
        assert m.vertex_intervals[2] == pytest.approx((-math.sqrt(3), math.sqrt(3)))
        # edge 0 at coordinate 1/2 enters the outer circle at angle 210 degrees
        assert m.interval(GraphLocation("edge", 0, 0.5)) == pytest.approx((-1.0, 1.0), abs=1e-5)

    @pytest.mark.parametrize("name, holes", [("disk", 0), ("two_holes", 2), ("four_holes", 4)])
    def test_truth(self, name, holes):
        m = build_alpha_model(extract_boundary_data(dataset(name)))
        res = compare_with_truth(scene(name).domain, m)
        assert res["match"] and res["truth"] == {"chi_X": 1 - holes, "boundary_components": 1 + holes}


class TestBoundaryMaps:
    def test_shift_and_table(self):
        assert BoundaryMap.shift([0.25, 0.5])(BoundaryPoint(1, 0.75)) == BoundaryPoint(1, 0.25)
        tab = BoundaryMap.from_table([(0, 0.0, 0, 0.1), (0, 0.5, 0, 0.6)])
        # knots half a turn apart: interpolate in the orientation-preserving direction
        assert tab(BoundaryPoint(0, 0.25)).t == pytest.approx(0.35)

    def test_level_point(self):
        sc = scene("disk")
        x, y = level_point(Tracer(sc.domain, sc.flow), BoundaryPoint(0, 0.75), 0.3)
        assert (x, y) == pytest.approx((0.0, 0.3), abs=1e-10)
        with pytest.raises(LevelOutOfRange):
            level_point(Tracer(sc.domain, sc.flow), BoundaryPoint(0, 0.75), 1.5)

    def test_interior_grid_stays_inside(self):
        dom = scene("annulus").domain
        pts = interior_grid(dom, 12)
        r = np.hypot(pts[:, 0], pts[:, 1])
        assert len(pts) > 0 and np.all((r > 1) & (r < 2))

    def test_identity_extension_under_conformal_change(self):
        phi = extend_boundary_map(scene("annulus"), scene("annulus", LAMBDA), BoundaryMap.identity(), grid=12)
        assert np.max(np.abs(phi.images - phi.points)) < 1e-8
        mid = phi.interpolate([[0.0, 1.5]])
        assert mid[0] == pytest.approx((0.0, 1.5), abs=1e-6)

    def test_non_commuting_map_is_rejected(self):
        with pytest.raises(CommutationViolation):
            extend_boundary_map(scene("annulus"), scene("annulus"), BoundaryMap.shift([0.1, 0.0]), grid=6)
