import math

import numpy as np
import pytest

from holoflow.errors import NotTraversing
from holoflow.flowfield import (Arc, FlowSpec, MorseStrata, check_traversing, f_boundary_range, lyapunov_range_repair,
                                merge_intervals, morse_stratify, tangency_function)
from holoflow.geometry import BoundaryPoint, Circle, build_domain
from holoflow.scenes import FIG1_HOLES, builtin


class TestFlowSpec:
    def test_derived_quantities(self):
        fl = FlowSpec("x", "y", "(x^2 + y^2) / 2")
        assert fl.v(1.0, 2.0) == pytest.approx((1.0, 2.0))
        assert fl.grad_f(1.0, 2.0) == pytest.approx((1.0, 2.0))
        assert fl.dfv(1.0, 2.0) == pytest.approx(5.0)

    def test_lambda_scales_velocity_not_f(self):
        fl = FlowSpec("0", "1", "y").with_lambda("2 + x")
        assert fl.v(1.0, 0.0) == pytest.approx((0.0, 3.0))
        assert fl.f_at(1.0, 5.0) == 5.0

    def test_dict_round_trip(self):
        fl = FlowSpec("0", "1", "y", "1 + 0.5 * sin(x) * cos(y)")
        assert fl.to_dict()["lambda"] == "1 + 0.5 * sin(x) * cos(y)"
        assert FlowSpec.from_dict(fl.to_dict()) == fl


class TestTraversing:
    def test_vertical_flow_is_traversing(self):
        rep = check_traversing(builtin("four_holes").domain, FlowSpec("0", "1", "y"))
        assert rep.ok and rep.min_dfv == pytest.approx(1.0)

    def test_wrong_lyapunov_function_is_caught(self):
        dom = builtin("disk").domain
        with pytest.raises(NotTraversing) as exc:
            check_traversing(dom, FlowSpec("0", "1", "x"))
        assert exc.value.min_dfv == 0.0
        assert not check_traversing(dom, FlowSpec("0", "1", "x"), strict=False).ok

    def test_nonpositive_lambda_is_caught(self):
        with pytest.raises(NotTraversing):
            check_traversing(builtin("disk").domain, FlowSpec("0", "1", "y", "x"))


class TestStrata:
    def test_disk(self):
        st = morse_stratify(builtin("disk").domain, FlowSpec("0", "1", "y"))
        assert [(tp.point.t, tp.order, tp.sign, tp.kind) for tp in st.tangency_points] == [
            (0.0, 1, "-", "external"), (0.5, 1, "-", "external")]
        assert st.positive_arcs == (Arc(0, 0.5, 0.5),) and st.negative_arcs == (Arc(0, 0.0, 0.5),)

    def test_annulus_hole_tangencies_are_internal(self):
        st = morse_stratify(builtin("annulus").domain, FlowSpec("0", "1", "y"))
        kinds = [(tp.point.curve_id, tp.point.t, tp.sign, tp.kind) for tp in st.tangency_points]
        assert kinds == [(0, 0.0, "-", "external"), (0, 0.5, "-", "external"),
                         (1, 0.0, "+", "internal"), (1, 0.5, "+", "internal")]
        assert st.classify(BoundaryPoint(1, 0.25)) != st.classify(BoundaryPoint(1, 0.75))

    def test_four_holes_counts(self):
        st = morse_stratify(builtin("four_holes").domain, FlowSpec("0", "1", "y"))
        kinds = [tp.kind for tp in st.tangency_points]
        assert kinds.count("external") == 2 and kinds.count("internal") == 8
        for tp, ((cx, cy), r) in zip(st.tangency_points[2::2], FIG1_HOLES):
            assert abs(abs(tp.position[0] - cx) - r) < 1e-9 and tp.position[1] == pytest.approx(cy, abs=1e-9)

    def test_ellipse_tangencies_at_vertices(self):
        st = morse_stratify(builtin("ellipse").domain, FlowSpec("0", "1", "y"))
        assert [tuple(np.round(tp.position, 9)) for tp in st.tangency_points] == [(2.0, 0.0), (-2.0, 0.0)]

    def test_cubic_contacts_are_crossings(self):
        sc = builtin("property_a_violation")
        st = morse_stratify(sc.domain, sc.flow)
        crossings = sorted((tp.position for tp in st.tangency_points if tp.order == 2), key=lambda p: p[0])
        assert np.allclose(crossings, [(-0.6, -0.8), (0.6, -0.8)], atol=1e-7)

    def test_strata_are_conformally_invariant(self):
        dom = builtin("four_holes").domain
        a = morse_stratify(dom, FlowSpec("0", "1", "y"))
        b = morse_stratify(dom, FlowSpec("0", "1", "y", "1 + 0.5 * sin(x) * cos(y)"))
        assert [tp.point.curve_id for tp in a.tangency_points] == [tp.point.curve_id for tp in b.tangency_points]
        assert np.allclose([tp.point.t for tp in a.tangency_points], [tp.point.t for tp in b.tangency_points],
                           atol=1e-12)

    def test_tangency_function_vanishes_at_tangencies(self):
        dom = builtin("disk").domain
        g = tangency_function(dom, FlowSpec("0", "1", "y"), 0)
        assert abs(g(0.0)) < 1e-15 and g(0.75) > 0 > g(0.25)

    def test_dict_round_trip(self):
        st = morse_stratify(builtin("annulus").domain, FlowSpec("0", "1", "y"))
        assert MorseStrata.from_dict(st.to_dict()).to_dict() == st.to_dict()


class TestRange:
    def test_merge(self):
        assert merge_intervals([(2, 3), (0, 1), (0.5, 2)]) == [(0, 3)]
        assert merge_intervals([(0, 1), (2, 3)]) == [(0, 1), (2, 3)]

    def test_boundary_range(self):
        assert np.allclose(f_boundary_range(builtin("annulus").domain, FlowSpec("0", "1", "y")), [(-2.0, 2.0)])

    def test_radial_annulus_range_is_disconnected(self):
        sc = builtin("radial_annulus")
        rng = f_boundary_range(sc.domain, sc.flow)
        assert len(rng) == 2
        assert rng[0] == pytest.approx((0.5, 0.5)) and rng[1] == pytest.approx((3.125, 6.125))

    def test_repair_oracle(self):
        sc = builtin("radial_annulus")
        fixed = lyapunov_range_repair(sc.domain, sc.flow)
        assert fixed.vx == "x" and fixed.vy == "y"
        assert "3.5390950547455873 * exp(-((x - 1.75)^2 + (y - 0)^2) / 2.25)" in fixed.f
        rng = f_boundary_range(sc.domain, fixed)
        assert len(rng) == 1 and rng[0] == pytest.approx((0.6227948685863747, 7.03233817264554), rel=1e-9)
        assert check_traversing(sc.domain, fixed).ok

    def test_repair_leaves_connected_range_alone(self):
        sc = builtin("disk")
        assert lyapunov_range_repair(sc.domain, sc.flow) == sc.flow

    def test_repair_keeps_single_hole_ring_radial(self):
        dom = build_domain(Circle((0.0, 0.0), 3.0), [Circle((0.0, 0.0), 1.0, -1)])
        fl = FlowSpec("x", "y", "(x^2 + y^2) / 2")
        # concentric: boundary values are the two levels 0.5 and 4.5
        assert np.allclose(f_boundary_range(dom, fl), [(0.5, 0.5), (4.5, 4.5)])
        fixed = lyapunov_range_repair(dom, fl)
        assert len(f_boundary_range(dom, fixed)) == 1 and check_traversing(dom, fixed).ok
        assert math.isfinite(fixed.f_at(2.0, 0.0))
