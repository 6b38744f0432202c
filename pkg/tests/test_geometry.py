import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holoflow.errors import GeometryError, HoleOutsideOuter, OverlappingCurves, SelfIntersectingCurve
from holoflow.geometry import (BoundaryPoint, Circle, Domain, Ellipse, FourierCurve, ParametricCurve, SplineCurve,
                               build_domain, curve_from_dict, locate)


@pytest.fixture(scope="module")
def annulus():
    return build_domain(Circle((0.0, 0.0), 2.0), [Circle((0.0, 0.0), 1.0, -1)])


class TestCurves:
    def test_circle_frame_points_inward(self):
        p, tangent, normal = Circle((0.0, 0.0), 2.0).frame(0.0)
        assert np.allclose(p, [2.0, 0.0]) and np.allclose(tangent, [0.0, 1.0]) and np.allclose(normal, [-1.0, 0.0])

    def test_hole_normal_points_away_from_hole(self):
        _, _, normal = Circle((0.0, 0.0), 1.0, -1).frame(0.0)
        assert np.allclose(normal, [1.0, 0.0])

    def test_lengths(self):
        assert Circle((0, 0), 2.0).length == pytest.approx(4 * math.pi)
        # Ramanujan's approximation is accurate to ~1e-10 for this aspect ratio
        a, b = 2.0, 1.0
        h = ((a - b) / (a + b)) ** 2
        ram = math.pi * (a + b) * (1 + 3 * h / (10 + math.sqrt(4 - 3 * h)))
        assert Ellipse((0, 0), a, b).length == pytest.approx(ram, rel=1e-8)

    def test_curvature_sign(self):
        assert Circle((0, 0), 2.0).curvature(0.3) == pytest.approx(0.5)
        assert Circle((0, 0), 1.0, -1).curvature(0.3) == pytest.approx(-1.0)

    def test_arclength_inverse(self):
        c = Ellipse((0, 0), 2.0, 1.0, 0.3)
        s = c.arclength(0.1, 0.35)
        assert c.param_at_arclength(0.1, s) == pytest.approx(0.35, abs=1e-9)

    def test_parametric_and_spline_match_circle(self):
        par = ParametricCurve("cos(2*pi*t)", "sin(2*pi*t)")
        assert par.length == pytest.approx(2 * math.pi, rel=1e-6)
        pts = [(math.cos(a), math.sin(a)) for a in np.linspace(0, 2 * math.pi, 64, endpoint=False)]
        assert SplineCurve(tuple(pts)).length == pytest.approx(2 * math.pi, rel=1e-4)

    def test_fourier_curve_is_star_shaped(self):
        c = FourierCurve((0.0, 0.0), 1.0, ((3, 0.2, 0.0),))
        p = c.point(np.array([0.0]))
        assert np.allclose(p.ravel(), [1.2, 0.0])

    def test_curve_from_dict_round_trip(self):
        for c in (Circle((1.0, 2.0), 0.5, -1), Ellipse((0.0, 0.0), 2.0, 1.0, 0.4),
                  FourierCurve((0.0, 0.0), 1.0, ((2, 0.1, 0.05),))):
            assert curve_from_dict(c.to_dict()) == c

    @pytest.mark.parametrize("d", [{"kind": "circle", "center": [0, 0], "radius": -1},
                                   {"kind": "ellipse", "center": [0, 0], "a": 1, "b": 0},
                                   {"kind": "blob"}])
    def test_curve_from_dict_rejects(self, d):
        with pytest.raises(GeometryError):
            curve_from_dict(d)


class TestDomain:
    def test_validation(self):
        with pytest.raises(HoleOutsideOuter):
            build_domain(Circle((0, 0), 1.0), [Circle((5, 0), 0.5, -1)])
        with pytest.raises(OverlappingCurves):
            build_domain(Circle((0, 0), 1.0), [Circle((0.8, 0), 0.5, -1)])
        with pytest.raises(OverlappingCurves):
            build_domain(Circle((0, 0), 3.0), [Circle((0, 0), 0.5, -1), Circle((0.9, 0), 0.5, -1)])
        with pytest.raises(SelfIntersectingCurve):
            build_domain(FourierCurve((0, 0), 1.0, ((2, 1.5, 0.0),)))
        with pytest.raises(GeometryError):
            build_domain(Circle((0, 0), 1.0, -1))

    def test_signed_distance_oracle(self, annulus):
        d, cid, t, grad = annulus.signed_distance(1.25, 0.0)
        assert (d, cid, t) == pytest.approx((0.25, 1, 0.0))
        assert np.allclose(grad, [1.0, 0.0])
        d, cid, t, _ = annulus.signed_distance(0.0, -1.9)
        assert d == pytest.approx(0.1) and cid == 0 and t == pytest.approx(0.75)

    def test_locate(self, annulus):
        assert locate(annulus, (0.0, 0.0)).kind == "exterior"
        assert locate(annulus, (1.5, 0.0)).kind == "interior"
        assert locate(annulus, (3.0, 0.0)).kind == "exterior"
        loc = locate(annulus, (2.0, 0.0))
        assert loc.kind == "near_boundary" and loc.boundary_point == BoundaryPoint(0, 0.0)
        assert locate(annulus, (1 + 1e-12, 0.0)).boundary_point.curve_id == 1

    def test_summary_quantities(self, annulus):
        assert annulus.bbox == (-2.0, -2.0, 2.0, 2.0)
        assert annulus.scale == 4.0 and annulus.min_feature == 1.0

    def test_dict_round_trip(self, annulus):
        assert Domain.from_dict(annulus.to_dict()).to_dict() == annulus.to_dict()

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-2.2, 2.2), st.floats(-2.2, 2.2))
    def test_sign_agrees_with_exact_membership(self, x, y):
        dom = build_domain(Circle((0, 0), 2.0), [Circle((0.0, 0.0), 1.0, -1)])
        r = math.hypot(x, y)
        if abs(r - 1.0) < 1e-9 or abs(r - 2.0) < 1e-9:
            return
        d = dom.signed_distance(x, y)[0]
        assert (d > 0) == (1.0 < r < 2.0)
        assert abs(d) == pytest.approx(min(abs(r - 1.0), abs(r - 2.0)), abs=1e-9)

    def test_boundary_point_normalises(self):
        assert BoundaryPoint.make(2, 1.25) == BoundaryPoint(2, 0.25)
        assert BoundaryPoint.make(0, -0.25).t == pytest.approx(0.75)
