"""Compact planar domains: an outer closed curve with holes.

Every curve is a closed map ``t in [0, 1) -> R^2``.  The ``orientation``
records the role of the curve (+1 outer, -1 hole); normals are always
reported pointing *into* the domain X regardless of the direction in which
the parameterisation runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import shapely
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from . import expr
from .errors import GeometryError, HoleOutsideOuter, OverlappingCurves, SelfIntersectingCurve

TWO_PI = 2.0 * math.pi
POLYLINE_SIZE = 2048


# --- curves ----------------------------------------------------------------

class Curve:
    """Base class; subclasses provide ``_eval(t, order)`` on arrays."""

    orientation: int

    def _eval(self, t, order):
        raise NotImplementedError

    def point(self, t):
        return self._eval(np.asarray(t, dtype=float), 0)

    def d1(self, t):
        return self._eval(np.asarray(t, dtype=float), 1)

    def d2(self, t):
        return self._eval(np.asarray(t, dtype=float), 2)

    # cached geometry ------------------------------------------------------
    @cached_property
    def _grid(self):
        return np.arange(POLYLINE_SIZE) / POLYLINE_SIZE

    @cached_property
    def polyline(self):
        return self.point(self._grid)

    @cached_property
    def ccw(self):
        """+1 if the parameterisation runs counterclockwise, else -1."""
        p = self.polyline
        area = 0.5 * np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1])
        return 1 if area > 0 else -1

    @cached_property
    def _cumlen(self):
        # arc length table on a fine grid, trapezoid on |c'|
        n = 8 * POLYLINE_SIZE
        t = np.arange(n + 1) / n
        speed = np.linalg.norm(self.d1(t), axis=-1)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) / n)])
        return t, cum

    @property
    def length(self):
        return float(self._cumlen[1][-1])

    def arclength(self, t0, t1):
        """Arc length travelled from ``t0`` forward to ``t1`` (both mod 1)."""
        tt, cum = self._cumlen
        a, b = t0 % 1.0, t1 % 1.0
        la, lb = np.interp(a, tt, cum), np.interp(b, tt, cum)
        return float(lb - la if b >= a else self.length - la + lb)

    def param_at_arclength(self, t0, s):
        """Parameter reached after travelling arc length ``s`` forward from ``t0``."""
        tt, cum = self._cumlen
        s0 = np.interp(t0 % 1.0, tt, cum)
        target = np.mod(s0 + np.asarray(s, dtype=float), self.length)
        return np.interp(target, cum, tt) % 1.0

    @cached_property
    def max_curvature(self):
        t = np.arange(4 * POLYLINE_SIZE) / (4 * POLYLINE_SIZE)
        return float(np.max(np.abs(self.curvature(t))))

    @cached_property
    def _ring(self):
        return shapely.LinearRing(self.polyline)

    @cached_property
    def _polygon(self):
        return shapely.Polygon(self.polyline)

    # frames ----------------------------------------------------------------
    def frame(self, t):
        """Position, unit tangent (direction of increasing t) and inward normal."""
        t = np.asarray(t, dtype=float)
        p, d = self.point(t), self.d1(t)
        tan = d / np.linalg.norm(d, axis=-1, keepdims=True)
        s = self.orientation * self.ccw
        normal = s * np.stack([-tan[..., 1], tan[..., 0]], axis=-1)
        return p, tan, normal

    def curvature(self, t):
        """Curvature measured toward the inward normal (positive if X is locally convex)."""
        t = np.asarray(t, dtype=float)
        _, _, n = self.frame(t)
        d1, d2 = self.d1(t), self.d2(t)
        return np.sum(d2 * n, axis=-1) / np.sum(d1 * d1, axis=-1)

    # distances -------------------------------------------------------------
    def closest_param(self, x, y):
        """Parameter of the closest point on the curve to ``(x, y)``."""
        poly = self.polyline
        i = int(np.argmin((poly[:, 0] - x) ** 2 + (poly[:, 1] - y) ** 2))
        t = i / POLYLINE_SIZE
        h = 1.0 / POLYLINE_SIZE
        for _ in range(30):
            c, d1, d2 = self.point(t), self.d1(t), self.d2(t)
            rx, ry = c[0] - x, c[1] - y
            g = rx * d1[0] + ry * d1[1]
            gp = d1[0] ** 2 + d1[1] ** 2 + rx * d2[0] + ry * d2[1]
            if gp <= 0:
                break
            step = g / gp
            step = max(-h, min(h, step))
            t -= step
            if abs(step) < 1e-15:
                return t % 1.0
        # Newton failed to settle: bounded scalar minimisation around the seed
        res = minimize_scalar(
            lambda s: float(np.sum((self.point(s) - (x, y)) ** 2)),
            bounds=(i / POLYLINE_SIZE - 2 * h, i / POLYLINE_SIZE + 2 * h),
            method="bounded",
            options={"xatol": 1e-14},
        )
        return float(res.x) % 1.0

    def signed_distance(self, x, y):
        """Signed distance to the curve, positive on the domain side.

        Returns ``(distance, t, gradient)`` where gradient is the inward normal
        at the closest point (the gradient of the distance function).
        """
        t = self.closest_param(x, y)
        p, _, n = self.frame(t)
        dx, dy = x - p[0], y - p[1]
        dist = math.hypot(dx, dy)
        s = dx * n[0] + dy * n[1]
        return (dist if s >= 0 else -dist), t, (float(n[0]), float(n[1]))

    def signed_distance_many(self, pts):
        """Vectorised signed distance (polyline accuracy) for an ``(N, 2)`` array."""
        pts = np.asarray(pts, dtype=float)
        dist = shapely.distance(shapely.points(pts), self._ring)
        inside = shapely.contains_xy(self._polygon, pts[:, 0], pts[:, 1])
        sign = np.where(inside, 1.0, -1.0) * self.orientation
        return sign * dist

    def winding_number(self, pts):
        """Winding number of the curve around each point (polyline, counterclockwise positive)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        poly = self.polyline
        a = poly[None, :, :] - pts[:, None, :]
        b = np.roll(poly, -1, axis=0)[None, :, :] - pts[:, None, :]
        cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        up = (a[..., 1] <= 0) & (b[..., 1] > 0) & (cross > 0)
        down = (a[..., 1] > 0) & (b[..., 1] <= 0) & (cross < 0)
        return np.sum(up, axis=1) - np.sum(down, axis=1)

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=True)
class Circle(Curve):
    center: tuple[float, float]
    radius: float
    orientation: int = 1

    def _eval(self, t, order):
        a = TWO_PI * t
        r = self.radius
        if order == 0:
            return np.stack([self.center[0] + r * np.cos(a), self.center[1] + r * np.sin(a)], axis=-1)
        if order == 1:
            return TWO_PI * r * np.stack([-np.sin(a), np.cos(a)], axis=-1)
        return -(TWO_PI**2) * r * np.stack([np.cos(a), np.sin(a)], axis=-1)

    @property
    def ccw(self):
        return 1

    @property
    def length(self):
        return TWO_PI * self.radius

    @property
    def max_curvature(self):
        return 1.0 / self.radius

    def arclength(self, t0, t1):
        return ((t1 - t0) % 1.0) * self.length

    def param_at_arclength(self, t0, s):
        return (t0 + np.asarray(s, dtype=float) / self.length) % 1.0

    def closest_param(self, x, y):
        return (math.atan2(y - self.center[1], x - self.center[0]) / TWO_PI) % 1.0

    def signed_distance(self, x, y):
        dx, dy = x - self.center[0], y - self.center[1]
        rho = math.hypot(dx, dy)
        o = self.orientation
        dist = o * (self.radius - rho)
        if rho == 0.0:
            dx, rho = 1.0, 1.0
        t = (math.atan2(dy, dx) / TWO_PI) % 1.0
        return dist, t, (-o * dx / rho, -o * dy / rho)

    def signed_distance_many(self, pts):
        pts = np.asarray(pts, dtype=float)
        rho = np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1])
        return self.orientation * (self.radius - rho)

    def to_dict(self):
        return {"kind": "circle", "center": list(self.center), "radius": self.radius, "orientation": self.orientation}


@dataclass(frozen=True, eq=True)
class Ellipse(Curve):
    center: tuple[float, float]
    a: float
    b: float
    angle: float = 0.0
    orientation: int = 1

    def _eval(self, t, order):
        s = TWO_PI * t
        if order == 0:
            u, w = self.a * np.cos(s), self.b * np.sin(s)
        elif order == 1:
            u, w = -TWO_PI * self.a * np.sin(s), TWO_PI * self.b * np.cos(s)
        else:
            u, w = -(TWO_PI**2) * self.a * np.cos(s), -(TWO_PI**2) * self.b * np.sin(s)
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        out = np.stack([ca * u - sa * w, sa * u + ca * w], axis=-1)
        if order == 0:
            out = out + np.asarray(self.center)
        return out

    @property
    def ccw(self):
        return 1

    def to_dict(self):
        return {"kind": "ellipse", "center": list(self.center), "a": self.a, "b": self.b,
                "angle": self.angle, "orientation": self.orientation}


@dataclass(frozen=True, eq=True)
class FourierCurve(Curve):
    """Radial graph ``r(theta) = r0 + sum a_k cos(k theta) + b_k sin(k theta)``."""

    center: tuple[float, float]
    r0: float
    terms: tuple[tuple[int, float, float], ...] = ()
    orientation: int = 1

    def _radius(self, s, order):
        r = np.full_like(s, self.r0 if order == 0 else 0.0)
        for k, ak, bk in self.terms:
            if order == 0:
                r = r + ak * np.cos(k * s) + bk * np.sin(k * s)
            elif order == 1:
                r = r + k * (-ak * np.sin(k * s) + bk * np.cos(k * s))
            else:
                r = r - k * k * (ak * np.cos(k * s) + bk * np.sin(k * s))
        return r

    def _eval(self, t, order):
        s = TWO_PI * t
        r = self._radius(s, 0)
        c, sn = np.cos(s), np.sin(s)
        if order == 0:
            return np.stack([self.center[0] + r * c, self.center[1] + r * sn], axis=-1)
        r1 = self._radius(s, 1)
        if order == 1:
            return TWO_PI * np.stack([r1 * c - r * sn, r1 * sn + r * c], axis=-1)
        r2 = self._radius(s, 2)
        return TWO_PI**2 * np.stack([r2 * c - 2 * r1 * sn - r * c, r2 * sn + 2 * r1 * c - r * sn], axis=-1)

    def to_dict(self):
        return {"kind": "fourier", "center": list(self.center), "r0": self.r0,
                "terms": [list(term) for term in self.terms], "orientation": self.orientation}


@dataclass(frozen=True, eq=True)
class ParametricCurve(Curve):
    """Closed curve given by expressions ``x(t), y(t)`` in the expression language."""

    x_expr: str
    y_expr: str
    orientation: int = 1

    @cached_property
    def _fns(self):
        ex, ey = expr.parse(self.x_expr), expr.parse(self.y_expr)
        out = []
        for e in (ex, ey):
            d1 = expr.diff(e, "t")
            out.append((expr.compile_vector(e), expr.compile_vector(d1), expr.compile_vector(expr.diff(d1, "t"))))
        return out

    def _eval(self, t, order):
        zero = np.zeros_like(t)
        return np.stack([fns[order](zero, zero, t) for fns in self._fns], axis=-1)

    def to_dict(self):
        return {"kind": "param", "x": self.x_expr, "y": self.y_expr, "orientation": self.orientation}


@dataclass(frozen=True, eq=True)
class SplineCurve(Curve):
    """Periodic cubic spline through control points, uniform in t."""

    points: tuple[tuple[float, float], ...]
    orientation: int = 1

    @cached_property
    def _spline(self):
        pts = np.asarray(self.points, dtype=float)
        closed = np.vstack([pts, pts[:1]])
        knots = np.linspace(0.0, 1.0, len(closed))
        return CubicSpline(knots, closed, bc_type="periodic")

    def _eval(self, t, order):
        return self._spline(np.mod(t, 1.0), order)

    def to_dict(self):
        return {"kind": "spline", "points": [list(p) for p in self.points], "orientation": self.orientation}


def curve_from_dict(d) -> Curve:
    kind = d.get("kind")
    o = int(d.get("orientation", 1))
    for key in {"circle": ("radius",), "ellipse": ("a", "b"), "fourier": ("r0",)}.get(kind, ()):
        if not float(d[key]) > 0:
            raise GeometryError(f"{kind} {key} must be positive, got {d[key]!r}")
    if kind == "circle":
        return Circle(tuple(map(float, d["center"])), float(d["radius"]), o)
    if kind == "ellipse":
        return Ellipse(tuple(map(float, d["center"])), float(d["a"]), float(d["b"]), float(d.get("angle", 0.0)), o)
    if kind == "fourier":
        terms = tuple((int(k), float(a), float(b)) for k, a, b in d.get("terms", []))
        return FourierCurve(tuple(map(float, d["center"])), float(d["r0"]), terms, o)
    if kind == "param":
        expr.parse(d["x"]), expr.parse(d["y"])
        return ParametricCurve(d["x"], d["y"], o)
    if kind == "spline":
        return SplineCurve(tuple(tuple(map(float, p)) for p in d["points"]), o)
    raise GeometryError(f"unknown curve kind {kind!r}")


# --- domains ---------------------------------------------------------------

class BoundaryPoint(NamedTuple):
    curve_id: int
    t: float

    @classmethod
    def make(cls, curve_id, t):
        return cls(int(curve_id), float(t) % 1.0)


class Location(NamedTuple):
    kind: str  # "interior" | "exterior" | "near_boundary"
    boundary_point: BoundaryPoint | None = None
    signed_distance: float | None = None


@dataclass(frozen=True)
class Domain:
    outer: Curve
    holes: tuple[Curve, ...] = ()
    ambient_margin: float = 1e-2
    boundary_tol: float = 1e-9
    _validated: bool = field(default=False, repr=False, compare=False)

    @cached_property
    def curves(self):
        return (self.outer,) + tuple(self.holes)

    @cached_property
    def bbox(self):
        p = self.outer.polyline
        return (float(p[:, 0].min()), float(p[:, 1].min()), float(p[:, 0].max()), float(p[:, 1].max()))

    @cached_property
    def scale(self):
        x0, y0, x1, y1 = self.bbox
        return max(x1 - x0, y1 - y0)

    @cached_property
    def min_feature(self):
        """Smallest radius of curvature over all curves (capped by the domain scale)."""
        return min(min(1.0 / max(c.max_curvature, 1e-12) for c in self.curves), self.scale)

    def to_dict(self):
        return {"outer": self.outer.to_dict(), "holes": [h.to_dict() for h in self.holes],
                "ambient_margin": self.ambient_margin, "boundary_tol": self.boundary_tol}

    @classmethod
    def from_dict(cls, d):
        return build_domain(curve_from_dict(d["outer"]), [curve_from_dict(h) for h in d.get("holes", [])],
                            float(d.get("ambient_margin", 1e-2)), float(d.get("boundary_tol", 1e-9)))

    def signed_distance(self, x, y):
        """Signed distance to the boundary (positive inside X) and the closest boundary point."""
        best = None
        for cid, c in enumerate(self.curves):
            d, t, g = c.signed_distance(x, y)
            if best is None or d < best[0]:
                best = (d, cid, t, g)
        return best

    def signed_distance_many(self, pts):
        return np.min(np.stack([c.signed_distance_many(pts) for c in self.curves]), axis=0)


def _check_curve(c, cid):
    t = np.arange(4 * POLYLINE_SIZE) / (4 * POLYLINE_SIZE)
    speed = np.linalg.norm(c.d1(t), axis=-1)
    if not np.all(np.isfinite(speed)) or speed.min() <= 1e-12 * max(speed.max(), 1.0):
        raise GeometryError(f"curve {cid} is not regular (vanishing derivative)")
    for k in range(3):
        a, b = c._eval(np.array([0.0]), k), c._eval(np.array([1.0]), k)
        if not np.allclose(a, b, rtol=1e-8, atol=1e-8 * max(1.0, float(np.abs(a).max()))):
            raise GeometryError(f"curve {cid} is not closed to order {k}")
    if not c._ring.is_simple:
        raise SelfIntersectingCurve(f"curve {cid} intersects itself")


def build_domain(outer, holes=(), ambient_margin=1e-2, boundary_tol=1e-9) -> Domain:
    """Validate curves and assemble a :class:`Domain`.

    Raises
    ------
    SelfIntersectingCurve, OverlappingCurves, HoleOutsideOuter
    """
    if ambient_margin <= 0 or boundary_tol <= 0:
        raise GeometryError("ambient_margin and boundary_tol must be positive")
    holes = tuple(holes)
    if outer.orientation != 1 or any(h.orientation != -1 for h in holes):
        raise GeometryError("outer curve needs orientation +1 and holes orientation -1")
    for cid, c in enumerate((outer,) + holes):
        _check_curve(c, cid)
    outer_poly = outer._polygon
    for i, h in enumerate(holes, start=1):
        if h._ring.intersects(outer._ring):
            raise OverlappingCurves(f"hole {i} crosses the outer curve")
        if not outer_poly.contains(h._polygon):
            raise HoleOutsideOuter(f"hole {i} is not inside the outer curve")
        if h._ring.distance(outer._ring) <= 2 * ambient_margin:
            raise OverlappingCurves(f"hole {i} is within 2*ambient_margin of the outer curve")
    for i in range(len(holes)):
        for j in range(i + 1, len(holes)):
            a, b = holes[i], holes[j]
            if a._polygon.intersects(b._polygon) or a._ring.distance(b._ring) <= 2 * ambient_margin:
                raise OverlappingCurves(f"holes {i + 1} and {j + 1} overlap or nearly touch")
    return Domain(outer, holes, float(ambient_margin), float(boundary_tol), True)


def locate(domain: Domain, p) -> Location:
    """Classify a point as interior, exterior or within ``boundary_tol`` of the boundary."""
    x, y = float(p[0]), float(p[1])
    d, cid, t, _ = domain.signed_distance(x, y)
    # a few ulps of slack so that points placed exactly at the tolerance count as near
    if abs(d) <= domain.boundary_tol + 64 * np.finfo(float).eps * domain.scale:
        return Location("near_boundary", BoundaryPoint.make(cid, t), d)
    if abs(d) < 1e-3 * domain.scale:
        # close to a curve: trust the exact signed distance over the polyline
        return Location("interior" if d > 0 else "exterior")
    w = [int(c.winding_number([(x, y)])[0]) * c.ccw for c in domain.curves]
    inside = abs(w[0]) == 1 and all(wi == 0 for wi in w[1:])
    return Location("interior" if inside else "exterior")


def boundary_frame(domain: Domain, b: BoundaryPoint):
    """``(position, unit_tangent, inward_normal)`` at a boundary point."""
    p, tan, n = domain.curves[b.curve_id].frame(b.t)
    return p, tan, n


def boundary_position(domain, b):
    return domain.curves[b.curve_id].point(b.t)
