"""Vector field / Lyapunov function pairs and the boundary Morse stratification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import expr
from .errors import DegenerateRootCluster, NotBoundaryGeneric, NotTraversing, RepairFailed
from .geometry import BoundaryPoint, Domain

POSITIVITY_MARGIN = 1e-6
FD_STEP = 1e-5
SCAN_SIZE = 4096


@dataclass(frozen=True)
class FlowSpec:
    """Vector field ``v = (vx, vy)``, Lyapunov function ``f`` and optional conformal factor."""

    vx: str
    vy: str
    f: str
    lam: str | None = None

    def __post_init__(self):
        # canonicalise so equal flows print identically
        for name in ("vx", "vy", "f", "lam"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, str(expr.parse(val)))

    def to_dict(self):
        d = {"vx": self.vx, "vy": self.vy, "f": self.f}
        if self.lam is not None:
            d["lambda"] = self.lam
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["vx"], d["vy"], d["f"], d.get("lambda"))

    def with_lambda(self, lam):
        return replace(self, lam=None if lam is None else str(lam))

    def with_f(self, f):
        return replace(self, f=str(f))

    # symbolic pieces -------------------------------------------------------
    @cached_property
    def _nodes(self):
        vx, vy = expr.parse(self.vx), expr.parse(self.vy)
        if self.lam is not None:
            lam = expr.parse(self.lam)
            vx, vy = expr.mul(lam, vx), expr.mul(lam, vy)
        f = expr.parse(self.f)
        return {
            "vx": vx, "vy": vy, "f": f,
            "fx": expr.diff(f, "x"), "fy": expr.diff(f, "y"),
            "vxx": expr.diff(vx, "x"), "vxy": expr.diff(vx, "y"),
            "vyx": expr.diff(vy, "x"), "vyy": expr.diff(vy, "y"),
            "lam": expr.parse(self.lam) if self.lam is not None else expr.Num(1.0),
        }

    @cached_property
    def _scalar(self):
        return {k: expr.compile_scalar(n) for k, n in self._nodes.items()}

    @cached_property
    def _vector(self):
        return {k: expr.compile_vector(n) for k, n in self._nodes.items()}

    # scalar evaluation (hot path of the tracer) -----------------------------
    def v(self, x, y):
        s = self._scalar
        return s["vx"](x, y), s["vy"](x, y)

    def f_at(self, x, y):
        return self._scalar["f"](x, y)

    def grad_f(self, x, y):
        s = self._scalar
        return s["fx"](x, y), s["fy"](x, y)

    def dfv(self, x, y):
        s = self._scalar
        return s["fx"](x, y) * s["vx"](x, y) + s["fy"](x, y) * s["vy"](x, y)

    def flow_rate(self):
        """Callable ``(x, y) -> (dx/df, dy/df)``: the field reparametrised by f."""
        s = self._scalar
        vx, vy, fx, fy = s["vx"], s["vy"], s["fx"], s["fy"]

        def rate(x, y):
            a, b = vx(x, y), vy(x, y)
            r = fx(x, y) * a + fy(x, y) * b
            return a / r, b / r

        return rate

    def acceleration(self, x, y):
        """``(Dv) v``: derivative of v along itself."""
        s = self._scalar
        a, b = s["vx"](x, y), s["vy"](x, y)
        return (s["vxx"](x, y) * a + s["vxy"](x, y) * b, s["vyx"](x, y) * a + s["vyy"](x, y) * b)

    # vectorised evaluation ------------------------------------------------
    def v_many(self, x, y):
        s = self._vector
        return s["vx"](x, y), s["vy"](x, y)

    def f_many(self, x, y):
        return self._vector["f"](x, y)

    def dfv_many(self, x, y):
        s = self._vector
        return s["fx"](x, y) * s["vx"](x, y) + s["fy"](x, y) * s["vy"](x, y)

    def lam_many(self, x, y):
        return self._vector["lam"](x, y)


class TraversingReport(NamedTuple):
    min_dfv: float
    ok: bool
    witness: tuple


def ambient_grid(domain: Domain, resolution: int):
    """Grid points of the bounding box that lie in the collar neighbourhood X-hat."""
    x0, y0, x1, y1 = domain.bbox
    m = domain.ambient_margin
    xs = np.linspace(x0 - m, x1 + m, resolution)
    ys = np.linspace(y0 - m, y1 + m, resolution)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    keep = domain.signed_distance_many(pts) > -m
    # the boundary itself is part of X-hat even where the grid misses it
    bnd = np.vstack([c.polyline[::4] for c in domain.curves])
    return np.vstack([pts[keep], bnd])


def check_traversing(domain: Domain, flow: FlowSpec, grid_resolution: int = 120,
                     margin: float = POSITIVITY_MARGIN, strict: bool = True) -> TraversingReport:
    """Certify ``df(v) > margin`` (and ``lambda > 0``) on a grid covering X-hat.

    Raises
    ------
    NotTraversing
        if ``strict`` and the margin is violated somewhere on the grid.
    """
    pts = ambient_grid(domain, grid_resolution)
    with np.errstate(all="ignore"):
        vals = flow.dfv_many(pts[:, 0], pts[:, 1])
        if flow.lam is not None:
            lam = flow.lam_many(pts[:, 0], pts[:, 1])
            vals = np.where(lam > 0, vals, -np.abs(vals) - 1.0)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    i = int(np.argmin(vals))
    rep = TraversingReport(float(vals[i]), bool(vals[i] > margin), (float(pts[i, 0]), float(pts[i, 1])))
    if strict and not rep.ok:
        raise NotTraversing(rep.min_dfv, rep.witness)
    return rep


# --- Morse stratification --------------------------------------------------

class Arc(NamedTuple):
    """Boundary arc ``{curve_id, t : 0 <= (t - start) mod 1 <= length}``."""

    curve_id: int
    start: float
    length: float

    @property
    def end(self):
        return (self.start + self.length) % 1.0

    @property
    def full(self):
        return self.length >= 1.0

    def offset(self, t):
        return (t - self.start) % 1.0

    def contains(self, b: BoundaryPoint, tol=0.0):
        if b.curve_id != self.curve_id:
            return False
        if self.full:
            return True
        o = self.offset(b.t)
        return o <= self.length + tol or o >= 1.0 - tol


class Tangency(NamedTuple):
    point: BoundaryPoint
    order: int  # 1: quadratic contact, 2: cubic contact
    sign: str  # "+" or "-"
    kind: str  # "external" | "internal" | "crossing"
    position: tuple


@dataclass(frozen=True)
class MorseStrata:
    positive_arcs: tuple
    negative_arcs: tuple
    tangency_points: tuple
    refine_tolerance: float = 1e-12
    param_tol: float = 1e-7

    def classify(self, b: BoundaryPoint):
        """``"tangency"``, ``"positive"`` or ``"negative"`` for a boundary point."""
        if self.tangency_at(b) is not None:
            return "tangency"
        for a in self.positive_arcs:
            if a.contains(b):
                return "positive"
        return "negative"

    def tangency_at(self, b: BoundaryPoint, tol=None):
        tol = self.param_tol if tol is None else tol
        for tp in self.tangency_points:
            if tp.point.curve_id == b.curve_id and _circ(tp.point.t, b.t) <= tol:
                return tp
        return None

    def to_dict(self):
        return {
            "positive_arcs": [list(a) for a in self.positive_arcs],
            "negative_arcs": [list(a) for a in self.negative_arcs],
            "tangency_points": [
                {"curve_id": tp.point.curve_id, "t": tp.point.t, "order": tp.order, "sign": tp.sign,
                 "kind": tp.kind, "position": list(tp.position)}
                for tp in self.tangency_points
            ],
            "refine_tolerance": self.refine_tolerance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(Arc(int(a[0]), float(a[1]), float(a[2])) for a in d["positive_arcs"]),
            tuple(Arc(int(a[0]), float(a[1]), float(a[2])) for a in d["negative_arcs"]),
            tuple(Tangency(BoundaryPoint(int(tp["curve_id"]), float(tp["t"])), int(tp["order"]), tp["sign"],
                           tp["kind"], tuple(tp["position"])) for tp in d["tangency_points"]),
            float(d.get("refine_tolerance", 1e-12)),
        )


def _circ(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def tangency_function(domain: Domain, flow: FlowSpec, curve_id: int):
    """``g(t) = <v(c(t)), inward_normal(t)>`` as a vectorised callable."""
    curve = domain.curves[curve_id]

    def g(t):
        t = np.asarray(t, dtype=float)
        p, _, n = curve.frame(t)
        vx, vy = flow.v_many(p[..., 0], p[..., 1])
        return vx * n[..., 0] + vy * n[..., 1]

    return g


def _g_scalar(g, t):
    return float(g(np.array([t]))[0])


def classify_tangency(domain: Domain, flow: FlowSpec, curve_id: int, t: float, g_scale: float | None = None):
    """Order, sign and kind of a tangency at parameter ``t`` of a curve.

    The order comes from central differences of g; the kind compares the
    trajectory curvature with the boundary curvature along the inward normal.
    """
    g = tangency_function(domain, flow, curve_id)
    if g_scale is None:
        g_scale = float(np.max(np.abs(g(np.arange(1024) / 1024))))
    h = FD_STEP
    g0, gp, gm = (_g_scalar(g, t + s) for s in (0.0, h, -h))
    g1 = (gp - gm) / (2 * h)
    g2 = (gp - 2 * g0 + gm) / (h * h)
    curve = domain.curves[curve_id]
    p, tan, n = curve.frame(t)
    x, y = float(p[0]), float(p[1])
    vx, vy = flow.v(x, y)
    if abs(g1) > 1e-4 * g_scale:
        order = 1
        sign = "+" if (vx * tan[0] + vy * tan[1]) * g1 > 0 else "-"
        ax, ay = flow.acceleration(x, y)
        k_traj = (ax * n[0] + ay * n[1]) / (vx * vx + vy * vy)
        k_bnd = float(curve.curvature(t))
        if abs(k_traj - k_bnd) <= 1e-9 * max(1.0, abs(k_bnd)):
            raise NotBoundaryGeneric(f"curve {curve_id} t={t:.9f}: trajectory and boundary curvatures tie")
        kind = "internal" if k_traj > k_bnd else "external"
    elif abs(g2) > 1e-4 * g_scale:
        order = 2
        sign = "+" if g2 > 0 else "-"
        kind = "crossing"
    else:
        raise NotBoundaryGeneric(f"curve {curve_id} t={t:.9f}: tangency of order > 2 (g' and g'' vanish)")
    return Tangency(BoundaryPoint.make(curve_id, t), order, sign, kind, (x, y))


def morse_stratify(domain: Domain, flow: FlowSpec, refine_tolerance: float = 1e-12,
                   scan_size: int = SCAN_SIZE) -> MorseStrata:
    """Tangency points and the positive/negative boundary arcs of every curve.

    Roots of g are bracketed by a sign scan and refined with Brent's method;
    touching (double) roots are found by minimising |g| at local minima of the
    scan that do not change sign.
    """
    pos, neg, tangs = [], [], []
    ts = np.arange(scan_size) / scan_size
    for cid in range(len(domain.curves)):
        g = tangency_function(domain, flow, cid)
        vals = g(ts)
        scale = float(np.max(np.abs(vals)))
        roots = []
        for i in range(scan_size):
            j = (i + 1) % scan_size
            a, b = vals[i], vals[j]
            lo, hi = ts[i], ts[i] + 1.0 / scan_size
            if a == 0.0:
                roots.append(lo)
            elif a * b < 0:
                r = brentq(lambda s: _g_scalar(g, s), lo, hi, xtol=refine_tolerance, rtol=4 * np.finfo(float).eps)
                roots.append(r % 1.0)
        # touching roots: |g| has a small local minimum without a sign change
        absv = np.abs(vals)
        for i in range(scan_size):
            im, ip = (i - 1) % scan_size, (i + 1) % scan_size
            if not (absv[i] < absv[im] and absv[i] <= absv[ip]):
                continue
            if vals[im] * vals[i] <= 0 or vals[i] * vals[ip] <= 0 or absv[i] > 1e-2 * scale:
                continue
            sgn = math.copysign(1.0, vals[i])
            res = minimize_scalar(lambda s: sgn * _g_scalar(g, s), bounds=(ts[i] - 1.0 / scan_size, ts[i] + 1.0 / scan_size),
                                  method="bounded", options={"xatol": 1e-13})
            gmin = abs(float(res.fun))
            if gmin <= 1e-9 * scale:
                roots.append(float(res.x) % 1.0)
            elif gmin <= 1e-6 * scale:
                raise DegenerateRootCluster(f"curve {cid}: near-touching tangency at t={float(res.x) % 1.0:.9f} (|g|={gmin:.3g})")
        roots.sort()
        for r1, r2 in zip(roots, roots[1:] + roots[:1]):
            if len(roots) > 1 and _circ(r1, r2) < max(refine_tolerance, 1e-9):
                raise DegenerateRootCluster(f"curve {cid}: tangencies at t={r1:.12f} and t={r2:.12f} coincide")
        curve_tangs = [classify_tangency(domain, flow, cid, r, scale) for r in roots]
        tangs.extend(curve_tangs)
        splits = [tp.point.t for tp in curve_tangs if tp.order == 1]
        if not splits:
            target = pos if float(np.mean(vals)) > 0 else neg
            target.append(Arc(cid, 0.0, 1.0))
            continue
        signs = []
        for k, s0 in enumerate(splits):
            s1 = splits[(k + 1) % len(splits)]
            length = (s1 - s0) % 1.0 or 1.0
            mid = s0 + 0.5 * length
            # use the larger-|g| of a few probes to dodge touching roots
            probes = g(np.array([s0 + length * q for q in (0.25, 0.5, 0.75)]))
            sgn = probes[np.argmax(np.abs(probes))] > 0
            signs.append(sgn)
            (pos if sgn else neg).append(Arc(cid, s0, length))
            del mid
        if len(signs) > 1 and any(a == b for a, b in zip(signs, signs[1:] + signs[:1])):
            raise NotBoundaryGeneric(f"curve {cid}: arcs do not alternate around the curve")
    return MorseStrata(tuple(pos), tuple(neg), tuple(tangs), refine_tolerance)


# --- Lyapunov range repair -------------------------------------------------

def boundary_f_intervals(domain: Domain, flow: FlowSpec, samples: int = 4096):
    """Per-curve ``[min f, max f]`` over the boundary, refined by bounded minimisation."""
    ts = np.arange(samples) / samples
    out = []
    for c in domain.curves:
        p = c.point(ts)
        vals = flow.f_many(p[:, 0], p[:, 1])
        ext = []
        for sgn, i in ((1.0, int(np.argmin(vals))), (-1.0, int(np.argmax(vals)))):
            res = minimize_scalar(lambda s: sgn * flow.f_at(*map(float, c.point(s))),
                                  bounds=(ts[i] - 1.0 / samples, ts[i] + 1.0 / samples), method="bounded",
                                  options={"xatol": 1e-12})
            ext.append((sgn * float(res.fun), float(res.x) % 1.0))
        (lo, tlo), (hi, thi) = ext
        out.append((min(lo, float(vals.min())), max(hi, float(vals.max())), tlo, thi))
    return out


def merge_intervals(intervals, tol=1e-12):
    ivs = sorted((lo, hi) for lo, hi in intervals)
    merged = [list(ivs[0])]
    for lo, hi in ivs[1:]:
        if lo <= merged[-1][1] + tol:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [tuple(m) for m in merged]


def f_boundary_range(domain: Domain, flow: FlowSpec):
    """The range of f on the boundary as a sorted list of disjoint closed intervals."""
    return merge_intervals([(lo, hi) for lo, hi, _, _ in boundary_f_intervals(domain, flow)])


def lyapunov_range_repair(domain: Domain, flow: FlowSpec, grid_resolution: int = 120,
                          max_rounds: int = 10) -> FlowSpec:
    """Return a flow whose Lyapunov function has a connected boundary range.

    Each round takes the lowest gap ``(b_k, a_{k+1})`` of the boundary range,
    picks a boundary point ``B`` with ``f(B) = b_k`` (away from tangencies and
    as far as possible from the point ``A`` realising ``a_{k+1}``) and adds a
    Gaussian bump near ``B`` until ``f(B)`` exceeds the next interval's
    bottom.  Candidate bumps are re-certified with :func:`check_traversing`.

    Raises
    ------
    RepairFailed
        if no bump keeps the traversing margin; the best margin seen is attached.
    """
    check_traversing(domain, flow, grid_resolution)
    current = flow
    for _ in range(max_rounds):
        ranges = f_boundary_range(domain, current)
        if len(ranges) == 1:
            return current
        b_k, a_next = ranges[0][1], ranges[1][0]
        B, A = _gap_witnesses(domain, current, b_k, a_next)
        current = _lift_at(domain, current, B, A, b_k, a_next, grid_resolution)
    raise RepairFailed(f"range still disconnected after {max_rounds} rounds")


def _gap_witnesses(domain, flow, b_k, a_next, samples=2048):
    """Boundary points realising (up to sampling) the top of the lowest interval and the next bottom."""
    ts = np.arange(samples) / samples
    pts, vals, tang = [], [], []
    for c in domain.curves:
        p, _, n = c.frame(ts)
        vx, vy = flow.v_many(p[:, 0], p[:, 1])
        g = (vx * n[:, 0] + vy * n[:, 1]) / np.hypot(vx, vy)
        pts.append(p)
        vals.append(flow.f_many(p[:, 0], p[:, 1]))
        tang.append(np.abs(g))
    pts, vals, tang = np.vstack(pts), np.concatenate(vals), np.concatenate(tang)
    A = pts[int(np.argmin(np.where(vals >= a_next - 1e-9, vals, np.inf)))]
    span = max(abs(b_k), 1.0)
    top = (np.abs(vals - b_k) <= 1e-6 * span + 1e-3 * (b_k - vals.min() + 1e-12)) & (tang > 0.1)
    if not top.any():
        top = np.abs(vals - b_k) <= 1e-3 * span
    cand = np.flatnonzero(top)
    far = cand[int(np.argmax(np.hypot(pts[cand, 0] - A[0], pts[cand, 1] - A[1])))]
    return (float(pts[far, 0]), float(pts[far, 1])), (float(A[0]), float(A[1]))


def _lift_at(domain, flow, B, A, b_k, a_next, grid_resolution):
    vx, vy = flow.v(*B)
    speed = math.hypot(vx, vy)
    down = (vx / speed, vy / speed)
    n_before = len(f_boundary_range(domain, flow))
    best_margin = -math.inf
    gap = a_next - b_k
    for rho in domain.scale * np.array([0.25, 0.125, 0.5, 1.0]):
        for off in (0.0, 0.5, -0.5, 1.0, -1.0):
            rho = float(rho)
            c = (B[0] + off * rho * down[0], B[1] + off * rho * down[1])
            h = (gap + 0.05 * max(gap, 1e-3)) * math.exp(off**2)
            for _ in range(30):
                bump = f"({flow.f}) + {h!r} * exp(-((x - ({c[0]!r}))^2 + (y - ({c[1]!r}))^2) / {rho * rho!r})"
                cand = flow.with_f(bump)
                if len(f_boundary_range(domain, cand)) < n_before:
                    break
                h *= 1.25
            else:
                continue
            rep = check_traversing(domain, cand, grid_resolution, strict=False)
            best_margin = max(best_margin, rep.min_dfv)
            if rep.ok:
                return cand
    raise RepairFailed(f"no bump near {B} keeps df(v) > 0 (best min df(v) = {best_margin:.3g})", best_margin)
