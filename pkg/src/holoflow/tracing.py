"""Trajectory tracing with boundary events, fibers and the causality map.

Trajectories are integrated in *f-time*: the Lyapunov function is the clock,
``dx/df = v / df(v)``, so f increases by exactly the integrated amount and
any positive conformal factor cancels from the right-hand side.  Boundary
events are found on the signed distance to the boundary: a sign change
brackets an exit, and a dip of the distance inside a step (detected by the
sign of its derivative at both step ends) is resolved by minimisation and
reported as a graze when it touches the boundary.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import (CorruptRecord, GrazingUnresolved, NotInPositiveBoundary, SamplingError,
                     StepLimitExceeded, TracingError, VersionMismatch)
from .flowfield import FlowSpec, MorseStrata, morse_stratify
from .geometry import BoundaryPoint, Domain

FORWARD, BACKWARD = 1, -1
TANGENCY_THRESHOLD = 1e-7
RTOL, ATOL = 1e-11, 1e-13
MAX_STEPS = 20000
REFINE_START, REFINE_LEVELS = 1e-4, 10

DATASET_FORMAT = "holoflow-causality"
DATASET_VERSION = 1

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


def dp45_step(rate, x, y, h):
    """One Dormand-Prince step of size ``h`` for the autonomous system ``rate``.

    Returns the fifth-order solution and the scaled RMS error estimate.
    """
    kx, ky = [0.0] * 7, [0.0] * 7
    kx[0], ky[0] = rate(x, y)
    for i in range(1, 7):
        a = _A[i]
        xi = x + h * sum(a[j] * kx[j] for j in range(i))
        yi = y + h * sum(a[j] * ky[j] for j in range(i))
        kx[i], ky[i] = rate(xi, yi)
    xn = x + h * sum(b * k for b, k in zip(_B5, kx))
    yn = y + h * sum(b * k for b, k in zip(_B5, ky))
    ex = h * sum(e * k for e, k in zip(_E, kx))
    ey = h * sum(e * k for e, k in zip(_E, ky))
    sx = ATOL + RTOL * max(abs(x), abs(xn))
    sy = ATOL + RTOL * max(abs(y), abs(yn))
    return xn, yn, math.sqrt(0.5 * ((ex / sx) ** 2 + (ey / sy) ** 2))


# --- trajectories ----------------------------------------------------------

class Event(NamedTuple):
    point: BoundaryPoint
    f: float
    kind: str  # "entry" | "exit" | "tangency"
    position: tuple = ()


@dataclass(frozen=True)
class Trajectory:
    """Boundary events of one trajectory ordered by increasing f, plus a plotting polyline."""

    events: tuple
    polyline: np.ndarray = field(repr=False, compare=False, default_factory=lambda: np.zeros((0, 2)))

    @property
    def f_interval(self):
        return (self.events[0].f, self.events[-1].f)

    @property
    def signature(self):
        return tuple((e.point.curve_id, e.kind) for e in self.events)

    def __len__(self):
        return len(self.events)


class Tracer:
    """Integrates trajectories of one flow on one domain.

    Parameters
    ----------
    tangency_threshold
        ``|<v, n>| <= threshold * |v|`` marks a boundary point as a tangency.
    graze_tol
        a trajectory whose distance to the boundary dips below this value
        inside the domain is reported as touching the boundary.
    """

    def __init__(self, domain: Domain, flow: FlowSpec, tangency_threshold=TANGENCY_THRESHOLD, graze_tol=None):
        self.domain = domain
        self.flow = flow
        self.rate = flow.flow_rate()
        self.thr = tangency_threshold
        self.graze_tol = graze_tol if graze_tol is not None else max(domain.boundary_tol, 1e-9)
        self.feature = domain.min_feature
        fvals = np.concatenate([flow.f_many(c.polyline[:, 0], c.polyline[:, 1]) for c in domain.curves])
        span = float(fvals.max() - fvals.min())
        self.tau_max = 1.1 * span + 1e-6

    # small helpers ------------------------------------------------------------
    def normal_speed(self, b: BoundaryPoint):
        """``<v, n> / |v|`` at a boundary point (positive: v points into X)."""
        p, _, n = self.domain.curves[b.curve_id].frame(b.t)
        vx, vy = self.flow.v(float(p[0]), float(p[1]))
        return (vx * n[0] + vy * n[1]) / math.hypot(vx, vy)

    def point_kind(self, b: BoundaryPoint):
        g = self.normal_speed(b)
        if abs(g) <= self.thr:
            return "tangency"
        return "entry" if g > 0 else "exit"

    def make_event(self, b: BoundaryPoint, kind=None):
        p = self.domain.curves[b.curve_id].point(b.t)
        x, y = float(p[0]), float(p[1])
        return Event(b, self.flow.f_at(x, y), kind or self.point_kind(b), (x, y))

    def _dist(self, x, y):
        return self.domain.signed_distance(x, y)

    def _ddist(self, x, y, grad, sgn):
        rx, ry = self.rate(x, y)
        return sgn * (grad[0] * rx + grad[1] * ry)

    def _boundary_event(self, x, y, sgn, graze=False):
        d, cid, t, _ = self._dist(x, y)
        b = BoundaryPoint.make(cid, t)
        if graze:
            return self.make_event(b, "tangency")
        kind = self.point_kind(b)
        if kind != "tangency":
            kind = "exit" if sgn > 0 else "entry"
        return self.make_event(b, kind)

    # integration --------------------------------------------------------------
    def _run(self, x, y, sgn, D, first_space=None, probe=False):
        """Integrate from ``(x, y)`` in direction ``sgn`` until the trajectory leaves X.

        Returns ``(events, polyline)`` where events exclude the starting point.
        ``first_space`` bounds the length of the first step; ``probe`` marks a
        start on a tangency where the first step only decides whether the
        trajectory continues inside X.
        """
        rate, step, dist = self.rate, dp45_step, self._dist
        poly = [(x, y)]
        events = []
        tau = 0.0
        _, _, _, grad = dist(x, y)
        rx, ry = rate(x, y)
        speed = math.hypot(rx, ry)
        h = (first_space if first_space is not None else 0.1 * self.feature) / speed
        first = True
        for _ in range(MAX_STEPS):
            rx, ry = rate(x, y)
            speed = math.hypot(rx, ry)
            if first and first_space is not None:
                h = min(h, first_space / speed)
            else:
                h = min(h, max(0.9 * D, 0.1 * self.feature) / speed)
            if tau + h > self.tau_max:
                h = self.tau_max - tau
                if h <= 0:
                    raise StepLimitExceeded(f"trajectory from {poly[0]} exceeded the f-span {self.tau_max:.6g}")
            xn, yn, err = step(rate, x, y, sgn * h)
            if err > 1.0:
                h *= max(0.2, 0.9 * err ** -0.2)
                continue
            Dn, _, _, gradn = dist(xn, yn)

            def D_at(s, x=x, y=y):
                px, py, _ = step(rate, x, y, sgn * s)
                return dist(px, py)[0]

            if first and probe:
                if Dn <= 0:
                    return events, poly  # the tangency germ leaves X on this side
            elif Dn < 0:
                s_lo = 0.0
                if first:
                    # starting on the boundary: step back inside before bracketing the exit
                    s_lo = h
                    while D_at(s_lo) <= 0:
                        s_lo *= 0.5
                        if s_lo < 1e-14 * h:
                            return events, poly  # leaves immediately
                try:
                    s_star = brentq(D_at, s_lo, h, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                except ValueError as exc:
                    raise GrazingUnresolved(f"cannot bracket the exit between {poly[-1]} and {(xn, yn)}") from exc
                px, py, _ = step(rate, x, y, sgn * s_star)
                poly.append((px, py))
                ev = self._boundary_event(px, py, sgn)
                resumed = self._resume_after_touch(px, py, sgn) if ev.kind == "tangency" else None
                if resumed is None:
                    events.append(ev)
                    return events, poly
                # an interior tangency: the trajectory touches the boundary and stays in X
                events.append(ev._replace(kind="tangency"))
                xn, yn, Dn, gradn, s_extra = resumed
                tau += s_star + s_extra
                x, y, D, grad = xn, yn, Dn, gradn
                poly.append((x, y))
                first = False
                continue
            elif not first and h * speed * 1.05 > 0.9 * D:
                # the step came close to the boundary: look for a dip of the distance
                if self._ddist(x, y, grad, sgn) < 0 < self._ddist(xn, yn, gradn, sgn):
                    res = minimize_scalar(D_at, bounds=(0.0, h), method="bounded", options={"xatol": 1e-13 * max(h, 1.0)})
                    s_min, d_min = float(res.x), float(res.fun)
                    if d_min < -self.graze_tol:
                        try:
                            s_star = brentq(D_at, 0.0, s_min, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                        except ValueError as exc:
                            raise GrazingUnresolved(f"dip below the boundary near {(xn, yn)} cannot be bracketed") from exc
                        px, py, _ = step(rate, x, y, sgn * s_star)
                        poly.append((px, py))
                        events.append(self._boundary_event(px, py, sgn))
                        return events, poly
                    if d_min <= self.graze_tol:
                        px, py, _ = step(rate, x, y, sgn * s_min)
                        events.append(self._boundary_event(px, py, sgn, graze=True))
            first = False
            x, y, D, grad = xn, yn, Dn, gradn
            tau += h
            poly.append((x, y))
            h *= min(5.0, 0.9 * max(err, 1e-10) ** -0.2)
        raise StepLimitExceeded(f"trajectory from {poly[0]} needed more than {MAX_STEPS} steps")

    def _resume_after_touch(self, x, y, sgn):
        """Probe past a tangential boundary contact; ``None`` if the trajectory leaves X."""
        rx, ry = self.rate(x, y)
        s = 1e-3 * self.feature / math.hypot(rx, ry)
        xn, yn, _ = dp45_step(self.rate, x, y, sgn * s)
        Dn, _, _, gradn = self._dist(xn, yn)
        if Dn <= self.graze_tol:
            return None
        return xn, yn, Dn, gradn, s

    def trace(self, start: BoundaryPoint, direction: int = FORWARD) -> Trajectory:
        """Trace from a boundary point; events are returned in integration order."""
        start = BoundaryPoint.make(*start)
        ev0 = self.make_event(start)
        p = ev0.position
        g = self.normal_speed(start)
        if abs(g) <= self.thr:
            events, poly = self._run(p[0], p[1], direction, 0.0, first_space=1e-3 * self.feature, probe=True)
        elif g * direction > 0:
            events, poly = self._run(p[0], p[1], direction, 0.0, first_space=0.25 * self.feature * abs(g))
        else:
            events, poly = [], [p]
        return Trajectory((ev0, *events), np.asarray(poly))

    def trace_from_point(self, p, direction: int = FORWARD):
        """Events met when integrating from an interior point (no start event)."""
        x, y = float(p[0]), float(p[1])
        D = self._dist(x, y)[0]
        if D <= 0:
            raise TracingError(f"point {p} is not inside the domain")
        events, poly = self._run(x, y, direction, D)
        return events, np.asarray(poly)

    def fiber(self, x: BoundaryPoint) -> Trajectory:
        """All boundary points of the trajectory through ``x``, ordered by f."""
        back = self.trace(x, BACKWARD)
        fwd = self.trace(x, FORWARD)
        events = tuple(reversed(back.events[1:])) + fwd.events
        poly = np.vstack([back.polyline[::-1], fwd.polyline[1:]])
        return Trajectory(events, poly)

    def fiber_of_point(self, p) -> Trajectory:
        """Fiber of the trajectory through an interior point."""
        back, pb = self.trace_from_point(p, BACKWARD)
        fwd, pf = self.trace_from_point(p, FORWARD)
        return Trajectory(tuple(reversed(back)) + tuple(fwd), np.vstack([pb[::-1], pf[1:]]))

    def causality(self, x: BoundaryPoint) -> BoundaryPoint:
        """The next boundary point after ``x`` along its trajectory (``x`` itself if none)."""
        x = BoundaryPoint.make(*x)
        if self.point_kind(x) == "exit":
            raise NotInPositiveBoundary(f"{x} lies in the negative boundary")
        fwd = self.trace(x, FORWARD)
        return fwd.events[1].point if len(fwd.events) > 1 else x


def trace(domain, flow, start, direction=FORWARD) -> Trajectory:
    return Tracer(domain, flow).trace(start, direction)


def fiber(domain, flow, x) -> Trajectory:
    return Tracer(domain, flow).fiber(x)


def causality(domain, flow, x) -> BoundaryPoint:
    return Tracer(domain, flow).causality(x)


# --- the sampled causality map -------------------------------------------

class Sample(NamedTuple):
    source: BoundaryPoint
    target: BoundaryPoint
    f_source: float
    f_target: float
    fiber: tuple  # of (curve_id, t, f, kind)
    origin: str  # "uniform" | "refined" | "tangency" | "closure"

    @property
    def fixed(self):
        return self.source == self.target

    @property
    def signature(self):
        return tuple((e[0], e[3]) for e in self.fiber)


def _param_dist(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


@dataclass
class CausalityDataset:
    """Sampled causality map with strata and the boundary trace of f."""

    samples: list
    strata: MorseStrata
    f_boundary: list  # per curve, values of f at t = k / len
    header: dict = field(default_factory=dict)

    def f_at(self, b: BoundaryPoint):
        """Periodic linear interpolation of the tabulated boundary values."""
        return _interp_periodic(self.f_boundary[b.curve_id], b.t)

    # persistence ----------------------------------------------------------
    def dumps(self) -> str:
        head = dict(self.header)
        head.update(format=DATASET_FORMAT, version=DATASET_VERSION, count=len(self.samples),
                    strata=self.strata.to_dict(), f_boundary=self.f_boundary)
        lines = [json.dumps(head, sort_keys=True, separators=(",", ":"))]
        for s in self.samples:
            rec = {"source": list(s.source), "target": list(s.target), "f_source": s.f_source,
                   "f_target": s.f_target, "fiber": [list(e) for e in s.fiber], "origin": s.origin,
                   "signature": "|".join(f"{c}{k[0]}" for c, k in s.signature)}
            lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "CausalityDataset":
        lines = text.splitlines()
        if not lines:
            raise CorruptRecord("header", "empty dataset file")
        try:
            head = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise CorruptRecord("header", str(exc)) from exc
        if head.get("format") != DATASET_FORMAT:
            raise VersionMismatch(f"not a causality dataset (format={head.get('format')!r})")
        if head.get("version") != DATASET_VERSION:
            raise VersionMismatch(f"dataset version {head.get('version')} but this reader expects {DATASET_VERSION}")
        samples = []
        for i, line in enumerate(lines[1:]):
            try:
                r = json.loads(line)
                fib = tuple((int(e[0]), float(e[1]), float(e[2]), str(e[3])) for e in r["fiber"])
                s = Sample(BoundaryPoint(int(r["source"][0]), float(r["source"][1])),
                           BoundaryPoint(int(r["target"][0]), float(r["target"][1])),
                           float(r["f_source"]), float(r["f_target"]), fib, str(r["origin"]))
                if any(e[3] not in ("entry", "exit", "tangency") for e in fib):
                    raise ValueError("unknown event kind")
                if not all(math.isfinite(v) for v in (s.source.t, s.target.t, s.f_source, s.f_target)):
                    raise ValueError("non-finite value")
            except (ValueError, KeyError, TypeError, IndexError, json.JSONDecodeError) as exc:
                raise CorruptRecord(i, str(exc)) from exc
            samples.append(s)
        if head.get("count") not in (None, len(samples)):
            raise CorruptRecord(len(samples), f"header announces {head['count']} records")
        strata = MorseStrata.from_dict(head.pop("strata"))
        fb = head.pop("f_boundary")
        for k in ("format", "version", "count"):
            head.pop(k, None)
        return cls(samples, strata, fb, head)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    # statistics -----------------------------------------------------------
    def cardinality_histogram(self):
        hist = {}
        for s in self.samples:
            hist[len(s.fiber)] = hist.get(len(s.fiber), 0) + 1
        return dict(sorted(hist.items()))


def _interp_periodic(values, t):
    n = len(values)
    u = (t % 1.0) * n
    i = int(math.floor(u)) % n
    w = u - math.floor(u)
    return (1 - w) * values[i] + w * values[(i + 1) % n]


def scene_hash(domain: Domain, flow: FlowSpec, **extra) -> str:
    payload = {"domain": domain.to_dict(), "flow": flow.to_dict(), **extra}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _fiber_tuple(traj: Trajectory):
    return tuple((e.point.curve_id, e.point.t, e.f, e.kind) for e in traj.events)


def _sample_from_fiber(fib, source: BoundaryPoint, origin):
    # the source is the fiber event closest to it on its own curve
    idx = min((i for i, e in enumerate(fib) if e[0] == source.curve_id), key=lambda i: _param_dist(fib[i][1], source.t))
    src = fib[idx]
    tgt = fib[idx + 1] if idx + 1 < len(fib) else src
    return Sample(BoundaryPoint(src[0], src[1]), BoundaryPoint(tgt[0], tgt[1]), src[2], tgt[2], fib, origin)


def refinement_offsets(start=REFINE_START, levels=REFINE_LEVELS):
    """Parameter offsets accumulating geometrically toward a special point."""
    return [start * 0.5**j for j in range(levels)]


def sample_causality_map(domain: Domain, flow: FlowSpec, density: float = 100.0, strata: MorseStrata | None = None,
                         f_table_size: int = 512, tracer: Tracer | None = None) -> CausalityDataset:
    """Sample C_v on the positive boundary.

    Sources are spaced uniformly in arc length (``density`` per unit length)
    on every positive arc, refined geometrically toward each arc end, and
    complemented by every tangency point and every entry point of a
    tangency trajectory (with its own geometric refinement).

    Raises
    ------
    SamplingError
        aggregating the failed traces with their sample provenance.
    """
    strata = strata if strata is not None else morse_stratify(domain, flow)
    tr = tracer or Tracer(domain, flow)
    sources = []  # (curve_id, t, origin)
    for arc in strata.positive_arcs:
        c = domain.curves[arc.curve_id]
        L = c.arclength(arc.start, arc.start + arc.length) if not arc.full else c.length
        n = max(2, int(round(L * density)))
        ts = c.param_at_arclength(arc.start, (np.arange(n) + 0.5) * L / n)
        sources += [(arc.curve_id, float(t), "uniform") for t in np.atleast_1d(ts)]
        if not arc.full:
            for o in refinement_offsets():
                if o < 0.25 * arc.length:
                    sources += [(arc.curve_id, (arc.start + o) % 1.0, "refined"),
                                (arc.curve_id, (arc.start + arc.length - o) % 1.0, "refined")]
    failures = []
    samples = []
    closure = []
    for tp in strata.tangency_points:
        try:
            fib = tr.fiber(tp.point)
        except TracingError as exc:
            failures.append((len(samples), tp.point.curve_id, tp.point.t, exc))
            continue
        ft = _fiber_tuple(fib)
        samples.append(_sample_from_fiber(ft, tp.point, "tangency"))
        for e in ft:
            if e[3] == "entry":
                closure.append((e, ft))
    seen = set()
    for e, ft in closure:
        key = (e[0], round(e[1], 12))
        if key in seen:
            continue
        seen.add(key)
        samples.append(_sample_from_fiber(ft, BoundaryPoint(e[0], e[1]), "closure"))
        arc = next((a for a in strata.positive_arcs if a.contains(BoundaryPoint(e[0], e[1]))), None)
        for o in refinement_offsets():
            for t in (e[1] + o, e[1] - o):
                if arc is None or arc.contains(BoundaryPoint(e[0], t % 1.0)):
                    sources.append((e[0], t % 1.0, "refined"))
    for i, (cid, t, origin) in enumerate(sources):
        b = BoundaryPoint.make(cid, t)
        try:
            fib = tr.fiber(b)
        except TracingError as exc:
            failures.append((i, cid, t, exc))
            continue
        samples.append(_sample_from_fiber(_fiber_tuple(fib), b, origin))
    if failures:
        raise SamplingError(failures)
    # deterministic order and no duplicate sources
    samples.sort(key=lambda s: (s.source.curve_id, s.source.t, s.origin))
    unique = []
    for s in samples:
        if unique and unique[-1].source == s.source:
            continue
        unique.append(s)
    table_t = np.arange(f_table_size) / f_table_size
    f_boundary = []
    for c in domain.curves:
        p = c.point(table_t)
        f_boundary.append([float(v) for v in flow.f_many(p[:, 0], p[:, 1])])
    header = {"scene_hash": scene_hash(domain, flow), "density": density,
              "tolerances": {"tangency": tr.thr, "graze": tr.graze_tol, "rtol": RTOL, "atol": ATOL,
                             "refine": strata.refine_tolerance, "boundary": domain.boundary_tol}}
    return CausalityDataset(unique, strata, f_boundary, header)


# --- Property A ------------------------------------------------------------

class PropertyAReport(NamedTuple):
    ok: bool
    violations: list


def check_property_A(dataset: CausalityDataset) -> PropertyAReport:
    """Every sampled fiber must cross the boundary transversally somewhere,
    or be a singleton with a quadratic tangency."""
    bad = []
    for i, s in enumerate(dataset.samples):
        kinds = [e[3] for e in s.fiber]
        if any(k in ("entry", "exit") for k in kinds):
            continue
        if len(s.fiber) == 1:
            tp = dataset.strata.tangency_at(BoundaryPoint(s.fiber[0][0], s.fiber[0][1]), tol=1e-6)
            if tp is not None and tp.order == 1:
                continue
        bad.append((i, s.source, f"fiber of {len(s.fiber)} tangency point(s) with no transversal crossing"))
    return PropertyAReport(not bad, bad)
