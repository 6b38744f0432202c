"""Reconstruction of the bulk from boundary data.

:func:`extract_boundary_data` is the firewall: it keeps only what an
observer on the boundary can know (abstract circles with their parameters
and lengths, the tabulated boundary values of f, the sampled causality
pairing and the tangency strata) and drops every planar coordinate and
every traced fiber.  Fibers are rebuilt from the pairing alone by chaining
``x -> C(x) -> C(C(x))``, and the trajectory graph, the alpha-model and the
topological invariants are computed from those chains.

:func:`extend_boundary_map` extends a boundary map between two scenes into
the interior with the two-foliation grid: a point is determined by its
trajectory (mapped through the boundary) and its f-level.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import networkx as nx
import numpy as np
from scipy.interpolate import LinearNDInterpolator

from .errors import (BoundaryTraceIncomplete, CommutationViolation, LevelOutOfRange, NotInPositiveBoundary,
                     VersionMismatch)
from .flowfield import Arc, MorseStrata, Tangency
from .geometry import BoundaryPoint, Domain
from .tracing import FORWARD, RTOL, CausalityDataset, Tracer, dp45_step
from .trajspace import FiberSample, GraphLocation, TrajectoryGraph, graph_from_fibers, invariants, locate_fiber

BOUNDARY_FORMAT = "holoflow-boundary"
BOUNDARY_VERSION = 1
CHAIN_TOL = 1e-9


class Pair(NamedTuple):
    source: BoundaryPoint
    target: BoundaryPoint
    f_source: float
    f_target: float

    @property
    def fixed(self):
        return self.source == self.target


@dataclass(frozen=True)
class BoundaryData:
    """Boundary-confined data: circles, f on the boundary, causality pairing, strata."""

    circle_lengths: tuple
    f_boundary: tuple
    pairs: tuple
    positive_arcs: tuple
    tangencies: tuple  # (BoundaryPoint, order, sign, kind)
    scene_hash: str = ""

    def to_json(self) -> str:
        payload = {
            "format": BOUNDARY_FORMAT, "version": BOUNDARY_VERSION, "scene_hash": self.scene_hash,
            "circle_lengths": list(self.circle_lengths), "f_boundary": [list(v) for v in self.f_boundary],
            "pairs": [[p.source.curve_id, p.source.t, p.target.curve_id, p.target.t, p.f_source, p.f_target]
                      for p in self.pairs],
            "positive_arcs": [list(a) for a in self.positive_arcs],
            "tangencies": [[b.curve_id, b.t, o, s, k] for b, o, s, k in self.tangencies],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "BoundaryData":
        d = json.loads(text)
        if d.get("format") != BOUNDARY_FORMAT or d.get("version") != BOUNDARY_VERSION:
            raise VersionMismatch(f"unsupported boundary data {d.get('format')!r} v{d.get('version')}")
        return cls(
            tuple(float(v) for v in d["circle_lengths"]),
            tuple(tuple(float(x) for x in v) for v in d["f_boundary"]),
            tuple(Pair(BoundaryPoint(int(a), float(b)), BoundaryPoint(int(c), float(e)), float(f), float(g))
                  for a, b, c, e, f, g in d["pairs"]),
            tuple(Arc(int(a[0]), float(a[1]), float(a[2])) for a in d["positive_arcs"]),
            tuple((BoundaryPoint(int(c), float(t)), int(o), s, k) for c, t, o, s, k in d["tangencies"]),
            d.get("scene_hash", ""),
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @property
    def strata(self) -> MorseStrata:
        tps = tuple(Tangency(b, o, s, k, ()) for b, o, s, k in self.tangencies)
        return MorseStrata(self.positive_arcs, (), tps)


def extract_boundary_data(dataset: CausalityDataset, domain: Domain | None = None) -> BoundaryData:
    """Forget the bulk: keep per-circle data, f on the boundary, the pairing and the strata."""
    lengths = tuple(float(c.length) for c in domain.curves) if domain is not None else tuple(
        float("nan") for _ in dataset.f_boundary)
    pairs = tuple(Pair(s.source, s.target, s.f_source, s.f_target) for s in dataset.samples)
    tangs = tuple((tp.point, tp.order, tp.sign, tp.kind) for tp in dataset.strata.tangency_points)
    return BoundaryData(lengths, tuple(tuple(v) for v in dataset.f_boundary), pairs,
                        tuple(dataset.strata.positive_arcs), tangs, dataset.header.get("scene_hash", ""))


# --- fibers from the pairing -----------------------------------------------

class _SourceIndex:
    """Tolerance lookup of pair sources per circle."""

    def __init__(self, pairs):
        self.by_curve = {}
        for i, p in enumerate(pairs):
            self.by_curve.setdefault(p.source.curve_id, []).append((p.source.t, i))
        for v in self.by_curve.values():
            v.sort()
        self.keys = {c: [t for t, _ in v] for c, v in self.by_curve.items()}

    def find(self, b: BoundaryPoint, tol=CHAIN_TOL):
        ts = self.keys.get(b.curve_id)
        if not ts:
            return None
        k = bisect.bisect_left(ts, b.t)
        for j in (k - 1, k, k + 1, 0, len(ts) - 1):
            if 0 <= j < len(ts):
                d = abs(ts[j] - b.t) % 1.0
                if min(d, 1.0 - d) <= tol:
                    return self.by_curve[b.curve_id][j][1]
        return None


def chain_fibers(bd: BoundaryData):
    """Rebuild every sampled fiber by chaining the causality pairing.

    Returns one ordered event tuple ``(curve_id, t, f, kind)`` per pair.
    """
    strata = bd.strata
    pairs = bd.pairs
    index = _SourceIndex(pairs)
    nxt = {}
    for i, p in enumerate(pairs):
        if not p.fixed:
            j = index.find(p.target)
            if j is not None and j != i:
                nxt[i] = j
    has_prev = set(nxt.values())

    def event(b, f):
        return (b.curve_id, b.t, f, {"positive": "entry", "negative": "exit"}.get(strata.classify(b), "tangency"))

    fibers = [None] * len(pairs)
    for i in range(len(pairs)):
        if i in has_prev:
            continue
        chain = [i]
        while chain[-1] in nxt and len(chain) <= len(pairs):
            chain.append(nxt[chain[-1]])
        evs = [event(pairs[k].source, pairs[k].f_source) for k in chain]
        last = pairs[chain[-1]]
        if not last.fixed:
            evs.append(event(last.target, last.f_target))
        fib = tuple(evs)
        for k in chain:
            fibers[k] = fib
    for i in range(len(pairs)):
        if fibers[i] is None:  # a cycle cannot occur for a traversing flow; keep the pair itself
            p = pairs[i]
            fibers[i] = (event(p.source, p.f_source), event(p.target, p.f_target))
    return fibers


# --- alpha model -----------------------------------------------------------

class Piece(NamedTuple):
    """One branch of the boundary image over an edge: entries (``low``) or exits (``high``)."""

    edge: int
    side: str
    coordinates: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class AlphaModel:
    graph: TrajectoryGraph
    vertex_intervals: tuple  # per vertex (f_min, f_max)
    pieces: tuple = field(repr=False)

    def interval(self, loc: GraphLocation):
        """The f-interval of the fibers at a graph location (linear in the edge coordinate)."""
        if loc.kind == "vertex":
            return self.vertex_intervals[loc.index]
        e = self.graph.edges[loc.index]
        c = np.array([r[0] for r in e.samples])
        lo = float(np.interp(loc.coordinate, c, [r[1] for r in e.samples]))
        hi = float(np.interp(loc.coordinate, c, [r[2] for r in e.samples]))
        return lo, hi


def build_alpha_model(bd: BoundaryData) -> AlphaModel:
    """Trajectory graph, interval function and boundary image from boundary data only."""
    fibers = chain_fibers(bd)
    samples = [FiberSample(p.source, fib) for p, fib in zip(bd.pairs, fibers)]
    tangs = [(b, k) for b, _, _, k in bd.tangencies]
    graph = graph_from_fibers(bd.positive_arcs, tangs, samples)
    vint = tuple((min(e[2] for e in v.fiber), max(e[2] for e in v.fiber)) for v in graph.vertices)
    pieces = []
    for e in graph.edges:
        c = np.array([r[0] for r in e.samples])
        pieces.append(Piece(e.id, "low", c, np.array([r[1] for r in e.samples])))
        pieces.append(Piece(e.id, "high", c, np.array([r[2] for r in e.samples])))
    return AlphaModel(graph, vint, tuple(pieces))


def boundary_components(model: AlphaModel) -> int:
    """Count the closed curves of the boundary image.

    Each edge carries a low and a high branch.  At a vertex every branch end
    is attached to the fiber event whose f-value it converges to; the two
    branch ends meeting at the same event are glued.
    """
    g = nx.Graph()
    ends = {}
    for k, pc in enumerate(model.pieces):
        g.add_node(k)
        e = model.graph.edges[pc.edge]
        if e.ends[0] is None:
            continue  # a free loop: the branch is a closed curve by itself
        for pos, vid in ((0, e.ends[0]), (-1, e.ends[1])):
            v = model.graph.vertices[vid]
            fs = [ev[2] for ev in v.fiber]
            limit = float(pc.values[pos])
            j = int(np.argmin([abs(limit - f) for f in fs]))
            gap = min((abs(a - b) for a in fs for b in fs if a != b), default=math.inf)
            if abs(limit - fs[j]) > 0.5 * gap:
                raise BoundaryTraceIncomplete(
                    f"branch {pc.side} of edge {pc.edge} ends at f={limit:.6g}, far from every event of vertex {vid}")
            ends.setdefault((vid, j), []).append(k)
    for key, ks in ends.items():
        if len(ks) != 2:
            raise BoundaryTraceIncomplete(f"{len(ks)} branch ends meet at vertex {key[0]} event {key[1]} (expected 2)")
        g.add_edge(*ks)
    return nx.number_connected_components(g)


def reconstruct_invariants(model: AlphaModel):
    inv = invariants(model.graph)
    return {"chi_X": inv["chi"], "boundary_components": boundary_components(model),
            "valence_histogram": inv["valence_histogram"]}


def compare_with_truth(domain: Domain, model: AlphaModel):
    """Reconstructed invariants against the ground truth of the generating domain."""
    rec = reconstruct_invariants(model)
    holes = len(domain.holes)
    truth = {"chi_X": 1 - holes, "boundary_components": 1 + holes}
    return {
        "truth": truth, "reconstructed": rec,
        "chi_match": rec["chi_X"] == truth["chi_X"],
        "boundary_match": rec["boundary_components"] == truth["boundary_components"],
        "match": rec["chi_X"] == truth["chi_X"] and rec["boundary_components"] == truth["boundary_components"],
    }


# --- extension of boundary maps --------------------------------------------

class BoundaryMap:
    """A map between boundaries, ``BoundaryPoint -> BoundaryPoint``."""

    def __init__(self, fn: Callable[[BoundaryPoint], BoundaryPoint], name="map"):
        self.fn = fn
        self.name = name

    def __call__(self, b):
        return self.fn(BoundaryPoint.make(*b))

    @classmethod
    def identity(cls):
        return cls(lambda b: b, "identity")

    @classmethod
    def shift(cls, offsets):
        """Per-curve parameter shift ``t -> t + offsets[curve_id]`` (rotations of circles)."""
        return cls(lambda b: BoundaryPoint.make(b.curve_id, b.t + offsets[b.curve_id]), "shift")

    @classmethod
    def from_table(cls, rows):
        """Piecewise-linear map from rows ``(curve1, t1, curve2, t2)`` sorted per source curve."""
        tables = {}
        for c1, t1, c2, t2 in rows:
            tables.setdefault(int(c1), []).append((float(t1) % 1.0, int(c2), float(t2)))
        for v in tables.values():
            v.sort()

        def fn(b):
            rows_c = tables[b.curve_id]
            ts = [r[0] for r in rows_c]
            k = bisect.bisect_right(ts, b.t) - 1
            a, z = rows_c[k], rows_c[(k + 1) % len(rows_c)]
            span = (z[0] - a[0]) % 1.0 or 1.0
            w = ((b.t - a[0]) % 1.0) / span
            dt = (z[2] - a[2] + 0.5) % 1.0 - 0.5 if z[1] == a[1] else 0.0
            if dt == -0.5:
                dt = 0.5  # a half turn is ambiguous: keep the orientation
            return BoundaryPoint.make(a[1], a[2] + w * dt)

        return cls(fn, "table")


def _scene_parts(scene):
    if isinstance(scene, tuple):
        return scene
    return scene.domain, scene.flow


class PhiSamples(NamedTuple):
    points: np.ndarray  # (N, 2) grid points of X1
    images: np.ndarray  # (N, 2) their images in X2
    commutation_error: float

    def interpolate(self, pts):
        """Barycentric interpolation of the sampled map at further points."""
        interp = LinearNDInterpolator(self.points, self.images)
        return interp(np.asarray(pts, dtype=float))


def check_commutation(tracer1: Tracer, tracer2: Tracer, phi: BoundaryMap, sources, tol=1e-5):
    """Worst discrepancy of ``C2(phi(x))`` against ``phi(C1(x))`` over the given sources."""
    worst, witness = 0.0, None
    for b in sources:
        try:
            lhs = tracer2.causality(phi(b))
        except NotInPositiveBoundary:
            lhs = None  # phi sends an entry point to an exit point
        rhs = phi(tracer1.causality(b))
        if lhs is None or lhs.curve_id != rhs.curve_id:
            d = 1.0
        else:
            d = abs(lhs.t - rhs.t) % 1.0
            d = min(d, 1.0 - d)
        if d > worst:
            worst, witness = d, tuple(b)
    if worst > tol:
        raise CommutationViolation(worst, witness)
    return worst


def level_point(tracer: Tracer, start: BoundaryPoint, level: float):
    """The point of the forward trajectory from ``start`` where f reaches ``level``."""
    traj = tracer.trace(start, FORWARD)
    f0, f1 = traj.events[0].f, traj.events[-1].f
    slack = 1e-9 * max(1.0, abs(f1 - f0))
    if not (f0 - slack <= level <= f1 + slack):
        raise LevelOutOfRange(f"level {level:.9g} outside [{f0:.9g}, {f1:.9g}] of the trajectory from {tuple(start)}")
    x, y = traj.events[0].position
    remaining = level - f0
    h = remaining
    while remaining > 1e-15:
        h = min(h, remaining)
        xn, yn, err = dp45_step(tracer.rate, x, y, h)
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            continue
        x, y = xn, yn
        remaining -= h
        h *= min(5.0, 0.9 * max(err, 1e-10) ** -0.2)
    return x, y


def interior_grid(domain: Domain, n: int, margin: float | None = None):
    """``n x n`` grid over the bounding box restricted to points well inside X."""
    margin = 1e-3 * domain.scale if margin is None else margin
    x0, y0, x1, y1 = domain.bbox
    xs = np.linspace(x0, x1, n + 2)[1:-1]
    ys = np.linspace(y0, y1, n + 2)[1:-1]
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    d = np.array([domain.signed_distance(float(p[0]), float(p[1]))[0] for p in pts])
    return pts[d > margin]


def extend_boundary_map(scene1, scene2, phi_boundary: BoundaryMap, grid: int = 50, sources=None,
                        commutation_tol: float = 1e-5) -> PhiSamples:
    """Extend a boundary map commuting with the causality maps to the interior.

    For a grid point ``x`` of X1 the trajectory through ``x`` is traced back
    to its entry point, which is mapped to X2; the image of ``x`` is the
    point of the corresponding X2-trajectory at the level ``f1(x)``.

    Raises
    ------
    CommutationViolation
        if ``C2 o phi != phi o C1`` on the probe sources.
    LevelOutOfRange
        if a level is not met by the image trajectory.
    """
    d1, fl1 = _scene_parts(scene1)
    d2, fl2 = _scene_parts(scene2)
    tr1, tr2 = Tracer(d1, fl1), Tracer(d2, fl2)
    if sources is None:
        from .flowfield import morse_stratify

        strata = morse_stratify(d1, fl1)
        sources = []
        for arc in strata.positive_arcs:
            for q in np.linspace(0.03, 0.97, 25):
                sources.append(BoundaryPoint.make(arc.curve_id, arc.start + q * arc.length))
    err = check_commutation(tr1, tr2, phi_boundary, sources, commutation_tol)
    pts = interior_grid(d1, grid)
    imgs = np.empty_like(pts)
    for k, (x, y) in enumerate(pts):
        back, _ = tr1.trace_from_point((x, y), -1)
        entry = back[-1].point
        level = fl1.f_at(float(x), float(y))
        imgs[k] = level_point(tr2, phi_boundary(entry), level)
    return PhiSamples(pts, imgs, err)
