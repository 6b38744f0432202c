"""The trajectory space T(v) as a finite graph.

Every non-singular trajectory enters X through exactly one point of the
positive boundary, so the generic trajectories are parametrised by the
positive arcs once the *special* points are removed: tangency points (arc
ends) and the entry points of tangency trajectories.  Each open interval
between consecutive special points is one edge of T(v); each tangency
trajectory is one vertex, and an edge is incident to the vertices owning
its two end points.  Fiber signatures are required to be constant on every
interval, which is how a too-coarse sampling is detected.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import networkx as nx

from .errors import SignatureAmbiguity, ValenceViolation
from .geometry import BoundaryPoint

MATCH_TOL = 1e-7


def _pdist(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


class FiberSample(NamedTuple):
    """A sampled source point with the ordered events ``(curve_id, t, f, kind)`` of its fiber."""

    source: BoundaryPoint
    fiber: tuple


@dataclass(frozen=True)
class Vertex:
    id: int
    fiber: tuple
    kind: str  # "external" | "internal" | "crossing"
    tangencies: tuple
    valence: int = 0


@dataclass(frozen=True)
class Edge:
    id: int
    ends: tuple  # (vertex id at the low end of the interval, vertex id at the high end); None for a free loop
    curve_id: int
    t0: float  # parameter interval (t0 -> t1 in the direction of the arc) on a positive arc
    t1: float
    signature: tuple
    samples: tuple = field(repr=False, default=())  # (coordinate, f_low, f_high, fiber)

    @property
    def span(self):
        return (self.t1 - self.t0) % 1.0 or 1.0

    def coordinate(self, t):
        return ((t - self.t0) % 1.0) / self.span


class GraphLocation(NamedTuple):
    kind: str  # "vertex" | "edge"
    index: int
    coordinate: float | None = None


@dataclass(frozen=True)
class TrajectoryGraph:
    vertices: tuple
    edges: tuple

    def invariants(self):
        return invariants(self)

    def to_networkx(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        for v in self.vertices:
            g.add_node(v.id, kind=v.kind, valence=v.valence)
        for e in self.edges:
            if e.ends[0] is None:
                # a closed family of trajectories with no special member: a circle
                u = ("loop", e.id)
                g.add_node(u, kind="free", valence=2)
                g.add_edge(u, u, signature=e.signature)
            else:
                g.add_edge(e.ends[0], e.ends[1], signature=e.signature)
        return g

    def isomorphic(self, other: "TrajectoryGraph") -> bool:
        em = nx.algorithms.isomorphism.categorical_multiedge_match("signature", None)
        nm = nx.algorithms.isomorphism.categorical_node_match("valence", None)
        return nx.is_isomorphic(self.to_networkx(), other.to_networkx(), node_match=nm, edge_match=em)

    def to_dict(self):
        """Adjacency export with fiber signatures and f-intervals."""
        return {
            "vertices": [{"id": v.id, "kind": v.kind, "valence": v.valence,
                          "fiber": [list(e) for e in v.fiber]} for v in self.vertices],
            "edges": [{"id": e.id, "ends": list(e.ends), "curve_id": e.curve_id, "t0": e.t0, "t1": e.t1,
                       "signature": ["%d:%s" % s for s in e.signature],
                       "f_interval": [[s[0], s[1], s[2]] for s in e.samples]} for e in self.edges],
        }

    def locate(self, fiber) -> GraphLocation:
        return locate_fiber(self, fiber)


def graph_from_fibers(positive_arcs, tangencies, samples, tol=MATCH_TOL) -> TrajectoryGraph:
    """Assemble T(v) from positive arcs, tangency points and sampled fibers.

    Parameters
    ----------
    positive_arcs
        :class:`~holoflow.flowfield.Arc` instances covering the positive boundary.
    tangencies
        ``(BoundaryPoint, kind)`` pairs, ``kind`` one of external/internal/crossing.
    samples
        :class:`FiberSample` list; it must contain the fiber of every tangency point.

    Raises
    ------
    SignatureAmbiguity
        if a fiber signature changes inside an interval (sampling too coarse)
        or an interval holds no sample.
    ValenceViolation
        if a vertex valence is not 1 or 3.
    """
    samples = list(samples)

    def find_sample(b):
        best = None
        for s in samples:
            if s.source.curve_id == b.curve_id:
                d = _pdist(s.source.t, b.t)
                if d <= tol and (best is None or d < best[0]):
                    best = (d, s)
        return None if best is None else best[1]

    # vertices: tangency trajectories, merged when they share events
    vfibers, vkinds, vtangs = [], [], []
    for b, kind in tangencies:
        s = find_sample(b)
        if s is None:
            raise SignatureAmbiguity(f"no sampled fiber through the tangency point {tuple(b)}")
        for i, fib in enumerate(vfibers):
            if any(e[0] == b.curve_id and _pdist(e[1], b.t) <= tol for e in fib):
                vtangs[i].append(b)
                break
        else:
            vfibers.append(s.fiber)
            vkinds.append(kind)
            vtangs.append([b])

    def owner(cid, t):
        for i, fib in enumerate(vfibers):
            for e in fib:
                if e[0] == cid and _pdist(e[1], t) <= tol:
                    return i
        return None

    # special points on each positive arc
    edges_raw = []  # (ends, curve_id, t0, t1)
    for arc in positive_arcs:
        cuts = []
        for i, fib in enumerate(vfibers):
            for e in fib:
                b = BoundaryPoint(e[0], e[1])
                if e[0] != arc.curve_id or not arc.contains(b, tol):
                    continue
                o = arc.offset(e[1])
                if o > 1.0 - tol:
                    o = 0.0
                if arc.full or tol < o < arc.length - tol:
                    cuts.append((o, i))
        cuts.sort()
        if arc.full:
            if not cuts:
                edges_raw.append(((None, None), arc.curve_id, arc.start, arc.start))
                continue
            for k, (o, i) in enumerate(cuts):
                o2, j = cuts[(k + 1) % len(cuts)]
                edges_raw.append(((i, j), arc.curve_id, (arc.start + o) % 1.0, (arc.start + o2) % 1.0))
            continue
        lo = owner(arc.curve_id, arc.start)
        hi = owner(arc.curve_id, arc.end)
        if lo is None or hi is None:
            raise SignatureAmbiguity(f"arc end on curve {arc.curve_id} has no tangency fiber")
        bounds = [(0.0, lo)] + cuts + [(arc.length, hi)]
        for (o1, i), (o2, j) in zip(bounds, bounds[1:]):
            edges_raw.append(((i, j), arc.curve_id, (arc.start + o1) % 1.0, (arc.start + o2) % 1.0))

    # distribute the generic samples over the intervals
    buckets = [[] for _ in edges_raw]
    for s in samples:
        if owner(s.source.curve_id, s.source.t) is not None:
            continue
        for k, (ends, cid, t0, t1) in enumerate(edges_raw):
            if cid != s.source.curve_id:
                continue
            span = (t1 - t0) % 1.0 or 1.0
            o = (s.source.t - t0) % 1.0
            if 0.0 < o < span:
                buckets[k].append((o / span, s))
                break
    edges = []
    for k, ((i, j), cid, t0, t1) in enumerate(edges_raw):
        bucket = sorted(buckets[k], key=lambda p: p[0])
        if not bucket:
            raise SignatureAmbiguity(f"interval ({t0:.9f}, {t1:.9f}) of curve {cid} holds no sample; increase the density")
        sigs = [tuple((e[0], e[3]) for e in s.fiber) for _, s in bucket]
        for a in range(1, len(sigs)):
            if sigs[a] != sigs[0]:
                raise SignatureAmbiguity(
                    f"fiber signature changes inside interval ({t0:.9f}, {t1:.9f}) of curve {cid} "
                    f"near t={bucket[a][1].source.t:.9f}: {sigs[0]} vs {sigs[a]}")
        rows = tuple((c, s.fiber[0][2], s.fiber[-1][2], s.fiber) for c, s in bucket)
        edges.append(Edge(k, (i, j), cid, t0, t1, sigs[0], rows))

    valence = Counter()
    for e in edges:
        for v in e.ends:
            if v is not None:
                valence[v] += 1
    vertices = tuple(Vertex(i, vfibers[i], vkinds[i], tuple(vtangs[i]), valence[i]) for i in range(len(vfibers)))
    for v in vertices:
        if v.valence not in (1, 3):
            raise ValenceViolation(f"vertex {v.id} ({v.kind}) has valence {v.valence}")
    return TrajectoryGraph(vertices, tuple(edges))


def build_graph(dataset) -> TrajectoryGraph:
    """T(v) from a :class:`~holoflow.tracing.CausalityDataset`."""
    tangs = [(tp.point, tp.kind) for tp in dataset.strata.tangency_points]
    samples = [FiberSample(s.source, s.fiber) for s in dataset.samples]
    return graph_from_fibers(dataset.strata.positive_arcs, tangs, samples)


def locate_fiber(graph: TrajectoryGraph, fiber, tol=MATCH_TOL) -> GraphLocation:
    """Graph location of a fiber given as ``(curve_id, t, f, kind)`` events ordered by f.

    A fiber is a vertex when its entry point is the entry point of a tangency
    trajectory.  Matching on later events would be too coarse: near an
    internal tangency the exit points of neighbouring fibers differ from the
    tangency trajectory's only quadratically in the entry offset.
    """
    first = fiber[0]
    for v in graph.vertices:
        w = v.fiber[0]
        if w[0] == first[0] and _pdist(w[1], first[1]) <= tol:
            return GraphLocation("vertex", v.id)
    for e in graph.edges:
        if e.curve_id != first[0]:
            continue
        o = (first[1] - e.t0) % 1.0
        if 0.0 < o < e.span:
            return GraphLocation("edge", e.id, o / e.span)
    raise SignatureAmbiguity(f"fiber entering at {first[:2]} matches no edge of the graph")


def gamma_project(graph: TrajectoryGraph, tracer, x) -> GraphLocation:
    """Project a boundary point or an interior point to T(v) through its traced fiber."""
    if isinstance(x, BoundaryPoint):
        traj = tracer.fiber(x)
    else:
        traj = tracer.fiber_of_point(x)
    fib = tuple((e.point.curve_id, e.point.t, e.f, e.kind) for e in traj.events)
    return locate_fiber(graph, fib)


def invariants(graph: TrajectoryGraph):
    """Euler characteristic, valence histogram and number of connected components."""
    free = sum(1 for e in graph.edges if e.ends[0] is None)
    chi = len(graph.vertices) - len(graph.edges) + free
    hist = dict(sorted(Counter(v.valence for v in graph.vertices).items()))
    comps = nx.number_connected_components(graph.to_networkx())
    return {"chi": chi, "valence_histogram": hist, "components": comps,
            "vertices": len(graph.vertices), "edges": len(graph.edges)}
