"""Sampled surrogates for function algebras on X, its boundary and T(v).

Smooth function spaces are replaced by explicit finite generator families
evaluated on a :class:`SampleGrid`:

* ``VInvariant`` -- smooth functions on the trajectory graph pulled back
  through the projection Gamma: the constant, Chebyshev polynomials in the
  coordinate of each edge (flattened to second order at valence-3 vertices)
  and C1 "hat" functions centred at valence-3 vertices;
* ``FPullback`` -- Chebyshev polynomials of the normalised Lyapunov function;
* ``InteriorAll`` / ``BoundaryAll`` -- bivariate polynomials in x and y.

On top of these the module measures the intersection of two spaces by
principal angles, fits low-rank sums ``sum_i h_i * (g_i o f)`` by
alternating least squares, checks that f on the bulk is controlled by its
boundary range, and probes candidate boundary functions for membership in
the algebra of C_v-invariant functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial import chebyshev
from scipy.optimize import minimize_scalar

from . import expr
from .errors import (ConstraintViolation, HoloflowError, IllConditioned, RangeViolation, SolverDiverged,
                     TracingError)
from .flowfield import FlowSpec, f_boundary_range
from .geometry import BoundaryPoint, Domain
from .holography import interior_grid
from .tracing import BACKWARD, Tracer
from .trajspace import GraphLocation, TrajectoryGraph, build_graph, gamma_project, locate_fiber

FIBER_TOL = 1e-8
COSINE_TOL = 1e-8
GAP_TOL = 1e-4
CONDITION_LIMIT = 1e8
HAT_WIDTH = 0.5
# Fibers entering closer than this (in curve parameter) to a tangency point are
# left out of the algebra checks: there the exit point is determined only to
# about eps / |d(normal distance)/dt|, far coarser than the 1e-8 constancy test.
TANGENCY_GUARD = 1e-5
KINDS = ("BoundaryAll", "VInvariant", "FPullback", "InteriorAll")


# --- sample grid -----------------------------------------------------------

@dataclass
class SampleGrid:
    """Finite stand-ins for X and for the boundary.

    Attributes
    ----------
    interior_points : ndarray (n, 2)
        Grid points strictly inside X.
    interior_f : ndarray (n,)
    interior_loc : list of GraphLocation
        Gamma-projection of each interior point.
    boundary_points : list of BoundaryPoint
        Events of the sampled fibers.
    boundary_f : ndarray (m,)
    boundary_fiber : ndarray (m,) of int
        Which sampled fiber each boundary point belongs to.
    boundary_loc : list of GraphLocation
        Location computed independently for every boundary point (by tracing
        from that point), so fiber constancy is a real check.
    """

    domain: Domain
    flow: FlowSpec
    graph: TrajectoryGraph
    interior_points: np.ndarray
    interior_f: np.ndarray
    interior_loc: list
    boundary_points: list
    boundary_f: np.ndarray
    boundary_fiber: np.ndarray
    boundary_loc: list
    f_range: tuple = (0.0, 1.0)
    tracer: Tracer | None = field(default=None, repr=False)

    @property
    def n_interior(self):
        return len(self.interior_points)

    @property
    def boundary_positions(self):
        return np.array([self.domain.curves[b.curve_id].point(b.t) for b in self.boundary_points]).reshape(-1, 2)


def interior_location(graph, tracer, p):
    """Gamma-projection of an interior point from its backward trace (entry side only)."""
    events, _ = tracer.trace_from_point(p, BACKWARD)
    fib = tuple((e.point.curve_id, e.point.t, e.f, e.kind) for e in reversed(events))
    return locate_fiber(graph, fib)


def guarded_samples(dataset, guard=TANGENCY_GUARD):
    """Dataset samples whose source stays at least ``guard`` away from every tangency point."""
    tps = [tp.point for tp in dataset.strata.tangency_points]

    def far(b):
        for p in tps:
            if p.curve_id == b.curve_id:
                d = abs(p.t - b.t) % 1.0
                if min(d, 1.0 - d) < guard:
                    return False
        return True

    return [s for s in dataset.samples if far(s.source)]


def build_sample_grid(dataset, domain: Domain, flow: FlowSpec, graph: TrajectoryGraph | None = None,
                      n: int = 24, max_fibers: int = 120, tracer: Tracer | None = None) -> SampleGrid:
    """Sample X on an ``n x n`` grid and the boundary on up to ``max_fibers`` sampled fibers."""
    graph = build_graph(dataset) if graph is None else graph
    tracer = Tracer(domain, flow) if tracer is None else tracer
    pts = interior_grid(domain, n)
    keep, locs = [], []
    for i, p in enumerate(pts):
        try:
            locs.append(interior_location(graph, tracer, p))
            keep.append(i)
        except (TracingError, HoloflowError):
            continue
    pts = pts[keep]
    samples = guarded_samples(dataset)
    step = max(1, len(samples) // max_fibers)
    chosen = samples[::step]
    bpts, bf, bid, bloc = [], [], [], []
    for k, s in enumerate(chosen):
        for ev in s.fiber:
            b = BoundaryPoint(ev[0], ev[1])
            if ev == s.fiber[0]:
                loc = locate_fiber(graph, s.fiber)
            else:
                loc = gamma_project(graph, tracer, b)
            bpts.append(b)
            bf.append(ev[2])
            bid.append(k)
            bloc.append(loc)
    rng = f_boundary_range(domain, flow)
    return SampleGrid(domain, flow, graph, pts, flow.f_many(pts[:, 0], pts[:, 1]), locs, bpts, np.array(bf),
                      np.array(bid, dtype=int), bloc, (rng[0][0], rng[-1][1]), tracer)


# --- function spaces -------------------------------------------------------

class Generator(NamedTuple):
    name: str
    fn: Callable  # GraphLocation -> float (VInvariant) or (x, y, f) arrays -> array


@dataclass
class FunctionSpace:
    """A named basis evaluated on a grid.

    ``interior`` and ``boundary`` are ``(basis, points)`` matrices; ``q`` is
    an orthonormal basis (columns) of the span over the interior points with
    numerically dependent directions removed.
    """

    kind: str
    names: list
    interior: np.ndarray
    boundary: np.ndarray
    generators: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown function space kind {self.kind!r}")
        self.q = orthonormal_basis(self.interior.T)

    @property
    def dim(self):
        return self.q.shape[1]

    def __len__(self):
        return len(self.names)


def orthonormal_basis(M, condition=CONDITION_LIMIT):
    """Orthonormal columns spanning ``M`` with singular values above ``s_max / condition``."""
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0:
        return np.zeros((M.shape[0], 0))
    return u[:, s > s[0] / condition]


def _smoothstep_hat(u):
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - u * u * (3.0 - 2.0 * u)


def _cheb(k, s):
    return chebyshev.chebval(2.0 * s - 1.0, [0.0] * k + [1.0])


def _edge_generator(edge, k, low3, high3):
    def on_edge(s):
        w = (s * s if low3 else 1.0) * ((1.0 - s) ** 2 if high3 else 1.0)
        return w * _cheb(k, s)

    def fn(loc):
        if loc.kind == "edge":
            return float(on_edge(loc.coordinate)) if loc.index == edge.id else 0.0
        if loc.index == edge.ends[0]:
            return float(on_edge(0.0))
        if loc.index == edge.ends[1]:
            return float(on_edge(1.0))
        return 0.0

    return fn


def _loop_generator(edge, k):
    m = (k + 1) // 2
    trig = math.cos if k % 2 == 0 else math.sin

    def fn(loc):
        if loc.kind == "edge" and loc.index == edge.id:
            return trig(2.0 * math.pi * m * loc.coordinate)
        return 0.0

    return fn


def _hat_generator(graph, vid, width=HAT_WIDTH):
    def fn(loc):
        if loc.kind == "vertex":
            return 1.0 if loc.index == vid else 0.0
        e = graph.edges[loc.index]
        val = 0.0
        if e.ends[0] == vid:
            val += float(_smoothstep_hat(loc.coordinate / width))
        if e.ends[1] == vid:
            val += float(_smoothstep_hat((1.0 - loc.coordinate) / width))
        return val

    return fn


def v_invariant_generators(graph: TrajectoryGraph, generator_count: int = 12):
    """Named smooth functions on T(v): the constant, per-edge polynomials and vertex hats."""
    val = {v.id: v.valence for v in graph.vertices}
    gens = [Generator("1", lambda loc: 1.0)]
    for e in graph.edges:
        if e.ends[0] is None:
            gens += [Generator(f"loop{e.id}.{k}", _loop_generator(e, k)) for k in range(1, generator_count)]
            continue
        low3, high3 = val[e.ends[0]] == 3, val[e.ends[1]] == 3
        start = 0 if (low3 or high3) else 1  # T_0 on a leaf-to-leaf edge repeats the constant
        gens += [Generator(f"e{e.id}.T{k}", _edge_generator(e, k, low3, high3))
                 for k in range(start, generator_count)]
    gens += [Generator(f"hat{v.id}", _hat_generator(graph, v.id)) for v in graph.vertices if v.valence == 3]
    return gens


def fiber_constancy_error(space: FunctionSpace, grid: SampleGrid):
    """Largest spread of any basis function over the points of one sampled fiber."""
    worst = (0.0, None, None)
    for k in np.unique(grid.boundary_fiber):
        idx = np.flatnonzero(grid.boundary_fiber == k)
        if len(idx) < 2:
            continue
        block = space.boundary[:, idx]
        spread = block.max(axis=1) - block.min(axis=1)
        j = int(np.argmax(spread))
        if spread[j] > worst[0]:
            worst = (float(spread[j]), space.names[j], int(k))
    return worst


def build_v_invariant_space(dataset, grid: SampleGrid, generator_count: int = 12,
                            tol: float = FIBER_TOL) -> FunctionSpace:
    """Sampled v-invariant algebra: graph functions pulled back through Gamma.

    Raises
    ------
    ConstraintViolation
        if a generator varies along a sampled fiber by more than ``tol``.
    """
    gens = v_invariant_generators(grid.graph, generator_count)
    inner = np.array([[g.fn(loc) for loc in grid.interior_loc] for g in gens])
    bnd = np.array([[g.fn(loc) for loc in grid.boundary_loc] for g in gens])
    space = FunctionSpace("VInvariant", [g.name for g in gens], inner, bnd, gens)
    err, name, fib = fiber_constancy_error(space, grid)
    if err > tol:
        raise ConstraintViolation(f"generator {name} varies by {err:.3e} on sampled fiber {fib}")
    return space


def normalised_f(values, f_range):
    lo, hi = f_range
    return (np.asarray(values, dtype=float) - lo) / (hi - lo)


def build_f_pullback_space(flow: FlowSpec, grid: SampleGrid, degree: int = 12) -> FunctionSpace:
    """Chebyshev polynomials of f normalised to [0, 1] over its boundary range."""
    ui = normalised_f(grid.interior_f, grid.f_range)
    ub = normalised_f(grid.boundary_f, grid.f_range)
    names = [f"T{j}(f)" for j in range(degree + 1)]
    inner = np.array([_cheb(j, ui) for j in range(degree + 1)]).reshape(degree + 1, -1)
    bnd = np.array([_cheb(j, ub) for j in range(degree + 1)]).reshape(degree + 1, -1)
    return FunctionSpace("FPullback", names, inner, bnd)


def build_polynomial_space(grid: SampleGrid, degree: int = 6, kind: str = "InteriorAll") -> FunctionSpace:
    """Bivariate Chebyshev products in x and y scaled to the bounding box."""
    x0, y0, x1, y1 = grid.domain.bbox

    def scaled(p):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        return (p[:, 0] - x0) / (x1 - x0), (p[:, 1] - y0) / (y1 - y0)

    xi, yi = scaled(grid.interior_points)
    xb, yb = scaled(grid.boundary_positions)
    names, inner, bnd = [], [], []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            names.append(f"T{i}(x)T{j}(y)")
            inner.append(_cheb(i, xi) * _cheb(j, yi))
            bnd.append(_cheb(i, xb) * _cheb(j, yb))
    return FunctionSpace(kind, names, np.array(inner), np.array(bnd))


# --- intersection ----------------------------------------------------------

class IntersectionResult(NamedTuple):
    dim: int
    spectral_gap: float
    cosines: np.ndarray


def intersection_dimension(A: FunctionSpace, B: FunctionSpace, cos_tol: float = COSINE_TOL,
                           gap_tol: float = GAP_TOL) -> IntersectionResult:
    """Dimension of ``span A`` intersected with ``span B`` from principal angles.

    Raises
    ------
    IllConditioned
        if the cosine just below the threshold is within ``gap_tol`` of the
        last one above it (the count is then not trustworthy).
    """
    if A.q.shape[0] != B.q.shape[0]:
        raise ValueError("function spaces live on different grids")
    cos = np.linalg.svd(A.q.T @ B.q, compute_uv=False) if A.dim and B.dim else np.zeros(0)
    cos = np.clip(cos, 0.0, 1.0)
    dim = int(np.sum(cos > 1.0 - cos_tol))
    top = 1.0 if dim == 0 else float(cos[dim - 1])
    nxt = float(cos[dim]) if dim < len(cos) else 0.0
    gap = top - nxt
    if gap < gap_tol:
        raise IllConditioned(f"principal-angle gap {gap:.2e} after {dim} shared direction(s) is below {gap_tol:g}")
    return IntersectionResult(dim, gap, cos)


# --- low-rank tensor fit ---------------------------------------------------

class TensorFit(NamedTuple):
    rank: int
    residual: float
    U: np.ndarray  # coefficients of h_i in the orthonormal basis of A
    W: np.ndarray  # coefficients of g_i in the orthonormal basis of B
    method: str
    iterations: int


def _target_values(target, grid: SampleGrid):
    if isinstance(target, str):
        p = grid.interior_points
        return expr.compile_vector(target)(p[:, 0], p[:, 1])
    if callable(target):
        p = grid.interior_points
        return np.asarray(target(p[:, 0], p[:, 1]), dtype=float)
    return np.asarray(target, dtype=float)


def _model(Qa, Qb, U, W):
    return np.sum((Qa @ U) * (Qb @ W), axis=1)


def _als(Qa, Qb, t, U, W, max_iter=200, tol=1e-9):
    norm = np.linalg.norm(t) or 1.0
    res = np.linalg.norm(t - _model(Qa, Qb, U, W)) / norm
    it = 0
    for it in range(1, max_iter + 1):
        G = Qb @ W
        D = (Qa[:, :, None] * G[:, None, :]).reshape(len(t), -1)
        U = np.linalg.lstsq(D, t, rcond=None)[0].reshape(U.shape)
        H = Qa @ U
        D = (Qb[:, :, None] * H[:, None, :]).reshape(len(t), -1)
        W = np.linalg.lstsq(D, t, rcond=None)[0].reshape(W.shape)
        # rebalance so that neither factor drifts
        nu, nw = np.linalg.norm(U, axis=0), np.linalg.norm(W, axis=0)
        scale = np.sqrt(np.where(nu * nw > 0, nw / np.where(nu > 0, nu, 1.0), 1.0))
        U, W = U * scale, W / scale
        new = np.linalg.norm(t - _model(Qa, Qb, U, W)) / norm
        if not np.isfinite(new) or new > res * (1 + 1e-9) + 1e-12:
            raise SolverDiverged(f"alternating least squares increased the residual from {res:.3e} to {new:.3e}")
        done = res - new <= tol * max(res, 1e-300) or new < 1e-15
        res = new
        if done:
            break
    return U, W, res, it


def _bilinear(Qa, Qb, t):
    D = (Qa[:, :, None] * Qb[:, None, :]).reshape(len(t), -1)
    M = np.linalg.lstsq(D, t, rcond=None)[0].reshape(Qa.shape[1], Qb.shape[1])
    return M


def tensor_approximation(target, A: FunctionSpace, B: FunctionSpace, rank: int, grid: SampleGrid | None = None,
                         seed: int = 0, warm: TensorFit | None = None) -> TensorFit:
    """Least-squares fit of ``target`` by ``sum_{i<=rank} h_i * (g_i o f)``.

    ``target`` is an expression string, a vectorised callable ``(x, y)`` or
    an array of values on the interior grid points.  Alternating least
    squares is warm-started from ``warm`` (a lower-rank fit) with the new
    components fitted to the remaining residual, so the residual never
    increases with the rank.  If ALS misbehaves the full bilinear fit is
    truncated to the requested rank instead.
    """
    if grid is None and isinstance(target, str | type(None)) or (grid is None and callable(target)):
        raise ValueError("a grid is needed to evaluate a target expression")
    t = _target_values(target, grid) if grid is not None else np.asarray(target, dtype=float)
    Qa, Qb = A.q, B.q
    norm = np.linalg.norm(t) or 1.0
    if rank >= min(Qa.shape[1], Qb.shape[1]):
        M = _bilinear(Qa, Qb, t)
        u, s, vt = np.linalg.svd(M)
        r = len(s)
        U, W = u[:, :r] * s[:r], vt[:r].T
        res = np.linalg.norm(t - _model(Qa, Qb, U, W)) / norm
        return TensorFit(rank, float(res), U, W, "bilinear", 0)
    rng = np.random.default_rng(seed)
    U = W = None
    try:
        if warm is not None and 0 < warm.rank < rank:
            U0, W0 = warm.U, warm.W
        else:
            U0, W0 = np.zeros((Qa.shape[1], 0)), np.zeros((Qb.shape[1], 0))
        extra = rank - U0.shape[1]
        r0 = t - _model(Qa, Qb, U0, W0)
        u, sv, vt = np.linalg.svd(_bilinear(Qa, Qb, r0))
        U, W = np.hstack([U0, u[:, :extra] * sv[:extra]]), np.hstack([W0, vt[:extra].T])
        if np.linalg.norm(t - _model(Qa, Qb, U, W)) > np.linalg.norm(r0):
            # the truncated bilinear start is worse than none: grow from zero instead
            U = np.hstack([U0, np.zeros((Qa.shape[1], extra))])
            W = np.hstack([W0, rng.standard_normal((Qb.shape[1], extra))])
        U, W, res, it = _als(Qa, Qb, t, U, W)
        return TensorFit(rank, float(res), U, W, "als", it)
    except SolverDiverged:
        M = _bilinear(Qa, Qb, t)
        u, s, vt = np.linalg.svd(M)
        Ut, Wt = u[:, :rank] * s[:rank], vt[:rank].T
        res = np.linalg.norm(t - _model(Qa, Qb, Ut, Wt)) / norm
        if U is not None:
            # with fewer grid points than bilinear unknowns the truncation can lose to the ALS start
            seeded = np.linalg.norm(t - _model(Qa, Qb, U, W)) / norm
            if seeded < res:
                return TensorFit(rank, float(seeded), U, W, "als-start", 0)
        return TensorFit(rank, float(res), Ut, Wt, "bilinear-truncated", 0)


def rank_sweep(target, A, B, grid, ranks=(1, 2, 4, 8, 16), seed=0):
    """Residuals over increasing ranks, each fit warm-started from the previous one."""
    fits, warm = [], None
    for r in ranks:
        warm = tensor_approximation(target, A, B, r, grid, seed=seed, warm=warm)
        fits.append(warm)
    return fits


# --- boundary control of f -------------------------------------------------

class HfReport(NamedTuple):
    status: str  # "pass" | "NotApplicable"
    boundary_range: tuple
    interior_range: tuple
    probes: int
    worst_margin: float
    message: str = ""


def _sup_on_interval(phi, lo, hi, n=4001):
    u = np.linspace(lo, hi, n)
    vals = np.abs(phi(u))
    i = int(np.argmax(vals))
    a, b = u[max(i - 1, 0)], u[min(i + 1, n - 1)]
    res = minimize_scalar(lambda s: -abs(float(phi(np.array([s]))[0])), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-13})
    return max(float(vals[i]), -float(res.fun))


def check_hf_boundary(flow: FlowSpec, domain: Domain, probe_count: int = 20, grid: int = 60, seed: int = 0,
                      tol: float = 1e-8) -> HfReport:
    """f over X stays within the boundary range, so functions of f are fixed by the boundary.

    Returns status ``"NotApplicable"`` when the boundary range of f is not a
    single interval (repair it first with
    :func:`~holoflow.flowfield.lyapunov_range_repair`).

    Raises
    ------
    RangeViolation
        with a witness point where f or a probe function escapes its bound.
    """
    rng_iv = f_boundary_range(domain, flow)
    if len(rng_iv) != 1:
        return HfReport("NotApplicable", tuple(rng_iv), (math.nan, math.nan), 0, math.nan,
                        "boundary range of f is disconnected; run lyapunov_range_repair first")
    lo, hi = rng_iv[0]
    pts = interior_grid(domain, grid)
    fv = flow.f_many(pts[:, 0], pts[:, 1])
    i = int(np.argmax(np.maximum(lo - fv, fv - hi)))
    if fv[i] < lo - tol or fv[i] > hi + tol:
        raise RangeViolation(f"f = {fv[i]:.6g} at {tuple(pts[i])} lies outside the boundary range [{lo:.6g}, {hi:.6g}]")
    rng = np.random.default_rng(seed)
    worst = -math.inf
    span = hi - lo or 1.0
    for _ in range(probe_count):
        a = rng.standard_normal(5)
        w = rng.uniform(0.5, 6.0, 5) / span
        c = rng.uniform(0, 2 * math.pi, 5)

        def phi(u, a=a, w=w, c=c):
            u = np.asarray(u, dtype=float)[..., None]
            return np.sum(a * np.cos(w * (u - lo) + c), axis=-1)

        bound = _sup_on_interval(phi, lo, hi)
        inner = float(np.max(np.abs(phi(fv))))
        margin = inner - bound
        worst = max(worst, margin)
        if margin > tol:
            j = int(np.argmax(np.abs(phi(fv))))
            raise RangeViolation(f"|phi(f)| = {inner:.6g} at {tuple(pts[j])} exceeds the boundary bound {bound:.6g}")
    return HfReport("pass", (lo, hi), (float(fv.min()), float(fv.max())), probe_count, float(worst))


# --- conjecture probe ------------------------------------------------------

class LieJetRecord(NamedTuple):
    function_id: str
    point: BoundaryPoint
    value: float
    lie_ambient: float  # directional difference along v through the nearest-point projection
    lie_trace: float  # derivative of the boundary trace times the tangential speed

    @property
    def consistent(self):
        return abs(self.lie_ambient - self.lie_trace) <= 1e-5 * max(1.0, abs(self.lie_trace))


class ProbeReport(NamedTuple):
    in_M_Cv: bool
    fiber_error: float
    lie_jets: tuple
    extension_smoothness_score: float
    worst_point: tuple | None


def boundary_function(psi, domain: Domain, name=None):
    """Normalise ``psi`` to a callable on :class:`BoundaryPoint`.

    ``psi`` may be an expression in ``x``, ``y`` (the boundary position) and
    ``t`` (the curve parameter), a list of such expressions (one per curve),
    or a callable taking a BoundaryPoint.
    """
    if callable(psi):
        return psi, name or getattr(psi, "__name__", "psi")
    exprs = [psi] * len(domain.curves) if isinstance(psi, str) else list(psi)
    if len(exprs) != len(domain.curves):
        raise ValueError("one expression per boundary curve is required")
    fns = [expr.compile_scalar(e) for e in exprs]

    def fn(b):
        x, y = domain.curves[b.curve_id].point(b.t)
        return float(fns[b.curve_id](float(x), float(y), float(b.t)))

    return fn, name or (exprs[0] if len(set(exprs)) == 1 else " | ".join(exprs))


def graph_boundary_function(graph: TrajectoryGraph, tracer: Tracer, fn):
    """Boundary function ``b -> fn(Gamma(b))`` for a function ``fn`` of a graph location."""

    def psi(b):
        return float(fn(gamma_project(graph, tracer, BoundaryPoint.make(*b))))

    return psi


def lie_jet(psi, domain: Domain, flow: FlowSpec, b: BoundaryPoint, name="psi", h=2e-4) -> LieJetRecord:
    """L_v psi at a tangency point computed two ways.

    Both estimates are central differences at steps ``h`` and ``h / 2``
    (relative to the domain scale) combined by Richardson extrapolation, which
    removes the ``O(h)`` bias that one-sided quadratic behaviour (functions
    flattened at a vertex of T(v)) leaves in a plain central difference.
    ``h`` stays well above the offsets at which exit points near a tangency
    are fixed only to rounding error.
    """
    c = domain.curves[b.curve_id]
    p, tangent, _ = c.frame(b.t)
    vx, vy = flow.v(float(p[0]), float(p[1]))
    d1 = np.asarray(c.d1(b.t), dtype=float).ravel()
    speed = math.hypot(d1[0], d1[1])  # |dc/dt|
    vt = (vx * tangent[0] + vy * tangent[1]) / speed  # dt/d(flow time) along the boundary

    def proj(q):
        _, cid, t, _ = domain.signed_distance(float(q[0]), float(q[1]))
        return BoundaryPoint(cid, t)

    def ambient(hs):
        return (psi(proj((p[0] + hs * vx, p[1] + hs * vy))) - psi(proj((p[0] - hs * vx, p[1] - hs * vy)))) / (2 * hs)

    def trace(hs):
        dt = hs / speed
        return vt * (psi(BoundaryPoint(b.curve_id, (b.t + dt) % 1.0))
                     - psi(BoundaryPoint(b.curve_id, (b.t - dt) % 1.0))) / (2 * dt)

    hs = h * domain.scale
    amb = 2 * ambient(hs / 2) - ambient(hs)
    trc = 2 * trace(hs / 2) - trace(hs)
    return LieJetRecord(name, b, psi(b), float(amb), float(trc))


def _extension(psi, tracer, p):
    events, _ = tracer.trace_from_point(p, BACKWARD)
    return psi(events[-1].point)


def extension_smoothness(psi, dataset, domain: Domain, flow: FlowSpec, tracer: Tracer, per_trajectory: int = 7,
                         h: float = 1e-4):
    """Largest jump of one-sided normal derivatives of the Gamma-pullback across tangency trajectories.

    Returns ``(score, worst_point)``.  Singleton tangency trajectories have no
    interior points and are skipped.
    """
    hs = h * domain.scale
    worst, where = 0.0, None
    for tp in dataset.strata.tangency_points:
        traj = tracer.fiber(tp.point)
        poly = traj.polyline
        if len(poly) < 2:
            continue
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if cum[-1] <= 20 * hs:
            continue
        for s in np.linspace(0, cum[-1], per_trajectory + 2)[1:-1]:
            q = np.array([np.interp(s, cum, poly[:, 0]), np.interp(s, cum, poly[:, 1])])
            if domain.signed_distance(float(q[0]), float(q[1]))[0] <= 4 * hs:
                continue
            vx, vy = flow.v(float(q[0]), float(q[1]))
            nrm = math.hypot(vx, vy)
            m = np.array([-vy, vx]) / nrm
            try:
                vals = [_extension(psi, tracer, q + k * hs * m) for k in (-2, -1, 1, 2)]
            except (TracingError, HoloflowError):
                continue
            d_minus = (vals[1] - vals[0]) / hs
            d_plus = (vals[3] - vals[2]) / hs
            jump = abs(d_plus - d_minus)
            if jump > worst:
                worst, where = jump, (float(q[0]), float(q[1]))
    return worst, where


def conjecture_probe(dataset, domain: Domain, flow: FlowSpec, psi, tracer: Tracer | None = None,
                     tol: float = FIBER_TOL, lie_tol: float = 1e-5, name=None) -> ProbeReport:
    """Test a boundary function for membership in the C_v-invariant algebra.

    ``in_M_Cv`` requires psi to be constant on every sampled fiber (within
    ``tol``) and L_v psi to vanish at every tangency point (within
    ``lie_tol``).  ``extension_smoothness_score`` is a heuristic reported for
    review, never asserted: small values are evidence that the Gamma-pullback
    extends smoothly into X.
    """
    tracer = Tracer(domain, flow) if tracer is None else tracer
    fn, name = boundary_function(psi, domain, name)
    ferr = 0.0
    for s in guarded_samples(dataset):
        vals = [fn(BoundaryPoint(e[0], e[1])) for e in s.fiber]
        ferr = max(ferr, max(vals) - min(vals))
    jets = tuple(lie_jet(fn, domain, flow, tp.point, name) for tp in dataset.strata.tangency_points)
    lie_ok = all(abs(j.lie_trace) <= lie_tol for j in jets)
    score, where = extension_smoothness(fn, dataset, domain, flow, tracer)
    return ProbeReport(bool(ferr <= tol and lie_ok), float(ferr), jets, float(score), where)


def random_invariant_function(grid: SampleGrid, space: FunctionSpace, seed: int, terms: int = 4):
    """A random combination of v-invariant generators, as a boundary function; returns ``(psi, record)``."""
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(len(space.generators), size=min(terms, len(space.generators)), replace=False).tolist())
    coef = rng.standard_normal(len(idx))
    gens = [space.generators[i] for i in idx]

    def on_graph(loc):
        return sum(c * g.fn(loc) for c, g in zip(coef, gens))

    psi = graph_boundary_function(grid.graph, grid.tracer, on_graph)
    record = {"seed": seed, "generators": [g.name for g in gens], "coefficients": coef.tolist()}
    return psi, record


def separation_check(grid: SampleGrid, spaces, pairs: int = 1000, seed: int = 0, tol: float = 1e-6):
    """Fraction of random interior point pairs told apart by some function of the combined system.

    Pairs with identical graph location and f-value are genuinely
    inseparable and are excluded.  Returns ``(fraction, worst_distinction)``.
    """
    rng = np.random.default_rng(seed)
    n = grid.n_interior
    M = np.vstack([s.interior / np.maximum(np.abs(s.interior).max(axis=1, keepdims=True), 1e-300) for s in spaces])
    told, worst, total = 0, math.inf, 0
    for _ in range(pairs):
        i, j = rng.choice(n, size=2, replace=False)
        total += 1
        d = float(np.max(np.abs(M[:, i] - M[:, j])))
        worst = min(worst, d)
        told += d > tol
    return told / total, worst
