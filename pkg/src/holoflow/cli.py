"""Command line front end: run scenes, re-verify datasets, compare scenes, fuzz.

Verbs
-----
``holoflow run <scene> [--stages ...] [--out DIR]``
    Run the pipeline on a scene file or built-in scene name and write the
    dataset, boundary data, graph export, SVG figures and ``report.json``.
``holoflow verify <dataset> --property {conformal,monotone,propertyA,quotient}``
    Re-check a stored dataset without re-tracing.
``holoflow compare <scene1> <scene2> --map <phi>``
    Extend a boundary map between two scenes to their interiors.
``holoflow fuzz-conjecture <scene> --seed S --count N``
    Probe random C_v-invariant boundary functions; the corpus is saved with
    its seeds for replay.

Exit status: 0 when every check passes, 1 when a check fails, 2 on bad
input.  ``HOLOFLOW_THREADS`` is the only environment variable consulted.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import CommutationViolation, CorruptRecord, HoloflowError, SceneError, VersionMismatch
from .flowfield import check_traversing, f_boundary_range, morse_stratify
from .geometry import BoundaryPoint
from .holography import (BoundaryMap, build_alpha_model, compare_with_truth, extend_boundary_map,
                         extract_boundary_data, reconstruct_invariants)
from .scenes import Scene, load_scene
from .tracing import CausalityDataset, Tracer, check_property_A, sample_causality_map, scene_hash
from .trajspace import build_graph

log = logging.getLogger("holoflow")

STAGES = ("strata", "causality", "graph", "holography", "algebra")
_NEEDS = {"strata": (), "causality": ("strata",), "graph": ("causality",), "holography": ("causality",),
          "algebra": ("graph",)}
EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
CONFORMAL_TOL = 1e-6


def thread_count():
    """Worker count from ``HOLOFLOW_THREADS`` (default 1); all stages currently run on one thread."""
    raw = os.environ.get("HOLOFLOW_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise SceneError("HOLOFLOW_THREADS", f"not an integer: {raw!r}") from None
    if n < 1:
        raise SceneError("HOLOFLOW_THREADS", "must be at least 1")
    return n


@dataclass
class Check:
    name: str
    op: str
    tolerance: float | None
    passed: bool
    value: object = None


@dataclass
class RunReport:
    """Everything a run established; only ``timings`` varies between identical runs."""

    scene: str
    scene_hash: str
    stages: list
    strata: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    graph: dict = field(default_factory=dict)
    reconstruction: dict = field(default_factory=dict)
    algebra: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, op, tolerance, passed, value=None):
        self.checks.append(Check(name, op, tolerance, bool(passed), _plain(value)))

    def to_dict(self, timings=True):
        d = asdict(self)
        d["passed"] = self.passed
        if not timings:
            d.pop("timings")
        return _plain(d)

    def dumps(self, timings=True):
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True) + "\n"


def _plain(x):
    """JSON-friendly copy: numpy scalars to Python, dict keys to strings, tuples to lists."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, list | tuple):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _resolve(stages):
    want = set(stages)
    stack = list(stages)
    while stack:
        for dep in _NEEDS[stack.pop()]:
            if dep not in want:
                want.add(dep)
                stack.append(dep)
    return [s for s in STAGES if s in want]


def run_scene(scene: Scene | str, stages=STAGES, out_dir=None, figures=True, algebra_target="sin(x + 2*y)"):
    """Run the requested stages (plus their prerequisites) in dependency order.

    Returns ``(report, artifacts)`` where ``artifacts`` maps names to the
    in-memory results and, if ``out_dir`` is given, files are written there.
    """
    if isinstance(scene, str):
        scene = load_scene(scene)
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise SceneError("stages", f"unknown stage(s) {sorted(unknown)}")
    order = _resolve(stages)
    thread_count()
    d, flow = scene.domain, scene.flow
    rep = RunReport(scene.name, scene_hash(d, flow), order)
    art = {"scene": scene}
    tol = scene.tolerances
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except HoloflowError as exc:
            raise HoloflowError(f"stage {name} failed on scene {scene.name!r}: {exc}") from exc
        finally:
            rep.timings[name] = round(time.perf_counter() - t0, 3)

    if "strata" in order:
        tr_rep = timed("traversing", lambda: check_traversing(d, flow, scene.grids["traversing"],
                                                              tol["positivity"], strict=False))
        rep.add("traversing", "check_traversing", tol["positivity"], tr_rep.ok, tr_rep.min_dfv)
        strata = timed("strata", lambda: morse_stratify(d, flow, tol["refine"]))
        art["strata"] = strata
        rep.strata = {"positive_arcs": len(strata.positive_arcs), "negative_arcs": len(strata.negative_arcs),
                      "tangencies": [{"curve": tp.point.curve_id, "t": tp.point.t, "order": tp.order,
                                      "sign": tp.sign, "kind": tp.kind} for tp in strata.tangency_points],
                      "f_boundary_range": f_boundary_range(d, flow)}
    if "causality" in order:
        ds = timed("causality", lambda: sample_causality_map(d, flow, scene.density, art["strata"]))
        art["dataset"] = ds
        pa = check_property_A(ds)
        mono = monotone_violations(ds)
        rep.dataset = {"samples": len(ds.samples), "cardinality_histogram": ds.cardinality_histogram(),
                       "property_A": pa.ok, "property_A_violations": len(pa.violations)}
        rep.add("property_A", "check_property_A", None, pa.ok, len(pa.violations))
        rep.add("monotone", "verify:monotone", 0.0, not mono, mono[:5])
        if out_dir:
            ds.save(os.path.join(out_dir, "dataset.jsonl"))
    if "graph" in order:
        g = timed("graph", lambda: build_graph(art["dataset"]))
        art["graph"] = g
        inv = g.invariants()
        truth_chi = 1 - len(d.holes)
        rep.graph = inv
        rep.add("valences", "build_graph", None, set(inv["valence_histogram"]) <= {1, 3}, inv["valence_histogram"])
        rep.add("chi", "build_graph", 0, inv["chi"] == truth_chi, {"graph": inv["chi"], "domain": truth_chi})
        if out_dir:
            with open(os.path.join(out_dir, "graph.json"), "w", encoding="utf-8") as fh:
                json.dump(_plain(g.to_dict()), fh, sort_keys=True)
    if "holography" in order:
        def holo():
            bd = extract_boundary_data(art["dataset"], d)
            model = build_alpha_model(bd)
            return bd, model, compare_with_truth(d, model)

        bd, model, cmp = timed("holography", holo)
        art["boundary_data"], art["alpha_model"] = bd, model
        rep.reconstruction = cmp
        rep.add("reconstruction", "reconstruct_invariants", 0, cmp["match"], cmp["reconstructed"])
        if out_dir:
            with open(os.path.join(out_dir, "boundary.json"), "w", encoding="utf-8") as fh:
                fh.write(bd.to_json())
    if "algebra" in order:
        res = timed("algebra", lambda: _algebra_stage(scene, art, algebra_target))
        rep.algebra = res["summary"]
        for c in res["checks"]:
            rep.add(*c)
    if out_dir:
        if figures:
            _figures(scene, art, out_dir)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(rep.dumps())
    return rep, art


def _algebra_stage(scene, art, target):
    from . import algebra

    d, flow = scene.domain, scene.flow
    ds, g = art["dataset"], art["graph"]
    grid = algebra.build_sample_grid(ds, d, flow, g, n=scene.grids["algebra"])
    A = algebra.build_v_invariant_space(ds, grid)
    B = algebra.build_f_pullback_space(flow, grid)
    art.update(grid=grid, v_invariant=A, f_pullback=B)
    checks, summary = [], {"grid_points": grid.n_interior, "boundary_points": len(grid.boundary_points),
                           "v_invariant_dim": A.dim, "f_pullback_dim": B.dim}
    ferr = algebra.fiber_constancy_error(A, grid)[0]
    summary["fiber_constancy_error"] = ferr
    checks.append(("fiber_constancy", "build_v_invariant_space", algebra.FIBER_TOL, ferr <= algebra.FIBER_TOL, ferr))
    try:
        inter = algebra.intersection_dimension(A, B)
        summary["intersection"] = {"dim": inter.dim, "spectral_gap": inter.spectral_gap}
        checks.append(("constants_only", "intersection_dimension", algebra.GAP_TOL, inter.dim == 1, inter.dim))
    except HoloflowError as exc:
        summary["intersection"] = {"error": str(exc)}
        checks.append(("constants_only", "intersection_dimension", algebra.GAP_TOL, False, str(exc)))
    fits = algebra.rank_sweep(target, A, B, grid)
    res = [f.residual for f in fits]
    summary["tensor"] = {"target": target, "ranks": [f.rank for f in fits], "residuals": res}
    dec = all(b < a for a, b in zip(res, res[1:]))
    checks.append(("tensor_decay", "tensor_approximation", None, dec, res))
    hf = algebra.check_hf_boundary(flow, d)
    summary["hf_boundary"] = hf._asdict()
    checks.append(("hf_boundary", "check_hf_boundary", 1e-8, hf.status in ("pass", "NotApplicable"), hf.status))
    return {"summary": summary, "checks": checks}


def _figures(scene, art, out_dir):
    from .svg import write_figures

    trajs = []
    if "dataset" in art:
        tr = Tracer(scene.domain, scene.flow)
        samples = [s for s in art["dataset"].samples if not s.fixed]
        for s in samples[:: max(1, len(samples) // 40)]:
            trajs.append(tr.fiber(s.source).polyline)
    return write_figures(out_dir, scene.domain, art["strata"], art.get("dataset"), art.get("graph"),
                         art.get("alpha_model"), trajs)


# --- verification of stored datasets --------------------------------------

def monotone_violations(ds: CausalityDataset):
    """Indices of non-fixed records whose target does not lie strictly higher in f."""
    return [i for i, s in enumerate(ds.samples) if not s.fixed and not s.f_target > s.f_source]


def conformal_discrepancy(a: CausalityDataset, b: CausalityDataset, match_tol=1e-9):
    """Worst parameter distance between the two causality maps over shared sources."""
    index = {}
    for s in b.samples:
        index.setdefault(s.source.curve_id, []).append(s)
    worst, compared, witness = 0.0, 0, None
    for s in a.samples:
        cands = index.get(s.source.curve_id, [])
        if not cands:
            continue
        best = min(cands, key=lambda o: _pdist(o.source.t, s.source.t))
        if _pdist(best.source.t, s.source.t) > match_tol:
            continue
        compared += 1
        d = 1.0 if best.target.curve_id != s.target.curve_id else _pdist(best.target.t, s.target.t)
        if d > worst:
            worst, witness = d, tuple(s.source)
    return worst, compared, witness


def _pdist(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def verify_dataset(ds: CausalityDataset, prop: str, other: CausalityDataset | None = None):
    """Run one stored-property suite; returns ``(passed, details)``."""
    if prop == "monotone":
        bad = monotone_violations(ds)
        return not bad, {"violations": bad[:20], "count": len(bad)}
    if prop == "propertyA":
        rep = check_property_A(ds)
        return rep.ok, {"violations": [(i, list(b), msg) for i, b, msg in rep.violations[:20]]}
    if prop == "quotient":
        g = build_graph(ds)
        inv = g.invariants()
        holes = len(ds.f_boundary) - 1
        model = build_alpha_model(extract_boundary_data(ds))
        rec = reconstruct_invariants(model)
        ok = (set(inv["valence_histogram"]) <= {1, 3} and inv["chi"] == 1 - holes
              and rec["boundary_components"] == 1 + holes and rec["chi_X"] == inv["chi"])
        return ok, {"invariants": inv, "reconstructed": rec, "expected_chi": 1 - holes}
    if prop == "conformal":
        if other is None:
            raise SceneError("--against", "the conformal suite compares two datasets")
        worst, n, wit = conformal_discrepancy(ds, other)
        ok = n >= min(len(ds.samples), len(other.samples)) // 2 and worst < CONFORMAL_TOL
        return ok, {"max_discrepancy": worst, "compared": n, "witness": wit}
    raise SceneError("--property", f"unknown property {prop!r}")


# --- boundary maps from files ---------------------------------------------

def load_boundary_map(spec: str) -> BoundaryMap:
    """``identity``, ``shift:a,b,...`` or a JSON file (``{"kind": ...}`` or a table of rows)."""
    if spec == "identity":
        return BoundaryMap.identity()
    if spec.startswith("shift:"):
        try:
            return BoundaryMap.shift([float(v) for v in spec[6:].split(",")])
        except ValueError:
            raise SceneError("--map", f"bad shift list {spec[6:]!r}") from None
    try:
        with open(spec, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneError("--map", f"cannot read boundary map {spec}: {exc}") from exc
    if isinstance(d, dict):
        kind = d.get("kind")
        if kind == "identity":
            return BoundaryMap.identity()
        if kind == "shift":
            return BoundaryMap.shift(d["offsets"])
        if kind == "table":
            return BoundaryMap.from_table(d["rows"])
        raise SceneError("--map.kind", f"unknown boundary map kind {kind!r}")
    return BoundaryMap.from_table(d)


# --- command line ----------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="holoflow", description="Traversing flows on planar domains with holes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run the pipeline on a scene")
    r.add_argument("scene", help="scene file (JSON) or built-in scene name")
    r.add_argument("--stages", nargs="+", default=list(STAGES), choices=STAGES)
    r.add_argument("--out", default=None, help="output directory for artifacts")
    r.add_argument("--density", type=float, default=None, help="override the sampling density")
    r.add_argument("--no-figures", action="store_true")
    v = sub.add_parser("verify", help="re-check a stored dataset")
    v.add_argument("dataset")
    v.add_argument("--property", required=True, choices=("conformal", "monotone", "propertyA", "quotient"))
    v.add_argument("--against", default=None, help="second dataset for the conformal suite")
    c = sub.add_parser("compare", help="extend a boundary map between two scenes")
    c.add_argument("scene1")
    c.add_argument("scene2")
    c.add_argument("--map", required=True, help="identity, shift:a,b,..., or a JSON boundary map")
    c.add_argument("--grid", type=int, default=None)
    c.add_argument("--out", default=None, help="write the sampled interior map here (JSON)")
    f = sub.add_parser("fuzz-conjecture", help="probe random invariant boundary functions")
    f.add_argument("scene")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--count", type=int, default=10)
    f.add_argument("--out", default=None, help="corpus file (JSON)")
    f.add_argument("--flag-above", type=float, default=1e-1, help="smoothness score flagged for review")
    return p


def _cmd_run(a):
    scene = load_scene(a.scene)
    if a.density is not None:
        scene = scene.with_density(a.density)
    rep, _ = run_scene(scene, a.stages, a.out, figures=not a.no_figures)
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} ({c.op}): {json.dumps(_plain(c.value))}")
    print(f"scene {rep.scene} [{rep.scene_hash}] {'passed' if rep.passed else 'FAILED'}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _cmd_verify(a):
    ds = CausalityDataset.load(a.dataset)
    other = CausalityDataset.load(a.against) if a.against else None
    ok, details = verify_dataset(ds, a.property, other)
    print(f"{'PASS' if ok else 'FAIL'} {a.property}: {json.dumps(_plain(details))}")
    return EXIT_PASS if ok else EXIT_FAIL


def _cmd_compare(a):
    s1, s2 = load_scene(a.scene1), load_scene(a.scene2)
    phi = load_boundary_map(a.map)
    grid = a.grid or s1.grids["phi"]
    try:
        res = extend_boundary_map(s1, s2, phi, grid=grid)
    except CommutationViolation as exc:
        print(f"FAIL commutation: {exc}")
        return EXIT_FAIL
    disp = np.linalg.norm(res.images - res.points, axis=1)
    print(f"PASS commutation: max discrepancy {res.commutation_error:.3e}; {len(res.points)} interior points; "
          f"max displacement {disp.max():.6g}")
    if a.out:
        with open(a.out, "w", encoding="utf-8") as fh:
            json.dump({"points": res.points.tolist(), "images": res.images.tolist(),
                       "commutation_error": res.commutation_error}, fh)
    return EXIT_PASS


def _cmd_fuzz(a):
    from . import algebra

    scene = load_scene(a.scene)
    d, flow = scene.domain, scene.flow
    ds = sample_causality_map(d, flow, scene.density)
    tr = Tracer(d, flow)
    grid = algebra.build_sample_grid(ds, d, flow, n=scene.grids["algebra"], tracer=tr)
    space = algebra.build_v_invariant_space(ds, grid)
    corpus = {"scene": scene.name, "scene_hash": scene_hash(d, flow), "base_seed": a.seed, "candidates": []}
    flagged = 0
    for k in range(a.count):
        seed = a.seed + k
        psi, rec = algebra.random_invariant_function(grid, space, seed)
        r = algebra.conjecture_probe(ds, d, flow, psi, tr, name=f"fuzz{seed}")
        rec.update(in_M_Cv=r.in_M_Cv, fiber_error=r.fiber_error, score=r.extension_smoothness_score,
                   worst_point=r.worst_point, max_lie=max((abs(j.lie_trace) for j in r.lie_jets), default=0.0))
        rec["flagged"] = bool(r.in_M_Cv and r.extension_smoothness_score > a.flag_above)
        flagged += rec["flagged"]
        corpus["candidates"].append(_plain(rec))
        print(f"seed {seed}: in_M_Cv={r.in_M_Cv} score={r.extension_smoothness_score:.3e}"
              f"{'  FLAGGED for review' if rec['flagged'] else ''}")
    if a.out:
        with open(a.out, "w", encoding="utf-8") as fh:
            json.dump(corpus, fh, indent=2, sort_keys=True)
    print(f"{a.count} candidates, {flagged} flagged (report only)")
    return EXIT_PASS


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"run": _cmd_run, "verify": _cmd_verify, "compare": _cmd_compare, "fuzz-conjecture": _cmd_fuzz}
    try:
        thread_count()
        return handlers[args.verb](args)
    except SceneError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (VersionMismatch, CorruptRecord) as exc:
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HoloflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
