"""Scenes: a domain, a flow, tolerances and sampling parameters, as data.

Scene files are JSON documents with an explicit schema version::

    {
      "version": 1,
      "name": "annulus",
      "domain": {"outer": {"kind": "circle", "center": [0, 0], "radius": 2},
                 "holes": [{"kind": "circle", "center": [0, 0], "radius": 1}]},
      "flow": {"vx": "0", "vy": "1", "f": "y"},
      "density": 100, "seed": 0
    }

Hole curves get orientation -1 automatically.  Unknown keys are rejected so
that typos surface as :class:`~holoflow.errors.SceneError` naming the field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from . import expr
from .errors import ExpressionError, GeometryError, HoloflowError, SceneError
from .flowfield import FlowSpec
from .geometry import Circle, Domain, build_domain, curve_from_dict
from .holography import BoundaryMap

SCENE_VERSION = 1

DEFAULT_TOLERANCES = {"boundary": 1e-9, "tangency": 1e-7, "refine": 1e-12, "positivity": 1e-6}
DEFAULT_GRIDS = {"traversing": 120, "algebra": 24, "phi": 50}
_TOP_KEYS = {"version", "name", "domain", "flow", "tolerances", "density", "grids", "seed", "description"}


@dataclass(frozen=True)
class Scene:
    name: str
    domain: Domain
    flow: FlowSpec
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    density: float = 100.0
    grids: dict = field(default_factory=lambda: dict(DEFAULT_GRIDS))
    seed: int = 0
    description: str = ""

    def to_dict(self):
        return {"version": SCENE_VERSION, "name": self.name, "description": self.description,
                "domain": self.domain.to_dict(), "flow": self.flow.to_dict(),
                "tolerances": dict(self.tolerances), "density": self.density, "grids": dict(self.grids),
                "seed": self.seed}

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_flow(self, flow: FlowSpec, name=None):
        return replace(self, flow=flow, name=name or self.name)

    def with_lambda(self, lam: str, name=None):
        return self.with_flow(self.flow.with_lambda(lam), name or f"{self.name}+lambda")

    def with_density(self, density: float):
        return replace(self, density=float(density))


def _positive(d, key, where):
    try:
        val = float(d[key])
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{where}.{key}", f"not a number: {d[key]!r}") from exc
    if not val > 0 or not math.isfinite(val):
        raise SceneError(f"{where}.{key}", f"must be positive, got {val}")
    return val


def scene_from_dict(d) -> Scene:
    """Validate a scene document.

    Raises
    ------
    SceneError
        naming the offending field.
    """
    if not isinstance(d, dict):
        raise SceneError("<root>", "scene must be a JSON object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise SceneError(sorted(unknown)[0], "unknown field")
    if d.get("version", SCENE_VERSION) != SCENE_VERSION:
        raise SceneError("version", f"unsupported scene version {d.get('version')!r}")
    for key in ("domain", "flow"):
        if key not in d:
            raise SceneError(key, "missing")
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in d.get("tolerances", {}).items():
        if k not in tol:
            raise SceneError(f"tolerances.{k}", "unknown tolerance")
        tol[k] = _positive(d["tolerances"], k, "tolerances")
    dom = d["domain"]
    if not isinstance(dom, dict) or "outer" not in dom:
        raise SceneError("domain.outer", "missing")
    try:
        outer = curve_from_dict({**dom["outer"], "orientation": 1})
    except (KeyError, TypeError, ValueError, GeometryError, ExpressionError) as exc:
        raise SceneError("domain.outer", str(exc)) from exc
    holes = []
    for i, h in enumerate(dom.get("holes", [])):
        try:
            holes.append(curve_from_dict({**h, "orientation": -1}))
        except (KeyError, TypeError, ValueError, GeometryError, ExpressionError) as exc:
            raise SceneError(f"domain.holes[{i}]", str(exc)) from exc
    try:
        domain = build_domain(outer, holes, float(dom.get("ambient_margin", 1e-2)),
                              tol["boundary"])
    except GeometryError as exc:
        raise SceneError("domain", str(exc)) from exc
    fl = d["flow"]
    if not isinstance(fl, dict):
        raise SceneError("flow", "must be an object")
    for key in ("vx", "vy", "f"):
        if key not in fl:
            raise SceneError(f"flow.{key}", "missing")
    for key in ("vx", "vy", "f", "lambda"):
        if key in fl:
            try:
                node = expr.parse(fl[key])
            except ExpressionError as exc:
                raise SceneError(f"flow.{key}", str(exc)) from exc
            if expr.free_variables(node) - {"x", "y"}:
                raise SceneError(f"flow.{key}", "only x and y may appear")
    flow = FlowSpec.from_dict(fl)
    grids = dict(DEFAULT_GRIDS)
    for k, v in d.get("grids", {}).items():
        if k not in grids:
            raise SceneError(f"grids.{k}", "unknown grid")
        if not isinstance(v, int) or v < 2:
            raise SceneError(f"grids.{k}", f"must be an integer >= 2, got {v!r}")
        grids[k] = v
    density = _positive(d, "density", "scene") if "density" in d else 100.0
    seed = d.get("seed", 0)
    if not isinstance(seed, int):
        raise SceneError("seed", f"must be an integer, got {seed!r}")
    return Scene(str(d.get("name", "scene")), domain, flow, tol, density, grids, seed, str(d.get("description", "")))


def load_scene(path_or_name) -> Scene:
    """Load a scene file, or a built-in scene by name."""
    if path_or_name in BUILTIN:
        return builtin(path_or_name)
    try:
        with open(path_or_name, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SceneError("<file>", f"cannot read {path_or_name}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError("<syntax>", f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return scene_from_dict(d)


# --- built-in scenes -------------------------------------------------------

FIG1_HOLES = (((-1.5, 0.3), 0.5), ((0.2, 1.3), 0.45), ((1.3, -0.9), 0.55), ((-0.4, -1.4), 0.4))
VERTICAL = FlowSpec("0", "1", "y")

# Property A counter-scene: trajectories are the graphs y = phi(x) + s and the
# one with s = S_A touches the unit circle with cubic contact at (+-0.6, -0.8).
PHI = "0.44921875 * x^2 + 0.244140625 * x^4"
S_A = -0.993359375


def _holes_scene(k):
    return Scene(f"{['', 'one', 'two', 'three', 'four'][k]}_holes",
                 build_domain(Circle((0.0, 0.0), 3.0), [Circle(c, r, -1) for c, r in FIG1_HOLES[:k]]),
                 VERTICAL, density=100.0, description=f"disk of radius 3 with {k} holes, vertical flow")


def _make(name):
    if name == "disk":
        return Scene("disk", build_domain(Circle((0.0, 0.0), 1.0)), VERTICAL, description="unit disk, vertical flow")
    if name == "annulus":
        return Scene("annulus", build_domain(Circle((0.0, 0.0), 2.0), [Circle((0.0, 0.0), 1.0, -1)]), VERTICAL,
                     description="annulus 1 <= r <= 2, vertical flow")
    if name in ("two_holes", "three_holes", "four_holes"):
        return _holes_scene({"two_holes": 2, "three_holes": 3, "four_holes": 4}[name])
    if name == "ellipse":
        from .geometry import Ellipse

        return Scene("ellipse", build_domain(Ellipse((0.0, 0.0), 2.0, 1.0)), VERTICAL,
                     description="ellipse x^2/4 + y^2 = 1, vertical flow")
    if name == "radial_annulus":
        return Scene("radial_annulus", build_domain(Circle((0.5, 0.0), 3.0), [Circle((0.0, 0.0), 1.0, -1)]),
                     FlowSpec("x", "y", "(x^2 + y^2) / 2"),
                     description="off-centre annulus with a radial field: disconnected boundary range of f")
    if name == "property_a_violation":
        dphi = str(expr.diff(PHI, "x"))
        return Scene("property_a_violation", build_domain(Circle((0.0, 0.0), 1.0)), FlowSpec("1", dphi, "x"),
                     description="unit disk with a trajectory meeting the boundary only at two cubic tangencies")
    raise KeyError(name)


BUILTIN = ("disk", "annulus", "two_holes", "three_holes", "four_holes", "ellipse", "radial_annulus",
           "property_a_violation")
SCRIPTED = ("disk", "annulus", "two_holes", "three_holes", "four_holes")


def builtin(name) -> Scene:
    try:
        return _make(name)
    except KeyError:
        raise SceneError("<name>", f"unknown built-in scene {name!r}; choose from {', '.join(BUILTIN)}") from None


# --- transformations -------------------------------------------------------

def rotated(scene: Scene, theta: float):
    """The scene rotated by ``theta`` about the origin, with the induced boundary map.

    Only circle curves are supported; a rotation shifts every circle
    parameter by ``theta / 2 pi``.
    """
    c, s = math.cos(theta), math.sin(theta)
    curves = scene.domain.curves
    if not all(isinstance(cv, Circle) for cv in curves):
        raise HoloflowError("rotated() supports circle curves only")
    rc = [Circle((c * cv.center[0] - s * cv.center[1], s * cv.center[0] + c * cv.center[1]), cv.radius,
                 cv.orientation) for cv in curves]
    domain = build_domain(rc[0], rc[1:], scene.domain.ambient_margin, scene.domain.boundary_tol)
    back = {"x": f"{c!r} * x + {s!r} * y", "y": f"{-s!r} * x + {c!r} * y"}
    vx = expr.substitute(scene.flow.vx, back)
    vy = expr.substitute(scene.flow.vy, back)
    flow = FlowSpec(str(expr.sub(expr.mul(expr.Num(c), vx), expr.mul(expr.Num(s), vy))),
                    str(expr.add(expr.mul(expr.Num(s), vx), expr.mul(expr.Num(c), vy))),
                    str(expr.substitute(scene.flow.f, back)),
                    None if scene.flow.lam is None else str(expr.substitute(scene.flow.lam, back)))
    phi = BoundaryMap.shift([theta / (2 * math.pi)] * len(curves))
    return replace(scene, name=f"{scene.name}@rot{theta:g}", domain=domain, flow=flow), phi
