"""Static SVG figures written by hand (no plotting dependency).

Four pictures are produced for a run:

* the domain with the Morse strata (entry arcs blue, exit arcs red,
  tangency points as markers) and a bundle of traced trajectories;
* a chord diagram of the causality map, with the boundary unrolled onto a
  circle in proportion to curve length;
* the trajectory graph drawn over the tangency points that define its
  vertices;
* the boundary image of the alpha-embedding: for every edge of T(v) the
  band between the entry and exit values of f.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .flowfield import MorseStrata

SIZE = 480
PAD = 24
ENTRY_COLOUR = "#2b6cb0"
EXIT_COLOUR = "#c53030"
TRAJ_COLOUR = "#718096"
KIND_COLOUR = {"external": "#d69e2e", "internal": "#2f855a", "crossing": "#805ad5"}
PALETTE = ("#2b6cb0", "#c05621", "#2f855a", "#b83280", "#6b46c1", "#2c7a7b", "#975a16", "#c53030")


class Canvas:
    """A fixed-size SVG canvas with a world-to-pixel transform (y pointing up)."""

    def __init__(self, bbox, width=SIZE, height=SIZE, title=""):
        x0, y0, x1, y1 = bbox
        self.width, self.height = width, height
        sx = (width - 2 * PAD) / max(x1 - x0, 1e-12)
        sy = (height - 2 * PAD) / max(y1 - y0, 1e-12)
        self.s = min(sx, sy)
        self.ox = PAD + 0.5 * (width - 2 * PAD - self.s * (x1 - x0)) - self.s * x0
        self.oy = height - PAD - 0.5 * (height - 2 * PAD - self.s * (y1 - y0)) + self.s * y0
        self.items = []
        if title:
            self.text((width / 2, 16), title, pixel=True, anchor="middle", size=13)

    def px(self, p):
        return self.ox + self.s * p[0], self.oy - self.s * p[1]

    def polyline(self, pts, colour, width=1.0, closed=False, fill="none", opacity=1.0, dash=None):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if len(pts) < 2:
            return
        coords = " ".join("%.2f,%.2f" % self.px(p) for p in pts)
        tag = "polygon" if closed else "polyline"
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<{tag} points="{coords}" fill="{fill}" fill-opacity="{opacity:.2f}" stroke="{colour}" '
                          f'stroke-width="{width}"{extra}/>')

    def circle(self, p, r, colour, fill=None, pixel=False):
        x, y = p if pixel else self.px(p)
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{fill or colour}" stroke="{colour}"/>')

    def line(self, a, b, colour, width=1.0, pixel=False, opacity=1.0):
        (x1, y1), (x2, y2) = (a, b) if pixel else (self.px(a), self.px(b))
        self.items.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{colour}" '
                          f'stroke-width="{width}" stroke-opacity="{opacity:.2f}"/>')

    def path(self, d, colour, width=1.0, opacity=1.0):
        self.items.append(f'<path d="{d}" fill="none" stroke="{colour}" stroke-width="{width}" '
                          f'stroke-opacity="{opacity:.2f}"/>')

    def text(self, p, s, pixel=False, anchor="start", size=10, colour="#1a202c"):
        x, y = p if pixel else self.px(p)
        self.items.append(f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="{size}" '
                          f'text-anchor="{anchor}" fill="{colour}">{escape(str(s))}</text>')

    def render(self):
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">\n<rect width="100%" height="100%" fill="white"/>\n'
                f"{body}\n</svg>\n")

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
        return path


def _arc_points(curve, start, length, n=200):
    ts = (start + np.linspace(0.0, length, max(int(n * length), 8))) % 1.0
    return curve.point(ts)


def domain_figure(domain, strata: MorseStrata, trajectories=(), title="domain and strata") -> Canvas:
    """Domain boundary coloured by stratum, with tangency points and trajectories."""
    x0, y0, x1, y1 = domain.bbox
    cv = Canvas((x0, y0, x1, y1), title=title)
    for traj in trajectories:
        poly = getattr(traj, "polyline", traj)  # a Trajectory or a bare point array
        cv.polyline(poly, TRAJ_COLOUR, 0.6, opacity=1.0)
    for arcs, colour in ((strata.positive_arcs, ENTRY_COLOUR), (strata.negative_arcs, EXIT_COLOUR)):
        for a in arcs:
            cv.polyline(_arc_points(domain.curves[a.curve_id], a.start, a.length), colour, 2.2)
    for tp in strata.tangency_points:
        cv.circle(tp.position, 4, KIND_COLOUR.get(tp.kind, "black"))
    cv.text((PAD, SIZE - 6), "entry arcs blue, exit arcs red; tangencies: external ochre, internal green",
            pixel=True, size=9)
    return cv


def _unrolled(domain):
    lengths = np.array([c.length for c in domain.curves])
    offsets = np.concatenate([[0.0], np.cumsum(lengths)]) / lengths.sum()

    def angle(cid, t):
        return 2 * math.pi * (offsets[cid] + (offsets[cid + 1] - offsets[cid]) * (t % 1.0))

    return angle, offsets


def chord_figure(dataset, domain, max_chords=400, title="causality map") -> Canvas:
    """Chord diagram: every sampled source joined to its image on the unrolled boundary."""
    cv = Canvas((-1.15, -1.15, 1.15, 1.15), title=title)
    angle, offsets = _unrolled(domain)
    for cid in range(len(domain.curves)):
        a = np.linspace(2 * math.pi * offsets[cid], 2 * math.pi * offsets[cid + 1], 100)
        cv.polyline(np.column_stack([np.cos(a), np.sin(a)]), PALETTE[cid % len(PALETTE)], 3.0)
        mid = 0.5 * (a[0] + a[-1])
        cv.text((1.09 * math.cos(mid), 1.09 * math.sin(mid)), f"curve {cid}", anchor="middle", size=9)
    samples = [s for s in dataset.samples if not s.fixed]
    step = max(1, len(samples) // max_chords)
    for s in samples[::step]:
        a1, a2 = angle(*s.source), angle(*s.target)
        p1, p2 = (math.cos(a1), math.sin(a1)), (math.cos(a2), math.sin(a2))
        (x1, y1), (x2, y2), (cx, cy) = cv.px(p1), cv.px(p2), cv.px((0.0, 0.0))
        cv.path(f"M {x1:.2f} {y1:.2f} Q {cx:.2f} {cy:.2f} {x2:.2f} {y2:.2f}",
                PALETTE[s.source.curve_id % len(PALETTE)], 0.5, opacity=0.6)
    for s in dataset.samples:
        if s.fixed:
            a = angle(*s.source)
            cv.circle((math.cos(a), math.sin(a)), 3, "black")
    return cv


def _vertex_position(domain, vertex):
    b = vertex.tangencies[0]
    return np.asarray(domain.curves[b.curve_id].point(b.t), dtype=float).ravel()


def _edge_midpoint(domain, edge):
    row = edge.samples[len(edge.samples) // 2]
    fib = row[3]
    a = domain.curves[fib[0][0]].point(fib[0][1])
    b = domain.curves[fib[-1][0]].point(fib[-1][1])
    return 0.5 * (np.asarray(a, dtype=float).ravel() + np.asarray(b, dtype=float).ravel())


def graph_figure(graph, domain, title="trajectory graph") -> Canvas:
    """T(v) drawn in the plane: vertices at their tangency points, edges through a middle trajectory."""
    cv = Canvas(domain.bbox, title=title)
    for c in domain.curves:
        cv.polyline(np.vstack([c.polyline, c.polyline[:1]]), "#cbd5e0", 1.0)
    pos = {v.id: _vertex_position(domain, v) for v in graph.vertices}
    for e in graph.edges:
        m = _edge_midpoint(domain, e)
        colour = PALETTE[e.id % len(PALETTE)]
        if e.ends[0] is None:
            cv.circle(m, 5, colour, fill="none")
            continue
        a, b = pos[e.ends[0]], pos[e.ends[1]]
        ctrl = 2 * m - 0.5 * (a + b)  # the quadratic curve passes through m
        (x1, y1), (x2, y2), (cx, cy) = cv.px(a), cv.px(b), cv.px(ctrl)
        cv.path(f"M {x1:.2f} {y1:.2f} Q {cx:.2f} {cy:.2f} {x2:.2f} {y2:.2f}", colour, 2.0)
        cv.text(m, f"e{e.id}", anchor="middle", size=9, colour=colour)
    for v in graph.vertices:
        cv.circle(pos[v.id], 5, KIND_COLOUR.get(v.kind, "black"))
        cv.text(pos[v.id] + np.array([0.0, 0.04 * domain.scale]), f"v{v.id} ({v.valence})", anchor="middle", size=9)
    return cv


def alpha_figure(model, title="boundary image of the alpha-embedding") -> Canvas:
    """Per edge of T(v): the band swept by the fibers between entry (low) and exit (high) values of f."""
    edges = model.graph.edges
    fmin = min(min(r[1] for r in e.samples) for e in edges)
    fmax = max(max(r[2] for r in e.samples) for e in edges)
    gap = 0.25
    width = len(edges) * (1 + gap) - gap
    height = fmax - fmin
    cv = Canvas((-0.1, fmin - 0.05 * height, width + 0.1, fmax + 0.05 * height), width=max(SIZE, 90 * len(edges)),
                title=title)
    for k, e in enumerate(edges):
        x0 = k * (1 + gap)
        c = np.array([r[0] for r in e.samples])
        lo = np.array([r[1] for r in e.samples])
        hi = np.array([r[2] for r in e.samples])
        colour = PALETTE[e.id % len(PALETTE)]
        band = np.vstack([np.column_stack([x0 + c, lo]), np.column_stack([x0 + c[::-1], hi[::-1]])])
        cv.polyline(band, colour, 0.8, closed=True, fill=colour, opacity=0.25)
        cv.polyline(np.column_stack([x0 + c, lo]), ENTRY_COLOUR, 1.6)
        cv.polyline(np.column_stack([x0 + c, hi]), EXIT_COLOUR, 1.6)
        cv.text((x0 + 0.5, fmin - 0.03 * height), f"e{e.id}: v{e.ends[0]}-v{e.ends[1]}", anchor="middle", size=9)
    return cv


def write_figures(out_dir, domain, strata, dataset=None, graph=None, model=None, trajectories=()):
    """Write every figure whose inputs are available; returns the written paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = [domain_figure(domain, strata, trajectories).save(os.path.join(out_dir, "domain.svg"))]
    if dataset is not None:
        paths.append(chord_figure(dataset, domain).save(os.path.join(out_dir, "causality.svg")))
    if graph is not None:
        paths.append(graph_figure(graph, domain).save(os.path.join(out_dir, "graph.svg")))
    if model is not None:
        paths.append(alpha_figure(model).save(os.path.join(out_dir, "alpha.svg")))
    return paths
