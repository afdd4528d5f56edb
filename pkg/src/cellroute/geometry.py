"""Planar disc agents: segment distances, corridor conflicts, TSPLIB input, SVG output.

An agent is a disc of radius ``r`` moving on straight segments, so the
region it sweeps along an arc is a capsule.  Two occupancies conflict when
their swept regions come closer than ``2r``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import InstanceError
from .model import ConflictSet, EuclideanCost, Instance, ScheduledTour, arc, vertex

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def chebyshev_time(q_s, q_e, omega) -> float:
    """Time for a joint move when every joint runs at most at its top speed."""
    q_s, q_e, omega = (np.asarray(x, dtype=float) for x in (q_s, q_e, omega))
    if not q_s.shape == q_e.shape == omega.shape:
        raise ValueError("joint vectors and velocity limits must have the same length")
    if np.any(omega <= 0):
        raise ValueError("velocity limits must be positive")
    if q_s.size == 0:
        return 0.0
    return float(np.max(np.abs(q_s - q_e) / omega))


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    ab = b - a
    den = float(ab @ ab)
    t = 0.0 if den == 0 else min(1.0, max(0.0, float((p - a) @ ab) / den))
    return float(np.hypot(*(a + t * ab - p)))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segments_intersect(a, b, c, d) -> bool:
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0 > o2) or (o1 < 0 < o2)) and ((o3 > 0 > o4) or (o3 < 0 < o4)):
        return True
    return (o1 == 0 and _on_segment(a, b, c)) or (o2 == 0 and _on_segment(a, b, d)) \
        or (o3 == 0 and _on_segment(c, d, a)) or (o4 == 0 and _on_segment(c, d, b))


def segment_distance(a, b, c, d) -> float:
    """Smallest distance between segments ab and cd."""
    if segments_intersect(a, b, c, d):
        return 0.0
    return min(point_segment_distance(a, c, d), point_segment_distance(b, c, d),
               point_segment_distance(c, a, b), point_segment_distance(d, a, b))


@dataclass
class DiscWorld:
    coords: np.ndarray
    radius: float
    reach_radius: Sequence[float] | None = None  # optional per-agent disc around the home

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if not self.radius > 0:
            raise InstanceError("agent radius must be positive")
        if not np.all(np.isfinite(self.coords)):
            raise InstanceError("coordinates must be finite")

    @classmethod
    def of(cls, instance: Instance, radius: float | None = None) -> "DiscWorld":
        r = radius if radius is not None else instance.radius
        if instance.coords is None or r is None:
            raise InstanceError("instance needs coordinates and a radius for geometric conflicts")
        return cls(instance.coords, r)


def _elements(instance: Instance, loads: dict[int, Sequence[int]]):
    for k, verts in loads.items():
        verts = sorted(set(int(v) for v in verts))
        for v in verts:
            yield vertex(k, v), (v,)
        for i, u in enumerate(verts):
            for w in verts[i + 1:]:
                yield arc(k, u, w), (u, w)


def detect_conflicts(world: DiscWorld, instance: Instance, tours_or_loads) -> ConflictSet:
    """Static corridor conflicts between different agents.

    ``tours_or_loads`` maps agent to vertex list (or is a list of Tours /
    ScheduledTours).  Every arc between two vertices of the same agent's
    load is considered, so any re-ordering of the load is covered.
    """
    loads = _as_loads(tours_or_loads)
    elems = list(_elements(instance, loads))
    thr = 2.0 * world.radius
    P = world.coords
    pairs = []
    for i, (ea, va) in enumerate(elems):
        for eb, vb in elems[i + 1:]:
            if ea[1] == eb[1]:
                continue
            if _distance(P, va, vb) < thr:
                pairs.append((ea, eb))
    return ConflictSet(pairs)


def _distance(P, va, vb) -> float:
    if len(va) == 1 and len(vb) == 1:
        return float(np.hypot(*(P[va[0]] - P[vb[0]])))
    if len(va) == 1:
        return point_segment_distance(P[va[0]], P[vb[0]], P[vb[1]])
    if len(vb) == 1:
        return point_segment_distance(P[vb[0]], P[va[0]], P[va[1]])
    return segment_distance(P[va[0]], P[va[1]], P[vb[0]], P[vb[1]])


def _as_loads(x) -> dict[int, list[int]]:
    if isinstance(x, dict):
        return {int(k): list(v) for k, v in x.items()}
    out: dict[int, list[int]] = {}
    for t in x:
        seq = t.waypoints if isinstance(t, ScheduledTour) else t.sequence
        out.setdefault(t.agent, []).extend(seq)
    return out


# -- TSPLIB -------------------------------------------------------------------


def read_tsplib(path: str | Path) -> tuple[str, np.ndarray]:
    """Parse an EUC_2D node-coordinate file; returns ``(name, coords)``."""
    path = Path(path)
    header: dict[str, str] = {}
    coords: list[tuple[float, float]] = []
    in_coords = False
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        if line.startswith("NODE_COORD_SECTION"):
            in_coords = True
            continue
        if not in_coords:
            m = re.match(r"([A-Z_]+)\s*:\s*(.*)", line)
            if not m:
                raise InstanceError(f"{path}:{lineno}: unreadable header line")
            header[m.group(1)] = m.group(2).strip()
            continue
        parts = line.split()
        if len(parts) != 3:
            raise InstanceError(f"{path}:{lineno}: expected 'index x y'")
        try:
            coords.append((float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise InstanceError(f"{path}:{lineno}: {exc}") from exc
    kind = header.get("EDGE_WEIGHT_TYPE")
    if kind != "EUC_2D":
        raise InstanceError(f"{path}: unsupported EDGE_WEIGHT_TYPE {kind!r} (only EUC_2D)")
    dim = int(header.get("DIMENSION", len(coords)))
    if dim != len(coords):
        raise InstanceError(f"{path}: DIMENSION {dim} but {len(coords)} coordinates")
    return header.get("NAME", path.stem), np.array(coords)


def write_tsplib(path: str | Path, name: str, coords) -> None:
    lines = [f"NAME : {name}", "TYPE : TSP", f"DIMENSION : {len(coords)}", "EDGE_WEIGHT_TYPE : EUC_2D",
             "NODE_COORD_SECTION"]
    lines += [f"{i + 1} {x:g} {y:g}" for i, (x, y) in enumerate(coords)]
    Path(path).write_text("\n".join(lines + ["EOF", ""]))


def farthest_point_clusters(coords, n_groups: int, first: int = 0, rounding: bool = False):
    """Center-based clustering: centers chosen greedily to be far apart
    (each new center maximizes its distance to the chosen ones, ties to the
    lowest index), then each city joins its nearest center.

    Returns ``(labels, centers)``; label ``j`` refers to ``centers[j]``.
    With ``rounding`` distances are TSPLIB nearest integers.
    """
    P = np.asarray(coords, dtype=float)
    n = len(P)
    if not 1 <= n_groups <= n:
        raise InstanceError(f"cannot build {n_groups} groups from {n} cities")
    D = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1))
    if rounding:
        D = np.floor(D + 0.5)
    centers = [first]
    near = D[first].copy()
    while len(centers) < n_groups:
        near[centers] = -1
        nxt = int(np.argmax(near))
        centers.append(nxt)
        near = np.minimum(near, D[nxt])
    labels = np.argmin(D[:, centers], axis=1)
    labels[centers] = np.arange(n_groups)
    return labels, centers


def ingest_tsplib(path: str | Path, n_groups: int, n_agents: int = 4, c_g: float = 0.0, seed: int | None = None,
                  radius: float | None = None, order: str = "selection", rounding: bool = False) -> Instance:
    """Clustered benchmark instance from a TSPLIB file.

    The first center is city 1, or a seeded random city when ``seed`` is
    given.  Groups are numbered by center selection order
    (``order="selection"``) or by the smallest city index they contain
    (``order="index"``); the first ``n_agents`` groups become the homes.
    """
    base, P = read_tsplib(path)
    first = 0 if seed is None else int(np.random.default_rng(seed).integers(len(P)))
    labels, centers = farthest_point_clusters(P, n_groups, first, rounding)
    if order == "index":
        firsts = [int(np.flatnonzero(labels == j).min()) for j in range(n_groups)]
        relabel = np.argsort(np.argsort(firsts))
        labels = relabel[labels]
    elif order != "selection":
        raise ValueError(f"unknown group order {order!r}")
    if n_agents > n_groups:
        raise InstanceError("more agents than groups")
    n = len(P)
    return Instance(
        agents=tuple(f"a{k + 1}" for k in range(n_agents)),
        tasks=tuple(f"h{j + 1}" if j < n_agents else f"g{j + 1}" for j in range(n_groups)),
        vertex_ids=tuple(range(1, n + 1)),
        vertex_task=tuple(int(t) for t in labels),
        vertex_agents=(frozenset(range(n_agents)),) * n,
        cost=EuclideanCost(P, c_g),
        coords=P,
        radius=radius,
        name=f"{n_groups}{base}",
    )


# -- SVG ---------------------------------------------------------------------


def render_svg(world: DiscWorld, schedules: Iterable, path: str | Path | None = None,
               size: float = 600.0, labels: Sequence[str] | None = None) -> str:
    """Vertices, tour polylines and their swept capsules (width ``2r``).

    ``schedules`` holds ScheduledTours or Tours.  Returns the SVG text and
    writes it to ``path`` when given.
    """
    P = world.coords
    lo = P.min(axis=0) - 2 * world.radius
    hi = P.max(axis=0) + 2 * world.radius
    span = float(max(hi - lo)) or 1.0
    s = size / span
    w, h = (hi - lo) * s

    def xy(v):
        x, y = P[v]
        return (x - lo[0]) * s, (hi[1] - y) * s  # flip y

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
           f'viewBox="0 0 {w:.1f} {h:.1f}">',
           f'<rect width="{w:.1f}" height="{h:.1f}" fill="white"/>']
    for idx, sch in enumerate(schedules):
        seq = list(sch.waypoints) if isinstance(sch, ScheduledTour) else sch.waypoints()
        color = PALETTE[sch.agent % len(PALETTE)]
        pts = " ".join("%.2f,%.2f" % xy(v) for v in seq)
        out.append(f'<g class="agent" data-agent="{sch.agent}">')
        out.append(f'<polyline class="swept" points="{pts}" fill="none" stroke="{color}" stroke-opacity="0.25" '
                   f'stroke-width="{2 * world.radius * s:.2f}" stroke-linecap="round" stroke-linejoin="round"/>')
        out.append(f'<polyline class="tour" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append("</g>")
    for v in range(len(P)):
        x, y = xy(v)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="black"/>')
        if labels is not None:
            out.append(f'<text x="{x + 4:.2f}" y="{y - 4:.2f}" font-size="10">{escape(str(labels[v]))}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
