"""Level-set extraction by marching squares, and the side/separation tests.

Crossing points live on grid edges and are linked through the edges they
share, so components are joined exactly rather than by coordinate snapping.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import shapely

from .field import ScalarField, Window


class Topology(str, enum.Enum):
    PROPER_ARC = "ProperArc"
    CLOSED_LOOP = "ClosedLoop"
    DEGENERATE = "Degenerate"


class Side(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"
    ON = "On"


@dataclass(frozen=True, eq=False)
class LevelComponent:
    """One connected piece of ``{f = level}`` inside the window.

    ``vertices`` is an ``(n, 2)`` array. Closed loops repeat their first
    vertex at the end. ``touches_mask`` records that the trace ran into a
    singular cell or produced a vertex off the level by more than the trace
    tolerance.
    """

    level: float
    vertices: np.ndarray
    topology: Topology
    id: int
    window: Window
    touches_mask: bool = False

    def __len__(self):
        return len(self.vertices)

    @property
    def closed(self) -> bool:
        v = self.vertices
        return len(v) >= 4 and bool(np.all(v[0] == v[-1]))

    def arclength(self) -> np.ndarray:
        d = np.hypot(*np.diff(self.vertices, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(d)])


LevelFamily = dict  # level -> list[LevelComponent]


# --------------------------------------------------------------------------
# marching squares

# corner bits: bl=1, br=2, tr=4, tl=8; cell edges: B, R, T, L
_B, _R, _T, _L = range(4)
_CASES = {
    1: [(_L, _B)],
    2: [(_B, _R)],
    3: [(_L, _R)],
    4: [(_R, _T)],
    6: [(_B, _T)],
    7: [(_L, _T)],
    8: [(_L, _T)],
    9: [(_B, _T)],
    11: [(_R, _T)],
    12: [(_L, _R)],
    13: [(_B, _R)],
    14: [(_L, _B)],
}
# saddles, keyed by (case, centre above level)
_SADDLES = {
    (5, True): [(_B, _R), (_L, _T)],
    (5, False): [(_L, _B), (_R, _T)],
    (10, True): [(_L, _B), (_R, _T)],
    (10, False): [(_B, _R), (_L, _T)],
}


def _edge_ids(j: int, i: int, nx: int, ny: int) -> tuple[int, int, int, int]:
    nh = ny * (nx - 1)
    return (
        j * (nx - 1) + i,  # B: horizontal edge at row j
        nh + j * nx + i + 1,  # R: vertical edge at column i+1
        (j + 1) * (nx - 1) + i,  # T
        nh + j * nx + i,  # L
    )


def _edge_points(eids: np.ndarray, values: np.ndarray, window: Window, level: float):
    """Crossing points on grid edges by linear interpolation, and a boundary flag per edge."""
    ny, nx = values.shape
    nh = ny * (nx - 1)
    xs, ys = window.xs(), window.ys()
    eids = np.asarray(eids, dtype=np.int64)
    horiz = eids < nh
    jh, ih = np.divmod(np.where(horiz, eids, 0), nx - 1)
    jv, iv = np.divmod(np.where(horiz, 0, eids - nh), nx)
    j = np.where(horiz, jh, jv)
    i = np.where(horiz, ih, iv)
    j2 = np.where(horiz, j, j + 1)
    i2 = np.where(horiz, i + 1, i)
    a, b = values[j, i], values[j2, i2]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (level - a) / (b - a)
    x = xs[i] + np.where(horiz, t * (xs[np.minimum(i + 1, nx - 1)] - xs[i]), 0.0)
    y = ys[j] + np.where(horiz, 0.0, t * (ys[np.minimum(j + 1, ny - 1)] - ys[j]))
    on_bdry = np.where(horiz, (j == 0) | (j == ny - 1), (i == 0) | (i == nx - 1))
    return np.column_stack([x, y]), on_bdry


def _segments(field: ScalarField, level: float) -> list[tuple[int, int]]:
    values = field.values
    ny, nx = values.shape
    with np.errstate(invalid="ignore"):
        above = values >= level
    case = (
        above[:-1, :-1].astype(np.int8)
        + 2 * above[:-1, 1:]
        + 4 * above[1:, 1:]
        + 8 * above[1:, :-1]
    )
    active = (case != 0) & (case != 15) & ~field.mask
    segs = []
    for j, i in zip(*np.nonzero(active)):
        k = int(case[j, i])
        if k in (5, 10):
            centre = field.center_values[j, i]
            # undefined centre: fall back to the corner mean
            if not math.isfinite(centre):
                centre = values[j : j + 2, i : i + 2].mean()
            pairs = _SADDLES[(k, bool(centre >= level))]
        else:
            pairs = _CASES[k]
        ids = _edge_ids(int(j), int(i), nx, ny)
        for a, b in pairs:
            segs.append((ids[a], ids[b]))
    return segs


def _chains(segs: list[tuple[int, int]]) -> list[tuple[list[int], bool]]:
    nbrs: dict[int, list[int]] = {}
    for a, b in segs:
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)
    seen: set[int] = set()
    out = []

    def walk(start):
        chain = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [n for n in nbrs[cur] if n != prev and n not in seen]
            if not nxt:
                return chain
            prev, cur = cur, nxt[0]
            seen.add(cur)
            chain.append(cur)

    # open chains first, from their degree-1 ends, in edge-id order
    for e in sorted(nbrs):
        if e not in seen and len(nbrs[e]) == 1:
            out.append((walk(e), False))
    for e in sorted(nbrs):
        if e not in seen:
            chain = walk(e)
            out.append((chain + [chain[0]], True))
    return out


def _dedupe(points: np.ndarray) -> np.ndarray:
    if len(points) < 2:
        return points
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(points[1:] != points[:-1], axis=1)
    return points[keep]


def trace_level(field: ScalarField, level: float, tol: float) -> list[LevelComponent]:
    """All connected components of ``{f = level}`` in the window.

    Returns an empty list when the level is outside the sampled values.
    Components that run into a masked cell, or that have a vertex farther
    than ``tol`` from the level, are marked Degenerate.
    """
    if not math.isfinite(level):
        raise ValueError("level must be finite")
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = field.window
    segs = _segments(field, level)
    comps = []
    for chain, closed in _chains(segs):
        pts, on_bdry = _edge_points(chain, field.values, w, level)
        pts = _dedupe(pts)
        # an open end on an interior edge means a neighbouring cell was masked
        hit_mask = (not closed) and not (on_bdry[0] and on_bdry[-1])
        err = np.abs(field(pts[:, 0], pts[:, 1]) - level)
        if not np.all(err <= tol):
            hit_mask = True
        comps.append(_canonical(level, pts, closed, w, hit_mask))
    comps.sort(key=lambda c: (c.vertices[0, 0], c.vertices[0, 1], len(c.vertices)))
    return [
        LevelComponent(c.level, c.vertices, c.topology, k, w, c.touches_mask)
        for k, c in enumerate(comps)
    ]


def trace_family(field: ScalarField, levels, tol: float) -> LevelFamily:
    return {float(c): trace_level(field, float(c), tol) for c in levels}


def _canonical(level, pts, closed, w, hit_mask) -> LevelComponent:
    if closed and len(pts) >= 4:
        ring = pts[:-1]
        k = np.lexsort((ring[:, 1], ring[:, 0]))[0]
        ring = np.roll(ring, -k, axis=0)
        if _signed_area(ring) < 0:
            ring = np.concatenate([ring[:1], ring[:0:-1]])
        pts = np.vstack([ring, ring[:1]])
    elif len(pts) >= 2:
        if _boundary_param(pts[-1], w) < _boundary_param(pts[0], w):
            pts = pts[::-1]
    pts = np.ascontiguousarray(pts)
    pts.setflags(write=False)
    proto = LevelComponent(level, pts, Topology.DEGENERATE, -1, w, hit_mask)
    return LevelComponent(level, pts, classify_component(proto, w), -1, w, hit_mask)


def _signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# --------------------------------------------------------------------------
# window boundary helpers

def _boundary_param(p, w: Window) -> float:
    """Clockwise perimeter coordinate of the boundary point nearest to p,
    starting at (xmin, ymin) and running up the left edge."""
    W, H = w.xmax - w.xmin, w.ymax - w.ymin
    x = min(max(p[0], w.xmin), w.xmax)
    y = min(max(p[1], w.ymin), w.ymax)
    d = [x - w.xmin, w.ymax - y, w.xmax - x, y - w.ymin]  # left, top, right, bottom
    side = int(np.argmin(d))
    if side == 0:
        return y - w.ymin
    if side == 1:
        return H + (x - w.xmin)
    if side == 2:
        return H + W + (w.ymax - y)
    return 2 * H + W + (w.xmax - x)


def _ccw_param(p, w: Window) -> float:
    """Counter-clockwise perimeter coordinate from (xmin, ymin)."""
    P = 2 * ((w.xmax - w.xmin) + (w.ymax - w.ymin))
    return (P - _boundary_param(p, w)) % P


def _ccw_point(s: float, w: Window) -> tuple[float, float]:
    W, H = w.xmax - w.xmin, w.ymax - w.ymin
    if s <= W:
        return (w.xmin + s, w.ymin)
    if s <= W + H:
        return (w.xmax, w.ymin + (s - W))
    if s <= 2 * W + H:
        return (w.xmax - (s - W - H), w.ymax)
    return (w.xmin, w.ymax - (s - 2 * W - H))


def _dist_to_boundary(p, w: Window) -> float:
    return min(p[0] - w.xmin, w.xmax - p[0], p[1] - w.ymin, w.ymax - p[1])


def classify_component(c: LevelComponent, w: Window) -> Topology:
    """ProperArc, ClosedLoop or Degenerate, relative to window ``w``."""
    v = _dedupe(np.asarray(c.vertices, dtype=float))
    if c.touches_mask or len(v) < 2:
        return Topology.DEGENERATE
    closed = len(v) >= 4 and bool(np.all(v[0] == v[-1]))
    if closed:
        return Topology.CLOSED_LOOP if shapely.LineString(v).is_simple else Topology.DEGENERATE
    tol = w.cellsize
    ends_out = _dist_to_boundary(v[0], w) <= tol and _dist_to_boundary(v[-1], w) <= tol
    if ends_out and shapely.LineString(v).is_simple:
        return Topology.PROPER_ARC
    return Topology.DEGENERATE


# --------------------------------------------------------------------------
# sides and separation

def left_region(c: LevelComponent) -> np.ndarray:
    """Polygon of the part of the window on the left of the oriented arc.

    The arc is closed up by walking the window boundary counter-clockwise
    from its last endpoint back to its first.
    """
    w = c.window
    v = np.asarray(c.vertices, dtype=float)
    P = 2 * ((w.xmax - w.xmin) + (w.ymax - w.ymin))
    s_end, s_start = _ccw_param(v[-1], w), _ccw_param(v[0], w)
    span = (s_start - s_end) % P
    W, H = w.xmax - w.xmin, w.ymax - w.ymin
    corners = []
    for s in (0.0, W, W + H, 2 * W + H):
        ds = (s - s_end) % P
        if 0 < ds < span:
            corners.append((ds, _ccw_point(s, w)))
    corners.sort()
    tail = [_ccw_point(s_end, w)] + [p for _, p in corners] + [_ccw_point(s_start, w)]
    return np.vstack([v, np.array(tail)])


def _points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorised over points."""
    x, y = pts[:, 0:1], pts[:, 1:2]
    a = poly
    b = np.roll(poly, -1, axis=0)
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = ax + (y - ay) * (bx - ax) / (by - ay)
    hits = straddle & (x < xcross)
    return (hits.sum(axis=1) % 2) == 1


def distance_to_polyline(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a = poly[:-1][None, :, :]
    d = (poly[1:] - poly[:-1])[None, :, :]
    q = pts[:, None, :]
    dd = np.sum(d * d, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dd > 0, np.sum((q - a) * d, axis=-1) / dd, 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * d
    return np.sqrt(np.min(np.sum((q - proj) ** 2, axis=-1), axis=1))


def sides_of_curve(c: LevelComponent, pts, tol: float | None = None) -> list[Side]:
    """Vectorised :func:`side_of_curve`."""
    if c.topology is not Topology.PROPER_ARC:
        raise ValueError("side_of_curve needs a ProperArc")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    w = c.window
    tol = 1e-9 * w.diagonal if tol is None else tol
    on = distance_to_polyline(pts, np.asarray(c.vertices, dtype=float)) <= tol
    # points on the window edge would sit on the region's own boundary
    nudge = 1e-9 * w.diagonal
    inner = np.clip(pts, [w.xmin + nudge, w.ymin + nudge], [w.xmax - nudge, w.ymax - nudge])
    inside = _points_in_polygon(inner, left_region(c))
    return [Side.ON if o else (Side.LEFT if l else Side.RIGHT) for o, l in zip(on, inside)]


def side_of_curve(c: LevelComponent, p, tol: float | None = None) -> Side:
    """Which side of the proper arc ``c`` the point ``p`` is on.

    Left is the region on the left of the oriented polyline. Points within
    ``tol`` of the arc are On.
    """
    return sides_of_curve(c, [p], tol)[0]


def separation_relation(K: LevelComponent, C: LevelComponent, L: LevelComponent) -> bool:
    """True iff K and L lie in different components of window minus C."""
    for comp in (K, C, L):
        if comp.topology is not Topology.PROPER_ARC:
            raise ValueError(f"component {comp.id} at level {comp.level} is not a ProperArc")
    if K is C or C is L or K is L:
        raise ValueError("K, C, L must be distinct")
    tol = 1e-9 * C.window.diagonal
    sides = []
    for comp in (K, L):
        labels = [s for s in sides_of_curve(C, comp.vertices, tol) if s is not Side.ON]
        if not labels:
            raise ValueError("curve lies on C")
        sides.append(labels[len(labels) // 2])
    return sides[0] != sides[1]


# --------------------------------------------------------------------------
# line records: ``level topology n x1 y1 ... xn yn``

def component_to_record(c: LevelComponent) -> str:
    coords = " ".join(f"{x:.17g} {y:.17g}" for x, y in c.vertices)
    return f"{c.level:.17g} {c.topology.value} {len(c.vertices)} {coords}".rstrip()


def component_from_record(line: str, window: Window, id: int = 0) -> LevelComponent:
    parts = line.split()
    level, topo, n = float(parts[0]), Topology(parts[1]), int(parts[2])
    nums = np.array([float(t) for t in parts[3:]], dtype=float)
    if nums.size != 2 * n:
        raise ValueError(f"record declares {n} vertices but carries {nums.size // 2}")
    v = nums.reshape(n, 2)
    v.setflags(write=False)
    return LevelComponent(level, v, topo, id, window, topo is Topology.DEGENERATE)
