"""Straightening charts: strips between consecutive levels, glued into one chart.

Coordinates: a chart point ``(x, y)`` maps to the point of the level curve
``{f = y}`` at signed arc-length ``x - offset_k`` from the anchor
cross-section of strip ``k``. Level curves are oriented so that f increases
to their left.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import shapely
from scipy.spatial import cKDTree

from .field import ScalarField, Window
from .regularity import CrossSection
from .tracer import LevelComponent, Side, Topology, sides_of_curve, trace_level


class StraightenError(RuntimeError):
    pass


class GluingError(StraightenError):
    def __init__(self, message: str, max_drift: float):
        super().__init__(f"{message}: max drift {max_drift:.3g}")
        self.max_drift = max_drift


class ChartDomainError(ValueError):
    pass


@dataclass(frozen=True)
class RangeInterval:
    """Open image interval ``(a, b)``; ``a``/``b`` are ``±inf`` when flagged unbounded."""

    a: float
    b: float
    achieved: tuple[float, float]

    @property
    def width(self) -> float:
        return self.achieved[1] - self.achieved[0]

    def to_dict(self) -> dict:
        return {
            "a": _json_float(self.a),
            "b": _json_float(self.b),
            "achieved": list(self.achieved),
            "open": [True, True],
        }


def _json_float(v: float):
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return v


def compute_range(field: ScalarField, big: float = 1e6) -> RangeInterval:
    """Sampled image of f over the unmasked nodes.

    An end is reported infinite when boundary values exceed ``big`` in
    magnitude on that side.
    """
    rng = field.value_range()
    if rng is None:
        raise StraightenError("every cell of the window is masked")
    lo, hi = rng
    v = field.values
    edge = np.concatenate([v[0], v[-1], v[:, 0], v[:, -1]])
    edge = edge[np.isfinite(edge)]
    a = -math.inf if edge.size and edge.min() < -big else lo
    b = math.inf if edge.size and edge.max() > big else hi
    return RangeInterval(a, b, (lo, hi))


@dataclass(frozen=True)
class LevelSequence:
    levels: tuple[float, ...]

    def __post_init__(self):
        if len(self.levels) < 2 or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing, at least two")

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, k):
        return self.levels[k]


def choose_level_sequence(rng, m: int, margin: float) -> LevelSequence:
    """``m + 1`` equally spaced levels across ``[lo + margin, hi - margin]``."""
    if m < 1:
        raise ValueError("m must be positive")
    if margin < 0:
        raise ValueError("margin must be non-negative")
    lo, hi = rng.achieved if isinstance(rng, RangeInterval) else rng
    lo, hi = lo + margin, hi - margin
    if not lo < hi:
        raise ValueError(f"range too narrow for margin {margin}")
    return LevelSequence(tuple(float(c) for c in np.linspace(lo, hi, m + 1)))


# --------------------------------------------------------------------------
# strips

@dataclass(frozen=True, eq=False)
class LevelCurve:
    """An oriented level polyline with its arc-length and anchor position."""

    level: float
    vertices: np.ndarray
    s: np.ndarray
    s_anchor: float

    def at(self, u) -> np.ndarray:
        """Points at signed arc-length ``u`` from the anchor."""
        t = self.s_anchor + np.asarray(u, dtype=float)
        return np.stack([np.interp(t, self.s, self.vertices[:, 0]),
                         np.interp(t, self.s, self.vertices[:, 1])], axis=-1)

    def coordinate(self, p) -> float:
        """Signed arc-length of the projection of ``p``."""
        return float(shapely.LineString(self.vertices).project(shapely.Point(p))) - self.s_anchor


@dataclass(frozen=True, eq=False)
class StripChart:
    c_lo: float
    c_hi: float
    anchor: CrossSection
    samples: np.ndarray  # (ny, nx, 2)
    half_width: float
    # full level curves at c_lo and c_hi; only needed for gluing
    edges: tuple[LevelCurve, LevelCurve] | None = dc_field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape[0], self.samples.shape[1]

    @property
    def xgrid(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.samples.shape[1])

    @property
    def ygrid(self) -> np.ndarray:
        return np.linspace(self.c_lo, self.c_hi, self.samples.shape[0])

    def apply_local(self, u, y) -> np.ndarray:
        """Bilinear lookup at local coordinates (no offset)."""
        u = np.asarray(u, dtype=float)
        y = np.asarray(y, dtype=float)
        ny, nx = self.shape
        fi = (u + self.half_width) / (2 * self.half_width) * (nx - 1)
        fj = (y - self.c_lo) / (self.c_hi - self.c_lo) * (ny - 1)
        i0 = np.clip(np.floor(fi).astype(int), 0, nx - 2)
        j0 = np.clip(np.floor(fj).astype(int), 0, ny - 2)
        a = (fi - i0)[..., None]
        b = (fj - j0)[..., None]
        S = self.samples
        return ((1 - a) * (1 - b) * S[j0, i0] + a * (1 - b) * S[j0, i0 + 1]
                + (1 - a) * b * S[j0 + 1, i0] + a * b * S[j0 + 1, i0 + 1])


def _level_curve(field, level, anchor_pt, tol) -> LevelCurve:
    comps = [c for c in trace_level(field, level, tol)]
    if not comps:
        raise StraightenError(f"level {level:.6g} has no trace")
    pt = shapely.Point(anchor_pt)
    lines = [shapely.LineString(c.vertices) for c in comps]
    k = int(np.argmin([ln.distance(pt) for ln in lines]))
    comp: LevelComponent = comps[k]
    if lines[k].distance(pt) > 2 * field.window.cellsize:
        raise StraightenError(f"anchor misses level {level:.6g}")
    if comp.topology is not Topology.PROPER_ARC:
        raise StraightenError(f"level {level:.6g}: component is {comp.topology.value}, not a ProperArc")
    v = np.array(comp.vertices, dtype=float)
    s = comp.arclength()
    s0 = float(lines[k].project(pt))
    # orient so that f increases to the left
    seg = int(np.clip(np.searchsorted(s, s0) - 1, 0, len(v) - 2))
    t = v[seg + 1] - v[seg]
    probe = v[seg] + 0.5 * t
    nrm = np.array([-t[1], t[0]]) / np.hypot(*t)
    eps = 0.25 * field.window.cellsize
    left = field(*(probe + eps * nrm))
    right = field(*(probe - eps * nrm))
    if left < right:
        v = v[::-1].copy()
        s = s[-1] - s[::-1]
        s0 = float(s[-1] - s0)
    return LevelCurve(level, v, s, s0)


def snap_to_levels(field: ScalarField, pts: np.ndarray, levels, steps: int = 3) -> np.ndarray:
    """Newton steps along the gradient moving each row of ``pts`` onto its level.

    Marching squares interpolates linearly inside a cell, which is poor where
    f is strongly curved. A step is kept only where it lowers the residual
    and the total move stays under half a cell.
    """
    w = field.window
    h = field.default_h
    c = np.asarray(levels, dtype=float)[:, None]
    p = np.array(pts, dtype=float)
    p0 = p.copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        r = field(p[..., 0], p[..., 1]) - c
        for _ in range(steps):
            gx = (field(p[..., 0] + h, p[..., 1]) - field(p[..., 0] - h, p[..., 1])) / (2 * h)
            gy = (field(p[..., 0], p[..., 1] + h) - field(p[..., 0], p[..., 1] - h)) / (2 * h)
            g2 = gx * gx + gy * gy
            q = p - (r / g2)[..., None] * np.stack([gx, gy], axis=-1)
            q[..., 0] = np.clip(q[..., 0], w.xmin, w.xmax)
            q[..., 1] = np.clip(q[..., 1], w.ymin, w.ymax)
            rq = field(q[..., 0], q[..., 1]) - c
            ok = (np.abs(rq) < np.abs(r)) & (np.hypot(*(q - p0).transpose(2, 0, 1)) < 0.5 * w.cellsize)
            p = np.where(ok[..., None], q, p)
            r = np.where(ok, rq, r)
    return p


def straighten_strip(
    field: ScalarField,
    c_lo: float,
    c_hi: float,
    anchor: CrossSection,
    nx_samples: int = 257,
    ny_samples: int = 17,
    tol: float | None = None,
    half_width: float | None = None,
    snap: bool = True,
) -> StripChart:
    """Sampled chart of the strip ``c_lo <= f <= c_hi`` around ``anchor``.

    Each of ``ny_samples`` levels is traced through its crossing with the
    anchor and sampled at ``nx_samples`` equal arc-length steps over
    ``[-X, X]``, where X is the largest half-width every level supports.
    With ``snap`` the samples are then moved onto their levels by
    :func:`snap_to_levels`; the traced curves themselves are left as is.
    """
    if not c_lo < c_hi:
        raise ValueError("need c_lo < c_hi")
    if nx_samples < 2 or ny_samples < 2:
        raise ValueError("need at least 2 x 2 samples")
    lo, hi = anchor.span
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    if c_lo < lo - slack or c_hi > hi + slack:
        raise StraightenError(f"anchor span {anchor.span} misses strip [{c_lo}, {c_hi}]")
    if tol is None:
        tol = 1e-2 * (hi - lo)
    curves = []
    for y in np.linspace(c_lo, c_hi, ny_samples):
        q = anchor.point_at(float(np.clip(y, lo, hi)))
        curves.append(_level_curve(field, float(y), q, tol))
    avail = min(min(c.s_anchor, c.s[-1] - c.s_anchor) for c in curves)
    if avail <= 0:
        raise StraightenError(f"anchor sits on the window boundary in strip [{c_lo}, {c_hi}]")
    X = avail
    if half_width is not None:
        X = half_width
        if half_width > avail:
            warnings.warn(f"half-width {half_width:.6g} exceeds available arc-length; shrunk to {avail:.6g}")
            X = avail
    u = np.linspace(-X, X, nx_samples)
    samples = np.stack([c.at(u) for c in curves])
    if snap:
        samples = snap_to_levels(field, samples, np.linspace(c_lo, c_hi, ny_samples))
    samples.setflags(write=False)
    return StripChart(float(c_lo), float(c_hi), anchor, samples, float(X), (curves[0], curves[-1]))


# --------------------------------------------------------------------------
# gluing and the global chart

@dataclass(eq=False)
class GlobalChart:
    strips: list[StripChart]
    offsets: list[float]
    range: RangeInterval | None = None
    expression: str = ""
    window: Window | None = None
    tolerances: dict = dc_field(default_factory=dict)
    field: ScalarField | None = dc_field(default=None, repr=False)

    @property
    def levels(self) -> np.ndarray:
        return np.array([s.c_lo for s in self.strips] + [self.strips[-1].c_hi])

    def strip_index(self, y: float) -> int:
        lv = self.levels
        if not (lv[0] <= y <= lv[-1]):
            raise ChartDomainError(f"y = {y} outside chart range [{lv[0]}, {lv[-1]}]")
        return int(min(np.searchsorted(lv, y, side="right") - 1, len(self.strips) - 1))

    def x_extent(self, k: int) -> tuple[float, float]:
        s = self.strips[k]
        return self.offsets[k] - s.half_width, self.offsets[k] + s.half_width

    def get_field(self) -> ScalarField:
        if self.field is None:
            raise ValueError("chart has no field attached")
        return self.field


def _edge_drift(lower: StripChart, off_lo: float, upper: StripChart, off_hi: float, n: int = 257) -> float:
    a = max(off_lo - lower.half_width, off_hi - upper.half_width)
    b = min(off_lo + lower.half_width, off_hi + upper.half_width)
    if not a < b:
        return math.inf
    xs = np.linspace(a, b, n)
    p = lower.apply_local(xs - off_lo, np.full(n, lower.c_hi))
    q = upper.apply_local(xs - off_hi, np.full(n, upper.c_lo))
    return float(np.max(np.hypot(*(p - q).T)))


def glue_strips(strips: list[StripChart], reference: int = 0, tol: float | None = None) -> GlobalChart:
    """Glue strips along their shared levels.

    ``offsets[k]`` is the global x of strip k's anchor; the reference strip
    gets 0. Going up, strip k's anchor point on the shared level is located
    by arc-length on strip k-1's copy of that level; going down, the mirror.
    """
    if not strips:
        raise ValueError("no strips")
    for a, b in zip(strips, strips[1:]):
        if a.c_hi != b.c_lo:
            raise ValueError(f"strips [{a.c_lo}, {a.c_hi}] and [{b.c_lo}, {b.c_hi}] do not share a level")
    m = len(strips)
    if not 0 <= reference < m:
        raise ValueError("reference strip out of range")
    offsets = [0.0] * m
    for k in range(reference + 1, m):
        below, here = strips[k - 1], strips[k]
        q = here.edges[0].at(0.0)
        offsets[k] = offsets[k - 1] + below.edges[1].coordinate(q)
    for k in range(reference - 1, -1, -1):
        above, here = strips[k + 1], strips[k]
        q = here.edges[1].at(0.0)
        offsets[k] = offsets[k + 1] + above.edges[0].coordinate(q)
    if tol is not None:
        drift = max((_edge_drift(strips[k - 1], offsets[k - 1], strips[k], offsets[k])
                     for k in range(1, m)), default=0.0)
        if drift > tol:
            raise GluingError("shared level parameterisations disagree", drift)
    return GlobalChart(list(strips), offsets)


def chart_apply(chart: GlobalChart, x: float, y: float) -> np.ndarray:
    """phi(x, y) by bilinear lookup in the owning strip."""
    k = chart.strip_index(y)
    return strip_apply(chart, k, x, y)


def strip_apply(chart: GlobalChart, k: int, x, y) -> np.ndarray:
    s = chart.strips[k]
    u = np.asarray(x, dtype=float) - chart.offsets[k]
    slack = 1e-12 * max(1.0, s.half_width)
    if np.any(np.abs(u) > s.half_width + slack):
        raise ChartDomainError(f"x outside strip {k} extent {chart.x_extent(k)}")
    return s.apply_local(np.clip(u, -s.half_width, s.half_width), y)


def apply_row(chart: GlobalChart, xs, y: float) -> np.ndarray:
    k = chart.strip_index(y)
    return strip_apply(chart, k, xs, np.full(np.shape(xs), y))


def chart_invert(chart: GlobalChart, p, tol: float | None = None, field: ScalarField | None = None):
    """Chart coordinates ``(x, y)`` of a covered point ``p``."""
    field = field or chart.get_field()
    tol = 2 * field.window.cellsize if tol is None else tol
    y = float(field(p[0], p[1]))
    if not math.isfinite(y):
        raise ChartDomainError(f"f undefined at {tuple(p)}")
    lv = chart.levels
    # points on the outer rows may sit a residual outside the range
    y_in = float(np.clip(y, lv[0], lv[-1]))
    k = chart.strip_index(y_in)
    s = chart.strips[k]
    u = s.xgrid
    row = s.apply_local(u, np.full(u.shape, y_in))
    line = shapely.LineString(row)
    pt = shapely.Point(p)
    d = line.distance(pt)
    if d > tol:
        if y_in != y:
            raise ChartDomainError(f"level {y} of {tuple(p)} outside chart range [{lv[0]}, {lv[-1]}]")
        raise ChartDomainError(f"point {tuple(p)} not covered (distance {d:.3g})")
    y = y_in
    # arc-length on the blended row, mapped back to the uniform u grid
    seglen = np.hypot(*np.diff(row, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    x_local = float(np.interp(line.project(pt), cum, u))
    return x_local + chart.offsets[k], y


# --------------------------------------------------------------------------
# verification

@dataclass
class VerificationReport:
    max_residual: float
    max_seam: float
    injectivity_violations: int
    monotonicity_violations: int
    order_violations: int
    max_roundtrip: float | None
    tolerances: dict
    grid: tuple[int, int]

    @property
    def passed(self) -> bool:
        ok = (
            self.max_residual <= self.tolerances["verify"]
            and self.max_seam <= self.tolerances["seam"]
            and self.injectivity_violations == 0
            and self.monotonicity_violations == 0
            and self.order_violations == 0
        )
        if self.max_roundtrip is not None:
            ok = ok and self.max_roundtrip <= self.tolerances["seam"]
        return ok

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_residual": self.max_residual,
            "max_seam": self.max_seam,
            "injectivity_violations": self.injectivity_violations,
            "monotonicity_violations": self.monotonicity_violations,
            "order_violations": self.order_violations,
            "max_roundtrip": self.max_roundtrip,
            "tolerances": dict(self.tolerances),
            "grid": list(self.grid),
        }


def seam_errors(chart: GlobalChart, n: int = 257) -> list[float]:
    """Two-sided mismatch at each interior level, evaluated at shared global x."""
    return [
        _edge_drift(chart.strips[k - 1], chart.offsets[k - 1], chart.strips[k], chart.offsets[k], n)
        for k in range(1, len(chart.strips))
    ]


def sweep(chart: GlobalChart, nx: int, ny: int):
    """Domain samples and their images over an ``nx`` x ``ny`` sweep."""
    lv = chart.levels
    dom, img = [], []
    for y in np.linspace(lv[0], lv[-1], ny):
        k = chart.strip_index(y)
        a, b = chart.x_extent(k)
        xs = np.linspace(a, b, nx)
        dom.append(np.stack([xs, np.full(nx, y)], axis=-1))
        img.append(strip_apply(chart, k, xs, np.full(nx, y)))
    return np.stack(dom), np.stack(img)


def injectivity_violations(dom: np.ndarray, img: np.ndarray, cell: float, level_tol: float) -> int:
    """Pairs of samples on the same level, far apart in x, whose images nearly coincide.

    Samples on levels further apart than ``level_tol`` cannot share an image
    point (f separates them), so only same-level pairs can collide.
    """
    pairs = cKDTree(img).query_pairs(0.5 * cell, output_type="ndarray")
    if not len(pairs):
        return 0
    a, b = pairs[:, 0], pairs[:, 1]
    same_level = np.abs(dom[a, 1] - dom[b, 1]) <= level_tol
    far = np.abs(dom[a, 0] - dom[b, 0]) > 4 * cell
    return int(np.sum(same_level & far))


def order_violations(chart: GlobalChart, field: ScalarField, n_levels: int = 7, tol: float | None = None) -> int:
    """Count sampled triples y1 < y2 < y3 whose outer curves are not split by the middle one.

    Uses every consecutive triple of ``n_levels`` equally spaced levels plus the
    outermost pair around each interior level.
    """
    tol = 1e-2 * (chart.levels[-1] - chart.levels[0]) if tol is None else tol
    lv = chart.levels
    ys = np.linspace(lv[0], lv[-1], n_levels + 2)[1:-1]
    rows = [apply_row(chart, np.linspace(*chart.x_extent(chart.strip_index(y)), 33), y) for y in ys]
    bad = 0
    for j in range(1, len(ys) - 1):
        comps = [c for c in trace_level(field, float(ys[j]), tol) if c.topology is Topology.PROPER_ARC]
        mid = shapely.Point(rows[j][len(rows[j]) // 2])
        if not comps:
            bad += 1
            continue
        C = min(comps, key=lambda c: shapely.LineString(c.vertices).distance(mid))
        for lo, hi in ((j - 1, j + 1), (0, len(ys) - 1)):
            s_lo = {s for s in sides_of_curve(C, rows[lo]) if s is not Side.ON}
            s_hi = {s for s in sides_of_curve(C, rows[hi]) if s is not Side.ON}
            if len(s_lo) != 1 or len(s_hi) != 1 or s_lo == s_hi:
                bad += 1
    return bad


def verify_straightening(
    field: ScalarField,
    chart: GlobalChart,
    grid: tuple[int, int] = (128, 128),
    tol: float = 1e-2,
    seam_tol: float | None = None,
    roundtrip_points: int = 0,
    seed: int = 0,
) -> VerificationReport:
    """Sweep the chart and measure how well it straightens f."""
    nx, ny = grid
    cell = field.window.cellsize
    seam_tol = 2 * cell if seam_tol is None else seam_tol
    dom, img = sweep(chart, nx, ny)
    vals = field(img[..., 0], img[..., 1])
    resid = np.abs(vals - dom[..., 1])
    max_resid = float(np.max(np.where(np.isfinite(resid), resid, np.inf)))
    seams = seam_errors(chart)
    max_seam = max(seams, default=0.0)

    flat_img = img.reshape(-1, 2)
    flat_dom = dom.reshape(-1, 2)
    inj = injectivity_violations(flat_dom, flat_img, cell, 2 * max_resid)

    seg = np.diff(img, axis=1)
    seglen = np.hypot(seg[..., 0], seg[..., 1])
    turn = np.sum(seg[:, 1:] * seg[:, :-1], axis=-1)
    mono = int(np.sum(seglen <= 0) + np.sum(turn <= 0))

    order = order_violations(chart, field)

    roundtrip = None
    if roundtrip_points:
        roundtrip = max_roundtrip(chart, field, roundtrip_points, seed)
    return VerificationReport(
        max_resid, max_seam, inj, mono, order, roundtrip,
        {"verify": tol, "seam": seam_tol}, (nx, ny),
    )


def random_chart_points(chart: GlobalChart, n: int, rng: np.random.Generator) -> np.ndarray:
    lv = chart.levels
    ys = rng.uniform(lv[0], lv[-1], n)
    out = np.empty((n, 2))
    for i, y in enumerate(ys):
        a, b = chart.x_extent(chart.strip_index(y))
        out[i] = (rng.uniform(a, b), y)
    return out


def max_roundtrip(chart: GlobalChart, field: ScalarField, n: int, seed: int = 0) -> float:
    """Largest |phi(phi^-1(p)) - p| over ``n`` random covered points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x, y in random_chart_points(chart, n, rng):
        p = chart_apply(chart, x, y)
        q = chart_apply(chart, *chart_invert(chart, p, field=field))
        worst = max(worst, float(np.hypot(*(p - q))))
    return worst
