"""Hypothesis checks and cross-sections.

Condition 1: every sampled level set is a single proper arc.
Condition 2: the level family is locally a stack of parallel arcs, checked at
grid resolution through the finite-difference gradient.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import shapely

from .field import OutsideWindowError, ScalarField, gradient_fd, gradient_grid
from .tracer import LevelComponent, Topology, trace_level


class Verdict(str, enum.Enum):
    EQUIVALENT = "Equivalent"
    NOT_EQUIVALENT = "NotEquivalent"
    INCONCLUSIVE = "Inconclusive"


class StallError(RuntimeError):
    """Gradient flow could not make progress (near-critical point)."""

    def __init__(self, point, gradient_norm: float):
        super().__init__(
            f"gradient flow stalled at ({point[0]:.6g}, {point[1]:.6g}), |grad f| = {gradient_norm:.3g}"
        )
        self.point = (float(point[0]), float(point[1]))
        self.gradient_norm = float(gradient_norm)


@dataclass
class ConditionResult:
    passed: bool
    witness: dict | None = None
    failures: list[dict] = dc_field(default_factory=list)
    # True when every failure is attributable to masking rather than to f
    soft: bool = False

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "witness": self.witness,
            "failure_count": len(self.failures),
        }


def default_eps_grad(field: ScalarField) -> float:
    rng = field.value_range()
    spread = (rng[1] - rng[0]) if rng else 1.0
    return 1e-6 * max(spread, 1e-300) / field.window.diagonal


# --------------------------------------------------------------------------
# condition 1

def check_condition1(field: ScalarField, levels, tol: float) -> ConditionResult:
    """Pass iff each level traces to exactly one ProperArc."""
    failures = []
    for c in levels:
        comps = trace_level(field, float(c), tol)
        if len(comps) == 1 and comps[0].topology is Topology.PROPER_ARC:
            continue
        failures.append(_level_witness(float(c), comps))
    if not failures:
        return ConditionResult(True)
    hard = [f for f in failures if f["hard"]]
    witness = (hard or failures)[0]
    return ConditionResult(False, witness, failures, soft=not hard)


def _level_witness(level: float, comps: list[LevelComponent]) -> dict:
    topos = [c.topology.value for c in comps]
    clean = [c for c in comps if not c.touches_mask]
    if not comps:
        reason, hard = "empty", False
    elif any(c.topology is Topology.CLOSED_LOOP for c in comps):
        reason, hard = "closed_loop", True
    elif len(comps) >= 2:
        reason, hard = "disconnected", len(clean) >= 2
    else:
        reason, hard = "degenerate", not comps[0].touches_mask
    return {
        "condition": 1,
        "reason": reason,
        "hard": hard,
        "level": level,
        "components": len(comps),
        "component_ids": [c.id for c in comps],
        "topologies": topos,
    }


# --------------------------------------------------------------------------
# condition 2

# ring around a node: (di, dj), counter-clockwise from east
_RING = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def _ring_sign_changes(values: np.ndarray) -> np.ndarray:
    """Sign changes of f - f(centre) around each interior node's 8-ring.

    Ties are broken by node order (row-major index), so every neighbour is
    strictly above or below the centre.
    """
    c = values[1:-1, 1:-1]
    ny, nx = values.shape
    signs = []
    for di, dj in _RING:
        nb = values[1 + dj : ny - 1 + dj, 1 + di : nx - 1 + di]
        later = dj > 0 or (dj == 0 and di > 0)
        signs.append((nb > c) | ((nb == c) & later))
    s = np.stack(signs)
    return np.sum(s != np.roll(s, -1, axis=0), axis=0)


def _cell_winding(grad: np.ndarray) -> np.ndarray:
    """Turning of the gradient around each cell, in units of full turns."""
    ang = np.arctan2(grad[..., 1], grad[..., 0])
    loop = [ang[:-1, :-1], ang[:-1, 1:], ang[1:, 1:], ang[1:, :-1]]
    total = np.zeros_like(loop[0])
    for a, b in zip(loop, loop[1:] + loop[:1]):
        total += (b - a + np.pi) % (2 * np.pi) - np.pi
    return total / (2 * np.pi)


def check_condition2(field: ScalarField, h: float | None = None, eps_grad: float | None = None) -> ConditionResult:
    """Local regularity at every unmasked node.

    A node fails when its gradient is below ``eps_grad``, or when the level
    through it does not split its 3x3 patch into exactly two sides. A cell
    fails when the gradient turns a full revolution around it, which places
    a critical point strictly inside the cell.
    """
    h = field.default_h if h is None else h
    eps_grad = default_eps_grad(field) if eps_grad is None else eps_grad
    if h <= 0 or eps_grad <= 0:
        raise ValueError("h and eps_grad must be positive")
    w = field.window
    xs, ys = w.xs(), w.ys()
    grad = gradient_grid(field, h)
    norm = np.hypot(grad[..., 0], grad[..., 1])
    usable = ~field.node_mask & np.isfinite(norm)

    failures = []
    for j, i in zip(*np.nonzero(usable & (norm < eps_grad))):
        failures.append(_node_witness("small_gradient", xs[i], ys[j], i, j, grad[j, i]))

    ring_ok = np.ones_like(usable)
    patch_ok = np.ones_like(usable)
    patch_ok[0, :] = patch_ok[-1, :] = patch_ok[:, 0] = patch_ok[:, -1] = False
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            patch_ok[1:-1, 1:-1] &= usable[1 + dj : w.ny - 1 + dj, 1 + di : w.nx - 1 + di]
    ring_ok[1:-1, 1:-1] = _ring_sign_changes(field.values) == 2
    for j, i in zip(*np.nonzero(patch_ok & ~ring_ok & (norm >= eps_grad))):
        failures.append(_node_witness("not_locally_straight", xs[i], ys[j], i, j, grad[j, i]))

    cell_ok = ~field.mask & usable[:-1, :-1] & usable[1:, :-1] & usable[:-1, 1:] & usable[1:, 1:]
    with np.errstate(invalid="ignore"):
        winding = np.rint(_cell_winding(grad))
    for j, i in zip(*np.nonzero(cell_ok & (winding != 0))):
        cx, cy = xs[i] + 0.5 * w.dx, ys[j] + 0.5 * w.dy
        g = gradient_fd(field, (cx, cy), h)
        g = np.zeros(2) if g is None else g
        wit = _node_witness("critical_cell", cx, cy, i, j, g)
        wit["index"] = int(winding[j, i])
        failures.append(wit)

    if not failures:
        return ConditionResult(True)
    failures.sort(key=lambda f: (f["gradient_norm"], f["point"][0], f["point"][1]))
    return ConditionResult(False, failures[0], failures)


def _node_witness(reason, x, y, i, j, g) -> dict:
    return {
        "condition": 2,
        "reason": reason,
        "hard": True,
        "point": [float(x), float(y)],
        "node": [int(i), int(j)],
        "gradient": [float(g[0]), float(g[1])],
        "gradient_norm": float(math.hypot(g[0], g[1])),
    }


# --------------------------------------------------------------------------
# cross-sections

@dataclass(frozen=True, eq=False)
class CrossSection:
    """A transversal polyline with f strictly increasing along its vertices."""

    vertices: np.ndarray
    values: np.ndarray
    truncated: tuple[bool, bool] = (False, False)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])

    def point_at(self, level: float) -> np.ndarray:
        """Point on the section where the sampled values pass ``level``."""
        v = self.values
        if not (v[0] <= level <= v[-1]):
            raise ValueError(f"level {level} outside section span {self.span}")
        k = int(np.searchsorted(v, level, side="left"))
        if k == 0:
            return self.vertices[0].copy()
        a, b = v[k - 1], v[k]
        t = (level - a) / (b - a)
        return self.vertices[k - 1] + t * (self.vertices[k] - self.vertices[k - 1])

    def sub_section(self, lo: float, hi: float) -> "CrossSection":
        """The part of the section with values in ``[lo, hi]``."""
        pa, pb = self.point_at(lo), self.point_at(hi)
        inner = (self.values > lo) & (self.values < hi)
        verts = np.vstack([pa, self.vertices[inner], pb])
        vals = np.concatenate([[lo], self.values[inner], [hi]])
        return CrossSection(verts, vals)


def _exit_distance(p, d, w) -> float:
    """Distance along unit direction d from p to the window boundary."""
    ts = []
    for pc, dc, lo, hi in ((p[0], d[0], w.xmin, w.xmax), (p[1], d[1], w.ymin, w.ymax)):
        if dc > 0:
            ts.append((hi - pc) / dc)
        elif dc < 0:
            ts.append((lo - pc) / dc)
    return max(0.0, min(ts)) if ts else math.inf


def _flow(field, p, fp, sign, target, tol, eps_grad, h, max_steps):
    w = field.window
    step0 = 0.5 * w.cellsize
    min_step = step0 * 2.0**-30
    pts, vals = [], []
    cur, fcur = np.asarray(p, dtype=float), fp
    truncated = False
    for _ in range(max_steps):
        if sign * (target - fcur) <= tol:
            break
        g = gradient_fd(field, cur, h)
        if g is None:
            truncated = True
            break
        gn = float(np.hypot(*g))
        if gn < eps_grad:
            raise StallError(cur, gn)
        d = sign * g / gn
        s_exit = _exit_distance(cur, d, w)
        if s_exit <= min_step:
            truncated = True
            break
        s = min(step0, s_exit)
        while True:
            q = cur + s * d
            if s == s_exit:
                q = np.clip(q, [w.xmin, w.ymin], [w.xmax, w.ymax])
            fq = float(field(q[0], q[1]))
            gained = sign * (fq - fcur) if math.isfinite(fq) else -math.inf
            if gained > 1e-12 * max(abs(fq), abs(fcur)):
                break
            s *= 0.5
            if s < min_step:
                if not math.isfinite(fq):
                    return pts, vals, True
                raise StallError(cur, gn)
        if sign * (fq - target) > 0:
            # overshoot: halve back onto the target value
            lo, hi = 0.0, s
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                qm = cur + mid * d
                fm = float(field(qm[0], qm[1]))
                if not math.isfinite(fm) or sign * (fm - target) > 0:
                    hi = mid
                    if math.isfinite(fm):
                        q, fq = qm, fm
                else:
                    lo = mid
                if math.isfinite(fm) and abs(fm - target) <= tol:
                    q, fq = qm, fm
                    break
            pts.append(q)
            vals.append(fq)
            return pts, vals, False
        pts.append(q)
        vals.append(fq)
        cur, fcur = q, fq
        if s == s_exit:
            truncated = True
            break
    else:
        truncated = True
    return pts, vals, truncated


def build_cross_section(
    field: ScalarField,
    p,
    target_span: tuple[float, float],
    tol: float,
    eps_grad: float | None = None,
    h: float | None = None,
) -> CrossSection:
    """Cross-section through ``p`` by gradient ascent and descent.

    The flow runs toward ``target_span[1]`` upward and ``target_span[0]``
    downward, stopping at the target value or the window boundary. Raises
    :class:`StallError` if the gradient vanishes on the way.
    """
    c_lo, c_hi = target_span
    if not field.window.contains(p):
        raise OutsideWindowError(f"point {tuple(p)} outside window")
    fp = float(field(p[0], p[1]))
    if not math.isfinite(fp):
        raise ValueError(f"f undefined at {tuple(p)}")
    eps_grad = default_eps_grad(field) if eps_grad is None else eps_grad
    h = field.default_h if h is None else h
    w = field.window
    max_steps = 8 * (w.nx + w.ny) * 4
    up, upv, up_trunc = _flow(field, p, fp, +1, c_hi, tol, eps_grad, h, max_steps)
    dn, dnv, dn_trunc = _flow(field, p, fp, -1, c_lo, tol, eps_grad, h, max_steps)
    verts = np.array(dn[::-1] + [np.asarray(p, dtype=float)] + up, dtype=float).reshape(-1, 2)
    vals = np.array(dnv[::-1] + [fp] + upv, dtype=float)
    return CrossSection(verts, vals, (dn_trunc, up_trunc))


def check_monotone(field: ScalarField, arc) -> bool:
    """True iff f is strictly monotone along the vertices of ``arc``."""
    arc = np.asarray(arc, dtype=float)
    if len(arc) < 2:
        raise ValueError("arc needs at least two vertices")
    w = field.window
    for q in arc:
        if not w.contains(q):
            raise OutsideWindowError(f"vertex {tuple(q)} outside window")
    v = field(arc[:, 0], arc[:, 1])
    if not np.isfinite(v).all():
        raise ValueError("f undefined on arc")
    d = np.diff(v)
    thr = 1e-12 * np.maximum(np.abs(v[1:]), np.abs(v[:-1]))
    return bool(np.all(d > thr) or np.all(d < -thr))


def intersection_count(arc, component: LevelComponent) -> int:
    """Number of crossing points between a polyline and a level component."""
    inter = shapely.LineString(np.asarray(arc)).intersection(
        shapely.LineString(np.asarray(component.vertices))
    )
    if inter.is_empty:
        return 0
    if inter.geom_type == "Point":
        return 1
    if inter.geom_type == "MultiPoint":
        return len(inter.geoms)
    # overlapping pieces count once each
    return len(getattr(inter, "geoms", [inter]))


# --------------------------------------------------------------------------
# report

@dataclass
class HypothesisReport:
    condition1: ConditionResult
    condition2: ConditionResult
    verdict: Verdict
    levels: list[float]
    meta: dict = dc_field(default_factory=dict)

    @classmethod
    def assemble(cls, c1: ConditionResult, c2: ConditionResult, levels, meta=None) -> "HypothesisReport":
        if c1.passed and c2.passed:
            verdict = Verdict.EQUIVALENT
        elif (not c1.passed and not c1.soft) or not c2.passed:
            verdict = Verdict.NOT_EQUIVALENT
        else:
            verdict = Verdict.INCONCLUSIVE
        return cls(c1, c2, verdict, [float(c) for c in levels], dict(meta or {}))

    @property
    def witnesses(self) -> list[dict]:
        return [r.witness for r in (self.condition1, self.condition2) if r.witness is not None]

    def to_dict(self) -> dict:
        return {
            "condition1": self.condition1.to_dict(),
            "condition2": self.condition2.to_dict(),
            "verdict": self.verdict.value,
            "witnesses": self.witnesses,
            "levels": self.levels,
            **self.meta,
        }
