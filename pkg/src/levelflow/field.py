"""Scalar fields sampled on a rectangular window."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .expression import Expression, evaluate_array, evaluate_with_guards, parse_expression


class OutsideWindowError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    """Axis-aligned window with an ``nx`` x ``ny`` node grid."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int = 128
    ny: int = 128

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate window {self}")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid resolution must be at least 2 x 2")

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / (self.ny - 1)

    @property
    def cellsize(self) -> float:
        return max(self.dx, self.dy)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.xmax - self.xmin, self.ymax - self.ymin)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    def xs(self) -> np.ndarray:
        return np.linspace(self.xmin, self.xmax, self.nx)

    def ys(self) -> np.ndarray:
        return np.linspace(self.ymin, self.ymax, self.ny)

    def contains(self, p, slack: float = 0.0) -> bool:
        x, y = p
        return (
            self.xmin - slack <= x <= self.xmax + slack
            and self.ymin - slack <= y <= self.ymax + slack
        )

    def with_grid(self, nx: int, ny: int) -> "Window":
        return Window(self.xmin, self.xmax, self.ymin, self.ymax, nx, ny)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """An expression bound to a window, with node samples and a singular-cell mask.

    ``values[j, i]`` is f at ``(xs[i], ys[j])`` (NaN where undefined) and
    ``mask[j, i]`` flags the cell with lower-left node ``(i, j)``. A cell is
    masked when one of its corners is undefined or a singularity guard of the
    expression changes sign across it.
    """

    expression: Expression
    window: Window
    values: np.ndarray = dc_field(repr=False)
    mask: np.ndarray = dc_field(repr=False)
    text: str = ""

    @classmethod
    def from_expression(cls, expression: Expression | str, window: Window) -> "ScalarField":
        text = ""
        if isinstance(expression, str):
            text = expression
            expression = parse_expression(expression)
        X, Y = np.meshgrid(window.xs(), window.ys())
        values, guards = evaluate_with_guards(expression, X, Y)
        mask = _singular_cells(values, guards)
        values.setflags(write=False)
        mask.setflags(write=False)
        return cls(expression, window, values, mask, text)

    def __call__(self, x, y) -> np.ndarray:
        return evaluate_array(self.expression, x, y)

    @cached_property
    def node_mask(self) -> np.ndarray:
        """True at nodes that are corners of some masked cell (or undefined)."""
        m = ~np.isfinite(self.values)
        c = self.mask
        m[:-1, :-1] |= c
        m[1:, :-1] |= c
        m[:-1, 1:] |= c
        m[1:, 1:] |= c
        m.setflags(write=False)
        return m

    @cached_property
    def center_values(self) -> np.ndarray:
        """f sampled at every cell centre, used to resolve saddle cells."""
        w = self.window
        cx = w.xs()[:-1] + 0.5 * w.dx
        cy = w.ys()[:-1] + 0.5 * w.dy
        X, Y = np.meshgrid(cx, cy)
        v = evaluate_array(self.expression, X, Y)
        v.setflags(write=False)
        return v

    @property
    def default_h(self) -> float:
        w = self.window
        return (w.xmax - w.xmin) / (100 * w.nx)

    def cell_of(self, p) -> tuple[int, int]:
        w = self.window
        i = int(np.clip(math.floor((p[0] - w.xmin) / w.dx), 0, w.nx - 2))
        j = int(np.clip(math.floor((p[1] - w.ymin) / w.dy), 0, w.ny - 2))
        return i, j

    def is_masked_at(self, p) -> bool:
        i, j = self.cell_of(p)
        return bool(self.mask[j, i])

    def value_range(self) -> tuple[float, float] | None:
        ok = np.isfinite(self.values) & ~self.node_mask
        if not ok.any():
            return None
        v = self.values[ok]
        return float(v.min()), float(v.max())


def _singular_cells(values: np.ndarray, guards: list[np.ndarray]) -> np.ndarray:
    bad = ~np.isfinite(values)
    mask = bad[:-1, :-1] | bad[1:, :-1] | bad[:-1, 1:] | bad[1:, 1:]
    for g in guards:
        g = np.broadcast_to(g, values.shape)
        corners = np.stack([g[:-1, :-1], g[1:, :-1], g[:-1, 1:], g[1:, 1:]])
        lo = corners.min(axis=0)
        hi = corners.max(axis=0)
        with np.errstate(invalid="ignore"):
            mask |= (lo <= 0) & (hi >= 0)
        mask |= ~np.isfinite(corners).all(axis=0)
    return mask


def evaluate(field: ScalarField, p) -> float | None:
    """f(p), or None where f is undefined. Raises if p is outside the window."""
    if not field.window.contains(p):
        raise OutsideWindowError(f"point {tuple(p)} outside window")
    v = float(evaluate_array(field.expression, p[0], p[1]))
    return v if math.isfinite(v) else None


def gradient_fd(field: ScalarField, p, h: float | None = None):
    """Central-difference gradient at p; None if any neighbour is undefined."""
    h = field.default_h if h is None else h
    x, y = float(p[0]), float(p[1])
    xs = np.array([x + h, x - h, x, x])
    ys = np.array([y, y, y + h, y - h])
    v = field(xs, ys)
    if not np.isfinite(v).all():
        return None
    return np.array([(v[0] - v[1]) / (2 * h), (v[2] - v[3]) / (2 * h)])


def gradient_grid(field: ScalarField, h: float | None = None) -> np.ndarray:
    """Central-difference gradients at every node, shape ``(ny, nx, 2)``."""
    h = field.default_h if h is None else h
    X, Y = np.meshgrid(field.window.xs(), field.window.ys())
    gx = (field(X + h, Y) - field(X - h, Y)) / (2 * h)
    gy = (field(X, Y + h) - field(X, Y - h)) / (2 * h)
    return np.stack([gx, gy], axis=-1)
