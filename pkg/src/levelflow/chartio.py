"""Plain-text chart files.

Layout::

    levelflow-chart 1
    expression <text>
    window <xmin> <xmax> <ymin> <ymax> <nx> <ny>
    range <a> <b> <achieved_lo> <achieved_hi>
    tolerances <name>=<value> ...
    strips <m>
    strip <k> <c_lo> <c_hi> <offset> <half_width> <ny> <nx>
    anchor <n>
    <x> <y> <f>                     (n lines)
    samples
    <x0> <y0> <x1> <y1> ...         (ny lines of nx points)
    ...
    end

Floats are written with 17 significant digits, so a save/load cycle is
bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .expression import parse_expression, to_text
from .field import ScalarField, Window
from .regularity import CrossSection
from .straightener import GlobalChart, RangeInterval, StripChart

MAGIC = "levelflow-chart"
VERSION = 1


def _f(v: float) -> str:
    return f"{v:.17g}"


def dumps(chart: GlobalChart) -> str:
    out = [f"{MAGIC} {VERSION}"]
    expr = chart.expression
    if expr:
        expr = to_text(parse_expression(expr))
    out.append(f"expression {expr}")
    w = chart.window
    if w is not None:
        out.append(f"window {_f(w.xmin)} {_f(w.xmax)} {_f(w.ymin)} {_f(w.ymax)} {w.nx} {w.ny}")
    r = chart.range
    if r is not None:
        out.append(f"range {_f(r.a)} {_f(r.b)} {_f(r.achieved[0])} {_f(r.achieved[1])}")
    tol = " ".join(f"{k}={_f(v)}" for k, v in sorted(chart.tolerances.items()))
    out.append(f"tolerances {tol}".rstrip())
    out.append(f"strips {len(chart.strips)}")
    for k, (s, off) in enumerate(zip(chart.strips, chart.offsets)):
        ny, nx = s.shape
        out.append(f"strip {k} {_f(s.c_lo)} {_f(s.c_hi)} {_f(off)} {_f(s.half_width)} {ny} {nx}")
        out.append(f"anchor {len(s.anchor.vertices)}")
        for (x, y), v in zip(s.anchor.vertices, s.anchor.values):
            out.append(f"{_f(x)} {_f(y)} {_f(v)}")
        out.append("samples")
        for row in s.samples:
            out.append(" ".join(_f(c) for c in row.ravel()))
    out.append("end")
    return "\n".join(out) + "\n"


class ChartFormatError(ValueError):
    pass


def loads(text: str, attach_field: bool = True) -> GlobalChart:
    try:
        return _loads(text, attach_field)
    except ChartFormatError:
        raise
    except (ValueError, IndexError) as exc:
        raise ChartFormatError(f"malformed chart file: {exc}") from None


def _loads(text: str, attach_field: bool) -> GlobalChart:
    lines = iter(text.splitlines())

    def take(prefix: str | None = None) -> list[str]:
        try:
            parts = next(lines).split(" ")
        except StopIteration:
            raise ChartFormatError("unexpected end of chart file") from None
        if prefix is not None and parts[0] != prefix:
            raise ChartFormatError(f"expected {prefix!r}, found {parts[0]!r}")
        return parts

    head = take(MAGIC)
    if int(head[1]) != VERSION:
        raise ChartFormatError(f"unsupported chart version {head[1]}")
    expression = " ".join(take("expression")[1:])
    parts = take()
    window = None
    if parts[0] == "window":
        a = parts[1:]
        window = Window(float(a[0]), float(a[1]), float(a[2]), float(a[3]), int(a[4]), int(a[5]))
        parts = take()
    rng = None
    if parts[0] == "range":
        a = [float(t) for t in parts[1:]]
        rng = RangeInterval(a[0], a[1], (a[2], a[3]))
        parts = take()
    if parts[0] != "tolerances":
        raise ChartFormatError("missing tolerances line")
    tolerances = {}
    for kv in parts[1:]:
        k, v = kv.split("=")
        tolerances[k] = float(v)
    m = int(take("strips")[1])
    strips, offsets = [], []
    for _ in range(m):
        _, _k, c_lo, c_hi, off, hw, ny, nx = take("strip")
        n = int(take("anchor")[1])
        av = np.array([[float(t) for t in take()] for _ in range(n)]).reshape(n, 3)
        take("samples")
        rows = [np.array([float(t) for t in take()]) for _ in range(int(ny))]
        samples = np.array(rows).reshape(int(ny), int(nx), 2)
        samples.setflags(write=False)
        anchor = CrossSection(av[:, :2].copy(), av[:, 2].copy())
        strips.append(StripChart(float(c_lo), float(c_hi), anchor, samples, float(hw)))
        offsets.append(float(off))
    take("end")
    chart = GlobalChart(strips, offsets, rng, expression, window, tolerances)
    if attach_field and expression and window is not None:
        chart.field = ScalarField.from_expression(expression, window)
    return chart


def save(chart: GlobalChart, path) -> None:
    Path(path).write_text(dumps(chart))


def load(path, attach_field: bool = True) -> GlobalChart:
    return loads(Path(path).read_text(), attach_field)

