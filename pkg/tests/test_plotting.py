import numpy as np

from levelflow.plotting import _figure, draw_levels, draw_sections, render
from levelflow.regularity import build_cross_section

from conftest import make_field


def test_projection_draws_horizontal_lines():
    g = make_field("y")
    fig, ax = _figure(g.window)
    levels = np.linspace(-0.9, 0.9, 7)
    draw_levels(ax, g, levels, 1e-3)
    assert len(ax.lines) == len(levels)
    ys = sorted(float(np.unique(np.round(line.get_ydata(), 12))[0]) for line in ax.lines)
    assert np.allclose(ys, levels)
    assert all(np.ptp(line.get_ydata()) < 1e-12 for line in ax.lines)
    colours = {tuple(line.get_color()) for line in ax.lines}
    assert len(colours) == len(levels)


def test_tan_field_has_more_pieces_than_levels():
    f = make_field("atan(y - tan(x)^2)", (-3, 3, -4, 4))
    fig, ax = _figure(f.window)
    levels = np.linspace(-1.2, 1.2, 9)
    draw_levels(ax, f, levels, 1e-2)
    assert len(ax.lines) > len(levels)


def test_sections_are_dashed():
    g = make_field("y")
    fig, ax = _figure(g.window)
    draw_sections(ax, [build_cross_section(g, (0, 0), (-0.5, 0.5), 1e-12)])
    assert ax.lines[0].get_linestyle() == "--"


def test_render_is_deterministic(tmp_path):
    f = make_field("y - x^2", (-2, 2, -2, 2))
    a = render(f, tmp_path / "a.svg", n_levels=12)
    b = render(f, tmp_path / "b.svg", n_levels=12)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.count("<path") > 12


def test_render_png(tmp_path):
    p = render(make_field("y"), tmp_path / "g.png", n_levels=4, title="g")
    assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
