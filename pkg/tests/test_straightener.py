import math
import warnings

import numpy as np
import pytest
import shapely
from hypothesis import given
from hypothesis import strategies as st

from levelflow import (
    build_cross_section,
    chart_apply,
    chart_invert,
    choose_level_sequence,
    compute_range,
    glue_strips,
    straighten_strip,
    trace_level,
    verify_straightening,
)
from levelflow.config import build_config
from levelflow.pipeline import run_straighten
from levelflow.straightener import (
    ChartDomainError,
    GluingError,
    StraightenError,
    seam_errors,
    strip_apply,
)

from conftest import make_field


def _anchor(f, p, span):
    return build_cross_section(f, p, span, 1e-13)


def _strips(f, levels, anchor_points):
    out = []
    for (a, b), p in zip(zip(levels, levels[1:]), anchor_points):
        out.append(straighten_strip(f, a, b, _anchor(f, p, (a, b)), 129, 9))
    return out


@pytest.fixture(scope="module")
def g_chart():
    g = make_field("y", (-1, 1, -1, 1))
    levels = np.linspace(-0.9, 0.9, 5)
    chart = glue_strips(_strips(g, levels, [(0, 0.5 * (a + b)) for a, b in zip(levels, levels[1:])]))
    chart.field = g
    return chart


@pytest.fixture(scope="module")
def parabola_outcome():
    cfg = build_config({"expr": "y - x^2", "window": [-2, 2, -2, 2], "grid": [256, 256], "strips": 8})
    return run_straighten(cfg)


# range and levels

def test_range_examples():
    assert compute_range(make_field("y")).achieved == (-1.0, 1.0)
    r = compute_range(make_field("y - x^2", (-2, 2, -2, 2), n=129))  # a node at x = 0
    assert r.achieved == (-6.0, 2.0)
    a = compute_range(make_field("atan(y - tan(x)^2)", (-3, 3, -4, 4)))
    assert -math.pi / 2 < a.achieved[0] < a.achieved[1] < math.pi / 2
    assert r.to_dict()["open"] == [True, True]


def test_range_infinite_ends_and_all_masked():
    r = compute_range(make_field("1e7 * y"))
    assert r.a == -math.inf and r.b == math.inf
    assert r.to_dict()["a"] == "-inf"
    with pytest.raises(StraightenError):
        compute_range(make_field("sqrt(-1 - x^2)"))


def test_level_sequence_examples():
    assert choose_level_sequence((0, 1), 4, 0.1).levels == pytest.approx((0.1, 0.3, 0.5, 0.7, 0.9))
    assert choose_level_sequence((-1, 1), 2, 0).levels == (-1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        choose_level_sequence((0, 1), 4, 0.6)
    with pytest.raises(ValueError):
        choose_level_sequence((0, 1), 0, 0.1)


@given(
    lo=st.floats(-1e6, 1e6),
    width=st.floats(1e-3, 1e6),
    m=st.integers(1, 200),
    frac=st.floats(0, 0.45),
)
def test_level_sequence_strictly_increasing(lo, width, m, frac):
    seq = choose_level_sequence((lo, lo + width), m, frac * width)
    assert len(seq) == m + 1
    assert all(b > a for a, b in zip(seq, seq[1:]))
    assert seq[0] >= lo and seq[-1] <= lo + width


# strips

def test_projection_strip_is_identity():
    g = make_field("y", (-2, 2, -2, 2))
    s = straighten_strip(g, 0.0, 1.0, _anchor(g, (0, 0.5), (0, 1)), 65, 5)
    X, Y = np.meshgrid(s.xgrid, s.ygrid)
    assert np.allclose(s.samples[..., 0], X, rtol=0, atol=1e-12)
    assert np.allclose(s.samples[..., 1], Y, rtol=0, atol=1e-12)
    assert s.half_width == pytest.approx(2.0)


def test_parabola_strip_lies_on_parabolas():
    f = make_field("y - x^2", (-2, 2, -2, 2))
    s = straighten_strip(f, -1.0, 0.0, _anchor(f, (0, 0.5 * -1.0 + 0.5), (-1, 0)))
    P = s.samples
    resid = P[..., 1] - P[..., 0] ** 2 - s.ygrid[:, None]
    assert np.max(np.abs(resid)) < 1e-6


def test_strip_invariants_unsnapped_and_snapped():
    f = make_field("y - x^3")
    anchor = _anchor(f, (0.2, 0.0), (-0.4, 0.4))
    cell = f.window.cellsize
    for snap in (False, True):
        s = straighten_strip(f, -0.4, 0.4, anchor, 129, 9, snap=snap)
        mid = s.samples[:, s.samples.shape[1] // 2]
        line = shapely.LineString(anchor.vertices)
        assert max(line.distance(shapely.Point(p)) for p in mid) <= 1e-2 * cell
        for y, row in zip(s.ygrid, s.samples):
            comp = trace_level(f, float(y), 1e-2)[0]
            arc = shapely.LineString(comp.vertices)
            t = np.array([arc.project(shapely.Point(p)) for p in row])
            assert np.all(np.abs(np.diff(t)) > 0)
            assert np.all(np.diff(t) > 0) or np.all(np.diff(t) < 0)


def test_strip_orientation_puts_larger_values_left():
    f = make_field("y - x^2", (-2, 2, -2, 2))
    s = straighten_strip(f, -1.0, 0.0, _anchor(f, (0, -0.5), (-1, 0)), 65, 5)
    row = s.samples[2]
    t = row[33] - row[31]
    normal = np.array([-t[1], t[0]])
    p = row[32]
    assert f(*(p + 0.01 * normal)) > f(*(p - 0.01 * normal))


def test_strip_half_width_shrinks_with_warning():
    g = make_field("y")
    anchor = _anchor(g, (0, 0.5), (0, 1))
    with pytest.warns(UserWarning, match="shrunk"):
        s = straighten_strip(g, 0.0, 0.9, anchor, 17, 3, half_width=5.0)
    assert s.half_width == pytest.approx(1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert straighten_strip(g, 0.0, 0.9, anchor, 17, 3, half_width=0.5).half_width == 0.5


def test_strip_errors():
    g = make_field("y")
    short = _anchor(g, (0, 0), (-0.1, 0.1))
    with pytest.raises(StraightenError, match="misses"):
        straighten_strip(g, -0.5, 0.5, short)
    f = make_field("x^2 + y^2", (-2, 2, -2, 2))
    anchor = _anchor(f, (1.0, 0.0), (0.5, 2.0))
    with pytest.raises(StraightenError, match="ClosedLoop"):
        straighten_strip(f, 0.5, 2.0, anchor, 33, 5)
    with pytest.raises(ValueError):
        straighten_strip(g, 0.5, 0.5, short)


# gluing

def test_glue_centred_anchors_have_zero_offsets(g_chart):
    assert g_chart.offsets == pytest.approx([0.0] * 4, abs=1e-12)


def test_glue_moved_anchor_translates():
    g = make_field("y")
    strips = _strips(g, [-0.5, 0.0, 0.5], [(0.0, -0.25), (0.5, 0.25)])
    chart = glue_strips(strips)
    # offsets hold the global x of each anchor
    assert chart.offsets == pytest.approx([0.0, 0.5], abs=1e-12)
    assert max(seam_errors(chart)) < 1e-12
    for x in (0.1, 0.25, 0.4):  # inside both strips' extents
        assert np.allclose(strip_apply(chart, 0, x, 0.0), strip_apply(chart, 1, x, 0.0), atol=1e-12)


def test_glue_reference_strip():
    g = make_field("y")
    strips = _strips(g, [-0.5, 0.0, 0.5], [(0.0, -0.25), (0.5, 0.25)])
    chart = glue_strips(strips, reference=1)
    assert chart.offsets == pytest.approx([-0.5, 0.0], abs=1e-12)
    with pytest.raises(ValueError):
        glue_strips(strips, reference=2)


def test_glue_mismatched_strips():
    a = make_field("y")
    b = make_field("y + 0.3 * x")
    sa = straighten_strip(a, -0.5, 0.0, _anchor(a, (0, -0.25), (-0.5, 0.0)), 65, 5)
    sb = straighten_strip(b, 0.0, 0.5, _anchor(b, (0, 0.25), (0.0, 0.5)), 65, 5)
    with pytest.raises(GluingError) as err:
        glue_strips([sa, sb], tol=1e-3)
    assert err.value.max_drift > 0.05
    with pytest.raises(ValueError, match="share"):
        glue_strips([sb, sa])


def test_cubic_random_anchors_glue_continuously():
    f = make_field("y - x^3")
    cell = f.window.cellsize
    rng = np.random.default_rng(7)
    levels = np.linspace(-0.5, 0.5, 6)
    points = []
    for a, b in zip(levels, levels[1:]):
        x = rng.uniform(-0.3, 0.3)
        points.append((x, 0.5 * (a + b) + x**3))
    chart = glue_strips(_strips(f, levels, points), tol=2 * cell)
    assert max(seam_errors(chart)) <= 2 * cell
    for k in range(1, len(chart.strips)):
        lo = max(chart.x_extent(k - 1)[0], chart.x_extent(k)[0])
        hi = min(chart.x_extent(k - 1)[1], chart.x_extent(k)[1])
        for x in np.linspace(lo, hi, 11):
            p = strip_apply(chart, k - 1, x, levels[k])
            q = strip_apply(chart, k, x, levels[k])
            assert np.hypot(*(p - q)) <= 2 * cell


# apply / invert

def test_identity_chart(g_chart):
    assert np.allclose(chart_apply(g_chart, 0.3, 0.4), (0.3, 0.4), atol=1e-12)
    assert np.allclose(chart_invert(g_chart, (0.3, 0.4)), (0.3, 0.4), atol=1e-12)


def test_boundary_dispatch_is_two_sided(g_chart):
    c = g_chart.levels[2]
    assert g_chart.strip_index(c) == 2
    assert np.allclose(strip_apply(g_chart, 1, 0.2, c), strip_apply(g_chart, 2, 0.2, c), atol=1e-12)


def test_chart_domain_errors(g_chart):
    with pytest.raises(ChartDomainError):
        chart_apply(g_chart, 0.0, 0.95)
    with pytest.raises(ChartDomainError):
        chart_apply(g_chart, 1.5, 0.0)
    with pytest.raises(ChartDomainError):
        chart_invert(g_chart, (0.0, 0.97))


def test_invert_on_anchor_gives_offset(parabola_outcome):
    chart = parabola_outcome.chart
    for k, s in enumerate(chart.strips):
        y = 0.5 * (s.c_lo + s.c_hi)
        x, yy = chart_invert(chart, s.anchor.point_at(y))
        assert x == pytest.approx(chart.offsets[k], abs=2 * chart.window.cellsize)
        assert yy == pytest.approx(y, abs=1e-6)


def test_parabola_residual_and_round_trip(parabola_outcome):
    rep = parabola_outcome.verification
    cell = parabola_outcome.check.field.window.cellsize
    assert rep.max_residual < 1e-2
    assert rep.max_seam < 2 * cell
    assert rep.max_roundtrip < 2 * cell
    assert rep.injectivity_violations == 0 and rep.order_violations == 0
    assert rep.passed


@given(u=st.floats(0, 1), v=st.floats(0, 1))
def test_round_trip_property(parabola_outcome, u, v):
    chart = parabola_outcome.chart
    lv = chart.levels
    y = min(lv[0] + v * (lv[-1] - lv[0]), lv[-1])
    a, b = chart.x_extent(chart.strip_index(y))
    p = chart_apply(chart, a + u * (b - a), y)
    q = chart_apply(chart, *chart_invert(chart, p))
    assert np.hypot(*(p - q)) <= 2 * chart.window.cellsize


# verification

def test_verify_projection(g_chart):
    rep = verify_straightening(g_chart.field, g_chart, (64, 64))
    assert rep.max_residual < 1e-9
    assert rep.max_seam == 0.0
    assert rep.injectivity_violations == 0
    assert rep.monotonicity_violations == 0
    assert rep.passed


def test_corrupted_offset_shows_up_as_seam(parabola_outcome):
    chart = parabola_outcome.chart
    f = parabola_outcome.check.field
    before = max(seam_errors(chart))
    delta = 0.05
    chart.offsets[3] += delta
    try:
        rep = verify_straightening(f, chart, (64, 64))
        assert rep.max_seam == pytest.approx(delta, rel=0.1)
        assert not rep.passed or rep.max_seam <= rep.tolerances["seam"]
    finally:
        chart.offsets[3] -= delta
    assert max(seam_errors(chart)) == before


def test_verify_reports_fault_against_tolerance(parabola_outcome):
    chart = parabola_outcome.chart
    f = parabola_outcome.check.field
    rep = verify_straightening(f, chart, (32, 32), tol=1e-9)
    assert not rep.passed
    assert rep.to_dict()["tolerances"]["verify"] == 1e-9
