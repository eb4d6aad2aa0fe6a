import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import numeric_gradient

from levelflow import ScalarField, Window, evaluate, gradient_fd
from levelflow.field import OutsideWindowError, gradient_grid

from conftest import make_field


def test_window_invariants():
    with pytest.raises(ValueError):
        Window(1, 0, 0, 1)
    with pytest.raises(ValueError):
        Window(0, 1, 0, 0)
    with pytest.raises(ValueError):
        Window(0, 1, 0, 1, 1, 4)
    w = Window(-2, 2, -1, 1, 5, 3)
    assert w.dx == 1.0 and w.dy == 1.0 and w.cellsize == 1.0
    assert w.center == (0.0, 0.0)


def test_evaluate_projection():
    g = make_field("y", (-4, 4, -4, 4))
    assert evaluate(g, (3.5, -2)) == -2.0


def test_evaluate_parabola():
    f = make_field("y - x^2", (-2, 2, -2, 2))
    assert evaluate(f, (2, 1)) == -3.0


def test_evaluate_tan_pole_is_undefined():
    f = make_field("atan(y - tan(x)^2)", (-3, 3, -4, 4))
    assert evaluate(f, (math.pi / 2, 0)) is None


def test_evaluate_outside_window():
    with pytest.raises(OutsideWindowError):
        evaluate(make_field("y"), (1.5, 0))


def test_other_singularities_are_undefined():
    assert evaluate(make_field("1 / x"), (0, 0.3)) is None
    assert evaluate(make_field("ln(x)"), (-0.5, 0)) is None
    assert evaluate(make_field("sqrt(y)"), (0, -0.5)) is None


def test_unmasked_nodes_are_finite():
    for expr, b in [("atan(y - tan(x)^2)", (-3, 3, -4, 4)), ("1 / x", (-1, 1, -1, 1)), ("ln(x)", (-1, 1, -1, 1))]:
        f = make_field(expr, b)
        assert np.isfinite(f.values[~f.node_mask]).all()


def test_tan_poles_are_masked():
    f = make_field("atan(y - tan(x)^2)", (-3, 3, -4, 4))
    xs = f.window.xs()
    cols = np.nonzero(f.mask.any(axis=0))[0]
    # each masked column of cells straddles x = +-pi/2
    centres = 0.5 * (xs[cols] + xs[cols + 1])
    assert np.all(np.min(np.abs(np.abs(centres)[:, None] - math.pi / 2), axis=1) < f.window.dx)
    assert f.mask[:, cols].all()


def test_division_guard_masks_sign_change():
    f = make_field("1 / x", (-1, 1, -1, 1), n=64)  # no node on x = 0
    assert f.mask.any()
    i = np.nonzero(f.mask[0])[0]
    xs = f.window.xs()
    assert np.all((xs[i] < 0) & (xs[i + 1] > 0))


def test_gradient_projection_exact():
    g = make_field("y")
    for p in [(0, 0), (0.3, -0.7), (-0.9, 0.9)]:
        assert np.allclose(gradient_fd(g, p), (0.0, 1.0), rtol=0, atol=1e-12)


def test_gradient_parabola():
    f = make_field("y - x^2", (-2, 2, -2, 2))
    assert np.allclose(gradient_fd(f, (1, 0), 1e-4), (-2, 1), rtol=0, atol=1e-6)


def test_gradient_at_minimum():
    f = make_field("x^2 + y^2")
    assert np.allclose(gradient_fd(f, (0, 0), 1e-4), (0, 0), rtol=0, atol=1e-8)


def test_gradient_undefined_near_pole():
    f = make_field("tan(x)", (-2, 2, -1, 1))
    assert gradient_fd(f, (math.pi / 2 - 1e-13, 0), 1e-4) is None


def test_default_step():
    f = make_field("y", (-1, 1, -1, 1), n=50)
    assert f.default_h == pytest.approx(2 / (100 * 50))


def test_gradient_grid_matches_pointwise():
    f = make_field("sin(x) * y", n=16)
    G = gradient_grid(f)
    X, Y = np.meshgrid(f.window.xs(), f.window.ys())
    j, i = 5, 9
    assert np.allclose(G[j, i], gradient_fd(f, (X[j, i], Y[j, i])), rtol=0, atol=1e-9)


MONOMIALS = [(a, b) for a in range(4) for b in range(4) if a + b <= 3]


@given(
    coefs=st.lists(st.floats(-3, 3, allow_nan=False), min_size=len(MONOMIALS), max_size=len(MONOMIALS)),
    seed=st.integers(0, 2**31),
)
def test_polynomial_gradient_is_second_order(coefs, seed):
    terms = [f"({c!r}) * x^{a} * y^{b}" for c, (a, b) in zip(coefs, MONOMIALS)]
    f = make_field(" + ".join(terms), (-2, 2, -2, 2), n=32)
    h = 1e-3
    scale = 1.0 + sum(abs(c) for c in coefs) * 27  # bounds third derivatives on the window
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.9, 1.9, size=(100, 2))
    for x, y in pts:
        ga = np.array([
            sum(c * a * x ** (a - 1) * y**b for c, (a, b) in zip(coefs, MONOMIALS) if a),
            sum(c * b * x**a * y ** (b - 1) for c, (a, b) in zip(coefs, MONOMIALS) if b),
        ])
        assert np.max(np.abs(gradient_fd(f, (x, y), h) - ga)) <= 10 * h**2 * scale


def test_gradient_agrees_with_richardson_oracle():
    f = make_field("atan(y - tan(x)^2)", (-1.4, 1.4, -4, 4))
    rng = np.random.default_rng(3)
    fn = lambda x, y: np.arctan(y - np.tan(x) ** 2)  # noqa: E731
    for x, y in rng.uniform((-1.2, -3.5), (1.2, 3.5), size=(50, 2)):
        assert np.allclose(gradient_fd(f, (x, y), 1e-5), numeric_gradient(fn, x, y), rtol=1e-5, atol=1e-7)


def test_evaluation_is_deterministic():
    a = make_field("atan(y - tan(x)^2)", (-1.4, 1.4, -4, 4))
    b = make_field("atan(y - tan(x)^2)", (-1.4, 1.4, -4, 4))
    assert a.values.tobytes() == b.values.tobytes()
    assert np.array_equal(a.mask, b.mask)
    rng = np.random.default_rng(0)
    for p in rng.uniform((-1.4, -4), (1.4, 4), size=(20, 2)):
        assert evaluate(a, p) == evaluate(b, p)
        assert gradient_fd(a, p).tobytes() == gradient_fd(b, p).tobytes()


def test_field_from_text_keeps_text():
    f = ScalarField.from_expression("y - x^2", Window(-1, 1, -1, 1, 8, 8))
    assert f.text == "y - x^2"
    assert f(0.5, 1.0) == pytest.approx(0.75)
