import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resolvex.curves import (
    Curve,
    MaterializationError,
    UnsupportedCurve,
    discretize,
    real_segment,
    riemann_error_bound,
    riemann_sum,
    unit_circle,
    window,
)


def test_discretize_roots_of_unity():
    dc = discretize(unit_circle(), 2, 0.0)
    np.testing.assert_allclose(dc.points, [1, 1j, -1, -1j], atol=1e-15)


def test_discretize_scaled_circle():
    np.testing.assert_allclose(discretize(unit_circle(), 1, 0.5).points, [1.5, -1.5], atol=1e-15)


def test_discretize_segment():
    pts = discretize(real_segment(1.0), 2, 0.1).points
    np.testing.assert_allclose(pts, [-1 + 0.1j, -0.5 + 0.1j, 0.1j, 0.5 + 0.1j], atol=1e-15)


def test_points_lie_on_shifted_curves():
    dc = discretize(unit_circle(), 10, 0.03)
    np.testing.assert_allclose(np.abs(dc.points), 1.03, atol=1e-12)
    ds = discretize(real_segment(0.7), 10, 0.03)
    np.testing.assert_allclose(ds.points.imag, 0.03, atol=1e-15)
    assert ds.N == 1024


def test_discretize_validates():
    with pytest.raises(ValueError):
        discretize(unit_circle(), 0, 0.1)
    with pytest.raises(ValueError):
        discretize(unit_circle(), 3, -0.1)
    bare = Curve("custom", param=lambda t: np.exp(2j * np.pi * t), closed_flag=True, name="bare")
    with pytest.raises(UnsupportedCurve):
        discretize(bare, 3, 0.1)


def test_huge_grids_are_indexable_not_materialized():
    dc = discretize(unit_circle(), 40, 1e-3)
    assert dc.points_at(2**38) == pytest.approx(1.001j)
    with pytest.raises(MaterializationError):
        dc.points


def test_curve_inverse():
    assert unit_circle().inverse(1j) == pytest.approx(0.25)
    assert unit_circle().inverse(-1j) == pytest.approx(0.75)
    assert real_segment(0.6).inverse(0.5) == pytest.approx(0.9166666666666666)
    assert real_segment(0.6).inverse(-0.5) == pytest.approx(0.0833333333333333)


def test_curve_json():
    assert Curve.from_json(real_segment(0.6).to_json()) == real_segment(0.6)
    assert Curve.from_json({"kind": "unit_circle"}) == unit_circle()
    with pytest.raises(ValueError):
        real_segment(-1)


def test_riemann_sum_examples():
    # inclusive endpoints: j = 0..8 gives nine terms
    assert riemann_sum(lambda t: np.ones_like(t), 3, 0.0, 1.0) == pytest.approx(9 / 8)
    assert riemann_sum(lambda t: t, 2, 0.0, 1.0) == pytest.approx(0.625)
    assert riemann_sum(lambda t: t, 2, 0.3, 0.6) == pytest.approx(0.125)
    assert riemann_sum(lambda t: t, 2, 0.3, 0.4) == 0


def test_riemann_sum_scalar_functions():
    assert riemann_sum(lambda t: math.cos(t), 4, 0.0, 1.0) == pytest.approx(
        sum(math.cos(j / 16) for j in range(17)) / 16
    )


def test_riemann_error_bound_examples():
    assert riemann_error_bound(1.0, 1.0, 2, 0.0, 1.0) == pytest.approx(0.625)
    assert riemann_error_bound(0.0, 0.0, 5, 0.0, 1.0) == 0.0
    d = 0.1
    got = riemann_error_bound(6 * math.sqrt(2) * math.pi / d**2, 1 + 2 / d, 10, 0.0, 1.0)
    # hand evaluation: (0.5 * 2665.7298 + 42) / 1024
    assert got == pytest.approx(1.342641, abs=1e-6)
    with pytest.raises(ValueError):
        riemann_error_bound(-1.0, 0.0, 2, 0.0, 1.0)


def _g(delta, theta):
    def g(t):
        z = (1 + delta) * np.exp(2j * np.pi * t)
        return delta * (2 + delta) / np.abs(z - np.exp(1j * theta)) ** 2
    return g


def _f(delta, rho, x):
    def f(t):
        return 2 * rho * delta / (math.pi * ((rho * (2 * t - 1) - x) ** 2 + delta**2))
    return f


def _lorentz_cdf(delta, rho, x, t):
    return math.atan((rho * (2 * t - 1) - x) / delta) / math.pi


def test_riemann_bound_on_random_polynomials(rng):
    for _ in range(100):
        coef = rng.uniform(-3, 3, int(rng.integers(1, 6)))
        a = int(rng.integers(2, 12))
        lo, hi = sorted(rng.uniform(0, 1, 2))
        p = np.polynomial.Polynomial(coef)
        dp = p.deriv()
        grid = np.linspace(lo, hi, 2001)
        exact = p.integ()(hi) - p.integ()(lo)
        bound = riemann_error_bound(np.abs(dp(grid)).max() * 1.01, np.abs(p(grid)).max() * 1.01, a, lo, hi)
        assert abs(exact - riemann_sum(p, a, lo, hi)) <= bound


def test_riemann_bound_on_qeue_density(rng):
    for _ in range(50):
        delta = float(rng.choice([0.1, 0.03, 0.01]))
        theta = rng.uniform(0, 2 * math.pi)
        a = int(rng.integers(6, 14))
        g = _g(delta, theta)
        bound = riemann_error_bound(6 * math.sqrt(2) * math.pi / delta**2, 1 + 2 / delta, a, 0.0, 1.0)
        # the density integrates to one over the circle
        assert abs(1.0 - riemann_sum(g, a, 0.0, 1.0)) <= bound


def test_riemann_bound_on_qere_density(rng):
    for _ in range(50):
        delta = float(rng.choice([0.1, 0.03, 0.01]))
        rho = rng.uniform(0.3, 2.0)
        x = rng.uniform(-0.9, 0.9) * rho
        a = int(rng.integers(6, 14))
        lo, hi = sorted(rng.uniform(0, 1, 2))
        f = _f(delta, rho, x)
        exact = _lorentz_cdf(delta, rho, x, hi) - _lorentz_cdf(delta, rho, x, lo)
        dmax = 3 * math.sqrt(3) * rho**2 / (2 * math.pi * delta**2)
        bound = riemann_error_bound(dmax, 2 * rho / (math.pi * delta), a, lo, hi)
        assert abs(exact - riemann_sum(f, a, lo, hi)) <= bound


def test_window_examples():
    assert list(window(0.5, 0.1, 3, False).index_set) == [4]
    assert sorted(window(0.0, 0.13, 3, True).index_set) == [0, 1, 7]
    assert sorted(window(0.3, 1.0, 3, True).index_set) == list(range(8))


def test_window_boundary_is_inclusive():
    w = window(0.5, 0.125, 3, False)
    assert sorted(w.index_set) == [3, 4, 5]


@given(st.floats(0, 1), st.floats(1e-4, 0.7), st.integers(1, 12), st.booleans())
def test_window_matches_definition_and_partitions(center, eps, a, modular):
    w = window(center, eps, a, modular)
    N = 1 << a
    j = np.arange(N)
    d = np.abs(j / N - center)
    if modular:
        d = np.minimum(d, 1 - d)
    expected = set(np.flatnonzero(d <= eps))
    assert set(w.index_set.tolist()) == expected
    both = np.concatenate([w.index_set, w.complement])
    assert sorted(both.tolist()) == list(range(N))
    assert w.size == len(expected)
    np.testing.assert_array_equal(w.contains(j), d <= eps)
