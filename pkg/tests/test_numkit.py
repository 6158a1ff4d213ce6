import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resolvex.numkit import (
    LinalgError,
    SingularMatrix,
    ZeroMatrix,
    complex_matrix,
    complex_vector,
    matrix_from_json,
    matrix_to_json,
    row_col_norm_bound,
    solve,
    solve_batched,
    spectral_norm,
    svd_extremes,
    vector_from_json,
    vector_to_json,
)

from conftest import random_complex


def test_solve_identity():
    np.testing.assert_allclose(solve(np.eye(2), [1, 1j]), [1, 1j])


def test_solve_diagonal():
    np.testing.assert_allclose(solve(np.diag([2.0, 4.0]), [2, 4]), [1, 1])


def test_solve_permutation():
    x = solve([[0, 1], [1, 0]], [3, 7])
    np.testing.assert_allclose(x, [7, 3])
    np.testing.assert_allclose(np.array([[0, 1], [1, 0]]) @ x, [3, 7])


def test_solve_rejects_singular():
    with pytest.raises(SingularMatrix):
        solve([[1, 1], [1, 1]], [1, 2])
    with pytest.raises(SingularMatrix):
        solve(np.zeros((2, 2)), [1, 2])


def test_solve_shape_errors():
    with pytest.raises(LinalgError):
        solve(np.ones((2, 3)), [1, 2])
    with pytest.raises(LinalgError):
        solve(np.eye(2), [1, 2, 3])


def test_spectral_norm_examples():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0)
    assert spectral_norm([[0, 1], [0, 0]]) == pytest.approx(1.0)
    # C^H C has eigenvalues 1 +- 1/sqrt2
    C = [[1, 1 / math.sqrt(2)], [0, 1 / math.sqrt(2)]]
    assert spectral_norm(C) == pytest.approx(math.sqrt(1 + 1 / math.sqrt(2)), rel=1e-12)
    assert spectral_norm(C) == pytest.approx(1.30656, abs=1e-5)


def test_row_col_bound_examples():
    assert row_col_norm_bound([[0, 1], [0, 0]]) == pytest.approx(1.0)
    assert row_col_norm_bound(np.ones((2, 2))) == pytest.approx(2.0)
    assert spectral_norm(np.ones((2, 2))) == pytest.approx(2.0)
    assert row_col_norm_bound([[1, 1], [0, 1]]) == pytest.approx(2.0)
    assert spectral_norm([[1, 1], [0, 1]]) == pytest.approx((1 + math.sqrt(5)) / 2)


def test_svd_extremes_examples():
    assert svd_extremes(np.eye(2)) == pytest.approx((1.0, 1.0))
    S = np.array([[1, 1 / math.sqrt(2)], [0, 1 / math.sqrt(2)]])
    smax, smin = svd_extremes(S)
    assert smax == pytest.approx(1.30656, abs=1e-5)
    assert smin == pytest.approx(0.54120, abs=1e-5)
    assert smax / smin == pytest.approx(1 + math.sqrt(2), rel=1e-12)
    assert svd_extremes(np.array([[3.0], [0.0]])) == pytest.approx((3.0, 3.0))
    with pytest.raises(ZeroMatrix):
        svd_extremes(np.zeros((2, 2)))


def test_norm_bound_holds_on_random_matrices(rng):
    for _ in range(200):
        n = int(rng.integers(1, 17))
        C = random_complex(rng, n, n) * rng.uniform(0.01, 10)
        assert spectral_norm(C) <= row_col_norm_bound(C) * (1 + 1e-12)


def test_solve_reproduces_rhs(rng):
    for _ in range(100):
        n = int(rng.integers(1, 17))
        C = random_complex(rng, n, n)
        if np.linalg.cond(C) > 1e6:
            continue
        b = random_complex(rng, n)
        x = solve(C, b)
        assert np.linalg.norm(C @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_solve_batched_matches_solve(rng):
    Cs = random_complex(rng, 5, 4, 4) + 4 * np.eye(4)
    bs = random_complex(rng, 5, 4)
    x = solve_batched(Cs, bs)
    for k in range(5):
        np.testing.assert_allclose(x[k], solve(Cs[k], bs[k]), rtol=1e-12)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_spectral_norm_unitary_invariance(n, seed):
    rng = np.random.default_rng(seed)
    C = random_complex(rng, n, n)
    Q = np.linalg.qr(random_complex(rng, n, n))[0]
    assert spectral_norm(Q @ C) == pytest.approx(spectral_norm(C), rel=1e-8)
    assert spectral_norm(C @ Q) == pytest.approx(spectral_norm(C), rel=1e-8)


def test_constructors_validate():
    with pytest.raises(LinalgError):
        complex_matrix([[1, 2, 3]])
    with pytest.raises(LinalgError):
        complex_matrix([[np.nan]])
    with pytest.raises(LinalgError):
        complex_vector([])
    M = complex_matrix(np.eye(2))
    with pytest.raises(ValueError):
        M[0, 0] = 3


def test_json_roundtrip(rng):
    C = random_complex(rng, 3, 3)
    obj = matrix_to_json(C)
    assert obj["dim"] == 3 and len(obj["entries"]) == 9
    np.testing.assert_array_equal(matrix_from_json(obj), C)
    v = random_complex(rng, 4)
    np.testing.assert_array_equal(vector_from_json(vector_to_json(v)), v)
    with pytest.raises(LinalgError):
        matrix_from_json({"dim": 2, "entries": [[1, 0]]})
