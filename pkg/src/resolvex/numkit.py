"""Dense complex linear-algebra kernels.

Matrices and vectors are plain ``numpy`` arrays of ``complex128``.  The
constructors here validate shape and finiteness and hand back read-only
arrays so values can be shared freely between threads.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

__all__ = [
    "LinalgError",
    "SingularMatrix",
    "ZeroMatrix",
    "complex_matrix",
    "complex_vector",
    "matrix_to_json",
    "matrix_from_json",
    "vector_to_json",
    "vector_from_json",
    "solve",
    "solve_batched",
    "spectral_norm",
    "row_col_norm_bound",
    "svd_extremes",
]

# pivot threshold relative to the largest entry magnitude
SINGULAR_RTOL = 1e-14
ZERO_SV_TOL = 1e-12


class LinalgError(ValueError):
    """Base class for errors raised by the kernels."""


class SingularMatrix(LinalgError):
    """Raised when an LU pivot falls below the singularity threshold."""


class ZeroMatrix(LinalgError):
    """Raised when every singular value is numerically zero."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def complex_matrix(data, *, square: bool = True) -> np.ndarray:
    """Validate ``data`` as a finite complex matrix and return a read-only copy."""
    arr = np.array(data, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise LinalgError(f"expected a non-empty 2-d array, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise LinalgError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise LinalgError("matrix has non-finite entries")
    return _frozen(arr)


def complex_vector(data) -> np.ndarray:
    arr = np.array(data, dtype=np.complex128).reshape(-1)
    if arr.size < 1:
        raise LinalgError("vector must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise LinalgError("vector has non-finite entries")
    return _frozen(arr)


def _pairs(values: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in values]


def matrix_to_json(C) -> dict:
    C = np.asarray(C, dtype=np.complex128)
    return {"dim": int(C.shape[0]), "entries": _pairs(C.reshape(-1))}


def matrix_from_json(obj: dict) -> np.ndarray:
    n = int(obj["dim"])
    entries = obj["entries"]
    if n < 1 or len(entries) != n * n:
        raise LinalgError(f"dim {n} needs {n * n} entries, got {len(entries)}")
    flat = np.array([complex(re, im) for re, im in entries], dtype=np.complex128)
    return complex_matrix(flat.reshape(n, n))


def vector_to_json(v) -> dict:
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    return {"dim": int(v.size), "entries": _pairs(v)}


def vector_from_json(obj: dict) -> np.ndarray:
    n = int(obj["dim"])
    entries = obj["entries"]
    if len(entries) != n:
        raise LinalgError(f"dim {n} needs {n} entries, got {len(entries)}")
    return complex_vector([complex(re, im) for re, im in entries])


def solve(C, b) -> np.ndarray:
    """Solve ``C x = b`` by LU with partial pivoting.

    Raises :class:`SingularMatrix` when the smallest pivot is below
    ``1e-14 * max|C_ij|``.
    """
    C = np.asarray(C, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise LinalgError("C must be square")
    if b.shape[0] != C.shape[0]:
        raise LinalgError(f"rhs length {b.shape[0]} != dim {C.shape[0]}")
    scale = np.max(np.abs(C))
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        # exact zero pivots are reported below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(C, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < SINGULAR_RTOL * scale:
        raise SingularMatrix(
            f"pivot {pivots.min():.3e} below {SINGULAR_RTOL:g} * max|C| = {SINGULAR_RTOL * scale:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def solve_batched(Cs: np.ndarray, bs: np.ndarray) -> np.ndarray:
    """Solve a stack of systems ``Cs[k] x[k] = bs[k]``.

    Singularity is detected through LAPACK's exact-zero pivot report and
    through non-finite output; callers that need the relative pivot test
    should screen their shifts beforehand.
    """
    try:
        x = np.linalg.solve(Cs, bs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("non-finite solution in batched solve")
    return x


def spectral_norm(C) -> float:
    """Largest singular value."""
    C = np.asarray(C, dtype=np.complex128)
    if C.size == 0:
        return 0.0
    return float(np.linalg.svd(C, compute_uv=False)[0])


def row_col_norm_bound(C) -> float:
    """sqrt(max column abs-sum) * sqrt(max row abs-sum), an upper bound on ||C||."""
    absC = np.abs(np.asarray(C, dtype=np.complex128))
    max_col = absC.sum(axis=0).max()
    max_row = absC.sum(axis=1).max()
    return float(np.sqrt(max_col) * np.sqrt(max_row))


def svd_extremes(C) -> tuple[float, float]:
    """Return ``(sigma_max, sigma_min_nonzero)`` of a possibly rectangular matrix.

    Singular values below ``1e-12 * sigma_max`` count as zero.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.complex128))
    s = np.linalg.svd(C, compute_uv=False)
    if s.size == 0 or s[0] < ZERO_SV_TOL:
        raise ZeroMatrix("all singular values are below 1e-12")
    nonzero = s[s >= ZERO_SV_TOL * s[0]]
    return float(s[0]), float(nonzero[-1])
