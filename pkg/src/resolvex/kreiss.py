"""Restricted Kreiss constants by contour sampling, and their Jordan-form bounds.

The supremum of the resolvent norm over a contour is estimated by uniform
sampling followed by golden-section refinement of the best local maxima.
Every evaluated point is an exact resolvent norm, so the estimate is a lower
bound on the true supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from ._parallel import chunk_ranges, pmap
from .numkit import spectral_norm

__all__ = [
    "ContourHitsSpectrum",
    "KreissEstimate",
    "resolvent_norms",
    "kreiss_circle",
    "kreiss_line",
    "jordan_kreiss_bound",
    "resolvent_norm_bound",
    "jordan_block_resolvent",
    "transient_growth",
    "power_growth",
]

DEFAULT_SAMPLES = 4096
_CHUNK = 4096
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ContourHitsSpectrum(ValueError):
    pass


@dataclass(frozen=True)
class KreissEstimate:
    value: float
    delta: float
    contour: str
    samples: int
    refinement_passes: int
    argmax_z: complex
    analytic_bound: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "value": self.value,
            "argmax_z": [self.argmax_z.real, self.argmax_z.imag],
            "analytic_bound": self.analytic_bound,
            "contour": self.contour,
            "samples": self.samples,
            "refinement_passes": self.refinement_passes,
        }


def resolvent_norms(C, zs) -> np.ndarray:
    """||(z I - C)^{-1}|| = 1 / sigma_min(z I - C) for every z in ``zs``."""
    C = np.asarray(C, dtype=complex)
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    n = C.shape[0]
    eye = np.eye(n, dtype=complex)

    def chunk(bounds):
        lo, hi = bounds
        shifted = zs[lo:hi, None, None] * eye - C
        smin = np.linalg.svd(shifted, compute_uv=False)[:, -1]
        scale = np.abs(shifted).max(axis=(1, 2))
        bad = smin < 1e-14 * scale
        if np.any(bad):
            z = zs[lo + int(np.argmax(bad))]
            raise ContourHitsSpectrum(f"zI - C is numerically singular at z = {z}")
        return 1.0 / smin

    parts = pmap(chunk, chunk_ranges(zs.size, _CHUNK))
    return np.concatenate(parts) if parts else np.zeros(0)


def _golden_max(f: Callable[[float], float], lo: float, hi: float, iters: int = 80) -> tuple[float, float]:
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def _sup_over_parameter(
    point: Callable[[np.ndarray], np.ndarray],
    C: np.ndarray,
    grid: np.ndarray,
    periodic: bool,
    passes: int,
) -> tuple[float, complex]:
    vals = resolvent_norms(C, point(grid))
    m = vals.size
    if periodic:
        left, right = np.roll(vals, 1), np.roll(vals, -1)
    else:
        left = np.concatenate([[-np.inf], vals[:-1]])
        right = np.concatenate([vals[1:], [-np.inf]])
    peaks = np.flatnonzero((vals >= left) & (vals >= right))
    peaks = peaks[np.argsort(-vals[peaks], kind="stable")][:max(passes, 1)]
    best_k = int(np.argmax(vals))
    best_val, best_par = float(vals[best_k]), float(grid[best_k])
    step = grid[1] - grid[0] if m > 1 else 0.0

    def f(s: float) -> float:
        return float(resolvent_norms(C, point(np.array([s])))[0])

    for k in peaks[:passes]:
        lo, hi = grid[k] - step, grid[k] + step
        if not periodic:
            lo, hi = max(lo, grid[0]), min(hi, grid[-1])
        par, val = _golden_max(f, lo, hi)
        if val > best_val:
            best_val, best_par = val, par
    return best_val, complex(point(np.array([best_par]))[0])


def kreiss_circle(C, delta: float, samples: int = DEFAULT_SAMPLES, passes: int = 3) -> KreissEstimate:
    """delta * sup_{|z| = 1 + delta} ||(z I - C)^{-1}||, sampled and refined."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    C = np.asarray(C, dtype=complex)
    r = 1.0 + delta
    m = max(int(samples), math.ceil(8 * 2 * math.pi * r / delta))
    grid = np.arange(m) / m
    val, zmax = _sup_over_parameter(lambda t: r * np.exp(2j * np.pi * t), C, grid, True, passes)
    return KreissEstimate(delta * val, delta, "circle", m, passes, zmax)


def kreiss_line(C, delta: float, y_range: Optional[float] = None, samples: int = DEFAULT_SAMPLES,
                passes: int = 3) -> KreissEstimate:
    """delta * sup_y ||((delta + i y) I - C)^{-1}|| over ``|y| <= y_range``.

    The default ``y_range = 2 (||C|| + 1)`` brackets the supremum: beyond it
    the resolvent norm is at most ``1 / (y_range - ||C||)``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    C = np.asarray(C, dtype=complex)
    if y_range is None:
        y_range = 2.0 * (spectral_norm(C) + 1.0)
    m = max(int(samples), math.ceil(8 * 2 * y_range / delta))
    grid = np.linspace(-y_range, y_range, m)
    val, zmax = _sup_over_parameter(lambda y: delta + 1j * y, C, grid, False, passes)
    return KreissEstimate(delta * val, delta, "vertical_line", m, passes, zmax)


def jordan_kreiss_bound(kappa_bar: float, d: int, delta: float) -> float:
    """kappa_bar (1/delta)^(d-1) (1 - delta^d) / (1 - delta)."""
    if not 0 < delta < 1:
        raise ValueError("need 0 < delta < 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    return kappa_bar * (1.0 / delta) ** (d - 1) * (1.0 - delta ** d) / (1.0 - delta)


def resolvent_norm_bound(kappa_bar: float, d: int, dist: float) -> float:
    """kappa_bar (1 - dist^d) / (dist^d (1 - dist)) for a point at distance ``dist`` from the spectrum."""
    if not 0 < dist < 1:
        raise ValueError("need 0 < dist < 1")
    return kappa_bar * (1.0 - dist ** d) / (dist ** d * (1.0 - dist))


def jordan_block_resolvent(lam: complex, d: int, z: complex) -> np.ndarray:
    """(z I - J(lam, d))^{-1}: lower-triangular Toeplitz with entries (z - lam)^{-k}."""
    w = 1.0 / (complex(z) - complex(lam))
    powers = w ** np.arange(1, d + 1)
    R = np.zeros((d, d), dtype=complex)
    for k in range(d):
        R += np.diag(np.full(d - k, powers[k]), -k)
    return R


def transient_growth(C, t_max: float, steps: int = 200) -> tuple[float, float]:
    """max over a uniform t-grid of ||exp(C t)||, and the maximizing t.

    Diagnostic only; the relation to the Kreiss constant is two-sided up
    to a factor ``e N`` and no tightness is asserted.
    """
    C = np.asarray(C, dtype=complex)
    ts = np.linspace(0.0, t_max, steps + 1)
    norms = [spectral_norm(scipy.linalg.expm(C * t)) for t in ts]
    k = int(np.argmax(norms))
    return float(norms[k]), float(ts[k])


def power_growth(C, k_max: int) -> tuple[float, int]:
    """max_{0 <= k <= k_max} ||C^k|| and its argmax."""
    C = np.asarray(C, dtype=complex)
    P = np.eye(C.shape[0], dtype=complex)
    best, arg = 1.0, 0
    for k in range(1, k_max + 1):
        P = P @ C
        nrm = spectral_norm(P)
        if nrm > best:
            best, arg = nrm, k
    return float(best), arg
