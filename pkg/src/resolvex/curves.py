"""Complex curves, their shifted discretizations, Riemann sums and window projectors.

Two conventions for discrete sums coexist here:

* :func:`riemann_sum` follows the inclusive definition, ``j`` from
  ``ceil(N t_min)`` to ``floor(N t_max)``; over ``[0, 1]`` that is ``N + 1``
  terms.
* Norms of ancilla states sum over the grid ``j = 0 .. N-1`` (see
  :class:`DiscretizedCurve` and the resolvent module).  For closed curves the
  two differ by a single duplicated endpoint term, which the ``2 max|f| / N``
  slack of :func:`riemann_error_bound` absorbs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.optimize

__all__ = [
    "MAX_MATERIALIZE",
    "UnsupportedCurve",
    "MaterializationError",
    "Curve",
    "unit_circle",
    "real_segment",
    "DiscretizedCurve",
    "discretize",
    "riemann_sum",
    "riemann_error_bound",
    "WindowProjector",
    "window",
]

# largest index range we ever allocate in one array
MAX_MATERIALIZE = 2**26


class UnsupportedCurve(ValueError):
    pass


class MaterializationError(ValueError):
    """Raised when an operation would allocate more than ``MAX_MATERIALIZE`` entries."""


@dataclass(frozen=True)
class Curve:
    """A curve ``gamma: [0, 1] -> C``.

    ``kind`` is ``"unit_circle"``, ``"real_segment"`` (``gamma(t) = rho (2t - 1)``)
    or ``"custom"``.  Custom curves carry a vectorized parametrization, a
    closed flag and optionally a shift rule ``shift(t, delta)`` giving the
    displaced curve the resolvent grid is placed on.
    """

    kind: str
    rho: Optional[float] = None
    param: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    closed_flag: Optional[bool] = None
    shift: Optional[Callable[[np.ndarray, float], np.ndarray]] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.kind == "real_segment":
            if self.rho is None or not self.rho > 0:
                raise ValueError("real_segment needs rho > 0")
        elif self.kind == "custom":
            if self.param is None or self.closed_flag is None:
                raise ValueError("custom curves need a parametrization and a closed flag")
            probe = np.asarray(self.param(np.linspace(0.0, 1.0, 10_000)), dtype=complex)
            if not np.all(np.isfinite(probe)):
                raise ValueError("custom parametrization is not finite on [0, 1]")
        elif self.kind != "unit_circle":
            raise ValueError(f"unknown curve kind {self.kind!r}")

    @property
    def closed(self) -> bool:
        if self.kind == "unit_circle":
            return True
        if self.kind == "real_segment":
            return False
        return bool(self.closed_flag)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "unit_circle":
            return np.exp(2j * np.pi * t)
        if self.kind == "real_segment":
            return self.rho * (2.0 * t - 1.0) + 0j
        return np.asarray(self.param(t), dtype=complex)

    def shifted(self, t, delta: float):
        """Points of the displaced curve at parameters ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "unit_circle":
            return (1.0 + delta) * np.exp(2j * np.pi * t)
        if self.kind == "real_segment":
            return self.rho * (2.0 * t - 1.0) + 1j * delta
        if self.shift is None:
            raise UnsupportedCurve(f"custom curve {self.name or '<anonymous>'} has no registered shift rule")
        return np.asarray(self.shift(t, delta), dtype=complex)

    def inverse(self, lam: complex) -> float:
        """Curve parameter of the point closest to ``lam``."""
        lam = complex(lam)
        if self.kind == "unit_circle":
            return (math.atan2(lam.imag, lam.real) / (2 * math.pi)) % 1.0
        if self.kind == "real_segment":
            return (lam.real / self.rho + 1.0) / 2.0
        grid = np.linspace(0.0, 1.0, 4097)
        dist = np.abs(self(grid) - lam)
        k = int(np.argmin(dist))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = scipy.optimize.minimize_scalar(
            lambda s: abs(complex(self(s)) - lam), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-14},
        )
        t = float(res.x)
        return t % 1.0 if self.closed else t

    def speed_max(self) -> float:
        """max |gamma'(t)|, used to convert an eigenvalue tolerance to a parameter window."""
        if self.kind == "unit_circle":
            return 2 * math.pi
        if self.kind == "real_segment":
            return 2 * self.rho
        t = np.linspace(0.0, 1.0, 20_001)
        h = 1e-6
        d = (self(np.clip(t + h, 0, 1)) - self(np.clip(t - h, 0, 1))) / (
            np.clip(t + h, 0, 1) - np.clip(t - h, 0, 1)
        )
        return float(np.max(np.abs(d)))

    def to_json(self) -> dict:
        if self.kind == "unit_circle":
            return {"kind": "unit_circle"}
        if self.kind == "real_segment":
            return {"kind": "real_segment", "rho": self.rho}
        return {"kind": "custom", "name": self.name, "closed": self.closed}

    @classmethod
    def from_json(cls, obj: dict) -> "Curve":
        kind = obj.get("kind")
        if kind == "unit_circle":
            return unit_circle()
        if kind == "real_segment":
            return real_segment(float(obj["rho"]))
        raise UnsupportedCurve("only unit_circle and real_segment curves have a JSON form")


def unit_circle() -> Curve:
    return Curve("unit_circle")


def real_segment(rho: float) -> Curve:
    return Curve("real_segment", rho=float(rho))


@dataclass(frozen=True)
class DiscretizedCurve:
    """``N = 2**a`` points ``z_j`` on the curve displaced by ``delta``.

    Points are computed on demand so that grids far larger than memory can
    still be indexed; :attr:`points` materializes the whole grid.
    """

    curve: Curve
    a: int
    delta: float

    @property
    def N(self) -> int:
        return 1 << self.a

    def t(self, j) -> np.ndarray:
        return np.asarray(j, dtype=float) / self.N

    def points_at(self, j) -> np.ndarray:
        j = np.asarray(j)
        return self.curve.shifted(np.mod(j, self.N) / self.N, self.delta)

    @property
    def points(self) -> np.ndarray:
        if self.N > MAX_MATERIALIZE:
            raise MaterializationError(f"2^{self.a} points exceed the materialization cap")
        return self.points_at(np.arange(self.N))

    @property
    def norm(self) -> float:
        """max_j |z_j|, the block-encoding normalization of the diagonal point matrix."""
        if self.curve.kind == "unit_circle":
            return 1.0 + self.delta
        if self.curve.kind == "real_segment":
            return math.hypot(self.curve.rho, self.delta)
        return float(np.max(np.abs(self.points)))


def discretize(curve: Curve, a: int, delta: float) -> DiscretizedCurve:
    if int(a) != a or a < 1:
        raise ValueError("a must be a positive integer")
    if not delta >= 0:
        raise ValueError("delta must be non-negative")
    if curve.kind == "custom" and curve.shift is None:
        raise UnsupportedCurve(f"custom curve {curve.name or '<anonymous>'} has no registered shift rule")
    return DiscretizedCurve(curve, int(a), float(delta))


def _index_bounds(N: int, t_min: float, t_max: float) -> tuple[int, int]:
    lo = math.ceil(N * t_min)
    hi = math.floor(N * t_max)
    # guard against N*t rounding across an integer
    while lo - 1 >= 0 and (lo - 1) / N >= t_min:
        lo -= 1
    while lo / N < t_min:
        lo += 1
    while (hi + 1) / N <= t_max:
        hi += 1
    while hi / N > t_max:
        hi -= 1
    return lo, hi


def riemann_sum(f: Callable, a: int, t_min: float, t_max: float) -> complex:
    """(1/N) * sum_{j=ceil(N t_min)}^{floor(N t_max)} f(j/N), with N = 2**a."""
    if not 0.0 <= t_min <= t_max <= 1.0:
        raise ValueError("need 0 <= t_min <= t_max <= 1")
    N = 1 << a
    lo, hi = _index_bounds(N, t_min, t_max)
    if hi < lo:
        return 0j
    total = 0j
    for start in range(lo, hi + 1, 1 << 20):
        stop = min(start + (1 << 20), hi + 1)
        t = np.arange(start, stop) / N
        try:
            vals = np.asarray(f(t), dtype=complex)
            if vals.shape != t.shape:
                raise ValueError
        except (TypeError, ValueError):
            vals = np.array([complex(f(float(x))) for x in t])
        total += vals.sum()
    return complex(total / N)


def riemann_error_bound(max_deriv: float, max_abs: float, a: int, t_min: float, t_max: float) -> float:
    """Bound on |integral - riemann_sum| from a derivative bound and a magnitude bound."""
    if max_deriv < 0 or max_abs < 0:
        raise ValueError("bounds must be non-negative")
    N = 1 << a
    return ((t_max - t_min) ** 2 / 2.0 * max_deriv + 2.0 * max_abs) / N


@dataclass(frozen=True)
class WindowProjector:
    """Ancilla indices ``j`` with ``|j/2^a - center_t| <= epsilon``.

    The set is stored as at most two inclusive index ranges so windows on
    huge grids cost nothing to describe.  With ``modular=True`` distances
    wrap around ``t = 0 ~ 1``.
    """

    center_t: float
    epsilon: float
    a: int
    modular: bool
    ranges: tuple[tuple[int, int], ...]

    @property
    def N(self) -> int:
        return 1 << self.a

    @property
    def size(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.ranges)

    @property
    def index_set(self) -> np.ndarray:
        if self.size > MAX_MATERIALIZE:
            raise MaterializationError("window too large to materialize")
        if not self.ranges:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in self.ranges])

    @property
    def complement(self) -> np.ndarray:
        mask = np.ones(self.N, dtype=bool)
        mask[self.index_set] = False
        return np.flatnonzero(mask)

    def contains(self, j) -> np.ndarray:
        j = np.asarray(j)
        out = np.zeros(j.shape, dtype=bool)
        for lo, hi in self.ranges:
            out |= (j >= lo) & (j <= hi)
        return out


def _split_modular(L: int, H: int, N: int) -> tuple[tuple[int, int], ...]:
    if H - L + 1 >= N:
        return ((0, N - 1),)
    lo, hi = L % N, H % N
    if lo <= hi:
        return ((lo, hi),)
    return ((0, hi), (lo, N - 1))


def window(center_t: float, epsilon: float, a: int, modular: bool) -> WindowProjector:
    if not 0.0 <= center_t <= 1.0:
        raise ValueError("center_t must lie in [0, 1]")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    N = 1 << a
    if modular and 2 * epsilon >= 1.0:
        return WindowProjector(center_t, epsilon, a, modular, ((0, N - 1),))
    L = math.ceil(N * (center_t - epsilon))
    H = math.floor(N * (center_t + epsilon))
    while abs((L - 1) / N - center_t) <= epsilon:
        L -= 1
    while L <= H and abs(L / N - center_t) > epsilon:
        L += 1
    while abs((H + 1) / N - center_t) <= epsilon:
        H += 1
    while H >= L and abs(H / N - center_t) > epsilon:
        H -= 1
    if H < L:
        ranges: tuple[tuple[int, int], ...] = ()
    elif modular:
        ranges = _split_modular(L, H, N)
    else:
        L, H = max(L, 0), min(H, N - 1)
        ranges = ((L, H),) if L <= H else ()
    return WindowProjector(center_t, epsilon, a, modular, ranges)
