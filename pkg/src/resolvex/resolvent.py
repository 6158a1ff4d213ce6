"""Resolvent systems ``M = Z (x) I - I (x) A`` and the states they produce.

``M`` is block diagonal with blocks ``z_j I - A``, so it is only ever held
as the grid of shifts.  A :class:`ResolventState` keeps the input state's
expansion ``psi = sum_l beta_l s_l`` over on-curve eigenvectors; the ancilla
amplitudes of each term are the scalars ``1 / (z_j - lambda_l)``, and every
norm the estimator needs reduces to lattice sums of products of those
scalars.  Those sums are evaluated directly in chunks, or through exact
closed forms when the grid is too large to enumerate.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.special

from ._parallel import chunk_ranges, pmap
from .curves import MAX_MATERIALIZE, DiscretizedCurve, MaterializationError
from .matgen import QERE, QEUE, GeneratedMatrix
from .numkit import SingularMatrix, complex_matrix, complex_vector, solve_batched

__all__ = [
    "CUSTOM",
    "SpectrumOnContour",
    "BoundViolated",
    "NotInSpan",
    "ResolventSystem",
    "ResolventState",
    "EigenComponent",
    "build_system",
    "resolvent_state",
    "state_prefactor",
    "grid_inner",
    "max_block_inverse_norm",
    "m_inverse_norm_bound",
    "perturb_state",
    "unit_vector_at_distance",
]

CUSTOM = "CUSTOM"

CONTOUR_TOL = 1e-10
SPAN_TOL = 1e-8
# full-grid sums switch to closed forms above this many points
DIRECT_FULL_MAX = 2**22
_SUM_CHUNK = 1 << 20
# N |r - mu| needed before the window Euler-Maclaurin formula is trusted
EM_MIN_WIDTH = 2048
_SOLVE_CHUNK_ENTRIES = 1 << 18


class SpectrumOnContour(ValueError):
    pass


class BoundViolated(ValueError):
    pass


class NotInSpan(ValueError):
    pass


def state_prefactor(dcurve: DiscretizedCurve, problem: str) -> float:
    """Normalizing prefactor of the ancilla amplitudes.

    ``sqrt(delta (2 + delta) / N)`` on the circle and ``sqrt(2 rho delta / (pi N))``
    on the segment; both make the full-grid norm of a single component close
    to one.  Custom curves have no canonical prefactor.
    """
    N, delta = dcurve.N, dcurve.delta
    if problem == QEUE:
        return math.sqrt(delta * (2.0 + delta) / N)
    if problem == QERE:
        return math.sqrt(2.0 * dcurve.curve.rho * delta / (math.pi * N))
    raise ValueError(f"no canonical prefactor for problem {problem!r}")


@dataclass(frozen=True)
class ResolventSystem:
    dcurve: DiscretizedCurve
    A: np.ndarray = field(repr=False)
    alpha_A: float
    alpha_M: float
    problem: str
    mode: str
    prefactor: float
    gm: Optional[GeneratedMatrix] = field(default=None, repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.dcurve.N

    @property
    def delta(self) -> float:
        return self.dcurve.delta

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def block(self, j: int) -> np.ndarray:
        z = complex(self.dcurve.points_at(j))
        return z * np.eye(self.dim) - self.A


def _nearest_indices(dcurve: DiscretizedCurve, lam: complex) -> np.ndarray:
    N = dcurve.N
    j0 = int(round(dcurve.curve.inverse(lam) * N))
    js = np.arange(j0 - 2, j0 + 3)
    if dcurve.curve.closed:
        return np.mod(js, N)
    return np.unique(np.clip(js, 0, N - 1))


def _min_grid_distance(dcurve: DiscretizedCurve, lam: complex) -> float:
    if dcurve.curve.kind in ("unit_circle", "real_segment"):
        return float(np.min(np.abs(dcurve.points_at(_nearest_indices(dcurve, lam)) - lam)))
    if dcurve.N > MAX_MATERIALIZE:
        return math.inf
    best = math.inf
    for lo, hi in chunk_ranges(dcurve.N, _SUM_CHUNK):
        best = min(best, float(np.min(np.abs(dcurve.points_at(np.arange(lo, hi)) - lam))))
    return best


def build_system(
    source,
    dcurve: DiscretizedCurve,
    problem: str,
    *,
    mode: Optional[str] = None,
    prefactor: Optional[float] = None,
    alpha_A: Optional[float] = None,
) -> ResolventSystem:
    """Assemble the block family ``{z_j I - A}``.

    ``source`` is a :class:`GeneratedMatrix` (exact Jordan data, analytic mode
    by default) or a bare matrix (direct mode only).
    """
    if problem == QEUE and dcurve.curve.kind != "unit_circle":
        raise ValueError("QEUE runs on the unit circle")
    if problem == QERE and dcurve.curve.kind != "real_segment":
        raise ValueError("QERE runs on a real segment")
    if problem not in (QEUE, QERE, CUSTOM):
        raise ValueError(f"unknown problem {problem!r}")
    if not dcurve.delta > 0:
        raise ValueError("delta must be positive")

    if isinstance(source, GeneratedMatrix):
        gm = source
        A = gm.A
        eigenvalues = gm.spec.eigenvalues
        alpha = gm.alpha if alpha_A is None else float(alpha_A)
        mode = mode or "analytic"
    else:
        gm = None
        A = complex_matrix(source)
        eigenvalues = list(np.linalg.eigvals(A))
        alpha = float(np.linalg.norm(A, 2)) if alpha_A is None else float(alpha_A)
        if mode == "analytic":
            raise ValueError("analytic mode needs exact Jordan data")
        mode = "direct"
    if mode not in ("direct", "analytic"):
        raise ValueError(f"unknown mode {mode!r}")

    for lam in eigenvalues:
        dist = _min_grid_distance(dcurve, complex(lam))
        if dist < CONTOUR_TOL:
            raise SpectrumOnContour(f"eigenvalue {complex(lam)} is {dist:.2e} from a grid point")

    if prefactor is None:
        prefactor = state_prefactor(dcurve, problem) if problem != CUSTOM else 1.0 / math.sqrt(dcurve.N)
    return ResolventSystem(dcurve, A, alpha, dcurve.norm + alpha, problem, mode, float(prefactor), gm)


# ---------------------------------------------------------------------------
# lattice sums  sum_j conj(1/(z_j - lam_l)) * 1/(z_j - lam_m)


def _abs2_inv(dcurve: DiscretizedCurve, lam: complex, j: np.ndarray) -> np.ndarray:
    """|z_j - lam|^{-2} with the real-arithmetic form of the distance where one exists."""
    kind = dcurve.curve.kind
    if kind == "unit_circle":
        r, mu = 1.0 + dcurve.delta, abs(lam)
        u = j / dcurve.N - math.atan2(lam.imag, lam.real) / (2 * math.pi)
        d2 = (r - mu) ** 2 + 4.0 * r * mu * np.sin(np.pi * u) ** 2
    elif kind == "real_segment":
        x = dcurve.curve.rho * (2.0 * j / dcurve.N - 1.0)
        d2 = (x - lam.real) ** 2 + (dcurve.delta - lam.imag) ** 2
    else:
        d2 = np.abs(dcurve.points_at(j) - lam) ** 2
    return 1.0 / d2


def _direct_sum(dcurve, lam_l, lam_m, ranges) -> complex:
    pieces = []
    for lo, hi in ranges:
        for a, b in chunk_ranges(hi - lo + 1, _SUM_CHUNK):
            pieces.append((lo + a, lo + b))

    def part(bounds):
        j = np.arange(bounds[0], bounds[1], dtype=np.int64)
        if lam_l == lam_m:
            return complex(np.sum(_abs2_inv(dcurve, lam_l, j)))
        z = dcurve.points_at(j)
        return complex(np.sum(np.conj(1.0 / (z - lam_l)) / (z - lam_m)))

    return complex(sum(pmap(part, pieces), 0j))


def _circle_root_sum(w: complex, r: float, N: int) -> complex:
    """sum_{j<N} 1 / (r w_N^j - w), from prod_j (x - r w_N^j) = x^N - r^N."""
    if w == 0:
        return 0j
    L = N * (cmath.log(w) - math.log(r))
    if L.real > 0:
        ratio = 1.0 / (1.0 - cmath.exp(-L))
    else:
        q = cmath.exp(L)
        ratio = -q / (1.0 - q)
    return -(N / w) * ratio


def _circle_full(dcurve, lam_l, lam_m) -> complex:
    r = 1.0 + dcurve.delta
    N = dcurve.N
    p, mu, r2 = lam_l.conjugate(), lam_m, r * r
    den = r2 - p * mu
    s1 = _circle_root_sum(mu, r, N)
    s2 = N / r2 if p == 0 else -_circle_root_sum(r2 / p, r, N) / p
    return (mu / den) * s1 + (r2 / den) * s2


def _digamma_range(lo: int, hi: int, s: float, g: float) -> complex:
    """sum_{j=lo}^{hi} 1 / (j - s + i g), split at ``s`` so digamma arguments stay in Re >= 0."""
    if hi < lo:
        return 0j
    j0 = min(max(math.ceil(s), lo), hi + 1)
    total = 0j
    if j0 <= hi:
        total += scipy.special.psi(complex(hi + 1 - s, g)) - scipy.special.psi(complex(j0 - s, g))
    if j0 > lo:
        u = complex(s - j0 + 1, -g)
        total -= scipy.special.psi(u + (j0 - lo)) - scipy.special.psi(u)
    return complex(total)


def _segment_resolvent_sum(dcurve, mu: complex, lo: int, hi: int) -> complex:
    """sum_{j=lo}^{hi} 1 / (z_j - mu) on the shifted segment."""
    rho, N = dcurve.curve.rho, dcurve.N
    c = 2.0 * rho / N
    s = (mu.real + rho) / c
    g = (dcurve.delta - mu.imag) / c
    return _digamma_range(lo, hi, s, g) / c


def _segment_closed(dcurve, lam_l, lam_m, ranges) -> complex:
    mu1 = lam_l.conjugate() + 2j * dcurve.delta
    mu2 = lam_m
    gap = mu1 - mu2
    if abs(gap) < 1e-12:
        raise MaterializationError("segment closed form is degenerate for this eigenvalue pair")
    total = 0j
    for lo, hi in ranges:
        total += _segment_resolvent_sum(dcurve, mu1, lo, hi) - _segment_resolvent_sum(dcurve, mu2, lo, hi)
    return total / gap


def _circle_window_em(dcurve, lam: complex, ranges) -> float:
    """Euler-Maclaurin evaluation of a window sum of |z_j - lam|^{-2} on the circle.

    Uses the exact antiderivative in ``j`` plus the first endpoint
    correction.  The next term is at most about ``(2 pi / (N |r - mu|))^4 / 720``
    relative to the sum, so the formula is refused unless ``N |r - mu|``
    keeps that below 1e-13.
    """
    N = dcurve.N
    r, mu = 1.0 + dcurve.delta, abs(lam)
    if N * abs(r - mu) < EM_MIN_WIDTH:
        raise MaterializationError("grid too coarse relative to the distance for the window formula")
    t_star = math.atan2(lam.imag, lam.real) / (2 * math.pi)
    B0 = 4.0 * r * mu
    scale = N / (math.pi * abs(r - mu) * (r + mu))
    stretch = (r + mu) / abs(r - mu)

    def u_of(j: int) -> float:
        return ((j / N - t_star) + 0.5) % 1.0 - 0.5

    def F(u: float) -> float:
        return 1.0 / ((r - mu) ** 2 + B0 * math.sin(math.pi * u) ** 2)

    def dF(u: float) -> float:
        return -F(u) ** 2 * B0 * math.sin(2 * math.pi * u) * math.pi / N

    def G(u: float) -> float:
        return scale * math.atan(stretch * math.tan(math.pi * u))

    total = 0.0
    for lo, hi in ranges:
        ul, uh = u_of(lo), u_of(hi)
        if uh < ul or abs(uh) >= 0.5 or abs(ul) >= 0.5:
            raise MaterializationError("window crosses the antipode of the eigenvalue")
        total += G(uh) - G(ul) + 0.5 * (F(ul) + F(uh)) + (dF(uh) - dF(ul)) / 12.0
    return total


def grid_inner(
    dcurve: DiscretizedCurve,
    lam_l: complex,
    lam_m: complex,
    ranges: Optional[Sequence[tuple[int, int]]] = None,
    method: str = "auto",
) -> complex:
    """sum over ``j`` in ``ranges`` of ``conj(1/(z_j - lam_l)) / (z_j - lam_m)``.

    ``ranges`` are inclusive index ranges; ``None`` means the whole grid.
    ``method`` is ``"direct"``, ``"closed"`` or ``"auto"``; auto sums
    directly whenever the index count allows it.
    """
    lam_l, lam_m = complex(lam_l), complex(lam_m)
    full = ranges is None
    if full:
        ranges = ((0, dcurve.N - 1),)
    ranges = tuple((int(lo), int(hi)) for lo, hi in ranges)
    count = sum(hi - lo + 1 for lo, hi in ranges)
    kind = dcurve.curve.kind
    if method == "auto":
        limit = DIRECT_FULL_MAX if full else MAX_MATERIALIZE
        method = "direct" if count <= limit or kind == "custom" else "closed"
    if method == "direct":
        if count > MAX_MATERIALIZE:
            raise MaterializationError(f"{count} terms exceed the direct-summation cap")
        return _direct_sum(dcurve, lam_l, lam_m, ranges)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    if kind == "real_segment":
        return _segment_closed(dcurve, lam_l, lam_m, ranges)
    if kind == "unit_circle":
        if full:
            return _circle_full(dcurve, lam_l, lam_m)
        if lam_l == lam_m:
            return complex(_circle_window_em(dcurve, lam_l, ranges))
        raise MaterializationError("no closed form for off-diagonal circle window sums")
    raise MaterializationError("custom curves have no closed-form lattice sums")


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class EigenComponent:
    block: int
    lam: complex
    beta: complex
    t_star: float


@dataclass
class ResolventState:
    """The state ``pref * sum_j |j> (z_j I - A)^{-1} |psi>`` and its eigen-expansion.

    ``joint`` (when materialized) is ancilla-major, shape ``(N, n)``, and
    already carries the prefactor.  ``components`` lists the on-curve terms
    ``beta_l * pref * phi_l (x) s_l`` with ``phi_l[j] = 1 / (z_j - lambda_l)``.
    """

    system: ResolventSystem
    psi: np.ndarray
    components: list[EigenComponent]
    S: Optional[np.ndarray]
    joint: Optional[np.ndarray] = field(default=None, repr=False)
    perturbed: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def prefactor(self) -> float:
        return self.system.prefactor

    @property
    def dcurve(self) -> DiscretizedCurve:
        return self.system.dcurve

    @property
    def N(self) -> int:
        return self.system.N

    @property
    def betas(self) -> np.ndarray:
        return np.array([c.beta for c in self.components], dtype=complex)

    @property
    def gram(self) -> np.ndarray:
        return self.S.conj().T @ self.S

    def amplitudes(self, l: int, j=None) -> np.ndarray:
        """Unprefactored ``phi_l[j] = 1 / (z_j - lambda_l)``; all ``j`` by default."""
        if j is None:
            if self.N > MAX_MATERIALIZE:
                raise MaterializationError("grid too large to list every amplitude")
            j = np.arange(self.N)
        return 1.0 / (self.dcurve.points_at(j) - self.components[l].lam)

    def inner(self, l: int, m: int, ranges=None) -> complex:
        """Prefactored ``<phi_l | P | phi_m>`` with ``P`` the projector onto ``ranges``."""
        key = (l, m, None if ranges is None else tuple(ranges))
        if key not in self._cache:
            if l > m:
                self._cache[key] = self.inner(m, l, ranges).conjugate()
            else:
                raw = grid_inner(self.dcurve, self.components[l].lam, self.components[m].lam, ranges)
                self._cache[key] = raw * self.prefactor**2
        return self._cache[key]

    def component_norm_sq(self, l: int, ranges=None) -> float:
        return float(self.inner(l, l, ranges).real)

    def expansion_norm_sq(self, ranges=None) -> float:
        """||P psi_tilde||^2 computed from the eigen-expansion."""
        G = self.gram
        b = self.betas
        total = 0j
        for l in range(len(b)):
            for m in range(len(b)):
                total += np.conj(b[l]) * b[m] * G[l, m] * self.inner(l, m, ranges)
        return float(total.real)

    @property
    def norm(self) -> float:
        if self.joint is not None:
            return float(np.linalg.norm(self.joint))
        return math.sqrt(self.expansion_norm_sq())

    def rows(self, j) -> np.ndarray:
        """Joint-state rows at ancilla indices ``j`` (from ``joint`` or rebuilt from the expansion)."""
        j = np.asarray(j, dtype=np.int64)
        if self.joint is not None:
            return self.joint[j]
        if not self.components:
            raise ValueError("state has neither a joint array nor an eigen-expansion")
        coeffs = np.stack([c.beta * self.prefactor * self.amplitudes(l, j)
                           for l, c in enumerate(self.components)], axis=-1)
        return coeffs @ self.S.T

    def reconstruct(self) -> np.ndarray:
        """sum_l beta_l pref phi_l (x) s_l, materialized."""
        if self.N * self.system.dim > MAX_MATERIALIZE:
            raise MaterializationError("joint state too large to materialize")
        coeffs = np.stack([c.beta * self.prefactor * self.amplitudes(l)
                           for l, c in enumerate(self.components)], axis=-1)
        return coeffs @ self.S.T

    def to_json(self, include_joint: bool = False) -> dict:
        out = {
            "problem": self.system.problem,
            "a": self.dcurve.a,
            "delta": self.dcurve.delta,
            "prefactor": self.prefactor,
            "mode": self.system.mode,
            "perturbed": self.perturbed,
            "components": [
                {"block": c.block, "lambda": [c.lam.real, c.lam.imag],
                 "beta": [c.beta.real, c.beta.imag], "t_star": c.t_star}
                for c in self.components
            ],
        }
        if include_joint:
            if self.joint is None:
                raise ValueError("joint state was not materialized")
            out["joint"] = [[float(x.real), float(x.imag)] for x in self.joint.reshape(-1)]
        return out


def _expansion(gm: GeneratedMatrix, psi: np.ndarray) -> np.ndarray:
    S = gm.eigvec_columns
    beta, *_ = np.linalg.lstsq(S, psi, rcond=None)
    resid = np.linalg.norm(S @ beta - psi)
    if resid > SPAN_TOL * max(1.0, np.linalg.norm(psi)):
        raise NotInSpan(f"input state leaves the on-curve eigenvectors' span (residual {resid:.2e})")
    return beta


def _joint_direct(system: ResolventSystem, psi: np.ndarray) -> np.ndarray:
    n, N = system.dim, system.N
    eye = np.eye(n, dtype=complex)
    rows = max(1, _SOLVE_CHUNK_ENTRIES // (n * n))

    def chunk(bounds):
        lo, hi = bounds
        z = system.dcurve.points_at(np.arange(lo, hi))
        Cs = z[:, None, None] * eye - system.A
        try:
            return solve_batched(Cs, np.broadcast_to(psi, (hi - lo, n)))
        except SingularMatrix as exc:
            raise SpectrumOnContour(str(exc)) from exc

    return np.concatenate(pmap(chunk, chunk_ranges(N, rows)))


def _joint_analytic(system: ResolventSystem, psi: np.ndarray) -> np.ndarray:
    gm = system.gm
    w = gm.T_inv @ psi
    offsets = gm.block_offsets
    n, N = system.dim, system.N
    rows = max(1, _SOLVE_CHUNK_ENTRIES // n)

    def chunk(bounds):
        lo, hi = bounds
        z = system.dcurve.points_at(np.arange(lo, hi))
        Y = np.zeros((hi - lo, n), dtype=complex)
        for (lam, d), o in zip(gm.spec.blocks, offsets):
            inv = 1.0 / (z - lam)
            powers = inv[:, None] ** np.arange(1, d + 1)
            for r in range(d):
                Y[:, o + r] = powers[:, : r + 1] @ w[o : o + r + 1][::-1]
        return Y @ gm.T.T

    return np.concatenate(pmap(chunk, chunk_ranges(N, rows)))


def resolvent_state(
    system: ResolventSystem,
    psi,
    *,
    materialize: Optional[bool] = None,
    expand: bool = True,
) -> ResolventState:
    """Build the resolvent state of ``psi``.

    ``materialize=None`` computes the joint array whenever ``N * n`` is
    within the materialization cap.  ``expand`` requires ``psi`` to lie in
    the span of the on-curve eigenvectors and records its coefficients.
    """
    psi = complex_vector(psi)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("psi must be normalized")
    if psi.size != system.dim:
        raise ValueError(f"psi has length {psi.size}, expected {system.dim}")
    gm = system.gm
    components: list[EigenComponent] = []
    S = None
    if expand and gm is not None:
        beta = _expansion(gm, psi)
        S = gm.eigvec_columns
        curve = system.dcurve.curve
        for k, b in zip(gm.spec.target_blocks, beta):
            lam = gm.spec.blocks[k][0]
            components.append(EigenComponent(k, lam, complex(b), float(curve.inverse(lam))))
    size = system.N * system.dim
    if materialize is None:
        materialize = size <= MAX_MATERIALIZE
    joint = None
    if materialize:
        if size > MAX_MATERIALIZE:
            raise MaterializationError(f"joint state of {size} entries exceeds the cap")
        if system.mode == "analytic":
            joint = _joint_analytic(system, psi)
        else:
            joint = _joint_direct(system, psi)
        joint = system.prefactor * joint
        if not np.all(np.isfinite(joint)):
            raise SpectrumOnContour("non-finite resolvent amplitudes")
    elif not components:
        raise ValueError("an unmaterialized state needs an eigen-expansion")
    return ResolventState(system, psi, components, S, joint)


def max_block_inverse_norm(system: ResolventSystem) -> float:
    """max_j ||(z_j I - A)^{-1}||, which equals ||M^{-1}||."""
    from .kreiss import resolvent_norms

    if system.N > MAX_MATERIALIZE:
        raise MaterializationError("too many blocks to check individually")
    return float(np.max(resolvent_norms(system.A, system.dcurve.points)))


def m_inverse_norm_bound(system: ResolventSystem, kreiss_value: float, check: bool = True) -> float:
    """The bound ``K / delta`` on ``||M^{-1}||``, checked against every block when ``check``."""
    bound = kreiss_value / system.delta
    if check:
        actual = max_block_inverse_norm(system)
        if actual > bound * (1.0 + 1e-6):
            raise BoundViolated(
                f"max block inverse norm {actual:.6g} exceeds K/delta = {bound:.6g}; "
                "the Kreiss estimate is probably under-sampled"
            )
    return bound


def unit_vector_at_distance(x: np.ndarray, dist: float, rng: np.random.Generator) -> np.ndarray:
    """A unit vector at Euclidean distance ``dist`` from the unit vector ``x``."""
    x = np.asarray(x, dtype=complex).reshape(-1)
    if not 0 <= dist <= 2:
        raise ValueError("distance between unit vectors lies in [0, 2]")
    if x.size == 1:
        raise ValueError("need dimension >= 2 to move a unit vector")
    u = rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)
    u -= np.vdot(x, u) * x
    u /= np.linalg.norm(u)
    theta = 2.0 * math.asin(dist / 2.0)
    return math.cos(theta) * x + math.sin(theta) * u


def perturb_state(state: ResolventState, eps_st: float, seed: int = 0) -> ResolventState:
    """Model an inexact linear solve: move the normalized joint state by ``eps_st / 2``."""
    if state.joint is None:
        raise ValueError("perturbation needs a materialized joint state")
    rng = np.random.Generator(np.random.Philox(seed))
    nrm = np.linalg.norm(state.joint)
    flat = state.joint.reshape(-1) / nrm
    moved = unit_vector_at_distance(flat, eps_st / 2.0, rng) * nrm
    return replace(state, joint=moved.reshape(state.joint.shape), perturbed=True, _cache={})
