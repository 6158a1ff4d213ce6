"""Eigenvalue estimation on general curves.

A :class:`CurveFamily` pairs a base curve with the displaced curves the
resolvent grid is placed on.  :func:`check_conditions` measures numerically
the three properties the estimation argument relies on: a window integral
of the kernel ``|gamma(t) - gamma_delta(t')|^{-2}`` that does not depend on
``t``, a tail fraction that decays like ``delta / epsilon``, and derivatives
of the normalized kernel that grow only polynomially in ``1 / delta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.integrate

from ._parallel import pmap
from .curves import MAX_MATERIALIZE, Curve, discretize, real_segment, riemann_error_bound, unit_circle
from .estimator import (
    FEASIBLE,
    EstimationConfig,
    EstimationReport,
    readout,
    run_pipeline,
    select_parameters,
    state_error_certificate,
    success_masses,
)
from .matgen import QERE, QEUE, GeneratedMatrix, input_state
from .resolvent import CUSTOM, build_system, resolvent_state

__all__ = [
    "QuadratureFailure",
    "ConformanceRequired",
    "CurveFamily",
    "circle_family",
    "segment_family",
    "ellipse_family",
    "figure_eight_family",
    "get_family",
    "FAMILIES",
    "ConformanceReport",
    "check_conditions",
    "kernel_integral",
    "generalized_estimate",
    "RadialResult",
    "radial_search",
]

COND1_TOL = 1e-2
COND2_MIN_R2 = 0.9
COND3_MAX_EXPONENT = 6.0


class QuadratureFailure(RuntimeError):
    pass


class ConformanceRequired(ValueError):
    pass


@dataclass(frozen=True)
class CurveFamily:
    """A base curve and its displaced copies ``gamma_delta``."""

    name: str
    base: Curve
    shifted: Callable[[np.ndarray, float], np.ndarray] = field(compare=False)
    params: tuple = ()
    speed: Optional[float] = None

    @property
    def max_speed(self) -> float:
        """max |gamma'|, cached for registered families."""
        return self.speed if self.speed is not None else self.base.speed_max()

    @property
    def closed(self) -> bool:
        return self.base.closed

    def curve(self) -> Curve:
        """The base curve with this family's shift rule registered."""
        if self.base.kind in ("unit_circle", "real_segment"):
            return self.base
        return replace(self.base, shift=self.shifted)

    def kernel(self, t, tp, delta: float) -> np.ndarray:
        """|gamma(t) - gamma_delta(t')|^{-2}; ``t`` and ``t'`` broadcast together."""
        g = self.base(np.asarray(t, dtype=float))
        return 1.0 / np.abs(g - self.shifted(np.asarray(tp, dtype=float), delta)) ** 2


def circle_family() -> CurveFamily:
    return CurveFamily(
        "circle", unit_circle(), lambda t, d: (1.0 + d) * np.exp(2j * np.pi * np.asarray(t)), (), 2 * math.pi
    )


def segment_family(rho: float = 1.0) -> CurveFamily:
    rho = float(rho)
    return CurveFamily(
        "segment", real_segment(rho), lambda t, d: rho * (2.0 * np.asarray(t) - 1.0) + 1j * d, (rho,), 2 * rho
    )


class _ArcLength:
    """Constant-speed reparametrization of a smooth closed curve.

    The speed of ``param`` is expanded in a Fourier series, integrated
    term by term, and the arc-length map is inverted by Newton iteration on
    a uniform grid.  The correction ``theta(t) - t`` is then stored as a
    truncated Fourier series.
    """

    def __init__(self, param, dparam, n: int = 4096):
        th = np.arange(n) / n
        speed = np.abs(dparam(th))
        S = np.fft.rfft(speed) / n
        self.length = float(S[0].real)
        big = np.flatnonzero(np.abs(S) > 1e-17 * self.length)
        S = S[: int(big.max()) + 1]
        k = np.arange(1, S.size)
        coef = 2.0 * S[1:]  # real speed: positive and negative frequencies fold together

        def arc(theta):
            theta = np.asarray(theta, dtype=float)
            e = np.exp(2j * np.pi * np.multiply.outer(theta, k))
            return self.length * theta + np.real((e - 1.0) @ (coef / (2j * np.pi * k)))

        t = np.arange(n) / n
        theta = t.copy()
        for _ in range(50):
            step = (arc(theta) - self.length * t) / np.abs(dparam(theta))
            theta -= step
            if np.max(np.abs(step)) < 1e-15:
                break
        Q = np.fft.rfft(theta - t) / n
        keep = np.abs(Q) > 1e-17 * max(1.0, np.max(np.abs(Q)))
        keep[0] = True
        last = int(np.max(np.flatnonzero(keep))) + 1
        self._q = Q[:last]
        self._k = np.arange(last)
        self._param = param
        self._dparam = dparam

        self._dq = 2j * np.pi * self._k[1:] * self._q[1:]

    def _series(self, t, coefs):
        # cumulative powers win for small inputs, Horner for large ones
        x = np.exp(2j * np.pi * t)
        if x.size <= 256:
            xs = np.broadcast_to(x[..., None], x.shape + (self._k.size - 1,))
            pw = np.cumprod(xs, axis=-1)
            return [pw @ c for c in coefs]
        return [np.polyval(np.concatenate([c[::-1], [0.0]]), x) for c in coefs]

    def theta(self, t):
        t = np.asarray(t, dtype=float)
        (s,) = self._series(t, [self._q[1:]])
        return t + self._q[0].real + 2.0 * s.real

    def dtheta(self, t):
        t = np.asarray(t, dtype=float)
        (s,) = self._series(t, [self._dq])
        return 1.0 + 2.0 * s.real

    def theta_and_dtheta(self, t):
        t = np.asarray(t, dtype=float)
        s, ds = self._series(t, [self._q[1:], self._dq])
        return t + self._q[0].real + 2.0 * s.real, 1.0 + 2.0 * ds.real

    def __call__(self, t):
        return self._param(self.theta(t))

    def derivative(self, t):
        th, dth = self.theta_and_dtheta(t)
        return self._dparam(th) * dth

    def point_and_tangent(self, t):
        th, dth = self.theta_and_dtheta(t)
        return self._param(th), self._dparam(th) * dth


def _normal_shift_family(name: str, param, dparam, params: tuple) -> CurveFamily:
    arc = _ArcLength(param, dparam)

    def shifted(t, d):
        t = np.asarray(t, dtype=float)
        point, tangent = arc.point_and_tangent(t)
        return point - 1j * d * tangent / np.abs(tangent)

    base = Curve("custom", param=arc, closed_flag=True, name=name)
    return CurveFamily(name, base, shifted, params, arc.length)


def ellipse_family(a: float = 1.0, b: float = 0.6) -> CurveFamily:
    """Arc-length ellipse ``a cos + i b sin`` shifted along its outward unit normal."""
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise ValueError("ellipse axes must be positive")
    return _normal_shift_family(
        "ellipse",
        lambda th: a * np.cos(2 * np.pi * th) + 1j * b * np.sin(2 * np.pi * th),
        lambda th: 2 * np.pi * (-a * np.sin(2 * np.pi * th) + 1j * b * np.cos(2 * np.pi * th)),
        (a, b),
    )


def figure_eight_family() -> CurveFamily:
    """Lemniscate of Gerono, which crosses itself at the origin."""
    return _normal_shift_family(
        "figure_eight",
        lambda th: np.cos(2 * np.pi * th) + 1j * np.sin(2 * np.pi * th) * np.cos(2 * np.pi * th),
        lambda th: 2 * np.pi * (-np.sin(2 * np.pi * th) + 1j * np.cos(4 * np.pi * th)),
        (),
    )


FAMILIES: dict[str, Callable[..., CurveFamily]] = {
    "circle": circle_family,
    "segment": segment_family,
    "ellipse": ellipse_family,
    "figure_eight": figure_eight_family,
}


def get_family(name: str, *params: float) -> CurveFamily:
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown curve family {name!r}; choose from {sorted(FAMILIES)}") from None
    return factory(*params)


# ---------------------------------------------------------------------------
# conformance


def _near_points(fam: CurveFamily, t: float, delta: float, lo: float, hi: float) -> list[float]:
    """Parameters in ``[lo, hi]`` where the displaced curve passes close to gamma(t)."""
    grid = np.linspace(lo, hi, 2049)
    dist = np.abs(complex(fam.base(t)) - fam.shifted(grid, delta))
    interior = (dist[1:-1] <= dist[:-2]) & (dist[1:-1] <= dist[2:])
    pts = list(grid[1:-1][interior])
    if lo < t < hi:
        pts.append(t)
    return sorted(p for p in set(pts) if lo < p < hi)


def kernel_integral(fam: CurveFamily, t: float, delta: float, lo: float, hi: float) -> float:
    """Adaptive quadrature of the kernel over ``t'`` in ``[lo, hi]`` (relative tolerance 1e-6)."""
    if hi <= lo:
        return 0.0
    pts = _near_points(fam, t, delta, lo, hi)
    g = complex(fam.base(t))

    def f(s: float) -> float:
        return float(1.0 / abs(g - complex(fam.shifted(np.array([s]), delta)[0])) ** 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
        try:
            val, err = scipy.integrate.quad(f, lo, hi, points=pts or None, epsrel=1e-6, epsabs=0.0, limit=500)
        except scipy.integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"quadrature did not converge at t = {t:.6f}, delta = {delta:g}: {exc}") from exc
    if not math.isfinite(val) or err > 1e-4 * abs(val):
        raise QuadratureFailure(f"quadrature error {err:.3g} too large at t = {t:.6f}")
    return val


def _vec_window_integral(fam: CurveFamily, ts: np.ndarray, delta: float, half: float) -> np.ndarray:
    """int_{-half}^{half} K(t, t + u) du for every probe ``t`` at once."""
    g = fam.base(ts)
    breaks = {0.0}
    for t in ts:
        for p in _near_points(fam, t, delta, t - half, t + half):
            breaks.add(round(p - t, 15))
    breaks = sorted(b for b in breaks if -half < b < half)

    def f(u):
        return 1.0 / np.abs(g - fam.shifted(ts + u, delta)) ** 2

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        val, err = scipy.integrate.quad_vec(f, -half, half, epsrel=1e-8, epsabs=0.0, norm="max",
                                            points=breaks, limit=20000)
    if not np.all(np.isfinite(val)) or err > 1e-6 * np.min(np.abs(val)):
        raise QuadratureFailure(f"vector quadrature error {err:.3g} too large at delta = {delta:g}")
    return val


def _window_bounds(fam: CurveFamily, t: float, eps: float) -> tuple[float, float]:
    if fam.closed:
        return t - min(eps, 0.5), t + min(eps, 0.5)
    return max(t - eps, 0.0), min(t + eps, 1.0)


def _full_bounds(fam: CurveFamily, t: float) -> tuple[float, float]:
    return (t - 0.5, t + 0.5) if fam.closed else (0.0, 1.0)


def _probes(fam: CurveFamily, eps: float, count: int) -> np.ndarray:
    if fam.closed:
        return np.arange(count) / count
    lo, hi = eps, 1.0 - eps
    if hi < lo:
        return np.array([0.5])
    return np.linspace(lo, hi, count)


def _max_kernel_derivative(fam: CurveFamily, t: float, delta: float) -> float:
    """max over t' of |d/dt' K(t, t')| / int K, resolving the peak near each close approach."""
    lo, hi = _full_bounds(fam, t)
    speed = max(fam.max_speed, 1e-12)
    best = 0.0
    for c in _near_points(fam, t, delta, lo, hi):
        width = 20.0 * delta / speed
        grid = np.linspace(max(lo, c - width), min(hi, c + width), 8001)
        vals = fam.kernel(t, grid, delta)
        best = max(best, float(np.max(np.abs(np.gradient(vals, grid)))))
    total = kernel_integral(fam, t, delta, lo, hi)
    return best / total


@dataclass(frozen=True)
class ConformanceReport:
    family: str
    deltas: tuple[float, ...]
    epsilons: tuple[float, ...]
    t_probes: int
    cond1_max_rel_deviation: float
    cond1_worst: tuple[float, float]
    cond2_measured_ratio_bound: float
    cond2_fit_constant: float
    cond2_r_squared: float
    cond3_fitted_exponent: float
    cond3_max_derivatives: tuple[float, ...]
    interior_domain: bool
    cond1_pass: bool
    cond2_pass: bool
    cond3_pass: bool
    thresholds: dict = field(default_factory=lambda: {
        "cond1_max_rel_deviation": COND1_TOL,
        "cond2_min_r_squared": COND2_MIN_R2,
        "cond3_max_exponent": COND3_MAX_EXPONENT,
    })

    @property
    def passed(self) -> bool:
        return self.cond1_pass and self.cond2_pass and self.cond3_pass

    def covers(self, delta: float) -> bool:
        return any(abs(d - delta) <= 1e-12 * delta for d in self.deltas)

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def check_conditions(
    fam: CurveFamily,
    deltas: Sequence[float] = (1e-2, 5e-3, 2e-3, 1e-3),
    epsilons: Sequence[float] = (0.05, 0.1, 0.25, 0.5),
    t_probes: int = 16,
) -> ConformanceReport:
    """Numerical conformance of a curve family.

    cond1: the window integral's maximum relative deviation from its mean
    over the probe parameters, maximized over ``(delta, epsilon)``.  cond2:
    a least-squares fit through the origin of the tail fraction
    ``1 - window / full`` against ``delta / epsilon`` (windows that cover a
    closed curve entirely are left out).  cond3: the exponent of
    ``max_t' |dK/dt'| / int K`` against ``1 / delta`` in a log-log fit.
    Open curves are probed on the interior ``[epsilon, 1 - epsilon]``.
    """
    deltas = tuple(float(d) for d in deltas)
    epsilons = tuple(float(e) for e in epsilons)
    if not deltas or not epsilons or min(deltas) <= 0 or min(epsilons) <= 0:
        raise ValueError("deltas and epsilons must be non-empty and positive")
    if list(deltas) != sorted(deltas, reverse=True) and list(deltas) != sorted(deltas):
        raise ValueError("deltas must be sorted")
    if t_probes < 16:
        raise ValueError("t_probes must be at least 16")

    worst_dev, worst_at = 0.0, (deltas[0], epsilons[0])
    xs, ys, tail_max = [], [], 0.0
    for d in deltas:
        full_closed = None
        if fam.closed:
            full_closed = _vec_window_integral(fam, _probes(fam, 0.0, t_probes), d, 0.5)
        for e in epsilons:
            ts = _probes(fam, e, t_probes)
            if fam.closed:
                win = full_closed if 2 * e >= 1.0 else _vec_window_integral(fam, ts, d, e)
                full = full_closed
            else:
                win = _vec_window_integral(fam, ts, d, e)
                full = np.array(pmap(lambda t, d=d: kernel_integral(fam, t, d, 0.0, 1.0), list(ts)))
            dev = float(np.max(np.abs(win - win.mean())) / win.mean())
            if dev > worst_dev:
                worst_dev, worst_at = dev, (d, e)
            if fam.closed and 2 * e >= 1.0:
                continue
            tail = float(np.max(np.abs(1.0 - win / full)))
            xs.append(d / e)
            ys.append(tail)
            tail_max = max(tail_max, tail / (d / e))
    xs_a, ys_a = np.array(xs), np.array(ys)
    if xs_a.size:
        c = float(xs_a @ ys_a / (xs_a @ xs_a))
        ss_res = float(np.sum((ys_a - c * xs_a) ** 2))
        ss_tot = float(np.sum(ys_a**2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        c, r2 = math.nan, math.nan

    probes3 = _probes(fam, min(epsilons), 8)
    derivs = []
    for d in deltas:
        derivs.append(max(pmap(lambda t, d=d: _max_kernel_derivative(fam, t, d), list(probes3))))
    if len(deltas) >= 2:
        slope = float(np.polyfit(np.log(1.0 / np.array(deltas)), np.log(derivs), 1)[0])
    else:
        slope = math.nan

    return ConformanceReport(
        family=fam.name,
        deltas=deltas,
        epsilons=epsilons,
        t_probes=int(t_probes),
        cond1_max_rel_deviation=worst_dev,
        cond1_worst=worst_at,
        cond2_measured_ratio_bound=tail_max,
        cond2_fit_constant=c,
        cond2_r_squared=r2,
        cond3_fitted_exponent=slope,
        cond3_max_derivatives=tuple(derivs),
        interior_domain=not fam.closed,
        cond1_pass=worst_dev <= COND1_TOL,
        cond2_pass=bool(math.isfinite(c) and r2 >= COND2_MIN_R2),
        cond3_pass=bool(math.isfinite(slope) and slope <= COND3_MAX_EXPONENT),
    )


# ---------------------------------------------------------------------------
# estimation on a family


def generalized_estimate(
    fam: CurveFamily,
    gm: GeneratedMatrix,
    cfg: EstimationConfig,
    conformance: Optional[ConformanceReport],
    betas: Optional[Sequence[complex]] = None,
    n_samples: int = 1000,
    seed: int = 0,
) -> EstimationReport:
    """Estimate on-curve eigenvalues with the grid placed on ``gamma_delta``.

    The circle and segment families reuse the QEUE and QERE pipelines
    unchanged, so their output is identical.  Other families use the
    prefactor ``1 / sqrt(N c)`` with ``c`` the full-curve kernel integral at
    the first target, a window half-width ``eps_eig / max|gamma'|``, and
    direct summation for every mass.
    """
    if conformance is None or not conformance.passed:
        raise ConformanceRequired(f"family {fam.name!r} has no passing conformance report")
    if conformance.family != fam.name or not conformance.covers(cfg.delta):
        raise ConformanceRequired(f"conformance was not checked at delta = {cfg.delta:g}")
    if betas is None:
        betas = np.ones(gm.eigvec_columns.shape[1])
    if fam.name == "circle":
        return run_pipeline(gm, replace(cfg, problem=QEUE), betas, n_samples, seed, cost=False)
    if fam.name == "segment":
        if abs(fam.base.rho - (cfg.alpha_A + cfg.eps_eig)) > 1e-12:
            raise ValueError("segment family rho must equal alpha_A + eps_eig")
        return run_pipeline(gm, replace(cfg, problem=QERE), betas, n_samples, seed, cost=False)

    curve = fam.curve()
    speed = fam.max_speed
    cfg = replace(cfg, problem=CUSTOM, half_width=cfg.eps_eig / speed, grid_bound=0.0)
    dcurve = discretize(curve, cfg.a, cfg.delta)
    psi, _ = input_state(gm, betas)
    t0 = curve.inverse(gm.target_eigenvalues[0])
    c_full = kernel_integral(fam, t0, cfg.delta, *_full_bounds(fam, t0))
    system = build_system(gm, dcurve, CUSTOM, prefactor=1.0 / math.sqrt(dcurve.N * c_full))
    rs = resolvent_state(system, psi, materialize=False)

    def integrals(comp):
        t = comp.t_star
        full = kernel_integral(fam, t, cfg.delta, *_full_bounds(fam, t))
        win = kernel_integral(fam, t, cfg.delta, *_window_bounds(fam, t, cfg.epsilon))
        return win / c_full, full / c_full

    dmax = _max_kernel_derivative(fam, t0, cfg.delta)
    peak = float(np.max(fam.kernel(t0, np.linspace(t0 - 0.01, t0 + 0.01, 4001), cfg.delta))) / c_full
    eps_disc = riemann_error_bound(dmax, peak, cfg.a, 0.0, 1.0)
    success = success_masses(rs, cfg, check_hypotheses=False, integrals=integrals, eps_disc=eps_disc)
    report = readout(rs, cfg, n_samples, seed) if dcurve.N <= MAX_MATERIALIZE else None
    if report is None:
        raise ValueError("grid too large for readout")
    report.success = success
    try:
        report.certificate = state_error_certificate(rs, cfg, raise_on_failure=False)
    except Exception:  # certificate needs windows that may not intersect cleanly on custom grids
        report.certificate = None
    report.extra = {"family": fam.name, "family_params": list(fam.params), "max_block": gm.spec.max_block}
    return report


# ---------------------------------------------------------------------------
# radial sweep


@dataclass
class RadialResult:
    radii: list[float]
    masses: list[float]
    reports: list[EstimationReport]
    best_radius: Optional[float]
    threshold: float

    @property
    def best_index(self) -> Optional[int]:
        return None if self.best_radius is None else self.radii.index(self.best_radius)

    def estimates(self) -> list[complex]:
        """Modal eigenvalue estimates at the best radius, mapped back to the unscaled plane."""
        if self.best_radius is None:
            return []
        rep = self.reports[self.best_index]
        return [self.best_radius * m["value"] for _, m in sorted(rep.modal.items())]

    def to_json(self) -> dict:
        return {
            "radii": self.radii,
            "masses": self.masses,
            "best_radius": self.best_radius,
            "threshold": self.threshold,
            "estimates": [[z.real, z.imag] for z in self.estimates()],
        }


def radial_search(
    gm: GeneratedMatrix,
    r_min: float,
    r_max: float,
    k_delta: float,
    eps_eig: float,
    delta: float,
    a: int,
    betas: Optional[Sequence[complex]] = None,
    n_samples: int = 200,
    seed: int = 0,
) -> RadialResult:
    """Run QEUE on ``A / r`` for every swept radius ``r = k * k_delta`` in ``[r_min, r_max]``.

    The success mass at a radius is the squared norm of the prefactored
    resolvent state; it peaks where an eigenvalue of ``A`` lies on the
    circle of that radius.  Radii whose shifted circle ``r (1 + delta)``
    passes within 1e-6 of an eigenvalue are skipped.
    """
    if not (0 < r_min <= r_max and k_delta > 0):
        raise ValueError("need 0 < r_min <= r_max and k_delta > 0")
    if betas is None:
        betas = np.ones(gm.eigvec_columns.shape[1])
    k_lo, k_hi = math.ceil(r_min / k_delta - 1e-9), math.floor(r_max / k_delta + 1e-9)
    radii = [k * k_delta for k in range(k_lo, k_hi + 1)]
    radii = [r for r in radii if all(abs(abs(lam) - r * (1 + delta)) > 1e-6 for lam in gm.spec.eigenvalues)]

    def one(r):
        scaled = gm.scaled(1.0 / r)
        cfg = select_parameters(QEUE, eps_eig, 0.5, scaled.kappa_S, scaled.alpha, FEASIBLE, delta=delta, a=a)
        rep = run_pipeline(scaled, cfg, betas, n_samples, seed, certificate=False, cost=False)
        psi, _ = input_state(scaled, betas)
        rs = resolvent_state(build_system(scaled, cfg.discretized(), QEUE), psi, materialize=False)
        return rep, rs.expansion_norm_sq()

    out = pmap(one, radii)
    reports = [o[0] for o in out]
    masses = [float(o[1]) for o in out]
    from .estimator import disc_error

    threshold = 2 * delta / (math.pi * eps_eig) + 2 * disc_error(QEUE, a, delta)
    best = radii[int(np.argmax(masses))] if masses else None
    return RadialResult(radii, masses, reports, best, threshold)
