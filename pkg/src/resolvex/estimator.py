"""QEUE / QERE estimation pipelines on top of exact resolvent states.

The numbers reported here are the quantities the correctness argument is
phrased in: windowed norms ``a_l`` and their complements ``b_l`` of each
eigen-component, the three-way split of the state into an ideal part, a
normalization-mismatch part and a leakage part, and the sampled readout.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .curves import (
    MAX_MATERIALIZE,
    DiscretizedCurve,
    MaterializationError,
    WindowProjector,
    discretize,
    real_segment,
    unit_circle,
    window,
)
from .kreiss import jordan_kreiss_bound, kreiss_circle, kreiss_line
from .matgen import QERE, QEUE, GeneratedMatrix, input_state
from .resolvent import EigenComponent, ResolventState, build_system, resolvent_state, unit_vector_at_distance

__all__ = [
    "STRICT",
    "FEASIBLE",
    "QEUE_GRID_CONST",
    "HypothesisViolated",
    "InfeasibleGrid",
    "CertificateFailed",
    "EstimationConfig",
    "select_parameters",
    "strict_delta",
    "grid_lower_bound",
    "required_a",
    "window_epsilon",
    "disc_error",
    "window_integral",
    "full_integral",
    "ComponentMasses",
    "SuccessReport",
    "success_masses",
    "StateCertificate",
    "state_error_certificate",
    "SampledEstimate",
    "EstimationReport",
    "readout",
    "baseline_expectation",
    "baseline_error_bound",
    "cost_score",
    "run_pipeline",
]

STRICT = "strict_theorem"
FEASIBLE = "feasible"
QEUE_GRID_CONST = 3.0 * math.sqrt(2.0) * math.pi + 6.0
MAX_A = 63
MAX_DIRECT_A = 26
_REL_SLACK = 1e-9


class HypothesisViolated(ValueError):
    pass


class InfeasibleGrid(ValueError):
    pass


class CertificateFailed(AssertionError):
    pass


# ---------------------------------------------------------------------------
# parameters


def strict_delta(eps_eig: float, eps_st: float, kappa_S: float) -> tuple[float, float]:
    """The two candidate shifts whose minimum the complexity argument uses."""
    d1 = eps_st * eps_eig / (32.0 * math.sqrt(5.0) * kappa_S**2)
    d2 = eps_st**2 * eps_eig / (512.0 * (1.0 + 1.0 / math.pi) * kappa_S**4)
    return d1, d2


def grid_lower_bound(problem: str, eps_eig: float, delta: float, rho: Optional[float] = None) -> float:
    """Smallest admissible ``2^a``."""
    if problem == QEUE:
        return QEUE_GRID_CONST * eps_eig / delta**3
    if problem == QERE:
        if rho is None:
            raise ValueError("QERE needs rho")
        return 5.0 * rho * eps_eig / (math.pi * delta**3)
    raise ValueError(f"unknown problem {problem!r}")


def required_a(bound: float) -> int:
    """Smallest ``a >= 1`` with ``2^a >= bound``."""
    if bound <= 2:
        return 1
    a = max(1, math.ceil(math.log2(bound)))
    while 2.0**a < bound:
        a += 1
    while a > 1 and 2.0 ** (a - 1) >= bound:
        a -= 1
    return a


def window_epsilon(problem: str, eps_eig: float, rho: Optional[float] = None) -> float:
    """Half-width of the success window in curve parameter."""
    if problem == QEUE:
        return eps_eig / (2.0 * math.pi)
    if problem == QERE:
        return eps_eig / (2.0 * rho)
    raise ValueError(f"unknown problem {problem!r}")


@dataclass(frozen=True)
class EstimationConfig:
    problem: str
    eps_eig: float
    eps_st: float
    kappa_S: float
    delta: float
    a: int
    mode: str
    alpha_A: float
    grid_bound: float
    delta_candidates: tuple[float, ...] = ()
    theta_check: float = 0.0
    half_width: Optional[float] = None

    @property
    def rho(self) -> Optional[float]:
        return self.alpha_A + self.eps_eig if self.problem == QERE else None

    @property
    def N(self) -> int:
        return 1 << self.a

    @property
    def epsilon(self) -> float:
        if self.half_width is not None:
            return self.half_width
        return window_epsilon(self.problem, self.eps_eig, self.rho)

    @property
    def grid_bound_met(self) -> bool:
        return 2.0**self.a >= self.grid_bound

    @property
    def delta_ok(self) -> bool:
        return self.delta <= self.eps_eig / 4.0 * (1 + 1e-12)

    @property
    def direct_feasible(self) -> bool:
        return self.a <= MAX_DIRECT_A

    def curve(self):
        if self.problem == QEUE:
            return unit_circle()
        if self.problem == QERE:
            return real_segment(self.rho)
        raise ValueError("custom problems carry their curve in the family, not the config")

    def discretized(self) -> DiscretizedCurve:
        return discretize(self.curve(), self.a, self.delta)

    def to_json(self) -> dict:
        out = asdict(self)
        out["delta_candidates"] = list(self.delta_candidates)
        out["rho"] = self.rho
        out["epsilon"] = self.epsilon
        out["epsilon_problem_statement"] = self.eps_eig / self.rho if self.problem == QERE else self.epsilon
        if self.half_width is None:
            del out["half_width"]
        out["grid_bound_met"] = self.grid_bound_met
        out["direct_feasible"] = self.direct_feasible
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EstimationConfig":
        derived = {"rho", "epsilon", "epsilon_problem_statement", "grid_bound_met", "direct_feasible"}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known - derived
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {k: obj[k] for k in known if k in obj}
        kw["delta_candidates"] = tuple(kw.get("delta_candidates", ()))
        kw["a"] = int(kw["a"])
        return cls(**kw)


def select_parameters(
    problem: str,
    eps_eig: float,
    eps_st: float,
    kappa_S: float,
    alpha_A: float,
    mode: str = FEASIBLE,
    *,
    delta: Optional[float] = None,
    a: Optional[int] = None,
) -> EstimationConfig:
    """Choose ``delta`` and ``a``.

    Strict mode takes the shift from the complexity argument (a user value
    may only be smaller) and raises :class:`InfeasibleGrid` when the grid
    would need more than 63 qubits.  Feasible mode defaults to
    ``delta = eps_eig / 4``.  A user ``a`` below the grid bound is accepted
    and shows up as ``grid_bound_met == False``.
    """
    if problem not in (QEUE, QERE):
        raise ValueError(f"unknown problem {problem!r}")
    if not (eps_eig > 0 and 0 < eps_st < 1 and kappa_S >= 1 and alpha_A > 0):
        raise ValueError("need eps_eig > 0, 0 < eps_st < 1, kappa_S >= 1, alpha_A > 0")
    cands = strict_delta(eps_eig, eps_st, kappa_S)
    if mode == STRICT:
        d_max = min(cands)
        if delta is None:
            delta = d_max
        elif delta > d_max * (1 + 1e-12):
            raise HypothesisViolated(f"delta {delta:g} exceeds the strict maximum {d_max:g}")
    elif mode == FEASIBLE:
        if delta is None:
            delta = eps_eig / 4.0
        elif not 0 < delta <= eps_eig / 4.0 * (1 + 1e-12):
            raise HypothesisViolated(f"feasible mode needs 0 < delta <= eps_eig/4, got {delta:g}")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    rho = alpha_A + eps_eig if problem == QERE else None
    bound = grid_lower_bound(problem, eps_eig, delta, rho)
    a_req = required_a(bound)
    if mode == STRICT and a_req > MAX_A:
        raise InfeasibleGrid(f"grid needs a = {a_req} > {MAX_A}")
    if a is None:
        a = a_req
    return EstimationConfig(
        problem=problem,
        eps_eig=float(eps_eig),
        eps_st=float(eps_st),
        kappa_S=float(kappa_S),
        delta=float(delta),
        a=int(a),
        mode=mode,
        alpha_A=float(alpha_A),
        grid_bound=float(bound),
        delta_candidates=tuple(float(c) for c in cands),
        theta_check=float(eps_eig * eps_st**2 / kappa_S**4),
    )


# ---------------------------------------------------------------------------
# closed forms


def disc_error(problem: str, a: int, delta: float, rho: Optional[float] = None, *, stated: bool = False) -> float:
    """Riemann-sum error bound for the normalized component density.

    On the segment the density's t-derivative carries the factor
    ``dx/dt = 2 rho``, so its maximum is ``3 sqrt(3) rho^2 / (2 pi delta^2)``.
    ``stated=True`` returns the form without that factor,
    ``(rho / (pi delta^2) + 4 rho / (pi delta)) / N``, which is only a bound
    for ``rho <= 4 / (3 sqrt 3)``.
    """
    N = 2.0**a
    if problem == QEUE:
        return (6.0 * math.sqrt(2.0) * math.pi / (2.0 * delta**2) + 4.0 / delta + 2.0) / N
    if stated:
        return (rho / (math.pi * delta**2) + 4.0 * rho / (math.pi * delta)) / N
    max_deriv = 3.0 * math.sqrt(3.0) * rho**2 / (2.0 * math.pi * delta**2)
    return (max_deriv / 2.0 + 4.0 * rho / (math.pi * delta)) / N


def window_integral(problem: str, eps_eig: float, delta: float) -> float:
    """Integral of the normalized density over the success window."""
    if problem == QEUE:
        eta = (2.0 + delta) / delta * math.tan(eps_eig / 2.0)
        return 2.0 / math.pi * math.atan(eta)
    return 2.0 / math.pi * math.atan(eps_eig / delta)


def full_integral(problem: str, delta: float, lam: complex = 0.0, rho: Optional[float] = None) -> float:
    if problem == QEUE:
        return 1.0
    x = complex(lam).real
    return (math.atan((rho - x) / delta) + math.atan((rho + x) / delta)) / math.pi


# ---------------------------------------------------------------------------
# success masses


@dataclass(frozen=True)
class ComponentMasses:
    index: int
    lam: complex
    t_star: float
    a: float
    b: float
    full_norm_sq: float
    ratio_deviation: float
    window_integral: float
    full_integral: float
    window_size: int
    path: str

    def to_json(self) -> dict:
        d = asdict(self)
        d["lam"] = [self.lam.real, self.lam.imag]
        return d


@dataclass(frozen=True)
class SuccessReport:
    components: tuple[ComponentMasses, ...]
    eps_disc: float
    lemma_bounds: dict
    hypotheses_met: bool
    psi_norms: Optional[tuple[float, float, float]] = None
    total_failure_mass: Optional[float] = None

    def violations(self) -> list[str]:
        """Lemma inequalities that fail (only meaningful when the hypotheses hold)."""
        out = []
        lb = self.lemma_bounds
        for c in self.components:
            if not lb["a_min"] * (1 - _REL_SLACK) <= c.a <= lb["a_max"] * (1 + _REL_SLACK):
                out.append(f"a_{c.index} = {c.a:.6g} outside [{lb['a_min']}, {lb['a_max']:.6g}]")
            if c.ratio_deviation > lb["ratio_dev_max"] * (1 + _REL_SLACK):
                out.append(f"|1 - a0/a_{c.index}| = {c.ratio_deviation:.3g} > {lb['ratio_dev_max']:.3g}")
            if c.b > lb["b_max"] * (1 + _REL_SLACK):
                out.append(f"b_{c.index} = {c.b:.6g} > {lb['b_max']:.6g}")
        return out

    def discretization_violations(self) -> list[str]:
        """|a_l^2 - window integral| and |full norm - full integral| against delta/eps_eig."""
        out = []
        tol = self.lemma_bounds["disc_max"]
        for c in self.components:
            if abs(c.a**2 - c.window_integral) > tol * (1 + _REL_SLACK):
                out.append(f"window a_{c.index}^2 off by {abs(c.a ** 2 - c.window_integral):.3g} > {tol:.3g}")
            if abs(c.full_norm_sq - c.full_integral) > tol * (1 + _REL_SLACK):
                out.append(f"full norm of {c.index} off by {abs(c.full_norm_sq - c.full_integral):.3g}")
        return out

    def to_json(self) -> dict:
        return {
            "components": [c.to_json() for c in self.components],
            "eps_disc": self.eps_disc,
            "lemma_bounds": self.lemma_bounds,
            "hypotheses_met": self.hypotheses_met,
            "psi_norms": None if self.psi_norms is None else list(self.psi_norms),
            "total_failure_mass": self.total_failure_mass,
        }


def _windows(rs: ResolventState, cfg: EstimationConfig) -> list[WindowProjector]:
    closed = rs.dcurve.curve.closed
    return [window(c.t_star, cfg.epsilon, cfg.a, closed) for c in rs.components]


def success_masses(
    rs: ResolventState,
    cfg: EstimationConfig,
    check_hypotheses: bool = True,
    *,
    integrals: Optional[Callable[[EigenComponent], tuple[float, float]]] = None,
    eps_disc: Optional[float] = None,
    parts: bool = True,
) -> SuccessReport:
    """Windowed norms ``a_l`` and leakage ``b_l`` of every component.

    Window sums are exact (direct or closed-form lattice sums).  If neither
    is available the window integral stands in and the path says so.
    Curves without closed forms pass ``integrals`` (window and full-domain
    integral of the normalized density for one component) and ``eps_disc``.
    ``parts=False`` skips the three-way split of the full state.
    """
    custom = cfg.problem not in (QEUE, QERE)
    if custom and integrals is None:
        raise ValueError("custom curves need their integrals supplied")
    hyp = (not custom) and cfg.delta_ok and cfg.grid_bound_met
    if check_hypotheses and not hyp:
        raise HypothesisViolated(
            f"need delta <= eps_eig/4 and 2^a >= {cfg.grid_bound:.4g} "
            f"(delta = {cfg.delta:g}, a = {cfg.a})"
        )
    if rs.dcurve.a != cfg.a or abs(rs.dcurve.delta - cfg.delta) > 1e-15 * cfg.delta:
        raise ValueError("config does not match the state's grid")
    if eps_disc is None:
        eps_disc = disc_error(cfg.problem, cfg.a, cfg.delta, cfg.rho)
    comps = []
    a0 = None
    for l, (c, win) in enumerate(zip(rs.components, _windows(rs, cfg))):
        if custom:
            w_int, f_int = integrals(c)
        else:
            w_int = window_integral(cfg.problem, cfg.eps_eig, cfg.delta)
            f_int = full_integral(cfg.problem, cfg.delta, c.lam, cfg.rho)
        full = rs.component_norm_sq(l)
        try:
            a_sq = rs.component_norm_sq(l, win.ranges)
            path = "direct" if win.size <= MAX_MATERIALIZE else "closed_form_sum"
        except MaterializationError:
            a_sq = w_int
            path = "integral"
        a_l = math.sqrt(max(a_sq, 0.0))
        b_l = math.sqrt(max(full - a_sq, 0.0))
        if a0 is None:
            a0 = a_l
        comps.append(
            ComponentMasses(
                index=c.block,
                lam=c.lam,
                t_star=c.t_star,
                a=a_l,
                b=b_l,
                full_norm_sq=full,
                ratio_deviation=abs(1.0 - a0 / a_l) if a_l > 0 else math.inf,
                window_integral=w_int,
                full_integral=f_int,
                window_size=win.size,
                path=path,
            )
        )
    r = cfg.delta / cfg.eps_eig
    bounds = {
        "a_min": 0.5,
        "a_max": math.sqrt(5.0) / 2.0,
        "ratio_dev_max": 4.0 * r,
        "b_max": math.sqrt(2.0 * (1.0 + 1.0 / math.pi) * r),
        "b_sq_bound": 2.0 * r / math.pi + 2.0 * min(eps_disc, r),
        "disc_max": r,
    }
    report = SuccessReport(tuple(comps), eps_disc, bounds, hyp)
    if not parts:
        return report
    try:
        cert = _psi_parts(rs, cfg)
    except MaterializationError:
        return report
    total = rs.expansion_norm_sq()
    return SuccessReport(tuple(comps), eps_disc, bounds, hyp, cert[:3], cert[2] ** 2 / total)


# ---------------------------------------------------------------------------
# three-way split


def _intersect(r1, r2):
    out = []
    for a, b in r1:
        for c, d in r2:
            lo, hi = max(a, c), min(b, d)
            if lo <= hi:
                out.append((lo, hi))
    return tuple(out)


def _proj_inner(rs: ResolventState, wins, l: int, pl: str, m: int, pm: str) -> complex:
    """<X_l phi_l | Y_m phi_m> with X, Y each P (window) or Q (complement)."""
    both = _intersect(wins[l].ranges, wins[m].ranges)
    cap = rs.inner(l, m, both) if both else 0j
    if pl == "P" and pm == "P":
        return cap
    if pl == "P":
        return rs.inner(l, m, wins[l].ranges) - cap
    if pm == "P":
        return rs.inner(l, m, wins[m].ranges) - cap
    return rs.inner(l, m) - rs.inner(l, m, wins[l].ranges) - rs.inner(l, m, wins[m].ranges) + cap


def _psi_parts(rs: ResolventState, cfg: EstimationConfig):
    wins = _windows(rs, cfg)
    L = len(rs.components)
    G = rs.gram
    beta = rs.betas
    a = np.array([math.sqrt(max(rs.component_norm_sq(l, wins[l].ranges), 0.0)) for l in range(L)])
    a0 = a[0]
    # each part is sum_l coef_l * X_l phi_l (x) s_l
    parts = {
        1: (beta * a0 / a, "P"),
        2: (beta * (1.0 - a0 / a), "P"),
        3: (beta, "Q"),
    }

    def inner(p, q):
        cp, xp = parts[p]
        cq, xq = parts[q]
        tot = 0j
        for l in range(L):
            for m in range(L):
                tot += np.conj(cp[l]) * cq[m] * G[l, m] * _proj_inner(rs, wins, l, xp, m, xq)
        return tot

    n1 = math.sqrt(max(inner(1, 1).real, 0.0))
    n2 = math.sqrt(max(inner(2, 2).real, 0.0))
    n3 = math.sqrt(max(inner(3, 3).real, 0.0))
    overlap = n1**2 + inner(1, 2) + inner(1, 3)
    return n1, n2, n3, a, complex(overlap)


def _holds(measured: float, bound: float) -> bool:
    return measured <= bound + _REL_SLACK * abs(bound)


@dataclass(frozen=True)
class StateCertificate:
    psi1: float
    psi2: float
    psi3: float
    a0: float
    kappa_S: float
    ratio2: float
    ratio3: float
    distance_bound: float
    distance_actual: float
    checks: tuple[tuple[str, float, float], ...]

    @property
    def passed(self) -> bool:
        return all(_holds(m, b) for _, m, b in self.checks)

    def to_json(self) -> dict:
        d = asdict(self)
        d["checks"] = [{"name": n, "measured": m, "bound": b, "slack": b - m} for n, m, b in self.checks]
        d["passed"] = self.passed
        return d


def state_error_certificate(rs: ResolventState, cfg: EstimationConfig, raise_on_failure: bool = True) -> StateCertificate:
    """Exact norms of the ideal, mismatch and leakage parts, checked against their bounds.

    Each check is ``measured <= bound``; the lower bound on the ideal part is
    encoded as ``a0 / kappa_S <= ||psi_1||`` by negating both sides.
    """
    n1, n2, n3, a, overlap = _psi_parts(rs, cfg)
    comps = success_masses(rs, cfg, check_hypotheses=False).components
    b = np.array([c.b for c in comps])
    kS = rs.system.gm.kappa_S if rs.system.gm is not None else cfg.kappa_S
    a0 = float(a[0])
    r2, r3 = n2 / n1, n3 / n1
    checks = [
        ("-psi1 <= -a0/kappa_S", -n1, -a0 / kS),
        ("psi2 <= kappa_S max|1-a0/a_l| a_l", n2, kS * float(np.max(np.abs(1.0 - a0 / a) * a))),
        ("psi3 <= kappa_S max b_l", n3, kS * float(np.max(b))),
    ]
    r = cfg.delta / cfg.eps_eig
    if cfg.delta_ok and cfg.grid_bound_met:
        checks += [
            ("psi2 <= kappa_S 2 sqrt5 delta/eps", n2, kS * 2.0 * math.sqrt(5.0) * r),
            ("psi2/psi1 <= 4 sqrt5 kappa^2 delta/eps", r2, 4.0 * math.sqrt(5.0) * kS**2 * r),
            ("psi3/psi1 <= kappa^2 sqrt(8(1+1/pi) delta/eps)", r3, kS**2 * math.sqrt(8.0 * (1 + 1 / math.pi) * r)),
        ]
    if cfg.mode == STRICT:
        checks += [("psi2/psi1 <= eps_st/8", r2, cfg.eps_st / 8.0), ("psi3/psi1 <= eps_st/8", r3, cfg.eps_st / 8.0)]
    total = math.sqrt(rs.expansion_norm_sq())
    cos = max(-1.0, min(1.0, overlap.real / (n1 * total)))
    actual = math.sqrt(max(2.0 - 2.0 * cos, 0.0))
    bound = 2.0 * (r2 + r3)
    checks.append(("distance <= 2 (r2 + r3)", actual, bound))
    cert = StateCertificate(n1, n2, n3, a0, kS, r2, r3, bound, actual, tuple(checks))
    if raise_on_failure and not cert.passed:
        bad = [n for n, m, bd in checks if not _holds(m, bd)]
        raise CertificateFailed(f"violated: {', '.join(bad)}")
    return cert


# ---------------------------------------------------------------------------
# readout


@dataclass(frozen=True)
class SampledEstimate:
    j: int
    count: int
    attributed: int
    t_hat: float
    value: complex
    param_error: float
    in_window: bool

    def to_json(self) -> dict:
        d = asdict(self)
        d["value"] = [self.value.real, self.value.imag]
        return d


@dataclass
class EstimationReport:
    config: EstimationConfig
    estimates: list[SampledEstimate]
    n_samples: int
    empirical_failure: float
    exact_failure: Optional[float]
    modal: dict
    success: Optional[SuccessReport] = None
    certificate: Optional[StateCertificate] = None
    cost: Optional[float] = None
    kreiss_value: Optional[float] = None
    ground_truth: list = field(default_factory=list)
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def modal_value(self, l: int) -> complex:
        return self.modal[l]["value"]

    def to_json(self) -> dict:
        return {
            "version": __version__,
            "config": self.config.to_json(),
            "n_samples": self.n_samples,
            "empirical_failure": self.empirical_failure,
            "exact_failure": self.exact_failure,
            "modal": {
                str(l): {**m, "value": [m["value"].real, m["value"].imag]} for l, m in sorted(self.modal.items())
            },
            "ground_truth": [[z.real, z.imag] for z in self.ground_truth],
            "estimates": [e.to_json() for e in self.estimates],
            "success": None if self.success is None else self.success.to_json(),
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "cost_score": self.cost,
            "kreiss_value": self.kreiss_value,
            **self.extra,
        }


def _param_error(t_hat: float, t_star: float, closed: bool) -> float:
    d = abs(t_hat - t_star)
    return min(d, 1.0 - d) if closed else d


def readout(rs: ResolventState, cfg: EstimationConfig, n_samples: int, rng_seed: int = 0) -> EstimationReport:
    """Sample ancilla outcomes from the exact marginal and attribute them.

    Each sampled ``j`` is assigned to the eigenvalue whose dual-basis
    coefficient of the system register is largest in magnitude (lowest
    index on ties) and counts as a failure when it lies outside that
    eigenvalue's window.
    """
    N = rs.N
    if N > MAX_MATERIALIZE:
        raise MaterializationError(f"readout enumerates all 2^{cfg.a} outcomes")
    if not rs.components:
        raise ValueError("readout needs the eigen-expansion for attribution")
    closed = rs.dcurve.curve.closed
    wins = _windows(rs, cfg)
    dual = np.linalg.pinv(rs.S)
    p = np.empty(N)
    owner = np.empty(N, dtype=np.int64)
    inside = np.empty(N, dtype=bool)
    for lo in range(0, N, 1 << 16):
        j = np.arange(lo, min(lo + (1 << 16), N))
        rows = rs.rows(j)
        p[j] = np.sum(np.abs(rows) ** 2, axis=1)
        coef = np.abs(rows @ dual.T)
        own = np.argmax(coef, axis=1)
        owner[j] = own
        ok = np.zeros(j.size, dtype=bool)
        for l, w in enumerate(wins):
            ok |= (own == l) & w.contains(j)
        inside[j] = ok
    p /= p.sum()
    rng = np.random.Generator(np.random.Philox(rng_seed))
    draws = rng.choice(N, size=n_samples, p=p)
    js, counts = np.unique(draws, return_counts=True)
    estimates = []
    for j, cnt in zip(js, counts):
        l = int(owner[j])
        t_hat = float(j / N)
        estimates.append(
            SampledEstimate(
                j=int(j),
                count=int(cnt),
                attributed=l,
                t_hat=t_hat,
                value=complex(rs.dcurve.curve(t_hat)),
                param_error=float(_param_error(t_hat, rs.components[l].t_star, closed)),
                in_window=bool(inside[j]),
            )
        )
    fails = sum(e.count for e in estimates if not e.in_window)
    modal = {}
    for l, comp in enumerate(rs.components):
        mine = [e for e in estimates if e.attributed == l]
        if not mine:
            continue
        best = max(mine, key=lambda e: (e.count, -e.j))
        modal[l] = {
            "j": best.j,
            "t_hat": best.t_hat,
            "value": best.value,
            "count": sum(e.count for e in mine),
            "abs_error": abs(best.value - comp.lam),
            "param_error": best.param_error,
        }
    return EstimationReport(
        config=cfg,
        estimates=estimates,
        n_samples=int(n_samples),
        empirical_failure=fails / n_samples if n_samples else 0.0,
        exact_failure=float(np.sum(p[~inside])),
        modal=modal,
        ground_truth=[c.lam for c in rs.components],
    )


# ---------------------------------------------------------------------------
# baseline and cost


def baseline_expectation(gm: GeneratedMatrix, lambda_index: int, state_error: float = 0.0, seed: int = 0) -> float:
    """<psi|(A + A^dagger)/2|psi> for a unit vector at distance ``state_error`` from ``s_l``."""
    s = gm.eigvec_columns[:, lambda_index]
    if state_error > 0:
        s = unit_vector_at_distance(s, state_error, np.random.Generator(np.random.Philox(seed)))
    H = 0.5 * (gm.A + gm.A.conj().T)
    return float(np.real(np.vdot(s, H @ s)))


def baseline_error_bound(alpha_A: float, state_error: float) -> float:
    """2 alpha e + alpha e^2, from expanding the quadratic form around the eigenvector."""
    return 2.0 * alpha_A * state_error + alpha_A * state_error**2


def cost_score(cfg: EstimationConfig, alpha_A: float, kreiss_value: float, kappa_S: float) -> float:
    """alpha kappa_S^4 K / (eps_eig eps_st^2) * ln(1/eps_st); a scaling score with no hidden constant."""
    return alpha_A * kappa_S**4 * kreiss_value / (cfg.eps_eig * cfg.eps_st**2) * math.log(1.0 / cfg.eps_st)


def cost_is_degenerate(cfg: EstimationConfig) -> bool:
    """The log factor collapses as eps_st approaches one."""
    return math.log(1.0 / cfg.eps_st) < 0.1


# ---------------------------------------------------------------------------
# end-to-end


def _kreiss_for(gm: GeneratedMatrix, cfg: EstimationConfig, max_samples: int = 2_000_000) -> tuple[float, str]:
    d = cfg.delta
    if cfg.problem == QEUE:
        if 8 * 2 * math.pi * (1 + d) / d <= max_samples:
            return kreiss_circle(gm.A, d).value, "sampled"
    else:
        from .numkit import spectral_norm

        y = 2.0 * (spectral_norm(gm.A) + 1.0)
        if 8 * 2 * y / d <= max_samples:
            return kreiss_line(-1j * gm.A, d).value, "sampled"
    if d < 1:
        return jordan_kreiss_bound(gm.kappa_bar_witness, gm.spec.max_block, d), "jordan_bound"
    raise ValueError("cannot evaluate a Kreiss constant for this shift")


def run_pipeline(
    gm: GeneratedMatrix,
    cfg: EstimationConfig,
    betas: Sequence[complex],
    n_samples: int = 1000,
    seed: int = 0,
    *,
    kreiss_value: Optional[float] = None,
    perturb: bool = False,
    check_hypotheses: bool = False,
    certificate: bool = True,
    cost: bool = True,
) -> EstimationReport:
    """Resolvent state, success masses, certificate, readout and cost in one call."""
    from .resolvent import perturb_state

    start = time.perf_counter()
    psi, _ = input_state(gm, betas)
    system = build_system(gm, cfg.discretized(), cfg.problem)
    rs = resolvent_state(system, psi, materialize=cfg.N * gm.dim <= MAX_MATERIALIZE and perturb)
    if perturb:
        rs = perturb_state(rs, cfg.eps_st, seed)
    success = success_masses(rs, cfg, check_hypotheses=check_hypotheses)
    cert = None
    if certificate:
        try:
            cert = state_error_certificate(rs, cfg, raise_on_failure=False)
        except MaterializationError:
            cert = None
    report = readout(rs, cfg, n_samples, seed) if cfg.N <= MAX_MATERIALIZE else EstimationReport(
        cfg, [], 0, 0.0, None, {}, ground_truth=[c.lam for c in rs.components]
    )
    report.success = success
    report.certificate = cert
    ksrc = None
    if cost:
        if kreiss_value is None:
            kreiss_value, ksrc = _kreiss_for(gm, cfg)
        else:
            ksrc = "given"
        report.kreiss_value = float(kreiss_value)
        report.cost = cost_score(cfg, gm.alpha, kreiss_value, gm.kappa_S)
    report.extra = {"kreiss_source": ksrc, "cost_degenerate": cost_is_degenerate(cfg), "perturbed": perturb}
    report.wall_time = time.perf_counter() - start
    return report
