"""Randomized verification suites with measured-versus-bound rows.

Every row states one inequality ``measured <= bound``.  Lower bounds are
stored negated so the comparison direction never changes.  The suites are
shared by ``resolvex verify`` and the test-suite.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .curves import discretize, real_segment, unit_circle
from .estimator import FEASIBLE, select_parameters, success_masses
from .kreiss import jordan_kreiss_bound, kreiss_circle, kreiss_line
from .matgen import QERE, QEUE, JordanSpec, generate, input_state
from .resolvent import build_system, resolvent_state

__all__ = [
    "Row",
    "SuiteResult",
    "SUITES",
    "run_suite",
    "random_qeue_spec",
    "random_qere_spec",
    "lemma_cases",
]

REL_SLACK = 1e-9
QEUE_EPS = (0.3, 0.1)
DELTA_FRACTIONS = (4, 10, 40)
NILPOTENT_ORACLE = 0.46248


@dataclass(frozen=True)
class Row:
    suite: str
    trial: int
    case: str
    quantity: str
    measured: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    @property
    def ok(self) -> bool:
        return self.measured <= self.bound + REL_SLACK * abs(self.bound) + 1e-15

    def as_dict(self) -> dict:
        return {
            "suite": self.suite,
            "trial": self.trial,
            "case": self.case,
            "quantity": self.quantity,
            "measured": repr(float(self.measured)),
            "bound": repr(float(self.bound)),
            "slack": repr(float(self.slack)),
            "ok": int(self.ok),
        }


@dataclass
class SuiteResult:
    name: str
    trials: int
    seed: int
    rows: list[Row] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def violations(self) -> list[Row]:
        return [r for r in self.rows if not r.ok]

    @property
    def passed(self) -> bool:
        return bool(self.rows) and not self.violations

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["suite", "trial", "case", "quantity", "measured", "bound", "slack", "ok"],
                           lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r.as_dict())
        return buf.getvalue()

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {state} ({len(self.rows)} checks, {len(self.violations)} violations, {self.trials} trials)"


# ---------------------------------------------------------------------------
# random specs


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, trial]))


def _split_sizes(rng, count: int, budget: int) -> list[int]:
    sizes = []
    for _ in range(count):
        d = int(rng.integers(1, 4))
        if sum(sizes) + d > budget:
            break
        sizes.append(d)
    return sizes


def random_qeue_spec(rng: np.random.Generator, max_dim: int = 16, max_cond: float = 50.0,
                     eps_max: float = max(QEUE_EPS)) -> JordanSpec:
    """Unimodular targets plus distractors well inside or outside the exclusion annulus."""
    target_d = _split_sizes(rng, int(rng.integers(1, 4)), max_dim)
    blocks = [(complex(np.exp(2j * np.pi * rng.random())), d) for d in target_d]
    for d in _split_sizes(rng, int(rng.integers(0, 4)), max_dim - sum(target_d)):
        if rng.random() < 0.5:
            r = 0.9 * rng.random()
        else:
            r = 1.0 + eps_max + 0.1 + 0.7 * rng.random()
        blocks.append((r * np.exp(2j * np.pi * rng.random()), d))
    cond = float(1.0 + (max_cond - 1.0) * rng.random())
    return JordanSpec(tuple(blocks), cond, int(rng.integers(2**31)), tuple(range(len(target_d))))


def random_qere_spec(rng: np.random.Generator, max_dim: int = 16, max_cond: float = 50.0,
                     eps_max: float = max(QEUE_EPS)) -> JordanSpec:
    """Real targets plus complex distractors whose imaginary parts avoid ``(0, eps_max)``."""
    target_d = _split_sizes(rng, int(rng.integers(1, 4)), max_dim)
    blocks = [(complex(rng.uniform(-0.9, 0.9)), d) for d in target_d]
    for d in _split_sizes(rng, int(rng.integers(0, 4)), max_dim - sum(target_d)):
        im = rng.uniform(-0.6, -0.05) if rng.random() < 0.5 else rng.uniform(eps_max + 0.05, eps_max + 0.4)
        blocks.append((complex(rng.uniform(-0.9, 0.9), im), d))
    cond = float(1.0 + (max_cond - 1.0) * rng.random())
    return JordanSpec(tuple(blocks), cond, int(rng.integers(2**31)), tuple(range(len(target_d))))


def lemma_cases(eps_values=QEUE_EPS, fractions=DELTA_FRACTIONS) -> list[tuple[float, float]]:
    """(eps_eig, delta) pairs with ``delta = eps_eig / k``."""
    return [(e, e / k) for e in eps_values for k in fractions]


# ---------------------------------------------------------------------------
# suites


def _lemma_suite(problem: str, name: str, trials: int, seed: int) -> list[Row]:
    make = random_qeue_spec if problem == QEUE else random_qere_spec
    rows: list[Row] = []
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        gm = generate(make(rng))
        k = gm.eigvec_columns.shape[1]
        betas = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        psi, _ = input_state(gm, betas)
        for eps, delta in lemma_cases():
            cfg = select_parameters(problem, eps, 0.5, max(gm.kappa_S, 1.0), gm.alpha, FEASIBLE, delta=delta)
            rs = resolvent_state(build_system(gm, cfg.discretized(), problem), psi, materialize=False)
            rep = success_masses(rs, cfg, parts=False)
            lb = rep.lemma_bounds
            case = f"eps={eps:g},delta={delta:g},a={cfg.a}"
            for c in rep.components:
                tag = f"l={c.index}"
                rows += [
                    Row(name, trial, case, f"{tag}:-a_l<=-1/2", -c.a, -lb["a_min"]),
                    Row(name, trial, case, f"{tag}:a_l<=sqrt5/2", c.a, lb["a_max"]),
                    Row(name, trial, case, f"{tag}:|1-a0/a_l|<=4delta/eps", c.ratio_deviation, lb["ratio_dev_max"]),
                    Row(name, trial, case, f"{tag}:b_l<=sqrt(2(1+1/pi)delta/eps)", c.b, lb["b_max"]),
                    Row(name, trial, case, f"{tag}:|a_l^2-window_integral|<=delta/eps",
                        abs(c.a**2 - c.window_integral), lb["disc_max"]),
                    Row(name, trial, case, f"{tag}:|norm^2-full_integral|<=delta/eps",
                        abs(c.full_norm_sq - c.full_integral), lb["disc_max"]),
                ]
    return rows


def qeue_lemmas(trials: int, seed: int) -> list[Row]:
    return _lemma_suite(QEUE, "qeue-lemmas", trials, seed)


def qere_lemmas(trials: int, seed: int) -> list[Row]:
    return _lemma_suite(QERE, "qere-lemmas", trials, seed)


def _random_spectrum_spec(rng: np.random.Generator, problem: str, max_dim: int) -> JordanSpec:
    sizes = _split_sizes(rng, int(rng.integers(1, 6)), max_dim)
    if problem == QEUE:
        lams = [0.95 * math.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random()) for _ in sizes]
    else:
        lams = [complex(rng.uniform(-0.9, 0.9), rng.uniform(-0.5, -0.02)) for _ in sizes]
    return JordanSpec(tuple(zip(lams, sizes)), float(1.0 + 9.0 * rng.random()), int(rng.integers(2**31)))


def solver_oracle(trials: int, seed: int) -> list[Row]:
    """Dense per-block solves against the analytic Jordan resolvent."""
    rows = []
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        problem = QEUE if trial % 2 == 0 else QERE
        gm = generate(_random_spectrum_spec(rng, problem, 16))
        a = int(rng.integers(2, 15))
        delta = float(rng.uniform(0.01, 0.2))
        curve = unit_circle() if problem == QEUE else real_segment(gm.alpha + 0.1)
        dc = discretize(curve, a, delta)
        psi = rng.standard_normal(gm.dim) + 1j * rng.standard_normal(gm.dim)
        psi /= np.linalg.norm(psi)
        direct = resolvent_state(build_system(gm, dc, problem, mode="direct"), psi, materialize=True, expand=False)
        analytic = resolvent_state(build_system(gm, dc, problem, mode="analytic"), psi, materialize=True,
                                   expand=False)
        err = float(np.linalg.norm(direct.joint - analytic.joint) / np.linalg.norm(analytic.joint))
        rows.append(Row("solver-oracle", trial, f"{problem},n={gm.dim},a={a}", "relative_difference", err, 1e-8))
    return rows


def _kreiss_spec(rng: np.random.Generator, delta: float) -> JordanSpec:
    sizes = _split_sizes(rng, int(rng.integers(1, 5)), 8)
    lams = []
    for _ in sizes:
        if rng.random() < 0.6:
            r = math.sqrt(rng.random())
        else:
            r = 1.0 + 2.0 * delta + 0.5 * rng.random()
        lams.append(r * np.exp(2j * np.pi * rng.random()))
    return JordanSpec(tuple(zip(lams, sizes)), float(1.0 + 19.0 * rng.random()), int(rng.integers(2**31)))


def kreiss_suite(trials: int, seed: int) -> list[Row]:
    """Sampled circle Kreiss constants against the Jordan bound, normal cases and the nilpotent oracle."""
    rows = []
    deltas = (0.5, 0.1, 0.02)
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        delta = deltas[trial % len(deltas)]
        gm = generate(_kreiss_spec(rng, delta))
        est = kreiss_circle(gm.A, delta)
        bound = jordan_kreiss_bound(gm.kappa_bar_witness, gm.spec.max_block, delta)
        rows.append(Row("kreiss", trial, f"delta={delta:g},d={gm.spec.max_block}", "K_circle<=jordan_bound",
                        est.value, bound * (1 + 1e-6)))
    for trial in range(max(1, trials // 10)):
        rng = _trial_rng(seed + 1, trial)
        delta = deltas[trial % len(deltas)]
        n = int(rng.integers(1, 6))
        lams = np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
        Q = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))[0]
        A = Q @ np.diag(lams) @ Q.conj().T
        expect_c = delta / float(np.min(np.abs(np.abs(lams) - (1 + delta))))
        got_c = kreiss_circle(A, delta).value
        rows.append(Row("kreiss", trial, f"normal_circle,delta={delta:g}", "|K/expected-1|",
                        abs(got_c / expect_c - 1), 1e-3))
        H = Q @ np.diag(rng.uniform(-1, 1, n)) @ Q.conj().T
        mu = np.linalg.eigvals(-1j * H)
        expect_l = delta / float(np.min(np.abs(mu.real - delta)))
        got_l = kreiss_line(-1j * H, delta).value
        rows.append(Row("kreiss", trial, f"normal_line,delta={delta:g}", "|K/expected-1|",
                        abs(got_l / expect_l - 1), 1e-3))
    J = np.array([[0, 0], [1, 0]], dtype=complex)
    rows.append(Row("kreiss", -1, "nilpotent_circle,delta=0.5", "|K-0.46248|",
                    abs(kreiss_circle(J, 0.5).value - NILPOTENT_ORACLE), 1e-4))
    # the line passes at distance delta from the eigenvalue, so delta * sigma_max = 1 + sqrt 2
    rows.append(Row("kreiss", -1, "nilpotent_line,delta=0.5", "|K-(1+sqrt2)|",
                    abs(kreiss_line(-1j * J, 0.5).value - (1.0 + math.sqrt(2.0))), 1e-4))
    return rows


def propagation(trials: int, seed: int) -> list[Row]:
    """min|chi_l|/kappa_S <= |sum_l beta_l chi_l (x) s_l| <= kappa_S max|chi_l| for normalized sum beta_l s_l."""
    rows = []
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        n = int(rng.integers(2, 9))
        L = int(rng.integers(1, n + 1))
        m = int(rng.integers(1, 33))
        S = rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L))
        S[:, 1:] += 2.0 * rng.random() * S[:, :1]
        S /= np.linalg.norm(S, axis=0)
        sv = np.linalg.svd(S, compute_uv=False)
        kS = sv[0] / sv[-1]
        beta = rng.standard_normal(L) + 1j * rng.standard_normal(L)
        beta /= np.linalg.norm(S @ beta)
        chi = (rng.standard_normal((m, L)) + 1j * rng.standard_normal((m, L))) * rng.uniform(0.1, 2.0, L)
        joint = (chi * beta) @ S.T
        nrm = float(np.linalg.norm(joint))
        cn = np.linalg.norm(chi, axis=0)
        case = f"n={n},L={L},kappa_S={kS:.3g}"
        rows.append(Row("propagation", trial, case, "-norm<=-min|chi|/kappa_S", -nrm, -float(cn.min()) / kS))
        rows.append(Row("propagation", trial, case, "norm<=kappa_S*max|chi|", nrm, kS * float(cn.max())))
    return rows


def normalized_error(trials: int, seed: int) -> list[Row]:
    """|x/|x| - y/|y|| <= 2 eps / |x| whenever |x - y| <= eps."""
    rows = []
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        n = int(rng.integers(1, 65))
        x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * rng.uniform(0.01, 10.0)
        eps = float(rng.uniform(0.0, 2.0) * np.linalg.norm(x))
        e = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        e *= eps * (1.0 if trial % 2 == 0 else rng.random()) / np.linalg.norm(e)
        y = x + e
        if np.linalg.norm(y) == 0:
            continue
        d = float(np.linalg.norm(x / np.linalg.norm(x) - y / np.linalg.norm(y)))
        rows.append(Row("normalized-error", trial, f"n={n}", "distance<=2eps/|x|", d,
                        2.0 * float(np.linalg.norm(e)) / float(np.linalg.norm(x))))
    return rows


SUITES: dict[str, Callable[[int, int], list[Row]]] = {
    "qeue-lemmas": qeue_lemmas,
    "qere-lemmas": qere_lemmas,
    "solver-oracle": solver_oracle,
    "kreiss": kreiss_suite,
    "propagation": propagation,
    "normalized-error": normalized_error,
}

DEFAULT_TRIALS = {
    "qeue-lemmas": 50,
    "qere-lemmas": 50,
    "solver-oracle": 100,
    "kreiss": 200,
    "propagation": 100,
    "normalized-error": 100,
}


def run_suite(name: str, trials: Optional[int] = None, seed: int = 0) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    trials = DEFAULT_TRIALS[name] if trials is None else int(trials)
    start = time.perf_counter()
    rows = SUITES[name](trials, seed)
    return SuiteResult(name, trials, seed, rows, time.perf_counter() - start)
