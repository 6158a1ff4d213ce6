import math

import numpy as np
import pytest

from resolvex.estimator import (
    FEASIBLE,
    STRICT,
    CertificateFailed,
    EstimationConfig,
    HypothesisViolated,
    InfeasibleGrid,
    baseline_error_bound,
    baseline_expectation,
    cost_is_degenerate,
    cost_score,
    disc_error,
    full_integral,
    grid_lower_bound,
    readout,
    required_a,
    run_pipeline,
    select_parameters,
    state_error_certificate,
    success_masses,
    window_integral,
)
from resolvex.kreiss import jordan_kreiss_bound, resolvent_norm_bound
from resolvex.matgen import QERE, QEUE, GeneratedMatrix, JordanSpec, generate, input_state
from resolvex.resolvent import build_system, resolvent_state


def _diagonalizable(eigs, S):
    S = np.asarray(S, dtype=complex)
    S = S / np.linalg.norm(S, axis=0)
    J = np.diag(np.asarray(eigs, dtype=complex))
    Sinv = np.linalg.inv(S)
    A = S @ J @ Sinv
    sv = np.linalg.svd(S, compute_uv=False)
    spec = JordanSpec(tuple((complex(e), 1) for e in eigs), 1.0, 0, scramble=False)
    alpha = float(np.linalg.norm(A, 2))
    return GeneratedMatrix(A, S, J, spec, sv[0] / sv[-1], alpha, S, sv[0] / sv[-1], Sinv)


def _state(gm, cfg, betas, materialize=None):
    psi, _ = input_state(gm, betas)
    system = build_system(gm, cfg.discretized(), cfg.problem, alpha_A=cfg.alpha_A)
    return resolvent_state(system, psi, materialize=materialize)


# ---------------------------------------------------------------- parameters


def test_strict_parameters():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, STRICT)
    d1, d2 = cfg.delta_candidates
    assert d1 == pytest.approx(1.3976e-4, rel=1e-4)
    assert d2 == pytest.approx(1.4815e-6, rel=1e-4)
    assert cfg.delta == d2
    assert cfg.grid_bound == pytest.approx(5.9e17, rel=0.01)
    assert cfg.a == 60 and cfg.grid_bound_met and not cfg.direct_feasible
    assert cfg.theta_check == pytest.approx(1e-3)


def test_feasible_parameters():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, FEASIBLE, delta=0.025)
    assert cfg.grid_bound == pytest.approx(123704, rel=1e-5)
    assert cfg.a == 17
    cfg = select_parameters(QERE, 0.1, 0.1, 1.0, 0.5, FEASIBLE, delta=0.001)
    assert cfg.rho == pytest.approx(0.6)
    assert cfg.grid_bound == pytest.approx(9.549e7, rel=1e-4)
    assert cfg.a == 27
    assert select_parameters(QEUE, 0.2, 0.1, 1.0, 1.0).delta == pytest.approx(0.05)


def test_parameter_errors():
    with pytest.raises(InfeasibleGrid):
        select_parameters(QEUE, 0.01, 0.01, 3.0, 1.0, STRICT)
    with pytest.raises(HypothesisViolated):
        select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, FEASIBLE, delta=0.03)
    with pytest.raises(HypothesisViolated):
        select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, STRICT, delta=1e-5)
    with pytest.raises(ValueError):
        select_parameters(QEUE, 0.1, 1.0, 1.0, 1.0)
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, delta=0.025, a=10)
    assert not cfg.grid_bound_met


@pytest.mark.parametrize("bound", [1.0, 2.0, 3.0, 1024.0, 1025.0, 123704.0, 2.0**40 + 1])
def test_required_a_is_minimal(bound):
    a = required_a(bound)
    assert 2.0**a >= bound
    assert a == 1 or 2.0 ** (a - 1) < bound


def test_config_json_roundtrip():
    cfg = select_parameters(QERE, 0.1, 0.2, 2.0, 0.5, delta=0.01)
    back = EstimationConfig.from_json(cfg.to_json())
    assert back == cfg
    assert cfg.to_json()["epsilon_problem_statement"] == pytest.approx(0.1 / 0.6)
    with pytest.raises(ValueError):
        EstimationConfig.from_json({**cfg.to_json(), "colour": 1})


# ---------------------------------------------------------------- closed forms


def test_window_integrals():
    assert window_integral(QEUE, 0.1, 0.001) == pytest.approx(2 / math.pi * math.atan(2001 * math.tan(0.05)))
    assert window_integral(QEUE, 0.1, 0.001) == pytest.approx(0.993642, abs=5e-7)
    assert window_integral(QERE, 0.1, 0.001) == pytest.approx(2 / math.pi * math.atan(100))
    assert window_integral(QERE, 0.1, 0.001) == pytest.approx(0.993634, abs=5e-7)
    assert full_integral(QEUE, 0.01) == 1.0
    assert full_integral(QERE, 0.001, 0.0, 0.6) == pytest.approx(2 / math.pi * math.atan(600))


def test_disc_error_forms():
    # QEUE: (3 sqrt2 pi/delta^2 + 4/delta + 2)/N
    assert disc_error(QEUE, 10, 0.1) == pytest.approx((3 * math.sqrt(2) * math.pi / 0.01 + 42) / 1024)
    stated = disc_error(QERE, 10, 0.1, 1.0, stated=True)
    corrected = disc_error(QERE, 10, 0.1, 1.0)
    assert stated == pytest.approx((1 / (math.pi * 0.01) + 4 / (math.pi * 0.1)) / 1024)
    assert corrected > stated


def test_segment_density_derivative_needs_chain_rule():
    rho, delta = 1.0, 0.01
    t = np.linspace(0.45, 0.55, 200001)
    x = rho * (2 * t - 1)
    f = 2 * rho * delta / math.pi / (x**2 + delta**2)
    measured = np.max(np.abs(np.gradient(f, t)))
    assert measured == pytest.approx(3 * math.sqrt(3) * rho**2 / (2 * math.pi * delta**2), rel=1e-3)
    assert measured > 2 * rho / (math.pi * delta**2)


# ---------------------------------------------------------------- success masses


def test_b_squared_bound_example():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, delta=0.001)
    gm = generate(JordanSpec(((1, 1),), 1.0, 0))
    rs = _state(gm, cfg, [1])
    rep = success_masses(rs, cfg)
    c = rep.components[0]
    assert 2 * 0.01 / math.pi + 2 * 0.01 == pytest.approx(0.02637, abs=5e-6)
    assert rep.lemma_bounds["b_sq_bound"] <= 0.02637 + 1e-12
    assert c.b**2 <= rep.lemma_bounds["b_sq_bound"]
    assert c.a**2 == pytest.approx(0.993642, abs=rep.lemma_bounds["disc_max"])
    assert not rep.violations() and not rep.discretization_violations()


def test_grid_point_limit_probe():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, delta=1e-6)
    gm = generate(JordanSpec(((1, 1),), 1.0, 0))
    rep = success_masses(_state(gm, cfg, [1]), cfg)
    c = rep.components[0]
    assert cfg.a == 61 and c.path == "closed_form_sum"
    assert c.a**2 >= 0.99 and c.b <= 0.003
    assert c.a**2 + c.b**2 == pytest.approx(c.full_norm_sq, rel=1e-10)


def test_lemma_bounds_on_two_eigenvalues():
    gm = generate(JordanSpec(((1, 1), (np.exp(2j), 1), (0.2, 2)), 6.0, 5, targets=(0, 1)))
    for problem, gm_ in ((QEUE, gm),):
        cfg = select_parameters(problem, 0.2, 0.1, gm.kappa_S, gm.alpha, delta=0.01)
        rep = success_masses(_state(gm_, cfg, [1, 1j]), cfg)
        assert rep.hypotheses_met
        assert not rep.violations()
        assert not rep.discretization_violations()
        for c in rep.components:
            assert c.a**2 + c.b**2 == pytest.approx(c.full_norm_sq, rel=1e-10)


def test_hypotheses_enforced():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, delta=0.025, a=8)
    gm = generate(JordanSpec(((1, 1),), 1.0, 0))
    rs = _state(gm, cfg, [1])
    with pytest.raises(HypothesisViolated):
        success_masses(rs, cfg)
    assert not success_masses(rs, cfg, check_hypotheses=False).hypotheses_met


# ---------------------------------------------------------------- certificate


def test_certificate_single_eigenvalue():
    cfg = select_parameters(QEUE, 0.2, 0.1, 1.0, 1.0, delta=0.01)
    gm = generate(JordanSpec(((1j, 1),), 1.0, 0))
    cert = state_error_certificate(_state(gm, cfg, [1]), cfg)
    assert cert.psi2 == 0.0
    assert cert.passed


def test_certificate_orthonormal_pythagoras():
    cfg = select_parameters(QEUE, 0.2, 0.1, 1.0, 1.0, delta=0.01)
    gm = generate(JordanSpec(((1, 1), (-1, 1), (1j, 1)), 1.0, 2))
    beta = np.array([0.6, 0.3j, -0.5])
    rs = _state(gm, cfg, beta)
    cert = state_error_certificate(rs, cfg)
    comps = success_masses(rs, cfg).components
    b = rs.betas
    assert cert.psi3**2 == pytest.approx(sum(abs(bl) ** 2 * c.b**2 for bl, c in zip(b, comps)), rel=1e-9)
    assert cert.psi3 <= max(c.b for c in comps)


def test_certificate_oblique_pair():
    s1 = [1, 0]
    s2 = [1, 1]
    gm = _diagonalizable([1, -1], np.column_stack([s1, s2]))
    assert gm.kappa_S == pytest.approx(1 + math.sqrt(2))
    cfg = select_parameters(QEUE, 0.2, 0.1, gm.kappa_S, gm.alpha, delta=0.01)
    cert = state_error_certificate(_state(gm, cfg, [1, 1]), cfg)
    assert cert.passed
    slack = {n: b - m for n, m, b in cert.checks}
    assert slack["psi2 <= kappa_S max|1-a0/a_l| a_l"] >= 0
    assert slack["psi3 <= kappa_S max b_l"] >= 0


def test_certificate_strict_ratios_fail_at_feasible_delta():
    cfg = select_parameters(QEUE, 0.2, 0.01, 1.0, 1.0, delta=0.05)
    cfg = EstimationConfig.from_json({**cfg.to_json(), "mode": STRICT})
    gm = generate(JordanSpec(((1, 1),), 1.0, 0))
    with pytest.raises(CertificateFailed):
        state_error_certificate(_state(gm, cfg, [1]), cfg)


# ---------------------------------------------------------------- readout


def test_readout_on_grid_eigenphase():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, delta=0.001, a=12)
    gm = generate(JordanSpec(((1j, 1),), 1.0, 0))
    rs = _state(gm, cfg, [1])
    rep = readout(rs, cfg, 1000, rng_seed=3)
    m = rep.modal[0]
    assert m["j"] == 1024 and m["t_hat"] == 0.25
    assert abs(m["value"] - 1j) < 1e-15
    c = success_masses(rs, cfg, check_hypotheses=False).components[0]
    b2 = c.b**2 / c.full_norm_sq
    assert rep.empirical_failure <= b2 + 3 * math.sqrt(b2 * (1 - b2) / 1000) + 1e-12
    assert rep.exact_failure == pytest.approx(b2, rel=1e-9)


def test_readout_symmetric_pair():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, delta=0.001, a=12)
    gm = generate(JordanSpec(((1, 1), (-1, 1)), 1.0, 0))
    rep = readout(_state(gm, cfg, [1, 1]), cfg, 2000, rng_seed=1)
    assert rep.modal[0]["t_hat"] == 0.0 and rep.modal[1]["t_hat"] == 0.5
    assert rep.modal[0]["count"] / 2000 == pytest.approx(0.5, abs=0.05)
    for e in rep.estimates:
        if e.in_window:
            assert e.param_error <= cfg.epsilon


def test_readout_segment_modes():
    gm = generate(JordanSpec(((0.5, 1), (-0.5, 1)), 1.0, 0))
    cfg = select_parameters(QERE, 0.1, 0.1, 1.0, 0.5, delta=0.01, a=14)
    rep = readout(_state(gm, cfg, [1, 1]), cfg, 2000, rng_seed=2)
    for l, t_star in ((0, 11 / 12), (1, 1 / 12)):
        ts = np.repeat([e.t_hat for e in rep.estimates if e.attributed == l],
                       [e.count for e in rep.estimates if e.attributed == l])
        assert ts.size == pytest.approx(1000, abs=100)
        assert np.median(ts) == pytest.approx(t_star, abs=1e-3)
        assert rep.modal[l]["param_error"] <= cfg.epsilon


def test_readout_is_deterministic():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, delta=0.01, a=10)
    gm = generate(JordanSpec(((1, 1), (0.4j, 1)), 3.0, 1, targets=(0,)))
    rs = _state(gm, cfg, [1])
    assert readout(rs, cfg, 500, 9).to_json() == readout(rs, cfg, 500, 9).to_json()


# ---------------------------------------------------------------- baseline and cost


def test_baseline_examples():
    gm = generate(JordanSpec(((0.5, 1), (-0.5, 1)), 1.0, 0))
    assert baseline_expectation(gm, 0) == pytest.approx(0.5)
    est = baseline_expectation(gm, 0, 1e-3, seed=5)
    assert abs(est - 0.5) <= 1e-3 + 1e-6
    assert abs(est - 0.5) <= baseline_error_bound(0.5, 1e-3)
    gm = generate(JordanSpec(((0.3, 1), (-0.6, 1)), 10.0, 4))
    assert baseline_expectation(gm, 0) == pytest.approx(0.3, abs=1e-9)


def test_cost_examples():
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0)
    assert cost_score(cfg, 1.0, 1.0, 1.0) == pytest.approx(2302.585, rel=1e-6)
    near_one = select_parameters(QEUE, 0.1, 0.999, 1.0, 1.0)
    assert cost_score(near_one, 1.0, 1.0, 1.0) < 0.2 and cost_is_degenerate(near_one)
    # kappa (1 - delta^2) / (delta (1 - delta)) at distance delta; 101 is the (1/delta)^(d-1) form
    K = 0.01 * resolvent_norm_bound(1.0, 2, 0.01)
    assert K == pytest.approx(101.0)
    assert jordan_kreiss_bound(1.0, 2, 0.01) == pytest.approx(101.0)
    assert cost_score(cfg, 1.0, K, 1.0) == pytest.approx(101.0 * 2302.585, rel=1e-6)


def test_run_pipeline_end_to_end():
    gm = generate(JordanSpec(((1, 1), (-1, 1)), 2.0, 0))
    cfg = select_parameters(QEUE, 0.4, 0.1, gm.kappa_S, gm.alpha, delta=0.1)
    rep = run_pipeline(gm, cfg, [1, 1], n_samples=500, seed=1)
    assert rep.success.hypotheses_met and not rep.success.violations()
    assert rep.certificate.passed
    assert rep.kreiss_value > 0 and rep.cost > 0
    assert {round(abs(rep.modal_value(l)), 6) for l in rep.modal} == {1.0}
    assert "wall_time" not in rep.to_json()
    per = run_pipeline(gm, cfg, [1, 1], n_samples=500, seed=1, perturb=True)
    assert per.to_json()["perturbed"]
