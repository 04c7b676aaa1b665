import math

import numpy as np
import pytest

from oracles.hand_numbers import (
    ASVRG_ALPHA,
    CATALYST_BETA,
    CATALYST_Q,
    ERROR_LIMIT,
    GAMMA_ORACLE_SGD,
    GAMMA_PROX_SGD,
    HSAG_ALPHA,
    HSAG_K,
    MARKOV_TAIL,
    SAGA_ALPHA,
    SAGA_BRANCHES,
    SVRG_QUADRATIC_ALPHA,
    SVRG_XI,
)
from utils.exceptions import InfeasibleParametersError, ParameterError
from utils.rates import (
    BOUND_CATALYST_ENVELOPE,
    BOUND_GEOMETRIC_PLUS_ERROR,
    asgd_certificate,
    asgd_closed_loop,
    asvrg_alpha,
    asvrg_certificate,
    catalyst_certificate,
    catalyst_envelope,
    catalyst_schedule,
    error_bounds,
    gamma,
    hsag_rates,
    markov_tail,
    next_zeta,
    saga_alpha,
    sgd_certificate,
    sgd_concentration_certificate,
    svrg_alpha_quadratic,
    svrg_certificate,
    svrg_expected_xi,
    svrg_quadratic_certificate,
    svrg_xi,
)


def test_gamma_examples():
    assert gamma(0.05, 0.5, 2.0) == pytest.approx(GAMMA_ORACLE_SGD)
    assert gamma(0.05, 0.5, 2.0) == pytest.approx(0.96)
    assert gamma(0.1, 1.0, 2.0) == pytest.approx(GAMMA_PROX_SGD)
    assert gamma(0.1, 1.0, 2.0) == pytest.approx(0.84)


def test_gamma_tends_to_one_for_small_steps():
    assert 1.0 - 1e-5 < gamma(1e-6, 1.0, 2.0) < 1.0


def test_gamma_decreases_in_c_and_increases_in_l():
    for eta in (0.01, 0.1, 0.3):
        moduli = np.linspace(0.1, 2.0, 20)
        by_c = [gamma(eta, c, 2.0) for c in moduli]
        assert all(later < earlier for earlier, later in zip(by_c, by_c[1:]))
        smoothness = np.linspace(1.0, 5.0, 20)
        by_l = [gamma(eta, 1.0, L) for L in smoothness]
        assert all(later > earlier for earlier, later in zip(by_l, by_l[1:]))


def test_gamma_rejects_invalid_inputs():
    with pytest.raises(ParameterError):
        gamma(0.0, 1.0, 2.0)
    with pytest.raises(ParameterError):
        gamma(0.1, 3.0, 2.0)


def test_sgd_certificate_is_feasible_below_2c_over_l_squared():
    assert sgd_certificate(0.1, 1.0, 2.0).feasible
    assert not sgd_certificate(0.6, 1.0, 2.0).feasible


def test_saga_example():
    certificate = saga_alpha(0.1, 0.02, 10, 1.0, 2.0)
    assert certificate.coefficient == pytest.approx(SAGA_ALPHA)
    assert certificate.coefficient == pytest.approx(0.95)
    np.testing.assert_allclose(certificate.details["branches"], SAGA_BRANCHES)
    assert certificate.feasible


def test_saga_needs_eta_squared_below_b():
    certificate = saga_alpha(0.1, 0.005, 10, 1.0, 2.0)
    assert not certificate.feasible
    failed = [condition.name for condition in certificate.conditions if not condition.passed]
    assert "eta^2 < b" in failed
    with pytest.raises(InfeasibleParametersError) as error:
        certificate.require_feasible()
    assert error.value.report["feasible"] is False


def test_saga_on_one_component_is_close_to_one_when_b_is_tight():
    certificate = saga_alpha(0.1, 0.0101, 1, 1.0, 2.0)
    assert certificate.details["branches"][1] == pytest.approx(0.01 / 0.0101)


def test_svrg_quadratic_example():
    assert svrg_alpha_quadratic(0.1, 1.0, 1.0, 100) == pytest.approx(SVRG_QUADRATIC_ALPHA)
    assert svrg_alpha_quadratic(0.1, 1.0, 1.0, 100) == pytest.approx(0.375)


def test_svrg_quadratic_needs_small_steps():
    with pytest.raises(InfeasibleParametersError):
        svrg_alpha_quadratic(0.25, 1.0, 2.0, 10)
    assert not svrg_quadratic_certificate(0.25, 1.0, 2.0, 10).feasible


def test_svrg_xi_example_and_edges():
    assert svrg_xi(0.5, 0.25, 2) == pytest.approx(SVRG_XI)
    assert svrg_xi(0.5, 0.25, 2) == pytest.approx(0.625)
    assert svrg_xi(0.5, 0.0, 3) == pytest.approx(0.125)
    assert svrg_xi(0.5, 0.25, 1) == pytest.approx(0.75)
    with pytest.raises(ParameterError):
        svrg_xi(0.5, 0.5, 2)


def test_svrg_xi_increases_with_kappa():
    for alpha in (0.3, 0.5, 0.9):
        for m in (1, 2, 7):
            kappas = np.linspace(0.0, 0.99 * (1.0 - alpha), 25)
            values = [svrg_xi(alpha, kappa, m) for kappa in kappas]
            assert all(later > earlier for earlier, later in zip(values, values[1:]))


def test_expected_xi_with_unit_mean_is_a_single_step():
    assert svrg_expected_xi(0.5, 0.25, 1) == pytest.approx(svrg_xi(0.5, 0.25, 1))
    expected = svrg_expected_xi(0.5, 0.25, 4)
    assert svrg_xi(0.5, 0.25, 40) < expected < svrg_xi(0.5, 0.25, 1)


def test_svrg_certificate_uses_gamma_and_kappa():
    certificate = svrg_certificate(0.1, 1.0, 2.0, 5)
    assert certificate.details["gamma"] == pytest.approx(0.84)
    assert certificate.details["kappa"] == pytest.approx(0.04)
    assert certificate.coefficient == pytest.approx(svrg_xi(0.84, 0.04, 5))
    assert certificate.feasible
    assert not svrg_certificate(0.1, 1.0, 2.0, 5, kappa=0.5).feasible


def test_asvrg_example():
    assert asvrg_alpha(0.1, 0.5, 10, 1.0) == pytest.approx(ASVRG_ALPHA)
    assert asvrg_alpha(0.1, 0.5, 10, 1.0) == pytest.approx(0.75)


def test_asvrg_boundary_is_infeasible():
    # theta = 1 and M c eta = 1 give alpha = 1 exactly
    certificate = asvrg_certificate(0.1, 1.0, 10, 1.0)
    assert certificate.coefficient == pytest.approx(1.0)
    assert not certificate.feasible


def test_hsag_example():
    certificate = hsag_rates(0.1, 0.02, 10, 5, 1.0, 2.0, 5)
    assert certificate.details["K"] == pytest.approx(HSAG_K)
    assert certificate.coefficient == pytest.approx(HSAG_ALPHA, abs=1e-12)
    assert certificate.coefficient == pytest.approx(0.86427, abs=5e-6)
    assert certificate.feasible


def test_hsag_with_every_component_is_the_saga_rate_per_step():
    certificate = hsag_rates(0.1, 0.02, 10, 10, 1.0, 2.0, 3)
    saga = saga_alpha(0.1, 0.02, 10, 1.0, 2.0).coefficient
    assert certificate.details["K"] == pytest.approx(saga)
    assert certificate.coefficient == pytest.approx(saga ** 3)


def test_catalyst_example():
    schedule = catalyst_schedule(1.0, 3.0, 0.4, 10)
    assert schedule.q == CATALYST_Q
    np.testing.assert_array_equal(schedule.zetas, np.full(11, 0.5))
    np.testing.assert_allclose(schedule.betas[1:], CATALYST_BETA)
    np.testing.assert_allclose(schedule.epsilons(9.0), 2.0 * 0.6 ** np.arange(11))
    assert next_zeta(0.5, 0.25) == pytest.approx(0.5)


def test_catalyst_zeta_recursion_from_another_start():
    schedule = catalyst_schedule(1.0, 3.0, 0.4, 3, zeta0=0.9)
    for k in range(1, 4):
        zeta, previous = schedule.zetas[k], schedule.zetas[k - 1]
        assert zeta ** 2 == pytest.approx((1.0 - zeta) * previous ** 2 + 0.25 * zeta)


@pytest.mark.parametrize("q", [0.01, 0.1, 0.25, 1.0 / 3.0, 0.5, 0.9])
def test_next_zeta_keeps_sqrt_q_exactly(q):
    assert next_zeta(math.sqrt(q), q) == math.sqrt(q)
    schedule = catalyst_schedule(1.0, 1.0 / q - 1.0, 0.5 * math.sqrt(q), 8, zeta0=math.sqrt(q) * (1.0 + 1e-15))
    np.testing.assert_array_equal(schedule.zetas[1:], np.full(8, math.sqrt(schedule.q)))


def test_catalyst_alpha_at_or_above_sqrt_q():
    with pytest.raises(ParameterError):
        catalyst_schedule(1.0, 3.0, 0.6, 5)
    assert not catalyst_certificate(1.0, 3.0, 0.6).feasible
    assert not catalyst_certificate(1.0, 3.0, 0.5).feasible


def test_catalyst_certificate_bound_is_the_envelope():
    certificate = catalyst_certificate(1.0, 3.0, 0.4)
    assert certificate.feasible
    assert certificate.bound_kind == BOUND_CATALYST_ENVELOPE
    assert certificate.bound(0, 1.0) == pytest.approx(16.0 / 0.01 * 0.6)
    assert certificate.bound(2, 2.0) == pytest.approx(2.0 * catalyst_envelope(0.25, 0.4, 2))


def test_error_bounds_examples():
    assert error_bounds(0.5, 0.1, 3.0, 200) == pytest.approx(ERROR_LIMIT)
    assert error_bounds(0.5, 0.0, 3.0, 4) == pytest.approx(3.0 / 16.0)
    assert error_bounds(0.5, 0.1, 3.0, 1) == pytest.approx(1.5 + 0.1)
    assert error_bounds(0.5, 0.1, 3.0, 0) == 3.0


def test_error_bounds_do_not_increase_above_the_limit():
    for alpha, eps in ((0.5, 0.1), (0.9, 0.01), (0.99, 0.001)):
        limit = eps / (1.0 - alpha)
        for v0 in (limit, 2.0 * limit, 100.0):
            values = [error_bounds(alpha, eps, v0, k) for k in range(200)]
            assert all(later <= earlier * (1 + 1e-12) for earlier, later in zip(values, values[1:]))
            assert values[-1] >= limit * (1 - 1e-12)


def test_markov_tail_examples():
    assert markov_tail(0.9, 0.01, 0.5) == pytest.approx(MARKOV_TAIL)
    assert markov_tail(0.9, 0.01, 0.5) == pytest.approx(0.2)
    assert markov_tail(0.9, 0.0, 0.5) == 0.0
    assert markov_tail(0.9, 0.01, math.inf) == 0.0
    with pytest.raises(ParameterError):
        markov_tail(0.9, 0.01, 0.0)


def test_concentration_certificate_carries_the_noise_floor():
    certificate = sgd_concentration_certificate(0.05, 0.5, 2.0, 0.6)
    assert certificate.bound_kind == BOUND_GEOMETRIC_PLUS_ERROR
    assert certificate.error == pytest.approx(0.05 ** 2 * 0.6)
    assert certificate.bound(0, 2.0) == 2.0
    assert certificate.bound(10 ** 4, 2.0) == pytest.approx(certificate.error / (1.0 - 0.96))


def test_certificate_report_lists_conditions():
    report = saga_alpha(0.1, 0.02, 10, 1.0, 2.0).to_json_dict()
    assert report["alpha"] == pytest.approx(0.95)
    assert report["feasible"] is True
    assert [condition["name"] for condition in report["conditions"]] == [
        "eta < c/L^2",
        "eta^2 < b",
        "gamma + b L^2 < 1",
    ]
    assert all(condition["slack"] > 0 for condition in report["conditions"])


def test_heavy_ball_certificate():
    Q = np.diag([1.0, 2.0])
    certificate = asgd_certificate(Q, 0.1, 0.0, 0.5)
    # both modes have complex roots of modulus sqrt(beta)
    assert certificate.details["spectral_radius"] ** 2 == pytest.approx(0.5)
    assert certificate.coefficient == pytest.approx(0.5 + 1e-6, abs=1e-9)
    P = np.array(certificate.details["P"])
    assert certificate.details["residual"] <= 1e-8 * np.linalg.norm(P, 2)


def test_asgd_certificate_contracts_the_lyapunov_form():
    Q = np.diag([1.0, 1.5, 2.0])
    certificate = asgd_certificate(Q, 0.1, 0.2, 0.3)
    rho = certificate.coefficient
    P = np.array(certificate.details["P"])
    M = asgd_closed_loop(Q, 0.1, 0.2, 0.3)
    rng = np.random.default_rng(8)

    def form(ds):
        return ds @ P @ ds + 0.5 * ds[:3] @ Q @ ds[:3]

    for _ in range(1000):
        ds = rng.standard_normal(6)
        assert form(M @ ds) <= rho * form(ds) * (1 + 1e-10)


def test_asgd_without_momentum_matches_gamma_order():
    Q = np.diag([1.0, 2.0])
    certificate = asgd_certificate(Q, 0.1, 0.0, 0.0)
    # max |1 - eta lambda|^2 over the spectrum
    assert certificate.coefficient == pytest.approx(0.81 + 1e-6)
    assert certificate.coefficient <= gamma(0.1, 1.0, 2.0) + 1e-6


def test_asgd_unstable_parameters_are_infeasible():
    with pytest.raises(InfeasibleParametersError):
        asgd_certificate(np.diag([1.0, 2.0]), 1.5, 0.0, 0.0)
