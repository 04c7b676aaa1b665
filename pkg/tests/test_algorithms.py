import numpy as np
import pytest

from oracles.hand_numbers import CATALYST_BETA, CATALYST_ZETA
from utils.algorithms import (
    ALGORITHM_PARAMETERS,
    AlgorithmConfig,
    AsgdOperator,
    AsvrgOperator,
    CatalystOperator,
    HsagOperator,
    SagaOperator,
    SgdOracleOperator,
    SgdProxOperator,
    SvrgOperator,
    make_operator,
    variance_reduced_step,
)
from utils.exceptions import ConfigurationError, ParameterError
from utils.operators import LiftedState, RandomnessDraw, step
from utils.problems import NoisyOracle, generate_nonlinear, generate_quadratic

VARIANCE_REDUCED = [
    {"kind": "saga", "eta": 0.1, "b": 0.02},
    {"kind": "svrg", "eta": 0.1, "M": 5},
    {"kind": "svrg", "eta": 0.1, "M": 5, "epoch_law": "geometric"},
    {"kind": "asvrg", "eta": 0.1, "theta": 0.5, "M": 4},
    {"kind": "hsag", "eta": 0.1, "S": [0, 2], "b": 0.02, "M": 3},
]


def epoch_draw(indices):
    return RandomnessDraw(
        epoch_length=len(indices), inner=tuple(RandomnessDraw(indices=np.array([n])) for n in indices)
    )


def test_algorithm_config_validation():
    config = AlgorithmConfig.from_dict({"kind": "svrg", "eta": 0.1, "M": 5})
    assert config.get("epoch_law") == "fixed"
    assert config.to_dict()["M"] == 5
    with pytest.raises(ConfigurationError):
        AlgorithmConfig.from_dict({"kind": "svrg", "eta": 0.1})
    with pytest.raises(ConfigurationError):
        AlgorithmConfig.from_dict({"kind": "saga", "eta": 0.1, "b": 0.02, "M": 3})
    with pytest.raises(ConfigurationError):
        AlgorithmConfig.from_dict({"kind": "adam", "eta": 0.1})
    with pytest.raises(ConfigurationError):
        AlgorithmConfig.from_dict({"kind": "saga", "b": 0.02})


def test_every_kind_has_a_factory(quadratic_problem):
    samples = {
        "sgd_oracle": {"noise_bound": 0.5},
        "sgd_prox": {},
        "asgd": {"alpha": 0.2, "beta": 0.3},
        "saga": {"b": 0.02},
        "svrg": {"M": 3},
        "asvrg": {"theta": 0.5, "M": 3},
        "hsag": {"S": [1], "b": 0.02, "M": 3},
        "catalyst": {"theta": 3.0, "alpha": 0.4},
    }
    assert set(samples) == set(ALGORITHM_PARAMETERS)
    for kind, params in samples.items():
        operator = make_operator(dict(params, kind=kind, eta=0.1), quadratic_problem)
        assert operator.name == kind
        assert operator.describe()["name"] == kind


def test_quadratic_only_kinds_reject_nonlinear_problems(nonlinear_problem):
    with pytest.raises(ConfigurationError):
        make_operator({"kind": "sgd_oracle", "eta": 0.1}, nonlinear_problem)
    with pytest.raises(ConfigurationError):
        make_operator({"kind": "asgd", "eta": 0.1, "alpha": 0.1, "beta": 0.1}, nonlinear_problem)


@pytest.mark.parametrize("config", VARIANCE_REDUCED)
@pytest.mark.parametrize("family", ["quadratic", "nonlinear"])
def test_optimizer_lifting_is_an_exact_fixed_point(config, family):
    if family == "quadratic":
        problem = generate_quadratic(d=3, N=5, c=1.0, L=2.0, seed=21)
    else:
        problem = generate_nonlinear(d=3, N=5, c=1.0, L=2.0, seed=21)
    operator = make_operator(config, problem)
    s_star = operator.fixed_point()
    rng = np.random.default_rng(0)
    for k in range(1000):
        assert step(operator, s_star, operator.sample_draw(rng, k)).same_as(s_star)


@pytest.mark.parametrize("config", VARIANCE_REDUCED)
def test_composite_fixed_point_holds_to_certification_tolerance(config, l1_problem):
    operator = make_operator(config, l1_problem)
    s_star = operator.fixed_point()
    rng = np.random.default_rng(1)
    for k in range(100):
        result = step(operator, s_star, operator.sample_draw(rng, k))
        np.testing.assert_allclose(result.flat(), s_star.flat(), rtol=0, atol=1e-9)


def test_hsag_with_every_component_is_saga(quadratic_problem, rng):
    N, d = quadratic_problem.N, quadratic_problem.d
    saga = SagaOperator(quadratic_problem, 0.1, 0.02)
    hsag = HsagOperator(quadratic_problem, 0.1, range(N), 0.02, 1)
    for _ in range(100):
        state = LiftedState(x=rng.standard_normal(d), proxies=rng.standard_normal((N, d)))
        n = int(rng.integers(N))
        expected = step(saga, state, RandomnessDraw(indices=np.array([n])))
        assert step(hsag, state, epoch_draw([n])).same_as(expected)


def test_hsag_with_empty_set_is_svrg(nonlinear_problem, rng):
    N, d = nonlinear_problem.N, nonlinear_problem.d
    svrg = SvrgOperator(nonlinear_problem, 0.1, 3)
    hsag = HsagOperator(nonlinear_problem, 0.1, [], 0.02, 3)
    for _ in range(100):
        state = LiftedState(x=rng.standard_normal(d))
        draw = epoch_draw([int(n) for n in rng.integers(N, size=3)])
        assert step(hsag, state, draw).same_as(step(svrg, state, draw))


def test_hsag_refreshes_only_components_outside_the_set(quadratic_problem, rng):
    d = quadratic_problem.d
    hsag = HsagOperator(quadratic_problem, 0.1, [3, 1], 0.02, 2)
    assert hsag.S == [1, 3]
    state = LiftedState(x=rng.standard_normal(d), proxies=rng.standard_normal((2, d)))
    first_iterate = step(hsag, state, epoch_draw([0])).x
    result = step(hsag, state, epoch_draw([0, 1]))
    # component 1 stores the iterate it was sampled at, component 3 keeps its proxy
    np.testing.assert_array_equal(result.proxies[0], first_iterate)
    np.testing.assert_array_equal(result.proxies[1], state.proxies[1])


@pytest.mark.parametrize("name", ["quadratic_problem", "nonlinear_problem"])
def test_variance_reduced_estimators_are_unbiased_over_the_index(name, request, rng):
    problem = request.getfixturevalue(name)
    N, d, eta = problem.N, problem.d, 0.1
    for _ in range(20):
        x = rng.standard_normal(d)
        expected = x - eta * problem.full_gradient(x)

        anchor = rng.standard_normal(d)
        anchor_gradient = problem.full_gradient(anchor)
        svrg_steps = [variance_reduced_step(problem, eta, x, n, anchor, anchor_gradient) for n in range(N)]
        np.testing.assert_allclose(np.mean(svrg_steps, axis=0), expected, rtol=1e-12, atol=1e-12)

        table = rng.standard_normal((N, d))
        table_gradient = problem.mean_gradient(table)
        saga_steps = [variance_reduced_step(problem, eta, x, n, table[n], table_gradient) for n in range(N)]
        np.testing.assert_allclose(np.mean(saga_steps, axis=0), expected, rtol=1e-12, atol=1e-12)


def test_asvrg_single_step_with_full_weight_is_an_svrg_step(quadratic_problem, rng):
    asvrg = AsvrgOperator(quadratic_problem, 0.1, 1.0, 1)
    svrg = SvrgOperator(quadratic_problem, 0.1, 1)
    for _ in range(20):
        state = LiftedState(x=rng.standard_normal(quadratic_problem.d))
        draw = epoch_draw([int(rng.integers(quadratic_problem.N))])
        np.testing.assert_allclose(step(asvrg, state, draw).x, step(svrg, state, draw).x, rtol=1e-12, atol=1e-15)


def test_asgd_without_momentum_is_oracle_sgd(quadratic_problem, rng):
    oracle = NoisyOracle(quadratic_problem, 1.0)
    asgd = AsgdOperator(quadratic_problem, 0.1, 0.0, 0.0, oracle)
    sgd = SgdOracleOperator(quadratic_problem, 0.1, oracle)
    for _ in range(50):
        x = rng.standard_normal(quadratic_problem.d)
        draw = asgd.sample_draw(rng)
        state = LiftedState(x=x, prev=rng.standard_normal(quadratic_problem.d))
        np.testing.assert_array_equal(step(asgd, state, draw).x, step(sgd, LiftedState(x=x), draw).x)


def test_asgd_keeps_the_optimizer_pair(quadratic_problem, rng):
    operator = AsgdOperator(quadratic_problem, 0.1, 0.2, 0.3, NoisyOracle(quadratic_problem, 0.0))
    s_star = operator.fixed_point()
    assert step(operator, s_star, operator.sample_draw(rng)).same_as(s_star)


def test_asgd_parameters_are_range_checked(quadratic_problem):
    oracle = NoisyOracle(quadratic_problem, 0.0)
    with pytest.raises(ParameterError):
        AsgdOperator(quadratic_problem, 0.1, 1.0, 0.3, oracle)


def test_prox_sgd_full_enumeration_is_the_prox_gradient_step(l1_problem, rng):
    operator = SgdProxOperator(l1_problem, 0.2, full_enumeration=True)
    x = rng.standard_normal(l1_problem.d)
    result = step(operator, LiftedState(x=x), operator.sample_draw(rng))
    np.testing.assert_array_equal(result.x, l1_problem.prox_gradient_step(x, 0.2))


def test_prox_sgd_on_one_component_is_the_exact_step(scalar_problem):
    operator = SgdProxOperator(scalar_problem, 0.25)
    result = step(operator, LiftedState(x=[1.0]), RandomnessDraw(indices=np.array([0])))
    assert result.x[0] == pytest.approx(0.5)


def test_prox_sgd_minibatch_averages_components(quadratic_problem, rng):
    operator = SgdProxOperator(quadratic_problem, 0.1, batch=2)
    x = rng.standard_normal(quadratic_problem.d)
    result = step(operator, LiftedState(x=x), RandomnessDraw(indices=np.array([0, 3])))
    gradient = 0.5 * (quadratic_problem.component_gradient(0, x) + quadratic_problem.component_gradient(3, x))
    np.testing.assert_allclose(result.x, x - 0.1 * gradient, rtol=1e-14)


def test_catalyst_schedule_is_constant_at_the_fixed_point(nonlinear_problem):
    operator = CatalystOperator(nonlinear_problem, 0.2, 3.0, 0.4)
    schedule = operator.schedule(5)
    np.testing.assert_array_equal(schedule.zetas, np.full(6, CATALYST_ZETA))
    assert schedule.betas[0] == 0.0
    np.testing.assert_allclose(schedule.betas[1:], CATALYST_BETA, rtol=1e-15)


def test_catalyst_rejects_alpha_above_sqrt_q(nonlinear_problem):
    with pytest.raises(ParameterError):
        CatalystOperator(nonlinear_problem, 0.2, 3.0, 0.6)


def test_catalyst_keeps_the_optimizer_pair(nonlinear_problem):
    operator = CatalystOperator(nonlinear_problem, 0.2, 3.0, 0.4)
    s_star = operator.fixed_point()
    assert step(operator, s_star, RandomnessDraw(k=0)).same_as(s_star)


def test_catalyst_prepare_uses_the_smaller_gap(nonlinear_problem):
    operator = CatalystOperator(nonlinear_problem, 0.2, 3.0, 0.4)
    x_star = nonlinear_problem.x_star
    near = operator.initial_state(x_star + 0.1)
    far = operator.initial_state(x_star + 2.0)
    prepared = operator.prepare((far, near))
    assert prepared.initial_gap == pytest.approx(nonlinear_problem.value(near.x) - nonlinear_problem.optimal_value)
    assert prepared.tolerance(0) == pytest.approx(2.0 / 9.0 * prepared.initial_gap)


def test_catalyst_inner_solver_meets_its_tolerance(nonlinear_problem):
    operator = CatalystOperator(nonlinear_problem, 0.2, 3.0, 0.4)
    center = nonlinear_problem.x_star + 1.0
    point, gap_bound, iterations = operator.solve_inner(center, center.copy(), 1e-10)
    assert gap_bound <= 1e-10
    assert iterations < operator.inner_max_iterations


def test_catalyst_steps_contract_towards_the_optimizer(nonlinear_problem):
    x0 = nonlinear_problem.x_star + 1.5
    start_gap = nonlinear_problem.value(x0) - nonlinear_problem.optimal_value
    operator = CatalystOperator(nonlinear_problem, 0.2, 3.0, 0.4, initial_gap=start_gap)
    state = operator.initial_state(x0)
    for k in range(20):
        state = step(operator, state, RandomnessDraw(k=k))
    assert nonlinear_problem.value(state.x) - nonlinear_problem.optimal_value < 1e-2 * start_gap


def test_epoch_parameters_are_validated(quadratic_problem):
    with pytest.raises(ParameterError):
        SvrgOperator(quadratic_problem, 0.1, 0)
    with pytest.raises(ParameterError):
        SvrgOperator(quadratic_problem, 0.1, 3, "poisson")
    with pytest.raises(ParameterError):
        HsagOperator(quadratic_problem, 0.1, [quadratic_problem.N], 0.02, 3)
    with pytest.raises(ParameterError):
        AsvrgOperator(quadratic_problem, 0.1, 0.0, 3)


def test_geometric_epochs_respect_the_cap(quadratic_problem):
    operator = SvrgOperator(quadratic_problem, 0.1, 4, "geometric")
    rng = np.random.default_rng(3)
    lengths = [operator.sample_draw(rng).epoch_length for _ in range(5000)]
    assert min(lengths) >= 1
    assert max(lengths) <= 40
    assert np.mean(lengths) == pytest.approx(4.0, rel=0.1)


def test_saga_reaches_the_composite_optimizer(l1_problem):
    operator = make_operator({"kind": "saga", "eta": 0.1, "b": 0.02}, l1_problem)
    state = operator.initial_state(np.ones(l1_problem.d))
    rng = np.random.default_rng(4)
    for k in range(500):
        state = step(operator, state, operator.sample_draw(rng, k))
    np.testing.assert_allclose(state.x, l1_problem.x_star, atol=1e-6)
