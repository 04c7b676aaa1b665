"""
Operator factories for the recursive stochastic algorithms

SGD with a noisy oracle, proximal SGD, ASGD, SAGA, SVRG, ASVRG, HSAG and
Catalyst, each as a random operator on its own lifted state space.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from utils.exceptions import ConfigurationError, ParameterError
from utils.operators import EpochOperator, LiftedState, RandomnessDraw, RandomOperator
from utils.problems import NOISE_UNIFORM_BALL, NoisyOracle
from utils.rates import catalyst_schedule

logger = logging.getLogger(__name__)

SGD_ORACLE = "sgd_oracle"
SGD_PROX = "sgd_prox"
ASGD = "asgd"
SAGA = "saga"
SVRG = "svrg"
ASVRG = "asvrg"
HSAG = "hsag"
CATALYST = "catalyst"

NOISE_PARAMETERS = {"noise_bound": 0.0, "noise_law": NOISE_UNIFORM_BALL, "noise_sigma": None}

# kind -> (required parameters, optional parameters with defaults)
ALGORITHM_PARAMETERS = {
    SGD_ORACLE: ((), dict(NOISE_PARAMETERS)),
    SGD_PROX: ((), {"batch": 1, "full_enumeration": False}),
    ASGD: (("alpha", "beta"), dict(NOISE_PARAMETERS)),
    SAGA: (("b",), {}),
    SVRG: (("M",), {"epoch_law": "fixed", "kappa": None, "bound": "general"}),
    ASVRG: (("theta", "M"), {"epoch_law": "fixed"}),
    HSAG: (("S", "b", "M"), {}),
    CATALYST: (("theta", "alpha"), {"inner_solver": "prox_gradient", "inner_max_iterations": 10000}),
}


@dataclass
class AlgorithmConfig:
    """Algorithm kind, step size and kind-specific parameters"""

    kind: str
    eta: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ALGORITHM_PARAMETERS:
            raise ConfigurationError(
                f"Unknown algorithm kind: {self.kind}. Available: {', '.join(ALGORITHM_PARAMETERS)}"
            )
        required, optional = ALGORITHM_PARAMETERS[self.kind]
        unknown = sorted(set(self.params) - set(required) - set(optional))
        if unknown:
            raise ConfigurationError(f"Unknown parameters for {self.kind}: {unknown}")
        missing = [name for name in required if name not in self.params]
        if missing:
            raise ConfigurationError(f"Missing parameters for {self.kind}: {missing}")
        merged = dict(optional)
        merged.update(self.params)
        self.params = merged
        self.eta = float(self.eta)

    @classmethod
    def from_dict(cls, data):
        """
        Parse {"kind": ..., "eta": ..., <parameters>}

        Args:
            data (dict): Algorithm section of an experiment config

        Returns:
            AlgorithmConfig: Validated config
        """
        data = dict(data)
        if "kind" not in data or "eta" not in data:
            raise ConfigurationError("Algorithm config needs 'kind' and 'eta'")
        kind = data.pop("kind")
        eta = data.pop("eta")
        return cls(kind=kind, eta=eta, params=data)

    def get(self, name):
        return self.params[name]

    def to_dict(self):
        payload = {"kind": self.kind, "eta": self.eta}
        payload.update(self.params)
        return payload


def _oracle_from_params(problem, params):
    return NoisyOracle(problem, params["noise_bound"], params["noise_law"], params["noise_sigma"])


def _require_quadratic(problem, kind):
    if not problem.is_quadratic:
        raise ConfigurationError(f"{kind} is defined for quadratic problems only")


def variance_reduced_step(problem, eta, x, index, anchor_point, mean_gradient):
    """
    prox_{eta g}(x - eta (grad f_I(x) - grad f_I(anchor) + mean_gradient))

    Shared by SAGA, SVRG and HSAG so that their updates agree bit for bit
    whenever their inputs do.
    """
    direction = problem.component_gradient(index, x) - problem.component_gradient(index, anchor_point) + mean_gradient
    return problem.prox(eta, x - eta * direction)


class SgdOracleOperator(RandomOperator):
    """x - eta [grad f(x) + eps] with bounded zero-mean noise"""

    name = SGD_ORACLE

    def __init__(self, problem, eta, oracle):
        _require_quadratic(problem, SGD_ORACLE)
        super().__init__(problem, eta)
        self.oracle = oracle

    def sample_draw(self, rng, k=0):
        return RandomnessDraw(noise=self.oracle.sample(rng), k=k)

    def apply(self, state, draw):
        x = state.x
        gradient = self.problem.anchored_full_gradient(x)
        if draw.noise is not None:
            gradient = gradient + draw.noise
        return LiftedState(x=x - self.eta * gradient)

    def describe(self):
        return {"name": self.name, "eta": self.eta, "noise": self.oracle.to_dict()}


class SgdProxOperator(RandomOperator):
    """prox_{eta g}(x - eta (1/J) sum_j grad f_{I_j}(x))"""

    name = SGD_PROX

    def __init__(self, problem, eta, batch=1, full_enumeration=False):
        super().__init__(problem, eta)
        if int(batch) < 1:
            raise ParameterError(f"Batch size must be at least 1, got {batch}")
        self.batch = int(batch)
        self.full_enumeration = bool(full_enumeration)

    def sample_draw(self, rng, k=0):
        if self.full_enumeration:
            return RandomnessDraw(indices=np.arange(self.problem.N), k=k)
        return RandomnessDraw(indices=rng.integers(self.problem.N, size=self.batch), k=k)

    def apply(self, state, draw):
        x = state.x
        if self.full_enumeration:
            gradient = self.problem.full_gradient(x)
        elif len(draw.indices) == 1:
            gradient = self.problem.component_gradient(int(draw.indices[0]), x)
        else:
            gradient = np.mean([self.problem.component_gradient(int(n), x) for n in draw.indices], axis=0)
        return LiftedState(x=self.problem.prox(self.eta, x - self.eta * gradient))

    def describe(self):
        return {"name": self.name, "eta": self.eta, "batch": self.batch, "full_enumeration": self.full_enumeration}


class AsgdOperator(RandomOperator):
    """
    x_{k+1} = (1 + beta) x_k - beta x_{k-1} - eta [grad f(y_k) + eps]
    with y_k = (1 + alpha) x_k - alpha x_{k-1}

    Evaluated as x + beta (x - prev) so the pair (x*, x*) is kept exactly.
    """

    name = ASGD

    def __init__(self, problem, eta, alpha, beta, oracle):
        _require_quadratic(problem, ASGD)
        super().__init__(problem, eta)
        for label, value in (("alpha", alpha), ("beta", beta)):
            if not 0 <= value < 1:
                raise ParameterError(f"ASGD {label} must lie in [0, 1), got {value}")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.oracle = oracle

    def initial_state(self, x0):
        x0 = np.asarray(x0, dtype=float)
        return LiftedState(x=x0.copy(), prev=x0.copy())

    def sample_draw(self, rng, k=0):
        return RandomnessDraw(noise=self.oracle.sample(rng), k=k)

    def apply(self, state, draw):
        x, prev = state.x, state.prev
        velocity = x - prev
        y = x + self.alpha * velocity
        gradient = self.problem.anchored_full_gradient(y)
        if draw.noise is not None:
            gradient = gradient + draw.noise
        return LiftedState(x=x + self.beta * velocity - self.eta * gradient, prev=x)

    def check_state(self, state):
        super().check_state(state)
        if state.prev is None:
            raise ConfigurationError("ASGD states carry the previous iterate")

    def closed_loop_hessian(self):
        return self.problem.Q_mean

    def describe(self):
        return {"name": self.name, "eta": self.eta, "alpha": self.alpha, "beta": self.beta,
                "noise": self.oracle.to_dict()}


class SagaOperator(RandomOperator):
    """Joint update of x and the proxy table phi (row I_k replaced by x_k)"""

    name = SAGA
    variance_reduced = True

    def __init__(self, problem, eta, b):
        super().__init__(problem, eta)
        if not b > 0:
            raise ParameterError(f"SAGA weight b must be positive, got {b}")
        self.b = float(b)

    def initial_state(self, x0):
        x0 = np.asarray(x0, dtype=float)
        return LiftedState(x=x0.copy(), proxies=np.tile(x0, (self.problem.N, 1)))

    def sample_draw(self, rng, k=0):
        return RandomnessDraw(indices=np.array([self.sample_index(rng)]), k=k)

    def check_state(self, state):
        super().check_state(state)
        if state.proxies is None or state.proxies.shape[0] != self.problem.N:
            raise ConfigurationError(f"SAGA states carry a proxy table with {self.problem.N} rows")

    def apply(self, state, draw):
        index = int(draw.indices[0])
        table = state.proxies
        x_next = variance_reduced_step(
            self.problem, self.eta, state.x, index, table[index], self.problem.anchored_mean_gradient(table)
        )
        next_table = table.copy()
        next_table[index] = state.x
        return LiftedState(x=x_next, proxies=next_table)

    def describe(self):
        return {"name": self.name, "eta": self.eta, "b": self.b}


@dataclass(frozen=True)
class EpochInner:
    """Inner state of an epoch with the anchor's full gradient"""

    state: LiftedState
    anchor_gradient: np.ndarray = None


class SvrgOperator(EpochOperator):
    """Inner step x - eta (grad f_I(x) - grad f_I(x_k) + grad f(x_k)), projected to x"""

    name = SVRG
    variance_reduced = True

    def __init__(self, problem, eta, M, epoch_law="fixed"):
        super().__init__(problem, eta, M, epoch_law)

    def init_inner(self, state):
        return EpochInner(state=LiftedState(x=state.x), anchor_gradient=self.problem.anchored_full_gradient(state.x))

    def inner_step(self, inner, anchor, draw):
        index = int(draw.indices[0])
        x_next = variance_reduced_step(self.problem, self.eta, inner.state.x, index, anchor.x, inner.anchor_gradient)
        return EpochInner(state=LiftedState(x=x_next), anchor_gradient=inner.anchor_gradient)

    def project(self, inner):
        return inner.state


class AsvrgOperator(EpochOperator):
    """
    Accelerated SVRG epoch on the inner pair (x~, y~), projected to x~

    y~ <- prox_{(eta/theta) g}(y~ - (eta/theta) v) with
    v = grad f_I(x~) - grad f_I(x_k) + grad f(x_k), then
    x~ <- x_k + theta (y~ - x_k); inner start x~ = y~ = x_k.
    """

    name = ASVRG
    variance_reduced = True

    def __init__(self, problem, eta, theta, M, epoch_law="fixed"):
        super().__init__(problem, eta, M, epoch_law)
        if not 0 < theta <= 1:
            raise ParameterError(f"ASVRG theta must lie in (0, 1], got {theta}")
        self.theta = float(theta)

    def init_inner(self, state):
        return EpochInner(
            state=LiftedState(x=state.x, prev=state.x),
            anchor_gradient=self.problem.anchored_full_gradient(state.x),
        )

    def inner_step(self, inner, anchor, draw):
        index = int(draw.indices[0])
        x_tilde, y_tilde = inner.state.x, inner.state.prev
        direction = (
            self.problem.component_gradient(index, x_tilde)
            - self.problem.component_gradient(index, anchor.x)
            + inner.anchor_gradient
        )
        scaled = self.eta / self.theta
        y_next = self.problem.prox(scaled, y_tilde - scaled * direction)
        x_next = anchor.x + self.theta * (y_next - anchor.x)
        return EpochInner(state=LiftedState(x=x_next, prev=y_next), anchor_gradient=inner.anchor_gradient)

    def project(self, inner):
        return LiftedState(x=inner.state.x)

    def describe(self):
        payload = super().describe()
        payload["theta"] = self.theta
        return payload


class HsagOperator(EpochOperator):
    """
    Hybrid SAGA/SVRG epoch

    Components in S keep SAGA proxies across epochs, the others are
    refreshed to x_k at every epoch start. The lifted state carries the
    proxies of S (row order = sorted S), or none when S is empty.
    """

    name = HSAG
    variance_reduced = True

    def __init__(self, problem, eta, S, b, M):
        super().__init__(problem, eta, M)
        S = sorted({int(n) for n in S})
        if any(n < 0 or n >= problem.N for n in S):
            raise ParameterError(f"HSAG index set must lie in [0, {problem.N})")
        if not b > 0:
            raise ParameterError(f"HSAG weight b must be positive, got {b}")
        self.S = S
        self.b = float(b)
        self._in_S = np.zeros(problem.N, dtype=bool)
        self._in_S[S] = True

    def initial_state(self, x0):
        x0 = np.asarray(x0, dtype=float)
        if not self.S:
            return LiftedState(x=x0.copy())
        return LiftedState(x=x0.copy(), proxies=np.tile(x0, (len(self.S), 1)))

    def check_state(self, state):
        super().check_state(state)
        rows = 0 if state.proxies is None else state.proxies.shape[0]
        if rows != len(self.S):
            raise ConfigurationError(f"HSAG states carry {len(self.S)} proxy rows, got {rows}")

    def init_inner(self, state):
        table = np.tile(state.x, (self.problem.N, 1))
        if self.S:
            table[self.S] = state.proxies
        return EpochInner(state=LiftedState(x=state.x, proxies=table))

    def inner_step(self, inner, anchor, draw):
        index = int(draw.indices[0])
        table = inner.state.proxies
        x = inner.state.x
        mean_gradient = self.problem.anchored_mean_gradient(table)
        x_next = variance_reduced_step(self.problem, self.eta, x, index, table[index], mean_gradient)
        if self._in_S[index]:
            table = table.copy()
            table[index] = x
        return EpochInner(state=LiftedState(x=x_next, proxies=table))

    def project(self, inner):
        if not self.S:
            return LiftedState(x=inner.state.x)
        return LiftedState(x=inner.state.x, proxies=inner.state.proxies[self.S])

    def describe(self):
        payload = super().describe()
        payload.update({"S": self.S, "b": self.b})
        return payload


class CatalystOperator(RandomOperator):
    """
    Catalyst outer step T_k(s_k) = (x_{k+1}, x_k)

    x_{k+1} approximately minimizes psi_k(x) = f(x) + g(x) + (theta/2)||x - y_k||^2
    with y_k = x_k + beta_k (x_k - x_{k-1}), using deterministic proximal
    gradient with step 1/(L + theta) warm-started at x_k. The inner loop
    stops once ||G||^2 / (2 (c + theta)) <= eps_k, G the gradient mapping.
    """

    name = CATALYST

    def __init__(self, problem, eta, theta, alpha, inner_max_iterations=10000, initial_gap=None):
        super().__init__(problem, eta)
        if not theta > 0:
            raise ParameterError(f"Catalyst theta must be positive, got {theta}")
        self.theta = float(theta)
        self.alpha = float(alpha)
        self.inner_max_iterations = int(inner_max_iterations)
        self.initial_gap = initial_gap
        catalyst_schedule(problem.c, self.theta, self.alpha, 0)

    def initial_state(self, x0):
        x0 = np.asarray(x0, dtype=float)
        return LiftedState(x=x0.copy(), prev=x0.copy())

    def prepare(self, states):
        """Share eps_k between chains: use the smaller initial optimality gap"""
        optimum = self.problem.optimal_value
        gaps = [max(0.0, self.problem.value(state.x) - optimum) for state in states]
        return CatalystOperator(
            self.problem, self.eta, self.theta, self.alpha, self.inner_max_iterations, initial_gap=min(gaps)
        )

    def sample_draw(self, rng, k=0):
        return RandomnessDraw(k=k)

    def check_state(self, state):
        super().check_state(state)
        if state.prev is None:
            raise ConfigurationError("Catalyst states carry the previous iterate")

    def schedule(self, k):
        return catalyst_schedule(self.problem.c, self.theta, self.alpha, k)

    def tolerance(self, k):
        if self.initial_gap is None:
            return 0.0
        return float(self.schedule(k).epsilons(self.initial_gap)[k])

    def solve_inner(self, center, start, epsilon):
        """
        Approximate argmin of f + g + (theta/2)||. - center||^2

        Returns:
            tuple: (point, certified gap bound, iterations)
        """
        step_size = 1.0 / (self.problem.L + self.theta)
        strong_convexity = self.problem.c + self.theta
        x = start
        gap_bound = np.inf
        for iteration in range(1, self.inner_max_iterations + 1):
            gradient = self.problem.anchored_full_gradient(x) + self.theta * (x - center)
            x_next = self.problem.prox(step_size, x - step_size * gradient)
            mapping = (x - x_next) / step_size
            gap_bound = float(np.dot(mapping, mapping)) / (2.0 * strong_convexity)
            if gap_bound <= epsilon or np.array_equal(x_next, x):
                return x_next, gap_bound, iteration
            x = x_next
        logger.warning(
            f"Catalyst inner solver hit {self.inner_max_iterations} iterations (gap bound {gap_bound:.3e}, target {epsilon:.3e})"
        )
        return x, gap_bound, self.inner_max_iterations

    def apply(self, state, draw):
        k = draw.k
        beta = float(self.schedule(k).betas[k])
        center = state.x + beta * (state.x - state.prev)
        x_next, _, _ = self.solve_inner(center, state.x, self.tolerance(k))
        return LiftedState(x=x_next, prev=state.x)

    def describe(self):
        return {"name": self.name, "theta": self.theta, "alpha": self.alpha,
                "inner_solver": "prox_gradient", "inner_max_iterations": self.inner_max_iterations}


def make_sgd_oracle(config, problem):
    return SgdOracleOperator(problem, config.eta, _oracle_from_params(problem, config.params))


def make_sgd_prox(config, problem):
    return SgdProxOperator(problem, config.eta, config.get("batch"), config.get("full_enumeration"))


def make_asgd(config, problem):
    return AsgdOperator(
        problem, config.eta, config.get("alpha"), config.get("beta"), _oracle_from_params(problem, config.params)
    )


def make_saga(config, problem):
    return SagaOperator(problem, config.eta, config.get("b"))


def make_svrg(config, problem):
    return SvrgOperator(problem, config.eta, config.get("M"), config.get("epoch_law"))


def make_asvrg(config, problem):
    return AsvrgOperator(problem, config.eta, config.get("theta"), config.get("M"), config.get("epoch_law"))


def make_hsag(config, problem):
    return HsagOperator(problem, config.eta, config.get("S"), config.get("b"), config.get("M"))


def make_catalyst(config, problem):
    if config.get("inner_solver") != "prox_gradient":
        raise ConfigurationError(f"Unsupported Catalyst inner solver: {config.get('inner_solver')}")
    return CatalystOperator(
        problem, config.eta, config.get("theta"), config.get("alpha"), config.get("inner_max_iterations")
    )


FACTORIES = {
    SGD_ORACLE: make_sgd_oracle,
    SGD_PROX: make_sgd_prox,
    ASGD: make_asgd,
    SAGA: make_saga,
    SVRG: make_svrg,
    ASVRG: make_asvrg,
    HSAG: make_hsag,
    CATALYST: make_catalyst,
}


def make_operator(config, problem):
    """
    Build the operator for an algorithm config

    Args:
        config (AlgorithmConfig | dict): Algorithm config
        problem (FiniteSumProblem): Problem with certified optimizer

    Returns:
        RandomOperator: The operator
    """
    if isinstance(config, dict):
        config = AlgorithmConfig.from_dict(config)
    try:
        operator = FACTORIES[config.kind](config, problem)
        logger.debug(f"Built operator {operator.describe()}")
        return operator
    except Exception as e:
        logger.error(f"Error building {config.kind} operator: {str(e)}")
        raise
