"""
Divergence functions on lifted state spaces

A divergence V is nonnegative, symmetric, zero exactly on the diagonal and
inf-compact. Concrete variants cover every algorithm of the package; Power,
Sum and PlusMetric build new divergences from existing ones.
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from utils.exceptions import ConfigurationError, ParameterError, ShapeError
from utils.operators import LiftedState

logger = logging.getLogger(__name__)

SPD_RELATIVE_TOLERANCE = 1e-10


def check_spd(matrix, name="matrix"):
    """
    Check a matrix is symmetric positive definite

    Uses the scale-invariant test min eig > 1e-10 * max eig.

    Args:
        matrix (numpy.ndarray): Square matrix
        name (str): Name used in error messages

    Returns:
        numpy.ndarray: Symmetrized copy of the matrix
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {matrix.shape}")
    scale = max(1.0, float(np.abs(matrix).max()))
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * scale):
        raise ParameterError(f"{name} must be symmetric")
    matrix = 0.5 * (matrix + matrix.T)
    eigenvalues = linalg.eigvalsh(matrix)
    if not eigenvalues[0] > SPD_RELATIVE_TOLERANCE * eigenvalues[-1] or eigenvalues[-1] <= 0:
        raise ParameterError(f"{name} is not positive definite (min eigenvalue {eigenvalues[0]:.3e})")
    return matrix


def _as_state(state):
    if isinstance(state, LiftedState):
        return state
    return LiftedState(x=np.atleast_1d(np.asarray(state, dtype=float)))


def _check_compatible(s1, s2):
    if s1.x.shape != s2.x.shape:
        raise ShapeError(f"Iterate shapes differ: {s1.x.shape} vs {s2.x.shape}")
    if (s1.prev is None) != (s2.prev is None):
        raise ShapeError("One state carries a previous iterate and the other does not")
    if (s1.proxies is None) != (s2.proxies is None):
        raise ShapeError("One state carries a proxy table and the other does not")
    if s1.proxies is not None and s1.proxies.shape != s2.proxies.shape:
        raise ShapeError(f"Proxy table shapes differ: {s1.proxies.shape} vs {s2.proxies.shape}")


class DivergenceSpec:
    """Base class: evaluate(s1, s2) with shape checks and the exact diagonal case"""

    name = "divergence"

    def __call__(self, s1, s2):
        return self.evaluate(s1, s2)

    def evaluate(self, s1, s2):
        """
        Evaluate V(s1, s2)

        Args:
            s1 (LiftedState): First state (arrays are promoted to x-only states)
            s2 (LiftedState): Second state

        Returns:
            float: Nonnegative divergence value, exactly 0 for identical states
        """
        s1 = _as_state(s1)
        s2 = _as_state(s2)
        _check_compatible(s1, s2)
        self._check_state(s1)
        if s1.same_as(s2):
            return 0.0
        return float(self._evaluate(s1, s2))

    def _check_state(self, state):
        pass

    def _evaluate(self, s1, s2):
        raise NotImplementedError

    def measured_part(self, state):
        """The coordinates of a lifted state this divergence reads"""
        return _as_state(state).flat()

    def reads_whole_state(self):
        return True

    def to_dict(self):
        return {"variant": self.name}


class SquaredEuclidean(DivergenceSpec):
    """||s1 - s2||^2 over the whole lifted state, or over the iterate only"""

    name = "squared_euclidean"

    def __init__(self, iterate_only=False):
        self.iterate_only = iterate_only

    def _evaluate(self, s1, s2):
        if self.iterate_only:
            delta = s1.x - s2.x
        else:
            delta = s1.flat() - s2.flat()
        return np.dot(delta, delta)

    def measured_part(self, state):
        state = _as_state(state)
        return state.x if self.iterate_only else state.flat()

    def reads_whole_state(self):
        return not self.iterate_only

    def to_dict(self):
        return {"variant": self.name, "iterate_only": self.iterate_only}


class WeightedQuadratic(DivergenceSpec):
    """(s1 - s2)^T Q (s1 - s2) on the flat state, or on x when Q matches the iterate"""

    name = "weighted_quadratic"

    def __init__(self, Q):
        self.Q = check_spd(Q, "WeightedQuadratic matrix")
        self.lambda_min = float(linalg.eigvalsh(self.Q)[0])

    def _delta(self, s1, s2):
        size = self.Q.shape[0]
        if s1.x.size == size:
            return s1.x - s2.x
        flat = s1.flat() - s2.flat()
        if flat.size == size:
            return flat
        raise ShapeError(f"Weight matrix of size {size} fits neither the iterate nor the lifted state")

    def _check_state(self, state):
        size = self.Q.shape[0]
        if state.x.size != size and state.flat().size != size:
            raise ShapeError(f"Weight matrix of size {size} fits neither the iterate nor the lifted state")

    def _evaluate(self, s1, s2):
        delta = self._delta(s1, s2)
        return max(0.0, float(delta @ (self.Q @ delta)))

    def measured_part(self, state):
        state = _as_state(state)
        return state.x if state.x.size == self.Q.shape[0] else state.flat()

    def reads_whole_state(self):
        return False

    def to_dict(self):
        return {"variant": self.name, "Q": self.Q.tolist()}


class SagaProxy(DivergenceSpec):
    """
    ||x - x'||^2 + b * sum_{n in S} ||grad f_n(phi_n) - grad f_n(phi'_n)||^2

    Row j of the proxy table belongs to component index_set[j]; the default
    index set is all N components (SAGA), a subset gives the HSAG form.
    """

    name = "saga_proxy"

    def __init__(self, b, problem, index_set=None):
        if not b > 0:
            raise ParameterError(f"SagaProxy weight b must be positive, got {b}")
        self.b = float(b)
        self.problem = problem
        self.index_set = list(range(problem.N)) if index_set is None else [int(n) for n in index_set]
        self._full = self.index_set == list(range(problem.N))

    def _check_state(self, state):
        expected = len(self.index_set)
        if expected == 0:
            return
        if state.proxies is None or state.proxies.shape[0] != expected:
            raise ShapeError(f"SagaProxy expects a proxy table with {expected} rows")

    def proxy_gradients(self, proxies):
        if self._full:
            return self.problem.component_gradients(proxies)
        return np.stack([self.problem.component_gradient(n, proxies[j]) for j, n in enumerate(self.index_set)])

    def _evaluate(self, s1, s2):
        delta_x = s1.x - s2.x
        value = float(np.dot(delta_x, delta_x))
        if self.index_set:
            difference = self.proxy_gradients(s1.proxies) - self.proxy_gradients(s2.proxies)
            value += self.b * float(np.sum(difference * difference))
        return value

    def to_dict(self):
        return {"variant": self.name, "b": self.b, "index_set": self.index_set}


class OptimalityGap(DivergenceSpec):
    """psi(x) + psi(x') - 2 psi* for x != x', and 0 on the diagonal"""

    name = "optimality_gap"

    def __init__(self, objective, reference=None, modulus=None, minimizer=None):
        self.objective = objective
        self.reference = reference
        self.modulus = modulus
        self.minimizer = None if minimizer is None else np.asarray(minimizer, dtype=float)

    @classmethod
    def from_problem(cls, problem):
        """Objective psi = f + g with reference psi(x*) and modulus c"""
        x_star = problem.require_optimizer()
        return cls(problem.value, problem.value(x_star), problem.c, x_star)

    def _evaluate(self, s1, s2):
        value = self.objective(s1.x) + self.objective(s2.x) - 2.0 * self.reference
        return max(0.0, value)

    def measured_part(self, state):
        return _as_state(state).x

    def reads_whole_state(self):
        return False

    def evaluate(self, s1, s2):
        if self.reference is None:
            raise ConfigurationError("OptimalityGap needs the reference value psi*")
        return super().evaluate(s1, s2)

    def to_dict(self):
        return {"variant": self.name, "reference": self.reference, "modulus": self.modulus}


class CatalystPair(DivergenceSpec):
    """V(x, x') + (1 - alpha) V(x_prev, x'_prev), 0 when both coordinates match"""

    name = "catalyst_pair"

    def __init__(self, inner, alpha):
        if not 0 < alpha < 1:
            raise ParameterError(f"CatalystPair alpha must lie in (0, 1), got {alpha}")
        self.inner = inner
        self.alpha = float(alpha)

    def _check_state(self, state):
        if state.prev is None:
            raise ShapeError("CatalystPair needs states carrying the previous iterate")

    def _evaluate(self, s1, s2):
        current = self.inner.evaluate(LiftedState(x=s1.x), LiftedState(x=s2.x))
        previous = self.inner.evaluate(LiftedState(x=s1.prev), LiftedState(x=s2.prev))
        return current + (1.0 - self.alpha) * previous

    def to_dict(self):
        return {"variant": self.name, "alpha": self.alpha, "inner": self.inner.to_dict()}


class AsgdQuadraticForm(DivergenceSpec):
    """ds^T P ds + 1/2 dx^T Q dx with ds = (x - x', prev - prev')"""

    name = "asgd_quadratic_form"

    def __init__(self, P, Q):
        self.P = check_spd(P, "AsgdQuadraticForm P")
        self.Q = check_spd(Q, "AsgdQuadraticForm Q")
        if self.P.shape[0] != 2 * self.Q.shape[0]:
            raise ShapeError(f"P must be {2 * self.Q.shape[0]}x{2 * self.Q.shape[0]}, got {self.P.shape}")
        self.lambda_min = float(linalg.eigvalsh(self.P)[0])

    def _check_state(self, state):
        if state.prev is None:
            raise ShapeError("AsgdQuadraticForm needs states carrying the previous iterate")
        if state.x.size != self.Q.shape[0]:
            raise ShapeError(f"Expected iterates of size {self.Q.shape[0]}, got {state.x.size}")

    def _evaluate(self, s1, s2):
        delta_x = s1.x - s2.x
        delta_s = np.concatenate([delta_x, s1.prev - s2.prev])
        value = float(delta_s @ (self.P @ delta_s)) + 0.5 * float(delta_x @ (self.Q @ delta_x))
        return max(0.0, value)

    def measured_part(self, state):
        state = _as_state(state)
        return np.concatenate([state.x, state.prev])

    def reads_whole_state(self):
        return False

    def to_dict(self):
        return {"variant": self.name, "P": self.P.tolist(), "Q": self.Q.tolist()}


class Power(DivergenceSpec):
    """V^p"""

    name = "power"

    def __init__(self, base, p):
        if not p > 0:
            raise ParameterError(f"Power exponent must be positive, got {p}")
        self.base = base
        self.p = float(p)

    def _evaluate(self, s1, s2):
        return self.base.evaluate(s1, s2) ** self.p

    def measured_part(self, state):
        return self.base.measured_part(state)

    def reads_whole_state(self):
        return self.base.reads_whole_state()

    def to_dict(self):
        return {"variant": self.name, "p": self.p, "base": self.base.to_dict()}


class Sum(DivergenceSpec):
    """V1 + V2"""

    name = "sum"

    def __init__(self, left, right):
        self.left = left
        self.right = right

    def _evaluate(self, s1, s2):
        return self.left.evaluate(s1, s2) + self.right.evaluate(s1, s2)

    def measured_part(self, state):
        # the growth bound comes from the left summand
        return self.left.measured_part(state)

    def reads_whole_state(self):
        return self.left.reads_whole_state()

    def to_dict(self):
        return {"variant": self.name, "left": self.left.to_dict(), "right": self.right.to_dict()}


class PlusMetric(DivergenceSpec):
    """V^p + ||s1 - s2|| (Euclidean metric on the lifted state)"""

    name = "plus_metric"

    def __init__(self, base, p=1.0):
        if not p > 0:
            raise ParameterError(f"PlusMetric exponent must be positive, got {p}")
        self.base = base
        self.p = float(p)

    def _evaluate(self, s1, s2):
        return self.base.evaluate(s1, s2) ** self.p + float(np.linalg.norm(s1.flat() - s2.flat()))

    def to_dict(self):
        return {"variant": self.name, "p": self.p, "base": self.base.to_dict()}


def evaluate(V, s1, s2):
    """V(s1, s2)"""
    return V.evaluate(s1, s2)


@dataclass
class AxiomReport:
    """Outcome of a sampled divergence-axiom check"""

    pairs: int
    max_symmetry_violation: float
    min_off_diagonal: float
    nonzero_diagonal_count: int
    negative_count: int

    @property
    def passed(self):
        return (
            self.max_symmetry_violation == 0.0
            and self.min_off_diagonal > 0.0
            and self.nonzero_diagonal_count == 0
            and self.negative_count == 0
        )

    def to_dict(self):
        return {
            "pairs": self.pairs,
            "max_symmetry_violation": self.max_symmetry_violation,
            "min_off_diagonal": self.min_off_diagonal,
            "nonzero_diagonal_count": self.nonzero_diagonal_count,
            "negative_count": self.negative_count,
            "passed": self.passed,
        }


def check_divergence_axioms(V, sampler, n, rng=None):
    """
    Check symmetry, positive definiteness and nonnegativity on sampled pairs

    Args:
        V (DivergenceSpec): Divergence under test
        sampler (callable): sampler(rng) -> LiftedState
        n (int): Number of sampled pairs
        rng (numpy.random.Generator): Generator handed to the sampler

    Returns:
        AxiomReport: Worst symmetry gap, smallest off-diagonal value and
        diagonal/negativity counts
    """
    if n < 1:
        raise ParameterError(f"Need at least one sampled pair, got n={n}")
    rng = np.random.default_rng() if rng is None else rng
    max_violation = 0.0
    min_off_diagonal = math.inf
    nonzero_diagonal = 0
    negative = 0
    for _ in range(n):
        a = sampler(rng)
        b = sampler(rng)
        forward = V.evaluate(a, b)
        backward = V.evaluate(b, a)
        max_violation = max(max_violation, abs(forward - backward))
        if forward < 0 or backward < 0:
            negative += 1
        if not a.same_as(b):
            min_off_diagonal = min(min_off_diagonal, forward)
        if V.evaluate(a, a) != 0.0:
            nonzero_diagonal += 1
    report = AxiomReport(n, max_violation, min_off_diagonal, nonzero_diagonal, negative)
    logger.debug(f"Axiom check for {V.name}: {report.to_dict()}")
    return report


def measured_norm(V, state):
    """Euclidean norm of the part of a state that V reads"""
    return float(np.linalg.norm(V.measured_part(state)))


def inf_compactness_radius(V, q, K_radius):
    """
    Radius R with V(s1, s2) >= q whenever ||s1|| > R and ||s2|| <= K_radius

    Norms are taken over V.measured_part: the iterate alone for
    SquaredEuclidean(iterate_only=True), OptimalityGap and an x-sized
    WeightedQuadratic, (x, prev) for AsgdQuadraticForm, the whole lifted
    state otherwise.

    Args:
        V (DivergenceSpec): Divergence with an analytic growth bound
        q (float): Level, q >= 0
        K_radius (float): Radius of the compact set K

    Returns:
        float: Radius R >= K_radius
    """
    if q < 0:
        raise ParameterError(f"Level q must be nonnegative, got {q}")
    if not K_radius > 0:
        raise ParameterError(f"K_radius must be positive, got {K_radius}")
    if q == 0:
        return float(K_radius)

    if isinstance(V, SquaredEuclidean):
        return K_radius + math.sqrt(q)
    if isinstance(V, WeightedQuadratic):
        return K_radius + math.sqrt(q / V.lambda_min)
    if isinstance(V, AsgdQuadraticForm):
        return K_radius + math.sqrt(q / V.lambda_min)
    if isinstance(V, OptimalityGap):
        if V.modulus is None or V.minimizer is None:
            raise ConfigurationError("OptimalityGap radius needs the modulus c and the minimizer x*")
        return max(float(K_radius), float(np.linalg.norm(V.minimizer)) + math.sqrt(2.0 * q / V.modulus))
    if isinstance(V, Power):
        return inf_compactness_radius(V.base, q ** (1.0 / V.p), K_radius)
    if isinstance(V, Sum):
        return inf_compactness_radius(V.left, q, K_radius)
    if isinstance(V, PlusMetric):
        metric_radius = K_radius + q
        if not V.base.reads_whole_state():
            return metric_radius
        try:
            return min(metric_radius, inf_compactness_radius(V.base, q ** (1.0 / V.p), K_radius))
        except NotImplementedError:
            return metric_radius
    raise NotImplementedError(f"No closed-form inf-compactness radius for {V.name}")


def diameter(V, states):
    """
    Largest divergence between any two states of a finite set

    Args:
        V (DivergenceSpec): Divergence
        states (list): LiftedState values

    Returns:
        float: max_{a, b} V(a, b)
    """
    largest = 0.0
    for a, b in itertools.permutations(states, 2):
        largest = max(largest, V.evaluate(a, b))
    return largest


def divergence_from_config(spec, problem=None):
    """
    Build a divergence from its config description

    Args:
        spec (dict | str): Variant name or {"variant": name, ...parameters}
        problem (FiniteSumProblem): Problem used by problem-dependent variants

    Returns:
        DivergenceSpec: The configured divergence
    """
    if isinstance(spec, str):
        spec = {"variant": spec}
    spec = dict(spec)
    variant = spec.pop("variant", None)
    try:
        if variant == SquaredEuclidean.name:
            divergence = SquaredEuclidean(iterate_only=bool(spec.pop("iterate_only", False)))
        elif variant == WeightedQuadratic.name:
            matrix = spec.pop("Q", "problem_sum")
            if isinstance(matrix, str):
                matrix = _problem_matrix(problem, matrix)
            divergence = WeightedQuadratic(matrix)
        elif variant == SagaProxy.name:
            _require_problem(problem, variant)
            divergence = SagaProxy(spec.pop("b"), problem, spec.pop("index_set", None))
        elif variant == OptimalityGap.name:
            _require_problem(problem, variant)
            divergence = OptimalityGap.from_problem(problem)
        elif variant == CatalystPair.name:
            default_inner = SquaredEuclidean.name if problem is None else OptimalityGap.name
            inner = divergence_from_config(spec.pop("inner", default_inner), problem)
            divergence = CatalystPair(inner, spec.pop("alpha"))
        elif variant == AsgdQuadraticForm.name:
            divergence = AsgdQuadraticForm(np.asarray(spec.pop("P")), np.asarray(spec.pop("Q")))
        elif variant == Power.name:
            divergence = Power(divergence_from_config(spec.pop("base"), problem), spec.pop("p"))
        elif variant == Sum.name:
            left = divergence_from_config(spec.pop("left"), problem)
            divergence = Sum(left, divergence_from_config(spec.pop("right"), problem))
        elif variant == PlusMetric.name:
            divergence = PlusMetric(divergence_from_config(spec.pop("base"), problem), spec.pop("p", 1.0))
        else:
            raise ConfigurationError(f"Unknown divergence variant: {variant}")
    except KeyError as e:
        logger.error(f"Error building divergence {variant}: missing parameter {e}")
        raise ConfigurationError(f"Divergence {variant} is missing parameter {e}") from e
    if spec:
        raise ConfigurationError(f"Unknown parameters for divergence {variant}: {sorted(spec)}")
    return divergence


def _require_problem(problem, variant):
    if problem is None:
        raise ConfigurationError(f"Divergence {variant} needs a problem instance")


def _problem_matrix(problem, which):
    _require_problem(problem, WeightedQuadratic.name)
    if not problem.is_quadratic:
        raise ConfigurationError("Problem-derived weight matrices need a quadratic problem")
    if which == "problem_sum":
        return problem.Q_sum
    if which == "problem_mean":
        return problem.Q_mean
    raise ConfigurationError(f"Unknown weight matrix reference: {which}")
