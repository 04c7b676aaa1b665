"""
Strongly convex finite-sum test problems

Three families are served: oracle quadratics with bounded noise, finite-sum
quadratics with controlled spectrum, and smooth nonlinear finite sums
(strongly convex log-cosh terms) with an optional composite term g.

Every problem carries a certified minimizer x*. The per-component gradients
at x* are stored once. full_gradient and mean_gradient return the plain
averages; their anchored variants average relative to the stored gradients,
so that they vanish exactly at x* (composite Zero) and the variance-reduced
operators keep their fixed point bit for bit.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.stats import chi, chi2, ortho_group

from utils.exceptions import CertificationError, InputError, ParameterError, ShapeError
from utils.serialization_utils import decode_array, decode_real, encode_array, encode_real, read_json, write_json

logger = logging.getLogger(__name__)

COMPOSITE_ZERO = "zero"
COMPOSITE_L1 = "l1"
COMPOSITE_HALF_SQUARED_L2 = "half_squared_l2"
COMPOSITE_KINDS = (COMPOSITE_ZERO, COMPOSITE_L1, COMPOSITE_HALF_SQUARED_L2)

NOISE_UNIFORM_BALL = "uniform_ball"
NOISE_TRUNCATED_GAUSSIAN = "truncated_gaussian"

SPECTRUM_TOLERANCE = 1e-9
QUADRATIC_RESIDUAL_TOLERANCE = 1e-10
FIXED_POINT_TOLERANCE = 1e-12
LOADED_RESIDUAL_TOLERANCE = QUADRATIC_RESIDUAL_TOLERANCE
CERTIFY_MAX_ITERATIONS = 200000


def prox(composite, t, z):
    """
    Proximal map of the composite term with threshold t = eta * lambda

    Args:
        composite (Composite): Composite term
        t (float): Scaled threshold, t >= 0
        z (numpy.ndarray): Point

    Returns:
        numpy.ndarray: prox_{eta g}(z)
    """
    if t < 0:
        raise ParameterError(f"Prox threshold must be nonnegative, got {t}")
    if composite.kind == COMPOSITE_ZERO:
        return z
    if composite.kind == COMPOSITE_L1:
        return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return z / (1.0 + t)


@dataclass(frozen=True)
class Composite:
    """Composite term g: Zero, L1(lambda) or HalfSquaredL2(lambda)"""

    kind: str = COMPOSITE_ZERO
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in COMPOSITE_KINDS:
            raise ParameterError(f"Unknown composite kind: {self.kind}")
        if self.kind != COMPOSITE_ZERO and not self.lam > 0:
            raise ParameterError(f"Composite {self.kind} needs lambda > 0, got {self.lam}")

    @property
    def is_zero(self):
        return self.kind == COMPOSITE_ZERO

    def value(self, x):
        if self.kind == COMPOSITE_ZERO:
            return 0.0
        if self.kind == COMPOSITE_L1:
            return self.lam * float(np.sum(np.abs(x)))
        return 0.5 * self.lam * float(np.dot(x, x))

    def prox(self, eta, z):
        """prox_{eta g}(z)"""
        return prox(self, eta * self.lam, z)

    def to_dict(self, hex_floats=True):
        return {"kind": self.kind, "lambda": encode_real(self.lam, hex_floats)}

    @classmethod
    def from_dict(cls, data):
        if data is None:
            return cls()
        return cls(kind=data.get("kind", COMPOSITE_ZERO), lam=decode_real(data.get("lambda", 0.0)))


@dataclass(frozen=True)
class QuadraticTerm:
    """f_n(x) = 1/2 x^T Q_n x + a_n^T x + b_n"""

    Q: np.ndarray
    a: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if Q.shape != (a.size, a.size):
            raise ShapeError(f"Q must be {a.size}x{a.size}, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ParameterError("Q must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    def eigen_bounds(self):
        eigenvalues = linalg.eigvalsh(self.Q)
        return float(eigenvalues[0]), float(eigenvalues[-1])


@dataclass(frozen=True)
class LogCoshTerm:
    """h_n(x) = log cosh(w_n^T x + v_n) with ||w_n|| = 1"""

    w: np.ndarray
    v: float = 0.0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        norm = np.linalg.norm(w)
        if norm == 0:
            raise ParameterError("log-cosh direction must be nonzero")
        object.__setattr__(self, "w", w / norm)
        object.__setattr__(self, "v", float(self.v))


class FiniteSumProblem:
    """
    psi(x) = (1/N) sum_n f_n(x) + g(x) with c-strongly convex, L-smooth f_n

    Subclasses provide the raw per-component gradients and values; this
    class owns the composite term, the certified optimizer and the
    optimizer-anchored averages.
    """

    is_quadratic = False

    def __init__(self, d, c, L, composite=None):
        if not c > 0:
            raise ParameterError(f"Strong convexity modulus must be positive, got c={c}")
        if c > L:
            raise ParameterError(f"Need c <= L, got c={c}, L={L}")
        self.d = int(d)
        self.c = float(c)
        self.L = float(L)
        self.composite = composite if composite is not None else Composite()
        self.x_star = None
        self.residual = None
        self.seed = None
        self._grad_star = None
        self._grad_at_optimum = None

    # -- raw component oracles (subclasses) --------------------------------

    @property
    def N(self):
        raise NotImplementedError

    def component_gradient(self, n, x):
        """Gradient of f_n at x"""
        raise NotImplementedError

    def raw_component_gradients(self, points):
        """Row n: gradient of f_n at points[n]"""
        raise NotImplementedError

    def component_values(self, x):
        """Vector of f_n(x) over n"""
        raise NotImplementedError

    # -- derived quantities -------------------------------------------------

    def _check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ShapeError(f"Expected a {self.d}-vector, got shape {x.shape}")
        return x

    def component_gradients(self, points):
        """
        Gradients of every component at its own point

        Args:
            points (numpy.ndarray): (N, d) array, row n is where f_n is evaluated

        Returns:
            numpy.ndarray: (N, d) array of gradients
        """
        points = np.ascontiguousarray(points, dtype=float)
        if points.shape != (self.N, self.d):
            raise ShapeError(f"Expected ({self.N}, {self.d}) points, got {points.shape}")
        return self.raw_component_gradients(points)

    def mean_gradient(self, points):
        """(1/N) sum_n grad f_n(points[n])"""
        return np.mean(self.component_gradients(points), axis=0)

    def full_gradient(self, x):
        """grad f(x) = (1/N) sum_n grad f_n(x)"""
        x = self._check_point(x)
        return self.mean_gradient(np.tile(x, (self.N, 1)))

    def anchored_mean_gradient(self, points):
        """
        mean_gradient evaluated relative to the optimizer

        Computed as the mean of grad f_n(points[n]) - grad f_n(x*) plus
        grad f(x*), which is taken as exactly zero when g = Zero. Equal to
        mean_gradient up to rounding, and exactly zero when every point is x*
        and g = Zero. Falls back to the plain mean before certification.
        """
        gradients = self.component_gradients(points)
        if self._grad_star is None:
            return np.mean(gradients, axis=0)
        return np.mean(gradients - self._grad_star, axis=0) + self._grad_at_optimum

    def anchored_full_gradient(self, x):
        """grad f(x) evaluated relative to the optimizer, see anchored_mean_gradient"""
        x = self._check_point(x)
        return self.anchored_mean_gradient(np.tile(x, (self.N, 1)))

    def smooth_value(self, x):
        return float(np.mean(self.component_values(self._check_point(x))))

    def value(self, x):
        """psi(x) = f(x) + g(x)"""
        x = self._check_point(x)
        return self.smooth_value(x) + self.composite.value(x)

    @property
    def optimal_value(self):
        if self.x_star is None:
            raise CertificationError("Problem has no certified optimizer")
        return self.value(self.x_star)

    def prox(self, eta, z):
        return self.composite.prox(eta, z)

    def prox_gradient_step(self, x, eta):
        """prox_{eta g}(x - eta grad f(x))"""
        return self.prox(eta, x - eta * self.full_gradient(x))

    def fixed_point_residual(self, x, eta=None):
        """||x - prox_{eta g}(x - eta grad f(x))||, eta defaults to 1/L"""
        eta = 1.0 / self.L if eta is None else eta
        return float(np.linalg.norm(x - self.prox_gradient_step(x, eta)))

    # -- certification ------------------------------------------------------

    def _solve_directly(self):
        """Closed-form optimizer when available (quadratic subclasses)"""
        return None

    def certify(self, x0=None, tolerance=FIXED_POINT_TOLERANCE, max_iterations=CERTIFY_MAX_ITERATIONS):
        """
        Compute and store the minimizer x* with its certification residual

        Quadratics with g = Zero or HalfSquaredL2 are solved directly; all
        other cases run deterministic proximal gradient with step 1/L until
        the fixed-point residual drops below the tolerance.

        Args:
            x0 (numpy.ndarray): Starting point for the iterative certifier
            tolerance (float): Fixed-point residual tolerance
            max_iterations (int): Iteration cap

        Returns:
            numpy.ndarray: Certified minimizer
        """
        try:
            self._grad_star = None
            self._grad_at_optimum = None
            x_star = self._solve_directly() if x0 is None else None
            if x_star is not None:
                residual = self.optimality_residual(x_star)
                if residual > QUADRATIC_RESIDUAL_TOLERANCE:
                    raise CertificationError(f"Linear solve residual {residual:.3e} above tolerance")
            else:
                x_star, residual = self._run_prox_gradient(x0, tolerance, max_iterations)

            self._set_optimizer(x_star, residual)
            logger.info(f"Certified optimizer (d={self.d}, N={self.N}) with residual {residual:.3e}")
            return x_star

        except CertificationError as e:
            logger.error(f"Error certifying optimizer: {str(e)}")
            raise

    def adopt_optimizer(self, x_star, tolerance=LOADED_RESIDUAL_TOLERANCE):
        """
        Adopt a minimizer computed elsewhere after recomputing its residual

        Args:
            x_star (numpy.ndarray): Claimed minimizer
            tolerance (float): Largest accepted optimality residual

        Returns:
            float: Recomputed residual
        """
        x_star = self._check_point(x_star).copy()
        residual = self.optimality_residual(x_star)
        if not residual <= tolerance:
            message = f"Stored optimizer has residual {residual:.3e}, above tolerance {tolerance:.1e}"
            logger.error(f"Error adopting optimizer: {message}")
            raise CertificationError(message)
        self._set_optimizer(x_star, residual)
        return residual

    def _set_optimizer(self, x_star, residual):
        self.x_star = x_star
        self.residual = residual
        self._grad_star = self.raw_component_gradients(np.tile(x_star, (self.N, 1)))
        if self.composite.is_zero:
            self._grad_at_optimum = np.zeros(self.d)
        else:
            self._grad_at_optimum = np.mean(self._grad_star, axis=0)

    def optimality_residual(self, x):
        """Residual of the optimality condition used by the direct solvers"""
        return self.fixed_point_residual(x)

    def _run_prox_gradient(self, x0, tolerance, max_iterations):
        eta = 1.0 / self.L
        x = np.zeros(self.d) if x0 is None else self._check_point(x0).copy()
        for iteration in range(max_iterations):
            x_next = self.prox_gradient_step(x, eta)
            residual = float(np.linalg.norm(x - x_next))
            x = x_next
            if residual <= tolerance:
                residual = self.fixed_point_residual(x, eta)
                if residual <= tolerance:
                    logger.debug(f"Proximal gradient certified after {iteration + 1} iterations")
                    return x, residual
        raise CertificationError(
            f"Optimizer not certified within {max_iterations} iterations (tolerance {tolerance:.1e})"
        )

    def require_optimizer(self):
        if self.x_star is None:
            raise CertificationError("Problem has no certified optimizer")
        return self.x_star

    # -- serialization ------------------------------------------------------

    def terms_to_list(self, hex_floats=True):
        raise NotImplementedError

    def to_dict(self, hex_floats=True):
        """Instance-file payload: {d, N, c, L, composite, terms, optimizer, seed}"""
        optimizer = None
        if self.x_star is not None:
            optimizer = {
                "x_star": encode_array(self.x_star, hex_floats),
                "residual": encode_real(self.residual, hex_floats),
            }
        return {
            "d": self.d,
            "N": self.N,
            "c": encode_real(self.c, hex_floats),
            "L": encode_real(self.L, hex_floats),
            "composite": self.composite.to_dict(hex_floats),
            "terms": self.terms_to_list(hex_floats),
            "optimizer": optimizer,
            "seed": self.seed,
        }


class QuadraticFiniteSum(FiniteSumProblem):
    """Finite sum of quadratic terms with c I <= Q_n <= L I"""

    is_quadratic = True

    def __init__(self, terms, c, L, composite=None, check_spectrum=True):
        if not terms:
            raise ParameterError("Need at least one quadratic term")
        d = terms[0].a.size
        super().__init__(d, c, L, composite)
        if any(term.a.size != d for term in terms):
            raise ShapeError("All quadratic terms must share the dimension")
        self.terms = list(terms)
        self.Qs = np.stack([term.Q for term in self.terms])
        self.As = np.stack([term.a for term in self.terms])
        self.Bs = np.array([term.b for term in self.terms])
        self.Q_mean = np.mean(self.Qs, axis=0)
        self.a_mean = np.mean(self.As, axis=0)
        if check_spectrum:
            self.check_spectrum()

    @property
    def N(self):
        return len(self.terms)

    def check_spectrum(self):
        """Verify c - tol <= eig(Q_n) <= L + tol for every term"""
        for n, term in enumerate(self.terms):
            low, high = term.eigen_bounds()
            if low < self.c - SPECTRUM_TOLERANCE or high > self.L + SPECTRUM_TOLERANCE:
                raise ParameterError(
                    f"Term {n} spectrum [{low:.6g}, {high:.6g}] outside [c, L] = [{self.c}, {self.L}]"
                )

    def component_gradient(self, n, x):
        return self.Qs[n] @ x + self.As[n]

    def raw_component_gradients(self, points):
        return np.einsum("nij,nj->ni", self.Qs, points) + self.As

    def component_values(self, x):
        return 0.5 * np.einsum("i,nij,j->n", x, self.Qs, x) + self.As @ x + self.Bs

    @property
    def Q_sum(self):
        return np.sum(self.Qs, axis=0)

    def _solve_directly(self):
        if self.composite.kind == COMPOSITE_L1:
            return None
        system = self.Q_mean
        if self.composite.kind == COMPOSITE_HALF_SQUARED_L2:
            system = system + self.composite.lam * np.eye(self.d)
        return linalg.solve(system, -self.a_mean, assume_a="pos")

    def optimality_residual(self, x):
        if self.composite.kind == COMPOSITE_L1:
            return self.fixed_point_residual(x)
        gradient = self.Q_mean @ x + self.a_mean
        if self.composite.kind == COMPOSITE_HALF_SQUARED_L2:
            gradient = gradient + self.composite.lam * x
        return float(np.linalg.norm(gradient))

    def terms_to_list(self, hex_floats=True):
        return [
            {"Q": encode_array(term.Q, hex_floats), "a": encode_array(term.a, hex_floats), "b": encode_real(term.b, hex_floats)}
            for term in self.terms
        ]


class LogCoshFiniteSum(FiniteSumProblem):
    """f_n(x) = (c/2)||x||^2 + (L - c) log cosh(w_n^T x + v_n)"""

    def __init__(self, terms, c, L, composite=None):
        if not c < L:
            raise ParameterError(f"Nonlinear family needs c < L strictly, got c={c}, L={L}")
        if not terms:
            raise ParameterError("Need at least one log-cosh term")
        d = terms[0].w.size
        super().__init__(d, c, L, composite)
        self.terms = list(terms)
        self.Ws = np.stack([term.w for term in self.terms])
        self.Vs = np.array([term.v for term in self.terms])
        self.weight = self.L - self.c

    @property
    def N(self):
        return len(self.terms)

    def component_gradient(self, n, x):
        return self.c * x + self.weight * np.tanh(self.Ws[n] @ x + self.Vs[n]) * self.Ws[n]

    def raw_component_gradients(self, points):
        slopes = np.tanh(np.einsum("ni,ni->n", self.Ws, points) + self.Vs)
        return self.c * points + self.weight * slopes[:, None] * self.Ws

    def component_values(self, x):
        z = self.Ws @ x + self.Vs
        log_cosh = np.logaddexp(z, -z) - math.log(2.0)
        return 0.5 * self.c * float(np.dot(x, x)) + self.weight * log_cosh

    def terms_to_list(self, hex_floats=True):
        return [
            {"kind": "log_cosh", "params": {"w": encode_array(term.w, hex_floats), "v": encode_real(term.v, hex_floats)}}
            for term in self.terms
        ]


class CallbackFiniteSum(FiniteSumProblem):
    """
    Generic problem built from per-component gradient/value callables

    Components are evaluated one at a time, which makes this the reference
    path against which the vectorized families are compared. Callback
    problems expose no Hessians, so they never count as quadratic even when
    they wrap one.
    """

    def __init__(self, gradients, values, d, c, L, composite=None):
        super().__init__(d, c, L, composite)
        if len(gradients) != len(values):
            raise ShapeError("Need one value callable per gradient callable")
        self.gradients = list(gradients)
        self.values = list(values)

    @classmethod
    def from_problem(cls, problem):
        """Wrap a vectorized problem's components as independent callables"""
        gradients = [lambda x, n=n: problem.component_gradient(n, x) for n in range(problem.N)]
        values = [lambda x, n=n: float(problem.component_values(x)[n]) for n in range(problem.N)]
        wrapped = cls(gradients, values, problem.d, problem.c, problem.L, problem.composite)
        if problem.x_star is not None:
            wrapped.adopt_optimizer(problem.x_star)
        return wrapped

    @property
    def N(self):
        return len(self.gradients)

    def component_gradient(self, n, x):
        return np.asarray(self.gradients[n](x), dtype=float)

    def raw_component_gradients(self, points):
        return np.stack([self.component_gradient(n, points[n]) for n in range(self.N)])

    def component_values(self, x):
        return np.array([value(x) for value in self.values])

    def terms_to_list(self, hex_floats=True):
        raise InputError("Callback problems cannot be serialized")


class NoisyOracle:
    """Bounded zero-mean gradient noise: UniformBall(B) or TruncatedGaussian(sigma, B)"""

    def __init__(self, problem, bound, law=NOISE_UNIFORM_BALL, sigma=None):
        if bound < 0:
            raise ParameterError(f"Noise bound must be nonnegative, got {bound}")
        if law not in (NOISE_UNIFORM_BALL, NOISE_TRUNCATED_GAUSSIAN):
            raise ParameterError(f"Unknown noise law: {law}")
        if law == NOISE_TRUNCATED_GAUSSIAN and not (sigma and sigma > 0):
            raise ParameterError("Truncated Gaussian noise needs sigma > 0")
        self.problem = problem
        self.bound = float(bound)
        self.law = law
        self.sigma = sigma

    @property
    def d(self):
        return self.problem.d

    def sample(self, rng):
        """
        Draw one noise vector with ||eps|| <= B

        Args:
            rng (numpy.random.Generator): Caller-owned generator

        Returns:
            numpy.ndarray: Noise vector
        """
        if self.bound == 0:
            return np.zeros(self.d)
        direction = rng.standard_normal(self.d)
        direction /= np.linalg.norm(direction)
        u = rng.random()
        if self.law == NOISE_UNIFORM_BALL:
            return self.bound * u ** (1.0 / self.d) * direction
        return self._truncated_radius(u) * direction

    def _truncated_radius(self, u):
        # ||eps|| / sigma is chi(d) conditioned on [0, B / sigma]; invert its cdf
        mass = chi.cdf(self.bound / self.sigma, self.d)
        if mass > 0:
            radius = self.sigma * float(chi.ppf(u * mass, self.d))
            if math.isfinite(radius):
                return min(radius, self.bound)
        # mass underflows only for tiny B / sigma, where the law is the uniform-ball one
        return self.bound * u ** (1.0 / self.d)

    def second_moment(self):
        """E||eps||^2, exact for both laws"""
        ball_moment = self.bound ** 2 * self.d / (self.d + 2.0)
        if self.law == NOISE_UNIFORM_BALL or self.bound == 0:
            return ball_moment
        level = (self.bound / self.sigma) ** 2
        mass = chi2.cdf(level, self.d)
        if not mass > 0:
            return ball_moment
        return float(min(self.sigma ** 2 * self.d * chi2.cdf(level, self.d + 2) / mass, self.bound ** 2))

    def to_dict(self):
        return {"law": self.law, "bound": self.bound, "sigma": self.sigma}


def oracle_gradient(problem, x, rng, oracle=None):
    """
    Noisy gradient oracle: grad f(x) + eps

    Args:
        problem (FiniteSumProblem): Problem
        x (numpy.ndarray): Query point
        rng (numpy.random.Generator): Caller-owned generator
        oracle (NoisyOracle): Noise law (None means exact gradients)

    Returns:
        numpy.ndarray: Noisy gradient
    """
    gradient = problem.full_gradient(x)
    if oracle is None:
        return gradient
    return gradient + oracle.sample(rng)


def _random_rotation(d, rng):
    if d == 1:
        return np.array([[1.0]])
    return ortho_group.rvs(d, random_state=rng)


def generate_quadratic(d, N, c, L, seed, composite=None, a_scale=1.0):
    """
    Generate a finite-sum quadratic with spectrum in [c, L]

    Each Q_n = R^T diag(lambda) R with a random rotation R and eigenvalues
    uniform in [c, L]; the first term receives eigenvalue c and the last one
    eigenvalue L so the bounds are tight.

    Args:
        d (int): Dimension
        N (int): Number of terms
        c (float): Strong convexity modulus
        L (float): Smoothness constant
        seed (int): Generator seed
        composite (Composite): Composite term (default Zero)
        a_scale (float): Scale of the Gaussian linear terms

    Returns:
        QuadraticFiniteSum: Certified problem
    """
    if d < 1 or N < 1:
        raise ParameterError(f"Need d >= 1 and N >= 1, got d={d}, N={N}")
    if not c > 0:
        raise ParameterError(f"Need c > 0, got {c}")
    if c > L:
        raise ParameterError(f"Need c <= L, got c={c}, L={L}")
    try:
        rng = np.random.default_rng(seed)
        spectra = rng.uniform(c, L, size=(N, d))
        spectra[0, 0] = c
        if d > 1 or N > 1:
            spectra[N - 1, d - 1] = L
        elif c < L:
            logger.warning("d = N = 1: only the lower spectrum bound c is attained")
        terms = []
        for n in range(N):
            rotation = _random_rotation(d, rng)
            Q = rotation.T @ np.diag(spectra[n]) @ rotation
            Q = 0.5 * (Q + Q.T)
            a = a_scale * rng.standard_normal(d)
            terms.append(QuadraticTerm(Q=Q, a=a, b=0.0))
        problem = QuadraticFiniteSum(terms, c, L, composite)
        problem.seed = seed
        problem.certify()
        logger.info(f"Generated quadratic problem d={d}, N={N}, c={c}, L={L}, seed={seed}")
        return problem

    except Exception as e:
        logger.error(f"Error generating quadratic problem: {str(e)}")
        raise


def generate_nonlinear(d, N, c, L, seed, composite=None):
    """
    Generate a nonlinear finite sum of log-cosh terms

    f_n(x) = (c/2)||x||^2 + (L - c) log cosh(w_n^T x + v_n), ||w_n|| = 1,
    which is exactly c-strongly convex with L-Lipschitz gradient.

    Returns:
        LogCoshFiniteSum: Certified problem
    """
    if d < 1 or N < 1:
        raise ParameterError(f"Need d >= 1 and N >= 1, got d={d}, N={N}")
    if not 0 < c < L:
        raise ParameterError(f"Nonlinear generator needs 0 < c < L, got c={c}, L={L}")
    try:
        rng = np.random.default_rng(seed)
        terms = []
        for _ in range(N):
            w = rng.standard_normal(d)
            while np.linalg.norm(w) < 1e-8:
                w = rng.standard_normal(d)
            terms.append(LogCoshTerm(w=w, v=float(rng.standard_normal())))
        problem = LogCoshFiniteSum(terms, c, L, composite)
        problem.seed = seed
        problem.certify()
        logger.info(f"Generated nonlinear problem d={d}, N={N}, c={c}, L={L}, seed={seed}")
        return problem

    except Exception as e:
        logger.error(f"Error generating nonlinear problem: {str(e)}")
        raise


def problem_from_dict(data):
    """
    Rebuild a problem from its instance-file payload

    Args:
        data (dict): Payload written by FiniteSumProblem.to_dict

    Returns:
        FiniteSumProblem: Problem with the stored optimizer re-adopted
    """
    try:
        c = decode_real(data["c"])
        L = decode_real(data["L"])
        composite = Composite.from_dict(data.get("composite"))
        raw_terms = data["terms"]
        if raw_terms and raw_terms[0].get("kind") == "log_cosh":
            terms = [
                LogCoshTerm(w=decode_array(term["params"]["w"]), v=decode_real(term["params"]["v"]))
                for term in raw_terms
            ]
            problem = LogCoshFiniteSum(terms, c, L, composite)
        else:
            terms = [
                QuadraticTerm(Q=decode_array(term["Q"]), a=decode_array(term["a"]), b=decode_real(term.get("b", 0.0)))
                for term in raw_terms
            ]
            problem = QuadraticFiniteSum(terms, c, L, composite)
        if problem.d != int(data["d"]) or problem.N != int(data["N"]):
            raise InputError("Instance header (d, N) does not match its terms")
        problem.seed = data.get("seed")
        optimizer = data.get("optimizer")
        if optimizer:
            problem.adopt_optimizer(decode_array(optimizer["x_star"]))
        else:
            problem.certify()
        return problem

    except KeyError as e:
        logger.error(f"Error reading problem instance: missing field {e}")
        raise InputError(f"Instance file is missing field {e}") from e


def save_problem(problem, file_path, hex_floats=True):
    """Write a problem instance file"""
    write_json(problem.to_dict(hex_floats), file_path)


def load_problem(file_path):
    """Read a problem instance file"""
    return problem_from_dict(read_json(file_path))
