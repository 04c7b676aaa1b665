"""
Contraction coefficients, feasibility conditions and bound sequences

Every certificate lists the conditions it relies on with their slack, and
carries the bound it induces on the expected divergence between coupled
chains: geometric, geometric with an error floor, or the Catalyst envelope.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from utils.exceptions import CertificationError, InfeasibleParametersError, ParameterError

logger = logging.getLogger(__name__)

BOUND_GEOMETRIC = "geometric"
BOUND_GEOMETRIC_PLUS_ERROR = "geometric_plus_error"
BOUND_CATALYST_ENVELOPE = "catalyst_envelope"

ASGD_MARGIN = 1e-6
ASGD_RESIDUAL_TOLERANCE = 1e-8
ZETA_FIXED_POINT_TOLERANCE = 1e-12


@dataclass
class Condition:
    """Printed feasibility condition lhs < rhs"""

    name: str
    lhs: float
    rhs: float

    @property
    def passed(self):
        return self.lhs < self.rhs

    @property
    def slack(self):
        return self.rhs - self.lhs

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "pass": self.passed, "slack": self.slack}


@dataclass
class RateCertificate:
    """
    Contraction coefficient with its feasibility report and induced bound

    bound_kind is one of "geometric" (alpha^k V0), "geometric_plus_error"
    (alpha^k V0 + eps (1 - alpha^k)/(1 - alpha)) or "catalyst_envelope"
    (16/(sqrt(q) - alpha)^2 (1 - alpha)^(k+1) V0).
    """

    algorithm: str
    coefficient: float
    conditions: list = field(default_factory=list)
    bound_kind: str = BOUND_GEOMETRIC
    error: float = 0.0
    q: float = None
    details: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return all(condition.passed for condition in self.conditions) and 0 <= self.coefficient < 1

    def bound(self, k, v0):
        """Bound on the expected divergence after k steps (epochs) from V0"""
        alpha = self.coefficient
        if self.bound_kind == BOUND_CATALYST_ENVELOPE:
            return catalyst_envelope(self.q, alpha, k) * v0
        if self.bound_kind == BOUND_GEOMETRIC_PLUS_ERROR:
            return error_bounds(alpha, self.error, v0, k)
        return alpha ** k * v0

    def bounds(self, K, v0):
        return np.array([self.bound(k, v0) for k in range(K + 1)])

    def require_feasible(self):
        if not self.feasible:
            failed = [condition.name for condition in self.conditions if not condition.passed]
            if not 0 <= self.coefficient < 1:
                failed.append("alpha < 1")
            raise InfeasibleParametersError(
                f"{self.algorithm} parameters are infeasible: {', '.join(failed)}", report=self.to_json_dict()
            )
        return self

    def to_json_dict(self):
        payload = {
            "algorithm": self.algorithm,
            "alpha": self.coefficient,
            "feasible": self.feasible,
            "conditions": [condition.to_dict() for condition in self.conditions],
            "bound_kind": self.bound_kind,
        }
        if self.bound_kind == BOUND_GEOMETRIC_PLUS_ERROR:
            payload["error"] = self.error
        if self.q is not None:
            payload["q"] = self.q
        payload.update(self.details)
        return payload


def _check_moduli(c, L):
    if not c > 0:
        raise ParameterError(f"Strong convexity modulus must be positive, got c={c}")
    if c > L:
        raise ParameterError(f"Need c <= L, got c={c}, L={L}")


def _check_step(eta):
    if not eta > 0:
        raise ParameterError(f"Step size must be positive, got eta={eta}")


def gamma(eta, c, L):
    """
    gamma(eta) = 1 - 2 eta c + eta^2 L^2

    Args:
        eta (float): Step size > 0
        c (float): Strong convexity modulus
        L (float): Gradient Lipschitz constant

    Returns:
        float: Contraction factor of one exact or sampled gradient step
    """
    _check_step(eta)
    _check_moduli(c, L)
    value = 1.0 - 2.0 * eta * c + eta ** 2 * L ** 2
    if value >= 1:
        logger.warning(f"gamma(eta={eta}) = {value:.6g} >= 1: no contraction")
    return value


def sgd_certificate(eta, c, L, algorithm="sgd_prox"):
    """Certificate alpha = gamma(eta) for prox-SGD and the oracle-SGD difference dynamics"""
    value = gamma(eta, c, L)
    return RateCertificate(
        algorithm=algorithm,
        coefficient=value,
        conditions=[Condition("eta < 2c/L^2", eta, 2.0 * c / L ** 2), Condition("gamma < 1", value, 1.0)],
    )


def sgd_noise_floor(eta, second_moment):
    """eps = eta^2 E||eps_k||^2, the per-step error of oracle SGD around x*"""
    _check_step(eta)
    if second_moment < 0:
        raise ParameterError(f"Noise second moment must be nonnegative, got {second_moment}")
    return eta ** 2 * second_moment


def sgd_concentration_certificate(eta, c, L, second_moment):
    """Oracle SGD relative to x*: alpha = gamma(eta) with error floor eta^2 E||eps||^2"""
    certificate = sgd_certificate(eta, c, L, algorithm="sgd_oracle")
    certificate.bound_kind = BOUND_GEOMETRIC_PLUS_ERROR
    certificate.error = sgd_noise_floor(eta, second_moment)
    return certificate


def saga_alpha(eta, b, N, c, L):
    """
    SAGA certificate alpha = max{gamma + b L^2, (eta^2/b + N - 1)/N}

    Conditions: eta < c/L^2, eta^2 < b and gamma + b L^2 < 1.

    Returns:
        RateCertificate: Coefficient and per-condition slack
    """
    _check_step(eta)
    _check_moduli(c, L)
    if not b > 0:
        raise ParameterError(f"SAGA weight b must be positive, got {b}")
    if N < 1:
        raise ParameterError(f"Need N >= 1, got {N}")
    g = 1.0 - 2.0 * eta * c + eta ** 2 * L ** 2
    first = g + b * L ** 2
    second = (eta ** 2 / b + N - 1) / N
    return RateCertificate(
        algorithm="saga",
        coefficient=max(first, second),
        conditions=[
            Condition("eta < c/L^2", eta, c / L ** 2),
            Condition("eta^2 < b", eta ** 2, b),
            Condition("gamma + b L^2 < 1", first, 1.0),
        ],
        details={"branches": [first, second]},
    )


def svrg_alpha_quadratic(eta, c, L, N):
    """
    Quadratic SVRG coefficient 1/(c eta (1 - 2 L eta) N) + 2 L eta/(1 - 2 L eta)

    Raises:
        InfeasibleParametersError: When 2 L eta >= 1
    """
    _check_step(eta)
    _check_moduli(c, L)
    if 2.0 * L * eta >= 1:
        raise InfeasibleParametersError(
            f"Quadratic SVRG needs 2 L eta < 1, got {2.0 * L * eta}",
            report={"conditions": [Condition("2 L eta < 1", 2.0 * L * eta, 1.0).to_dict()]},
        )
    shrink = 1.0 - 2.0 * L * eta
    return 1.0 / (c * eta * shrink * N) + 2.0 * L * eta / shrink


def svrg_quadratic_certificate(eta, c, L, N):
    """Certificate for sum_n dx^T Q_n dx under quadratic SVRG"""
    condition = Condition("2 L eta < 1", 2.0 * L * eta, 1.0)
    if not condition.passed:
        return RateCertificate(algorithm="svrg", coefficient=math.inf, conditions=[condition])
    value = svrg_alpha_quadratic(eta, c, L, N)
    return RateCertificate(
        algorithm="svrg",
        coefficient=value,
        conditions=[condition, Condition("alpha < 1", value, 1.0)],
        details={"variant": "quadratic"},
    )


def _check_svrg_constants(alpha, kappa):
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0 <= kappa < 1 - alpha:
        raise ParameterError(f"kappa must lie in [0, 1 - alpha) = [0, {1 - alpha}), got {kappa}")


def svrg_xi(alpha, kappa, m):
    """
    xi_m = alpha^m + kappa (1 - alpha^m)/(1 - alpha)

    Args:
        alpha (float): Contraction of the exact operator, in (0, 1)
        kappa (float): Variance constant, in [0, 1 - alpha)
        m (int): Epoch length >= 1

    Returns:
        float: Epoch contraction factor, always < 1
    """
    _check_svrg_constants(alpha, kappa)
    if m < 1:
        raise ParameterError(f"Epoch length must be at least 1, got {m}")
    power = alpha ** m
    xi = power + kappa * (1.0 - power) / (1.0 - alpha)
    if not xi < 1:
        raise CertificationError(f"xi_{m} = {xi} is not below 1")
    return xi


def svrg_expected_xi(alpha, kappa, M, cap_factor=10):
    """
    E[xi_tau] for tau ~ Geometric(1/M) on {1, 2, ...} truncated at cap_factor * M

    Matches the geometric epoch-length law of the epoch operators.
    """
    _check_svrg_constants(alpha, kappa)
    if M < 1:
        raise ParameterError(f"Mean epoch length must be at least 1, got {M}")
    cap = int(cap_factor * M)
    p = 1.0 / M
    lengths = np.arange(1, cap + 1)
    probabilities = p * (1.0 - p) ** (lengths - 1)
    probabilities[-1] = (1.0 - p) ** (cap - 1)
    xis = alpha ** lengths + kappa * (1.0 - alpha ** lengths) / (1.0 - alpha)
    return float(np.dot(probabilities, xis))


def svrg_certificate(eta, c, L, M, kappa=None, epoch_law="fixed"):
    """
    Epoch certificate for SVRG on ||ds||^2

    alpha = gamma(eta) for the exact gradient step, kappa = eta^2 L^2 unless
    overridden; the coefficient is xi_M (fixed epochs) or E[xi_tau].
    """
    alpha = gamma(eta, c, L)
    kappa = eta ** 2 * L ** 2 if kappa is None else float(kappa)
    conditions = [Condition("gamma < 1", alpha, 1.0), Condition("kappa < 1 - gamma", kappa, 1.0 - alpha)]
    details = {"gamma": alpha, "kappa": kappa, "M": M, "epoch_law": epoch_law}
    if not all(condition.passed for condition in conditions) or alpha <= 0:
        return RateCertificate(algorithm="svrg", coefficient=math.inf, conditions=conditions, details=details)
    if epoch_law == "geometric":
        coefficient = svrg_expected_xi(alpha, kappa, M)
    else:
        coefficient = svrg_xi(alpha, kappa, M)
    return RateCertificate(algorithm="svrg", coefficient=coefficient, conditions=conditions, details=details)


def asvrg_alpha(eta, theta, M, c):
    """alpha(eta, theta) = 1 - theta + theta^2/(M c eta)"""
    _check_step(eta)
    if not 0 < theta <= 1:
        raise ParameterError(f"theta must lie in (0, 1], got {theta}")
    if M < 1:
        raise ParameterError(f"Epoch length must be at least 1, got {M}")
    if not c > 0:
        raise ParameterError(f"Strong convexity modulus must be positive, got c={c}")
    return 1.0 - theta + theta ** 2 / (M * c * eta)


def asvrg_certificate(eta, theta, M, c):
    value = asvrg_alpha(eta, theta, M, c)
    return RateCertificate(
        algorithm="asvrg",
        coefficient=value,
        conditions=[Condition("alpha(eta, theta) < 1", value, 1.0)],
    )


def hsag_rates(eta, b, N, S_size, c, L, M):
    """
    HSAG epoch certificate

    K = max{gamma + b |S| L^2/N, (eta^2/b + N - 1)/N} per inner step and
    alpha = K^M + eta^2 L^2 |S^C| / (N (1 - K)) * (1 - K^M) per epoch.

    Returns:
        RateCertificate: Epoch coefficient with K in its details
    """
    _check_step(eta)
    _check_moduli(c, L)
    if not b > 0:
        raise ParameterError(f"HSAG weight b must be positive, got {b}")
    if not 0 <= S_size <= N:
        raise ParameterError(f"Need 0 <= |S| <= N, got |S|={S_size}, N={N}")
    if M < 1:
        raise ParameterError(f"Epoch length must be at least 1, got {M}")
    g = 1.0 - 2.0 * eta * c + eta ** 2 * L ** 2
    first = g + b * S_size * L ** 2 / N
    K = max(first, (eta ** 2 / b + N - 1) / N)
    complement = N - S_size
    if K < 1:
        power = K ** M
        alpha = power + eta ** 2 * L ** 2 * complement / (N * (1.0 - K)) * (1.0 - power)
    else:
        alpha = K ** M
    return RateCertificate(
        algorithm="hsag",
        coefficient=alpha,
        conditions=[
            Condition("eta < 2c/((1 + |S|/N) L^2)", eta, 2.0 * c / ((1.0 + S_size / N) * L ** 2)),
            Condition("eta^2 < b", eta ** 2, b),
            Condition("gamma + b |S| L^2/N < 1", first, 1.0),
        ],
        details={"K": K, "S_size": S_size, "M": M},
    )


@dataclass
class CatalystSchedule:
    """Catalyst parameter sequences for k = 0..K"""

    q: float
    alpha: float
    zetas: np.ndarray
    betas: np.ndarray
    epsilon_ratios: np.ndarray

    def epsilons(self, initial_gap):
        """eps_k = (2/9)(psi(x0) - psi*)(1 - alpha)^k"""
        return (2.0 / 9.0) * initial_gap * self.epsilon_ratios

    def envelope(self, k):
        return catalyst_envelope(self.q, self.alpha, k)

    def to_dict(self):
        return {
            "q": self.q,
            "alpha": self.alpha,
            "zetas": self.zetas.tolist(),
            "betas": self.betas.tolist(),
            "epsilon_ratios": self.epsilon_ratios.tolist(),
        }


def catalyst_envelope(q, alpha, k):
    """16/(sqrt(q) - alpha)^2 (1 - alpha)^(k+1)"""
    return 16.0 / (math.sqrt(q) - alpha) ** 2 * (1.0 - alpha) ** (k + 1)


def next_zeta(zeta_prev, q):
    """
    Positive root of zeta^2 + (zeta_prev^2 - q) zeta - zeta_prev^2 = 0

    sqrt(q) is the fixed point of the recursion; roots within
    ZETA_FIXED_POINT_TOLERANCE of it are returned as sqrt(q) exactly.
    """
    fixed_point = math.sqrt(q)
    p = zeta_prev ** 2 - q
    zeta = 0.5 * (-p + math.sqrt(p * p + 4.0 * zeta_prev ** 2))
    if math.isclose(zeta, fixed_point, rel_tol=ZETA_FIXED_POINT_TOLERANCE):
        return fixed_point
    return zeta


def catalyst_schedule(c, theta, alpha, K, zeta0=None):
    """
    Catalyst sequences q, zeta_k, beta_k and eps_k/eps_0

    Args:
        c (float): Strong convexity modulus
        theta (float): Acceleration parameter > 0
        alpha (float): Rate parameter, alpha < sqrt(q)
        K (int): Last index
        zeta0 (float): Starting zeta (default sqrt(q))

    Returns:
        CatalystSchedule: The sequences; beta_0 = 0 since L_0 s_0 = x_0
    """
    if not theta > 0:
        raise ParameterError(f"Catalyst theta must be positive, got {theta}")
    if not c > 0:
        raise ParameterError(f"Strong convexity modulus must be positive, got c={c}")
    q = c / (c + theta)
    fixed_point = math.sqrt(q)
    if not 0 < alpha < fixed_point:
        raise ParameterError(f"Catalyst needs 0 < alpha < sqrt(q) = {fixed_point}, got alpha={alpha}")
    zetas = np.empty(K + 1)
    betas = np.zeros(K + 1)
    zetas[0] = fixed_point if zeta0 is None else zeta0
    for k in range(1, K + 1):
        previous = zetas[k - 1]
        zetas[k] = next_zeta(previous, q)
        betas[k] = previous * (1.0 - previous) / (previous ** 2 + zetas[k])
    epsilon_ratios = (1.0 - alpha) ** np.arange(K + 1)
    return CatalystSchedule(q=q, alpha=alpha, zetas=zetas, betas=betas, epsilon_ratios=epsilon_ratios)


def catalyst_certificate(c, theta, alpha):
    """Catalyst envelope certificate; infeasible when alpha >= sqrt(q)"""
    if not theta > 0:
        raise ParameterError(f"Catalyst theta must be positive, got {theta}")
    q = c / (c + theta)
    condition = Condition("alpha < sqrt(q)", alpha, math.sqrt(q))
    details = {}
    if condition.passed and alpha > 0:
        schedule = catalyst_schedule(c, theta, alpha, 1)
        details = {"zeta": float(schedule.zetas[-1]), "beta": float(schedule.betas[-1])}
    return RateCertificate(
        algorithm="catalyst",
        coefficient=alpha,
        conditions=[condition],
        bound_kind=BOUND_CATALYST_ENVELOPE,
        q=q,
        details=details,
    )


def error_bounds(alpha, eps, v0, k):
    """alpha^k V0 + eps (1 - alpha^k)/(1 - alpha)"""
    if not 0 <= alpha < 1:
        raise ParameterError(f"alpha must lie in [0, 1), got {alpha}")
    power = alpha ** k
    return power * v0 + (1.0 - power) / (1.0 - alpha) * eps


def markov_tail(alpha, eps, kappa):
    """
    Limiting tail bound Pr{V(s_k, s*) >= kappa} <= eps/(kappa (1 - alpha))

    Returns:
        float: The tail bound (may exceed 1, in which case it is vacuous)
    """
    if not 0 <= alpha < 1:
        raise ParameterError(f"alpha must lie in [0, 1), got {alpha}")
    if not kappa > 0:
        raise ParameterError(f"Tail level kappa must be positive, got {kappa}")
    if math.isinf(kappa):
        return 0.0
    return eps / (kappa * (1.0 - alpha))


def asgd_closed_loop(Q, eta, alpha, beta):
    """
    Closed-loop matrix of the coupled ASGD difference (dx_k, dx_{k-1})

    M = [[(1 + beta) I - eta (1 + alpha) Q, -beta I + eta alpha Q], [I, 0]]
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    d = Q.shape[0]
    identity = np.eye(d)
    top = np.hstack([(1.0 + beta) * identity - eta * (1.0 + alpha) * Q, -beta * identity + eta * alpha * Q])
    bottom = np.hstack([identity, np.zeros((d, d))])
    return np.vstack([top, bottom])


def asgd_certificate(Q, eta, alpha, beta, margin=ASGD_MARGIN):
    """
    Lyapunov certificate for quadratic ASGD

    rho = (spectral radius of M)^2 + margin. With A = M/sqrt(rho), the
    Stein equation A^T X A - X + I = 0 gives X > 0 with
    M^T X M <= rho X; P = t X is scaled so that the full form
    ds^T P ds + 1/2 dx^T Q dx also contracts by rho, and the result is
    checked a posteriori.

    Args:
        Q (numpy.ndarray): Quadratic Hessian
        eta (float): Step size
        alpha (float): Extrapolation parameter in [0, 1)
        beta (float): Momentum parameter in [0, 1)

    Returns:
        RateCertificate: coefficient rho, details with P, M and the residual
    """
    _check_step(eta)
    for name, value in (("alpha", alpha), ("beta", beta)):
        if not 0 <= value < 1:
            raise ParameterError(f"ASGD {name} must lie in [0, 1), got {value}")
    try:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        d = Q.shape[0]
        M = asgd_closed_loop(Q, eta, alpha, beta)
        radius = float(np.max(np.abs(linalg.eigvals(M))))
        rho = radius ** 2 + margin
        condition = Condition("spectral radius^2 + margin < 1", rho, 1.0)
        if not condition.passed:
            raise InfeasibleParametersError(
                f"ASGD closed loop does not contract: spectral radius {radius:.6g}",
                report={"algorithm": "asgd", "alpha": rho, "feasible": False, "conditions": [condition.to_dict()]},
            )

        A = M / math.sqrt(rho)
        X = linalg.solve_discrete_lyapunov(A.T, np.eye(2 * d))
        X = 0.5 * (X + X.T)
        J = np.zeros((2 * d, 2 * d))
        J[:d, :d] = 0.5 * Q
        excess = float(linalg.eigvalsh(M.T @ J @ M - rho * J)[-1])
        P = max(1.0, excess / rho) * X

        W = P + J
        residual = float(linalg.eigvalsh(M.T @ W @ M - rho * W)[-1])
        scale = float(linalg.norm(P, 2))
        if residual > ASGD_RESIDUAL_TOLERANCE * scale:
            raise CertificationError(f"ASGD certificate residual {residual:.3e} exceeds {ASGD_RESIDUAL_TOLERANCE:.0e}*||P||")

        logger.info(f"ASGD certificate: rho={rho:.6g}, ||P||={scale:.3e}, residual={residual:.3e}")
        return RateCertificate(
            algorithm="asgd",
            coefficient=rho,
            conditions=[condition],
            details={"spectral_radius": radius, "residual": residual, "P": P.tolist(), "M": M.tolist()},
        )

    except (InfeasibleParametersError, CertificationError) as e:
        logger.error(f"Error certifying ASGD: {str(e)}")
        raise
