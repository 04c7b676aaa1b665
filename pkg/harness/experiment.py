"""
Experiment orchestration

Builds the problem, operator, rate certificate and divergence described by
an ExperimentConfig, runs the coupled replications and checks the empirical
means against the certified bounds.
"""

import logging
import math

import numpy as np

from config.settings import VERIFY_BOTH, VERIFY_CONCENTRATION, VERIFY_CONTRACTION
from harness.reports import SE_MULTIPLIER, BoundCheck, StepCheck, VerificationReport, output_paths, write_report, write_summary
from utils.algorithms import ASGD, ASVRG, CATALYST, HSAG, SAGA, SGD_ORACLE, SGD_PROX, SVRG, make_operator
from utils.divergence import (
    AsgdQuadraticForm,
    CatalystPair,
    OptimalityGap,
    SagaProxy,
    SquaredEuclidean,
    WeightedQuadratic,
    divergence_from_config,
)
from utils.exceptions import ConfigurationError
from utils.operators import run_coupled
from utils.problems import Composite, generate_nonlinear, generate_quadratic, load_problem
from utils.rates import (
    asgd_certificate,
    asvrg_certificate,
    catalyst_certificate,
    hsag_rates,
    markov_tail,
    saga_alpha,
    sgd_certificate,
    sgd_concentration_certificate,
    svrg_certificate,
    svrg_quadratic_certificate,
)
from utils.rng_utils import ROLE_INIT_A, ROLE_INIT_B, derive_rng
from utils.serialization_utils import encode_real

logger = logging.getLogger(__name__)

# kinds whose coupled difference contracts at every step, not only in mean
PER_STEP_KINDS = (SGD_ORACLE, SGD_PROX, ASGD)
STEP_RELATIVE_TOLERANCE = 1e-12


def certificate_from_params(kind, params):
    """
    Rate certificate for an algorithm from plain parameters

    Args:
        kind (str): Algorithm kind
        params (dict): eta, c, L and the kind's own parameters (N, b, M,
            theta, alpha, beta, S, Q, kappa, epoch_law, bound, second_moment)

    Returns:
        RateCertificate: Coefficient with its feasibility conditions
    """
    try:
        eta = float(params["eta"])
        if kind == CATALYST:
            return catalyst_certificate(float(params["c"]), float(params["theta"]), float(params["alpha"]))
        if kind == ASVRG:
            return asvrg_certificate(eta, float(params["theta"]), int(params["M"]), float(params["c"]))
        if kind == ASGD:
            return asgd_certificate(np.asarray(params["Q"], dtype=float), eta, float(params["alpha"]), float(params["beta"]))

        c, L = float(params["c"]), float(params["L"])
        if kind == SGD_ORACLE and params.get("second_moment") is not None:
            return sgd_concentration_certificate(eta, c, L, float(params["second_moment"]))
        if kind in (SGD_ORACLE, SGD_PROX):
            return sgd_certificate(eta, c, L, kind)
        if kind == SAGA:
            return saga_alpha(eta, float(params["b"]), int(params["N"]), c, L)
        if kind == SVRG:
            if params.get("bound", "general") == "quadratic":
                return svrg_quadratic_certificate(eta, c, L, int(params["N"]))
            return svrg_certificate(eta, c, L, int(params["M"]), params.get("kappa"), params.get("epoch_law", "fixed"))
        if kind == HSAG:
            S = params["S"]
            S_size = len(set(S)) if isinstance(S, (list, tuple)) else int(S)
            return hsag_rates(eta, float(params["b"]), int(params["N"]), S_size, c, L, int(params["M"]))
    except KeyError as e:
        logger.error(f"Error building {kind} certificate: missing parameter {e}")
        raise ConfigurationError(f"Certificate for {kind} needs parameter {e}") from e
    raise ConfigurationError(f"No rate certificate for algorithm kind {kind!r}")


def empirical_rate(means, window=0.5):
    """
    exp of the fitted slope of log mean V_k over the last window of the horizon

    Returns:
        float: Empirical per-step (per-epoch) rate, or None with fewer than
        two positive finite means in the window
    """
    means = np.asarray(means, dtype=float)
    K = len(means) - 1
    start = int(math.floor(K * (1.0 - window)))
    ks = np.arange(start, K + 1)
    segment = means[start:]
    usable = np.isfinite(segment) & (segment > 0)
    if np.count_nonzero(usable) < 2:
        return None
    slope, _ = np.polyfit(ks[usable], np.log(segment[usable]), 1)
    return float(np.exp(slope))


class ExperimentRunner:
    """Run and verify one experiment"""

    def __init__(self, config, workers=1):
        self.config = config
        self.workers = workers
        self.problem = None
        self.operator = None
        self.certificate = None
        self.star_certificate = None
        self.divergence = None

    @property
    def kind(self):
        return self.config.algorithm.kind

    @property
    def mode(self):
        return self.config.verify["mode"]

    def setup(self):
        """Build problem, operator, certificates and divergence"""
        if self.problem is not None:
            return self
        try:
            self.problem = self.build_problem()
            self.operator = make_operator(self.config.algorithm, self.problem)
            self.certificate = certificate_from_params(self.kind, self.certificate_params())
            self.star_certificate = self.build_star_certificate()
            self.divergence = self.build_divergence()
            logger.info(
                f"Experiment {self.config.name}: {self.kind} on d={self.problem.d}, N={self.problem.N}, "
                f"alpha={self.certificate.coefficient:.6g}, divergence {self.divergence.name}"
            )
            return self

        except Exception as e:
            logger.error(f"Error setting up experiment {self.config.name}: {str(e)}")
            raise

    def build_problem(self):
        spec = self.config.problem
        if spec.get("instance"):
            logger.info(f"Loading problem instance {spec['instance']}")
            return load_problem(spec["instance"])
        composite = Composite.from_dict(spec.get("composite"))
        if spec["family"] == "quadratic":
            return generate_quadratic(
                int(spec["d"]), int(spec["N"]), float(spec["c"]), float(spec["L"]), int(spec["seed"]),
                composite, float(spec.get("a_scale", 1.0)),
            )
        return generate_nonlinear(
            int(spec["d"]), int(spec["N"]), float(spec["c"]), float(spec["L"]), int(spec["seed"]), composite
        )

    def certificate_params(self, second_moment=None):
        params = dict(self.config.algorithm.params)
        params.update({"eta": self.config.algorithm.eta, "c": self.problem.c, "L": self.problem.L, "N": self.problem.N})
        if self.kind == ASGD:
            params["Q"] = self.operator.closed_loop_hessian()
        if second_moment is not None:
            params["second_moment"] = second_moment
        return params

    def build_star_certificate(self):
        """Certificate for V(s_k, s*); oracle SGD carries its noise floor"""
        if self.mode not in (VERIFY_CONCENTRATION, VERIFY_BOTH):
            return None
        if self.kind == SGD_ORACLE:
            second_moment = self.operator.oracle.second_moment()
            return certificate_from_params(self.kind, self.certificate_params(second_moment))
        if not self.operator.variance_reduced:
            raise ConfigurationError(
                f"Concentration mode needs a variance-reduced algorithm or oracle SGD, got {self.kind}"
            )
        return self.certificate

    def build_divergence(self):
        spec = self.config.divergence
        variant = spec if isinstance(spec, str) else spec.get("variant", "auto")
        if variant != "auto":
            return divergence_from_config(spec, self.problem)

        params = self.config.algorithm.params
        if self.kind in (SGD_ORACLE, SGD_PROX):
            return SquaredEuclidean()
        if self.kind == ASGD:
            return AsgdQuadraticForm(np.asarray(self.certificate.details["P"]), self.operator.closed_loop_hessian())
        if self.kind == SAGA:
            return SagaProxy(params["b"], self.problem)
        if self.kind == HSAG:
            return SagaProxy(params["b"], self.problem, index_set=self.operator.S)
        if self.kind == SVRG:
            if params.get("bound") == "quadratic":
                return WeightedQuadratic(self.problem.Q_sum)
            return SquaredEuclidean()
        if self.kind == ASVRG:
            if self.problem.is_quadratic:
                return WeightedQuadratic(self.problem.Q_sum)
            return OptimalityGap.from_problem(self.problem)
        return CatalystPair(OptimalityGap.from_problem(self.problem), params["alpha"])

    def initial_iterate(self, role, replication):
        initial = self.config.initial
        if initial["law"] == "point":
            key = "x_a" if role == ROLE_INIT_A else "x_b"
            if initial.get(key) is None:
                raise ConfigurationError(f"Point initial law needs initial.{key}")
            x = np.asarray(initial[key], dtype=float)
            if x.shape != (self.problem.d,):
                raise ConfigurationError(f"initial.{key} must have {self.problem.d} entries")
            return x
        stream = replication if initial.get("vary") else 0
        rng = derive_rng(self.config.seed, stream, 0, role)
        return self.problem.require_optimizer() + float(initial["radius"]) * rng.standard_normal(self.problem.d)

    def start_a(self, replication):
        return self.operator.initial_state(self.initial_iterate(ROLE_INIT_A, replication))

    def start_b(self, replication):
        return self.operator.initial_state(self.initial_iterate(ROLE_INIT_B, replication))

    def simulate(self):
        """
        Coupled replications with V_k between the chains and V*_k against s*

        Returns:
            CoupledTrajectory: The recorded trajectory
        """
        self.setup()
        return run_coupled(
            self.operator,
            self.start_a,
            self.start_b,
            self.config.K,
            self.config.R,
            self.divergence,
            self.config.seed,
            s_star=self.operator.fixed_point(),
            independent=self.config.independent,
            projection_radius=self.config.projection_radius,
            workers=self.workers,
        )

    def summarize(self, trajectory):
        hex_floats = bool(self.config.output.get("hex_floats", True))
        means = trajectory.mean_values()
        star_means = trajectory.mean_star_values()
        rate = empirical_rate(means, float(self.config.verify["window"]))
        return {
            "name": self.config.name,
            "algorithm": self.operator.describe(),
            "divergence": self.divergence.name,
            "problem": {
                "d": self.problem.d,
                "N": self.problem.N,
                "c": self.problem.c,
                "L": self.problem.L,
                "optimizer_residual": self.problem.residual,
            },
            "certificate": self.certificate.to_json_dict(),
            "K": trajectory.K,
            "R": trajectory.R,
            "diverged_count": trajectory.diverged_count,
            "final_mean_V": encode_real(means[-1], hex_floats),
            "final_mean_V_star": encode_real(star_means[-1], hex_floats),
            "alpha_empirical": None if rate is None else encode_real(rate, hex_floats),
            "config_hash": self.config.config_hash,
            "config": self.config.effective,
        }

    def run(self):
        """
        Simulate without gating on feasibility

        Returns:
            tuple: (CoupledTrajectory, summary dict)
        """
        self.setup()
        if not self.certificate.feasible:
            logger.warning(f"Running {self.kind} with infeasible parameters: no contraction is certified")
        trajectory = self.simulate()
        return trajectory, self.summarize(trajectory)

    def verify(self):
        """
        Gate on feasibility, simulate and check the certified bounds

        Returns:
            tuple: (VerificationReport, CoupledTrajectory, summary dict)
        """
        self.setup()
        self.certificate.require_feasible()
        if self.star_certificate is not None:
            self.star_certificate.require_feasible()
        trajectory = self.simulate()
        report = VerificationReport(
            name=self.config.name,
            algorithm=self.kind,
            certificate=self.certificate.to_json_dict(),
            replications=trajectory.R,
            diverged_count=trajectory.diverged_count,
            max_diverged_fraction=float(self.config.verify["max_diverged_fraction"]),
            config_hash=self.config.config_hash,
            config=self.config.effective,
        )
        if self.mode in (VERIFY_CONTRACTION, VERIFY_BOTH):
            report.checks.append(self.contraction_check(trajectory))
            if self.kind in PER_STEP_KINDS:
                report.step_check = self.step_check(trajectory)
        if self.mode in (VERIFY_CONCENTRATION, VERIFY_BOTH):
            report.checks.append(self.concentration_check(trajectory))
            if self.kind == SGD_ORACLE:
                report.tail_check = self.tail_check(trajectory)
            else:
                report.level_check = self.level_check(trajectory)
        logger.info(report.summary_line())
        return report, trajectory, self.summarize(trajectory)

    def contraction_check(self, trajectory):
        means = trajectory.mean_values()
        if self.kind == CATALYST:
            # V(s0, s0') = (2 - alpha) V(x0, x0') since prev = x at the start
            v0 = means[0] / (2.0 - self.certificate.coefficient)
            return BoundCheck("catalyst_envelope", self.certificate.bounds(trajectory.K, v0), means,
                              trajectory.standard_errors())
        return BoundCheck("contraction", self.certificate.bounds(trajectory.K, means[0]), means,
                          trajectory.standard_errors())

    def concentration_check(self, trajectory):
        star_means = trajectory.mean_star_values()
        return BoundCheck("concentration", self.star_certificate.bounds(trajectory.K, star_means[0]), star_means,
                          trajectory.star_standard_errors())

    def step_check(self, trajectory):
        """Count pairs (r, k) with V_{k+1} > alpha V_k"""
        alpha = self.certificate.coefficient
        kept = trajectory.values[~trajectory.diverged]
        before, after = kept[:, :-1], kept[:, 1:]
        violations = after > alpha * before * (1.0 + STEP_RELATIVE_TOLERANCE)
        positive = before > 0
        ratios = np.divide(after, before, out=np.zeros_like(after), where=positive)
        worst = float(np.max(ratios)) if ratios.size else 0.0
        return StepCheck(coefficient=alpha, steps=int(after.size), violations=int(np.sum(violations)), worst_ratio=worst)

    def level_check(self, trajectory):
        """Final mean V* below level * V*_0 once K reaches log(level)/log(alpha)"""
        level = float(self.config.verify["concentration_level"])
        alpha = self.star_certificate.coefficient
        required = 1 if alpha == 0 else int(math.ceil(math.log(level) / math.log(alpha)))
        star_means = trajectory.mean_star_values()
        star_errors = trajectory.star_standard_errors()
        if trajectory.K < required:
            logger.info(f"Level check skipped: K={trajectory.K} < {required}")
            return {"level": level, "required_k": required, "skipped": True, "passed": True}
        final = float(star_means[-1])
        target = level * float(star_means[0])
        return {
            "level": level,
            "required_k": required,
            "skipped": False,
            "final_mean": final,
            "target": target,
            "passed": final <= target + SE_MULTIPLIER * float(star_errors[-1]),
        }

    def tail_check(self, trajectory):
        """Empirical Pr{V(s_K, x*) >= kappa} against the Markov bound E[V_K]/kappa"""
        alpha = self.star_certificate.coefficient
        eps = self.star_certificate.error
        kappa = self.config.verify.get("tail_kappa")
        if kappa is None:
            if eps == 0:
                return None
            kappa = 10.0 * eps / (1.0 - alpha)
        kappa = float(kappa)
        finals = trajectory.star_values[~trajectory.diverged, -1]
        frequency = float(np.mean(finals >= kappa))
        error = math.sqrt(frequency * (1.0 - frequency) / len(finals))
        star_v0 = float(trajectory.mean_star_values()[0])
        bound = min(1.0, self.star_certificate.bound(trajectory.K, star_v0) / kappa)
        return {
            "kappa": kappa,
            "frequency": frequency,
            "bound": bound,
            "limit": markov_tail(alpha, eps, kappa),
            "passed": frequency <= bound + SE_MULTIPLIER * error,
        }

    def write_outputs(self, trajectory, summary, report=None):
        """
        Write trajectory CSV, summary JSON and (when verifying) report JSON

        Returns:
            dict: Paths written
        """
        hex_floats = bool(self.config.output.get("hex_floats", True))
        paths = output_paths(self.config.output["directory"], self.config.name)
        trajectory.write_csv(paths["trajectory"], hex_floats=hex_floats)
        write_summary(summary, paths["summary"])
        if report is not None:
            write_report(report, paths["report"], hex_floats=hex_floats)
        else:
            paths.pop("report")
        return paths
