"""
Iterated random operator engine

Lifted states, one-step application s_{k+1} = T_k(s_k), epoch composition
Pi(H_{tau-1} o ... o H_0) and coupled two-chain simulation driven by common
random numbers.
"""

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from utils.exceptions import NonFiniteStateError, ParameterError, ShapeError
from utils.rng_utils import ROLE_DRAW, ROLE_DRAW_B, derive_rng
from utils.serialization_utils import decode_array, encode_array, encode_real

logger = logging.getLogger(__name__)

__all__ = [
    "LiftedState",
    "RandomnessDraw",
    "RandomOperator",
    "EpochOperator",
    "CoupledTrajectory",
    "step",
    "run_epoch",
    "run_coupled",
    "project_ball",
    "derive_rng",
]


@dataclass(frozen=True)
class LiftedState:
    """Iterate x plus the optional previous iterate and proxy table"""

    x: np.ndarray
    prev: np.ndarray = None
    proxies: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        if self.x.ndim != 1:
            raise ShapeError(f"Iterate must be a vector, got shape {self.x.shape}")
        if self.prev is not None:
            prev = np.atleast_1d(np.asarray(self.prev, dtype=float))
            if prev.shape != self.x.shape:
                raise ShapeError(f"Previous iterate shape {prev.shape} differs from {self.x.shape}")
            object.__setattr__(self, "prev", prev)
        if self.proxies is not None:
            proxies = np.asarray(self.proxies, dtype=float)
            if proxies.ndim != 2 or proxies.shape[1] != self.x.size:
                raise ShapeError(f"Proxy table must be (n, {self.x.size}), got {proxies.shape}")
            object.__setattr__(self, "proxies", proxies)

    @property
    def d(self):
        return self.x.size

    def signature(self):
        """Shape signature, fixed along a trajectory"""
        return (
            self.x.shape,
            None if self.prev is None else self.prev.shape,
            None if self.proxies is None else self.proxies.shape,
        )

    def flat(self):
        parts = [self.x]
        if self.prev is not None:
            parts.append(self.prev)
        if self.proxies is not None:
            parts.append(self.proxies.ravel())
        return np.concatenate(parts)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.flat())))

    def same_as(self, other):
        """Componentwise equality"""
        if self.signature() != other.signature():
            return False
        if not np.array_equal(self.x, other.x):
            return False
        if self.prev is not None and not np.array_equal(self.prev, other.prev):
            return False
        if self.proxies is not None and not np.array_equal(self.proxies, other.proxies):
            return False
        return True

    def copy(self):
        return LiftedState(
            x=self.x.copy(),
            prev=None if self.prev is None else self.prev.copy(),
            proxies=None if self.proxies is None else self.proxies.copy(),
        )

    def with_values(self, **changes):
        return replace(self, **changes)

    def to_json_dict(self, hex_floats=True):
        payload = {"x": encode_array(self.x, hex_floats)}
        if self.prev is not None:
            payload["prev"] = encode_array(self.prev, hex_floats)
        if self.proxies is not None:
            payload["proxies"] = encode_array(self.proxies, hex_floats)
        return payload

    @classmethod
    def from_json_dict(cls, data):
        if not isinstance(data, dict):
            return cls(x=decode_array(data))
        proxies = data.get("proxies")
        if proxies is not None:
            proxies = decode_array(proxies)
            proxies = proxies.reshape(-1, np.atleast_1d(decode_array(data["x"])).size)
        prev = data.get("prev")
        return cls(
            x=decode_array(data["x"]),
            prev=None if prev is None else decode_array(prev),
            proxies=proxies,
        )


@dataclass(frozen=True)
class RandomnessDraw:
    """
    Randomness consumed by one application of an operator

    indices: sampled component indices (0-based); noise: bounded noise
    vector; epoch_length and inner: the stopping time and the inner draws
    of an epoch operator; k: step index for time-varying operators.
    """

    indices: np.ndarray = None
    noise: np.ndarray = None
    epoch_length: int = None
    inner: tuple = field(default_factory=tuple)
    k: int = 0

    def inner_draws(self):
        return list(self.inner)


class RandomOperator:
    """
    Random operator T_k on a lifted state space

    Subclasses implement sample_draw, apply, initial_state and fixed_point.
    Operators are immutable; all mutation lives in the states they return.
    """

    name = "operator"
    variance_reduced = False
    epoch_based = False

    def __init__(self, problem, eta):
        if eta < 0:
            raise ParameterError(f"Step size must be nonnegative, got {eta}")
        self.problem = problem
        self.eta = float(eta)

    def sample_draw(self, rng, k=0):
        raise NotImplementedError

    def apply(self, state, draw):
        raise NotImplementedError

    def initial_state(self, x0):
        """Canonical lifting of a starting iterate"""
        return LiftedState(x=np.asarray(x0, dtype=float).copy())

    def fixed_point(self):
        """Lifting s* of the certified optimizer"""
        return self.initial_state(self.problem.require_optimizer())

    def prepare(self, states):
        """Operator to use for chains started at the given states"""
        return self

    def check_state(self, state):
        if state.d != self.problem.d:
            raise ShapeError(f"{self.name} expects {self.problem.d}-dimensional iterates, got {state.d}")

    def check_draw(self, draw):
        if draw.indices is not None:
            indices = np.asarray(draw.indices)
            if np.any(indices < 0) or np.any(indices >= self.problem.N):
                raise ShapeError(f"Draw indices must lie in [0, {self.problem.N})")
        if draw.noise is not None and np.shape(draw.noise) != (self.problem.d,):
            raise ShapeError(f"Noise vector must have shape ({self.problem.d},)")

    def sample_index(self, rng):
        return int(rng.integers(self.problem.N))

    def describe(self):
        return {"name": self.name, "eta": self.eta}


class EpochOperator(RandomOperator):
    """
    Epoch operator T_k(s) = Pi(H_{tau-1,k} o ... o H_{0,k})(s)

    Subclasses implement init_inner, inner_step, project and
    sample_inner_draw; epoch lengths are fixed at M or geometric with mean M
    capped at 10 M.
    """

    epoch_based = True
    GEOMETRIC_CAP_FACTOR = 10

    def __init__(self, problem, eta, M, epoch_law="fixed"):
        super().__init__(problem, eta)
        if int(M) < 1:
            raise ParameterError(f"Epoch length M must be at least 1, got {M}")
        if epoch_law not in ("fixed", "geometric"):
            raise ParameterError(f"Unknown epoch-length law: {epoch_law}")
        self.M = int(M)
        self.epoch_law = epoch_law

    def sample_epoch_length(self, rng):
        if self.epoch_law == "fixed":
            return self.M
        return int(min(rng.geometric(1.0 / self.M), self.GEOMETRIC_CAP_FACTOR * self.M))

    def sample_inner_draw(self, rng):
        return RandomnessDraw(indices=np.array([self.sample_index(rng)]))

    def sample_draw(self, rng, k=0):
        tau = self.sample_epoch_length(rng)
        inner = tuple(self.sample_inner_draw(rng) for _ in range(tau))
        return RandomnessDraw(epoch_length=tau, inner=inner, k=k)

    def check_draw(self, draw):
        for inner_draw in draw.inner:
            super().check_draw(inner_draw)

    def init_inner(self, state):
        raise NotImplementedError

    def inner_step(self, inner, anchor, draw):
        raise NotImplementedError

    def project(self, inner):
        raise NotImplementedError

    def apply(self, state, draw):
        return run_epoch(self, state, draw.inner_draws())

    def describe(self):
        return {"name": self.name, "eta": self.eta, "M": self.M, "epoch_law": self.epoch_law}


def step(operator, state, draw):
    """
    Apply one random operator: s_{k+1} = T_k(s_k)

    Deterministic in (state, draw): replaying a draw reproduces the output
    bit for bit.

    Args:
        operator (RandomOperator): Operator
        state (LiftedState): Current state
        draw (RandomnessDraw): Randomness of this step

    Returns:
        LiftedState: Next state
    """
    operator.check_state(state)
    operator.check_draw(draw)
    result = operator.apply(state, draw)
    if result.signature() != state.signature():
        raise ShapeError(f"{operator.name} changed the state shape from {state.signature()} to {result.signature()}")
    if not result.is_finite():
        raise NonFiniteStateError(f"{operator.name} produced a non-finite state", step=draw.k)
    return result


def run_epoch(operator, state, inner_draws):
    """
    Compose the inner operators of one epoch and project

    Args:
        operator (EpochOperator): Epoch operator
        state (LiftedState): Anchor s_k
        inner_draws (list): tau >= 1 inner draws, each consumed exactly once

    Returns:
        LiftedState: Pi of the final inner state
    """
    if len(inner_draws) == 0:
        raise ParameterError("Epoch length tau must be at least 1")
    inner = operator.init_inner(state)
    for draw in inner_draws:
        inner = operator.inner_step(inner, state, draw)
    return operator.project(inner)


def project_ball(state, radius):
    """
    Radially rescale x, prev and every proxy row onto the ball of given radius

    Args:
        state (LiftedState): State
        radius (float): Ball radius, > 0

    Returns:
        LiftedState: Projected state (the same object when already inside)
    """
    if not radius > 0:
        raise ParameterError(f"Projection radius must be positive, got {radius}")

    def _project(vector):
        norm = np.linalg.norm(vector)
        return vector if norm <= radius else vector * (radius / norm)

    inside = np.linalg.norm(state.x) <= radius
    if state.prev is not None:
        inside = inside and np.linalg.norm(state.prev) <= radius
    if state.proxies is not None:
        inside = inside and bool(np.all(np.linalg.norm(state.proxies, axis=1) <= radius))
    if inside:
        return state
    proxies = None
    if state.proxies is not None:
        proxies = np.stack([_project(row) for row in state.proxies]) if len(state.proxies) else state.proxies
    return LiftedState(
        x=_project(state.x),
        prev=None if state.prev is None else _project(state.prev),
        proxies=proxies,
    )


@dataclass
class CoupledTrajectory:
    """Per-replication V_k (and V*_k) along two coupled chains, k = 0..K"""

    values: np.ndarray
    star_values: np.ndarray = None
    diverged: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.diverged is None:
            self.diverged = np.zeros(self.values.shape[0], dtype=bool)

    @property
    def R(self):
        return self.values.shape[0]

    @property
    def K(self):
        return self.values.shape[1] - 1

    @property
    def diverged_count(self):
        return int(np.sum(self.diverged))

    def _kept(self, array):
        return array[~self.diverged]

    def mean_values(self):
        kept = self._kept(self.values)
        return np.mean(kept, axis=0) if len(kept) else np.full(self.K + 1, np.nan)

    def standard_errors(self):
        return self._standard_errors(self.values)

    def mean_star_values(self):
        if self.star_values is None:
            return None
        kept = self._kept(self.star_values)
        return np.mean(kept, axis=0) if len(kept) else np.full(self.K + 1, np.nan)

    def star_standard_errors(self):
        if self.star_values is None:
            return None
        return self._standard_errors(self.star_values)

    def _standard_errors(self, array):
        kept = self._kept(array)
        if len(kept) < 2:
            return np.zeros(self.K + 1)
        return np.std(kept, axis=0, ddof=1) / np.sqrt(len(kept))

    def rows(self, hex_floats=False):
        """CSV rows: replication, k, V, V_star, diverged"""

        def _format(value):
            if hex_floats:
                return encode_real(value, True)
            return repr(float(value))

        for r in range(self.R):
            for k in range(self.K + 1):
                star = "" if self.star_values is None else _format(self.star_values[r, k])
                yield [r, k, _format(self.values[r, k]), star, int(self.diverged[r])]

    def write_csv(self, file_path, hex_floats=False):
        """
        Write the trajectory CSV

        Args:
            file_path (str): Output path
            hex_floats (bool): Write reals as hex floats for bit-exact archival
        """
        try:
            directory = os.path.dirname(file_path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(file_path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["replication", "k", "V", "V_star", "diverged"])
                writer.writerows(self.rows(hex_floats))
            logger.info(f"Wrote trajectory CSV to {file_path}")
        except Exception as e:
            logger.error(f"Error writing trajectory CSV: {str(e)}")
            raise


def _resolve_start(start, r):
    return start(r) if callable(start) else start


def _run_replication(operator, s0_a, s0_b, K, r, V, master_seed, s_star, star_divergence,
                     independent, projection_radius):
    state_a = _resolve_start(s0_a, r)
    state_b = _resolve_start(s0_b, r)
    if state_a.signature() != state_b.signature():
        raise ShapeError("Coupled chains must start from states of the same shape")
    chain_operator = operator.prepare((state_a, state_b))

    values = np.full(K + 1, np.nan)
    star_values = None if s_star is None else np.full(K + 1, np.nan)
    values[0] = V.evaluate(state_a, state_b)
    if s_star is not None:
        star_values[0] = star_divergence.evaluate(state_a, s_star)

    for k in range(K):
        try:
            draw_a = chain_operator.sample_draw(derive_rng(master_seed, r, k, ROLE_DRAW), k)
            if independent:
                draw_b = chain_operator.sample_draw(derive_rng(master_seed, r, k, ROLE_DRAW_B), k)
            else:
                draw_b = draw_a
            state_a = step(chain_operator, state_a, draw_a)
            state_b = step(chain_operator, state_b, draw_b)
            if projection_radius is not None:
                state_a = project_ball(state_a, projection_radius)
                state_b = project_ball(state_b, projection_radius)
            values[k + 1] = V.evaluate(state_a, state_b)
            if s_star is not None:
                star_values[k + 1] = star_divergence.evaluate(state_a, s_star)
        except NonFiniteStateError as e:
            logger.warning(f"Replication {r} diverged at step {k}: {str(e)}")
            return values, star_values, True
    return values, star_values, False


def run_coupled(operator, s0_a, s0_b, K, R, V, master_seed, s_star=None, star_divergence=None,
                independent=False, projection_radius=None, workers=None):
    """
    Simulate R replications of two chains driven by the same draws

    Both chains of replication r consume the draw streams
    derive_rng(master_seed, r, k, "draw"), so the output depends only on the
    inputs, never on the worker count.

    Args:
        operator (RandomOperator): Operator
        s0_a (LiftedState | callable): Start of chain a, or r -> start
        s0_b (LiftedState | callable): Start of chain b, or r -> start
        K (int): Steps (epochs for epoch operators)
        R (int): Replications
        V (DivergenceSpec): Divergence recorded between the chains
        master_seed (int): Master seed
        s_star (LiftedState): Fixed point; enables V*_k = V(s_k^a, s*)
        star_divergence (DivergenceSpec): Divergence for V*_k (default V)
        independent (bool): Give chain b its own draws (diagnostics only)
        projection_radius (float): Project both chains onto this ball after every step
        workers (int): Worker threads

    Returns:
        CoupledTrajectory: Recorded values, diverged replications flagged
    """
    if K < 1 or R < 1:
        raise ParameterError(f"Need K >= 1 and R >= 1, got K={K}, R={R}")
    workers = max(1, int(workers or 1))
    star_divergence = V if star_divergence is None else star_divergence
    try:
        logger.info(f"Running {R} coupled replications of {operator.name} for {K} steps on {workers} worker(s)")

        def _job(r):
            return _run_replication(operator, s0_a, s0_b, K, r, V, master_seed, s_star, star_divergence,
                                    independent, projection_radius)

        if workers == 1:
            results = [_job(r) for r in range(R)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                results = list(executor.map(_job, range(R)))

        values = np.stack([result[0] for result in results])
        star_values = None if s_star is None else np.stack([result[1] for result in results])
        diverged = np.array([result[2] for result in results], dtype=bool)
        if diverged.any():
            logger.warning(f"{int(diverged.sum())} of {R} replications diverged")
        return CoupledTrajectory(values=values, star_values=star_values, diverged=diverged)

    except Exception as e:
        logger.error(f"Error running coupled simulation: {str(e)}")
        raise
