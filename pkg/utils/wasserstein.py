"""
Wasserstein divergence between small discrete measures

W_V(mu1, mu2) = min over couplings pi of sum_ij pi_ij V(a_i, b_j), solved
exactly with the network simplex of POT. Coupled-sample estimates give the
Monte Carlo upper bounds used by the experiment harness.
"""

import logging
from dataclasses import dataclass

import numpy as np
import ot

from utils.exceptions import InputError, ParameterError, ShapeError, SizeError
from utils.operators import LiftedState, RandomnessDraw, step
from utils.serialization_utils import decode_real, encode_real, read_json, write_json

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12
MARGINAL_TOLERANCE = 1e-10
MAX_COST_CELLS = 10 ** 6
EMD_MAX_ITERATIONS = 10 ** 7


class DiscreteMeasure:
    """Finitely supported probability measure on lifted states"""

    def __init__(self, atoms, weights=None):
        if len(atoms) == 0:
            raise InputError("A discrete measure needs at least one atom")
        self.atoms = list(atoms)
        if weights is None:
            weights = np.full(len(self.atoms), 1.0 / len(self.atoms))
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (len(self.atoms),):
            raise InputError(f"Expected {len(self.atoms)} weights, got shape {self.weights.shape}")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise InputError("Measure weights must be positive and finite")
        total = float(np.sum(self.weights))
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise InputError(f"Measure weights sum to {total!r}, not 1")
        signature = self.atoms[0].signature()
        if any(atom.signature() != signature for atom in self.atoms):
            raise ShapeError("All atoms of a measure must share the lifted state shape")

    @classmethod
    def dirac(cls, state):
        return cls([state], [1.0])

    @classmethod
    def uniform(cls, atoms):
        return cls(atoms)

    def __len__(self):
        return len(self.atoms)

    def to_json_dict(self, hex_floats=True):
        return {
            "atoms": [atom.to_json_dict(hex_floats) for atom in self.atoms],
            "weights": [encode_real(w, hex_floats) for w in self.weights],
        }

    @classmethod
    def from_json_dict(cls, data):
        try:
            atoms = [LiftedState.from_json_dict(atom) for atom in data["atoms"]]
            weights = [decode_real(w) for w in data["weights"]]
        except KeyError as e:
            raise InputError(f"Measure file is missing field {e}") from e
        return cls(atoms, weights)


@dataclass
class CouplingPlan:
    """Coupling matrix pi with its objective sum_ij pi_ij V_ij"""

    matrix: np.ndarray
    objective: float

    def marginal_errors(self, mu1, mu2):
        """Largest row and column marginal violations"""
        rows = float(np.max(np.abs(self.matrix.sum(axis=1) - mu1.weights)))
        columns = float(np.max(np.abs(self.matrix.sum(axis=0) - mu2.weights)))
        return rows, columns

    def is_feasible(self, mu1, mu2, tolerance=MARGINAL_TOLERANCE):
        rows, columns = self.marginal_errors(mu1, mu2)
        return rows <= tolerance and columns <= tolerance and bool(np.all(self.matrix >= -tolerance))

    def to_dict(self):
        return {"matrix": self.matrix.tolist(), "objective": self.objective}


def cost_matrix(mu1, mu2, V):
    """C_ij = V(a_i, b_j)"""
    cells = len(mu1) * len(mu2)
    if cells > MAX_COST_CELLS:
        raise SizeError(f"Cost matrix of {cells} cells exceeds the limit of {MAX_COST_CELLS}")
    return np.array([[V.evaluate(a, b) for b in mu2.atoms] for a in mu1.atoms])


def wv_dirac(mu, s_star, V):
    """
    W_V(mu, delta_{s*}) = sum_i w_i V(a_i, s*), the only coupling being the product

    Args:
        mu (DiscreteMeasure): Measure
        s_star (LiftedState): Dirac location
        V (DivergenceSpec): Divergence

    Returns:
        float: The divergence
    """
    costs = np.array([V.evaluate(atom, s_star) for atom in mu.atoms])
    return float(np.dot(mu.weights, costs))


def wv_exact(mu1, mu2, V):
    """
    Exact Wasserstein divergence by network simplex

    Args:
        mu1 (DiscreteMeasure): First measure
        mu2 (DiscreteMeasure): Second measure
        V (DivergenceSpec): Divergence used as transport cost

    Returns:
        tuple: (value, CouplingPlan)
    """
    try:
        if len(mu2) == 1:
            costs = np.array([V.evaluate(atom, mu2.atoms[0]) for atom in mu1.atoms])
            value = float(np.dot(mu1.weights, costs))
            return value, CouplingPlan(matrix=mu1.weights[:, None] * 1.0, objective=value)
        if len(mu1) == 1:
            costs = np.array([V.evaluate(atom, mu1.atoms[0]) for atom in mu2.atoms])
            value = float(np.dot(mu2.weights, costs))
            return value, CouplingPlan(matrix=mu2.weights[None, :] * 1.0, objective=value)

        C = cost_matrix(mu1, mu2, V)
        # POT requires marginals with identical totals in float64
        a = mu1.weights / mu1.weights.sum()
        b = mu2.weights / mu2.weights.sum()
        plan, log = ot.emd(a, b, C, numItermax=EMD_MAX_ITERATIONS, log=True)
        if log.get("warning"):
            logger.warning(f"Network simplex reported: {log['warning']}")
        plan = np.maximum(np.asarray(plan, dtype=float), 0.0)
        value = float(np.sum(plan * C))
        logger.debug(f"Exact W_V over {len(mu1)}x{len(mu2)} atoms: {value:.6g}")
        return value, CouplingPlan(matrix=plan, objective=value)

    except SizeError as e:
        logger.error(f"Error computing Wasserstein divergence: {str(e)}")
        raise


def pushforward(mu, f):
    """mu o f^{-1}: atoms mapped by f, weights kept"""
    return DiscreteMeasure([f(atom) for atom in mu.atoms], mu.weights.copy())


def wv_pullback_bound(mu, f, V):
    """
    Upper bound W_V(mu, mu o f^{-1}) <= sum_i w_i V(a_i, f(a_i))

    Returns:
        float: The coupling cost of (s, f(s)) under mu
    """
    costs = np.array([V.evaluate(atom, f(atom)) for atom in mu.atoms])
    return float(np.dot(mu.weights, costs))


def enumerate_index_draws(N):
    """Every single-index draw with probability 1/N"""
    return [RandomnessDraw(indices=np.array([n])) for n in range(N)], np.full(N, 1.0 / N)


def kernel_pushforward(mu, operator, draws, probabilities):
    """
    mu Q for an operator whose randomness is enumerated

    Each atom a_i is pushed through every draw j, giving the atom T_j(a_i)
    with weight w_i p_j.

    Args:
        mu (DiscreteMeasure): Measure
        operator (RandomOperator): Operator
        draws (list): Enumerated draws
        probabilities (numpy.ndarray): Draw probabilities, summing to 1

    Returns:
        DiscreteMeasure: The pushed-forward measure
    """
    probabilities = np.asarray(probabilities, dtype=float)
    if len(draws) != len(probabilities):
        raise ShapeError("Need one probability per enumerated draw")
    atoms = []
    weights = []
    for atom, weight in zip(mu.atoms, mu.weights):
        for draw, probability in zip(draws, probabilities):
            atoms.append(step(operator, atom, draw))
            weights.append(weight * probability)
    weights = np.asarray(weights)
    return DiscreteMeasure(atoms, weights / weights.sum())


def coupled_upper_bound(trajectory, k):
    """
    Mean and standard error of V_k across replications

    Estimates E[V(s_k^a, s_k^b)], an upper bound on W_V between the two
    chains' marginals at step k.

    Returns:
        dict: {"mean", "standard_error", "replications"}
    """
    kept = trajectory.values[~trajectory.diverged, k]
    if len(kept) < 2:
        raise ParameterError(f"Need at least 2 replications, got {len(kept)}")
    return {
        "mean": float(np.mean(kept)),
        "standard_error": float(np.std(kept, ddof=1) / np.sqrt(len(kept))),
        "replications": int(len(kept)),
    }


def save_measure(mu, file_path, hex_floats=True):
    write_json(mu.to_json_dict(hex_floats), file_path)


def load_measure(file_path):
    return DiscreteMeasure.from_json_dict(read_json(file_path))
