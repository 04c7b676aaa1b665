import json

import numpy as np
import pytest

from utils.problems import (
    Composite,
    QuadraticFiniteSum,
    QuadraticTerm,
    generate_nonlinear,
    generate_quadratic,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def quadratic_problem():
    return generate_quadratic(d=3, N=4, c=1.0, L=2.0, seed=7)


@pytest.fixture
def nonlinear_problem():
    return generate_nonlinear(d=3, N=4, c=1.0, L=2.0, seed=8)


@pytest.fixture
def l1_problem():
    return generate_nonlinear(d=3, N=4, c=1.0, L=2.0, seed=9, composite=Composite("l1", 0.1))


@pytest.fixture
def diagonal_problem():
    """Q = diag(1, 2), a = (1, 1): x* = (-1, -0.5)"""
    problem = QuadraticFiniteSum([QuadraticTerm(Q=np.diag([1.0, 2.0]), a=np.array([1.0, 1.0]))], 1.0, 2.0)
    problem.certify()
    return problem


@pytest.fixture
def scalar_problem():
    """f(x) = x^2 on the real line (Q = 2, a = 0)"""
    problem = QuadraticFiniteSum([QuadraticTerm(Q=[[2.0]], a=[0.0])], 2.0, 2.0)
    problem.certify()
    return problem


@pytest.fixture
def two_component_problem():
    """d = 1, N = 2 quadratic used by the enumeration oracles"""
    terms = [QuadraticTerm(Q=[[1.0]], a=[0.5]), QuadraticTerm(Q=[[2.0]], a=[-1.0])]
    problem = QuadraticFiniteSum(terms, 1.0, 2.0)
    problem.certify()
    return problem


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment file and return its path"""

    def _write(payload, name="experiment.json"):
        path = tmp_path / name
        payload = dict(payload)
        payload.setdefault("output", {"directory": str(tmp_path / "results"), "hex_floats": True})
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write
