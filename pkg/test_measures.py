#!/usr/bin/env python3
"""
Create small sample measure files for trying out the wasserstein command
"""

import os

import numpy as np

from utils.operators import LiftedState
from utils.wasserstein import DiscreteMeasure, save_measure


def create_test_measures(seed=0, atoms=4, d=2, test_dir="test_measures"):
    """Write two uniform measures on random points and a Dirac at the origin"""
    rng = np.random.default_rng(seed)
    os.makedirs(test_dir, exist_ok=True)

    mu = DiscreteMeasure.uniform([LiftedState(x=rng.standard_normal(d)) for _ in range(atoms)])
    nu = DiscreteMeasure.uniform([LiftedState(x=1.0 + rng.standard_normal(d)) for _ in range(atoms)])
    origin = DiscreteMeasure.dirac(LiftedState(x=np.zeros(d)))

    paths = []
    for name, measure in (("mu", mu), ("nu", nu), ("origin", origin)):
        path = os.path.join(test_dir, f"{name}.json")
        save_measure(measure, path)
        paths.append(path)

    print(f"Test measures created: {', '.join(paths)}")
    print(f"Try: rsa-lab wasserstein --mu {paths[0]} --nu {paths[1]} --plan")
    return paths


if __name__ == "__main__":
    create_test_measures()
