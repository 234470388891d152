"""
Shared fixtures for the treesliced test suite.
"""

import numpy as np
import pytest

from treesliced.core.config import DistanceConfig
from treesliced.core.geometry import DiscreteMeasure, TreeSystem
from treesliced.utils.rng import make_rng


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(12345)


def random_measure(rng: np.random.Generator, n: int, d: int, spherical: bool = False) -> DiscreteMeasure:
    """Dirichlet-weighted Gaussian (or unit-sphere) point cloud."""
    points = rng.standard_normal((n, d))
    if spherical:
        points /= np.linalg.norm(points, axis=1, keepdims=True)
    return DiscreteMeasure(points=points, weights=rng.dirichlet(np.ones(n)), spherical=spherical)


@pytest.fixture
def measure_pair(rng):
    return random_measure(rng, 7, 3), random_measure(rng, 5, 3)


@pytest.fixture
def sphere_pair(rng):
    return random_measure(rng, 7, 3, spherical=True), random_measure(rng, 5, 3, spherical=True)


@pytest.fixture
def small_config() -> DistanceConfig:
    return DistanceConfig(num_trees=5, lines_per_tree=3, radius=0.5, seed=7)


@pytest.fixture
def planar_tree() -> TreeSystem:
    return TreeSystem(root=np.zeros(2), directions=np.eye(2))
