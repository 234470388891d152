import numpy as np
import pytest
from scipy.special import softmax

from conftest import random_measure
from treesliced.core.errors import DimensionMismatchError, InvalidConfigError, InvalidMeasureError
from treesliced.core.geometry import (
    DiscreteMeasure,
    IsometryEd,
    SphericalTree,
    TreeSystem,
    apply_isometry,
    random_isometry,
    random_orthogonal,
    sample_spherical_tree,
    sample_tree_system,
)
from treesliced.core.splitting import (
    SplitMode,
    SplitWeights,
    point_line_distance,
    splitting_euclidean,
    splitting_spherical,
)
from treesliced.utils.rng import make_rng


def test_point_line_distance_hand_values():
    theta = np.array([1.0, 0.0])
    assert point_line_distance(np.array([3.0, 4.0]), np.zeros(2), theta) == 4.0
    assert point_line_distance(np.array([1.0, 2.0]) + 2.0 * theta, np.array([1.0, 2.0]), theta) == 0.0


def test_point_line_distance_rejects_non_unit_direction():
    with pytest.raises(InvalidMeasureError):
        point_line_distance(np.ones(2), np.zeros(2), np.array([1.0, 1.0]))


def test_point_line_distance_is_isometry_invariant(rng):
    g = random_isometry(4, rng)
    y, x = rng.standard_normal(4), rng.standard_normal(4)
    theta = rng.standard_normal(4)
    theta /= np.linalg.norm(theta)
    before = point_line_distance(y, x, theta)
    after = point_line_distance(g.Q @ y + g.a, g.Q @ x + g.a, g.Q @ theta)
    assert after == pytest.approx(before, abs=1e-10)


def test_identical_lines_split_evenly(rng):
    theta = np.array([[0.6, 0.8], [0.6, 0.8]])
    weights = splitting_euclidean(random_measure(rng, 5, 2), TreeSystem(np.zeros(2), theta))
    np.testing.assert_allclose(weights.values, 0.5)


def test_linear_softmax_hand_value(planar_tree):
    # distance 0 to the first axis, ln 2 to the second
    m = DiscreteMeasure.uniform(np.array([[np.log(2.0), 0.0]]))
    weights = splitting_euclidean(m, planar_tree, SplitMode.LINEAR)
    np.testing.assert_allclose(weights.values[0], [1.0 / 3.0, 2.0 / 3.0], atol=1e-14)


def test_negative_sign_favours_closer_lines(planar_tree):
    m = DiscreteMeasure.uniform(np.array([[np.log(2.0), 0.0]]))
    weights = splitting_euclidean(m, planar_tree, SplitMode.LINEAR, sign=-1)
    np.testing.assert_allclose(weights.values[0], [2.0 / 3.0, 1.0 / 3.0], atol=1e-14)


def test_temperature_flattens_the_split(planar_tree):
    m = DiscreteMeasure.uniform(np.array([[3.0, 0.5]]))
    sharp = splitting_euclidean(m, planar_tree, temperature=0.5).values[0]
    flat = splitting_euclidean(m, planar_tree, temperature=50.0).values[0]
    assert np.ptp(flat) < np.ptp(sharp)


@pytest.mark.parametrize("kwargs", [{"temperature": 0.0}, {"radius": -1.0}, {"sign": 2}])
def test_splitting_rejects_bad_parameters(planar_tree, kwargs):
    with pytest.raises(InvalidConfigError):
        splitting_euclidean(DiscreteMeasure.uniform(np.ones((1, 2))), planar_tree, **kwargs)


def test_splitting_dimension_mismatch(planar_tree):
    with pytest.raises(DimensionMismatchError):
        splitting_euclidean(DiscreteMeasure.uniform(np.ones((1, 3))), planar_tree)


def test_circular_weights_match_direct_distances(rng):
    m = random_measure(rng, 30, 4)
    tree = sample_tree_system(4, 5, 1.0, "iid_uniform", rng)
    weights = splitting_euclidean(m, tree, SplitMode.CIRCULAR, radius=0.6)
    diff = m.points - tree.root
    distances = []
    for theta in tree.directions:
        rho = np.linalg.norm(diff - 0.6 * theta, axis=1)
        distances.append(np.linalg.norm(diff - rho[:, None] * theta, axis=1))
    np.testing.assert_allclose(weights.values, softmax(np.stack(distances, axis=1), axis=1), atol=1e-10)


@pytest.mark.parametrize("mode,radius", [(SplitMode.LINEAR, 0.0), (SplitMode.CIRCULAR, 0.0), (SplitMode.CIRCULAR, 0.8)])
def test_euclidean_splitting_rows_and_invariance(rng, mode, radius):
    m = random_measure(rng, 30, 3)
    tree = sample_tree_system(3, 4, 1.0, "iid_uniform", rng)
    g = random_isometry(3, rng)
    before = splitting_euclidean(m, tree, mode, radius)
    after = splitting_euclidean(apply_isometry(g, m), apply_isometry(g, tree), mode, radius)
    np.testing.assert_allclose(before.values.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(after.values, before.values, atol=1e-9)


def test_splitting_is_continuous(rng):
    m = random_measure(rng, 10, 3)
    tree = sample_tree_system(3, 4, 1.0, "iid_uniform", rng)
    nudged = m.with_points(m.points + 1e-7 * rng.standard_normal(m.points.shape))
    for mode in SplitMode:
        change = splitting_euclidean(nudged, tree, mode, 0.5).values - splitting_euclidean(m, tree, mode, 0.5).values
        assert np.max(np.abs(change)) < 1e-5


def test_split_weights_validation():
    with pytest.raises(InvalidMeasureError):
        SplitWeights(np.array([[0.5, 0.6]]))
    with pytest.raises(InvalidMeasureError):
        SplitWeights(np.array([[1.5, -0.5]]))


def test_spherical_split_uniform_at_root_and_antipode():
    tree = sample_spherical_tree(2, 3, make_rng(20))
    m = DiscreteMeasure.uniform(np.stack([tree.root, -tree.root]), spherical=True)
    np.testing.assert_allclose(splitting_spherical(m, tree).values, 1.0 / 3.0)


def test_spherical_split_hand_value():
    # root at the north pole, opposite edges along +-e1, point 0.4 rad from the first edge
    root = np.array([0.0, 0.0, 1.0])
    tree = SphericalTree(root=root, edges=np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]))
    polar, tangent = 1.0, 0.4
    direction = np.cos(tangent) * np.array([1.0, 0.0, 0.0]) + np.sin(tangent) * np.array([0.0, 1.0, 0.0])
    y = np.cos(polar) * root + np.sin(polar) * direction
    betas = np.array([tangent * np.sin(polar), (np.pi - tangent) * np.sin(polar)])
    expected = np.exp(betas) / np.exp(betas).sum()
    weights = splitting_spherical(DiscreteMeasure.uniform(y[None, :], spherical=True), tree)
    np.testing.assert_allclose(weights.values[0], expected, atol=1e-12)


def test_spherical_split_rotation_invariance(sphere_pair):
    rng = make_rng(21)
    tree = sample_spherical_tree(2, 4, rng)
    rotation = IsometryEd(Q=random_orthogonal(3, rng))
    m = sphere_pair[0]
    before = splitting_spherical(m, tree).values
    after = splitting_spherical(apply_isometry(rotation, m), apply_isometry(rotation, tree)).values
    np.testing.assert_allclose(after, before, atol=1e-9)
    np.testing.assert_allclose(before.sum(axis=1), 1.0, atol=1e-10)


def test_spherical_split_dimension_mismatch(sphere_pair):
    with pytest.raises(DimensionMismatchError):
        splitting_spherical(sphere_pair[0], sample_spherical_tree(3, 2, make_rng(0)))
