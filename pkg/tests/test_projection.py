import numpy as np
import pytest
from pydantic import ValidationError

from conftest import random_measure
from treesliced.core.config import SpatialMapConfig
from treesliced.core.errors import DimensionMismatchError, InvalidConfigError, InvalidMeasureError
from treesliced.core.geometry import (
    DiscreteMeasure,
    IsometryEd,
    TreeSystem,
    apply_isometry,
    random_isometry,
    random_orthogonal,
    sample_spherical_tree,
    sample_tree_system,
)
from treesliced.core.projection import (
    CoordinateMatrix,
    CoordinateRange,
    project_circular,
    project_linear,
    project_spherical,
    spatial_ablation_grid,
    spatial_map,
    spatial_map_derivative,
    spherical_spatial_map,
    suggest_radius,
)
from treesliced.utils.rng import make_rng

E1 = np.array([[1.0, 0.0]])


def point(*coords):
    return DiscreteMeasure.uniform(np.array([coords], dtype=float))


def test_linear_coordinate_readout():
    assert project_linear(point(3, 4), TreeSystem(np.zeros(2), E1)).values[0, 0] == 3.0
    assert project_linear(point(3, 4), TreeSystem(np.array([1.0, 0.0]), E1)).values[0, 0] == 2.0


def test_circular_r0_is_the_norm_on_every_line(planar_tree):
    coords = project_circular(point(3, 4), planar_tree, 0.0)
    assert coords.shared
    np.testing.assert_array_equal(coords.values, [[5.0], [5.0]])


def test_circular_shifted_center():
    coords = project_circular(point(3, 4), TreeSystem(np.zeros(2), E1), 1.0)
    assert coords.values[0, 0] == pytest.approx(np.sqrt(20.0))
    assert coords.range == CoordinateRange.NONNEG_RAY


def test_circular_point_at_sphere_center():
    tree = TreeSystem(np.array([1.0, 1.0]), E1)
    assert project_circular(point(3.0, 1.0), tree, 2.0).values[0, 0] == 0.0


def test_circular_rejects_negative_radius(planar_tree):
    with pytest.raises(InvalidConfigError):
        project_circular(point(1, 1), planar_tree, -0.1)


def test_circular_fast_path_matches_general_path(rng):
    m = random_measure(rng, 50, 4)
    tree = sample_tree_system(4, 5, 0.3, "iid_uniform", rng)
    fast = project_circular(m, tree, 0.0, fast_path=True)
    general = project_circular(m, tree, 0.0, fast_path=False)
    assert fast.shared and not general.shared
    np.testing.assert_array_equal(fast.values, general.values)


def test_circular_coordinates_match_direct_norms(rng):
    m = random_measure(rng, 40, 5)
    tree = sample_tree_system(5, 6, 1.0, "iid_uniform", rng)
    coords = project_circular(m, tree, 0.4)
    diff = m.points - tree.root
    direct = np.stack([np.linalg.norm(diff - 0.4 * theta, axis=1) for theta in tree.directions])
    np.testing.assert_allclose(coords.values, direct, atol=1e-10)


def test_projection_dimension_mismatch(planar_tree):
    with pytest.raises(DimensionMismatchError):
        project_linear(point(1, 2, 3), planar_tree)


def test_projections_are_isometry_covariant(rng):
    m = random_measure(rng, 20, 3)
    tree = sample_tree_system(3, 4, 1.0, "iid_uniform", rng)
    g = random_isometry(3, rng)
    moved_m, moved_tree = apply_isometry(g, m), apply_isometry(g, tree)
    np.testing.assert_allclose(
        project_linear(moved_m, moved_tree).values, project_linear(m, tree).values, atol=1e-10
    )
    np.testing.assert_allclose(
        project_circular(moved_m, moved_tree, 0.7).values, project_circular(m, tree, 0.7).values, atol=1e-10
    )


def test_coordinate_matrix_range_checks():
    with pytest.raises(InvalidMeasureError):
        CoordinateMatrix(np.array([[-1.0]]), CoordinateRange.NONNEG_RAY)
    with pytest.raises(InvalidMeasureError):
        CoordinateMatrix(np.array([[4.0]]), CoordinateRange.SPHERICAL_0_PI)


def test_spatial_map_values():
    assert spatial_map(np.array([[2.0]]), SpatialMapConfig())[0, 0] == 10.0
    x = np.array([[0.5, -1.5]])
    np.testing.assert_array_equal(spatial_map(x, SpatialMapConfig.identity()), x)


def test_spatial_map_is_strictly_increasing():
    rng = make_rng(10)
    for cfg in spatial_ablation_grid():
        a = rng.normal(scale=3.0, size=10000)
        b = a + rng.uniform(1e-6, 1.0, size=10000)
        assert np.all(spatial_map(b[:, None], cfg) > spatial_map(a[:, None], cfg))


def test_spatial_map_derivative_matches_difference_quotient():
    cfg = SpatialMapConfig(degree=5, gamma=0.5)
    x = np.linspace(-2.0, 2.0, 9)[:, None]
    h = 1e-6
    numeric = (spatial_map(x + h, cfg) - spatial_map(x - h, cfg)) / (2 * h)
    np.testing.assert_allclose(spatial_map_derivative(x, cfg), numeric, rtol=1e-7)


@pytest.mark.parametrize("degree", [2, 4, 1])
def test_spatial_map_rejects_even_or_low_degree(degree):
    with pytest.raises(ValidationError):
        SpatialMapConfig(degree=degree)


def test_ablation_grid_covers_cubic_and_quintic():
    grid = spatial_ablation_grid()
    assert len(grid) == 10
    assert {cfg.degree for cfg in grid} == {3, 5}
    assert sorted({cfg.gamma for cfg in grid}) == [0.1, 0.5, 1.0, 5.0, 10.0]


def test_suggest_radius():
    assert suggest_radius(4) == 0.5


def test_spherical_coordinates_at_root_antipode_and_equator():
    tree = sample_spherical_tree(2, 3, make_rng(11))
    x = tree.root
    equator = tree.edges[0]
    m = DiscreteMeasure.uniform(np.stack([x, -x, equator]), spherical=True)
    coords = project_spherical(m, tree)
    assert coords.shared and coords.num_lines == 3
    np.testing.assert_allclose(coords.shared_row, [0.0, np.pi, np.pi / 2], atol=1e-7)


def test_spherical_projection_needs_matching_dimension(sphere_pair):
    tree = sample_spherical_tree(3, 2, make_rng(0))
    with pytest.raises(DimensionMismatchError):
        project_spherical(sphere_pair[0], tree)


def test_spherical_coordinates_are_rotation_invariant(sphere_pair):
    rng = make_rng(12)
    tree = sample_spherical_tree(2, 4, rng)
    rotation = IsometryEd(Q=random_orthogonal(3, rng))
    m = sphere_pair[0]
    np.testing.assert_allclose(
        project_spherical(apply_isometry(rotation, m), apply_isometry(rotation, tree)).values,
        project_spherical(m, tree).values,
        atol=1e-9,
    )


def test_spherical_spatial_map_lifts_to_unit_sphere(rng):
    y = random_measure(rng, 200, 4, spherical=True).points
    lifted = spherical_spatial_map(y)
    assert lifted.shape == (200, 5)
    np.testing.assert_allclose(np.linalg.norm(lifted, axis=1), 1.0, atol=1e-12)


def test_spherical_spatial_map_angle_hand_value():
    lifted = spherical_spatial_map(np.array([[1.0, 0.0, 0.0]]))
    eps = 1e-6
    angle = np.pi / (2 * (1 + eps)) * (4.0 / 3.0 + eps)
    assert angle == pytest.approx(2 * np.pi / 3, abs=1e-5)
    np.testing.assert_allclose(lifted[0], [np.cos(angle), np.sin(angle), 0.0, 0.0], atol=1e-15)


def test_spherical_spatial_map_is_injective_on_samples():
    rng = make_rng(13)
    y = rng.standard_normal((2000, 3))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    lifted = spherical_spatial_map(y)
    gram = lifted @ lifted.T
    np.fill_diagonal(gram, -1.0)
    assert np.max(gram) < 1.0


def test_spherical_spatial_map_rejects_off_sphere_points():
    with pytest.raises(InvalidMeasureError):
        spherical_spatial_map(np.array([[2.0, 0.0, 0.0]]))
