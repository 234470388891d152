import numpy as np
import pytest

from conftest import random_measure
from treesliced.core.config import DistanceConfig, SpatialMapConfig
from treesliced.core.distances import (
    DistanceEstimate,
    SlicedVariant,
    STSWMode,
    TSWMode,
    estimate_stsw,
    estimate_sw,
    estimate_tsw,
    mapped_points,
    sample_spherical_trees,
    sample_trees,
    spherical_tree_value,
    tree_value,
)
from treesliced.core.errors import DimensionMismatchError, InvalidConfigError, InvalidMeasureError
from treesliced.core.geometry import (
    DiscreteMeasure,
    IsometryEd,
    apply_isometry,
    random_isometry,
    random_orthogonal,
    sample_spherical_tree,
    sample_tree_system,
)
from treesliced.core.projection import spherical_spatial_map
from treesliced.utils.rng import make_rng


@pytest.mark.parametrize("mode", list(TSWMode))
def test_tsw_identity_is_exactly_zero(measure_pair, small_config, mode):
    mu, _ = measure_pair
    assert estimate_tsw(mu, mu, small_config, mode).value == 0.0


@pytest.mark.parametrize("mode", list(STSWMode))
def test_stsw_identity_is_exactly_zero(sphere_pair, small_config, mode):
    mu, _ = sphere_pair
    assert estimate_stsw(mu, mu, small_config, mode).value == 0.0


@pytest.mark.parametrize("mode", list(TSWMode))
def test_tsw_symmetry_and_triangle(rng, small_config, mode):
    for _ in range(10):
        a, b, c = (random_measure(rng, int(rng.integers(1, 6)), 3) for _ in range(3))
        ab = estimate_tsw(a, b, small_config, mode).value
        assert ab == pytest.approx(estimate_tsw(b, a, small_config, mode).value, abs=1e-10)
        ac = estimate_tsw(a, c, small_config, mode).value
        bc = estimate_tsw(b, c, small_config, mode).value
        assert ac <= ab + bc + 1e-10


@pytest.mark.parametrize("mode", list(STSWMode))
def test_stsw_symmetry_and_triangle(rng, small_config, mode):
    for _ in range(10):
        a, b, c = (random_measure(rng, int(rng.integers(1, 6)), 3, spherical=True) for _ in range(3))
        ab = estimate_stsw(a, b, small_config, mode).value
        assert ab == pytest.approx(estimate_stsw(b, a, small_config, mode).value, abs=1e-10)
        ac = estimate_stsw(a, c, small_config, mode).value
        bc = estimate_stsw(b, c, small_config, mode).value
        assert ac <= ab + bc + 1e-10


def test_dirac_pair_distance(small_config):
    # two Diracs: on every tree the cost is a path between two points of the tree
    mu = DiscreteMeasure.uniform(np.array([[0.0, 0.0, 0.0]]))
    nu = DiscreteMeasure.uniform(np.array([[1.0, 1.0, 1.0]]))
    estimate = estimate_tsw(mu, nu, small_config, TSWMode.DB_LINEAR)
    assert estimate.value > 0
    assert estimate.num_trees == small_config.num_trees


def test_estimate_is_mean_of_per_tree_values(measure_pair, small_config):
    estimate = estimate_tsw(*measure_pair, small_config, TSWMode.CIRCULAR)
    assert estimate.value == pytest.approx(estimate.per_tree_values.mean(), abs=1e-15)
    assert estimate.std_error >= 0
    assert estimate.mode == "circular"
    assert estimate.config_echo == small_config


def test_estimate_type_validates_mean():
    with pytest.raises(InvalidMeasureError):
        DistanceEstimate(value=1.0, per_tree_values=np.array([0.5, 0.5]), config_echo=None, mode="x")


def test_same_seed_gives_identical_estimates(measure_pair, small_config):
    first = estimate_tsw(*measure_pair, small_config, TSWMode.SPATIAL)
    second = estimate_tsw(*measure_pair, small_config, TSWMode.SPATIAL)
    assert np.array_equal(first.per_tree_values, second.per_tree_values)


def test_results_do_not_depend_on_thread_count(measure_pair):
    cfg = DistanceConfig(num_trees=16, lines_per_tree=4, seed=3)
    single = estimate_tsw(*measure_pair, cfg, TSWMode.CIRCULAR, workers=1)
    pooled = estimate_tsw(*measure_pair, cfg, TSWMode.CIRCULAR, workers=4)
    assert single.value == pooled.value
    assert np.array_equal(single.per_tree_values, pooled.per_tree_values)


def test_dimension_mismatch(rng, small_config):
    with pytest.raises(DimensionMismatchError):
        estimate_tsw(random_measure(rng, 3, 2), random_measure(rng, 3, 3), small_config)
    trees = sample_trees(small_config, 4)
    with pytest.raises(DimensionMismatchError):
        estimate_tsw(random_measure(rng, 3, 3), random_measure(rng, 3, 3), small_config, trees=trees)


def test_orthogonal_scheme_needs_enough_dimensions(rng):
    cfg = DistanceConfig(lines_per_tree=3, direction_scheme="orthogonal")
    with pytest.raises(InvalidConfigError):
        estimate_tsw(random_measure(rng, 3, 2), random_measure(rng, 3, 2), cfg)
    assert estimate_tsw(random_measure(rng, 3, 3), random_measure(rng, 3, 3), cfg).value >= 0


def test_one_line_db_linear_reduces_to_sliced(rng):
    mu, nu = random_measure(rng, 6, 3), random_measure(rng, 8, 3)
    for _ in range(20):
        tree = sample_tree_system(3, 1, 1.0, "iid_uniform", rng)
        on_tree = tree_value(mu, nu, tree, DistanceConfig(lines_per_tree=1), TSWMode.DB_LINEAR)
        sliced = estimate_sw(mu, nu, directions=tree.directions).value
        assert on_tree == pytest.approx(sliced, abs=1e-12)


def test_circular_r0_matches_circular_with_zero_radius(measure_pair):
    cfg = DistanceConfig(num_trees=8, lines_per_tree=4, radius=0.0, seed=5)
    general = estimate_tsw(*measure_pair, cfg, TSWMode.CIRCULAR)
    fast = estimate_tsw(*measure_pair, cfg, TSWMode.CIRCULAR_R0)
    np.testing.assert_allclose(fast.per_tree_values, general.per_tree_values, atol=1e-10)


@pytest.mark.parametrize("mode", list(TSWMode))
def test_per_tree_values_are_isometry_invariant(rng, mode):
    cfg = DistanceConfig(lines_per_tree=3, radius=0.4)
    for _ in range(10):
        mu, nu = random_measure(rng, 5, 3), random_measure(rng, 4, 3)
        tree = sample_tree_system(3, 3, 1.0, "iid_uniform", rng)
        g = random_isometry(3, rng)
        mu_h = mu.with_points(mapped_points(mu.points, cfg, mode))
        nu_h = nu.with_points(mapped_points(nu.points, cfg, mode))
        before = tree_value(mu_h, nu_h, tree, cfg, mode)
        after = tree_value(apply_isometry(g, mu_h), apply_isometry(g, nu_h), apply_isometry(g, tree), cfg, mode)
        assert after == pytest.approx(before, abs=1e-9)


def test_spherical_per_tree_values_are_rotation_invariant(rng):
    for _ in range(10):
        mu, nu = random_measure(rng, 5, 3, spherical=True), random_measure(rng, 4, 3, spherical=True)
        for lift in (False, True):
            if lift:
                mu_l = DiscreteMeasure(spherical_spatial_map(mu.points), mu.weights, spherical=True)
                nu_l = DiscreteMeasure(spherical_spatial_map(nu.points), nu.weights, spherical=True)
            else:
                mu_l, nu_l = mu, nu
            tree = sample_spherical_tree(mu_l.dim - 1, 3, rng)
            rotation = IsometryEd(Q=random_orthogonal(mu_l.dim, rng))
            before = spherical_tree_value(mu_l, nu_l, tree)
            after = spherical_tree_value(
                apply_isometry(rotation, mu_l), apply_isometry(rotation, nu_l), apply_isometry(rotation, tree)
            )
            assert after == pytest.approx(before, abs=1e-9)


def test_stsw_rejects_off_sphere_measures(rng, small_config):
    with pytest.raises(InvalidMeasureError):
        estimate_stsw(random_measure(rng, 3, 3), random_measure(rng, 3, 3), small_config)


def test_spatial_stsw_trees_live_in_the_lifted_space(sphere_pair, small_config):
    trees = sample_spherical_trees(small_config, 4)
    assert estimate_stsw(*sphere_pair, small_config, STSWMode.SPATIAL, trees=trees).value > 0
    with pytest.raises(DimensionMismatchError):
        estimate_stsw(*sphere_pair, small_config, STSWMode.PLAIN, trees=trees)


@pytest.mark.parametrize("variant", list(SlicedVariant))
def test_sliced_variants(measure_pair, variant):
    mu, nu = measure_pair
    estimate = estimate_sw(mu, nu, 50, make_rng(1), variant=variant, radius=0.3)
    assert estimate.num_trees == 50
    assert estimate.mode == f"sw_{variant.value}"
    assert estimate.value > 0
    assert estimate_sw(mu, mu, 10, variant=variant).value == 0.0


def test_spatial_sw_equals_sw_of_mapped_points(measure_pair):
    mu, nu = measure_pair
    h = SpatialMapConfig(degree=5, gamma=0.5)
    directions = np.eye(3)
    spatial = estimate_sw(mu, nu, directions=directions, variant=SlicedVariant.SPATIAL, spatial=h)
    mu_h = mu.with_points(mu.points + 0.5 * mu.points ** 5)
    nu_h = nu.with_points(nu.points + 0.5 * nu.points ** 5)
    plain = estimate_sw(mu_h, nu_h, directions=directions)
    assert spatial.value == pytest.approx(plain.value, rel=1e-12)


def test_sliced_rejects_negative_radius(measure_pair):
    with pytest.raises(InvalidConfigError):
        estimate_sw(*measure_pair, variant=SlicedVariant.CIRCULAR, radius=-1.0)


def test_sliced_energy_of_a_dirac_pair():
    mu = DiscreteMeasure.uniform(np.array([[1.0, 2.0]]))
    nu = DiscreteMeasure.uniform(np.array([[-1.0, 0.5]]))
    estimate = estimate_sw(mu, nu, directions=np.eye(2), power=2)
    assert estimate.value == pytest.approx(0.5 * (4.0 + 2.25))


def test_sliced_energy_dominates_squared_sliced_w1(measure_pair):
    first = estimate_sw(*measure_pair, 40, make_rng(2))
    second = estimate_sw(*measure_pair, 40, make_rng(2), power=2)
    assert second.value >= first.value ** 2 - 1e-12


def test_sliced_rejects_unknown_power(measure_pair):
    with pytest.raises(InvalidConfigError):
        estimate_sw(*measure_pair, power=3)
