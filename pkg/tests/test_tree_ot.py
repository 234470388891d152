import numpy as np
import pytest

from treesliced.core import tree_ot
from treesliced.core.errors import DimensionMismatchError, MassMismatchError
from treesliced.core.geometry import DiscreteMeasure, TreeSystem
from treesliced.core.projection import CoordinateRange, project_circular, project_linear
from treesliced.core.splitting import SplitWeights, splitting_euclidean
from treesliced.core.tree_ot import (
    ProjectedTreeMeasure,
    build_projected_measure,
    lp_tree_w1_oracle,
    one_dim_w1,
    quantile_w2_squared,
    sample_tree_instance,
    spider_w1,
)
from treesliced.utils.rng import make_rng


def spider(coords, masses, coord_range=CoordinateRange.REAL_LINE):
    return ProjectedTreeMeasure(np.array(coords, dtype=float), np.array(masses, dtype=float), coord_range)


def test_one_dim_w1_hand_values():
    assert one_dim_w1([0.0], [1.0], [3.0], [1.0]) == pytest.approx(3.0)
    assert one_dim_w1([1.0, 2.0], [0.5, 0.5], [1.0, 2.0], [0.5, 0.5]) == 0.0


def test_one_dim_w1_scales_with_total_mass():
    assert one_dim_w1([0.0], [0.25], [2.0], [0.25]) == pytest.approx(0.5)


def test_one_dim_w1_rejects_mass_mismatch():
    with pytest.raises(MassMismatchError):
        one_dim_w1([0.0], [1.0], [1.0], [0.5])


def test_one_dim_w1_matches_lp_on_one_line():
    rng = make_rng(30)
    for _ in range(20):
        a, b = sample_tree_instance(rng, 1, 6)
        expected = lp_tree_w1_oracle(a, b)
        assert one_dim_w1(a.coords[0], a.masses[0], b.coords[0], b.masses[0]) == pytest.approx(expected, abs=1e-9)


def test_quantile_w2_hand_value():
    values, grad = quantile_w2_squared([[0.0]], [1.0], [[-1.0, 1.0]], [0.5, 0.5])
    assert values[0] == pytest.approx(1.0)
    assert grad[0, 0] == pytest.approx(0.0)


def test_quantile_w2_pairs_sorted_points_for_equal_sizes():
    rng = make_rng(8)
    x, y = rng.standard_normal((3, 6)), rng.standard_normal((3, 6))
    uniform = np.full(6, 1.0 / 6.0)
    values, grad = quantile_w2_squared(x, uniform, y, uniform)
    expected = np.mean((np.sort(x, axis=1) - np.sort(y, axis=1)) ** 2, axis=1)
    np.testing.assert_allclose(values, expected, atol=1e-12)
    # each point is pulled toward its sorted partner
    partner = np.take_along_axis(np.sort(y, axis=1), np.argsort(np.argsort(x, axis=1), axis=1), axis=1)
    np.testing.assert_allclose(grad, 2.0 * uniform * (x - partner), atol=1e-12)


def test_quantile_w2_gradient_matches_central_differences():
    rng = make_rng(9)
    x, y = rng.standard_normal((2, 5)), rng.standard_normal((2, 4))
    a, b = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(4))
    _, grad = quantile_w2_squared(x, a, y, b)
    step = 1e-6
    for line in range(2):
        for j in range(5):
            plus, minus = np.array(x), np.array(x)
            plus[line, j] += step
            minus[line, j] -= step
            numeric = (quantile_w2_squared(plus, a, y, b)[0] - quantile_w2_squared(minus, a, y, b)[0])[line]
            numeric /= 2 * step
            assert numeric == pytest.approx(grad[line, j], abs=1e-6)


def test_quantile_w2_rejects_mass_mismatch():
    with pytest.raises(MassMismatchError):
        quantile_w2_squared([[0.0]], [1.0], [[0.0]], [0.5])


def test_spider_identity_is_exact():
    rng = make_rng(31)
    a, _ = sample_tree_instance(rng, 3, 5)
    assert spider_w1(a, a) == 0.0


def test_spider_path_through_root():
    mu = spider([[1.0], [0.0]], [[1.0], [0.0]], CoordinateRange.NONNEG_RAY)
    nu = spider([[0.0], [1.0]], [[0.0], [1.0]], CoordinateRange.NONNEG_RAY)
    assert spider_w1(mu, nu) == pytest.approx(2.0)


def test_spider_opposite_sides_of_one_line():
    mu = spider([[-1.0]], [[1.0]])
    nu = spider([[2.0]], [[1.0]])
    assert spider_w1(mu, nu) == pytest.approx(3.0)


@pytest.mark.parametrize("coord_range", [CoordinateRange.REAL_LINE, CoordinateRange.NONNEG_RAY])
@pytest.mark.parametrize("shared", [False, True])
def test_spider_matches_lp_oracle(coord_range, shared):
    rng = make_rng(32)
    for _ in range(60):
        k = int(rng.integers(1, 5))
        m = int(rng.integers(1, 9))
        mu, nu = sample_tree_instance(rng, k, m, coord_range, shared)
        assert spider_w1(mu, nu) == pytest.approx(lp_tree_w1_oracle(mu, nu), abs=1e-9)


def test_spider_symmetry_and_triangle_inequality():
    rng = make_rng(33)
    for _ in range(100):
        a, b = sample_tree_instance(rng, 3, 4)
        c, _ = sample_tree_instance(rng, 3, 4)
        assert spider_w1(a, b) == pytest.approx(spider_w1(b, a), abs=1e-12)
        assert spider_w1(a, c) <= spider_w1(a, b) + spider_w1(b, c) + 1e-10


def test_spider_single_line_equals_one_dim_w1():
    rng = make_rng(34)
    for _ in range(20):
        a, b = sample_tree_instance(rng, 1, 7)
        assert spider_w1(a, b) == pytest.approx(one_dim_w1(a.coords[0], a.masses[0], b.coords[0], b.masses[0]), abs=1e-12)


def test_spider_is_one_homogeneous():
    rng = make_rng(35)
    a, b = sample_tree_instance(rng, 3, 5)
    scaled_a = ProjectedTreeMeasure(2.5 * a.coords, a.masses)
    scaled_b = ProjectedTreeMeasure(2.5 * b.coords, b.masses)
    assert spider_w1(scaled_a, scaled_b) == pytest.approx(2.5 * spider_w1(a, b), rel=1e-12)


def test_shared_fast_path_agrees_with_general_sort():
    rng = make_rng(36)
    a, b = sample_tree_instance(rng, 4, 6, CoordinateRange.NONNEG_RAY, shared=True)
    general_a = ProjectedTreeMeasure(a.coords, a.masses, a.range, shared=False)
    general_b = ProjectedTreeMeasure(b.coords, b.masses, b.range, shared=False)
    assert spider_w1(a, b) == pytest.approx(spider_w1(general_a, general_b), abs=1e-12)


def test_spider_rejects_mismatched_trees():
    mu = spider([[1.0], [0.0]], [[0.5], [0.5]])
    with pytest.raises(DimensionMismatchError):
        spider_w1(mu, spider([[1.0]], [[1.0]]))
    with pytest.raises(DimensionMismatchError):
        spider_w1(mu, spider([[1.0], [0.0]], [[0.5], [0.5]], CoordinateRange.NONNEG_RAY))


def test_projected_measure_needs_unit_mass():
    with pytest.raises(MassMismatchError):
        spider([[1.0, 2.0]], [[0.5, 0.2]])


def test_build_projected_measure_bookkeeping(planar_tree):
    m = DiscreteMeasure(np.array([[1.0, 2.0], [-1.0, 0.5], [0.0, 3.0]]), np.array([0.2, 0.3, 0.5]))
    alpha = SplitWeights(np.full((3, 2), 0.5))
    projected = build_projected_measure(m, project_linear(m, planar_tree), alpha)
    np.testing.assert_allclose(projected.line_totals(), [0.5, 0.5])
    assert projected.masses.sum() == pytest.approx(1.0, abs=1e-12)
    coords, masses = projected.line(1)
    np.testing.assert_array_equal(coords, [2.0, 0.5, 3.0])
    np.testing.assert_allclose(masses, [0.1, 0.15, 0.25])


def test_build_single_line_is_the_projected_measure():
    m = DiscreteMeasure.uniform(np.array([[3.0, 4.0], [0.0, 1.0]]))
    tree = TreeSystem(np.zeros(2), np.array([[1.0, 0.0]]))
    projected = build_projected_measure(m, project_linear(m, tree), splitting_euclidean(m, tree))
    np.testing.assert_array_equal(projected.coords, [[3.0, 0.0]])
    np.testing.assert_allclose(projected.masses, [[0.5, 0.5]])


def test_build_rejects_shape_mismatch(planar_tree):
    m = DiscreteMeasure.uniform(np.ones((2, 2)))
    other = DiscreteMeasure.uniform(np.ones((3, 2)))
    with pytest.raises(DimensionMismatchError):
        build_projected_measure(m, project_circular(other, planar_tree, 0.0), splitting_euclidean(m, planar_tree))


def test_oracle_single_points_and_identity():
    mu = spider([[1.5], [0.0]], [[1.0], [0.0]])
    nu = spider([[0.0], [-2.0]], [[0.0], [1.0]])
    assert lp_tree_w1_oracle(mu, nu) == pytest.approx(3.5, abs=1e-9)
    assert lp_tree_w1_oracle(mu, mu) == pytest.approx(0.0, abs=1e-12)


def test_oracle_triangle_inequality():
    rng = make_rng(37)
    for _ in range(20):
        a, b = sample_tree_instance(rng, 2, 3)
        c, _ = sample_tree_instance(rng, 2, 3)
        assert lp_tree_w1_oracle(a, c) <= lp_tree_w1_oracle(a, b) + lp_tree_w1_oracle(b, c) + 1e-9


def test_flipped_prefix_sign_is_caught_by_the_oracle(monkeypatch):
    monkeypatch.setattr(tree_ot, "_prefix_difference", lambda cum_mu, cum_nu: cum_mu + cum_nu)
    rng = make_rng(38)
    mismatches = 0
    for _ in range(20):
        mu, nu = sample_tree_instance(rng, 3, 4)
        if abs(spider_w1(mu, nu) - lp_tree_w1_oracle(mu, nu)) > 1e-9:
            mismatches += 1
    assert mismatches > 0
