"""
Monte Carlo tree-sliced distances.

Each estimator samples L trees from the configured distribution, projects and
splits both measures on every tree, evaluates the closed-form spider W1 and
averages in tree order. Both measures always see the same trees.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from ..utils.parallel import ordered_map
from ..utils.rng import make_rng
from .config import DistanceConfig, SpatialMapConfig
from .errors import DimensionMismatchError, InvalidConfigError, InvalidMeasureError
from .geometry import (
    SPHERE_TOL,
    DiscreteMeasure,
    SphericalTree,
    TreeSystem,
    sample_spherical_tree,
    sample_tree_system,
    sample_unit_sphere,
)
from .projection import (
    _circular_coordinates,
    _linear_coordinates,
    _spherical_lift,
    project_circular,
    project_linear,
    project_spherical,
    spatial_map,
)
from .splitting import SplitMode, splitting_euclidean, splitting_spherical
from .tree_ot import build_projected_measure, one_dim_w1, quantile_w2_squared, spider_w1

logger = logging.getLogger(__name__)

MEAN_TOL = 1e-12
SLICED_POWERS = (1, 2)


class TSWMode(str, Enum):
    """Euclidean tree-sliced distances."""
    DB_LINEAR = "db_linear"
    SPATIAL = "spatial"
    CIRCULAR = "circular"
    CIRCULAR_R0 = "circular_r0"


class STSWMode(str, Enum):
    """Spherical tree-sliced distances."""
    PLAIN = "plain"
    SPATIAL = "spatial"


class SlicedVariant(str, Enum):
    """Sliced baselines: linear, linear after h, and circular defining function."""
    LINEAR = "linear"
    SPATIAL = "spatial"
    CIRCULAR = "circular"


@dataclass(frozen=True, eq=False)
class DistanceEstimate:
    """
    Monte Carlo estimate with its per-tree terms.

    Attributes:
        value: Mean of the per-tree values
        per_tree_values: (L,) per-tree (or per-direction) transport costs
        config_echo: Configuration that produced the estimate
        mode: Name of the distance
        std_error: Standard error of the mean over trees
    """

    value: float
    per_tree_values: np.ndarray
    config_echo: Optional[DistanceConfig]
    mode: str
    std_error: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.per_tree_values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise InvalidMeasureError("an estimate needs at least one per-tree value")
        if np.any(values < 0):
            raise InvalidMeasureError("per-tree transport costs must be nonnegative")
        if abs(self.value - values.mean()) > MEAN_TOL * max(1.0, abs(self.value)):
            raise InvalidMeasureError("estimate value is not the mean of its per-tree values")
        values.setflags(write=False)
        object.__setattr__(self, "per_tree_values", values)

    @property
    def num_trees(self) -> int:
        return self.per_tree_values.shape[0]


def _make_estimate(per_tree: Sequence[float], cfg: Optional[DistanceConfig], mode: str) -> DistanceEstimate:
    values = np.asarray(per_tree, dtype=np.float64)
    # rounding can leave a cost at -0.0 or -1e-17 for identical inputs
    values = np.maximum(values, 0.0)
    std_error = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return DistanceEstimate(
        value=float(values.mean()),
        per_tree_values=values,
        config_echo=cfg,
        mode=mode,
        std_error=std_error,
    )


def _check_pair(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if mu.dim != nu.dim:
        raise DimensionMismatchError(f"measures live in R^{mu.dim} and R^{nu.dim}")


def sample_trees(cfg: DistanceConfig, dim: int, rng: Optional[np.random.Generator] = None) -> List[TreeSystem]:
    """
    Draw the L tree systems of one estimate, sequentially from one stream.

    Args:
        cfg: Distance configuration (L, k, root std, direction scheme, seed)
        dim: Dimension the trees live in
        rng: Stream to draw from; defaults to one seeded by ``cfg.seed``

    Returns:
        List of L tree systems
    """
    cfg.check_dimension(dim)
    rng = make_rng(cfg.seed) if rng is None else rng
    return [
        sample_tree_system(dim, cfg.lines_per_tree, cfg.root_std, cfg.direction_scheme, rng)
        for _ in range(cfg.num_trees)
    ]


def sample_spherical_trees(
    cfg: DistanceConfig,
    ambient_dim: int,
    rng: Optional[np.random.Generator] = None
) -> List[SphericalTree]:
    """Draw L spherical trees on the unit sphere of R^ambient_dim."""
    rng = make_rng(cfg.seed) if rng is None else rng
    return [sample_spherical_tree(ambient_dim - 1, cfg.lines_per_tree, rng) for _ in range(cfg.num_trees)]


def mapped_points(points: np.ndarray, cfg: DistanceConfig, mode: TSWMode) -> np.ndarray:
    """Points in the space the trees live in (h applied for the spatial mode)."""
    if TSWMode(mode) == TSWMode.SPATIAL:
        return spatial_map(points, cfg.spatial_map)
    return np.asarray(points, dtype=np.float64)


def tree_value(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    tree: TreeSystem,
    cfg: DistanceConfig,
    mode: TSWMode
) -> float:
    """
    Spider W1 between two (already mapped) measures on one tree.

    Args:
        mu: First measure in the tree's space
        nu: Second measure in the tree's space
        tree: Tree system
        cfg: Distance configuration (radius, splitting sign and temperature)
        mode: Distance mode

    Returns:
        Transport cost on this tree
    """
    mode = TSWMode(mode)
    if mode in (TSWMode.DB_LINEAR, TSWMode.SPATIAL):
        coords_mu, coords_nu = project_linear(mu, tree), project_linear(nu, tree)
        split_mode, radius = SplitMode.LINEAR, 0.0
    else:
        radius = 0.0 if mode == TSWMode.CIRCULAR_R0 else cfg.radius
        fast_path = mode == TSWMode.CIRCULAR_R0
        coords_mu = project_circular(mu, tree, radius, fast_path=fast_path)
        coords_nu = project_circular(nu, tree, radius, fast_path=fast_path)
        split_mode = SplitMode.CIRCULAR

    split_args = dict(
        mode=split_mode,
        radius=radius,
        sign=cfg.splitting_sign,
        temperature=cfg.splitting_temperature,
    )
    alpha_mu = splitting_euclidean(mu, tree, **split_args)
    alpha_nu = splitting_euclidean(nu, tree, **split_args)
    return spider_w1(
        build_projected_measure(mu, coords_mu, alpha_mu),
        build_projected_measure(nu, coords_nu, alpha_nu),
    )


def estimate_tsw(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cfg: Optional[DistanceConfig] = None,
    mode: TSWMode = TSWMode.SPATIAL,
    trees: Optional[Sequence[TreeSystem]] = None,
    workers: Optional[int] = None
) -> DistanceEstimate:
    """
    Euclidean tree-sliced Wasserstein distance.

    ``db_linear`` uses linear coordinates, ``spatial`` the same after the map
    h, ``circular`` the coordinates ||y - x - r theta_i|| and ``circular_r0``
    the shared r = 0 coordinates computed once per point.

    Args:
        mu: First measure
        nu: Second measure
        cfg: Distance configuration; defaults to ``DistanceConfig()``
        mode: Distance mode
        trees: Pinned trees; sampled from ``cfg`` when omitted
        workers: Thread count for the per-tree map

    Returns:
        Distance estimate

    Raises:
        DimensionMismatchError: If the measures (or pinned trees) disagree in dimension
        InvalidConfigError: If the configuration does not fit the dimension
    """
    cfg = DistanceConfig() if cfg is None else cfg
    mode = TSWMode(mode)
    _check_pair(mu, nu)
    cfg.check_dimension(mu.dim)
    if trees is None:
        trees = sample_trees(cfg, mu.dim)
    for tree in trees:
        if tree.dim != mu.dim:
            raise DimensionMismatchError(f"tree lives in R^{tree.dim}, measures in R^{mu.dim}")

    mu_mapped = mu.with_points(mapped_points(mu.points, cfg, mode))
    nu_mapped = nu.with_points(mapped_points(nu.points, cfg, mode))
    logger.debug(f"Evaluating {mode.value} on {len(trees)} trees")
    per_tree = ordered_map(lambda tree: tree_value(mu_mapped, nu_mapped, tree, cfg, mode), trees, workers)
    return _make_estimate(per_tree, cfg, mode.value)


def sample_directions(num_projections: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """(L, d) i.i.d. uniform directions for the sliced baselines."""
    if num_projections < 1:
        raise InvalidConfigError(f"need at least one projection, got {num_projections}")
    return np.stack([sample_unit_sphere(dim, rng) for _ in range(num_projections)])


def sliced_coordinates(
    points: np.ndarray,
    directions: np.ndarray,
    variant: SlicedVariant,
    spatial: Optional[SpatialMapConfig] = None,
    radius: float = 0.0
) -> np.ndarray:
    """(L, n) sliced coordinates of lines through the origin."""
    variant = SlicedVariant(variant)
    origin = np.zeros(points.shape[1])
    if variant == SlicedVariant.CIRCULAR:
        return np.asarray(_circular_coordinates(points, origin, directions, radius, fast_path=False))
    if variant == SlicedVariant.SPATIAL:
        points = spatial_map(points, spatial if spatial is not None else SpatialMapConfig())
    return _linear_coordinates(points, origin, directions)


def estimate_sw(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    num_projections: int = 100,
    rng: Optional[np.random.Generator] = None,
    directions: Optional[np.ndarray] = None,
    variant: SlicedVariant = SlicedVariant.LINEAR,
    spatial: Optional[SpatialMapConfig] = None,
    radius: float = 0.0,
    workers: Optional[int] = None,
    power: int = 1
) -> DistanceEstimate:
    """
    Sliced Wasserstein-1 baseline and its generalized variants.

    With ``power=2`` every direction contributes its squared 1-D W2 instead,
    so the estimate is the sliced energy SW_2^2.

    Args:
        mu: First measure
        nu: Second measure
        num_projections: Number of directions L
        rng: Stream for the directions; seeded with 0 when omitted
        directions: Pinned (L, d) unit directions, overriding sampling
        variant: linear, spatial (project h(y)) or circular (||y - r theta||)
        spatial: Map h for the spatial variant
        radius: Shift r for the circular variant
        workers: Thread count for the per-direction map
        power: 1 for W1 per direction, 2 for squared W2

    Returns:
        Distance estimate with one value per direction

    Raises:
        InvalidConfigError: If no projection is requested or the power is not 1 or 2
    """
    variant = SlicedVariant(variant)
    _check_pair(mu, nu)
    if radius < 0:
        raise InvalidConfigError(f"radius must be >= 0, got {radius}")
    if power not in SLICED_POWERS:
        raise InvalidConfigError(f"sliced power must be 1 or 2, got {power}")
    if directions is None:
        rng = make_rng(0) if rng is None else rng
        directions = sample_directions(num_projections, mu.dim, rng)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if directions.shape[1] != mu.dim:
        raise DimensionMismatchError(f"directions live in R^{directions.shape[1]}, measures in R^{mu.dim}")

    coords_mu = sliced_coordinates(mu.points, directions, variant, spatial, radius)
    coords_nu = sliced_coordinates(nu.points, directions, variant, spatial, radius)
    if power == 2:
        per_direction = quantile_w2_squared(coords_mu, mu.weights, coords_nu, nu.weights)[0]
    else:
        per_direction = ordered_map(
            lambda i: one_dim_w1(coords_mu[i], mu.weights, coords_nu[i], nu.weights),
            range(directions.shape[0]),
            workers,
        )
    echo = DistanceConfig(
        num_trees=directions.shape[0],
        lines_per_tree=1,
        radius=radius,
        root_std=0.0,
        spatial_map=spatial if spatial is not None else SpatialMapConfig(),
    )
    return _make_estimate(per_direction, echo, f"sw_{variant.value}")


def _check_sphere(m: DiscreteMeasure) -> None:
    norms = np.linalg.norm(m.points, axis=1)
    if np.max(np.abs(norms - 1.0)) > SPHERE_TOL:
        raise InvalidMeasureError("spherical distances need unit-norm support points")


def spherical_tree_value(mu: DiscreteMeasure, nu: DiscreteMeasure, tree: SphericalTree) -> float:
    """Spider W1 of two spherical measures on one spherical tree."""
    alpha_mu, alpha_nu = splitting_spherical(mu, tree), splitting_spherical(nu, tree)
    return spider_w1(
        build_projected_measure(mu, project_spherical(mu, tree), alpha_mu),
        build_projected_measure(nu, project_spherical(nu, tree), alpha_nu),
    )


def estimate_stsw(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cfg: Optional[DistanceConfig] = None,
    mode: STSWMode = STSWMode.SPATIAL,
    trees: Optional[Sequence[SphericalTree]] = None,
    workers: Optional[int] = None
) -> DistanceEstimate:
    """
    Spherical tree-sliced Wasserstein distance.

    The spatial mode first lifts both measures from S^d to S^{d+1} with the
    injective map h(y) = (cos k(y), sin k(y) y) and samples the trees there.

    Args:
        mu: First measure on the unit sphere
        nu: Second measure on the unit sphere
        cfg: Distance configuration (L, k, seed)
        mode: plain or spatial
        trees: Pinned spherical trees (in the lifted space for the spatial mode)
        workers: Thread count for the per-tree map

    Returns:
        Distance estimate

    Raises:
        InvalidMeasureError: If a support point is off the unit sphere
    """
    cfg = DistanceConfig() if cfg is None else cfg
    mode = STSWMode(mode)
    _check_pair(mu, nu)
    _check_sphere(mu)
    _check_sphere(nu)

    if mode == STSWMode.SPATIAL:
        mu = DiscreteMeasure(_spherical_lift(mu.points), mu.weights, spherical=True)
        nu = DiscreteMeasure(_spherical_lift(nu.points), nu.weights, spherical=True)
    if trees is None:
        trees = sample_spherical_trees(cfg, mu.dim)
    for tree in trees:
        if tree.ambient_dim != mu.dim:
            raise DimensionMismatchError(f"tree lives in R^{tree.ambient_dim}, measures in R^{mu.dim}")

    per_tree = ordered_map(lambda tree: spherical_tree_value(mu, nu, tree), trees, workers)
    return _make_estimate(per_tree, cfg, f"stsw_{mode.value}")
