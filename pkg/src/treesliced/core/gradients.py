"""
Analytic gradients of the tree-sliced estimators with respect to the support
points of the first measure.

The chain rule runs through the spider closed form (coordinates and masses),
the softmax splitting weights, the projections and, for the spatial modes, the
map h. Trees are constants of each evaluation. Non-smooth points get the
subgradient conventions of ``tree_ot._spider_backward`` and a zero vector
where a norm vanishes.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from ..utils.parallel import ordered_map
from ..utils.rng import derive_rng, make_rng
from .config import DistanceConfig, SpatialMapConfig
from .distances import (
    SLICED_POWERS,
    DistanceEstimate,
    SlicedVariant,
    STSWMode,
    TSWMode,
    _check_pair,
    _check_sphere,
    _make_estimate,
    mapped_points,
    sample_directions,
    sample_spherical_trees,
    sample_trees,
    sliced_coordinates,
)
from .errors import DimensionMismatchError, InvalidConfigError, InvalidMeasureError
from .geometry import DiscreteMeasure, SphericalTree, TreeSystem
from .projection import (
    SPHERICAL_MAP_EPS,
    _circular_coordinates,
    _lift_angle,
    _linear_coordinates,
    _spherical_lift,
    spatial_map_derivative,
)
from .splitting import POLE_TOL, SplitMode, _euclidean_weights, _spherical_betas
from .tree_ot import SpiderState, _spider_backward, _spider_forward, quantile_w2_squared

logger = logging.getLogger(__name__)

REL_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class GradientField:
    """(n, d) gradient of an estimate with respect to the points of mu."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidMeasureError(f"gradient must be an (n, d) matrix, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidMeasureError("gradient has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class _EuclideanSettings:
    split_mode: SplitMode
    radius: float
    fast_path: bool
    sign: int
    temperature: float

    @classmethod
    def from_config(cls, cfg: DistanceConfig, mode: TSWMode) -> "_EuclideanSettings":
        mode = TSWMode(mode)
        if mode in (TSWMode.DB_LINEAR, TSWMode.SPATIAL):
            split_mode, radius, fast_path = SplitMode.LINEAR, 0.0, False
        elif mode == TSWMode.CIRCULAR_R0:
            split_mode, radius, fast_path = SplitMode.CIRCULAR, 0.0, True
        else:
            split_mode, radius, fast_path = SplitMode.CIRCULAR, cfg.radius, False
        return cls(split_mode, radius, fast_path, cfg.splitting_sign, cfg.splitting_temperature)


def _safe_unit(vectors: np.ndarray, norms: np.ndarray) -> np.ndarray:
    safe = np.where(norms > 0, norms, 1.0)
    return np.where((norms > 0)[:, None], vectors / safe[:, None], 0.0)


def _row_norms(matrix: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(matrix * matrix, axis=1))


def _euclidean_coords(points: np.ndarray, tree: TreeSystem, settings: _EuclideanSettings) -> np.ndarray:
    if settings.split_mode == SplitMode.LINEAR:
        return _linear_coordinates(points, tree.root, tree.directions)
    return _circular_coordinates(points, tree.root, tree.directions, settings.radius, settings.fast_path)


def _euclidean_forward(
    mu_points: np.ndarray,
    mu_weights: np.ndarray,
    nu_points: np.ndarray,
    nu_weights: np.ndarray,
    tree: TreeSystem,
    settings: _EuclideanSettings
) -> Tuple[SpiderState, np.ndarray]:
    """Spider state and mu's split weights on one tree, from raw mapped points."""

    def masses(points: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        alpha = _euclidean_weights(
            points, tree.root, tree.directions, settings.split_mode,
            settings.radius, settings.sign, settings.temperature,
        )
        return alpha, (weights[:, None] * alpha).T

    alpha_mu, masses_mu = masses(mu_points, mu_weights)
    _, masses_nu = masses(nu_points, nu_weights)
    state = _spider_forward(
        _euclidean_coords(mu_points, tree, settings), masses_mu,
        _euclidean_coords(nu_points, tree, settings), masses_nu,
        shared=settings.fast_path,
    )
    return state, alpha_mu


def _softmax_backward(alpha: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return alpha * (upstream - np.sum(upstream * alpha, axis=1, keepdims=True))


def _euclidean_tree_grad(
    mu_points: np.ndarray,
    mu_weights: np.ndarray,
    nu_points: np.ndarray,
    nu_weights: np.ndarray,
    tree: TreeSystem,
    settings: _EuclideanSettings
) -> Tuple[float, np.ndarray]:
    """Value and (n, d) gradient on one tree, with respect to mapped points."""
    state, alpha = _euclidean_forward(mu_points, mu_weights, nu_points, nu_weights, tree, settings)
    coord_grad, mass_grad, _, _ = _spider_backward(state)
    alpha_grad = mu_weights[:, None] * mass_grad.T
    dist_grad = _softmax_backward(alpha, alpha_grad) * (settings.sign / settings.temperature)

    diff = mu_points - tree.root
    grad = np.zeros_like(mu_points)
    for i, theta in enumerate(tree.directions):
        if settings.split_mode == SplitMode.LINEAR:
            grad += coord_grad[i][:, None] * theta
            residual = diff - np.outer(diff @ theta, theta)
            grad += dist_grad[:, i][:, None] * _safe_unit(residual, _row_norms(residual))
        else:
            shifted = diff - settings.radius * theta
            rho = _row_norms(shifted)
            rho_grad = _safe_unit(shifted, rho)
            grad += coord_grad[i][:, None] * rho_grad
            residual = diff - np.outer(rho, theta)
            unit = _safe_unit(residual, _row_norms(residual))
            grad += dist_grad[:, i][:, None] * (unit - (unit @ theta)[:, None] * rho_grad)
    return state.value, grad


def _average(results: Sequence[Tuple[float, np.ndarray]]) -> Tuple[List[float], np.ndarray]:
    values = [value for value, _ in results]
    total = np.zeros_like(results[0][1])
    for _, grad in results:
        total += grad
    return values, total / len(results)


def grad_estimate(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cfg: Optional[DistanceConfig] = None,
    mode: TSWMode = TSWMode.SPATIAL,
    trees: Optional[Sequence[TreeSystem]] = None,
    workers: Optional[int] = None
) -> Tuple[DistanceEstimate, GradientField]:
    """
    Euclidean tree-sliced estimate and its gradient with respect to mu's points.

    Gradients flow through the coordinates and through the splitting weights
    of mu's own points. The spatial mode multiplies by h'(y) elementwise.

    Args:
        mu: Measure whose points are differentiated
        nu: Target measure
        cfg: Distance configuration
        mode: Distance mode
        trees: Pinned trees; sampled from ``cfg`` when omitted
        workers: Thread count for the per-tree map

    Returns:
        (estimate, gradient averaged over trees)
    """
    cfg = DistanceConfig() if cfg is None else cfg
    mode = TSWMode(mode)
    _check_pair(mu, nu)
    cfg.check_dimension(mu.dim)
    if trees is None:
        trees = sample_trees(cfg, mu.dim)
    settings = _EuclideanSettings.from_config(cfg, mode)
    mu_points = mapped_points(mu.points, cfg, mode)
    nu_points = mapped_points(nu.points, cfg, mode)

    results = ordered_map(
        lambda tree: _euclidean_tree_grad(mu_points, mu.weights, nu_points, nu.weights, tree, settings),
        trees,
        workers,
    )
    values, grad = _average(results)
    if mode == TSWMode.SPATIAL:
        grad = grad * spatial_map_derivative(mu.points, cfg.spatial_map)
    return _make_estimate(values, cfg, mode.value), GradientField(grad)


def _spherical_forward(
    mu_points: np.ndarray,
    mu_weights: np.ndarray,
    nu_points: np.ndarray,
    nu_weights: np.ndarray,
    tree: SphericalTree
) -> Tuple[SpiderState, np.ndarray]:

    def layout(points: np.ndarray, weights: np.ndarray):
        coords = np.arccos(np.clip(points @ tree.root, -1.0, 1.0))
        alpha = softmax(_spherical_betas(points, tree.root, tree.edges), axis=1)
        return np.broadcast_to(coords, (tree.num_edges, coords.shape[0])), alpha, (weights[:, None] * alpha).T

    coords_mu, alpha_mu, masses_mu = layout(mu_points, mu_weights)
    coords_nu, _, masses_nu = layout(nu_points, nu_weights)
    return _spider_forward(coords_mu, masses_mu, coords_nu, masses_nu, shared=True), alpha_mu


def _spherical_tree_grad(
    mu_points: np.ndarray,
    mu_weights: np.ndarray,
    nu_points: np.ndarray,
    nu_weights: np.ndarray,
    tree: SphericalTree
) -> Tuple[float, np.ndarray]:
    """Value and ambient (n, D) gradient on one spherical tree."""
    state, alpha = _spherical_forward(mu_points, mu_weights, nu_points, nu_weights, tree)
    coord_grad, mass_grad, _, _ = _spider_backward(state)
    root, edges = tree.root, tree.edges

    cos_polar = mu_points @ root
    sin_sq = np.clip(1.0 - cos_polar * cos_polar, 0.0, None)
    interior = sin_sq >= POLE_TOL
    sin_polar = np.sqrt(np.where(interior, sin_sq, 1.0))

    # arccos <x, y>: derivative -x / sqrt(1 - u^2), zero on the axis
    time_grad = coord_grad.sum(axis=0)
    grad = np.outer(np.where(interior, -time_grad / sin_polar, 0.0), root)

    beta_grad = _softmax_backward(alpha, mu_weights[:, None] * mass_grad.T)
    along = mu_points @ edges.T
    ratio = along / sin_polar[:, None]
    gap = sin_sq[:, None] - along * along
    smooth = (gap >= POLE_TOL) & interior[:, None]
    scale = np.where(smooth, -sin_sq[:, None] / np.sqrt(np.where(smooth, gap, 1.0)), 0.0)
    angle = np.arccos(np.clip(ratio, -1.0, 1.0))

    s = sin_polar[:, None]
    u = cos_polar[:, None]
    edge_coef = np.where(interior[:, None], beta_grad * scale / s, 0.0)
    root_coef = np.where(
        interior[:, None],
        beta_grad * (scale * along * u / s ** 3 - angle * u / s),
        0.0,
    )
    grad += edge_coef @ edges
    grad += np.outer(root_coef.sum(axis=1), root)
    return state.value, grad


def _spherical_lift_vjp(points: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Pull an (n, D+1) gradient on h(y) back to the (n, D) points y."""
    dim = points.shape[1]
    slope = np.pi / (2.0 * (1.0 + SPHERICAL_MAP_EPS)) / dim
    angle = _lift_angle(points)
    head, rest = upstream[:, 0], upstream[:, 1:]
    through_angle = slope * (-np.sin(angle) * head + np.cos(angle) * np.sum(rest * points, axis=1))
    return np.sin(angle)[:, None] * rest + through_angle[:, None]


def grad_estimate_spherical(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cfg: Optional[DistanceConfig] = None,
    mode: STSWMode = STSWMode.SPATIAL,
    trees: Optional[Sequence[SphericalTree]] = None,
    workers: Optional[int] = None
) -> Tuple[DistanceEstimate, GradientField]:
    """
    Spherical tree-sliced estimate and its ambient gradient.

    The gradient lives in the ambient space R^{d+1}; projecting the step back
    to the sphere is left to the caller.

    Args:
        mu: Measure on the unit sphere whose points are differentiated
        nu: Target measure on the unit sphere
        cfg: Distance configuration
        mode: plain or spatial
        trees: Pinned spherical trees (in the lifted space for the spatial mode)
        workers: Thread count for the per-tree map

    Returns:
        (estimate, ambient gradient averaged over trees)
    """
    cfg = DistanceConfig() if cfg is None else cfg
    mode = STSWMode(mode)
    _check_pair(mu, nu)
    _check_sphere(mu)
    _check_sphere(nu)
    mu_points, nu_points = _spherical_inputs(mu.points, nu.points, mode)
    if trees is None:
        trees = sample_spherical_trees(cfg, mu_points.shape[1])

    results = ordered_map(
        lambda tree: _spherical_tree_grad(mu_points, mu.weights, nu_points, nu.weights, tree),
        trees,
        workers,
    )
    values, grad = _average(results)
    if mode == STSWMode.SPATIAL:
        grad = _spherical_lift_vjp(mu.points, grad)
    return _make_estimate(values, cfg, f"stsw_{mode.value}"), GradientField(grad)


def _spherical_inputs(mu_points: np.ndarray, nu_points: np.ndarray, mode: STSWMode) -> Tuple[np.ndarray, np.ndarray]:
    if mode == STSWMode.SPATIAL:
        return _spherical_lift(mu_points), _spherical_lift(nu_points)
    return mu_points, nu_points


def grad_sliced(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    num_projections: int = 100,
    rng: Optional[np.random.Generator] = None,
    directions: Optional[np.ndarray] = None,
    variant: SlicedVariant = SlicedVariant.LINEAR,
    spatial: Optional[SpatialMapConfig] = None,
    radius: float = 0.0,
    power: int = 1
) -> Tuple[DistanceEstimate, GradientField]:
    """
    Sliced baseline and its gradient with respect to mu's points.

    Every direction is a single-line tree through the origin, so the spider
    backward pass gives the 1-D transport subgradients for all directions at
    once. With ``power=2`` the quantile form of the squared W2 supplies them.

    Args:
        mu: Measure whose points are differentiated
        nu: Target measure
        num_projections: Number of directions L
        rng: Stream for the directions; seeded with 0 when omitted
        directions: Pinned (L, d) unit directions
        variant: linear, spatial or circular
        spatial: Map h for the spatial variant
        radius: Shift r for the circular variant
        power: 1 for W1 per direction, 2 for squared W2

    Returns:
        (estimate, gradient averaged over directions)
    """
    variant = SlicedVariant(variant)
    _check_pair(mu, nu)
    if power not in SLICED_POWERS:
        raise InvalidConfigError(f"sliced power must be 1 or 2, got {power}")
    spatial = SpatialMapConfig() if spatial is None else spatial
    if directions is None:
        rng = make_rng(0) if rng is None else rng
        directions = sample_directions(num_projections, mu.dim, rng)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if directions.shape[1] != mu.dim:
        raise DimensionMismatchError(f"directions live in R^{directions.shape[1]}, measures in R^{mu.dim}")
    num_lines = directions.shape[0]

    coords_mu = sliced_coordinates(mu.points, directions, variant, spatial, radius)
    coords_nu = sliced_coordinates(nu.points, directions, variant, spatial, radius)
    if power == 2:
        per_line, coord_grad = quantile_w2_squared(coords_mu, mu.weights, coords_nu, nu.weights)
    else:
        state = _spider_forward(
            coords_mu, np.broadcast_to(mu.weights, coords_mu.shape),
            coords_nu, np.broadcast_to(nu.weights, coords_nu.shape),
        )
        per_line, coord_grad = state.per_line, _spider_backward(state)[0]
    coord_grad = coord_grad / num_lines

    if variant == SlicedVariant.CIRCULAR:
        grad = np.zeros_like(mu.points)
        for i, theta in enumerate(directions):
            shifted = mu.points - radius * theta
            grad += coord_grad[i][:, None] * _safe_unit(shifted, _row_norms(shifted))
    else:
        grad = coord_grad.T @ directions
        if variant == SlicedVariant.SPATIAL:
            grad = grad * spatial_map_derivative(mu.points, spatial)

    echo = DistanceConfig(
        num_trees=num_lines, lines_per_tree=1, radius=radius, root_std=0.0, spatial_map=spatial
    )
    return _make_estimate(per_line, echo, f"sw_{variant.value}"), GradientField(grad)


@dataclass(frozen=True)
class FiniteDiffReport:
    """
    Outcome of a finite-difference comparison.

    Attributes:
        max_rel_error: Largest relative error over the checked entries
        checked: Entries compared
        excluded: (point, coordinate) entries skipped because a sort order or
            prefix-sum sign changed within one step, i.e. the estimate is not
            smooth there
    """

    max_rel_error: float
    checked: int
    excluded: Tuple[Tuple[int, int], ...] = ()


def _relative_error(numeric: float, analytic: float) -> float:
    return abs(numeric - analytic) / max(abs(numeric), abs(analytic), REL_FLOOR)


def central_difference_error(
    func: Callable[[np.ndarray], float],
    grad: np.ndarray,
    x: np.ndarray,
    entries: Sequence[Tuple[int, ...]],
    step: float
) -> float:
    """
    Max relative error between ``grad`` and central differences of ``func``.

    Args:
        func: Scalar function of an array
        grad: Analytic gradient at x
        x: Evaluation point
        entries: Index tuples to check
        step: Difference step h > 0

    Returns:
        Largest relative error over ``entries``
    """
    if step <= 0:
        raise InvalidConfigError(f"finite-difference step must be > 0, got {step}")
    worst = 0.0
    for index in entries:
        plus, minus = np.array(x, dtype=np.float64), np.array(x, dtype=np.float64)
        plus[index] += step
        minus[index] -= step
        numeric = (func(plus) - func(minus)) / (2.0 * step)
        worst = max(worst, _relative_error(numeric, float(grad[index])))
    return worst


def _signature(states: Sequence[SpiderState]) -> List[np.ndarray]:
    parts = []
    for state in states:
        parts.append(np.asarray(state.order))
        parts.append(np.where(state.gaps > 0, np.sign(state.prefix[:, :-1]), 0.0))
    return parts


def _same_signature(first: List[np.ndarray], second: List[np.ndarray]) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(first, second))


def finite_diff_check(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cfg: Optional[DistanceConfig] = None,
    mode: Union[TSWMode, STSWMode] = TSWMode.SPATIAL,
    step: float = 1e-5,
    num_entries: int = 20,
    rng: Optional[np.random.Generator] = None,
    trees: Optional[Sequence[Union[TreeSystem, SphericalTree]]] = None
) -> FiniteDiffReport:
    """
    Compare analytic gradients with central differences on pinned trees.

    An ``STSWMode`` selects the spherical estimator; points are perturbed in
    the ambient space. Entries whose perturbation changes a sort order or the
    sign of a prefix sum are excluded and logged.

    Args:
        mu: Measure whose points are perturbed
        nu: Target measure
        cfg: Distance configuration; its seed pins the trees
        mode: Distance mode
        step: Difference step h > 0
        num_entries: Number of random (point, coordinate) entries to check
        rng: Stream choosing the entries
        trees: Pinned trees overriding ``cfg``

    Returns:
        Report with the max relative error and the excluded entries
    """
    if step <= 0:
        raise InvalidConfigError(f"finite-difference step must be > 0, got {step}")
    cfg = DistanceConfig() if cfg is None else cfg
    rng = derive_rng(cfg.seed, 1) if rng is None else rng
    spherical = isinstance(mode, STSWMode)

    if spherical:
        nu_points = _spherical_inputs(nu.points, nu.points, mode)[0]
        if trees is None:
            trees = sample_spherical_trees(cfg, nu_points.shape[1])
        _, analytic = grad_estimate_spherical(mu, nu, cfg, mode, trees)

        def states(points: np.ndarray) -> List[SpiderState]:
            lifted = _spherical_inputs(points, points, mode)[0]
            return [_spherical_forward(lifted, mu.weights, nu_points, nu.weights, tree)[0] for tree in trees]
    else:
        mode = TSWMode(mode)
        if trees is None:
            trees = sample_trees(cfg, mu.dim)
        _, analytic = grad_estimate(mu, nu, cfg, mode, trees)
        settings = _EuclideanSettings.from_config(cfg, mode)
        nu_points = mapped_points(nu.points, cfg, mode)

        def states(points: np.ndarray) -> List[SpiderState]:
            mapped = mapped_points(points, cfg, mode)
            return [
                _euclidean_forward(mapped, mu.weights, nu_points, nu.weights, tree, settings)[0]
                for tree in trees
            ]

    def value(points: np.ndarray) -> float:
        per_tree = [state.value for state in states(points)]
        return float(np.mean(per_tree))

    n, d = mu.points.shape
    picks = rng.choice(n * d, size=min(num_entries, n * d), replace=False)
    base_signature = _signature(states(mu.points))
    excluded = []
    checked = []
    for flat in picks:
        index = (int(flat // d), int(flat % d))
        shifted = []
        for delta in (step, -step):
            points = np.array(mu.points)
            points[index] += delta
            shifted.append(_signature(states(points)))
        if not all(_same_signature(base_signature, other) for other in shifted):
            logger.warning(f"Finite-difference entry {index} straddles a non-smooth point, excluded")
            excluded.append(index)
            continue
        checked.append(index)

    worst = central_difference_error(value, analytic.values, mu.points, checked, step) if checked else 0.0
    return FiniteDiffReport(max_rel_error=worst, checked=len(checked), excluded=tuple(excluded))
