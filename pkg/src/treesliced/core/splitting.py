"""
Splitting maps that distribute each point's mass across the lines of a tree.

Every map is a softmax over distances that only depend on invariant
quantities (point-to-line distances for Euclidean trees, tangent-plane angles
for spherical trees), so applying the same isometry to points and trees leaves
the weights unchanged.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import softmax

from .errors import DimensionMismatchError, InvalidConfigError, InvalidMeasureError
from .geometry import DiscreteMeasure, SphericalTree, TreeSystem
from .projection import _circular_terms

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-10
UNIT_TOL = 1e-9
POLE_TOL = 1e-24


class SplitMode(str, Enum):
    """Distance used by the Euclidean splitting map."""
    LINEAR = "linear"
    CIRCULAR = "circular"


@dataclass(frozen=True, eq=False)
class SplitWeights:
    """
    Row-stochastic n x k matrix; row j is the split of point j over the k lines.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidMeasureError(f"split weights must be an (n, k) matrix, got {values.shape}")
        if np.any(values < 0) or np.any(values > 1):
            raise InvalidMeasureError("split weights must lie in [0, 1]")
        if np.max(np.abs(values.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise InvalidMeasureError("split weight rows must sum to 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def num_points(self) -> int:
        return self.values.shape[0]

    @property
    def num_lines(self) -> int:
        return self.values.shape[1]


def point_line_distance(y: np.ndarray, root: np.ndarray, theta: np.ndarray) -> float:
    """
    Orthogonal distance from y to the full line through ``root`` along ``theta``.

    Args:
        y: Point
        root: Source of the line
        theta: Unit direction

    Returns:
        ||(y - x) - <y - x, theta> theta||

    Raises:
        InvalidMeasureError: If theta is not a unit vector
    """
    theta = np.asarray(theta, dtype=np.float64)
    if abs(np.linalg.norm(theta) - 1.0) > UNIT_TOL:
        raise InvalidMeasureError("line direction must be a unit vector")
    diff = np.asarray(y, dtype=np.float64) - np.asarray(root, dtype=np.float64)
    residual = diff - np.dot(diff, theta) * theta
    return float(np.linalg.norm(residual))


def _linear_residuals(diff: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return diff - np.outer(diff @ theta, theta)


def _circular_distances(points: np.ndarray, root: np.ndarray, directions: np.ndarray, radius: float) -> np.ndarray:
    """(k, n) distances ||y - x - rho_i theta_i|| from the circular Gram terms."""
    inner, sq_norms, rho = _circular_terms(points, root, directions, radius)
    return np.sqrt(np.clip(sq_norms - 2.0 * rho * inner + rho * rho, 0.0, None))


def _line_distances(
    points: np.ndarray,
    root: np.ndarray,
    directions: np.ndarray,
    mode: SplitMode,
    radius: float
) -> np.ndarray:
    """(n, k) distances from every point to every line of the tree."""
    if mode == SplitMode.CIRCULAR:
        return _circular_distances(points, root, directions, radius).T
    diff = points - root
    columns = []
    for theta in directions:
        residual = _linear_residuals(diff, theta)
        columns.append(np.sqrt(np.sum(residual * residual, axis=1)))
    return np.stack(columns, axis=1)


def _euclidean_weights(
    points: np.ndarray,
    root: np.ndarray,
    directions: np.ndarray,
    mode: SplitMode,
    radius: float,
    sign: int,
    temperature: float
) -> np.ndarray:
    distances = _line_distances(points, root, directions, mode, radius)
    return softmax(sign * distances / temperature, axis=1)


def splitting_euclidean(
    m: DiscreteMeasure,
    tree: TreeSystem,
    mode: SplitMode = SplitMode.LINEAR,
    radius: float = 0.0,
    sign: int = 1,
    temperature: float = 1.0
) -> SplitWeights:
    """
    Softmax splitting over the lines of a Euclidean tree system.

    Row j is softmax_i(sign * d(y_j, L)_i / temperature). In linear mode d is
    the distance to the full line; in circular mode it is the distance from
    y - x to the point ||y - x - r theta_i|| theta_i on the line.

    Args:
        m: Measure (mapped by h for spatial distances)
        tree: Tree system
        mode: Distance family
        radius: Circular shift r, used in circular mode only
        sign: +1 weights farther lines more, -1 closer lines
        temperature: Softmax temperature tau > 0

    Returns:
        Split weights of shape (n, k)

    Raises:
        InvalidConfigError: If tau <= 0, r < 0 or sign is not +-1
    """
    if temperature <= 0:
        raise InvalidConfigError(f"splitting temperature must be > 0, got {temperature}")
    if radius < 0:
        raise InvalidConfigError(f"radius must be >= 0, got {radius}")
    if sign not in (1, -1):
        raise InvalidConfigError(f"splitting sign must be +1 or -1, got {sign}")
    if m.dim != tree.dim:
        raise DimensionMismatchError(f"measure lives in R^{m.dim}, tree in R^{tree.dim}")
    mode = SplitMode(mode)
    weights = _euclidean_weights(m.points, tree.root, tree.directions, mode, radius, sign, temperature)
    return SplitWeights(weights)


def _spherical_betas(points: np.ndarray, root: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """(n, k) tangent-plane angles scaled by the distance to the root axis."""
    cos_polar = points @ root
    sin_sq = np.clip(1.0 - cos_polar * cos_polar, 0.0, None)
    pole = sin_sq < POLE_TOL
    sin_polar = np.sqrt(np.where(pole, 1.0, sin_sq))
    ratio = np.clip((points @ edges.T) / sin_polar[:, None], -1.0, 1.0)
    betas = np.arccos(ratio) * sin_polar[:, None]
    betas[pole] = 0.0
    return betas


def splitting_spherical(m: DiscreteMeasure, tree: SphericalTree) -> SplitWeights:
    """
    Softmax of beta_i = arccos(<y, y_i> / sqrt(1 - <x, y>^2)) * sqrt(1 - <x, y>^2).

    Points at the root or its antipode get beta = 0 and a uniform row.

    Args:
        m: Measure on the sphere of the tree
        tree: Spherical tree

    Returns:
        Split weights of shape (n, k)
    """
    if m.dim != tree.ambient_dim:
        raise DimensionMismatchError(f"measure lives in R^{m.dim}, tree in R^{tree.ambient_dim}")
    betas = _spherical_betas(m.points, tree.root, tree.edges)
    return SplitWeights(softmax(betas, axis=1))
