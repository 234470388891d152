"""
Projections of measure supports onto the lines of a tree.

Linear and circular coordinates place each support point on every line of a
concurrent tree system; the spatial variants first push the points through an
injective map h. Spherical coordinates are geodesic distances to the root of
a spherical tree and are shared by all of its edges.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numpy as np

from .config import SpatialMapConfig, SpatialMapKind
from .errors import DimensionMismatchError, InvalidConfigError, InvalidMeasureError
from .geometry import SPHERE_TOL, DiscreteMeasure, SphericalTree, TreeSystem

logger = logging.getLogger(__name__)

SPHERICAL_MAP_EPS = 1e-6
ABLATION_GAMMAS = (0.1, 0.5, 1.0, 5.0, 10.0)
ABLATION_DEGREES = (3, 5)


class CoordinateRange(str, Enum):
    """Where the coordinates of a line live."""
    REAL_LINE = "real_line"
    NONNEG_RAY = "nonneg_ray"
    SPHERICAL_0_PI = "spherical_0_pi"


@dataclass(frozen=True, eq=False)
class CoordinateMatrix:
    """
    Coordinates of n points on the k lines of one tree.

    Attributes:
        values: (k, n) matrix, values[i, j] is the coordinate of point j on line i
        range: Range flag of the coordinates
        shared: All rows are identical (circular r = 0, spherical trees)
    """

    values: np.ndarray
    range: CoordinateRange
    shared: bool = False

    def __post_init__(self) -> None:
        values = self.values
        if values.ndim != 2:
            raise InvalidMeasureError(f"coordinates must be a (k, n) matrix, got {values.shape}")
        if self.range == CoordinateRange.NONNEG_RAY and np.any(values < 0):
            raise InvalidMeasureError("ray coordinates must be nonnegative")
        if self.range == CoordinateRange.SPHERICAL_0_PI and (np.any(values < 0) or np.any(values > np.pi)):
            raise InvalidMeasureError("spherical coordinates must lie in [0, pi]")
        if values.flags.writeable:
            values = values.copy()
            values.setflags(write=False)
            object.__setattr__(self, "values", values)

    @property
    def num_lines(self) -> int:
        return self.values.shape[0]

    @property
    def num_points(self) -> int:
        return self.values.shape[1]

    @property
    def shared_row(self) -> np.ndarray:
        """The coordinate vector common to every line (first row otherwise)."""
        return self.values[0]


def _row_norms(matrix: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(matrix * matrix, axis=-1))


def _linear_coordinates(points: np.ndarray, root: np.ndarray, directions: np.ndarray) -> np.ndarray:
    return directions @ (points - root).T


def _circular_terms(
    points: np.ndarray,
    root: np.ndarray,
    directions: np.ndarray,
    radius: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gram terms of the circular projection from a single product.

    Returns:
        (inner, sq_norms, rho): inner[i, j] = <y_j - x, theta_i>,
        sq_norms[j] = ||y_j - x||^2 and
        rho[i, j] = sqrt(sq_norms[j] - 2 r inner[i, j] + r^2) = ||y_j - x - r theta_i||
    """
    diff = points - root
    inner = directions @ diff.T
    sq_norms = np.sum(diff * diff, axis=1)
    rho = np.sqrt(np.clip(sq_norms - 2.0 * radius * inner + radius * radius, 0.0, None))
    return inner, sq_norms, rho


def _circular_coordinates(
    points: np.ndarray,
    root: np.ndarray,
    directions: np.ndarray,
    radius: float,
    fast_path: bool = True
) -> np.ndarray:
    if radius == 0 and fast_path:
        norms = _row_norms(points - root)
        return np.broadcast_to(norms, (directions.shape[0], norms.shape[0]))
    return _circular_terms(points, root, directions, radius)[2]


def _spherical_coordinates(points: np.ndarray, root: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(points @ root, -1.0, 1.0))


def _check_tree_dim(m: DiscreteMeasure, dim: int) -> None:
    if m.dim != dim:
        raise DimensionMismatchError(f"measure lives in R^{m.dim}, tree in R^{dim}")


def project_linear(m: DiscreteMeasure, tree: TreeSystem) -> CoordinateMatrix:
    """
    Linear coordinates t[i, j] = <y_j - x, theta_i>.

    Args:
        m: Measure (already mapped by h for spatial distances)
        tree: Tree system

    Returns:
        Coordinates on the real line
    """
    _check_tree_dim(m, tree.dim)
    values = _linear_coordinates(m.points, tree.root, tree.directions)
    return CoordinateMatrix(values=values, range=CoordinateRange.REAL_LINE)


def project_circular(
    m: DiscreteMeasure,
    tree: TreeSystem,
    radius: float,
    fast_path: bool = True
) -> CoordinateMatrix:
    """
    Circular coordinates t[i, j] = ||y_j - x - r theta_i||.

    With r = 0 every line sees the same coordinate ||y_j - x||; the fast path
    computes it once per point and marks the matrix as shared.

    Args:
        m: Measure
        tree: Tree system
        radius: Shift r >= 0 of the sphere centers along each line
        fast_path: Use the shared-coordinate path when r = 0

    Returns:
        Coordinates on the nonnegative ray

    Raises:
        InvalidConfigError: If r < 0
    """
    if radius < 0:
        raise InvalidConfigError(f"radius must be >= 0, got {radius}")
    _check_tree_dim(m, tree.dim)
    values = _circular_coordinates(m.points, tree.root, tree.directions, radius, fast_path)
    shared = radius == 0 and fast_path
    return CoordinateMatrix(values=values, range=CoordinateRange.NONNEG_RAY, shared=shared)


def spatial_map(points: np.ndarray, cfg: SpatialMapConfig) -> np.ndarray:
    """
    Elementwise injective map h(x) = x + gamma * x**degree.

    Args:
        points: (n, d) matrix
        cfg: Map configuration; the identity kind returns a copy of the input

    Returns:
        (n, d) mapped points
    """
    points = np.asarray(points, dtype=np.float64)
    if cfg.kind == SpatialMapKind.IDENTITY:
        return points.copy()
    return points + cfg.gamma * points ** cfg.degree


def spatial_map_derivative(points: np.ndarray, cfg: SpatialMapConfig) -> np.ndarray:
    """Elementwise derivative h'(x) = 1 + gamma * degree * x**(degree - 1)."""
    points = np.asarray(points, dtype=np.float64)
    if cfg.kind == SpatialMapKind.IDENTITY:
        return np.ones_like(points)
    return 1.0 + cfg.gamma * cfg.degree * points ** (cfg.degree - 1)


def spatial_ablation_grid() -> List[SpatialMapConfig]:
    """Spatial maps y + gamma y^3 and y + gamma y^5 over the ablation gammas."""
    return [
        SpatialMapConfig(kind=SpatialMapKind.ODD_POLY, degree=degree, gamma=gamma)
        for degree in ABLATION_DEGREES
        for gamma in ABLATION_GAMMAS
    ]


def suggest_radius(dim: int) -> float:
    """Starting radius 1/sqrt(d) for CircularTSW on normalized data."""
    if dim < 1:
        raise InvalidConfigError(f"dimension must be >= 1, got {dim}")
    return 1.0 / np.sqrt(dim)


def _check_unit_rows(points: np.ndarray) -> None:
    norms = _row_norms(points)
    if np.max(np.abs(norms - 1.0)) > SPHERE_TOL:
        raise InvalidMeasureError("spherical projection needs unit-norm support points")


def project_spherical(m: DiscreteMeasure, tree: SphericalTree) -> CoordinateMatrix:
    """
    Geodesic coordinates t[j] = arccos <x, y_j>, shared by every edge.

    Args:
        m: Measure supported on the sphere of the tree
        tree: Spherical tree

    Returns:
        Shared coordinates in [0, pi], one row per edge
    """
    if m.dim != tree.ambient_dim:
        raise DimensionMismatchError(f"measure lives in R^{m.dim}, tree in R^{tree.ambient_dim}")
    _check_unit_rows(m.points)
    coords = _spherical_coordinates(m.points, tree.root)
    values = np.broadcast_to(coords, (tree.num_edges, coords.shape[0]))
    return CoordinateMatrix(values=values, range=CoordinateRange.SPHERICAL_0_PI, shared=True)


def _lift_angle(points: np.ndarray) -> np.ndarray:
    scale = np.pi / (2.0 * (1.0 + SPHERICAL_MAP_EPS))
    return scale * (points.mean(axis=1) + 1.0 + SPHERICAL_MAP_EPS)


def _spherical_lift(points: np.ndarray) -> np.ndarray:
    angle = _lift_angle(points)
    return np.hstack([np.cos(angle)[:, None], np.sin(angle)[:, None] * points])


def spherical_spatial_map(points: np.ndarray) -> np.ndarray:
    """
    Injective lift h: S^d -> S^{d+1}, h(y) = (cos k(y), sin k(y) y).

    k(y) = pi / (2 (1 + eps)) * (mean(y) + 1 + eps) lies in (0, pi), so
    sin k(y) > 0 and y can be read back from h(y).

    Args:
        points: (n, d+1) unit vectors

    Returns:
        (n, d+2) unit vectors
    """
    points = np.asarray(points, dtype=np.float64)
    _check_unit_rows(points)
    return _spherical_lift(points)
