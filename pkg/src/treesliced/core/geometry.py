"""
Core vector types and samplers: discrete measures, concurrent tree systems,
spherical trees, von Mises-Fisher points and Euclidean isometries.
"""

import logging
from dataclasses import dataclass
from functools import singledispatch
from typing import Optional, Union

import numpy as np
from scipy.stats import vonmises_fisher

from .config import DirectionScheme
from .errors import DimensionMismatchError, InvalidDimensionError, InvalidMeasureError

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
SPHERE_TOL = 1e-9
DIRECTION_TOL = 1e-12
ORTHOGONALITY_TOL = 1e-10

# resampling guard for measure-zero degenerate draws
_MAX_RESAMPLES = 100


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """
    Weighted point cloud standing in for a probability measure.

    Attributes:
        points: (n, d) support points
        weights: (n,) nonnegative weights summing to 1
        spherical: Whether the support lives on the unit sphere of R^d
    """

    points: np.ndarray
    weights: np.ndarray
    spherical: bool = False

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)

        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidMeasureError(f"points must be an (n, d) matrix with n, d >= 1, got {points.shape}")
        if weights.shape != (points.shape[0],):
            raise InvalidMeasureError(
                f"weights shape {weights.shape} does not match {points.shape[0]} points"
            )
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(weights))):
            raise InvalidMeasureError("points and weights must be finite")
        if np.any(weights < 0):
            raise InvalidMeasureError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidMeasureError(f"weights sum to {weights.sum()!r}, expected 1")
        if self.spherical:
            norms = np.linalg.norm(points, axis=1)
            if np.max(np.abs(norms - 1.0)) > SPHERE_TOL:
                raise InvalidMeasureError("spherical measure has support points off the unit sphere")

        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def uniform(cls, points: np.ndarray, spherical: bool = False) -> "DiscreteMeasure":
        """Measure with equal weight on every row of ``points``."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 1:
            raise InvalidMeasureError(f"points must be an (n, d) matrix, got {points.shape}")
        n = points.shape[0]
        return cls(points=points, weights=np.full(n, 1.0 / n), spherical=spherical)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_points(self, points: np.ndarray) -> "DiscreteMeasure":
        """Same weights and flag, new support."""
        return DiscreteMeasure(points=points, weights=self.weights, spherical=self.spherical)


@dataclass(frozen=True, eq=False)
class TreeSystem:
    """
    Concurrent system of k lines sharing the root.

    Attributes:
        root: (d,) common source x
        directions: (k, d) unit directions theta_1..theta_k
    """

    root: np.ndarray
    directions: np.ndarray

    def __post_init__(self) -> None:
        root = np.asarray(self.root, dtype=np.float64)
        directions = np.asarray(self.directions, dtype=np.float64)
        if root.ndim != 1 or directions.ndim != 2 or directions.shape[0] < 1:
            raise InvalidDimensionError(
                f"tree needs a (d,) root and (k, d) directions with k >= 1, got {root.shape} and {directions.shape}"
            )
        if directions.shape[1] != root.shape[0]:
            raise DimensionMismatchError(
                f"root has dimension {root.shape[0]} but directions have {directions.shape[1]}"
            )
        norms = np.linalg.norm(directions, axis=1)
        if np.max(np.abs(norms - 1.0)) > DIRECTION_TOL:
            raise InvalidMeasureError("tree directions must have unit norm")
        object.__setattr__(self, "root", _frozen(root))
        object.__setattr__(self, "directions", _frozen(directions))

    @property
    def num_lines(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.root.shape[0]


@dataclass(frozen=True, eq=False)
class SphericalTree:
    """
    k great-circle rays of length pi leaving the root x on S^d.

    Attributes:
        root: (d+1,) unit vector x
        edges: (k, d+1) unit tangent directions y_i with <x, y_i> = 0
    """

    root: np.ndarray
    edges: np.ndarray

    def __post_init__(self) -> None:
        root = np.asarray(self.root, dtype=np.float64)
        edges = np.asarray(self.edges, dtype=np.float64)
        if root.ndim != 1 or edges.ndim != 2 or edges.shape[0] < 1:
            raise InvalidDimensionError(
                f"spherical tree needs a root vector and (k, d+1) edges, got {root.shape} and {edges.shape}"
            )
        if edges.shape[1] != root.shape[0]:
            raise DimensionMismatchError(
                f"root has dimension {root.shape[0]} but edges have {edges.shape[1]}"
            )
        if abs(np.linalg.norm(root) - 1.0) > DIRECTION_TOL:
            raise InvalidMeasureError("spherical tree root must have unit norm")
        if np.max(np.abs(np.linalg.norm(edges, axis=1) - 1.0)) > DIRECTION_TOL:
            raise InvalidMeasureError("spherical tree edges must have unit norm")
        if np.max(np.abs(edges @ root)) > SPHERE_TOL:
            raise InvalidMeasureError("spherical tree edges must be tangent to the root")
        object.__setattr__(self, "root", _frozen(root))
        object.__setattr__(self, "edges", _frozen(edges))

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.root.shape[0]


@dataclass(frozen=True, eq=False)
class IsometryEd:
    """Rigid motion g(y) = Q y + a of R^d."""

    Q: np.ndarray
    a: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        Q = np.asarray(self.Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise InvalidDimensionError(f"Q must be square, got {Q.shape}")
        a = np.zeros(Q.shape[0]) if self.a is None else np.asarray(self.a, dtype=np.float64)
        if a.shape != (Q.shape[0],):
            raise DimensionMismatchError(f"translation has shape {a.shape}, expected ({Q.shape[0]},)")
        if np.max(np.abs(Q.T @ Q - np.eye(Q.shape[0]))) > ORTHOGONALITY_TOL:
            raise InvalidMeasureError("Q is not orthogonal")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "a", _frozen(a))

    @property
    def dim(self) -> int:
        return self.Q.shape[0]


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=-1, keepdims=True)


def sample_unit_sphere(d: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw a uniform point of S^{d-1} by normalizing a standard Gaussian.

    Args:
        d: Ambient dimension
        rng: Random generator

    Returns:
        (d,) unit vector

    Raises:
        InvalidDimensionError: If d < 1
    """
    if d < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
    for _ in range(_MAX_RESAMPLES):
        vector = rng.standard_normal(d)
        norm = np.linalg.norm(vector)
        if norm > 0:
            return vector / norm
    raise RuntimeError("could not draw a nonzero Gaussian vector")


def _sample_directions(d: int, k: int, scheme: DirectionScheme, rng: np.random.Generator) -> np.ndarray:
    if scheme == DirectionScheme.ORTHOGONAL:
        if k > d:
            raise InvalidDimensionError(f"orthogonal scheme needs k <= d, got k={k}, d={d}")
        for _ in range(_MAX_RESAMPLES):
            gaussian = rng.standard_normal((d, k))
            q, r = np.linalg.qr(gaussian)
            diag = np.diag(r)
            if np.all(np.abs(diag) > 1e-12):
                # sign fix makes the frame Haar distributed
                frame = (q * np.sign(diag)).T
                return _normalize_rows(frame)
            logger.debug("Rank-deficient Gaussian frame, resampling")
        raise RuntimeError("could not draw a full-rank Gaussian frame")

    for _ in range(_MAX_RESAMPLES):
        gaussian = rng.standard_normal((k, d))
        norms = np.linalg.norm(gaussian, axis=1)
        if np.all(norms > 0):
            return gaussian / norms[:, None]
    raise RuntimeError("could not draw nonzero Gaussian directions")


def sample_tree_system(
    d: int,
    k: int,
    root_std: float,
    scheme: Union[DirectionScheme, str],
    rng: np.random.Generator
) -> TreeSystem:
    """
    Sample a concurrent tree system.

    The root is N(0, root_std^2 I); directions are i.i.d. uniform on S^{d-1}
    or, for the orthogonal scheme, an orthonormal k-frame.

    Args:
        d: Dimension of the space the lines live in
        k: Number of lines
        root_std: Standard deviation of the root
        scheme: Direction scheme
        rng: Random generator

    Returns:
        Sampled tree system
    """
    if d < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
    if k < 1:
        raise InvalidDimensionError(f"a tree needs at least one line, got k={k}")
    scheme = DirectionScheme(scheme)

    gaussian_root = rng.standard_normal(d)
    root = root_std * gaussian_root if root_std > 0 else np.zeros(d)
    directions = _sample_directions(d, k, scheme, rng)
    return TreeSystem(root=root, directions=directions)


def spherical_tree_from_gaussians(raw_root: np.ndarray, raw_edges: np.ndarray) -> SphericalTree:
    """
    Build a spherical tree from raw Gaussian draws.

    The root is the normalized ``raw_root``; each edge is the row of
    ``raw_edges`` with its root component removed, then normalized. The map
    commutes with rotations of the raw inputs.

    Args:
        raw_root: (d+1,) Gaussian vector
        raw_edges: (k, d+1) Gaussian matrix

    Returns:
        Spherical tree
    """
    root = raw_root / np.linalg.norm(raw_root)
    edges = raw_edges - np.outer(raw_edges @ root, root)
    # second pass removes round-off left by the first projection
    edges = edges - np.outer(edges @ root, root)
    edges = _normalize_rows(edges)
    return SphericalTree(root=root, edges=edges)


def sample_spherical_tree(d: int, k: int, rng: np.random.Generator) -> SphericalTree:
    """
    Sample a spherical tree on S^d.

    The root is uniform on S^d and each edge direction is uniform on the
    tangent sphere at the root.

    Args:
        d: Intrinsic sphere dimension (points live in R^{d+1})
        k: Number of edges
        rng: Random generator

    Returns:
        Sampled spherical tree
    """
    if d < 2:
        raise InvalidDimensionError(f"spherical trees need d >= 2, got {d}")
    if k < 1:
        raise InvalidDimensionError(f"a tree needs at least one edge, got k={k}")

    for _ in range(_MAX_RESAMPLES):
        raw_root = rng.standard_normal(d + 1)
        raw_edges = rng.standard_normal((k, d + 1))
        if np.linalg.norm(raw_root) == 0:
            continue
        root = raw_root / np.linalg.norm(raw_root)
        tangent = raw_edges - np.outer(raw_edges @ root, root)
        if np.all(np.linalg.norm(tangent, axis=1) > 1e-12):
            return spherical_tree_from_gaussians(raw_root, raw_edges)
        logger.debug("Degenerate tangent projection, resampling spherical tree")
    raise RuntimeError("could not draw a non-degenerate spherical tree")


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of O(d) via QR with sign correction."""
    if d < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_isometry(d: int, rng: np.random.Generator, translation_scale: float = 1.0) -> IsometryEd:
    """Random rigid motion: Haar rotation/reflection plus Gaussian translation."""
    return IsometryEd(Q=random_orthogonal(d, rng), a=translation_scale * rng.standard_normal(d))


def _check_dim(g: IsometryEd, dim: int) -> None:
    if g.dim != dim:
        raise DimensionMismatchError(f"isometry acts on R^{g.dim}, object lives in R^{dim}")


@singledispatch
def _transform(obj, g: IsometryEd):
    raise TypeError(f"cannot apply an isometry to {type(obj).__name__}")


@_transform.register
def _(obj: DiscreteMeasure, g: IsometryEd) -> DiscreteMeasure:
    _check_dim(g, obj.dim)
    if obj.spherical and np.any(g.a != 0):
        raise InvalidMeasureError("spherical measures only admit rotations (a = 0)")
    points = obj.points @ g.Q.T + g.a
    if obj.spherical:
        points = _normalize_rows(points)
    return DiscreteMeasure(points=points, weights=obj.weights, spherical=obj.spherical)


@_transform.register
def _(obj: TreeSystem, g: IsometryEd) -> TreeSystem:
    _check_dim(g, obj.dim)
    directions = _normalize_rows(obj.directions @ g.Q.T)
    return TreeSystem(root=g.Q @ obj.root + g.a, directions=directions)


@_transform.register
def _(obj: SphericalTree, g: IsometryEd) -> SphericalTree:
    _check_dim(g, obj.ambient_dim)
    if np.any(g.a != 0):
        raise InvalidMeasureError("spherical trees only admit rotations (a = 0)")
    root = g.Q @ obj.root
    root = root / np.linalg.norm(root)
    edges = obj.edges @ g.Q.T
    edges = _normalize_rows(edges - np.outer(edges @ root, root))
    return SphericalTree(root=root, edges=edges)


def apply_isometry(g: IsometryEd, obj):
    """
    Apply a rigid motion to a measure or a tree.

    Points and roots map y -> Q y + a, directions map theta -> Q theta and
    weights are unchanged. Spherical trees and spherical measures accept
    pure rotations (a = 0) only.

    Args:
        g: Isometry
        obj: DiscreteMeasure, TreeSystem or SphericalTree

    Returns:
        Transformed object of the same type

    Raises:
        DimensionMismatchError: If g and obj live in different dimensions
    """
    return _transform(obj, g)



def sample_vmf(mean: np.ndarray, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw i.i.d. von Mises-Fisher samples on S^d.

    Uses scipy's Wood-style rejection sampler; kappa = 0 is the uniform
    distribution.

    Args:
        mean: (d+1,) unit mean direction
        kappa: Concentration, >= 0
        n: Number of samples
        rng: Random generator

    Returns:
        (n, d+1) unit vectors
    """
    mean = np.asarray(mean, dtype=np.float64)
    if kappa < 0:
        raise InvalidMeasureError(f"kappa must be nonnegative, got {kappa}")
    if mean.ndim != 1 or mean.shape[0] < 2:
        raise InvalidDimensionError(f"mean must be a vector in R^(d+1) with d >= 1, got {mean.shape}")
    if abs(np.linalg.norm(mean) - 1.0) > SPHERE_TOL:
        raise InvalidMeasureError("vMF mean direction must have unit norm")
    if n < 1:
        raise InvalidDimensionError(f"need at least one sample, got n={n}")

    if kappa == 0:
        samples = rng.standard_normal((n, mean.shape[0]))
    else:
        samples = vonmises_fisher(mean, kappa).rvs(n, random_state=rng)
        samples = np.atleast_2d(samples)
    return _normalize_rows(samples)


def pairwise_distances(points: np.ndarray, other: Optional[np.ndarray] = None) -> np.ndarray:
    """Euclidean distance matrix between the rows of two point sets."""
    other = points if other is None else other
    diff = points[:, None, :] - other[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))
