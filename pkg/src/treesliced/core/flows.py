"""
Gradient flows of particle measures toward a target, and the datasets and
exact evaluation used to score them.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from sklearn.datasets import make_moons, make_swiss_roll

from ..utils.rng import derive_rng, draw_seed
from .config import FlowConfig, FlowMethod, GroundCost, OptimizerConfig, OptimizerKind
from .distances import SlicedVariant, STSWMode, TSWMode, sample_spherical_trees, sample_trees
from .errors import DimensionMismatchError, DivergenceError, InvalidConfigError, InvalidMeasureError
from .geometry import SPHERE_TOL, DiscreteMeasure, sample_vmf
from .gradients import grad_estimate, grad_estimate_spherical, grad_sliced

logger = logging.getLogger(__name__)

GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0
VMF_KAPPA = 50.0
GAUSSIAN_STD = 0.05
# variance of the 5x5 grid on [-2, 2]^2 plus the component variance
GAUSSIANS25_SCALE = 1.0 / np.sqrt(2.0 + GAUSSIAN_STD ** 2)


class DatasetName(str, Enum):
    GAUSSIANS25 = "gaussians25"
    GAUSSIANS8 = "gaussians8"
    SWISS_ROLL = "swiss_roll"
    HALF_MOONS = "half_moons"
    CIRCLE = "circle"
    VMF12 = "vmf12"
    UNIFORM_NORM = "uniform_norm"

    @property
    def is_spherical(self) -> bool:
        return self == DatasetName.VMF12


def icosahedral_means() -> np.ndarray:
    """The 12 unit vectors (0, +-1, +-phi) and their cyclic permutations."""
    vertices = []
    for a in (1.0, -1.0):
        for b in (GOLDEN_RATIO, -GOLDEN_RATIO):
            vertices.extend([(0.0, a, b), (a, b, 0.0), (b, 0.0, a)])
    vertices = np.array(vertices)
    return vertices / np.linalg.norm(vertices, axis=1, keepdims=True)


def _split_evenly(n: int, parts: int) -> List[int]:
    return [n // parts + (1 if i < n % parts else 0) for i in range(parts)]


def make_dataset(
    name: Union[DatasetName, str],
    n: int,
    rng: np.random.Generator,
    kappa: float = VMF_KAPPA,
    dim: int = 2
) -> DiscreteMeasure:
    """
    Generate a uniform-weight target measure.

    Args:
        name: Dataset name
        n: Number of points
        rng: Random generator
        kappa: vMF concentration for ``vmf12``
        dim: Dimension for ``uniform_norm`` (the planar sets ignore it)

    Returns:
        Uniform measure on the generated points

    Raises:
        InvalidConfigError: If the name is unknown or n < 1
    """
    try:
        name = DatasetName(name)
    except ValueError as e:
        raise InvalidConfigError(f"unknown dataset {name!r}") from e
    if n < 1:
        raise InvalidConfigError(f"dataset needs n >= 1, got {n}")

    if name == DatasetName.GAUSSIANS25:
        grid = np.linspace(-2.0, 2.0, 5)
        centers = np.array([(x, y) for x in grid for y in grid])
        points = centers[rng.integers(0, 25, size=n)] + GAUSSIAN_STD * rng.standard_normal((n, 2))
        points = points * GAUSSIANS25_SCALE
    elif name == DatasetName.GAUSSIANS8:
        angles = 2.0 * np.pi * np.arange(8) / 8
        centers = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        points = centers[rng.integers(0, 8, size=n)] + GAUSSIAN_STD * rng.standard_normal((n, 2))
    elif name == DatasetName.SWISS_ROLL:
        roll, _ = make_swiss_roll(n_samples=n, noise=0.5, random_state=draw_seed(rng))
        points = roll[:, [0, 2]] / 7.5
    elif name == DatasetName.HALF_MOONS:
        points, _ = make_moons(n_samples=n, noise=0.05, random_state=draw_seed(rng))
    elif name == DatasetName.CIRCLE:
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n)
        points = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        points = points + GAUSSIAN_STD * rng.standard_normal((n, 2))
    elif name == DatasetName.VMF12:
        means = icosahedral_means()
        points = np.vstack([
            sample_vmf(mean, kappa, count, rng)
            for mean, count in zip(means, _split_evenly(n, len(means)))
            if count > 0
        ])
        return DiscreteMeasure.uniform(points, spherical=True)
    else:
        directions = rng.standard_normal((n, dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        points = directions * rng.uniform(0.0, 1.0, size=(n, 1))

    return DiscreteMeasure.uniform(np.asarray(points, dtype=np.float64))


def initial_source(n: int, dim: int, rng: np.random.Generator, spherical: bool = False) -> np.ndarray:
    """Standard Gaussian particles, or uniform ones on the sphere."""
    points = rng.standard_normal((n, dim))
    if spherical:
        points /= np.linalg.norm(points, axis=1, keepdims=True)
    return points


def exact_w2(x: np.ndarray, y: np.ndarray, ground: Union[GroundCost, str] = GroundCost.EUCLIDEAN) -> float:
    """
    Exact 2-Wasserstein distance between two uniform point clouds of equal size.

    The optimal matching comes from an exact assignment solver. The geodesic
    cost uses 2 arcsin(||x - y|| / 2), which equals arccos <x, y> on the unit
    sphere and stays exact for coincident points.

    Args:
        x: (n, d) points
        y: (n, d) points
        ground: Euclidean or geodesic ground distance

    Returns:
        sqrt(min over permutations of mean c(x_i, y_pi(i))^2)

    Raises:
        DimensionMismatchError: If the clouds differ in size or dimension
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"exact W2 needs equal-size clouds, got {x.shape} and {y.shape}")
    if GroundCost(ground) == GroundCost.GEODESIC:
        chord = np.clip(cdist(x, y) / 2.0, 0.0, 1.0)
        cost = (2.0 * np.arcsin(chord)) ** 2
    else:
        cost = cdist(x, y, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


@dataclass(frozen=True)
class FlowCheckpoint:
    """Evaluation of a flow at one iteration."""
    iteration: int
    metric: float
    seconds_per_iter: float


@dataclass
class FlowTrace:
    """Checkpointed history of one gradient flow."""

    method: str
    metric_name: str
    checkpoints: List[FlowCheckpoint] = field(default_factory=list)
    final_points: Optional[np.ndarray] = None

    def record(self, iteration: int, metric: float, seconds_per_iter: float) -> None:
        """
        Append a checkpoint.

        Args:
            iteration: Step index (0 for the initial state)
            metric: W2 or log W2 to the target
            seconds_per_iter: Mean wall-clock time of the steps since the last checkpoint

        Raises:
            DivergenceError: If the metric is not finite
        """
        if not np.isfinite(metric):
            raise DivergenceError(f"{self.method}: non-finite {self.metric_name} at iteration {iteration}")
        if self.metric_name == "w2" and metric < 0:
            raise InvalidMeasureError(f"W2 must be nonnegative, got {metric}")
        self.checkpoints.append(FlowCheckpoint(iteration, float(metric), float(seconds_per_iter)))
        logger.info(f"{self.method} iteration {iteration}: {self.metric_name}={metric:.6g}")

    @property
    def iterations(self) -> List[int]:
        return [c.iteration for c in self.checkpoints]

    @property
    def metrics(self) -> List[float]:
        return [c.metric for c in self.checkpoints]

    def metric_at(self, iteration: int) -> float:
        for checkpoint in self.checkpoints:
            if checkpoint.iteration == iteration:
                return checkpoint.metric
        raise KeyError(f"no checkpoint at iteration {iteration}")


class ParticleOptimizer:
    """Update rule applied to the particle matrix at every flow step."""

    def __init__(self, config: OptimizerConfig, learning_rate: float) -> None:
        """
        Initialize optimizer state.

        Args:
            config: Optimizer kind and moment parameters
            learning_rate: Step size
        """
        self.config = config
        self.learning_rate = learning_rate
        self._first: Optional[np.ndarray] = None
        self._second: Optional[np.ndarray] = None
        self._steps = 0

    def step(self, points: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return the updated particles."""
        if self.config.kind == OptimizerKind.PLAIN_SGD:
            # gradients of a uniform measure scale as 1/n per particle
            return points - self.learning_rate * points.shape[0] * grad

        if self._first is None:
            self._first = np.zeros_like(points)
            self._second = np.zeros_like(points)
        beta1, beta2 = self.config.beta1, self.config.beta2
        self._steps += 1
        self._first = beta1 * self._first + (1.0 - beta1) * grad
        self._second = beta2 * self._second + (1.0 - beta2) * grad * grad
        first_hat = self._first / (1.0 - beta1 ** self._steps)
        second_hat = self._second / (1.0 - beta2 ** self._steps)
        return points - self.learning_rate * first_hat / (np.sqrt(second_hat) + self.config.eps)


TREE_MODES = {
    FlowMethod.DB_LINEAR: TSWMode.DB_LINEAR,
    FlowMethod.SPATIAL: TSWMode.SPATIAL,
    FlowMethod.CIRCULAR: TSWMode.CIRCULAR,
    FlowMethod.CIRCULAR_R0: TSWMode.CIRCULAR_R0,
}
SLICED_VARIANTS = {
    FlowMethod.SW: SlicedVariant.LINEAR,
    FlowMethod.SPATIAL_SW: SlicedVariant.SPATIAL,
    FlowMethod.CIRCULAR_SW: SlicedVariant.CIRCULAR,
}
SPHERICAL_MODES = {
    FlowMethod.STSW: STSWMode.PLAIN,
    FlowMethod.SPATIAL_STSW: STSWMode.SPATIAL,
}

GradientFn = Callable[[np.ndarray, int], np.ndarray]


def _euclidean_gradient(target: DiscreteMeasure, cfg: FlowConfig, workers: Optional[int]) -> GradientFn:
    method = cfg.method
    distance = cfg.method_distance

    def gradient(points: np.ndarray, step: int) -> np.ndarray:
        source = DiscreteMeasure.uniform(points)
        rng = derive_rng(distance.seed, step)
        if method in SLICED_VARIANTS:
            _, grad = grad_sliced(
                source, target,
                num_projections=cfg.sw_projections,
                rng=rng,
                variant=SLICED_VARIANTS[method],
                spatial=distance.spatial_map,
                radius=distance.radius,
                power=cfg.sw_power,
            )
        else:
            trees = sample_trees(distance, points.shape[1], rng)
            _, grad = grad_estimate(source, target, distance, TREE_MODES[method], trees, workers)
        return grad.values

    return gradient


def _run_flow(
    points: np.ndarray,
    target: DiscreteMeasure,
    cfg: FlowConfig,
    gradient: GradientFn,
    project: Optional[Callable[[np.ndarray], np.ndarray]]
) -> FlowTrace:
    trace = FlowTrace(method=cfg.method.value, metric_name="log_w2" if cfg.log_metric else "w2")
    optimizer = ParticleOptimizer(cfg.method_optimizer, cfg.learning_rate)
    checkpoints = set(cfg.checkpoints)

    def evaluate(iteration: int, seconds_per_iter: float) -> None:
        w2 = exact_w2(points, target.points, cfg.ground)
        if not np.isfinite(w2) or w2 > cfg.divergence_threshold:
            raise DivergenceError(
                f"{cfg.method.value} diverged at iteration {iteration}: W2={w2!r} "
                f"(threshold {cfg.divergence_threshold:g}, learning rate {cfg.learning_rate:g})"
            )
        metric = float(np.log(max(w2, cfg.log_floor))) if cfg.log_metric else w2
        trace.record(iteration, metric, seconds_per_iter)

    logger.info(
        f"Starting {cfg.method.value} flow: {points.shape[0]} particles in R^{points.shape[1]}, "
        f"{cfg.iterations} iterations, lr={cfg.learning_rate:g}"
    )
    evaluate(0, 0.0)
    elapsed, steps_since = 0.0, 0
    for step in range(1, cfg.iterations + 1):
        started = time.perf_counter()
        grad = gradient(points, step)
        points = optimizer.step(points, grad)
        if project is not None:
            points = project(points)
        if not np.all(np.isfinite(points)):
            raise DivergenceError(f"{cfg.method.value}: non-finite particles at iteration {step}")
        elapsed += time.perf_counter() - started
        steps_since += 1
        if step in checkpoints:
            evaluate(step, elapsed / steps_since)
            elapsed, steps_since = 0.0, 0

    trace.final_points = points
    return trace


def run_flow_euclidean(
    source: np.ndarray,
    target: DiscreteMeasure,
    cfg: Optional[FlowConfig] = None,
    workers: Optional[int] = None
) -> FlowTrace:
    """
    Flow uniform particles toward ``target`` by descending a sliced or tree-sliced distance.

    Trees (or directions) are redrawn at every step from a stream derived
    from the distance seed and the step index, so identical configs give
    identical traces. The exact W2 to the target is recorded at iteration 0
    and at every checkpoint.

    Args:
        source: (n, d) initial particles
        target: Target measure with n points
        cfg: Flow configuration
        workers: Thread count for the per-tree map

    Returns:
        Flow trace with the final particles

    Raises:
        DivergenceError: If W2 exceeds the divergence threshold
    """
    cfg = FlowConfig() if cfg is None else cfg
    if cfg.method.is_spherical:
        raise InvalidConfigError(f"{cfg.method.value} is a spherical method, use run_flow_spherical")
    points = np.array(source, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != target.dim:
        raise DimensionMismatchError(f"source {points.shape} does not match target dimension {target.dim}")
    return _run_flow(points, target, cfg, _euclidean_gradient(target, cfg, workers), project=None)


def _renormalize(points: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(points, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DivergenceError("a particle reached the origin and cannot be projected to the sphere")
    return points / norms


def run_flow_spherical(
    source: np.ndarray,
    target: DiscreteMeasure,
    cfg: Optional[FlowConfig] = None,
    workers: Optional[int] = None
) -> FlowTrace:
    """
    Spherical flow: ambient gradient step, then every particle is renormalized.

    Args:
        source: (n, d+1) unit initial particles
        target: Target measure on the unit sphere with n points
        cfg: Flow configuration; defaults to ``FlowConfig.spherical()``
        workers: Thread count for the per-tree map

    Returns:
        Flow trace with the final particles
    """
    cfg = FlowConfig.spherical() if cfg is None else cfg
    if not cfg.method.is_spherical:
        raise InvalidConfigError(f"{cfg.method.value} is not a spherical method")
    points = np.array(source, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != target.dim:
        raise DimensionMismatchError(f"source {points.shape} does not match target dimension {target.dim}")
    if np.max(np.abs(np.linalg.norm(points, axis=1) - 1.0)) > SPHERE_TOL:
        raise InvalidMeasureError("spherical flows need unit-norm initial particles")
    mode = SPHERICAL_MODES[cfg.method]
    distance = cfg.distance
    lifted_dim = target.dim + 1 if mode == STSWMode.SPATIAL else target.dim

    def gradient(current: np.ndarray, step: int) -> np.ndarray:
        source_measure = DiscreteMeasure.uniform(current, spherical=True)
        trees = sample_spherical_trees(distance, lifted_dim, derive_rng(distance.seed, step))
        _, grad = grad_estimate_spherical(source_measure, target, distance, mode, trees, workers)
        return grad.values

    return _run_flow(points, target, cfg, gradient, project=_renormalize)


def run_protocol(
    dataset: Union[DatasetName, str],
    cfg: FlowConfig,
    n: int = 500,
    seed: int = 0,
    dim: int = 2,
    workers: Optional[int] = None
) -> FlowTrace:
    """
    Sample a target and a Gaussian (or uniform spherical) source, then run the flow.

    Args:
        dataset: Target dataset
        cfg: Flow configuration
        n: Particles on each side
        seed: Seed of the data streams (the trees follow ``cfg.distance.seed``)
        dim: Dimension for ``uniform_norm``
        workers: Thread count for the per-tree map

    Returns:
        Flow trace
    """
    dataset = DatasetName(dataset)
    target = make_dataset(dataset, n, derive_rng(seed, 0), dim=dim)
    source = initial_source(n, target.dim, derive_rng(seed, 1), spherical=dataset.is_spherical)
    if dataset.is_spherical:
        return run_flow_spherical(source, target, cfg, workers)
    return run_flow_euclidean(source, target, cfg, workers)
