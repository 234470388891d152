"""
Runtime benchmark harness for the Euclidean estimators.
"""

import gc
import logging
import statistics
import threading
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import psutil

from ..core.config import DistanceConfig, FlowMethod, SpatialMapConfig
from ..core.distances import SlicedVariant, TSWMode, estimate_sw, estimate_tsw
from ..core.geometry import DiscreteMeasure
from ..utils.rng import derive_rng
from .config_manager import BenchGrid

logger = logging.getLogger(__name__)

RSS_SAMPLE_SECONDS = 0.005

BENCH_HEADER = (
    "method", "n", "d", "num_trees", "lines_per_tree", "radius", "gamma",
    "seconds", "peak_rss_bytes", "repeats", "status",
)


@dataclass(frozen=True)
class BenchRecord:
    """Timing of one (method, n, d) cell; seconds is the median over repeats."""
    method: str
    n: int
    d: int
    num_trees: int
    lines_per_tree: int
    radius: float
    gamma: float
    seconds: float
    peak_rss_bytes: int
    repeats: int
    status: str = "ok"

    def as_row(self) -> tuple:
        return (
            self.method, self.n, self.d, self.num_trees, self.lines_per_tree, self.radius,
            self.gamma, self.seconds, self.peak_rss_bytes, self.repeats, self.status,
        )


def _cell_runner(
    method: FlowMethod,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    grid: BenchGrid,
    seed: int,
    workers: Optional[int]
) -> Callable[[], float]:
    cfg = DistanceConfig(
        num_trees=grid.num_trees,
        lines_per_tree=grid.lines_per_tree,
        radius=grid.radius,
        seed=seed,
        spatial_map=SpatialMapConfig(gamma=grid.gamma),
    )
    if method == FlowMethod.SW:
        # matched budget: as many directions as lines in the tree estimators
        projections = grid.num_trees * grid.lines_per_tree
        return lambda: estimate_sw(
            mu, nu, projections, rng=derive_rng(seed, 0), variant=SlicedVariant.LINEAR, workers=workers
        ).value
    mode = TSWMode(method.value)
    return lambda: estimate_tsw(mu, nu, cfg, mode, workers=workers).value


class PeakRssSampler:
    """
    Largest resident set size seen while the block runs.

    A daemon thread polls psutil every ``interval`` seconds; the value on
    entry and on exit is always included.
    """

    def __init__(self, interval: float = RSS_SAMPLE_SECONDS) -> None:
        self.interval = interval
        self.peak = 0
        self._process = psutil.Process()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _sample(self) -> None:
        self.peak = max(self.peak, int(self._process.memory_info().rss))

    def _poll(self) -> None:
        while not self._stop.wait(self.interval):
            self._sample()

    def __enter__(self) -> "PeakRssSampler":
        self._stop.clear()
        self._sample()
        self._thread = threading.Thread(target=self._poll, name="rss-sampler", daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc_info) -> bool:
        self._stop.set()
        self._thread.join()
        self._sample()
        return False


def bench_runtime(grid: BenchGrid, seed: int = 0, workers: Optional[int] = None) -> List[BenchRecord]:
    """
    Time every (method, n, d) cell of the grid.

    Each cell draws Gaussian measures, runs once to warm up, then times
    ``grid.repeats`` runs on the monotonic clock and keeps the median. A cell
    that runs out of memory is recorded as skipped.

    Args:
        grid: Sweep definition
        seed: Seed for measures and trees
        workers: Thread count for the per-tree map

    Returns:
        One record per cell, in grid order
    """
    records = []
    for d in grid.d:
        for n in grid.n:
            rng = derive_rng(seed, n, d)
            mu = DiscreteMeasure.uniform(rng.standard_normal((n, d)))
            nu = DiscreteMeasure.uniform(rng.standard_normal((n, d)) + 1.0)
            for method in grid.methods:
                records.append(_bench_cell(method, mu, nu, grid, seed, workers))
    return records


def _bench_cell(
    method: FlowMethod,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    grid: BenchGrid,
    seed: int,
    workers: Optional[int]
) -> BenchRecord:
    n, d = mu.size, mu.dim
    common = dict(
        method=method.value, n=n, d=d, num_trees=grid.num_trees, lines_per_tree=grid.lines_per_tree,
        radius=grid.radius, gamma=grid.gamma, repeats=grid.repeats,
    )
    run = _cell_runner(method, mu, nu, grid, seed, workers)
    timings = []
    sampler = PeakRssSampler()
    try:
        with sampler:
            run()
            for _ in range(grid.repeats):
                gc.collect()
                started = time.perf_counter()
                run()
                timings.append(time.perf_counter() - started)
    except MemoryError:
        logger.warning(f"Skipping {method.value} at n={n}, d={d}: out of memory")
        return BenchRecord(seconds=float("nan"), peak_rss_bytes=sampler.peak, status="skipped", **common)

    seconds = max(statistics.median(timings), np.finfo(float).tiny)
    logger.info(f"{method.value} n={n} d={d}: median {seconds:.4g}s over {grid.repeats} runs")
    return BenchRecord(seconds=seconds, peak_rss_bytes=sampler.peak, **common)
