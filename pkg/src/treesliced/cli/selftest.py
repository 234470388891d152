"""
Self-test runner: property suites over random instances with a summary table.

Suites:
    oracle      spider W1 against the LP tree-transport oracle
    metric      symmetry, triangle inequality and d(mu, mu) = 0 on pinned trees
    invariance  per-tree values under paired rigid motions / rotations
    reductions  one-line trees against sliced W1, circular r = 0 fast path
    gradients   analytic gradients against central differences
    exact_w2    assignment-based W2 against brute force over permutations
"""

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, NonNegativeInt

from ..core import tree_ot
from ..core.config import DistanceConfig, GroundCost
from ..core.distances import (
    STSWMode,
    TSWMode,
    estimate_sw,
    estimate_stsw,
    estimate_tsw,
    mapped_points,
    spherical_tree_value,
    tree_value,
)
from ..core.flows import exact_w2
from ..core.geometry import (
    DiscreteMeasure,
    IsometryEd,
    apply_isometry,
    random_isometry,
    random_orthogonal,
    sample_spherical_tree,
    sample_tree_system,
)
from ..core.gradients import finite_diff_check
from ..core.projection import CoordinateRange, spherical_spatial_map
from ..utils.rng import derive_rng, draw_seed

logger = logging.getLogger(__name__)

ORACLE_ABS_TOL = 1e-9
METRIC_TOL = 1e-10
INVARIANCE_TOL = 1e-9
SLICED_REDUCTION_TOL = 1e-12
CIRCULAR_REDUCTION_TOL = 1e-10
EUCLIDEAN_GRAD_TOL = 1e-4
SPHERICAL_GRAD_TOL = 1e-3
EXACT_W2_TOL = 1e-10

SELFTEST_HEADER = ("suite", "checked", "failures", "max_error", "tolerance", "status")


class SelfTestPlan(BaseModel):
    """Number of random instances per suite."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    oracle: NonNegativeInt = 1000
    metric: NonNegativeInt = 500
    invariance: NonNegativeInt = 100
    reductions: NonNegativeInt = 100
    gradients: NonNegativeInt = 50
    exact_w2: NonNegativeInt = 200

    @classmethod
    def quick(cls) -> "SelfTestPlan":
        return cls(oracle=100, metric=50, invariance=20, reductions=20, gradients=10, exact_w2=40)


@dataclass
class SuiteResult:
    """Outcome of one suite; ``max_error`` is the worst deviation seen."""
    name: str
    tolerance: float
    checked: int = 0
    failures: int = 0
    max_error: float = 0.0
    seconds: float = 0.0
    messages: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def check(self, error: float, tolerance: float, what: str) -> None:
        self.checked += 1
        self.max_error = max(self.max_error, error)
        if not error <= tolerance:
            self.failures += 1
            if len(self.messages) < 5:
                self.messages.append(f"{what}: error {error:.3e} > {tolerance:.0e}")

    def as_row(self) -> tuple:
        return (
            self.name, self.checked, self.failures, self.max_error, self.tolerance,
            "pass" if self.passed else "FAIL",
        )


def _random_measure(rng: np.random.Generator, n: int, d: int, spherical: bool = False) -> DiscreteMeasure:
    points = rng.standard_normal((n, d))
    if spherical:
        points /= np.linalg.norm(points, axis=1, keepdims=True)
    weights = rng.dirichlet(np.ones(n))
    return DiscreteMeasure(points=points, weights=weights, spherical=spherical)


def _uniform_measure(rng: np.random.Generator, n: int, d: int, spherical: bool = False) -> DiscreteMeasure:
    points = rng.standard_normal((n, d))
    if spherical:
        points /= np.linalg.norm(points, axis=1, keepdims=True)
    return DiscreteMeasure.uniform(points, spherical=spherical)


def _check_metric(result: SuiteResult, label: str, distance: Callable[[DiscreteMeasure, DiscreteMeasure], float],
                  a: DiscreteMeasure, b: DiscreteMeasure, c: DiscreteMeasure) -> None:
    ab, ba = distance(a, b), distance(b, a)
    ac, bc = distance(a, c), distance(b, c)
    result.check(abs(ab - ba), METRIC_TOL, f"{label} symmetry")
    result.check(max(ac - ab - bc, 0.0), METRIC_TOL, f"{label} triangle")
    # identity of indiscernibles is exact, not approximate
    result.check(0.0 if distance(a, a) == 0.0 else np.inf, 0.0, f"{label} d(mu, mu)")


def suite_oracle(rng: np.random.Generator, count: int) -> SuiteResult:
    result = SuiteResult("oracle", ORACLE_ABS_TOL)
    ranges = (CoordinateRange.REAL_LINE, CoordinateRange.NONNEG_RAY)
    for i in range(count):
        k = int(rng.integers(1, 5))
        m = int(rng.integers(1, 9))
        coord_range = ranges[i % 2]
        shared = bool(rng.random() < 0.25)
        mu_p, nu_p = tree_ot.sample_tree_instance(rng, k, m, coord_range, shared)
        error = abs(tree_ot.spider_w1(mu_p, nu_p) - tree_ot.lp_tree_w1_oracle(mu_p, nu_p))
        result.check(error, ORACLE_ABS_TOL, f"instance {i} (k={k}, m={m}, {coord_range.value})")
    return result


def suite_metric(rng: np.random.Generator, count: int) -> SuiteResult:
    result = SuiteResult("metric", METRIC_TOL)
    for i in range(count):
        d = int(rng.integers(1, 4))
        cfg = DistanceConfig(num_trees=3, lines_per_tree=int(rng.integers(1, 5)), radius=0.5, seed=draw_seed(rng))
        a, b, c = (_random_measure(rng, int(rng.integers(1, 6)), d) for _ in range(3))
        for mode in TSWMode:
            _check_metric(result, f"triple {i} {mode.value}",
                          lambda x, y: estimate_tsw(x, y, cfg, mode).value, a, b, c)

        a, b, c = (_random_measure(rng, int(rng.integers(1, 6)), 3, spherical=True) for _ in range(3))
        for mode in STSWMode:
            _check_metric(result, f"triple {i} stsw_{mode.value}",
                          lambda x, y: estimate_stsw(x, y, cfg, mode).value, a, b, c)
    return result


def suite_invariance(rng: np.random.Generator, count: int) -> SuiteResult:
    result = SuiteResult("invariance", INVARIANCE_TOL)
    for i in range(count):
        d = int(rng.integers(2, 5))
        cfg = DistanceConfig(lines_per_tree=3, radius=0.3)
        mu, nu = _random_measure(rng, 5, d), _random_measure(rng, 4, d)
        tree = sample_tree_system(d, cfg.lines_per_tree, 1.0, cfg.direction_scheme, rng)
        g = random_isometry(d, rng)
        for mode in TSWMode:
            # the transform acts where the trees live, after h
            mu_h = mu.with_points(mapped_points(mu.points, cfg, mode))
            nu_h = nu.with_points(mapped_points(nu.points, cfg, mode))
            before = tree_value(mu_h, nu_h, tree, cfg, mode)
            after = tree_value(apply_isometry(g, mu_h), apply_isometry(g, nu_h), apply_isometry(g, tree), cfg, mode)
            result.check(abs(before - after), INVARIANCE_TOL, f"draw {i} {mode.value}")

        mu_s, nu_s = _random_measure(rng, 5, 3, spherical=True), _random_measure(rng, 4, 3, spherical=True)
        for label, lift in (("stsw_plain", None), ("stsw_spatial", spherical_spatial_map)):
            if lift is not None:
                mu_l = DiscreteMeasure(lift(mu_s.points), mu_s.weights, spherical=True)
                nu_l = DiscreteMeasure(lift(nu_s.points), nu_s.weights, spherical=True)
            else:
                mu_l, nu_l = mu_s, nu_s
            dim = mu_l.dim
            tree = sample_spherical_tree(dim - 1, 3, rng)
            rotation = IsometryEd(Q=random_orthogonal(dim, rng))
            before = spherical_tree_value(mu_l, nu_l, tree)
            after = spherical_tree_value(
                apply_isometry(rotation, mu_l), apply_isometry(rotation, nu_l), apply_isometry(rotation, tree)
            )
            result.check(abs(before - after), INVARIANCE_TOL, f"draw {i} {label}")
    return result


def suite_reductions(rng: np.random.Generator, count: int) -> SuiteResult:
    result = SuiteResult("reductions", CIRCULAR_REDUCTION_TOL)
    for i in range(count):
        d = int(rng.integers(1, 5))
        mu, nu = _random_measure(rng, 6, d), _random_measure(rng, 5, d)

        single = sample_tree_system(d, 1, 1.0, DistanceConfig().direction_scheme, rng)
        on_tree = tree_value(mu, nu, single, DistanceConfig(lines_per_tree=1), TSWMode.DB_LINEAR)
        sliced = estimate_sw(mu, nu, directions=single.directions).value
        result.check(abs(on_tree - sliced), SLICED_REDUCTION_TOL, f"draw {i} one-line db_linear")

        cfg = DistanceConfig(lines_per_tree=int(rng.integers(1, 5)), radius=0.0)
        tree = sample_tree_system(d, cfg.lines_per_tree, cfg.root_std, cfg.direction_scheme, rng)
        general = tree_value(mu, nu, tree, cfg, TSWMode.CIRCULAR)
        fast = tree_value(mu, nu, tree, cfg, TSWMode.CIRCULAR_R0)
        result.check(abs(general - fast), CIRCULAR_REDUCTION_TOL, f"draw {i} circular_r0")
    return result


def suite_gradients(rng: np.random.Generator, count: int) -> SuiteResult:
    result = SuiteResult("gradients", SPHERICAL_GRAD_TOL)
    euclidean_modes = list(TSWMode)
    for i in range(count):
        cfg = DistanceConfig(num_trees=3, lines_per_tree=int(rng.integers(2, 5)), radius=0.5, seed=draw_seed(rng))
        if i % 3 == 2:
            mode = STSWMode.PLAIN if i % 2 else STSWMode.SPATIAL
            mu, nu = _uniform_measure(rng, 6, 3, spherical=True), _uniform_measure(rng, 5, 3, spherical=True)
            tolerance = SPHERICAL_GRAD_TOL
            label = f"stsw_{mode.value}"
        else:
            mode = euclidean_modes[i % len(euclidean_modes)]
            mu, nu = _uniform_measure(rng, 6, 3), _uniform_measure(rng, 5, 3)
            tolerance = EUCLIDEAN_GRAD_TOL
            label = mode.value
        report = finite_diff_check(mu, nu, cfg, mode, num_entries=6, rng=rng)
        result.check(report.max_rel_error, tolerance, f"instance {i} {label}")
    return result


def _brute_force_w2(x: np.ndarray, y: np.ndarray, ground: GroundCost) -> float:
    def cost(p: np.ndarray, q: np.ndarray) -> float:
        if ground == GroundCost.GEODESIC:
            return float(np.arccos(np.clip(p @ q, -1.0, 1.0)) ** 2)
        return float(np.sum((p - q) ** 2))

    n = x.shape[0]
    best = min(
        sum(cost(x[i], y[perm[i]]) for i in range(n)) / n
        for perm in itertools.permutations(range(n))
    )
    return float(np.sqrt(best))


def suite_exact_w2(rng: np.random.Generator, count: int) -> SuiteResult:
    result = SuiteResult("exact_w2", EXACT_W2_TOL)
    for i in range(count):
        n = int(rng.integers(1, 7))
        ground = GroundCost.GEODESIC if i % 2 else GroundCost.EUCLIDEAN
        spherical = ground == GroundCost.GEODESIC
        x = _uniform_measure(rng, n, 3, spherical).points
        y = _uniform_measure(rng, n, 3, spherical).points
        error = abs(exact_w2(x, y, ground) - _brute_force_w2(x, y, ground))
        result.check(error, EXACT_W2_TOL, f"draw {i} n={n} {ground.value}")
    return result


SUITES: Dict[str, Callable[[np.random.Generator, int], SuiteResult]] = {
    "oracle": suite_oracle,
    "metric": suite_metric,
    "invariance": suite_invariance,
    "reductions": suite_reductions,
    "gradients": suite_gradients,
    "exact_w2": suite_exact_w2,
}


def run_selftest(seed: int = 0, plan: SelfTestPlan = SelfTestPlan()) -> List[SuiteResult]:
    """
    Run every suite on its own seeded stream.

    Args:
        seed: Root seed; suite i draws from derive_rng(seed, i)
        plan: Instances per suite

    Returns:
        One result per suite, in the order of ``SUITES``
    """
    results = []
    for index, (name, suite) in enumerate(SUITES.items()):
        count = getattr(plan, name)
        logger.info(f"Running self-test suite '{name}' on {count} instances")
        started = time.perf_counter()
        outcome = suite(derive_rng(seed, index), count)
        outcome.seconds = time.perf_counter() - started
        for message in outcome.messages:
            logger.warning(f"{name}: {message}")
        results.append(outcome)
    return results


def format_summary(results: List[SuiteResult]) -> str:
    """Fixed-width summary table of suite results."""
    lines = [f"{'suite':<12}{'checked':>9}{'failures':>10}{'max error':>12}{'seconds':>9}  status"]
    for r in results:
        status = "pass" if r.passed else "FAIL"
        lines.append(f"{r.name:<12}{r.checked:>9}{r.failures:>10}{r.max_error:>12.2e}{r.seconds:>9.2f}  {status}")
    return "\n".join(lines)


def failed_suites(results: List[SuiteResult]) -> Tuple[str, ...]:
    return tuple(r.name for r in results if not r.passed)
