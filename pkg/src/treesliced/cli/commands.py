"""
Command execution: turns a validated manifest into results on disk.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 invalid
configuration.
"""

import logging
from pathlib import Path
from typing import Optional, Union

from ..core.config import DistanceConfig, FlowMethod
from ..core.distances import DistanceEstimate, estimate_stsw, estimate_sw, estimate_tsw
from ..core.errors import InvalidConfigError, TreeSlicedError
from ..core.flows import SLICED_VARIANTS, SPHERICAL_MODES, TREE_MODES, run_protocol
from ..core.geometry import DiscreteMeasure
from ..utils.parallel import default_workers
from ..utils.rng import derive_rng
from .bench import BENCH_HEADER, bench_runtime
from .config_manager import ConfigManager, DatasetSpec, ExperimentConfig, MeasureSpec
from .output import write_csv
from .selftest import SELFTEST_HEADER, failed_suites, format_summary, run_selftest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2

DISTANCE_HEADER = ("method", "value", "std_error", "num_trees", "lines_per_tree", "seed")
FLOW_HEADER = ("iteration", "metric_name", "metric")
TIMINGS_HEADER = ("iteration", "seconds_per_iter")


def default_output(command: str) -> Path:
    return Path("results") / f"{command}.csv"


def timings_path(csv_path: Path) -> Path:
    return csv_path.with_name(f"{csv_path.stem}.timings.csv")


def _to_measure(spec: MeasureSpec, stream: int) -> DiscreteMeasure:
    if isinstance(spec, DatasetSpec):
        return spec.to_measure(stream)
    return spec.to_measure()


def evaluate_distance(
    method: FlowMethod,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cfg: DistanceConfig,
    workers: Optional[int] = None
) -> DistanceEstimate:
    """
    Evaluate any supported distance between two measures.

    Sliced baselines get the matched budget of ``num_trees * lines_per_tree``
    directions drawn from the configured seed.

    Args:
        method: Distance to evaluate
        mu: First measure
        nu: Second measure
        cfg: Distance configuration
        workers: Thread count for the per-tree map

    Returns:
        Distance estimate
    """
    method = FlowMethod(method)
    if method in SLICED_VARIANTS:
        return estimate_sw(
            mu, nu,
            num_projections=cfg.num_trees * cfg.lines_per_tree,
            rng=derive_rng(cfg.seed, 0),
            variant=SLICED_VARIANTS[method],
            spatial=cfg.spatial_map,
            radius=cfg.radius,
            workers=workers,
        )
    if method in SPHERICAL_MODES:
        return estimate_stsw(mu, nu, cfg, SPHERICAL_MODES[method], workers=workers)
    return estimate_tsw(mu, nu, cfg, TREE_MODES[method], workers=workers)


def _echo(config: ExperimentConfig) -> dict:
    # thread count and destination never change the numbers
    return config.model_dump(mode="json", exclude={"threads", "output"})


def run_distance(config: ExperimentConfig, out: Path, workers: int) -> int:
    cfg = config.effective_distance()
    mu, nu = _to_measure(config.mu, 0), _to_measure(config.nu, 1)
    estimate = evaluate_distance(config.method, mu, nu, cfg, workers)
    logger.info(f"{config.method.value} distance: {estimate.value:.6g} (std error {estimate.std_error:.2g})")
    row = (config.method.value, estimate.value, estimate.std_error, cfg.num_trees, cfg.lines_per_tree, cfg.seed)
    write_csv(out, "distance", DISTANCE_HEADER, [row], _echo(config))
    return EXIT_OK


def run_flow(config: ExperimentConfig, out: Path, workers: int) -> int:
    spec = config.dataset
    trace = run_protocol(spec.name, config.effective_flow(), n=spec.n, seed=spec.seed, dim=spec.dim, workers=workers)
    rows = [(c.iteration, trace.metric_name, c.metric) for c in trace.checkpoints]
    write_csv(out, "flow", FLOW_HEADER, rows, _echo(config))
    timings = [(c.iteration, c.seconds_per_iter) for c in trace.checkpoints]
    write_csv(timings_path(out), "flow_timings", TIMINGS_HEADER, timings, _echo(config))
    return EXIT_OK


def run_bench(config: ExperimentConfig, out: Path, workers: int) -> int:
    records = bench_runtime(config.bench, seed=config.seed, workers=workers)
    write_csv(out, "bench", BENCH_HEADER, [r.as_row() for r in records], _echo(config))
    return EXIT_OK


def run_selftest_command(config: ExperimentConfig, out: Path, workers: int) -> int:
    results = run_selftest(seed=config.seed, plan=config.selftest)
    print(format_summary(results))
    write_csv(out, "selftest", SELFTEST_HEADER, [r.as_row() for r in results], _echo(config))
    failed = failed_suites(results)
    if failed:
        logger.error(f"Self-test failed: {', '.join(failed)}")
        return EXIT_RUNTIME_ERROR
    logger.info("All self-test suites passed")
    return EXIT_OK


COMMANDS = {
    "distance": run_distance,
    "flow": run_flow,
    "bench": run_bench,
    "selftest": run_selftest_command,
}


def execute(config: ExperimentConfig, out: Optional[Path] = None) -> int:
    """
    Run a validated experiment and write its results.

    Args:
        config: Validated manifest
        out: Results CSV; falls back to ``config.output`` then ``results/<command>.csv``

    Returns:
        Exit status
    """
    if out is None:
        out = Path(config.output) if config.output else default_output(config.command)
    out = Path(out)
    workers = config.threads if config.threads is not None else default_workers()
    logger.info(f"Running '{config.command}' with seed {config.seed} on {workers} thread(s)")
    try:
        status = COMMANDS[config.command](config, out, workers)
    except InvalidConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_ERROR
    except (TreeSlicedError, OSError) as e:
        logger.error(f"{config.command} failed: {e}")
        return EXIT_RUNTIME_ERROR
    except Exception as e:
        logger.error(f"Unexpected error during {config.command}: {e}", exc_info=True)
        return EXIT_RUNTIME_ERROR
    return status


def run_config(
    path: Union[str, Path],
    seed: Optional[int] = None,
    out: Optional[Path] = None,
    threads: Optional[int] = None
) -> int:
    """
    Load a manifest, run its command, and write the CSV plus a config echo.

    Args:
        path: JSON manifest
        seed: Overrides the manifest seed
        out: Overrides the manifest output path
        threads: Overrides the manifest thread count

    Returns:
        Exit status: 0 success, 1 runtime failure, 2 invalid configuration
    """
    manager = ConfigManager(Path(path))
    try:
        config = manager.load(seed=seed, threads=threads, output=None if out is None else str(out))
    except InvalidConfigError as e:
        logger.error(f"Invalid configuration in {path}: {e}")
        return EXIT_CONFIG_ERROR

    destination = Path(config.output) if config.output else default_output(config.command)
    status = execute(config, destination)
    if status != EXIT_CONFIG_ERROR:
        try:
            echo = manager.save_echo(config, destination)
            logger.info(f"Config echo written to {echo}")
        except OSError as e:
            logger.error(f"Could not write config echo: {e}")
            return EXIT_RUNTIME_ERROR
    return status
