#!/usr/bin/env python3
"""
Multi-seed gradient-flow protocol.

Runs every requested method on one dataset for several data/tree seeds and
writes one CSV of checkpoint metrics plus a summary of the final values.

    python scripts/reproduce_gradient_flows.py --dataset gaussians25 --seeds 0 1 2 3 4
    python scripts/reproduce_gradient_flows.py --dataset gaussians25 --ablate-h
    python scripts/reproduce_gradient_flows.py --dataset vmf12 --methods stsw spatial_stsw
"""

import argparse
import logging
import statistics
import sys
from pathlib import Path
from typing import Dict, List, Optional

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from treesliced.cli.output import write_csv  # noqa: E402
from treesliced.core.config import FlowConfig, FlowMethod  # noqa: E402
from treesliced.core.errors import DivergenceError  # noqa: E402
from treesliced.core.flows import DatasetName, run_protocol  # noqa: E402
from treesliced.core.projection import spatial_ablation_grid  # noqa: E402
from treesliced.utils.logger import setup_logger  # noqa: E402

logger = logging.getLogger(__name__)

EUCLIDEAN_METHODS = ["sw", "db_linear", "spatial", "circular", "circular_r0"]
SPHERICAL_METHODS = ["stsw", "spatial_stsw"]


def flow_config(method: FlowMethod, dataset: DatasetName, seed: int, iterations: Optional[int]) -> FlowConfig:
    """Protocol defaults for the dataset, with the method and tree seed filled in."""
    base = FlowConfig.spherical() if dataset.is_spherical else FlowConfig()
    iterations = base.iterations if iterations is None else iterations
    checkpoints = sorted({c for c in base.checkpoints if c <= iterations} | {iterations})
    distance = base.distance.model_copy(update={"seed": seed})
    return base.model_copy(update={
        "method": method, "iterations": iterations, "checkpoints": checkpoints, "distance": distance,
    })


def run_variants(args: argparse.Namespace) -> List[tuple]:
    dataset = DatasetName(args.dataset)
    rows = []
    variants = [(method, None) for method in args.methods]
    if args.ablate_h:
        variants = [(FlowMethod.SPATIAL.value, h) for h in spatial_ablation_grid()]

    for method_name, spatial in variants:
        method = FlowMethod(method_name)
        label = method.value if spatial is None else f"{method.value}[deg={spatial.degree},gamma={spatial.gamma:g}]"
        for seed in args.seeds:
            cfg = flow_config(method, dataset, seed, args.iterations)
            if spatial is not None:
                cfg = cfg.model_copy(update={"distance": cfg.distance.model_copy(update={"spatial_map": spatial})})
            try:
                trace = run_protocol(dataset, cfg, n=args.n, seed=seed, dim=args.dim, workers=args.threads)
            except DivergenceError as e:
                logger.warning(f"{label} seed {seed} diverged: {e}")
                rows.append((label, seed, -1, "diverged", float("nan")))
                continue
            rows.extend((label, seed, c.iteration, trace.metric_name, c.metric) for c in trace.checkpoints)
    return rows


def summarize(rows: List[tuple]) -> Dict[str, float]:
    finals = {}
    for label, seed, iteration, _, metric in rows:
        finals.setdefault(label, {})
        if iteration >= finals[label].get(seed, (-2, None))[0]:
            finals[label][seed] = (iteration, metric)
    means = {}
    print(f"\n{'method':<36}{'mean final':>14}{'stdev':>12}")
    for label, per_seed in finals.items():
        values = [metric for _, metric in per_seed.values()]
        spread = statistics.stdev(values) if len(values) > 1 else 0.0
        means[label] = statistics.mean(values)
        print(f"{label:<36}{means[label]:>14.4e}{spread:>12.2e}")
    return means


def report_ordering(means: Dict[str, float]) -> None:
    """Print how the tree-sliced flows rank against the sliced baseline."""
    baseline = means.get(FlowMethod.SW.value)
    if baseline is None:
        return
    spatial = means.get(FlowMethod.SPATIAL.value)
    if spatial is not None and spatial > 0:
        print(f"\nsw / spatial final ratio: {baseline / spatial:.1f}")
    for method in (FlowMethod.CIRCULAR, FlowMethod.CIRCULAR_R0, FlowMethod.DB_LINEAR):
        if method.value in means:
            verdict = "below" if means[method.value] < baseline else "NOT below"
            print(f"{method.value} final is {verdict} sw")


def main() -> int:
    parser = argparse.ArgumentParser(description="Multi-seed gradient-flow protocol")
    parser.add_argument("--dataset", default="gaussians25", choices=[d.value for d in DatasetName])
    parser.add_argument("--methods", nargs="+", default=None)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--n", type=int, default=500)
    parser.add_argument("--dim", type=int, default=2, help="dimension for uniform_norm")
    parser.add_argument("--iterations", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--ablate-h", action="store_true", help="sweep the spatial map h for SpatialTSW")
    parser.add_argument("--out", type=Path, default=Path("results/gradient_flows.csv"))
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()

    setup_logger(logging.DEBUG if args.verbose else logging.INFO)
    if args.methods is None:
        args.methods = SPHERICAL_METHODS if DatasetName(args.dataset).is_spherical else EUCLIDEAN_METHODS

    rows = run_variants(args)
    header = ("method", "seed", "iteration", "metric_name", "metric")
    write_csv(args.out, "flow_protocol", header, rows, {**vars(args), "out": str(args.out)})
    report_ordering(summarize(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
