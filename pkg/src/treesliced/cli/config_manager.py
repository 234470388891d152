"""
Experiment manifests: schema, loading with line-anchored errors, and echo.
"""

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, model_validator

from ..core.config import SEED_LIMIT, DistanceConfig, FlowConfig, FlowMethod
from ..core.errors import InvalidConfigError
from ..core.flows import DatasetName, make_dataset
from ..core.geometry import DiscreteMeasure
from ..utils.rng import derive_rng
from .selftest import SelfTestPlan

logger = logging.getLogger(__name__)

BENCH_METHODS = (FlowMethod.SW, FlowMethod.DB_LINEAR, FlowMethod.SPATIAL, FlowMethod.CIRCULAR, FlowMethod.CIRCULAR_R0)


class ConfigError(InvalidConfigError):
    """Manifest that cannot be parsed or does not match the schema."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InlineMeasure(BaseModel):
    """Measure written out in the manifest; weights default to uniform."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    points: List[List[float]]
    weights: Optional[List[float]] = None
    spherical: bool = False

    def to_measure(self) -> DiscreteMeasure:
        points = np.asarray(self.points, dtype=np.float64)
        if self.weights is None:
            return DiscreteMeasure.uniform(points, spherical=self.spherical)
        return DiscreteMeasure(points=points, weights=np.asarray(self.weights), spherical=self.spherical)


class DatasetSpec(BaseModel):
    """Generated measure: dataset name, size and data seed."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: DatasetName
    n: PositiveInt = 500
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    kappa: float = Field(50.0, ge=0)
    dim: PositiveInt = 2

    def to_measure(self, stream: int = 0) -> DiscreteMeasure:
        return make_dataset(self.name, self.n, derive_rng(self.seed, stream), kappa=self.kappa, dim=self.dim)


MeasureSpec = Union[InlineMeasure, DatasetSpec]


class BenchGrid(BaseModel):
    """Runtime sweep over method x n x d at fixed tree counts."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    methods: List[FlowMethod] = Field(default_factory=lambda: list(BENCH_METHODS))
    n: List[PositiveInt] = Field(default_factory=lambda: [1000, 2000, 4000, 8000, 16000])
    d: List[PositiveInt] = Field(default_factory=lambda: [10])
    num_trees: PositiveInt = 100
    lines_per_tree: PositiveInt = 4
    radius: float = Field(0.01, ge=0)
    gamma: float = Field(1.0, gt=0)
    repeats: int = Field(10, ge=3)

    @model_validator(mode="after")
    def _supported_methods(self) -> "BenchGrid":
        for method in self.methods:
            if method not in BENCH_METHODS:
                raise ValueError(f"method {method.value!r} cannot be benchmarked")
        return self


class ExperimentConfig(BaseModel):
    """
    One experiment manifest.

    ``method`` names the distance for both the distance and the flow
    commands (it replaces ``flow.method``). ``seed`` drives the trees of
    every estimator and flow in the run; data streams keep the seeds of
    their dataset specs.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal["distance", "flow", "bench", "selftest"]
    method: FlowMethod = FlowMethod.SPATIAL
    distance: DistanceConfig = DistanceConfig()
    flow: FlowConfig = FlowConfig()
    mu: Optional[MeasureSpec] = None
    nu: Optional[MeasureSpec] = None
    dataset: Optional[DatasetSpec] = None
    bench: BenchGrid = BenchGrid()
    selftest: SelfTestPlan = SelfTestPlan()
    output: Optional[str] = None
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    threads: Optional[PositiveInt] = None

    @model_validator(mode="after")
    def _command_inputs(self) -> "ExperimentConfig":
        if self.command == "distance" and (self.mu is None or self.nu is None):
            raise ValueError("distance command needs both 'mu' and 'nu'")
        if self.command == "flow" and self.dataset is None:
            raise ValueError("flow command needs a 'dataset'")
        return self

    def effective_distance(self) -> DistanceConfig:
        return self.distance.model_copy(update={"seed": self.seed})

    def effective_flow(self) -> FlowConfig:
        distance = self.flow.distance.model_copy(update={"seed": self.seed})
        return self.flow.model_copy(update={"distance": distance, "method": self.method})


def _nesting_depth(text: str, offset: int) -> int:
    prefix = text[:offset]
    return prefix.count("{") + prefix.count("[") - prefix.count("}") - prefix.count("]")


def _line_of_key(text: str, loc: tuple) -> Optional[int]:
    """
    1-based line of the deepest named key of ``loc`` in the raw manifest.

    Walks ``loc`` from the top. Each key is searched after its parent, at the
    nesting depth of its own level, so a name used at several levels (a
    top-level and a nested ``seed``) resolves to the right occurrence.
    """
    position, line = 0, None
    for depth, key in enumerate(loc, start=1):
        if not isinstance(key, str):
            continue
        needle = f'"{key}"'
        offset = text.find(needle, position)
        while offset != -1 and _nesting_depth(text, offset) != depth:
            offset = text.find(needle, offset + 1)
        if offset == -1:
            break
        position = offset + len(needle)
        line = text.count("\n", 0, offset) + 1
    return line


class ConfigManager:
    """Loads, validates and echoes experiment manifests."""

    def __init__(self, config_path: Path) -> None:
        """
        Initialize config manager.

        Args:
            config_path: Path to the JSON manifest
        """
        self.config_path = Path(config_path)
        self._text: Optional[str] = None

    def load(self, **overrides) -> ExperimentConfig:
        """
        Parse and validate the manifest.

        Args:
            **overrides: Top-level fields replacing the manifest values
                (``None`` values are ignored)

        Returns:
            Validated experiment config

        Raises:
            ConfigError: On unreadable JSON or schema violations
        """
        try:
            self._text = self.config_path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read {self.config_path}: {e}") from e

        try:
            data = json.loads(self._text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from e
        if not isinstance(data, dict):
            raise ConfigError("manifest must be a JSON object", line=1)

        data.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return ExperimentConfig(**data)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"]) or "<root>"
            raise ConfigError(f"{field}: {first['msg']}", line=_line_of_key(self._text, first["loc"])) from e

    @staticmethod
    def echo_path(csv_path: Path) -> Path:
        return csv_path.with_suffix(".config.json")

    def save_echo(self, config: ExperimentConfig, csv_path: Path) -> Path:
        """
        Write the validated config, defaults included, next to the results.

        Args:
            config: Validated config
            csv_path: Path of the results CSV

        Returns:
            Path of the echo file
        """
        echo_path = self.echo_path(csv_path)
        echo_path.parent.mkdir(parents=True, exist_ok=True)
        with open(echo_path, "w", encoding="utf-8") as f:
            f.write(config.model_dump_json(indent=4))
            f.write("\n")
        return echo_path
