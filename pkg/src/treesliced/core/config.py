"""
Typed configuration for distances and gradient flows.

All models are frozen pydantic models that reject unknown keys, so a config
object fully describes (and reproduces) the computation it drives.
"""

from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_validator

from .errors import InvalidConfigError

SEED_LIMIT = 2 ** 64


class DirectionScheme(str, Enum):
    """How the k directions of a tree system are drawn."""
    IID_UNIFORM = "iid_uniform"
    ORTHOGONAL = "orthogonal"


class SpatialMapKind(str, Enum):
    """Family of the injective coordinate map h."""
    IDENTITY = "identity"
    ODD_POLY = "odd_poly"


class SpatialMapConfig(BaseModel):
    """Elementwise map h(x) = x + gamma * x**degree (or the identity)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: SpatialMapKind = SpatialMapKind.ODD_POLY
    degree: int = 3
    gamma: float = Field(1.0, gt=0)

    @field_validator("degree")
    @classmethod
    def _odd_degree(cls, value: int) -> int:
        # even powers break injectivity on R
        if value < 3 or value % 2 == 0:
            raise ValueError(f"degree must be an odd integer >= 3, got {value}")
        return value

    @classmethod
    def identity(cls) -> "SpatialMapConfig":
        return cls(kind=SpatialMapKind.IDENTITY)


class DistanceConfig(BaseModel):
    """
    Parameters of the tree distribution and of the splitting map.

    Houses the tree distribution sigma: ``num_trees`` trees of
    ``lines_per_tree`` lines, roots ~ N(0, root_std^2 I), directions drawn
    by ``direction_scheme``, all from the stream seeded by ``seed``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_trees: PositiveInt = 25
    lines_per_tree: PositiveInt = 4
    radius: float = Field(0.01, ge=0)
    root_std: float = Field(0.1, ge=0)
    direction_scheme: DirectionScheme = DirectionScheme.IID_UNIFORM
    splitting_sign: Literal[1, -1] = 1
    splitting_temperature: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    spatial_map: SpatialMapConfig = SpatialMapConfig()

    def check_dimension(self, dim: int) -> None:
        """
        Validate the parameters that depend on the ambient dimension.

        Args:
            dim: Dimension the trees live in

        Raises:
            InvalidConfigError: If the orthogonal scheme asks for k > d lines
        """
        if self.direction_scheme == DirectionScheme.ORTHOGONAL and self.lines_per_tree > dim:
            raise InvalidConfigError(
                f"orthogonal direction scheme needs lines_per_tree <= {dim}, "
                f"got {self.lines_per_tree}"
            )


class OptimizerKind(str, Enum):
    PLAIN_SGD = "plain_sgd"
    ADAPTIVE_MOMENT = "adaptive_moment"


class OptimizerConfig(BaseModel):
    """Particle optimizer; moment parameters are ignored by plain SGD."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: OptimizerKind = OptimizerKind.ADAPTIVE_MOMENT
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


class FlowMethod(str, Enum):
    """Distance driving a gradient flow."""
    SW = "sw"
    SPATIAL_SW = "spatial_sw"
    CIRCULAR_SW = "circular_sw"
    DB_LINEAR = "db_linear"
    SPATIAL = "spatial"
    CIRCULAR = "circular"
    CIRCULAR_R0 = "circular_r0"
    STSW = "stsw"
    SPATIAL_STSW = "spatial_stsw"

    @property
    def is_spherical(self) -> bool:
        return self in (FlowMethod.STSW, FlowMethod.SPATIAL_STSW)

    @property
    def is_sliced(self) -> bool:
        return self in (FlowMethod.SW, FlowMethod.SPATIAL_SW, FlowMethod.CIRCULAR_SW)

    @property
    def is_circular_tree(self) -> bool:
        return self in (FlowMethod.CIRCULAR, FlowMethod.CIRCULAR_R0)


class GroundCost(str, Enum):
    EUCLIDEAN = "euclidean"
    GEODESIC = "geodesic"


class FlowConfig(BaseModel):
    """
    Gradient-flow settings.

    Defaults reproduce the Euclidean protocol (25 trees of 4 lines against
    100 sliced directions, learning rate 1e-3, checkpoints every 500 of
    2500 iterations).

    Tree-sliced flows step with ``optimizer``. Sliced baselines descend the
    per-direction power ``sw_power`` (squared W2 by default, the classic
    sliced flow) with ``sw_optimizer``. Circular tree flows draw their roots
    with ``circular_root_std`` in place of ``distance.root_std``; set it to
    None to keep the distance setting.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: FlowMethod = FlowMethod.SPATIAL
    learning_rate: float = Field(1e-3, gt=0)
    iterations: PositiveInt = 2500
    optimizer: OptimizerConfig = OptimizerConfig()
    checkpoints: List[int] = Field(default_factory=lambda: [500, 1000, 1500, 2000, 2500])
    distance: DistanceConfig = DistanceConfig()
    sw_projections: PositiveInt = 100
    sw_power: Literal[1, 2] = 2
    sw_optimizer: OptimizerConfig = OptimizerConfig(kind=OptimizerKind.PLAIN_SGD)
    circular_root_std: Optional[float] = Field(1.0, ge=0)
    eval_seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    ground: GroundCost = GroundCost.EUCLIDEAN
    log_metric: bool = False
    log_floor: float = Field(1e-12, gt=0)
    divergence_threshold: float = Field(1e6, gt=0)

    @model_validator(mode="after")
    def _checkpoints_in_range(self) -> "FlowConfig":
        for checkpoint in self.checkpoints:
            if checkpoint < 1 or checkpoint > self.iterations:
                raise ValueError(
                    f"checkpoint {checkpoint} outside [1, {self.iterations}]"
                )
        return self

    @property
    def method_optimizer(self) -> OptimizerConfig:
        """Optimizer that steps the particles of ``method``."""
        return self.sw_optimizer if self.method.is_sliced else self.optimizer

    @property
    def method_distance(self) -> DistanceConfig:
        """Tree distribution used by ``method``."""
        if self.method.is_circular_tree and self.circular_root_std is not None:
            return self.distance.model_copy(update={"root_std": self.circular_root_std})
        return self.distance

    @classmethod
    def spherical(cls, **overrides) -> "FlowConfig":
        """Spherical protocol: SpatialSTSW, adaptive moments at 0.01, log-W2 every 50 epochs."""
        settings = {
            "method": FlowMethod.SPATIAL_STSW,
            "learning_rate": 0.01,
            "iterations": 250,
            "checkpoints": [50, 100, 150, 200, 250],
            "distance": DistanceConfig(num_trees=50, lines_per_tree=5),
            "ground": GroundCost.GEODESIC,
            "log_metric": True,
        }
        settings.update(overrides)
        return cls(**settings)
