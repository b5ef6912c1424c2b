"""Experiment configuration: schema-strict YAML sections with a canonical hash."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.domain.exceptions import ConfigError
from src.domain.tensornet import OptimizerSpec
from src.domain.value_objects import Activation, FlipRateScope, Method, SimilarityNorm

HASH_LENGTH = 12
EXTERNAL_SVD_RANK = 10


class Section(BaseModel):
    """Frozen config section; unknown keys are errors."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class DataConfig(Section):
    """Synthetic blobs."""

    n: int = Field(default=3000, ge=1)
    d: int = Field(default=8, ge=2)
    num_classes: int = Field(default=4, ge=2)
    class_sep: float = Field(default=3.0, gt=0)


class NoiseConfig(Section):
    """Annotator pool and sparse assignment."""

    num_annotators: int = Field(default=60, ge=1)
    num_groups: int = Field(default=3, ge=1)
    rho: float = Field(default=0.4, ge=0, le=1)
    rho_max: float = Field(default=0.6, ge=0, le=1)
    mean_annotations: float = Field(default=2.0, ge=1)
    flip_rate_scope: FlipRateScope = FlipRateScope.GROUP

    @model_validator(mode="after")
    def check_pool(self) -> NoiseConfig:
        """rho <= rho_max, R divisible by G, r-bar <= R."""
        if self.rho > self.rho_max:
            raise ValueError("rho must not exceed rho_max")
        if self.num_annotators % self.num_groups:
            raise ValueError("num_annotators must be divisible by num_groups")
        if self.mean_annotations > self.num_annotators:
            raise ValueError("mean_annotations cannot exceed num_annotators")
        return self


class DistillConfig(Section):
    """Warmup classifier and distillation threshold."""

    warmup_epochs: int = Field(default=10, ge=0)
    tau: float = Field(default=0.8, gt=0, le=1)
    min_examples: int = Field(default=5, ge=0)
    balance: bool = False
    hidden: tuple[int, ...] = (32, 32)


class TransitionConfig(Section):
    """Backbone and heads of the transition network."""

    hidden: tuple[int, ...] = (32, 32)
    latent_dim: int = Field(default=16, ge=1)
    global_epochs: int = Field(default=20, ge=0)
    finetune_epochs: int = Field(default=5, ge=0)


class GraphConfig(Section):
    """Similarity graph and GCN mapping."""

    k: int = Field(default=15, ge=1)
    svd_rank: Optional[int] = Field(default=None, ge=1)
    norm: SimilarityNorm = SimilarityNorm.L2
    hidden: tuple[int, ...] = (64,)
    epochs: int = Field(default=30, ge=0)
    learning_rate: Optional[float] = Field(default=0.05, gt=0)
    final_activation: Activation = Activation.IDENTITY

    @field_validator("final_activation")
    @classmethod
    def validate_final_activation(cls, v: Activation) -> Activation:
        """GCN output may only be linear or rectified."""
        if v not in (Activation.IDENTITY, Activation.RELU):
            raise ValueError("final_activation must be identity or relu")
        return v


class ClassifierConfig(Section):
    """Final classifier training."""

    hidden: tuple[int, ...] = (32, 32)
    epochs: int = Field(default=20, ge=0)
    milestones: tuple[int, ...] = (12, 17)
    joint_revision: bool = False
    eval_pairs: int = Field(default=2000, ge=1)


class OptimizerConfig(Section):
    """SGD shared by every trainer."""

    learning_rate: float = Field(default=0.01, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=0.0, ge=0)
    batch_size: int = Field(default=128, ge=1)
    lr_decay: float = Field(default=0.1, gt=0, le=1)

    def spec(self, milestones: tuple[int, ...] = (), learning_rate: Optional[float] = None) -> OptimizerSpec:
        """Domain optimizer spec."""
        return OptimizerSpec(
            learning_rate=self.learning_rate if learning_rate is None else learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            milestones=milestones,
            lr_decay=self.lr_decay,
        )


class ExperimentConfig(Section):
    """Every knob of one pipeline run."""

    data: DataConfig = DataConfig()
    noise: NoiseConfig = NoiseConfig()
    distill: DistillConfig = DistillConfig()
    transition: TransitionConfig = TransitionConfig()
    graph: GraphConfig = GraphConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    seed: int = Field(default=0, ge=0)
    method: Method = Method.TAIDTM

    @model_validator(mode="after")
    def check_cross_section(self) -> ExperimentConfig:
        """Constraints spanning several sections."""
        if self.data.n < self.data.num_classes:
            raise ValueError("data.n must be at least data.num_classes")
        if self.graph.k > self.noise.num_annotators:
            raise ValueError("graph.k cannot exceed noise.num_annotators")
        if self.graph.svd_rank is not None and self.graph.svd_rank > self.noise.num_annotators:
            raise ValueError("graph.svd_rank cannot exceed noise.num_annotators")
        if not 1.0 / self.data.num_classes < self.distill.tau:
            raise ValueError("distill.tau must exceed 1/num_classes")
        return self

    @property
    def svd_rank(self) -> int:
        """Rank for a simulated crowd: configured, else the group count."""
        return self.svd_rank_for(external=False)

    def svd_rank_for(self, external: bool) -> int:
        """Configured rank; otherwise the group count when simulating, 10 for loaded data.

        A loaded crowd has no known group count. The fallback is capped at the pool size.
        """
        if self.graph.svd_rank is not None:
            return self.graph.svd_rank
        if external:
            return min(EXTERNAL_SVD_RANK, self.noise.num_annotators)
        return self.noise.num_groups

    def canonical(self) -> dict[str, Any]:
        """JSON-ready dict with enum values."""
        return self.model_dump(mode="json")

    def canonical_json(self) -> str:
        """Sorted-key JSON text the hash is taken over."""
        return json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        """First hex digits of the SHA-256 of the canonical JSON."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:HASH_LENGTH]

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """Copy with dotted-path overrides such as `noise.num_groups=4`, re-validated."""
        tree = self.canonical()
        for path, value in overrides.items():
            if value is None:
                continue
            node = tree
            *parents, leaf = path.split(".")
            for key in parents:
                if key not in node or not isinstance(node[key], dict):
                    raise ConfigError(f"unknown config section '{key}' in '{path}'")
                node = node[key]
            if leaf not in node:
                raise ConfigError(f"unknown config key '{path}'")
            node[leaf] = value
        return parse_config(tree)


def parse_config(raw: Any) -> ExperimentConfig:
    """Validate a mapping against the schema."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as error:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in item['loc']) or '<root>'}: {item['msg']}"
            for item in error.errors()
        )
        raise ConfigError(problems) from error


def load_config(path: Optional[Path]) -> ExperimentConfig:
    """Read a YAML config file; no path means all defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as error:
        raise ConfigError(f"cannot read config {path}: {error}") from error
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as error:
        raise ConfigError(f"invalid YAML in {path}: {error}") from error
    return parse_config(raw)


def dump_config(config: ExperimentConfig, path: Path) -> None:
    """Write the canonical form as YAML."""
    path.write_text(
        yaml.safe_dump(config.canonical(), sort_keys=True, default_flow_style=False),
        encoding="utf-8",
    )
