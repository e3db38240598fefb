"""YAML run configuration, validated before any computation starts."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from chainverifier.attractivity import DEFAULT_ORIGIN_COUNT, SearchBudget, default_origins
from chainverifier.chains import create_model
from chainverifier.control_model import ChainModel, VerificationError
from chainverifier.controllability import DEFAULT_RANK_TOL

logger = logging.getLogger(__name__)

ModelKind = Literal["random-walk", "selection-walk", "xnes", "external"]


class ConfigError(VerificationError, ValueError):
    """Raised when a run config cannot be read or fails validation."""
    pass


def _as_vector(value):
    if isinstance(value, (int, float)):
        return [float(value)]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ModelConfig(_Section):
    """Model selector and parameters."""

    kind: ModelKind
    n: int = Field(1, ge=1)
    objective: str = "sphere"
    objective_params: Dict[str, float] = Field(default_factory=dict)
    lam: Optional[int] = Field(None, alias="lambda", ge=1)
    mu: Optional[int] = Field(None, ge=1)
    weights: Optional[List[float]] = None
    kappa_m: float = Field(1.0, gt=0)
    kappa_sigma: float = Field(1.0, gt=0)
    q_samples: int = Field(20000, ge=1000)
    q_seed: int = Field(0, ge=0)
    factory: Optional[str] = Field(None, description="'package.module:callable' for external models")
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_kind(self) -> "ModelConfig":
        if self.kind == "xnes" and (self.lam is None or self.mu is None):
            raise ValueError("xnes models need 'lambda' and 'mu'")
        if self.kind == "external" and not self.factory:
            raise ValueError("external models need 'factory'")
        if self.kind == "selection-walk" and self.n != 1:
            raise ValueError(f"selection-walk is one-dimensional, got n={self.n}")
        return self

    def build(self) -> ChainModel:
        if self.kind == "random-walk":
            return create_model(self.kind, n=self.n)
        if self.kind == "selection-walk":
            return create_model(self.kind, objective=self.objective, objective_params=self.objective_params,
                                q_samples=self.q_samples, q_seed=self.q_seed)
        if self.kind == "xnes":
            return create_model(self.kind, n=self.n, lam=self.lam, mu=self.mu, weights=self.weights,
                                kappa_m=self.kappa_m, kappa_sigma=self.kappa_sigma, objective=self.objective,
                                objective_params=self.objective_params, q_samples=self.q_samples,
                                q_seed=self.q_seed)
        return create_model(self.kind, factory=self.factory, params=self.params)


class OriginsConfig(_Section):
    """Explicit origins, or a low-discrepancy set in [low, high]^n plus extremes."""

    points: Optional[List[List[float]]] = None
    low: float = -10.0
    high: float = 10.0
    count: int = Field(DEFAULT_ORIGIN_COUNT, ge=1)
    extremes: List[List[float]] = Field(default_factory=list)

    @field_validator("points", "extremes", mode="before")
    @classmethod
    def _wrap_scalars(cls, value):
        if value is None:
            return value
        return [_as_vector(v) for v in value]

    def resolve(self, n: int) -> List[np.ndarray]:
        if self.points is not None:
            return [np.asarray(p, dtype=float) for p in self.points + self.extremes]
        return default_origins(self.low, self.high, n, self.count, self.extremes)


class AnalysisConfig(_Section):
    x_star: List[float]
    epsilon: float = Field(0.1, gt=0)
    k_max: int = Field(3, ge=1)
    T: int = Field(1, ge=1)
    span: int = Field(8, ge=1)
    epsilon_return: Optional[float] = Field(None, gt=0, description="Defaults to epsilon / 10")
    return_k_max: int = Field(8, ge=1)
    fixed_point_tol: float = Field(1e-9, gt=0)
    rank_tol: float = Field(DEFAULT_RANK_TOL, gt=0)
    rank_k_max: int = Field(3, ge=1)
    rank_tries: int = Field(16, ge=1)
    witness: Optional[List[List[float]]] = Field(None, description="Explicit rank witness sequence")
    differentiation: Literal["auto", "forward", "finite-difference"] = "auto"
    origins: OriginsConfig = Field(default_factory=OriginsConfig)
    budget: SearchBudget = Field(default_factory=SearchBudget)
    seed: int

    @field_validator("x_star", mode="before")
    @classmethod
    def _wrap_x_star(cls, value):
        return _as_vector(value)

    @property
    def resolved_epsilon_return(self) -> float:
        return self.epsilon_return if self.epsilon_return is not None else self.epsilon / 10.0


class TrajectoryExport(_Section):
    x0: List[float]
    steps: int = Field(..., ge=1)

    @field_validator("x0", mode="before")
    @classmethod
    def _wrap_x0(cls, value):
        return _as_vector(value)


class DensityCheckConfig(_Section):
    states: List[List[float]]
    samples: int = Field(200_000, ge=10_000)
    bins: int = Field(80, ge=1)
    range: Tuple[float, float] = (-4.0, 4.0)
    threshold: Optional[float] = Field(None, gt=0)
    marginal_samples: int = Field(2000, ge=100)
    trajectory: Optional[TrajectoryExport] = None
    seed: int

    @field_validator("states", mode="before")
    @classmethod
    def _wrap_states(cls, value):
        return [_as_vector(v) for v in value]


class RateConfig(_Section):
    x0: List[float]
    sigma0: float = Field(1.0, gt=0)
    iterations: int = Field(20_000, ge=2)
    burn_in: Optional[int] = Field(None, ge=0)
    batches: int = Field(20, ge=2)
    seed: int

    @field_validator("x0", mode="before")
    @classmethod
    def _wrap_x0(cls, value):
        return _as_vector(value)


class PathQuery(_Section):
    y: List[float]
    center: List[float]
    radius: float = Field(..., gt=0)
    k: int = Field(..., ge=1)

    @field_validator("y", "center", mode="before")
    @classmethod
    def _wrap_vectors(cls, value):
        return _as_vector(value)


class PathsConfig(_Section):
    queries: List[PathQuery]
    budget: SearchBudget = Field(default_factory=SearchBudget)
    seed: int


class RunConfig(_Section):
    """One run: the model plus whichever analysis sections the chosen command needs."""

    model_config = ConfigDict(extra="forbid", json_schema_extra={
        "example": {
            "model": {"kind": "random-walk", "n": 1},
            "analysis": {"x_star": [0.0], "epsilon": 0.1, "k_max": 3, "T": 1, "span": 4, "seed": 7}
        }
    })

    model: ModelConfig
    analysis: Optional[AnalysisConfig] = None
    density_check: Optional[DensityCheckConfig] = None
    rate: Optional[RateConfig] = None
    paths: Optional[PathsConfig] = None

    def require(self, section: str):
        value = getattr(self, section)
        if value is None:
            raise ConfigError(f"Missing config section: {section}")
        return value

    def with_overrides(self, seed: Optional[int] = None, rank_tol: Optional[float] = None) -> "RunConfig":
        """Copy with the CLI overrides applied to every section that has the field."""
        data = self.model_dump(by_alias=True)
        if seed is not None:
            for section in ("analysis", "density_check", "rate", "paths"):
                if data.get(section) is not None:
                    data[section]["seed"] = seed
        if rank_tol is not None:
            if data.get("analysis") is None:
                raise ConfigError("--rank-tol needs an analysis section")
            data["analysis"]["rank_tol"] = rank_tol
        return parse_config(data)


def _format_validation_error(e: ValidationError) -> str:
    first = e.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "<root>"
    return f"Invalid config field '{field}': {first['msg']}"


def parse_config(data: Any) -> RunConfig:
    """Validate a parsed YAML document.

    Raises:
        ConfigError: Naming the first offending field
    """
    if not isinstance(data, dict):
        raise ConfigError("Config must be a mapping with a 'model' section")
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e
    if config.analysis is not None and config.model.kind != "external":
        n = config.model.n
        if len(config.analysis.x_star) != n:
            raise ConfigError(f"Invalid config field 'analysis.x_star': expected {n} coordinates")
    return config


def load_config(path: str) -> RunConfig:
    """Read and validate a YAML run config.

    Raises:
        ConfigError: If the file is missing, is not YAML, or fails validation
    """
    config_path = Path(path)
    try:
        with open(config_path, "r") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config {config_path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Config {config_path} is not valid YAML: {e}")
    logger.info(f"Loaded config {config_path}")
    return parse_config(data)
