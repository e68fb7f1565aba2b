"""Experiment configuration: a single JSON file validated with pydantic.

Unknown keys are rejected everywhere and validation errors name the
offending field path.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import (BaseModel, ConfigDict, Field, ValidationError, field_validator,
                      model_validator)

from .exceptions import ConfigError

EXPERIMENTS = ("blowup", "trajectories", "density", "nu-convergence",
               "sampler-independence", "srb-predict", "self-similarity",
               "perturbation", "det-sensitivity")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FieldConfig(_Strict):
    name: Literal["planar", "constant_radial", "lorenz4d"]
    params: dict = Field(default_factory=dict)


class SamplerConfig(_Strict):
    family: Literal["point", "cap", "gaussian"] = "cap"
    radius: float = Field(2.0, gt=0)
    cap_center: List[float] = Field(default_factory=lambda: [-1.0, 0.0, 0.0, 0.0])
    cap_angle: float = Field(math.pi / 3, gt=0, le=math.pi)
    sigma: float = Field(0.5, gt=0)


class RegularizationConfig(_Strict):
    mode: Literal["direct", "map_deterministic", "map_stochastic"] = "direct"
    nu: float = Field(1e-5, gt=0, lt=1)
    T: float = Field(20.0, gt=0)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    offset_axis: int = Field(0, ge=0)


class GridConfig(_Strict):
    bounds: List[float] = Field(default_factory=lambda: [-4.0, 4.0, -4.0, 4.0],
                                min_length=4, max_length=4)
    nx: int = Field(64, ge=1)
    ny: int = Field(64, ge=1)

    @model_validator(mode="after")
    def _nonempty(self):
        x0, x1, y0, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ValueError("bounds must satisfy xmin < xmax and ymin < ymax")
        return self


class EnsembleConfig(_Strict):
    N: int = Field(1000, ge=1)
    t_targets: List[float] = Field(default_factory=lambda: [1.6, 2.0], min_length=1)
    grid: GridConfig = Field(default_factory=GridConfig)
    grids: Optional[List[GridConfig]] = None
    dims: List[int] = Field(default_factory=lambda: [1, 2], min_length=2, max_length=2)
    bootstrap: int = Field(50, ge=10)
    workers: Optional[int] = Field(None, ge=1)

    @field_validator("t_targets")
    @classmethod
    def _increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("must be strictly increasing")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.grids is not None and len(self.grids) != len(self.t_targets):
            raise ValueError("grids needs one entry per t_target")
        return self

    def grid_for(self, k):
        return self.grids[k] if self.grids is not None else self.grid


class PolicyConfig(_Strict):
    dt_max: float = Field(1e-3, gt=0)
    c: float = Field(0.1, gt=0)
    dt_min: float = Field(1e-14, gt=0)


class AnalysisConfig(_Strict):
    s_burn: Optional[float] = Field(None, ge=0)
    s_total: float = Field(2000.0, gt=0)
    M: int = Field(10000, ge=1)
    stride: float = Field(0.5, gt=0)
    ds: float = Field(1e-2, gt=0)
    tolerance: float = Field(1e-8, gt=0)
    F_m: Optional[float] = Field(None, gt=0)
    orbit_start: Optional[List[float]] = None


class PerturbationConfig(_Strict):
    eps_s: float = 0.05
    eps_r: float = 0.05
    center: List[float] = Field(default_factory=lambda: [-1.0, 0.0, 0.0, 0.0])
    width: float = Field(0.5, gt=0)
    direction: List[float] = Field(default_factory=lambda: [0.0, 1.0, 0.0, 0.0])


class ChecksConfig(_Strict):
    l1_factor: Optional[float] = Field(None, gt=0)
    t_b_range: Optional[List[float]] = Field(None, min_length=2, max_length=2)
    min_angle: float = Field(0.5, gt=0)
    max_failure_rate: float = Field(0.01, ge=0, le=1)


class ExperimentConfig(_Strict):
    experiment: Literal[EXPERIMENTS]
    field: FieldConfig
    x0: List[float] = Field(min_length=2)
    regularization: RegularizationConfig = Field(default_factory=RegularizationConfig)
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    checks: ChecksConfig = Field(default_factory=ChecksConfig)
    nu_ladder: List[float] = Field(default_factory=lambda: [1e-4, 1e-6], min_length=2)
    alt_sampler: SamplerConfig = Field(
        default_factory=lambda: SamplerConfig(family="gaussian", sigma=0.5))
    perturbation: PerturbationConfig = Field(default_factory=PerturbationConfig)
    trajectories: int = Field(3, ge=1)
    t_end: float = Field(2.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "out"

    @model_validator(mode="after")
    def _ladder(self):
        if any(nu <= 0 or nu >= 1 for nu in self.nu_ladder):
            raise ValueError("nu_ladder entries must lie in (0, 1)")
        return self

    @property
    def regularization_seed(self):
        r = self.regularization.seed
        return self.seed if r is None else r

    def config_hash(self):
        """SHA-256 of the canonical JSON form, ignoring ``output_dir``."""
        data = self.model_dump(mode="json", exclude={"output_dir"})
        text = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _format(err):
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data):
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format(err)) from None


def load_config(path):
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    return parse_config(data)


def dump_config(cfg):
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def preset_path(name):
    return Path(__file__).parent / "presets" / f"{name}.json"
