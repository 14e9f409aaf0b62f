"""Experiment configuration files (TOML or JSON).

A config holds a ``[model]`` table, top-level ``seed``/``workers``/``out``,
and one table named after the experiment kind, e.g.::

    seed = 42

    [model]
    alpha = 1.0
    lambda = 1.0
    mu = 0.2
    jump_pmf = [0.0, 1.0]
    kernel = "uniform"          # or {kind = "tilted", a = 0.5}

    [tube]
    f_slope = 0.5
    eps = [0.05, 0.2]
    T = 20
    n = 100000

Unknown keys are rejected. A ``manifest.json`` written by a run is accepted as
a config and reproduces that run.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import CatastropheKernel, JumpPmf, ModelParams
from .rate import TargetPath

KINDS = ("simulate", "rate", "tube", "slope", "maxgrowth", "equivalence", "bounds")


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class TiltedSpec(Strict):
    kind: Literal["tilted"] = "tilted"
    a: float


class ModelSection(Strict):
    alpha: float
    lambda_: float = Field(alias="lambda")
    mu: float
    jump_pmf: list[float] = [0.0, 1.0]
    kernel: Union[Literal["uniform"], TiltedSpec] = "uniform"
    delta: Optional[float] = None

    def build(self) -> ModelParams:
        if self.kernel == "uniform":
            kernel = CatastropheKernel.uniform(self.delta)
        else:
            kernel = CatastropheKernel.tilted(self.kernel.a, self.delta)
        return ModelParams(self.alpha, self.lambda_, self.mu, JumpPmf(self.jump_pmf), kernel)


class TargetSpec(Strict):
    """Exactly one of f_slope (f(t) = slope * t), f_values, f_file."""

    f_slope: Optional[float] = None
    f_values: Optional[list[float]] = None
    f_file: Optional[str] = None

    @model_validator(mode="after")
    def _one_target(self):
        given = [k for k in ("f_slope", "f_values", "f_file") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"give exactly one of f_slope, f_values, f_file (got {given or 'none'})")
        return self

    def target(self, base: Path | None = None) -> TargetPath:
        if self.f_slope is not None:
            return TargetPath.linear(self.f_slope)
        if self.f_values is not None:
            return TargetPath(self.f_values)
        path = Path(self.f_file)
        if base is not None and not path.is_absolute():
            path = base / path
        return TargetPath.from_csv(path)


class SimulateSection(Strict):
    T: PositiveFloat
    sampler: Literal["direct", "decomposed", "subordinated"] = "direct"
    paths: PositiveInt = 1


class RateSection(TargetSpec):
    pass


class TubeSection(TargetSpec):
    eps: Union[PositiveFloat, list[PositiveFloat]]
    T: PositiveFloat
    n: PositiveInt


class SlopeSection(TargetSpec):
    eps: Union[PositiveFloat, list[PositiveFloat]]
    T_grid: list[PositiveFloat] = Field(min_length=3)
    n: PositiveInt

    @model_validator(mode="after")
    def _increasing(self):
        if any(b <= a for a, b in zip(self.T_grid, self.T_grid[1:])):
            raise ValueError("T_grid must be strictly increasing")
        return self


class MaxGrowthSection(Strict):
    b: PositiveFloat
    eps: PositiveFloat
    T_grid: list[PositiveFloat] = Field(min_length=1)
    n: PositiveInt


class EquivalenceSection(Strict):
    t: PositiveFloat
    n: PositiveInt
    x_max: PositiveInt = 60
    k_max: PositiveInt = 60


class Lemma75Section(Strict):
    c: list[float] = [round(0.05 * i, 2) for i in range(1, 20)]
    delta: list[float] = [0.0, 0.25, 0.5, 0.75]
    T: list[PositiveFloat] = [1.0, 5.0, 10.0, 50.0]

    @model_validator(mode="after")
    def _ranges(self):
        if not all(0 <= c < 1 for c in self.c):
            raise ValueError("lemma75.c values must lie in [0, 1)")
        if not all(0 <= d <= 1 for d in self.delta):
            raise ValueError("lemma75.delta values must lie in [0, 1]")
        return self


class Lemma71Section(Strict):
    u: PositiveInt = 1
    C1: PositiveFloat = 4.0
    k_max: PositiveInt = 50
    x_max: PositiveInt = 200


class BoundsSection(Strict):
    lemma75: Optional[Lemma75Section] = Field(default_factory=Lemma75Section)
    lemma71: Optional[Lemma71Section] = Field(default_factory=Lemma71Section)


class ExperimentConfig(Strict):
    kind: Optional[Literal[KINDS]] = None
    model: ModelSection
    seed: Optional[int] = None
    workers: PositiveInt = 1
    out: Optional[str] = None
    simulate: Optional[SimulateSection] = None
    rate: Optional[RateSection] = None
    tube: Optional[TubeSection] = None
    slope: Optional[SlopeSection] = None
    maxgrowth: Optional[MaxGrowthSection] = None
    equivalence: Optional[EquivalenceSection] = None
    bounds: Optional[BoundsSection] = None

    def section(self, kind: str):
        sec = getattr(self, kind)
        if sec is None and kind == "bounds":
            sec = BoundsSection()
        if sec is None:
            raise ValueError(f"config has no [{kind}] section")
        return sec


def read_config(path: str | Path) -> tuple[ExperimentConfig, Path]:
    """Parse a TOML/JSON config (or a run manifest); returns it with its directory."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        if isinstance(data, dict) and "tool_version" in data and "config" in data:
            data = data["config"]
    else:
        data = tomllib.loads(text)
    return ExperimentConfig.model_validate(data), path.parent
