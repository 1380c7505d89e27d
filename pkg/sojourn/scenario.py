# sojourn/scenario.py
"""
Scenario files: TOML sections validated by pydantic models.

    task = "SojournTable"
    seed = 7

    [model]
    id = "FlatEuclidean"
    dim = 2

    [points]
    z = [[0.5, -0.25]]
    dir = [[1.0, 0.0]]
"""
from __future__ import annotations

import math
import re
import tomllib
from enum import Enum
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from sojourn.errors import ScenarioParseError, ScenarioValidationError
from sojourn.manifolds import ManifoldKind, ModelId, make_model
from sojourn.settings import settings

TOML_POSITION = re.compile(r"\(at line (\d+), column (\d+)\)")
# a pulse narrower than this many s-steps is under-resolved by the trace derivative
RESOLVED_WIDTH_STEPS = 10.0


class Task(str, Enum):
    SOJOURN_TABLE = "SojournTable"
    BRANCH_SEARCH = "BranchSearch"
    KERNEL_SYNTHESIS = "KernelSynthesis"
    ORACLE_COMPARE = "OracleCompare"
    PDE_CROSS_CHECK = "PdeCrossCheck"
    CATALOG_VALIDATE = "CatalogValidate"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSpec(_Section):
    id: ModelId
    dim: int = Field(2, ge=2, le=3)
    kind: ManifoldKind | None = None
    collar_x0: float | None = None
    params: dict[str, float] = Field(default_factory=dict)

    def build(self):
        return make_model(self.id, self.dim, dict(self.params), self.collar_x0, self.kind)


class PointsSpec(_Section):
    z: list[list[float]] = Field(default_factory=list)
    dir: list[list[float]] = Field(default_factory=list)
    y_target: list[list[float]] = Field(default_factory=list)
    random: int = Field(0, ge=0, description="Extra random points drawn from the scenario seed")
    radius: float = Field(3.0, gt=0, description="Scale of random interior points")


class LambdaGridSpec(_Section):
    min: float = Field(default_factory=lambda: settings.LAMBDA_MIN, gt=0)
    max: float = Field(default_factory=lambda: settings.LAMBDA_MAX, gt=0)
    points: int = Field(default_factory=lambda: settings.LAMBDA_POINTS, ge=16)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.min < self.max:
            raise ValueError("lambda_grid.min must be below lambda_grid.max")
        return self

    def array(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.points)


class MollifierSpec(_Section):
    width: float = Field(default_factory=lambda: settings.MOLLIFIER_WIDTH, gt=0)
    profile: Literal["bump"] = "bump"
    normalization: Literal["integral", "peak"] = "integral"
    apply: bool = True


class PdeSpec(_Section):
    r0: float = Field(5.0, ge=0)
    width: float = Field(0.5, gt=0, description="Pulse width for the trace and phase checks, at least 10 ds")
    front_width: float = Field(0.02, gt=0, description="Width of the sharp pulse used to locate the front")
    amplitude: float = 1.0
    ell: int = Field(0, ge=0)
    ds: float = Field(0.05, gt=0)
    dx: float = Field(0.01, gt=0)
    s_min: float = -9.0
    s_max: float = 4.0
    x_max: float = Field(0.2, gt=0)
    threshold: float = Field(default_factory=lambda: settings.FRONT_THRESHOLD, gt=0, lt=1)
    refine: bool = False
    phase_lambda: tuple[float, float] | None = None

    @model_validator(mode="after")
    def _resolved_pulse(self):
        if self.width < RESOLVED_WIDTH_STEPS * self.ds:
            raise ValueError(f"pde.width must be at least {RESOLVED_WIDTH_STEPS * self.ds:g} ({RESOLVED_WIDTH_STEPS:g} ds)")
        return self


class CatalogSpec(_Section):
    samples: int = Field(default_factory=lambda: settings.CATALOG_SAMPLES, ge=1)


class OutputSpec(_Section):
    dir: str = "out"
    paths: bool = Field(False, description="Also write the sampled geodesic paths of SojournTable")


class Tolerances(_Section):
    sojourn: float = 1e-8
    h3_sojourn: float = 1e-6
    kernel_l2: float = 1e-6
    jacobian: float = 1e-6
    phase_slope: float = 1e-5
    amplitude_exponent: float = 1e-3
    front_ds_multiple: float = 2.0
    phase_law: float = 0.05
    trace_oracle: float = 1e-3
    multipole_trace: float = 1e-2
    jacobian_consistency: float = 1e-3


class Scenario(_Section):
    name: str = "scenario"
    task: Task
    seed: int = 0
    model: ModelSpec
    points: PointsSpec = Field(default_factory=PointsSpec)
    lambda_grid: LambdaGridSpec = Field(default_factory=LambdaGridSpec)
    mollifier: MollifierSpec = Field(default_factory=MollifierSpec)
    pde: PdeSpec = Field(default_factory=PdeSpec)
    catalog: CatalogSpec = Field(default_factory=CatalogSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    tolerances: Tolerances = Field(default_factory=Tolerances)

    @field_validator("task", mode="before")
    @classmethod
    def _known_task(cls, value):
        if isinstance(value, str) and value not in {t.value for t in Task}:
            raise ValueError(f"unknown task {value!r}")
        return value

    @model_validator(mode="after")
    def _task_fields(self):
        p, n = self.points, self.model.dim
        missing: list[str] = []
        if self.task is Task.SOJOURN_TABLE:
            if not p.random and not p.z:
                missing.append("points.z")
            if p.z and len(p.dir) != len(p.z):
                missing.append("points.dir")
        elif self.task in (Task.BRANCH_SEARCH, Task.KERNEL_SYNTHESIS, Task.ORACLE_COMPARE):
            if not p.random and not p.z:
                missing.append("points.z")
            if p.z and len(p.y_target) != len(p.z):
                missing.append("points.y_target")
        elif self.task is Task.PDE_CROSS_CHECK and (self.model.dim != 3 or self.model.id is ModelId.HYPERBOLIC_HN):
            missing.append("model.dim")
        if missing:
            raise ValueError("missing or inconsistent fields: " + ", ".join(missing))
        for name, rows in (("z", p.z), ("dir", p.dir)):
            if any(len(row) != n for row in rows):
                raise ValueError(f"points.{name} entries must have {n} components")
        if any(not all(math.isfinite(v) for v in row) for row in p.z + p.dir + p.y_target):
            raise ValueError("points must be finite")
        return self

    def resolved(self) -> dict:
        return self.model_dump(mode="json")


def _locate_key(text: str, key: str) -> tuple[int | None, int | None]:
    pattern = re.compile(rf"^\s*({re.escape(key)})\s*=|^\s*\[+\s*([\w.]*\b{re.escape(key)})\s*\]+")
    for lineno, line in enumerate(text.splitlines(), start=1):
        match = pattern.search(line)
        if match:
            return lineno, match.start(match.lastindex) + 1
    return None, None


def parse_scenario(text: str) -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        found = TOML_POSITION.search(str(exc))
        line, column = (int(found.group(1)), int(found.group(2))) if found else (None, None)
        raise ScenarioParseError(TOML_POSITION.sub("", str(exc)).strip(), line, column) from exc
    try:
        return Scenario.model_validate(raw)
    except ValidationError as exc:
        errors = exc.errors()
        for err in errors:
            if err["type"] == "extra_forbidden":
                key = str(err["loc"][-1])
                line, column = _locate_key(text, key)
                dotted = ".".join(str(part) for part in err["loc"])
                raise ScenarioParseError(f"unknown key {key!r} at {dotted}", line, column) from exc
        fields = [".".join(str(part) for part in err["loc"]) or err["msg"] for err in errors]
        raise ScenarioValidationError(fields, "; ".join(err["msg"] for err in errors)) from exc


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))
