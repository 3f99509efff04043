"""Declarative experiment and prior descriptions (YAML), validated strictly."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .clocksim import PROTOCOLS, SimConfig
from .noise import NoiseModel
from .optimizer import OptimizerConfig
from .timing import TimingConfig
from .tracker import TrackerConfig

__all__ = [
    "SpecError",
    "ExperimentSpec",
    "PriorSpec",
    "load_experiment",
    "load_prior",
    "spec_hash",
]


class SpecError(ValueError):
    """Invalid specification; ``str()`` lists one diagnostic per line."""

    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NoiseSpec(_Strict):
    kind: Literal["brownian", "flicker", "power_law"]
    h: float = Field(gt=0)
    alpha: float | None = None

    @model_validator(mode="after")
    def _alpha(self):
        if self.kind == "power_law":
            if self.alpha is None:
                raise ValueError("power_law noise needs alpha")
            if not -3.0 < self.alpha <= -1.0:
                raise ValueError("alpha must satisfy -3 < alpha <= -1")
        elif self.alpha is not None:
            raise ValueError(f"alpha is fixed for {self.kind} noise; remove it")
        return self

    def model(self) -> NoiseModel:
        if self.kind == "brownian":
            return NoiseModel.brownian(self.h)
        if self.kind == "flicker":
            return NoiseModel.flicker(self.h)
        return NoiseModel(self.alpha, self.h)


class TrackerSpec(_Strict):
    m: int = Field(1, ge=1)
    points: int = Field(41, ge=3)
    moments: int = Field(2, ge=2)
    span: float = Field(4.0, gt=0)

    @field_validator("points")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("points must be odd")
        return v


class OptimizerSpec(_Strict):
    outcomes: int | None = Field(8, ge=2)
    max_iters: int = Field(50, ge=1)
    tol: float = Field(1e-6, gt=0)
    refine_rounds: int = Field(1, ge=0)
    gap_tol: float = Field(1e-8, gt=0)
    first_step_starts: int = Field(2, ge=0)
    certificate_tol: float = Field(1e-6, gt=0)
    ramsey_phases: int = Field(64, ge=0)

    def config(self, starts: int = 0) -> OptimizerConfig:
        return OptimizerConfig(n_outcomes=self.outcomes, max_iters=self.max_iters, tol=self.tol,
                               starts=starts, refine_rounds=self.refine_rounds,
                               gap_tol=self.gap_tol, certificate_tol=self.certificate_tol,
                               ramsey_phases=self.ramsey_phases)


class TimingSpec(_Strict):
    Omega: float = Field(gt=0)
    jitter: float = Field(1e-3, ge=0, lt=1 / 3)
    prep_measure_window: float = Field(0.0, ge=0)
    reparameterize: bool = False

    def config(self) -> TimingConfig:
        return TimingConfig(self.Omega, self.jitter, self.prep_measure_window, self.reparameterize)


class AnalysisSpec(_Strict):
    last_steps: int = Field(20, ge=1)
    bootstrap: int = Field(200, ge=2)


class ExperimentSpec(_Strict):
    name: str = "experiment"
    atoms: int = Field(ge=1, le=6)
    noise: NoiseSpec
    T: float = Field(1.0, gt=0)
    interrogations: int = Field(ge=2)
    runs: int = Field(ge=1)
    seed: int = Field(0, ge=0)
    protocols: tuple[Literal["adaptive", "ramsey", "buzek"], ...] = PROTOCOLS
    tracker: TrackerSpec = TrackerSpec()
    optimizer: OptimizerSpec = OptimizerSpec()
    buzek_outcomes: int | None = Field(None, ge=2)
    timing: TimingSpec | None = None
    analysis: AnalysisSpec = AnalysisSpec()
    output: str | None = None

    @model_validator(mode="after")
    def _checks(self):
        if len(set(self.protocols)) != len(self.protocols) or not self.protocols:
            raise ValueError("protocols must be a non-empty list without repeats")
        if self.buzek_outcomes is not None and self.buzek_outcomes < self.atoms + 1:
            raise ValueError("buzek_outcomes must be at least atoms + 1")
        return self

    def sim_config(self, protocol: str) -> SimConfig:
        tr = TrackerConfig(m=self.tracker.m, P=self.tracker.points, K=self.tracker.moments,
                           T=self.T, span=self.tracker.span)
        return SimConfig(
            atoms=self.atoms, protocol=protocol, noise=self.noise.model(), T=self.T,
            interrogations=self.interrogations, runs=self.runs, seed=self.seed, tracker=tr,
            optimizer=self.optimizer.config(), first_step_starts=self.optimizer.first_step_starts,
            buzek_outcomes=self.buzek_outcomes,
            timing=None if self.timing is None else self.timing.config(),
        )


class GaussianPriorSpec(_Strict):
    mean: float = 0.0
    std: float = Field(ge=0)
    points: int = Field(41, ge=3)
    span: float = Field(4.0, gt=0)

    @field_validator("points")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("points must be odd")
        return v


class GridPriorSpec(_Strict):
    omegas: list[float] = Field(min_length=1)
    probs: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _shape(self):
        if len(self.omegas) != len(self.probs):
            raise ValueError("omegas and probs must have equal length")
        if any(p < 0 for p in self.probs) or sum(self.probs) <= 0:
            raise ValueError("probs must be non-negative with a positive sum")
        return self


class PriorSpec(_Strict):
    """Single-interrogation optimization problem."""

    atoms: int = Field(ge=1, le=6)
    T: float = Field(1.0, gt=0)
    gaussian: GaussianPriorSpec | None = None
    grid: GridPriorSpec | None = None
    phase_terms: list[float] | float = 0.0
    outcomes: int | None = Field(None, ge=2)
    starts: int = Field(8, ge=0)
    refine_rounds: int = Field(3, ge=0)
    gap_tol: float = Field(1e-8, gt=0)
    certificate_tol: float = Field(1e-6, gt=0)
    ramsey_phases: int = Field(64, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _one_prior(self):
        if (self.gaussian is None) == (self.grid is None):
            raise ValueError("give exactly one of 'gaussian' or 'grid'")
        n = self.gaussian.points if self.gaussian is not None else len(self.grid.omegas)
        if isinstance(self.phase_terms, list) and len(self.phase_terms) != n:
            raise ValueError(f"phase_terms needs {n} entries, one per grid node")
        return self

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(n_outcomes=self.outcomes, starts=self.starts,
                               refine_rounds=self.refine_rounds, gap_tol=self.gap_tol,
                               certificate_tol=self.certificate_tol, ramsey_phases=self.ramsey_phases)


def _line_of(text: str, loc: tuple) -> int | None:
    """1-based line of the YAML node at ``loc`` (or its deepest existing parent)."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None if node is None else node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = [(k, v) for k, v in node.value if k.value == str(key)]
            if not match:
                break
            k, node = match[0]
            line = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _validate(model, text: str, source: str):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise SpecError([f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}"]) from None
    if not isinstance(data, dict):
        raise SpecError([f"{source}: top level must be a mapping"])
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            field = ".".join(str(x) for x in loc) or "<root>"
            line = _line_of(text, loc)
            where = f"{source}:{line}" if line else source
            msg = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
            problems.append(f"{where}: {field}: {msg}")
        raise SpecError(problems) from None


def load_experiment(path) -> tuple[ExperimentSpec, str]:
    """Parse and validate an experiment file; returns the spec and its raw text."""
    p = Path(path)
    text = p.read_text()
    return _validate(ExperimentSpec, text, str(p)), text


def load_prior(path) -> PriorSpec:
    p = Path(path)
    return _validate(PriorSpec, p.read_text(), str(p))


def canonical_json(spec: BaseModel) -> str:
    return json.dumps(spec.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def spec_hash(spec: BaseModel) -> str:
    return hashlib.sha256(canonical_json(spec).encode()).hexdigest()
