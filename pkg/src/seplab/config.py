"""Experiment configuration: strict JSON schema shared by the CLI and service.

Unknown keys are rejected everywhere (typo safety), and a config plus the
package build fully determines every output byte.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

__all__ = ["ExperimentConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Configuration invalid or incomplete for the requested command."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    dim: int = Field(1, ge=1, le=3)
    n: int = Field(..., ge=4)
    length: float = Field(1.0, gt=0)


class PressureSection(_Section):
    K: float = Field(1.0, gt=0)
    gamma: float = Field(2.0, ge=1.0)


class DopingSection(_Section):
    kind: Literal["constant", "cosine"] = "constant"
    base: float = Field(1.0, gt=0)
    amp: float = 0.0

    @model_validator(mode="after")
    def _positive_profile(self):
        if abs(self.amp) >= self.base:
            raise ValueError("doping.amp must be smaller than doping.base in magnitude")
        return self


class NoiseSection(_Section):
    K: int = Field(8, ge=1)
    kind: Literal["quadratic", "bounded", "off"] = "off"
    eps: float = Field(0.0, ge=0)
    seed: Optional[int] = None


class StepSection(_Section):
    dt: float = Field(..., gt=0)
    cfl: float = Field(0.4, gt=0, le=1)
    rho_floor: Optional[float] = Field(None, gt=0)
    scheme: Literal["euler_maruyama", "heun_drift"] = "euler_maruyama"


class PerturbationSection(_Section):
    kind: Literal["none", "cosine"] = "none"
    eps: float = 0.0


class SteadySection(_Section):
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(200, ge=1)
    theta: float = Field(0.5, gt=0, le=1)


class EnsembleSection(_Section):
    trajectories: int = Field(64, ge=2)
    m_orders: list[int] = Field(default_factory=lambda: [1, 2])
    fit_window: Optional[tuple[float, float]] = None
    fit_source: Literal["pointwise", "running_sup"] = "pointwise"
    bootstrap: int = Field(200, ge=8)

    @model_validator(mode="after")
    def _orders_positive(self):
        if not self.m_orders or any(m < 1 for m in self.m_orders):
            raise ValueError("ensemble.m_orders must be positive integers")
        if self.fit_window is not None and self.fit_window[0] >= self.fit_window[1]:
            raise ValueError("ensemble.fit_window must be an increasing pair")
        return self


class MeasureSection(_Section):
    psi: Literal["psi_exp", "psi_tanh"] = "psi_exp"
    horizons: list[float] = Field(default_factory=lambda: [25.0, 50.0, 100.0])

    @model_validator(mode="after")
    def _horizons_ascending(self):
        if not self.horizons or any(h <= 0 for h in self.horizons):
            raise ValueError("measure.horizons must be positive")
        if sorted(self.horizons) != list(self.horizons):
            raise ValueError("measure.horizons must be ascending")
        return self


class OutputSection(_Section):
    dir: str = "out"
    format: Literal["csv", "json"] = "csv"


class ExperimentConfig(_Section):
    grid: GridSection
    pressure: PressureSection = PressureSection()
    doping: DopingSection = DopingSection()
    noise: NoiseSection = NoiseSection()
    step: Optional[StepSection] = None
    perturbation: PerturbationSection = PerturbationSection()
    steady: SteadySection = SteadySection()
    ensemble: EnsembleSection = EnsembleSection()
    measure: MeasureSection = MeasureSection()
    output: OutputSection = OutputSection()
    t_end: Optional[float] = Field(None, ge=0)
    record_stride: int = Field(1, ge=1)
    seed: int = 0
    workers: Optional[int] = Field(None, ge=1)
    tau: float = Field(1.0, gt=0)

    def require_stepping(self, command: str) -> None:
        if self.step is None:
            raise ConfigError(f"'{command}' needs the step section (step.dt at least)")
        if command != "measure" and self.t_end is None:
            raise ConfigError(f"'{command}' needs t_end")


def load_config(path) -> ExperimentConfig:
    raw = json.loads(Path(path).read_text())
    return ExperimentConfig.model_validate(raw)
