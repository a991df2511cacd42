"""Experiment configuration documents.

Every experiment is driven by one JSON document that maps 1:1 onto the
models below.  Unknown keys are rejected so that typos fail loudly
instead of silently running a different experiment.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

__all__ = [
    "SystemConfig",
    "FrameConfig",
    "SolverConfig",
    "DetectorConfig",
    "ExperimentConfig",
    "RipcheckConfig",
    "load_experiment_config",
    "load_ripcheck_config",
]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class SystemConfig(StrictModel):
    """Multiple-access dimensions: REs, users, codebook size, user degree."""

    K: int = 4
    J: int = 6
    M: int = 4
    dv: int = 2

    @model_validator(mode="after")
    def _check(self) -> "SystemConfig":
        if self.K < 1 or self.J < 1:
            raise ValueError("K and J must be positive")
        if self.J <= self.K:
            raise ValueError("system must be overloaded (J > K)")
        if self.M not in (2, 4):
            raise ValueError("M must be 2 or 4")
        if self.dv != 2:
            raise ValueError("only dv=2 layouts are supported")
        return self


class FrameConfig(StrictModel):
    """Frame geometry: total pilot length S (with zero tail D) and data length N."""

    S: int = 56
    N: int = 224
    D: int = 42

    @model_validator(mode="after")
    def _check(self) -> "FrameConfig":
        if self.S < 1:
            raise ValueError("S must be >= 1")
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.D < 0:
            raise ValueError("D must be >= 0")
        if self.S <= self.D:
            raise ValueError("need S > D so the pilot has a nonzero head")
        return self


class SolverConfig(StrictModel):
    """Forward-backward solver settings.

    ``sigma=None`` scales the l1 weight by the true per-point noise std;
    a number fixes it explicitly.
    """

    lam: float = Field(default=1.5, alias="lambda")
    sigma: float | None = None
    step_scale: float = 1.0
    stop_tol: float = 1e-6
    max_iters: int = 10_000

    @model_validator(mode="after")
    def _check(self) -> "SolverConfig":
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.01 <= self.step_scale <= 1.49:
            raise ValueError("step_scale must lie in [0.01, 1.49]")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        return self


class DetectorConfig(StrictModel):
    """Data detector choice plus its per-kind settings."""

    kind: Literal["log_mpa", "mcmc"] = "log_mpa"
    iterations: int = 6
    sweeps: int = 15
    chains: int = 4
    mixing: float = 10.0

    @model_validator(mode="after")
    def _check(self) -> "DetectorConfig":
        if self.iterations < 1 or self.sweeps < 1 or self.chains < 1:
            raise ValueError("iterations, sweeps and chains must be >= 1")
        if self.mixing <= 0:
            raise ValueError("mixing must be positive")
        return self


class ExperimentConfig(StrictModel):
    """One sweep: system, frame, grids, estimator/detector and seeding."""

    system: SystemConfig = SystemConfig()
    frame: FrameConfig = FrameConfig()
    pilot_energy: list[float] = Field(default_factory=lambda: [1.0])
    channel: Literal["awgn", "rayleigh"] = "awgn"
    snr_db: list[float] = Field(default_factory=lambda: [0.0, 4.0, 8.0, 12.0, 16.0])
    estimator: Literal["lasso", "least_squares", "genie", "synchronous"] = "lasso"
    detector: DetectorConfig = DetectorConfig()
    solver: SolverConfig = SolverConfig()
    trials: int = 500
    master_seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if not self.pilot_energy:
            raise ValueError("pilot_energy must be nonempty")
        if any(e <= 0 for e in self.pilot_energy):
            raise ValueError("pilot energies must be positive")
        if not self.snr_db:
            raise ValueError("snr_db must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")
        return self


class RipcheckConfig(StrictModel):
    """Settings for the theory-check report."""

    n_pilot: int = 3000
    max_delay: int = 3
    re_degree: int = 3
    sparsity: int = 2
    delta: float = 0.5
    rip_draws: int = 200
    tail_trials: int = 100_000
    norm_tail_t: list[float] = Field(default_factory=lambda: [2.0, 4.0, 6.0])
    cross_tail_t: list[float] = Field(default_factory=lambda: [0.3, 0.5, 0.7])
    gershgorin_matrices: int = 100
    master_seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "RipcheckConfig":
        if self.n_pilot < 2:
            raise ValueError("n_pilot must be >= 2")
        if self.max_delay < 0:
            raise ValueError("max_delay must be >= 0")
        if self.re_degree < 1:
            raise ValueError("re_degree must be >= 1")
        if self.sparsity < 2:
            raise ValueError("sparsity must be >= 2")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.rip_draws < 1 or self.gershgorin_matrices < 1:
            raise ValueError("rip_draws and gershgorin_matrices must be >= 1")
        if self.tail_trials < 10_000:
            raise ValueError("tail_trials must be >= 10_000")
        if not self.norm_tail_t or not self.cross_tail_t:
            raise ValueError("tail threshold lists must be nonempty")
        if any(t <= 0 for t in self.norm_tail_t + self.cross_tail_t):
            raise ValueError("tail thresholds must be positive")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")
        return self


def _load(path_or_doc, model):
    if isinstance(path_or_doc, (str, Path)):
        doc = json.loads(Path(path_or_doc).read_text())
    else:
        doc = path_or_doc
    return model.model_validate(doc)


def load_experiment_config(path_or_doc) -> ExperimentConfig:
    """Parse and validate an experiment config (path or parsed JSON)."""
    return _load(path_or_doc, ExperimentConfig)


def load_ripcheck_config(path_or_doc) -> RipcheckConfig:
    """Parse and validate a theory-check config (path or parsed JSON)."""
    return _load(path_or_doc, RipcheckConfig)
