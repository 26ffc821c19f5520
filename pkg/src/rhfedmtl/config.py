"""Run configuration with the default system settings."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .planner import ConvergenceTarget, ResourceCosts

ALGORITHMS = ("rhfedmtl", "hfedmtl", "fedavg")


class ConfigError(ValueError):
    pass


@dataclass
class SystemConfig:
    """Hyperparameters of the learning system and its resource model."""

    n_tasks: int = 5
    n_terminals: int = 5
    lambda1: float = 1e-4
    lambda2: float = 1e-6
    gamma: float = 1.0
    eps_d: float = 0.01
    server_iterations: int = 1
    c_dev: float = 0.1
    c_bs: float = 10.0
    budget: float = 1400.0
    k_cap: int = 1000
    replan: bool = True
    eta_variant: str = "theorem"
    sigma_mode: str = "safe"
    h_max: Optional[int] = None

    def validate(self):
        if self.n_tasks < 1 or self.n_terminals < 1:
            raise ConfigError("n_tasks and n_terminals must be >= 1")
        if not self.lambda1 > 0 or self.lambda2 < 0:
            raise ConfigError("need lambda1 > 0 and lambda2 >= 0")
        if not self.gamma > 0 or not self.eps_d > 0:
            raise ConfigError("gamma and eps_d must be > 0")
        if self.server_iterations < 1 or self.k_cap < 1:
            raise ConfigError("server_iterations and k_cap must be >= 1")
        if min(self.c_dev, self.c_bs) < 0 or self.budget < 0 or math.isnan(self.budget):
            raise ConfigError("costs and budget must be nonnegative")
        if self.eta_variant not in ("theorem", "proof"):
            raise ConfigError(f"eta_variant must be 'theorem' or 'proof', got {self.eta_variant!r}")
        if self.sigma_mode not in ("safe", "brute-force"):
            raise ConfigError(f"sigma_mode must be 'safe' or 'brute-force', got {self.sigma_mode!r}")
        if self.h_max is not None and self.h_max < 1:
            raise ConfigError("h_max must be >= 1")
        return self

    @property
    def costs(self) -> ResourceCosts:
        return ResourceCosts((self.c_dev,), (self.c_bs,), (self.budget,))

    @property
    def target(self) -> ConvergenceTarget:
        return ConvergenceTarget(self.eps_d, self.server_iterations)


@dataclass
class SynthSource:
    samples_per_task: int = 490
    d: int = 50
    relatedness: float = 0.7
    noise: float = 0.05


@dataclass
class CsvSource:
    path: str = ""
    label_column: str = "label"
    task_column: str = "task"
    positive_label: str = "sitting"


@dataclass
class ExperimentConfig:
    """One experiment: algorithm, system settings, data source and seed."""

    algorithm: str = "rhfedmtl"
    system: SystemConfig = field(default_factory=SystemConfig)
    synth: Optional[SynthSource] = field(default_factory=SynthSource)
    csv: Optional[CsvSource] = None
    test_fraction: float = 2 / 7
    standardize: bool = True
    seed: int = 0
    fixed_h: int = 2
    learning_rate: float = 0.1
    strict: bool = False

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        self.system.validate()
        if self.fixed_h < 1:
            raise ConfigError("fixed_h must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("test_fraction must be in [0, 1)")
        if (self.csv is None) == (self.synth is None):
            raise ConfigError("exactly one data source (csv or synth) is required")
        if self.csv is not None and not self.csv.path:
            raise ConfigError("csv source needs a path")
        if self.synth is not None and not 0 <= self.synth.relatedness <= 1:
            raise ConfigError("synth relatedness must be in [0, 1]")
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if math.isinf(out["system"]["budget"]):
            out["system"]["budget"] = "inf"
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        cfg = cls()
        try:
            system = dict(raw.pop("system", {}))
            if isinstance(system.get("budget"), str):
                system["budget"] = float(system["budget"])
            cfg.system = dataclasses.replace(cfg.system, **system)
            if "synth" in raw:
                cfg.synth = None if raw["synth"] is None else SynthSource(**raw.pop("synth"))
            if "csv" in raw:
                csv = raw.pop("csv")
                cfg.csv = None if csv is None else CsvSource(**csv)
                if cfg.csv is not None and "synth" not in raw:
                    cfg.synth = None
            return dataclasses.replace(cfg, **raw)
        except TypeError as exc:
            raise ConfigError(f"unknown config field: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)
