"""Resource-aware hierarchical federated multi-task learning with dual coordinate ascent."""
from .config import ConfigError, CsvSource, ExperimentConfig, SynthSource, SystemConfig
from .data import DataError, FederatedDataset, load_csv, partition, synth_tasks
from .engine import RunResult, run
from .harness import RunArtifact, run_experiment, sweep
from .objective import InvariantViolation, RegulationParams, SmoothedHinge, duality_gap
from .planner import ConvergenceModel, ResourceCosts, ResourcePlan, select_plan

__version__ = "0.1.0"

_ESTIMATORS = ("FedAvgClassifier", "HFedMTLClassifier", "RHFedMTLClassifier")


def __getattr__(name):
    # scikit-learn is only imported when an estimator is requested
    if name in _ESTIMATORS:
        from . import estimators
        return getattr(estimators, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

__all__ = [
    "ConfigError", "ConvergenceModel", "CsvSource", "DataError", "ExperimentConfig", "FedAvgClassifier",
    "FederatedDataset", "HFedMTLClassifier", "InvariantViolation", "RHFedMTLClassifier", "RegulationParams",
    "ResourceCosts", "ResourcePlan", "RunArtifact", "RunResult", "SmoothedHinge", "SynthSource", "SystemConfig",
    "duality_gap", "load_csv", "partition", "run", "run_experiment", "select_plan", "sweep", "synth_tasks",
]
