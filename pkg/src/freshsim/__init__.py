"""freshsim: a deterministic discrete-event simulator for validity-interval
freshness in real-time temporal databases."""

from .core import (
    AdmissionDecision,
    Arrival,
    ConfigError,
    FeasibilityReport,
    FreshnessMode,
    ObjectSpec,
    PolicyInfeasibleError,
    SimInternalError,
    Tick,
    UserTxnSpec,
    Version,
    admit,
    feasibility_check,
    is_fresh,
)
from .engine import RunResult, Simulator, run
from .metrics import MetricsReport, emit_csv, emit_trace, trace_hash
from .store import VersionStore
from .workload import SimConfig, emit_config, parse_config

__version__ = "0.1.0"

__all__ = [
    "AdmissionDecision", "Arrival", "ConfigError", "FeasibilityReport",
    "FreshnessMode", "MetricsReport", "ObjectSpec", "PolicyInfeasibleError",
    "RunResult", "SimConfig", "SimInternalError", "Simulator", "Tick",
    "UserTxnSpec", "Version", "VersionStore", "admit", "emit_config",
    "emit_csv", "emit_trace", "feasibility_check", "is_fresh", "parse_config",
    "run", "trace_hash", "__version__",
]
