"""Domain types for temporal data objects, the freshness predicate, and the
admission (feasibility) check.

All timestamps and durations are integer ticks. Nothing in the engine rounds:
a config that parses is simulated exactly, so two runs with the same config
and seed are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

Tick = int


class ConfigError(Exception):
    """Raised on invalid configuration. Carries every violation found, each as
    a (path, message) pair, not just the first."""

    def __init__(self, errors: list[tuple[str, str]] | str):
        if isinstance(errors, str):
            errors = [("", errors)]
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" if p else m for p, m in errors))


class PolicyInfeasibleError(ConfigError):
    """Requested utilization target cannot be met even at maximal periods."""


class SimInternalError(RuntimeError):
    """An engine invariant was violated; indicates a bug, not bad input."""


class FreshnessMode(Enum):
    CLASSICAL = "classical"
    MULTIVERSION = "multiversion"


# Transaction retrieval modes. "store" reads cached versions only, "source"
# always reacquires from the data source, "store_then_source" reads the cache
# but falls back to the source when no usable version exists.
RETRIEVAL_MODES = ("source", "store", "store_then_source")


@dataclass
class ObjectSpec:
    """A temporal data object: identity, validity interval, and update costs.

    `vi` is the validity interval: a sampled value is fresh at time t iff
    t <= sample_time + vi. `update_period` and `update_cost` drive the update
    workload; `access_weight` expresses relative access frequency and feeds
    the default elasticity of period rescaling.
    """

    id: str
    vi: Tick
    update_period: Tick
    update_cost: Tick = 0
    value_process: Any = None
    access_weight: float = 1.0
    max_period: Tick | None = None

    def validate(self, path: str, errors: list[tuple[str, str]]) -> None:
        if self.vi <= 0:
            errors.append((f"{path}.vi", "validity interval must be > 0"))
        if self.update_period <= 0:
            errors.append((f"{path}.period", "update period must be > 0"))
        if self.update_cost < 0:
            errors.append((f"{path}.cost", "update cost must be >= 0"))
        elif self.update_cost > self.update_period:
            errors.append((f"{path}.cost", "update cost must be <= update period"))
        if self.access_weight < 0:
            errors.append((f"{path}.access_weight", "access weight must be >= 0"))
        if self.max_period is not None and self.max_period < self.update_period:
            errors.append((f"{path}.max_period", "max_period must be >= period"))


@dataclass
class Version:
    """One timestamped sample of a temporal object.

    `vi_extend` accumulates validity extensions granted by skipped or
    suppressed update instances (each skip confirms the stored value, so the
    effective validity grows by one update period). The expiry instant is
    always derived: sample_time + vi + vi_extend, never stored.
    """

    object_id: str
    value: float
    sample_time: Tick
    seq: int
    pin_count: int = 0
    vi_extend: Tick = 0

    def valid_until(self, vi: Tick) -> Tick:
        return self.sample_time + vi + self.vi_extend


@dataclass
class Arrival:
    """Release pattern of a transaction: one-shot, periodic, or Poisson.

    Poisson gaps are drawn by inverse transform from a seeded splitmix64
    stream, rounded up to whole ticks, so expansions are reproducible.
    `mean_gap` is the expected inter-arrival time in ticks.
    """

    kind: str  # "oneshot" | "periodic" | "poisson"
    t: Tick = 0
    start: Tick = 0
    period: Tick = 0
    mean_gap: Tick = 0

    def validate(self, path: str, errors: list[tuple[str, str]]) -> None:
        if self.kind == "oneshot":
            if self.t < 0:
                errors.append((f"{path}.t", "arrival time must be >= 0"))
        elif self.kind == "periodic":
            if self.start < 0:
                errors.append((f"{path}.start", "start must be >= 0"))
            if self.period <= 0:
                errors.append((f"{path}.period", "period must be > 0"))
        elif self.kind == "poisson":
            if self.mean_gap <= 0:
                errors.append((f"{path}.mean_gap", "mean gap must be > 0"))
        else:
            errors.append((f"{path}.kind", f"unknown arrival kind {self.kind!r}"))


@dataclass
class UserTxnSpec:
    """A deadline-constrained analysis transaction over a set of objects.

    The transaction visits `read_set` in order; for each object it spends the
    mapped retrieval time (source acquisitions only) and then the mapped
    analysis time. `relative_deadline` is measured from release.
    """

    id: str
    read_set: list[str]
    retrieval_time: dict[str, Tick]
    analysis_time: dict[str, Tick]
    relative_deadline: Tick
    arrival: Arrival = field(default_factory=lambda: Arrival("oneshot", t=0))
    retrieval_mode: str = "source"

    def needs_source(self) -> bool:
        return self.retrieval_mode in ("source", "store_then_source")

    def validate(self, path: str, object_ids: set[str],
                 errors: list[tuple[str, str]]) -> None:
        if not self.read_set:
            errors.append((f"{path}.read_set", "read set must not be empty"))
        seen = set()
        for i, oid in enumerate(self.read_set):
            if oid not in object_ids:
                errors.append((f"{path}.read_set[{i}]", f"unknown object id {oid!r}"))
            if oid in seen:
                errors.append((f"{path}.read_set[{i}]", f"duplicate object id {oid!r}"))
            seen.add(oid)
        for oid in self.read_set:
            r = self.retrieval_time.get(oid)
            if r is None:
                errors.append((f"{path}.retrieval", f"missing retrieval time for {oid!r}"))
            elif self.needs_source():
                if r <= 0:
                    errors.append((f"{path}.retrieval[{oid}]",
                                   "retrieval time must be > 0 for source acquisition"))
            elif r < 0:
                errors.append((f"{path}.retrieval[{oid}]", "retrieval time must be >= 0"))
            a = self.analysis_time.get(oid)
            if a is None:
                errors.append((f"{path}.analysis", f"missing analysis time for {oid!r}"))
            elif a <= 0:
                errors.append((f"{path}.analysis[{oid}]", "analysis time must be > 0"))
        if self.relative_deadline <= 0:
            errors.append((f"{path}.deadline", "relative deadline must be > 0"))
        if self.retrieval_mode not in RETRIEVAL_MODES:
            errors.append((f"{path}.retrieval_mode",
                           f"must be one of {', '.join(RETRIEVAL_MODES)}"))
        self.arrival.validate(f"{path}.arrival", errors)


def is_fresh(version: Version, vi: Tick, t: Tick) -> bool:
    """Freshness predicate: the sample taken at u is fresh at t iff
    t <= u + vi. The boundary is inclusive: a value is still fresh at the
    exact instant its validity interval ends."""
    return t <= version.valid_until(vi)


@dataclass
class FeasibilityEntry:
    object_id: str
    vi: Tick
    retrieval: Tick
    analysis: Tick

    @property
    def ok(self) -> bool:
        return self.vi >= self.retrieval + self.analysis


@dataclass
class FeasibilityReport:
    txn_id: str
    entries: list[FeasibilityEntry]

    @property
    def passed(self) -> bool:
        return all(e.ok for e in self.entries)

    def failing_objects(self) -> list[str]:
        return [e.object_id for e in self.entries if not e.ok]


def feasibility_check(txn: UserTxnSpec, objects: dict[str, ObjectSpec]) -> FeasibilityReport:
    """Check, per object read by the transaction, that the validity interval
    covers retrieval plus analysis time: vi >= R + A.

    A transaction violating this for any object can be forced to reacquire
    and reanalyze indefinitely, so the run-level admission gate is built on
    this check. Durations are taken as declared by the workload; no contention
    inflation is applied.
    """
    entries = []
    for oid in txn.read_set:
        obj = objects.get(oid)
        if obj is None:
            raise ConfigError([(f"txn[{txn.id}].read_set", f"unknown object id {oid!r}")])
        entries.append(FeasibilityEntry(
            object_id=oid,
            vi=obj.vi,
            retrieval=txn.retrieval_time[oid],
            analysis=txn.analysis_time[oid],
        ))
    return FeasibilityReport(txn_id=txn.id, entries=entries)


@dataclass
class AdmissionDecision:
    admitted: bool
    report: FeasibilityReport


def admit(txn: UserTxnSpec, objects: dict[str, ObjectSpec],
          enforce: bool) -> AdmissionDecision:
    """Admission gate. With enforce on, a transaction failing the feasibility
    check is rejected and never released; with enforce off everything is
    admitted (needed to reproduce the unbounded-restart failure mode)."""
    report = feasibility_check(txn, objects)
    return AdmissionDecision(admitted=report.passed or not enforce, report=report)
