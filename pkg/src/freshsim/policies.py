"""Update workload policies: when is a temporal object refreshed, skipped, or
suppressed.

Six policies are supported, one per object per run:

* periodic        - update every `period` ticks, unconditionally.
* ondemand        - no periodic instances; refresh only when an access finds
                    the stored version stale.
* elastic         - keep periodic updates but stretch periods (and validity
                    intervals with them) until total update utilization meets
                    a target; colder objects stretch more.
* mkfirm          - periodic instances, but skip as many as the (m,k) window
                    guarantee allows: every k consecutive instances perform
                    at least m updates.
* similarity      - periodic instances; skip when the sampled value is within
                    a dead band `delta` of the last installed value.
* prediction      - periodic instances; transmit only when the sampled value
                    deviates from a predictor mirrored at source and sink by
                    more than `epsilon`.

Skipping or suppressing an instance extends the current version's effective
validity by one update period: the instance is a virtual update confirming
the stored value.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .core import ObjectSpec, PolicyInfeasibleError, Tick
from .store import ReadResult, VersionStore

# Decisions recorded in the policy trace. Transmit/suppress are the
# prediction-policy spellings of perform/skip.
PERFORM = "perform"
SKIP = "skip"
TRANSMIT = "transmit"
SUPPRESS = "suppress"

PREDICTOR_KINDS = ("lastvalue", "linear")

# Periods never stretch past this unless the object declares its own
# max_period; keeps the rescaling fixed point finite.
DEFAULT_MAX_PERIOD = 2 ** 20


def as_fraction(x) -> Fraction:
    """Exact rational from a config number. Floats go through their shortest
    decimal repr, so JSON 0.4 becomes 2/5, not the nearest binary float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


# ---------------------------------------------------------------------------
# policy configs


@dataclass
class PeriodicPolicy:
    kind: str = "periodic"

    def validate(self, path, errors):
        pass


@dataclass
class OnDemandPolicy:
    kind: str = "ondemand"

    def validate(self, path, errors):
        pass


@dataclass
class ElasticPolicy:
    target_utilization: float = 1.0
    elasticity: float | None = None  # None: derived from period and weight
    kind: str = "elastic"

    def validate(self, path, errors):
        t = as_fraction(self.target_utilization)
        if not (0 < t <= 1):
            errors.append((f"{path}.target_utilization", "must be in (0, 1]"))
        if self.elasticity is not None and self.elasticity < 0:
            errors.append((f"{path}.elasticity", "must be >= 0"))


@dataclass
class MKFirmPolicy:
    m: int = 1
    k: int = 1
    kind: str = "mkfirm"

    def validate(self, path, errors):
        if not (1 <= self.m <= self.k):
            errors.append((f"{path}", f"m <= k violated (m={self.m}, k={self.k})"))


@dataclass
class SimilarityPolicy:
    delta: float = 0.0
    kind: str = "similarity"

    def validate(self, path, errors):
        if self.delta < 0:
            errors.append((f"{path}.delta", "must be >= 0"))


@dataclass
class PredictionPolicy:
    predictor: str = "lastvalue"
    epsilon: float = 0.0
    kind: str = "prediction"

    def validate(self, path, errors):
        if self.predictor not in PREDICTOR_KINDS:
            errors.append((f"{path}.predictor",
                           f"must be one of {', '.join(PREDICTOR_KINDS)}"))
        if self.epsilon < 0:
            errors.append((f"{path}.epsilon", "must be >= 0"))


PolicyConfig = (PeriodicPolicy | OnDemandPolicy | ElasticPolicy
                | MKFirmPolicy | SimilarityPolicy | PredictionPolicy)


# ---------------------------------------------------------------------------
# periodic and on-demand


def periodic_instances(obj: ObjectSpec, horizon: Tick) -> list[Tick]:
    """Release times 0, P, 2P, ... up to and including the horizon."""
    return list(range(0, horizon + 1, obj.update_period))


def on_demand_decision(object_id: str, access_time: Tick, store: VersionStore,
                       exclude_seqs: frozenset[int] = frozenset()) -> ReadResult | None:
    """Serve a fresh stored version, or None meaning: launch a refresh now.

    The refresh samples at `access_time` and installs after the object's
    update cost; the accessing transaction blocks until then. No periodic
    instances exist under this policy.
    """
    return store.read_latest(object_id, access_time, exclude_seqs)


# ---------------------------------------------------------------------------
# elastic period rescaling


def default_elasticity(obj: ObjectSpec) -> Fraction:
    """Cold objects (updated often relative to how often they are read)
    stretch the most: elasticity defaults to 1 / (period * access_weight)."""
    w = as_fraction(obj.access_weight) if obj.access_weight > 0 else Fraction(1)
    return Fraction(1, obj.update_period) / w


def elastic_rescale(objects: list[ObjectSpec], target_utilization,
                    elasticity: dict[str, Fraction]) -> dict[str, Tick]:
    """Stretch update periods until total utilization sum(C_i/P_i) meets the
    target; returns the new period per object id.

    If utilization already meets the target, periods are unchanged. Otherwise
    each compressible object sheds utilization in proportion to its
    elasticity; any object pushed below the utilization floor implied by its
    maximum period is clamped there and the shortfall is redistributed until
    a fixed point. New periods are ceil(C/U'), so they are integers, never
    decrease, and the post-rescale utilization never exceeds the target.
    Objects with zero elasticity or zero cost keep their periods.
    """
    target = as_fraction(target_utilization)
    util = {o.id: Fraction(o.update_cost, o.update_period) for o in objects}
    total = sum(util.values(), Fraction(0))
    new_periods = {o.id: o.update_period for o in objects}
    if total <= target:
        return new_periods

    by_id = {o.id: o for o in objects}
    active = [o.id for o in objects
              if elasticity.get(o.id, Fraction(0)) > 0 and o.update_cost > 0]
    floor = {}
    for oid in active:
        o = by_id[oid]
        cap = o.max_period if o.max_period is not None else DEFAULT_MAX_PERIOD
        floor[oid] = Fraction(o.update_cost, cap)
    fixed = total - sum((util[oid] for oid in active), Fraction(0))
    clamped: dict[str, Fraction] = {}

    while True:
        budget = target - fixed - sum(clamped.values(), Fraction(0))
        demand = sum((util[oid] for oid in active), Fraction(0))
        excess = demand - budget
        if excess <= 0:
            new_util = {oid: util[oid] for oid in active}
            break
        esum = sum((elasticity[oid] for oid in active), Fraction(0))
        if not active or esum <= 0:
            raise PolicyInfeasibleError(
                [("policy.elastic",
                  f"target utilization {target} unreachable even at maximal "
                  f"periods (residual over target: {float(excess)})")])
        new_util = {}
        violated = []
        for oid in active:
            u = util[oid] - excess * elasticity[oid] / esum
            if u < floor[oid] or u <= 0:
                violated.append(oid)
            else:
                new_util[oid] = u
        if not violated:
            break
        for oid in violated:
            clamped[oid] = floor[oid]
            active.remove(oid)

    for oid, u in list(new_util.items()) + list(clamped.items()):
        if u <= 0:
            raise PolicyInfeasibleError(
                [("policy.elastic", f"object {oid!r} cannot absorb its share")])
        o = by_id[oid]
        new_periods[oid] = max(o.update_period, math.ceil(Fraction(o.update_cost) / u))
    return new_periods


def extend_vi_for_period(obj: ObjectSpec, new_period: Tick) -> Tick:
    """Validity interval that accompanies a stretched period, keeping the
    half-period rule vi = 2P so a fresh version always exists under jitter
    free periodic updates. Never shrinks the declared interval."""
    return max(obj.vi, 2 * new_period)


# ---------------------------------------------------------------------------
# (m,k)-firm skipping


@dataclass
class MKHistory:
    """Sliding window of the last k-1 decisions (True = performed), padded
    with performs for the instances before the run started."""

    k: int
    window: deque = field(default_factory=deque)

    def __post_init__(self):
        if not self.window:
            self.window = deque([True] * (self.k - 1), maxlen=max(self.k - 1, 0))
        else:
            self.window = deque(self.window, maxlen=max(self.k - 1, 0))

    def performs(self) -> int:
        return sum(1 for d in self.window if d)

    def append(self, performed: bool) -> None:
        if self.window.maxlen:
            self.window.append(performed)


def mk_firm_decision(m: int, k: int, history: MKHistory) -> str:
    """Greedy (m,k) rule: skip this instance iff the window of the last k-1
    decisions plus this skip still holds at least m performs; otherwise the
    update is forced. Every k consecutive instances then contain >= m
    performs. The decision is appended to the history."""
    if history.performs() >= m:
        history.append(False)
        return SKIP
    history.append(True)
    return PERFORM


# ---------------------------------------------------------------------------
# similarity dead band


def similarity_decision(last_stored_value: float, sampled_value: float,
                        delta: float) -> str:
    """Skip iff the sample is within the dead band of the last installed
    value. Comparing against the stored value, never the previous sample,
    bounds the store's error by delta at every sampling instant."""
    if abs(sampled_value - last_stored_value) < delta:
        return SKIP
    return PERFORM


# ---------------------------------------------------------------------------
# prediction gating


@dataclass
class PredictorState:
    """Predictor state mirrored at the data source and the sink.

    Both sides hold the same last one or two transmitted (value, time) points,
    so both compute identical predictions; that is what makes suppression
    safe. The mirrors are updated together, only on transmit.
    """

    predictor: str  # "lastvalue" | "linear"
    source_points: tuple[tuple[float, Tick], ...] = ()
    sink_points: tuple[tuple[float, Tick], ...] = ()

    def predict(self, t: Tick) -> float | None:
        """Sink-side prediction at time t; None until a point exists."""
        pts = self.sink_points
        if not pts:
            return None
        if self.predictor == "lastvalue" or len(pts) < 2:
            return pts[-1][0]
        (v0, t0), (v1, t1) = pts[-2], pts[-1]
        return v1 + (v1 - v0) * (t - t1) / (t1 - t0)

    def record_transmit(self, value: float, t: Tick) -> None:
        pts = (self.source_points + ((value, t),))[-2:]
        self.source_points = pts
        self.sink_points = pts

    def mirrored(self) -> bool:
        return self.source_points == self.sink_points


def prediction_decision(state: PredictorState, sampled_value: float,
                        sample_time: Tick, epsilon: float) -> tuple[str, float | None]:
    """Transmit iff the sample deviates from the shared prediction by more
    than epsilon (always transmits while the predictor has no points).
    Returns the decision and the predicted value; on suppress the sink's
    effective value at this instant is that prediction."""
    predicted = state.predict(sample_time)
    if predicted is None or abs(sampled_value - predicted) > epsilon:
        state.record_transmit(sampled_value, sample_time)
        return TRANSMIT, predicted
    return SUPPRESS, predicted
