"""Config ingestion and workload synthesis.

The config is a JSON document:

    {
      "name": "scenario",              // optional
      "horizon": 1000,
      "mode": "classical" | "multiversion",
      "enforce_admission": false,
      "seed": 42,
      "rng": "splitmix64-invexp",      // optional; the only supported stream
      "objects": [
        {"id": "o1", "vi": 10, "period": 5, "cost": 1,
         "access_weight": 1.0,          // optional, default 1
         "max_period": 50,              // optional elastic stretch cap
         "process": {"kind": "constant", "value": 7.0},
         "policy":  {"kind": "periodic"}}
      ],
      "transactions": [
        {"id": "t1", "read_set": ["o1"],
         "retrieval": {"o1": 2},        // or a single int for all objects
         "analysis":  {"o1": 3},
         "deadline": 20,
         "arrival": {"kind": "oneshot", "t": 0},
         "retrieval_mode": "source"}
      ]
    }

All durations are integer ticks; unknown keys are rejected. Validation
reports every violation with its path, not just the first.

Value processes are counter based: the value at a sampling instant is a pure
function of (seed, object id, instant), so a policy that skips samples cannot
perturb the values later samples see. That is what makes policy comparisons
on identical trajectories meaningful.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist

from .core import (
    Arrival,
    ConfigError,
    FreshnessMode,
    ObjectSpec,
    RETRIEVAL_MODES,
    Tick,
    UserTxnSpec,
)
from .policies import (
    ElasticPolicy,
    MKFirmPolicy,
    OnDemandPolicy,
    PeriodicPolicy,
    PolicyConfig,
    PredictionPolicy,
    SimilarityPolicy,
)

RNG_ALGORITHM = "splitmix64-invexp"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_NORMAL = NormalDist()


def stable_key(*parts) -> int:
    """64-bit key from a sha256 of the textual parts; stable across runs,
    platforms, and interpreter hash randomization."""
    h = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


def splitmix64_at(key: int, index: int) -> int:
    """index-th output of a splitmix64 stream seeded with key. Counter based:
    output n is a pure function of (key, n)."""
    z = (key + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def uniform_at(key: int, index: int) -> float:
    """Uniform in the open interval (0, 1)."""
    return ((splitmix64_at(key, index) >> 11) + 0.5) / (1 << 53)


# ---------------------------------------------------------------------------
# value processes


@dataclass
class ConstantProcess:
    value: float = 0.0
    kind: str = "constant"


@dataclass
class RandomWalkProcess:
    start: float = 0.0
    step_sigma: float = 1.0
    seed: int = 0
    kind: str = "randomwalk"


@dataclass
class SinusoidProcess:
    amplitude: float = 1.0
    period_ticks: Tick = 1
    phase: float = 0.0
    offset: float = 0.0
    kind: str = "sinusoid"


ValueProcess = ConstantProcess | RandomWalkProcess | SinusoidProcess


def sample_process(process: ValueProcess, t: Tick, index: int,
                   run_seed: int = 0, object_id: str = "") -> float:
    """Value of the process at time t. For a random walk, `index` is the
    sample ordinal (step count); two queries with the same key and index
    always agree."""
    if isinstance(process, ConstantProcess):
        return float(process.value)
    if isinstance(process, SinusoidProcess):
        angle = 2.0 * math.pi * t / process.period_ticks + process.phase
        return process.amplitude * math.sin(angle) + process.offset
    key = stable_key(run_seed, process.seed, object_id, "walk")
    value = float(process.start)
    for j in range(1, index + 1):
        value += process.step_sigma * _NORMAL.inv_cdf(uniform_at(key, j))
    return value


class ValueSampler:
    """Per-run sampler with memoized random-walk prefixes.

    The walk steps once per declared update period, so the sample at time t
    has ordinal t // period regardless of which policy runs or which instants
    it chooses to sample; that pins the real-world trajectory across policy
    variants of the same seeded workload.
    """

    def __init__(self, seed: int, objects: list[ObjectSpec]):
        self.seed = seed
        self.specs = {o.id: o for o in objects}
        self._walk_cache: dict[str, list[float]] = {}

    def index_at(self, object_id: str, t: Tick) -> int:
        return t // self.specs[object_id].update_period

    def sample(self, object_id: str, t: Tick) -> float:
        obj = self.specs[object_id]
        process = obj.value_process
        if isinstance(process, RandomWalkProcess):
            return self._walk_value(obj, process, self.index_at(object_id, t))
        return sample_process(process, t, 0, self.seed, object_id)

    def _walk_value(self, obj: ObjectSpec, process: RandomWalkProcess,
                    index: int) -> float:
        prefix = self._walk_cache.setdefault(obj.id, [float(process.start)])
        key = stable_key(self.seed, process.seed, obj.id, "walk")
        while len(prefix) <= index:
            j = len(prefix)
            step = process.step_sigma * _NORMAL.inv_cdf(uniform_at(key, j))
            prefix.append(prefix[-1] + step)
        return prefix[index]


# ---------------------------------------------------------------------------
# arrivals


def expand_arrivals(spec: UserTxnSpec, horizon: Tick, seed: int) -> list[Tick]:
    """Release times of the transaction up to the horizon. Poisson gaps are
    exponential by inverse transform, rounded up to whole ticks (so at least
    one tick apart), from a stream keyed on (seed, txn id)."""
    a = spec.arrival
    if a.kind == "oneshot":
        return [a.t] if a.t <= horizon else []
    if a.kind == "periodic":
        return list(range(a.start, horizon + 1, a.period))
    key = stable_key(seed, spec.id, "arrivals")
    times = []
    t = 0
    i = 0
    while True:
        u = uniform_at(key, i)
        gap = max(1, math.ceil(-a.mean_gap * math.log(u)))
        t += gap
        i += 1
        if t > horizon:
            break
        times.append(t)
    return times


# ---------------------------------------------------------------------------
# config model


@dataclass
class SimConfig:
    horizon: Tick
    mode: FreshnessMode
    enforce_admission: bool
    seed: int
    objects: list[ObjectSpec]
    policies: dict[str, PolicyConfig]
    transactions: list[UserTxnSpec]
    name: str = "config"
    rng: str = RNG_ALGORITHM

    def object_table(self) -> dict[str, ObjectSpec]:
        return {o.id: o for o in self.objects}


def validate_config(cfg: SimConfig) -> list[tuple[str, str]]:
    """Every declared invariant, checked; returns the full violation list."""
    errors: list[tuple[str, str]] = []
    if cfg.horizon <= 0:
        errors.append(("horizon", "must be > 0"))
    if cfg.rng != RNG_ALGORITHM:
        errors.append(("rng", f"unsupported generator {cfg.rng!r}"))
    seen = set()
    for i, obj in enumerate(cfg.objects):
        path = f"objects[{i}]"
        if obj.id in seen:
            errors.append((f"{path}.id", f"duplicate object id {obj.id!r}"))
        seen.add(obj.id)
        obj.validate(path, errors)
        policy = cfg.policies.get(obj.id)
        if policy is None:
            errors.append((f"{path}.policy", "missing policy"))
        else:
            policy.validate(f"{path}.policy", errors)
    targets = {float(p.target_utilization)
               for p in cfg.policies.values() if isinstance(p, ElasticPolicy)}
    if len(targets) > 1:
        errors.append(("objects", "elastic objects must share one target_utilization"))
    ids = {o.id for o in cfg.objects}
    seen_t = set()
    for i, txn in enumerate(cfg.transactions):
        path = f"transactions[{i}]"
        if txn.id in seen_t:
            errors.append((f"{path}.id", f"duplicate transaction id {txn.id!r}"))
        seen_t.add(txn.id)
        txn.validate(path, ids, errors)
    return errors


# ---------------------------------------------------------------------------
# JSON parsing

_TOP_KEYS = {"name", "horizon", "mode", "enforce_admission", "seed", "rng",
             "objects", "transactions"}
_OBJECT_KEYS = {"id", "vi", "period", "cost", "access_weight", "max_period",
                "process", "policy"}
_TXN_KEYS = {"id", "read_set", "retrieval", "analysis", "deadline", "arrival",
             "retrieval_mode"}
_PROCESS_KEYS = {
    "constant": {"kind", "value"},
    "randomwalk": {"kind", "start", "step_sigma", "seed"},
    "sinusoid": {"kind", "amplitude", "period", "phase", "offset"},
}
_POLICY_KEYS = {
    "periodic": {"kind"},
    "ondemand": {"kind"},
    "elastic": {"kind", "target_utilization", "elasticity"},
    "mkfirm": {"kind", "m", "k"},
    "similarity": {"kind", "delta"},
    "prediction": {"kind", "predictor", "epsilon"},
}
_ARRIVAL_KEYS = {
    "oneshot": {"kind", "t"},
    "periodic": {"kind", "start", "period"},
    "poisson": {"kind", "mean_gap"},
}


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return (isinstance(x, (int, float)) and not isinstance(x, bool)
            and not (isinstance(x, float) and (math.isnan(x) or math.isinf(x))))


class _Reader:
    """Walks a parsed JSON document collecting typed values and violations."""

    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def fail(self, path, msg):
        self.errors.append((path, msg))

    def check_keys(self, d, allowed, path):
        for k in sorted(set(d) - allowed):
            self.fail(f"{path}.{k}" if path else k, "unknown key")

    def get_int(self, d, key, path, default=None, required=True):
        if key not in d:
            if required and default is None:
                self.fail(f"{path}.{key}" if path else key, "missing")
                return 0
            return default
        v = d[key]
        if not _is_int(v):
            self.fail(f"{path}.{key}" if path else key, "must be an integer")
            return default if default is not None else 0
        return v

    def get_num(self, d, key, path, default=None, required=True):
        if key not in d:
            if required and default is None:
                self.fail(f"{path}.{key}" if path else key, "missing")
                return 0.0
            return default
        v = d[key]
        if not _is_num(v):
            self.fail(f"{path}.{key}" if path else key, "must be a number")
            return default if default is not None else 0.0
        return v

    def get_str(self, d, key, path, default=None, required=True):
        if key not in d:
            if required and default is None:
                self.fail(f"{path}.{key}" if path else key, "missing")
                return ""
            return default
        v = d[key]
        if not isinstance(v, str):
            self.fail(f"{path}.{key}" if path else key, "must be a string")
            return default if default is not None else ""
        return v

    def get_bool(self, d, key, path, default=None, required=True):
        if key not in d:
            if required and default is None:
                self.fail(f"{path}.{key}" if path else key, "missing")
                return False
            return default
        v = d[key]
        if not isinstance(v, bool):
            self.fail(f"{path}.{key}" if path else key, "must be a boolean")
            return bool(default)
        return v


def _parse_process(r: _Reader, d, path) -> ValueProcess:
    if not isinstance(d, dict):
        r.fail(path, "must be an object")
        return ConstantProcess()
    kind = r.get_str(d, "kind", path)
    allowed = _PROCESS_KEYS.get(kind)
    if allowed is None:
        r.fail(f"{path}.kind", f"unknown process kind {kind!r}")
        return ConstantProcess()
    r.check_keys(d, allowed, path)
    if kind == "constant":
        return ConstantProcess(value=r.get_num(d, "value", path))
    if kind == "randomwalk":
        sigma = r.get_num(d, "step_sigma", path)
        if sigma < 0:
            r.fail(f"{path}.step_sigma", "must be >= 0")
        return RandomWalkProcess(start=r.get_num(d, "start", path),
                                 step_sigma=sigma,
                                 seed=r.get_int(d, "seed", path, default=0))
    period = r.get_int(d, "period", path)
    if period <= 0:
        r.fail(f"{path}.period", "must be > 0")
        period = 1
    return SinusoidProcess(amplitude=r.get_num(d, "amplitude", path),
                           period_ticks=period,
                           phase=r.get_num(d, "phase", path, default=0.0),
                           offset=r.get_num(d, "offset", path, default=0.0))


def _parse_policy(r: _Reader, d, path) -> PolicyConfig:
    if not isinstance(d, dict):
        r.fail(path, "must be an object")
        return PeriodicPolicy()
    kind = r.get_str(d, "kind", path)
    allowed = _POLICY_KEYS.get(kind)
    if allowed is None:
        r.fail(f"{path}.kind", f"unknown policy kind {kind!r}")
        return PeriodicPolicy()
    r.check_keys(d, allowed, path)
    if kind == "periodic":
        return PeriodicPolicy()
    if kind == "ondemand":
        return OnDemandPolicy()
    if kind == "elastic":
        e = r.get_num(d, "elasticity", path, required=False)
        return ElasticPolicy(target_utilization=r.get_num(d, "target_utilization", path),
                             elasticity=e)
    if kind == "mkfirm":
        return MKFirmPolicy(m=r.get_int(d, "m", path), k=r.get_int(d, "k", path))
    if kind == "similarity":
        return SimilarityPolicy(delta=r.get_num(d, "delta", path))
    return PredictionPolicy(predictor=r.get_str(d, "predictor", path),
                            epsilon=r.get_num(d, "epsilon", path))


def _parse_arrival(r: _Reader, d, path) -> Arrival:
    if not isinstance(d, dict):
        r.fail(path, "must be an object")
        return Arrival("oneshot", t=0)
    kind = r.get_str(d, "kind", path)
    allowed = _ARRIVAL_KEYS.get(kind)
    if allowed is None:
        r.fail(f"{path}.kind", f"unknown arrival kind {kind!r}")
        return Arrival("oneshot", t=0)
    r.check_keys(d, allowed, path)
    if kind == "oneshot":
        return Arrival("oneshot", t=r.get_int(d, "t", path, default=0))
    if kind == "periodic":
        return Arrival("periodic", start=r.get_int(d, "start", path, default=0),
                       period=r.get_int(d, "period", path))
    return Arrival("poisson", mean_gap=r.get_int(d, "mean_gap", path))


def _parse_duration_map(r: _Reader, d, key, path, read_set) -> dict[str, Tick]:
    if key not in d:
        r.fail(f"{path}.{key}", "missing")
        return {}
    v = d[key]
    if _is_int(v):
        return {oid: v for oid in read_set}
    if not isinstance(v, dict):
        r.fail(f"{path}.{key}", "must be an integer or an object id map")
        return {}
    out = {}
    for oid, ticks in v.items():
        if not _is_int(ticks):
            r.fail(f"{path}.{key}[{oid}]", "must be an integer")
            continue
        out[oid] = ticks
    return out


def config_from_dict(doc: dict) -> SimConfig:
    """Build and fully validate a SimConfig from a parsed JSON document."""
    r = _Reader()
    if not isinstance(doc, dict):
        raise ConfigError([("$", "top level must be an object")])
    r.check_keys(doc, _TOP_KEYS, "")

    mode_s = r.get_str(doc, "mode", "")
    mode = FreshnessMode.CLASSICAL
    if mode_s in (m.value for m in FreshnessMode):
        mode = FreshnessMode(mode_s)
    elif mode_s:
        r.fail("mode", f"must be 'classical' or 'multiversion', got {mode_s!r}")

    objects = []
    policies: dict[str, PolicyConfig] = {}
    raw_objects = doc.get("objects", [])
    if not isinstance(raw_objects, list):
        r.fail("objects", "must be a list")
        raw_objects = []
    for i, od in enumerate(raw_objects):
        path = f"objects[{i}]"
        if not isinstance(od, dict):
            r.fail(path, "must be an object")
            continue
        r.check_keys(od, _OBJECT_KEYS, path)
        oid = r.get_str(od, "id", path)
        obj = ObjectSpec(
            id=oid,
            vi=r.get_int(od, "vi", path),
            update_period=r.get_int(od, "period", path),
            update_cost=r.get_int(od, "cost", path, default=0),
            access_weight=r.get_num(od, "access_weight", path, default=1.0),
            max_period=r.get_int(od, "max_period", path, required=False),
            value_process=_parse_process(r, od.get("process", {"kind": "constant", "value": 0.0}),
                                         f"{path}.process"),
        )
        objects.append(obj)
        if "policy" in od:
            policies[oid] = _parse_policy(r, od["policy"], f"{path}.policy")
        else:
            r.fail(f"{path}.policy", "missing")
            policies[oid] = PeriodicPolicy()

    transactions = []
    raw_txns = doc.get("transactions", [])
    if not isinstance(raw_txns, list):
        r.fail("transactions", "must be a list")
        raw_txns = []
    for i, td in enumerate(raw_txns):
        path = f"transactions[{i}]"
        if not isinstance(td, dict):
            r.fail(path, "must be an object")
            continue
        r.check_keys(td, _TXN_KEYS, path)
        read_set = td.get("read_set", [])
        if not (isinstance(read_set, list) and all(isinstance(x, str) for x in read_set)):
            r.fail(f"{path}.read_set", "must be a list of object ids")
            read_set = []
        transactions.append(UserTxnSpec(
            id=r.get_str(td, "id", path),
            read_set=list(read_set),
            retrieval_time=_parse_duration_map(r, td, "retrieval", path, read_set),
            analysis_time=_parse_duration_map(r, td, "analysis", path, read_set),
            relative_deadline=r.get_int(td, "deadline", path),
            arrival=_parse_arrival(r, td.get("arrival", {"kind": "oneshot", "t": 0}),
                                   f"{path}.arrival"),
            retrieval_mode=r.get_str(td, "retrieval_mode", path, default="source"),
        ))

    cfg = SimConfig(
        horizon=r.get_int(doc, "horizon", ""),
        mode=mode,
        enforce_admission=r.get_bool(doc, "enforce_admission", "", default=False),
        seed=r.get_int(doc, "seed", "", default=0) & _MASK64,
        objects=objects,
        policies=policies,
        transactions=transactions,
        name=r.get_str(doc, "name", "", default="config"),
        rng=r.get_str(doc, "rng", "", default=RNG_ALGORITHM),
    )
    errors = r.errors + validate_config(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(text: str) -> SimConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([("$", f"JSON syntax error: {e.msg} "
                                 f"(line {e.lineno}, column {e.colno})")]) from None
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# canonical emission


def _process_to_dict(p: ValueProcess) -> dict:
    if isinstance(p, ConstantProcess):
        return {"kind": "constant", "value": p.value}
    if isinstance(p, RandomWalkProcess):
        return {"kind": "randomwalk", "start": p.start,
                "step_sigma": p.step_sigma, "seed": p.seed}
    return {"kind": "sinusoid", "amplitude": p.amplitude,
            "period": p.period_ticks, "phase": p.phase, "offset": p.offset}


def _policy_to_dict(p: PolicyConfig) -> dict:
    if isinstance(p, PeriodicPolicy):
        return {"kind": "periodic"}
    if isinstance(p, OnDemandPolicy):
        return {"kind": "ondemand"}
    if isinstance(p, ElasticPolicy):
        d = {"kind": "elastic", "target_utilization": p.target_utilization}
        if p.elasticity is not None:
            d["elasticity"] = p.elasticity
        return d
    if isinstance(p, MKFirmPolicy):
        return {"kind": "mkfirm", "m": p.m, "k": p.k}
    if isinstance(p, SimilarityPolicy):
        return {"kind": "similarity", "delta": p.delta}
    return {"kind": "prediction", "predictor": p.predictor, "epsilon": p.epsilon}


def _arrival_to_dict(a: Arrival) -> dict:
    if a.kind == "oneshot":
        return {"kind": "oneshot", "t": a.t}
    if a.kind == "periodic":
        return {"kind": "periodic", "start": a.start, "period": a.period}
    return {"kind": "poisson", "mean_gap": a.mean_gap}


def config_to_dict(cfg: SimConfig) -> dict:
    objects = []
    for o in cfg.objects:
        od = {
            "id": o.id,
            "vi": o.vi,
            "period": o.update_period,
            "cost": o.update_cost,
            "access_weight": o.access_weight,
            "process": _process_to_dict(o.value_process),
            "policy": _policy_to_dict(cfg.policies[o.id]),
        }
        if o.max_period is not None:
            od["max_period"] = o.max_period
        objects.append(od)
    return {
        "name": cfg.name,
        "horizon": cfg.horizon,
        "mode": cfg.mode.value,
        "enforce_admission": cfg.enforce_admission,
        "seed": cfg.seed,
        "rng": cfg.rng,
        "objects": objects,
        "transactions": [
            {
                "id": t.id,
                "read_set": list(t.read_set),
                "retrieval": dict(t.retrieval_time),
                "analysis": dict(t.analysis_time),
                "deadline": t.relative_deadline,
                "arrival": _arrival_to_dict(t.arrival),
                "retrieval_mode": t.retrieval_mode,
            }
            for t in cfg.transactions
        ],
    }


def emit_config(cfg: SimConfig) -> str:
    """Canonical serialization; parse(emit(cfg)) reproduces cfg exactly."""
    return json.dumps(config_to_dict(cfg), sort_keys=True, indent=2) + "\n"
