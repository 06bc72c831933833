"""Command-line interface.

Subcommands:

  run <config> [--trace OUT] [--csv OUT]
      One simulation; prints a summary and the trace hash.
  sweep <config> --param objects[0].vi --values 5,6,10 [--csv OUT]
      One simulation per value of a config path, merged CSV.
  compare <config> [--modes classical,multiversion] [--policies p1,p2] [--csv OUT]
      The same seeded workload under each variant, side by side. Policy
      tokens: periodic | ondemand | elastic[:target] | mkfirm:M:K |
      similarity:DELTA | prediction:{lastvalue|linear}:EPSILON.
  check <config>
      Validation plus the per-transaction feasibility report; exits 0 only
      if the config is valid and every transaction is feasible.

Exit codes: 0 success, 1 validation or feasibility failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from .core import ConfigError, feasibility_check
from .engine import Simulator
from .metrics import CSV_HEADER, emit_csv_rows, emit_trace, trace_hash
from .workload import SimConfig, config_from_dict

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _load_doc(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([("$", f"JSON syntax error: {e.msg} "
                                 f"(line {e.lineno}, column {e.colno})")]) from None
    if isinstance(doc, dict) and "name" not in doc:
        doc["name"] = Path(path).stem
    return doc


def _policy_string(cfg: SimConfig) -> str:
    return "+".join(sorted({p.kind for p in cfg.policies.values()})) or "none"


def _run_once(doc: dict):
    cfg = config_from_dict(doc)
    result = Simulator(cfg).run()
    return cfg, result


# ---------------------------------------------------------------------------
# run


def cmd_run(args) -> int:
    doc = _load_doc(args.config)
    cfg, result = _run_once(doc)
    rows = emit_csv_rows(result.report, cfg.name, cfg.mode.value, _policy_string(cfg))
    csv_text = "\n".join([CSV_HEADER] + rows) + "\n"
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    if args.trace:
        Path(args.trace).write_text(emit_trace(result.trace), encoding="utf-8")
    o = result.report.overall
    print(f"scenario {cfg.name}: mode={cfg.mode.value} policy={_policy_string(cfg)}")
    print(f"  released={o.released} committed={o.committed} missed={o.missed} "
          f"miss_ratio={o.miss_ratio} restarts={o.restarts} vi_restarts={o.vi_restarts}")
    print(f"  updates performed={result.report.updates_performed} "
          f"skipped={result.report.updates_skipped}")
    if result.report.rejected:
        print(f"  rejected at admission: {', '.join(result.report.rejected)}")
    print(f"  trace hash {trace_hash(result.trace)}")
    if not args.csv:
        sys.stdout.write(csv_text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check


def cmd_check(args) -> int:
    doc = _load_doc(args.config)
    cfg = config_from_dict(doc)
    sim = Simulator(cfg)  # applies elastic rescaling to the object table
    all_ok = True
    for txn in cfg.transactions:
        report = feasibility_check(txn, sim.eff_objects)
        for entry in report.entries:
            verdict = "ok" if entry.ok else "INFEASIBLE"
            print(f"txn {txn.id} object {entry.object_id}: vi={entry.vi} "
                  f"retrieval={entry.retrieval} analysis={entry.analysis} "
                  f"[{verdict}]")
        if not report.passed:
            all_ok = False
            print(f"txn {txn.id}: INFEASIBLE "
                  f"({', '.join(report.failing_objects())})")
        else:
            print(f"txn {txn.id}: feasible")
    return EXIT_OK if all_ok else EXIT_INVALID


# ---------------------------------------------------------------------------
# sweep

_PATH_TOKEN = re.compile(r"([A-Za-z_][A-Za-z_0-9]*)|\[(\d+)\]")


def _set_path(doc, path: str, value) -> None:
    tokens = [m.group(1) if m.group(1) is not None else int(m.group(2))
              for m in _PATH_TOKEN.finditer(path)]
    if not tokens:
        raise ConfigError([("param", f"cannot parse path {path!r}")])
    target = doc
    for tok in tokens[:-1]:
        try:
            target = target[tok]
        except (KeyError, IndexError, TypeError):
            raise ConfigError([("param", f"path {path!r} does not resolve")]) from None
    last = tokens[-1]
    try:
        target[last]
    except (KeyError, IndexError, TypeError):
        raise ConfigError([("param", f"path {path!r} does not resolve")]) from None
    target[last] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(args) -> int:
    base = _load_doc(args.config)
    values = [_parse_value(v) for v in args.values.split(",")]
    rows = [CSV_HEADER]
    for value in values:
        doc = json.loads(json.dumps(base))
        _set_path(doc, args.param, value)
        doc["name"] = f"{base.get('name', 'config')}[{args.param}={value}]"
        cfg, result = _run_once(doc)
        rows += emit_csv_rows(result.report, cfg.name, cfg.mode.value,
                              _policy_string(cfg))
    text = "\n".join(rows) + "\n"
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def _parse_policy_token(token: str) -> dict:
    parts = token.split(":")
    kind = parts[0]
    try:
        if kind == "periodic" and len(parts) == 1:
            return {"kind": "periodic"}
        if kind == "ondemand" and len(parts) == 1:
            return {"kind": "ondemand"}
        if kind == "elastic" and len(parts) <= 2:
            target = float(parts[1]) if len(parts) == 2 else 1.0
            return {"kind": "elastic", "target_utilization": target}
        if kind == "mkfirm" and len(parts) == 3:
            return {"kind": "mkfirm", "m": int(parts[1]), "k": int(parts[2])}
        if kind == "similarity" and len(parts) == 2:
            return {"kind": "similarity", "delta": float(parts[1])}
        if kind == "prediction" and len(parts) == 3:
            return {"kind": "prediction", "predictor": parts[1],
                    "epsilon": float(parts[2])}
    except ValueError:
        pass
    raise ConfigError([("policies", f"cannot parse policy token {token!r}")])


def _sampled_values(trace: list[dict]) -> dict:
    seen = {}
    for rec in trace:
        if rec["kind"] == "update_decision":
            seen[(rec["subject"], rec["t"])] = rec["detail"]["sampled"]
        elif rec["kind"] == "access" and rec["detail"]["via"] == "source":
            seen[(rec["detail"]["object"], rec["t"])] = rec["detail"]["value"]
    return seen


def cmd_compare(args) -> int:
    base = _load_doc(args.config)
    modes = args.modes.split(",") if args.modes else [None]
    policies = args.policies.split(",") if args.policies else [None]
    rows = [CSV_HEADER]
    trajectories = []
    for mode in modes:
        for policy_token in policies:
            doc = json.loads(json.dumps(base))
            if mode is not None:
                doc["mode"] = mode
            if policy_token is not None:
                policy = _parse_policy_token(policy_token)
                for od in doc.get("objects", []):
                    if isinstance(od, dict):
                        od["policy"] = dict(policy)
            cfg, result = _run_once(doc)
            label = policy_token if policy_token is not None else _policy_string(cfg)
            rows += emit_csv_rows(result.report, cfg.name, cfg.mode.value, label)
            trajectories.append(((cfg.mode.value, label), _sampled_values(result.trace)))
    # the shared seed pins the value trajectory: any instant sampled by two
    # variants must have produced the same value
    merged: dict = {}
    for (variant, values) in trajectories:
        for key, value in values.items():
            if key in merged and merged[key][1] != value:
                raise ConfigError(
                    [("compare", f"value trajectories diverged at {key}: "
                                 f"{merged[key]} vs {(variant, value)}")])
            merged.setdefault(key, (variant, value))
    text = "\n".join(rows) + "\n"
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freshsim",
        description="Deterministic freshness simulator for real-time temporal data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("config")
    p.add_argument("--trace", help="write line-delimited JSON trace here")
    p.add_argument("--csv", help="write the metrics CSV here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="validate and report feasibility")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="run once per value of a config path")
    p.add_argument("config")
    p.add_argument("--param", required=True,
                   help="config path, e.g. objects[0].vi")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--csv", help="write the merged CSV here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare",
                       help="same workload under mode/policy variants")
    p.add_argument("config")
    p.add_argument("--modes", help="comma-separated: classical,multiversion")
    p.add_argument("--policies", help="comma-separated policy tokens")
    p.add_argument("--csv", help="write the side-by-side CSV here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "compare" and not (args.modes or args.policies):
        print("compare: need --modes and/or --policies", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        return args.func(args)
    except ConfigError as e:
        for path, msg in e.errors:
            print(f"error: {path}: {msg}" if path else f"error: {msg}",
                  file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
