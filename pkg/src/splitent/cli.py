"""Experiment runner: ``splitent run`` and ``splitent replay``.

Artifacts written to ``out_dir``: ``rows.jsonl``, ``rows.csv``,
``summary.csv``, ``report.txt``, ``run.json``, ``curve.csv`` (zf-decay) and ``failures/*.json``
(one replayable dump per failing instance).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .suites import SINGLE_INSTANCE, SUITES

GENERATOR = "PCG64"
DUMP_SCHEMA = "splitent-dump/1"


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


PARSERS = {
    "suite": str, "instances": int, "seed": int, "jobs": int, "out_dir": str,
    "dims": _ints, "cond_cap": float, "p_grid": _floats, "otani_p": float,
    "er_restarts": int, "eof_restarts": int, "iterations": int,
    "family": str, "b": float, "mass": float, "cutoff": float, "grid_n": int,
    "s_min": float, "s_max": float, "s_points": int,
}


def parse_flat(text: str, source: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed values."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), delimiters=("=",))
    try:
        cp.read_string("[config]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: malformed config ({exc.__class__.__name__})") from exc
    out = {}
    for key, raw in cp["config"].items():
        if key not in PARSERS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        try:
            out[key] = PARSERS[key](raw.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {raw!r}") from exc
    return out


def defaults() -> dict:
    text = resources.files("splitent").joinpath("defaults.cfg").read_text()
    return parse_flat(text, "defaults.cfg")


def validate(cfg: dict) -> dict:
    if cfg["suite"] not in SUITES:
        raise ConfigError(f"unknown suite {cfg['suite']!r}; choose from {', '.join(SUITES)}")
    if cfg["instances"] < 1:
        raise ConfigError("instances must be at least 1")
    if cfg["jobs"] < 1:
        raise ConfigError("jobs must be at least 1")
    if len(cfg["dims"]) != 3 or min(cfg["dims"]) < 1:
        raise ConfigError("dims must be three positive integers")
    if cfg["dims"][1] < cfg["dims"][0] * cfg["dims"][2]:
        raise ConfigError("middle dimension must be at least dA·dB")
    if not cfg["p_grid"] or not all(0 < p < 1 for p in cfg["p_grid"]):
        raise ConfigError("p-grid values must lie in (0, 1)")
    if not 0 < cfg["otani_p"] < 1:
        raise ConfigError("otani_p must lie in (0, 1)")
    if cfg["s_min"] <= 0 or cfg["s_max"] <= cfg["s_min"] or cfg["s_points"] < 2:
        raise ConfigError("s-grid needs 0 < s_min < s_max and at least two points")
    return cfg


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _run_instance(suite: str, cfg: dict, index: int, verbose: bool = False):
    rows, payload, details = SUITES[suite](instance_rng(cfg["seed"], index), cfg, verbose)
    for r in rows:
        r["suite"] = suite
        r["instance"] = index
    return index, rows, payload, details


def _normalize(x):
    """JSON round trip so in-memory and on-disk values compare exactly."""
    return json.loads(json.dumps(x))


def _instance_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in ("out_dir", "jobs", "instances")}


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _csv_value(v):
    return json.dumps(v) if isinstance(v, (list, dict)) else v


def write_rows_csv(path: Path, rows: list[dict]) -> None:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_value(r.get(k, "")) for k in keys})


def summarize(rows: list[dict]) -> list[dict]:
    out: dict[str, dict] = {}
    for r in rows:
        s = out.setdefault(r["check"], {"check": r["check"], "rows": 0, "passed": 0, "failed": 0})
        s["rows"] += 1
        s["passed" if r["ok"] else "failed"] += 1
    return list(out.values())


def format_table(summary: list[dict]) -> str:
    width = max([len("check")] + [len(s["check"]) for s in summary])
    lines = [f"{'check':<{width}}  {'rows':>6}  {'passed':>6}  {'failed':>6}  status"]
    for s in summary:
        status = "PASS" if s["failed"] == 0 else "FAIL"
        lines.append(f"{s['check']:<{width}}  {s['rows']:>6}  {s['passed']:>6}  {s['failed']:>6}  {status}")
    return "\n".join(lines)


def make_dump(cfg: dict, index: int, payload: dict, rows: list[dict]) -> dict:
    return {
        "schema": DUMP_SCHEMA,
        "suite": cfg["suite"],
        "index": index,
        "seed": cfg["seed"],
        "generator": GENERATOR,
        "config": _instance_config(cfg),
        "input": payload,
        "rows": rows,
    }


def run_suite(cfg: dict, dump_all: bool = False, stream=None) -> int:
    stream = stream or sys.stdout
    cfg = validate(cfg)
    suite = cfg["suite"]
    n = 1 if suite in SINGLE_INSTANCE else cfg["instances"]
    out = Path(cfg["out_dir"])
    (out / "failures").mkdir(parents=True, exist_ok=True)
    if dump_all:
        (out / "dumps").mkdir(exist_ok=True)

    if cfg["jobs"] > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(_run_instance, [suite] * n, [cfg] * n, range(n)))
    else:
        results = [_run_instance(suite, cfg, i) for i in range(n)]

    # single collector: artifacts are written in instance order
    all_rows = []
    failures = 0
    with (out / "rows.jsonl").open("w") as fh:
        for index, rows, payload, _ in sorted(results, key=lambda t: t[0]):
            rows = _normalize(rows)
            for r in rows:
                fh.write(json.dumps(r) + "\n")
            all_rows += rows
            bad = not all(r["ok"] for r in rows)
            if bad or dump_all:
                dump = make_dump(cfg, index, _normalize(payload), rows)
                target = out / ("failures" if bad else "dumps") / f"{suite}-{index:05d}.json"
                target.write_text(json.dumps(dump, indent=1))
            failures += bad
    write_rows_csv(out / "rows.csv", all_rows)
    curve = [r for r in all_rows if r["check"] == "zf-decay"]
    if curve:
        write_rows_csv(out / "curve.csv", curve)
    summary = summarize(all_rows)
    write_rows_csv(out / "summary.csv", summary)
    table = format_table(summary)
    (out / "report.txt").write_text(table + "\n")
    meta = {"config": cfg, "generator": GENERATOR, "numpy": np.__version__, "instances_run": n,
            "failed_instances": failures}
    (out / "run.json").write_text(json.dumps(meta, indent=1))
    print(table, file=stream)
    print(f"{n} instance(s), {failures} failing; artifacts in {out}", file=stream)
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def load_dump(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise SchemaError(f"cannot read dump: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"dump is not valid JSON: {exc.msg}") from exc
    required = {"schema": str, "suite": str, "index": int, "seed": int, "generator": str,
                "config": dict, "input": dict, "rows": list}
    if not isinstance(data, dict):
        raise SchemaError("dump must be a JSON object")
    for key, typ in required.items():
        if key not in data:
            raise SchemaError(f"dump is missing {key!r}")
        if not isinstance(data[key], typ) or (typ is int and isinstance(data[key], bool)):
            raise SchemaError(f"dump field {key!r} has the wrong type")
    if data["schema"] != DUMP_SCHEMA:
        raise SchemaError(f"unsupported dump schema {data['schema']!r}")
    if data["generator"] != GENERATOR:
        raise SchemaError(f"dump was produced with generator {data['generator']!r}")
    if data["suite"] not in SUITES:
        raise SchemaError(f"unknown suite {data['suite']!r}")
    cfg = defaults()
    cfg.update(data["config"])
    if cfg.get("seed") != data["seed"] or cfg.get("suite") != data["suite"]:
        raise SchemaError("dump config disagrees with its header")
    try:
        validate(cfg)
    except ConfigError as exc:
        raise SchemaError(f"dump config invalid: {exc}") from exc
    data["config"] = cfg
    return data


def replay(path: str | Path, stream=None) -> int:
    stream = stream or sys.stdout
    data = load_dump(path)
    cfg = data["config"]
    _, rows, payload, details = _run_instance(data["suite"], cfg, data["index"], verbose=True)
    rows, payload, details = _normalize(rows), _normalize(payload), _normalize(details)
    same = rows == data["rows"] and payload == data["input"]
    print(f"suite {data['suite']}  instance {data['index']}  seed {data['seed']}  generator {GENERATOR}",
          file=stream)
    for r in rows:
        fields = "  ".join(f"{k}={v}" for k, v in r.items() if k not in ("suite", "instance"))
        print(f"  {'ok  ' if r['ok'] else 'FAIL'} {fields}", file=stream)
    for key, value in details.items():
        print(f"  {key}: {json.dumps(value)}", file=stream)
    if "lemma4_min_eig" in details:
        print(f"  sigma - omega min eigenvalue: {min(details['lemma4_min_eig']):.3e}", file=stream)
    print("reproduced: " + ("identical" if same else "DIFFERS from dump"), file=stream)
    return 0 if same else 3


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="splitent", description="Split-inclusion entropy experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a suite and write artifacts")
    run.add_argument("--config", help="flat key = value file (keys as in defaults.cfg)")
    run.add_argument("--suite")
    run.add_argument("--instances", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--dims", help="comma separated, e.g. 2,4,2")
    run.add_argument("--p-grid", dest="p_grid", help="comma separated, e.g. 0.25,0.5,0.75")
    run.add_argument("--family", choices=["free", "ising", "sinh-gordon"])
    run.add_argument("--b", type=float)
    run.add_argument("--out-dir", dest="out_dir")
    run.add_argument("--jobs", type=int)
    run.add_argument("--dump-all", action="store_true", help="write a replayable dump for every instance")
    rep = sub.add_parser("replay", help="re-execute one dumped instance verbosely")
    rep.add_argument("dump")
    sub.add_parser("defaults", help="print the reference defaults")
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = defaults()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg.update(parse_flat(text, args.config))
    for key in ("suite", "instances", "seed", "family", "b", "out_dir", "jobs"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    try:
        if args.dims is not None:
            cfg["dims"] = _ints(args.dims)
        if args.p_grid is not None:
            cfg["p_grid"] = _floats(args.p_grid)
    except ValueError as exc:
        raise ConfigError(f"bad list value: {exc}") from exc
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_suite(resolve_config(args), dump_all=args.dump_all)
        if args.command == "replay":
            return replay(args.dump)
        print(resources.files("splitent").joinpath("defaults.cfg").read_text(), end="")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
