"""canonlab command line: run <config>, report <manifest>, list-experiments.

Exit codes: 0 success, 2 invalid config or missing inputs (nothing written),
3 numerical budget exhausted (partial artifacts written, marked incomplete).
Set CANONLAB_THREADS to cap BLAS/OpenMP threads.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy
import yaml
from threadpoolctl import threadpool_limits

from . import __version__, gfcalc
from .experiments import KINDS, RUNNERS, BudgetError

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 2, 3

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_nums = {"type": "array", "items": _num, "minItems": 1}


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


LADDER = {"oneOf": [{"type": "array", "items": _pos, "minItems": 1},
                    _obj({"start": _pos, "stop": _pos, "points": {"type": "integer", "minimum": 2}},
                         ("start", "stop", "points"))]}
COSCALED = _obj({"eps0": _pos, "J0": {"type": "integer", "minimum": 1},
                 "n": {"type": "integer", "minimum": 1}, "dim_cap": {"type": "integer", "minimum": 1},
                 "per_octave": {"type": "integer", "minimum": 1}},
                ("eps0", "J0", "n"))
MODEL = _obj({
    "d": {"type": "integer", "minimum": 1}, "L": _pos, "J": {"type": "integer", "minimum": 0},
    "m": _pos, "n_max": {"type": "integer", "minimum": 0},
    "mollifier": {"enum": sorted(gfcalc.STOCK_MOLLIFIERS)},
    "cutoff": {"oneOf": [{"type": "null"}, _obj({"a": _pos, "b": _pos}, ("a", "b"))]},
    "eps": {"type": "number", "minimum": 0}, "g": _num, "N": {"type": "integer", "minimum": 1},
    "tau": _num, "Q": {"type": "integer", "minimum": 1},
})
RECIPE = _obj({"kind": {"enum": ["vacuum", "packet", "pair", "occupation"]}, "k_center": _num,
               "width": _pos, "k_max": _pos, "vacuum_weight": _num,
               "occupation": {"type": "array", "items": {"type": "array"}}}, ("kind",))
TOLS = {"type": "object", "additionalProperties": _pos}

BLOCKS = {
    "average": _obj({
        "profile": {"enum": ["abs_cos", "abs_cos_log", "constant"]}, "g": _pos, "p": _pos,
        "p_list": {"type": "array", "items": _pos, "minItems": 1}, "constant": _num,
        "ladder": LADDER, "tol": _pos, "method": {"enum": ["auto", "phase", "dyadic"]},
        "per_decade": {"type": "integer", "minimum": 2},
        "expect": _obj({"limit": _num, "limit_tol": _pos,
                        "window": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        "window_tol": _pos}),
    }, ("ladder",)),
    "heaviside": _obj({
        "profiles": {"type": "array", "items": {"enum": sorted(gfcalc.TRANSITIONS)}},
        "include_convolved": {"type": "boolean"}, "eps": {"type": "array", "items": _pos},
        "expect": _num, "tol": _pos, "infinitesimal_ladder": LADDER,
    }),
    "ccr": _obj({
        "J_list": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "n_max_list": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "positions": _nums, "times": _nums, "theta": _num, "tol": _pos,
        "checks": {"type": "array", "items": {"enum": ["ladder", "field", "klein_gordon",
                                                       "translation"]}},
    }),
    "evolve": _obj({
        "checks": {"type": "array", "items": {"enum": ["theorem2", "free_hamiltonian",
                                                       "field_equations", "theorem3",
                                                       "residual_curve"]}},
        "x": _num, "t": _num, "node": _int, "g_list": _nums, "E_zp": _num, "tol": TOLS,
        "ladder": COSCALED,
    }),
    "smatrix": _obj({
        "checks": {"type": "array", "items": {"enum": ["ode", "hille_yoshida"]}},
        "t": _num, "dt": _pos, "tol": _pos, "decomposition_tol": _pos,
        "ratio_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "hy_n": {"type": "array", "items": {"type": "integer", "minimum": 1}},
    }),
    "dyson": _obj({"orders": {"type": "array", "items": {"enum": [1, 2, 3]}}, "g": _pos, "t": _num,
                   "ratio_tol": _pos}),
    "sweep": _obj({
        "F1": RECIPE, "F2": RECIPE, "t": _num, "ladder": COSCALED,
        "mollifiers": {"type": "array", "items": {"enum": sorted(gfcalc.STOCK_MOLLIFIERS)}},
        "mode": {"enum": ["trapezoid", "random"]}, "sharp_regime": {"type": "boolean"},
        "g_zero_check": {"type": "boolean"}, "rerun_check": {"type": "boolean"},
        "mollifier_tol": _pos, "constant_tol": _pos,
    }, ("F1", "F2", "ladder")),
}

SCHEMA = {
    "type": "object",
    "properties": {"kind": {"enum": list(KINDS)}, "name": {"type": "string"},
                   "description": {"type": "string"}, "seed": {"type": "integer", "minimum": 0},
                   "output_dir": {"type": "string"}, "model": MODEL, **BLOCKS},
    "required": ["kind"],
    "additionalProperties": False,
    "allOf": [{"if": {"properties": {"kind": {"const": k}}}, "then": {"required": [k]}}
              for k in ("average", "heaviside", "ccr", "evolve", "smatrix", "dyson", "sweep")],
}


class ConfigError(ValueError):
    pass


def stock_configs() -> dict[str, Path]:
    root = resources.files("canonlab") / "configs"
    return {Path(p.name).stem: Path(str(p)) for p in sorted(root.iterdir(), key=lambda q: q.name)
            if p.name.endswith(".yaml")}


def load_config(ref: str) -> tuple[dict, str]:
    """Read and validate a config; ``ref`` is a path or a stock config name."""
    path = Path(ref)
    if not path.exists():
        stock = stock_configs()
        if ref not in stock:
            raise ConfigError(f"no such config file or stock experiment: {ref}")
        path = stock[ref]
    text = path.read_text()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {loc}: {exc.message}") from exc
    cfg.setdefault("name", path.stem)
    cfg.setdefault("seed", 0)
    return cfg, text


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _encode(name: str, content) -> bytes:
    if name.endswith(".csv"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in content:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue().encode()
    return (json.dumps(_jsonable(content), sort_keys=True, indent=2) + "\n").encode()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def versions() -> dict:
    return {"canonlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def content_hash(manifest: dict) -> str:
    core = {k: v for k, v in manifest.items() if k not in ("started", "wall_time", "content_hash")}
    return _sha256(json.dumps(_jsonable(core), sort_keys=True).encode())


def run(ref: str, out_dir: str | None = None) -> int:
    try:
        cfg, text = load_config(ref)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    target = Path(out_dir or cfg.get("output_dir") or Path("runs") / cfg["name"])
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    threads = os.environ.get("CANONLAB_THREADS")
    limit = int(threads) if threads and threads.isdigit() and int(threads) > 0 else None
    status, message = "ok", None
    try:
        with threadpool_limits(limits=limit):
            outcome = RUNNERS[cfg["kind"]](cfg)
    except BudgetError as exc:
        outcome, status, message = exc.partial, "incomplete", str(exc)
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    wall = time.perf_counter() - t0

    target.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for name, content in sorted(outcome.artifacts.items()):
        data = _encode(name, content)
        (target / name).write_bytes(data)
        artifacts.append({"path": name, "sha256": _sha256(data), "complete": status == "ok"})
    manifest = {
        "name": cfg["name"], "kind": cfg["kind"], "config_hash": _sha256(text.encode()),
        "config": cfg, "seed": cfg["seed"], "versions": versions(), "started": started,
        "wall_time": wall, "status": status, "message": message, "artifacts": artifacts,
        "checks": outcome.checks, "threads": limit,
    }
    manifest["content_hash"] = content_hash(manifest)
    (target / "manifest.json").write_bytes(_encode("manifest.json", manifest))
    failed = [c for c in outcome.checks if not c["passed"]]
    print(f"{cfg['name']}: {status}, {len(outcome.checks) - len(failed)}/{len(outcome.checks)} "
          f"checks passed -> {target / 'manifest.json'}")
    return EXIT_OK if status == "ok" else EXIT_BUDGET


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def report(manifest_path: str, stream=None) -> int:
    stream = stream or sys.stdout
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        print(f"missing manifest: {path}", file=sys.stderr)
        return EXIT_INVALID
    text = path.read_text().strip()
    man = json.loads(text) if text else {}
    arts = man.get("artifacts") or []
    if not arts and not man.get("checks"):
        print("no artifacts", file=stream)
        return EXIT_OK
    print(f"experiment {man.get('name')} ({man.get('kind')}), status {man.get('status')}", file=stream)
    if man.get("message"):
        print(f"  note: {man['message']}", file=stream)
    missing = [a["path"] for a in arts if not (path.parent / a["path"]).exists()]
    if missing:
        print(f"missing artifacts: {', '.join(missing)}", file=sys.stderr)
        return EXIT_INVALID
    checks = man.get("checks", [])
    if checks:
        width = max(len(c["name"]) for c in checks)
        print(f"  {'check'.ljust(width)}  {'value':>14}  {'threshold':>20}  result", file=stream)
        for c in checks:
            res = "ok" if c["passed"] else "VIOLATION"
            print(f"  {c['name'].ljust(width)}  {_fmt(c['value']):>14}  "
                  f"{c['op']} {_fmt(c['threshold']):>17}  {res}", file=stream)
    rep_path = path.parent / "report.json"
    if rep_path.exists():
        rep = json.loads(rep_path.read_text())
        for key in ("limit", "liminf", "limsup"):
            if key in rep:
                print(f"  {key}: {_fmt(rep[key])}", file=stream)
        assoc = rep.get("association")
        if assoc:
            for label, r in assoc["reports"].items():
                print(f"  association [{label}]: limit {_fmt(r['limit'])}, window "
                      f"[{_fmt(r['liminf'])}, {_fmt(r['limsup'])}]", file=stream)
    rec = path.parent / "records.csv"
    if rec.exists():
        rows = list(csv.reader(rec.open()))
        print("  eps           mollifier      amplitude", file=stream)
        for r in rows[1:]:
            print(f"  {float(r[0]):<12.6g}  {r[3]:<13}  {float(r[4]):.12f}", file=stream)
    bad = sum(1 for c in checks if not c["passed"])
    if bad:
        print(f"  {bad} invariant violation(s) recorded", file=stream)
    return EXIT_OK


def list_experiments(stream=None) -> int:
    stream = stream or sys.stdout
    for name, path in stock_configs().items():
        cfg = yaml.safe_load(path.read_text())
        print(f"{name:<34} {cfg['kind']:<10} {cfg.get('description', '')}", file=stream)
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="canonlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config (path or stock name)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config output_dir or runs/<name>)")
    rp = sub.add_parser("report", help="summarize a run manifest")
    rp.add_argument("manifest")
    sub.add_parser("list-experiments", help="list the stock configs")
    args = ap.parse_args(argv)
    if args.cmd == "run":
        return run(args.config, args.out)
    if args.cmd == "report":
        return report(args.manifest)
    return list_experiments()


if __name__ == "__main__":
    sys.exit(main())
