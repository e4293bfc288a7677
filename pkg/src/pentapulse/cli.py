"""Command-line entry point."""

from __future__ import annotations

import argparse
import copy
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    EXIT_CONFIG,
    ConfigError,
    bundled_scenarios,
    config_from_dict,
    dump_summary,
    read_config_text,
    resonant_config_detunings,
    run_scenario,
)
from .core import SchemeKind

COMMANDS = ("eigen", "transfer", "btransfer", "propagate", "store", "double-store", "check-adiabatic")


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    """``path:start:stop:n`` (inclusive linspace) or ``path:v1,v2,...``."""
    path, _, rest = spec.partition(":")
    if not path or not rest:
        raise ValueError(f"bad sweep '{spec}': expected path:start:stop:n or path:v1,v2,...")
    parts = rest.split(":")
    try:
        if len(parts) == 3:
            n = int(parts[2])
            if n < 1:
                raise ValueError
            values = np.linspace(float(parts[0]), float(parts[1]), n).tolist()
        elif len(parts) == 1:
            values = [float(v) for v in parts[0].split(",")]
        else:
            raise ValueError
    except ValueError:
        raise ValueError(f"bad sweep range in '{spec}'") from None
    return path, values


def apply_override(doc: dict, path: str, value: float) -> dict:
    """Copy of ``doc`` with the dotted ``path`` set to ``value``.

    The pseudo-path ``delta`` sets all four detunings to the resonant pattern
    of the configured scheme.
    """
    out = copy.deepcopy(doc)
    if path == "delta":
        out["detunings"] = resonant_config_detunings(SchemeKind(out["scheme"]), value)
        return out
    keys = path.split(".")
    node = out
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node[k]
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        if last not in node:
            raise KeyError(path)
        old = node[last]
        node[last] = int(round(value)) if isinstance(old, int) and not isinstance(old, bool) else value
    return out


def _run_one(doc: dict, out_dir: str) -> tuple[int, list[str]]:
    try:
        cfg = config_from_dict(doc)
    except ConfigError as exc:
        return EXIT_CONFIG, exc.errors
    res = run_scenario(cfg, out_dir)
    return res.exit_code, res.errors


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pentapulse", description="Five-level atom and pulse-propagation simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("run",):
        s = sub.add_parser(name, help=f"run a {name} scenario" if name != "run" else "run the experiment named in the config")
        s.add_argument("--config", required=True, help="scenario JSON file or bundled scenario name")
        s.add_argument("--out", help="output directory (default: the config 'output' field, else ./out)")
        s.add_argument("--sweep", help="path:start:stop:n or path:v1,v2,... (e.g. delta:10:100:4)")
        s.add_argument("--workers", type=int, default=None, help="processes for --sweep")
    sub.add_parser("list", help="list bundled scenarios")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list":
        for name in bundled_scenarios():
            print(name)
        return 0
    try:
        doc = json.loads(read_config_text(args.config))
    except FileNotFoundError:
        print(f"error: no such config or bundled scenario: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "check-adiabatic" and isinstance(doc, dict):
        doc["experiment"] = "check-adiabatic"
    elif args.command != "run" and isinstance(doc, dict):
        if doc.get("experiment") not in (None, args.command):
            print(f"error: config experiment '{doc.get('experiment')}' does not match command '{args.command}'",
                  file=sys.stderr)
            return EXIT_CONFIG
        doc.setdefault("experiment", args.command)
    out = Path(args.out or (doc.get("output") if isinstance(doc, dict) else None) or "out")

    if not args.sweep:
        code, errors = _run_one(doc, str(out))
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        if code != EXIT_CONFIG and args.command == "check-adiabatic":
            print((out / "summary.json").read_text(encoding="utf-8"), end="")
        return code

    try:
        path, values = parse_sweep(args.sweep)
        docs = [apply_override(doc, path, v) for v in values]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    dirs = [str(out / f"sweep_{i:03d}") for i in range(len(docs))]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(_run_one, docs, dirs))
    index = [{"index": i, "parameter": path, "value": v, "dir": Path(d).name, "exit_code": c, "errors": e}
             for i, (v, d, (c, e)) in enumerate(zip(values, dirs, results))]
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(dump_summary(index), encoding="utf-8")
    for item in index:
        for e in item["errors"]:
            print(f"error [{item['dir']}]: {e}", file=sys.stderr)
    return max(c for c, _ in results)


if __name__ == "__main__":
    sys.exit(main())
