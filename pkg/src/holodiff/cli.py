"""Command line entry point: ``holodiff run`` and ``holodiff list-catalogue``.

Exit codes: 0 all hard checks pass, 1 some check failed, 2 config parse or
validation error, 3 catalogue resolution error, 4 runtime numeric error.
Nothing is written for codes 2 and 3.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .catalogue import KINDS, CatalogueError, Registry, list_catalogue, make_domain
from .discrete import OrbitCapExceeded, PointEscapesOrbit, WordNotGenerated
from .geometry import DegenerateJacobianError, TrajectoryEscapeError
from .representation import GridCapError, GridSpec
from .suites import DEFAULT_CATALOGUE, DEFAULT_OPTIONS, SUITES, SuiteContext

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("holodiff")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_CATALOGUE, EXIT_NUMERIC = 0, 1, 2, 3, 4
TOP_LEVEL = {"suite", "seed", "domain", "options", "tolerances", "grid", "out", *KINDS}
NUMERIC_ERRORS = (
    ArithmeticError,
    np.linalg.LinAlgError,
    TrajectoryEscapeError,
    OrbitCapExceeded,
    PointEscapesOrbit,
    WordNotGenerated,
)


class ConfigError(ValueError):
    pass


def load_config(path) -> Dict[str, Any]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            cfg = json.loads(raw.decode("utf-8"))
        else:
            cfg = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a table")
    return cfg


def _merge_entries(defaults: List[dict], extra: List[dict]) -> List[dict]:
    out = {e["id"]: e for e in defaults}
    for e in extra:
        out[e["id"]] = e
    return list(out.values())


def _check_option(name, value, default):
    """Loose type check of a user option against the default's type."""
    if default is None or value is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, (int, float)):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, (list, tuple)):
        ok = isinstance(value, list)
    elif isinstance(default, dict):
        ok = isinstance(value, dict)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"option {name!r}: expected {type(default).__name__}, got {type(value).__name__}")


def _resolutions(options) -> List[int]:
    out = []
    for key in ("resolution", "resolutions"):
        v = options.get(key)
        if v is None:
            continue
        for N in v if isinstance(v, list) else [v]:
            if not isinstance(N, int) or isinstance(N, bool) or N < 4:
                raise ConfigError(f"{key}: grid resolutions must be integers >= 4, got {N!r}")
            out.append(N)
    return out


def _letters(obj):
    """Every [field-id, sign] pair found in a nested option value."""
    if isinstance(obj, list):
        if len(obj) == 2 and isinstance(obj[0], str) and isinstance(obj[1], int) and not isinstance(obj[1], bool):
            yield obj
            return
        for x in obj:
            yield from _letters(x)
    elif isinstance(obj, dict):
        for x in obj.values():
            yield from _letters(x)


def prepare(cfg: Dict[str, Any], suite: Optional[str] = None, seed: Optional[int] = None):
    """Validate a parsed config; returns (suite, seed, options, registry)."""
    unknown = set(cfg) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    suite = suite or cfg.get("suite")
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    seed = cfg.get("seed", 0) if seed is None else seed
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    defaults = DEFAULT_OPTIONS[suite]
    options = copy.deepcopy(defaults)
    for section in ("options", "tolerances", "grid"):
        user = cfg.get(section, {})
        if not isinstance(user, dict):
            raise ConfigError(f"[{section}] must be a table")
        for k, v in user.items():
            if k not in defaults:
                raise ConfigError(f"unknown option {k!r} for suite {suite!r}")
            _check_option(k, v, defaults[k])
            options[k] = v
    dom_spec = cfg.get("domain", {})
    if not isinstance(dom_spec, dict):
        raise ConfigError("[domain] must be a table")
    entries = {}
    for kind in KINDS:
        extra = cfg.get(kind, [])
        if not isinstance(extra, list) or not all(isinstance(e, dict) and isinstance(e.get("id"), str) for e in extra):
            raise ConfigError(f"[[{kind}]] entries must be tables with a string id")
        entries[kind] = _merge_entries(DEFAULT_CATALOGUE[kind], extra)
    try:
        domain = make_domain(dom_spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[domain]: {exc}") from None
    for N in _resolutions(options):
        try:
            GridSpec.square(domain, N)
        except GridCapError as exc:
            raise ConfigError(str(exc)) from None
    reg = Registry(domain, entries)
    reg.resolve_all()
    for fid, _ in _letters(options):
        reg.field(fid)
    return suite, seed, options, reg


def run_suite(suite: str, seed: int, options: dict, reg: Registry, threads: int = 1, strict: bool = False) -> dict:
    ctx = SuiteContext(reg, options, seed, threads)
    SUITES[suite](ctx)
    if strict:
        for w in ctx.warnings:
            ctx.flag(f"strict: warning {w}", False)
    return {
        "suite": suite,
        "seed": seed,
        "options": options,
        "checks": ctx.checks,
        "records": ctx.records,
        "warnings": ctx.warnings,
        "passed": all(c["passed"] for c in ctx.checks),
        "_series": ctx.series,
        "_log": ctx.log,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_outputs(out: Path, report: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    series = report.pop("_series", [])
    lines = report.pop("_log", [])
    (out / "report.json").write_text(json.dumps(_jsonable(report), sort_keys=True, indent=1) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "x", "y"])
    for name, x, y in series:
        w.writerow([name, repr(x), repr(y)])
    (out / "data.csv").write_text(buf.getvalue())
    (out / "log.txt").write_text("\n".join(lines) + "\n")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else {}
        suite, seed, options, reg = prepare(cfg, args.suite, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CatalogueError as exc:
        print(f"catalogue error: {exc}", file=sys.stderr)
        return EXIT_CATALOGUE
    out = Path(args.out or cfg.get("out") or f"out/{suite}")
    log.info("running %s (seed %d) into %s", suite, seed, out)
    try:
        report = run_suite(suite, seed, options, reg, max(1, args.threads), args.strict)
    except CatalogueError as exc:
        print(f"catalogue error: {exc}", file=sys.stderr)
        return EXIT_CATALOGUE
    except NUMERIC_ERRORS as exc:
        print(f"numeric error: {type(exc).__name__}: {exc}", file=sys.stderr)
        report = {"suite": suite, "seed": seed, "options": options, "error": f"{type(exc).__name__}: {exc}", "passed": False}
        report["_log"] = [f"ERROR {report['error']}"]
        write_outputs(out, report)
        return EXIT_NUMERIC
    write_outputs(out, report)
    for line in (out / "log.txt").read_text().splitlines():
        print(line)
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_list(args) -> int:
    entries = None
    if args.config:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        entries = {k: cfg.get(k, []) for k in KINDS}
    sys.stdout.write(list_catalogue(entries))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holodiff", description="Flow-algebra representation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment suite")
    r.add_argument("--config", help="TOML or JSON experiment config")
    r.add_argument("--suite", choices=sorted(SUITES), help="overrides the config suite")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory (default out/<suite>)")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--strict", action="store_true", help="warnings become failures")
    r.set_defaults(fn=cmd_run)
    c = sub.add_parser("list-catalogue", help="print the parameterized families")
    c.add_argument("--config", help="also list entries declared in this config")
    c.set_defaults(fn=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.fn(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
