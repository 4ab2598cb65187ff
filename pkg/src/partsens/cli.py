"""Command line entry point: ``partsens run <config>`` and ``partsens suite <manifest>``.

Exit status: 0 when the experiment ran (whatever the verdict), 2 for config
errors, 3 when a resource cap cut the run short (a partial report is still
written).  ``suite`` returns 1 if any member errored, missed an expectation or
broke a cross-experiment assertion.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, load_manifest
from .report import COMPLETED, ERROR, RESOURCE_LIMIT, Report
from .runner import run_config, system_key

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3

SUMMARY_COLUMNS = ["name", "kind", "system", "partition", "status", "verdict", "expectations", "message"]


def _overrides(args) -> dict:
    return {
        "n_max": args.n_max,
        "seed": args.seed,
        "delta": args.delta,
        "threshold": args.threshold,
        "log_base": args.log_base,
        "cell_cap": args.cell_cap,
    }


def write_report(report: Report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{report.name}.report.json").write_text(report.to_json())
    if report.series is not None:
        (out / f"{report.name}.series.csv").write_text(report.series.to_csv())


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, _overrides(args))
        report = run_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_report(report, Path(args.out))
    print(f"{report.name}: {report.verdict}")
    if report.status == RESOURCE_LIMIT:
        print(f"resource limit: {report.message}", file=sys.stderr)
        return EXIT_RESOURCE
    return EXIT_OK


def _describe(spec: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in spec.items())


def _run_member(path: Path, overrides: dict):
    try:
        cfg = load_config(path, overrides)
    except ConfigError as exc:
        return None, None, str(exc)
    try:
        return cfg, run_config(cfg), ""
    except ConfigError as exc:
        return cfg, None, str(exc)
    except Exception as exc:  # a broken member must not stop the suite
        return cfg, None, f"{type(exc).__name__}: {exc}"


def summary_row(path: Path, cfg: Optional[ExperimentConfig], report: Optional[Report], error: str) -> dict:
    if report is None:
        return {
            "name": cfg.name if cfg else path.stem,
            "kind": cfg.kind if cfg else "",
            "system": _describe(cfg.system) if cfg else "",
            "partition": _describe(cfg.partition) if cfg else "",
            "status": ERROR,
            "verdict": "",
            "expectations": "",
            "message": error,
        }
    met = report.expectations_met
    return {
        "name": report.name,
        "kind": report.kind,
        "system": _describe(cfg.system),
        "partition": _describe(cfg.partition),
        "status": report.status,
        "verdict": report.verdict,
        "expectations": "" if met is None else ("pass" if met else "FAIL"),
        "message": report.message,
    }


def cross_assertions(members: Sequence) -> List[dict]:
    """Checks that link rows of different kinds for the same system."""
    done = [(cfg, rep) for cfg, rep in members if rep is not None and rep.status == COMPLETED]

    def sensitivity_rows(key, partition=None):
        return [
            (c, r) for c, r in done
            if c.kind == "sensitivity" and system_key(c) == key and (partition is None or c.partition == partition)
        ]

    out = []
    for cfg, rep in done:
        key = system_key(cfg)
        if cfg.kind == "aperiodicity" and rep.verdict.startswith("not aperiodic"):
            rows = sensitivity_rows(key)
            out.append({
                "assertion": "periodic-mass-excludes-sensitivity",
                "source": cfg.name,
                "checked": [c.name for c, _ in rows],
                "ok": all(not r.verdict.startswith("SensitiveUpTo") for _, r in rows),
            })
        idem = rep.result.get("idempotent") if cfg.kind == "aperiodicity" else None
        if idem and idem.get("result") == "satisfies_fk_eq_f":
            rows = sensitivity_rows(key)
            out.append({
                "assertion": "idempotent-power-excludes-sensitivity",
                "source": cfg.name,
                "checked": [c.name for c, _ in rows],
                "ok": all(not r.verdict.startswith("SensitiveUpTo") for _, r in rows),
            })
        if cfg.kind == "entropy" and rep.result.get("rates") and rep.result["rates"][-1] > 0.1:
            rows = sensitivity_rows(key, cfg.partition)
            out.append({
                "assertion": "positive-entropy-implies-sensitivity",
                "source": cfg.name,
                "checked": [c.name for c, _ in rows],
                "ok": all(r.verdict.startswith("SensitiveUpTo") for _, r in rows),
            })
        if cfg.kind == "pairwise" and rep.result.get("verdict") == "pairwise-sensitive-up-to-depth":
            rows = [(c, r) for c, r in sensitivity_rows(key) if c.partition.get("type") == "balls"]
            out.append({
                "assertion": "pairwise-sensitivity-implies-ball-partition-sensitivity",
                "source": cfg.name,
                "checked": [c.name for c, _ in rows],
                "ok": all(r.verdict.startswith("SensitiveUpTo") for _, r in rows),
            })
    return out


def cmd_suite(args) -> int:
    try:
        paths, workers = load_manifest(args.manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers:
        workers = args.workers
    out = Path(args.out)
    overrides = _overrides(args)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda p: _run_member(p, overrides), paths))
    rows = []
    for path, (cfg, report, error) in zip(paths, results):
        if report is not None:
            write_report(report, out)
        rows.append(summary_row(path, cfg, report, error))
    assertions = cross_assertions([(c, r) for c, r, _ in results if c is not None])
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.DictWriter(buf, SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    (out / "suite.summary.csv").write_text(buf.getvalue())
    (out / "suite.assertions.json").write_text(json.dumps(assertions, indent=2, sort_keys=True) + "\n")
    for row in rows:
        print(f"[{row['status']}{'/' + row['expectations'] if row['expectations'] else ''}] "
              f"{row['name']}: {row['verdict'] or row['message']}")
    for a in assertions:
        print(f"[{'ok' if a['ok'] else 'FAILED'}] {a['assertion']} ({a['source']})")
    failed = any(r["status"] != COMPLETED or r["expectations"] == "FAIL" for r in rows)
    failed = failed or not all(a["ok"] for a in assertions)
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n-max", type=int, help="override the depth n_max")
    common.add_argument("--seed", type=int, help="override the Monte Carlo seed")
    common.add_argument("--delta", help="override delta (rational string, e.g. 1/10)")
    common.add_argument("--threshold", help="override the sup-cell threshold")
    common.add_argument("--log-base", choices=["e", "2"], help="logarithm base for entropies")
    common.add_argument("--cell-cap", type=int, help="cell-count cap for refinements")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")

    parser = argparse.ArgumentParser(prog="partsens", description="Run partition-sensitivity experiments from YAML configs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run one experiment config")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)
    suite = sub.add_parser("suite", parents=[common], help="run every config listed in a manifest")
    suite.add_argument("manifest")
    suite.add_argument("--workers", type=int, help="concurrent members (default from manifest)")
    suite.set_defaults(func=cmd_suite)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
