"""streamflow command line: generate workflows, simulate scenarios, compare reports."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import structures, workflow as wfmod
from .cloud import CatalogError, default_catalog, load_catalog_file
from .events import CHANGE_RANGES
from .ga import GaParams, UnschedulableError
from .greedy import UnschedulableIncrease
from .simulator import LOWER_BOUND, SCHEDULERS, EventSpec, experiment, write_reports

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSCHEDULABLE = 3

SEED_ENV = "STREAMFLOW_SEED"
DEFAULT_SEED = 2019


class ConfigError(Exception):
    pass


def _resolve_seed(flag: int | None, fallback: int) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return fallback


# -- generate ----------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed, DEFAULT_SEED)
    wf = structures.generate_named(args.structure, args.size, seed)
    doc = wfmod.to_document(wf)
    doc["generator"] = {"structure": args.structure, "size": args.size, "seed": seed}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    return EXIT_OK


# -- simulate ----------------------------------------------------------------------


def _load_workflow(ref, base: Path, seed: int) -> wfmod.StreamWorkflow:
    if isinstance(ref, str):
        path = base / ref
        if not path.exists():
            raise ConfigError(f"workflow not found: {path}")
        return wfmod.load(path)
    if isinstance(ref, dict) and "structure" in ref:
        return structures.generate_named(ref["structure"], ref.get("size", "small"), ref.get("seed", seed))
    raise ConfigError(f"bad workflow reference {ref!r}")


def load_scenario(path: str | Path, args: argparse.Namespace) -> dict:
    """Parse a scenario file and fold in command-line overrides."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"scenario not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    base = p.parent
    seed = _resolve_seed(args.seed, int(doc.get("seed", DEFAULT_SEED)))

    refs = doc.get("workflows", [doc["workflow"]] if "workflow" in doc else None)
    if not refs:
        raise ConfigError("scenario names no workflow")
    workflows = [_load_workflow(r, base, seed) for r in refs]
    for wf in workflows:
        problems = wfmod.validate(wf)
        if problems:
            raise ConfigError(f"invalid workflow {wf.name}: {problems[0]}")

    catalog = load_catalog_file(base / doc["catalog"]) if doc.get("catalog") else default_catalog()

    schedulers = args.scheduler or doc.get("schedulers") or [doc.get("scheduler", "adaptive")]
    if isinstance(schedulers, str):
        schedulers = schedulers.split(",")
    for s in schedulers:
        if s not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {s!r}")

    ev = dict(doc.get("events", {}))
    if args.direction:
        ev["direction"] = args.direction
    if args.range:
        ev["range"] = args.range
    try:
        spec = EventSpec(**ev)
        spec.check()
        ga = GaParams(**doc.get("ga", {}))
        ga.check()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    reps = args.reps if args.reps is not None else int(doc.get("reps", 10))
    horizon = int(doc.get("horizon", 180))
    if reps < 1 or horizon < 1:
        raise ConfigError("reps and horizon must be positive")
    return {
        "workflows": workflows,
        "catalog": catalog,
        "schedulers": schedulers,
        "spec": spec,
        "ga": ga,
        "seed": seed,
        "reps": reps,
        "horizon": horizon,
        "source_rate": doc.get("source_rate"),
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.scenario, args)
    out = Path(args.out or "results")
    for wf in cfg["workflows"]:
        runs = experiment(
            wf,
            cfg["catalog"],
            cfg["schedulers"],
            cfg["spec"],
            cfg["seed"],
            cfg["reps"],
            cfg["horizon"],
            cfg["source_rate"],
            cfg["ga"],
        )
        for name, reports in runs.items():
            write_reports(reports, out / name / wf.name)
            mean = sum(r.total for r in reports) / len(reports)
            print(f"{name:12s} {wf.name:16s} mean total {mean:.4f} cents")
    return EXIT_OK


# -- compare -----------------------------------------------------------------------


def _read_means(directory: Path) -> dict[str, dict]:
    means = {}
    for f in sorted(directory.glob("*/mean_summary.json")):
        doc = json.loads(f.read_text())
        means[doc["workflow"]] = doc
    if not means:
        raise ConfigError(f"no reports under {directory}")
    return means


def compare_table(dirs: list[Path]) -> list[list[str]]:
    tables = [_read_means(d) for d in dirs]
    labels = [d.name for d in dirs]
    ref_idx = next((k for k, t in enumerate(tables) if next(iter(t.values()))["scheduler"] == LOWER_BOUND), 0)
    common = [w for w in tables[0] if all(w in t for t in tables[1:])]
    if not common:
        raise ConfigError("report sets share no workflow")
    header = ["workflow"] + [f"{l}_total" for l in labels] + [f"{l}_ratio" for l in labels]
    rows = [header]
    for w in common:
        totals = [t[w]["total"] for t in tables]
        ref = totals[ref_idx]
        ratios = [x / ref if ref else float("nan") for x in totals]
        rows.append([w] + [f"{x:.6g}" for x in totals] + [f"{r:.4f}" for r in ratios])
    return rows


def cmd_compare(args: argparse.Namespace) -> int:
    dirs = [Path(d) for d in args.report_dirs]
    if len(dirs) < 2:
        raise ConfigError("compare needs at least two report directories")
    for d in dirs:
        if not d.is_dir():
            raise ConfigError(f"report directory not found: {d}")
    rows = compare_table(dirs)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic workflow file")
    g.add_argument("structure", choices=sorted(structures.SIZES))
    g.add_argument("size", choices=("small", "medium", "large"))
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output path (default: stdout)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="run a scenario file")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument(
        "--scheduler",
        action="append",
        choices=SCHEDULERS,
        help="repeat to run several schedulers on paired seeds",
    )
    s.add_argument("--range", choices=("low", "medium", "high"))
    s.add_argument("--direction", choices=sorted(CHANGE_RANGES))
    s.add_argument("--out", help="report directory (default: results)")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="tabulate mean totals of report sets")
    c.add_argument("report_dirs", nargs="+", help="one directory per scheduler")
    c.add_argument("--out", help="also write the table to this CSV file")
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UnschedulableError, UnschedulableIncrease) as exc:
        print(f"streamflow: unschedulable: {exc}", file=sys.stderr)
        return EXIT_UNSCHEDULABLE
    except (ConfigError, CatalogError, wfmod.WorkflowError, FileNotFoundError, ValueError) as exc:
        print(f"streamflow: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
