"""Command-line front end.

    sparsedse run --workload mm1 --platform edge --algo sparsemap --budget 2000 --seed 7
    sparsedse enumerate --workload toy4 --platform toy

``--workload`` and ``--platform`` take a file path or the name of a bundled
config (``mm1``, ``edge``, ...).

Exit codes: 0 success, 2 bad arguments or config, 3 no valid design found
within the budget, 4 space too large to enumerate.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .baselines import FIXED_MAPPING, RANDOM_MAPPER, BaselineConfig, run_baseline
from .costmodel import OBJECTIVES
from .evolution import EsConfig, run as run_es
from .genome import decode, format_genome, layout_for
from .oracle import DEFAULT_CAP, SpaceTooLarge, enumerate_space
from .render import render_design
from .search import trace_csv
from .workload import ConfigError, bundled, parse_platform, parse_workload

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_VALID = 3
EXIT_TOO_LARGE = 4

ALGOS = ("sparsemap", "random", "sage", "uniform")


def _resolve(value: str) -> Path:
    path = Path(value)
    if path.exists():
        return path
    for candidate in (bundled(value), bundled(value + ".cfg")):
        if candidate.exists():
            return candidate
    raise ConfigError(f"no such config file or bundled config: {value}")


def _load(args):
    workload = parse_workload(_resolve(args.workload))
    platform = parse_platform(_resolve(args.platform))
    return workload, platform


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_run(args) -> int:
    if args.budget < 1:
        raise ConfigError("--budget must be at least 1")
    workload, platform = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.algo == "sparsemap":
        cfg = EsConfig(total_budget=args.budget, seed=args.seed, objective=args.objective, workers=args.workers)
        if args.population is not None:
            cfg.population_size = args.population
        if args.generations is not None:
            cfg.generations = args.generations
        try:
            cfg.__post_init__()
            result = run_es(workload, platform, cfg)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        kind = {"random": RANDOM_MAPPER, "sage": FIXED_MAPPING, "uniform": "uniform"}[args.algo]
        cfg = BaselineConfig(
            kind=kind, budget=args.budget, seed=args.seed, objective=args.objective, workers=args.workers
        )
        if args.population is not None:
            cfg.batch_size = args.population
        result = run_baseline(workload, platform, cfg)

    layout = layout_for(workload)
    _write(out / "trace.csv", trace_csv(result.trace))
    if result.profile is not None:
        _write(out / "sensitivity.json", result.profile.to_json(layout))
        if args.emit_sensitivity:
            for row in result.profile.to_dict(layout)["genes"]:
                print(f"gene {row['gene']:3d} {row['segment']:7s} S={row['sensitivity']:.6g} {row['class']}")
    for w in result.warnings or []:
        print(f"warning: {w}", file=sys.stderr)

    doc = {
        "algorithm": args.algo,
        "workload": workload.name,
        "platform": platform.name,
        "objective": args.objective,
        "budget": args.budget,
        "seed": args.seed,
        "evaluations": result.evaluations,
        "valid_fraction": result.valid_fraction,
    }
    if not result.found_valid:
        doc["report"] = {"valid": False}
        _write(out / "cost_report.json", _dump_json(doc))
        print("no valid design found within budget", file=sys.stderr)
        return EXIT_NO_VALID

    best = result.best
    mapping, strategy = decode(best.genome, layout, workload)
    doc["genome"] = format_genome(best.genome, layout)
    doc["report"] = best.report.to_dict()
    _write(out / "cost_report.json", _dump_json(doc))
    _write(
        out / "best_design.txt",
        render_design(best.genome, layout, mapping, strategy, best.report, workload, platform),
    )
    print(f"best {args.objective}: {best.report.objective(args.objective)!r} after {result.evaluations} evaluations")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    workload, platform = _load(args)
    try:
        result = enumerate_space(workload, platform, args.objective, cap=args.cap)
    except SpaceTooLarge as exc:
        print(f"refusing to enumerate: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = result.summary()
    summary.update(workload=workload.name, platform=platform.name, objective=args.objective)
    if result.best_genome is None:
        _write(out / "distribution.json", _dump_json(summary))
        print("no valid design point exists", file=sys.stderr)
        return EXIT_NO_VALID
    layout = layout_for(workload)
    mapping, strategy = decode(result.best_genome, layout, workload)
    summary["optimum_genome"] = format_genome(result.best_genome, layout)
    summary["optimum"] = result.best_report.objective(args.objective)
    _write(out / "distribution.json", _dump_json(summary))
    _write(
        out / "optimum.txt",
        render_design(result.best_genome, layout, mapping, strategy, result.best_report, workload, platform),
    )
    print(f"optimum {args.objective}: {summary['optimum']!r} over {result.mappings} mappings")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsedse", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--workload", required=True, help="workload config path or bundled name")
        p.add_argument("--platform", required=True, help="platform config path or bundled name")
        p.add_argument("--objective", choices=OBJECTIVES, default="edp")
        p.add_argument("--out", default="out", help="output directory")

    run = sub.add_parser("run", help="search for the best design")
    common(run)
    run.add_argument("--algo", choices=ALGOS, default="sparsemap")
    run.add_argument("--budget", type=int, default=20000, help="cost-model evaluations")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--population", type=int, help="population size (trace batch size for baselines)")
    run.add_argument("--generations", type=int, help="generation limit and annealing horizon")
    run.add_argument("--workers", type=int, default=0, help="parallel evaluation processes")
    run.add_argument("--emit-sensitivity", action="store_true", help="print the gene sensitivity table")
    run.set_defaults(func=cmd_run)

    enum = sub.add_parser("enumerate", help="exhaustive optimum over distinct design points")
    common(enum)
    enum.add_argument("--cap", type=int, default=DEFAULT_CAP, help="refuse above this many mappings")
    enum.set_defaults(func=cmd_enumerate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
