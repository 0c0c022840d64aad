"""Command-line entry point.

Subcommands: validate, simulate, analyze, peff, generate.  All randomness
flows from explicit --seed/--seeds flags; identical flag sets produce
byte-identical outputs for any --jobs value.  Exit codes: 0 success,
1 runtime failure, 2 validation error, 3 model-consistency error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .algorithms import PathProfile, p_eff_avg, p_eff_paths
from .analytic import UnreachableError, invert_for_coverage
from .generator import GeneratorConfig, generate_arrays, write_flow_csv
from .model import DominanceError, SchemaError, WeightError, load_model
from .sweep import SweepSpec, emit_table, run_sweep

__all__ = ["main"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_CONSISTENCY = 3

DEFAULT_COVERAGES = tuple(float(c) for c in range(1, 100)) + (99.9,)


def _float_list(text: str) -> tuple[float, ...]:
    """Comma list with scientific notation, or 'geom:first:ratio:count'."""
    text = text.strip()
    if text.startswith("geom:"):
        _, first, ratio, count = text.split(":")
        first, ratio, count = float(first), float(ratio), int(float(count))
        return tuple(first * ratio ** k for k in range(count))
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(float(tok)) for tok in text.split(",") if tok.strip())


def _count(text: str) -> int:
    return int(float(text))


def _algorithms(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowtab",
        description="Flow-table usage reduction boundaries: simulation and analytics "
        "over flow length/size mixture models.",
    )
    parser.add_argument("--config", help="JSON file of default flag values", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a model file")
    p.add_argument("model")

    p = sub.add_parser("simulate", help="run a multi-seed simulation sweep")
    p.add_argument("--model", default=None)
    p.add_argument("--flows-csv", default=None, help="ingest flows instead of generating")
    p.add_argument("--axis", choices=("length", "size"), default="length")
    p.add_argument("--algorithms", type=_algorithms, default=("first", "threshold", "sampling"))
    p.add_argument("--thresholds", type=_float_list, default=())
    p.add_argument("--probabilities", type=_float_list, default=())
    p.add_argument("--flows", type=_count, default=1_000_000)
    p.add_argument("--seeds", type=_int_list, default=(1,))
    p.add_argument("--duration-model", choices=("equal", "proportional"), default="equal")
    p.add_argument("--coupling", choices=("comonotone", "independent"), default="comonotone")
    p.add_argument("--min-packet", type=_count, default=64)
    p.add_argument("--jobs", type=_count, default=1)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--formats", type=_algorithms, default=("csv",),
                   help="comma set of csv,md,plot")

    p = sub.add_parser("analyze", help="coverage-target inversion curves (analytic)")
    p.add_argument("--model", required=True)
    p.add_argument("--axis", choices=("length", "size"), default="length")
    p.add_argument("--algorithms", type=_algorithms, default=("first", "threshold", "sampling"))
    p.add_argument("--coverages", type=_float_list, default=DEFAULT_COVERAGES)
    p.add_argument("--out", required=True, help="output path prefix")

    p = sub.add_parser("peff", help="effective sampling probability across a path")
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--l-avg", type=float, default=None)
    p.add_argument("--paths", default=None, help="JSON path-profile file")

    p = sub.add_parser("generate", help="write a generated population as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--flows", type=_count, required=True)
    p.add_argument("--seed", type=_count, required=True)
    p.add_argument("--coupling", choices=("comonotone", "independent"), default="comonotone")
    p.add_argument("--min-packet", type=_count, default=64)
    p.add_argument("--out", required=True)
    return parser


def _cmd_validate(args) -> int:
    try:
        model = load_model(args.model)
    except (SchemaError, WeightError, DominanceError) as exc:
        code = EXIT_CONSISTENCY if isinstance(exc, DominanceError) else EXIT_VALIDATION
        print(json.dumps({
            "valid": False,
            "errors": [{"type": type(exc).__name__, "message": str(exc)}],
        }))
        return code
    print(json.dumps({
        "valid": True,
        "name": model.name,
        "avg_flow_length": model.avg_flow_length,
        "avg_flow_size": model.avg_flow_size,
        "avg_packet_size": model.avg_packet_size,
        "max_packet_size": model.max_packet_size,
        "errors": [],
    }))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.model is None and args.flows_csv is None:
        raise ValueError("simulate requires --model or --flows-csv")
    if args.flows_csv is not None and args.model is None:
        raise ValueError("--flows-csv still requires --model for the analytic columns")
    model = load_model(args.model)
    spec = SweepSpec(
        model=model,
        axis=args.axis,
        algorithms=args.algorithms,
        thresholds=args.thresholds,
        probabilities=args.probabilities,
        seeds=args.seeds,
        flow_count=args.flows,
        duration_model=args.duration_model,
        joint_coupling=args.coupling,
        min_packet=args.min_packet,
        jobs=args.jobs,
        population_csv=args.flows_csv,
    )
    result = run_sweep(spec)
    suffix = {"csv": ".csv", "md": ".md", "markdown": ".md", "plot": ".plot.csv", "plotdata": ".plot.csv"}
    fmt_name = {"csv": "csv", "md": "markdown", "markdown": "markdown", "plot": "plotdata", "plotdata": "plotdata"}
    for fmt in args.formats:
        if fmt not in suffix:
            raise ValueError(f"unknown output format {fmt!r}")
        path = args.out + suffix[fmt]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(emit_table(result, fmt_name[fmt]))
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    model = load_model(args.model)
    rows = []
    for target in args.coverages:
        baseline = None
        per_kind = {}
        for kind in ("first", "threshold", "sampling"):
            if kind not in args.algorithms and kind != "first":
                continue
            try:
                param, rep = invert_for_coverage(model, kind, args.axis, target)
                per_kind[kind] = (param, rep)
                if kind == "first":
                    baseline = rep
            except UnreachableError:
                per_kind[kind] = None
        for kind in args.algorithms:
            entry = per_kind.get(kind)
            if entry is None:
                rows.append(f"{kind},{target:g},unreachable,,,,,")
                continue
            param, rep = entry
            if baseline is not None:
                ops_rel = baseline.operations_reduction / rep.operations_reduction
                occ_rel = baseline.occupancy_reduction / rep.occupancy_reduction
                rel = f"{ops_rel:.4f},{occ_rel:.4f}"
            else:
                rel = ","
            rows.append(
                f"{kind},{target:g},{param:.6e},{rep.coverage_pct:.4f},"
                f"{rep.operations_reduction:.4f},{rep.occupancy_reduction:.4f},{rel}"
            )
    path = args.out + ".analytic.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("algorithm,target_coverage,parameter,coverage,ops_reduction,occ_reduction,"
                 "ops_vs_first,occ_vs_first\n")
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_peff(args) -> int:
    if args.paths is not None:
        with open(args.paths, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        paths = tuple(
            (float(p["probability"]), tuple(float(q) for q in p["switch_probabilities"]))
            for p in doc["paths"]
        )
        value = p_eff_paths(PathProfile(paths=paths))
    elif args.p is not None and args.l_avg is not None:
        value = p_eff_avg(args.p, args.l_avg)
    else:
        raise ValueError("peff requires either --paths or both --p and --l-avg")
    print(f"{value:.12g}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    model = load_model(args.model)
    config = GeneratorConfig(
        seed=args.seed,
        flow_count=args.flows,
        joint_coupling=args.coupling,
        min_packet=args.min_packet,
    )
    lengths, sizes = generate_arrays(model, config)
    write_flow_csv(args.out, lengths, sizes)
    print(f"wrote {args.out} ({len(lengths)} flows)")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "peff": _cmd_peff,
    "generate": _cmd_generate,
}


def _apply_config_defaults(parser: argparse.ArgumentParser, defaults: dict) -> None:
    """Seed every (sub)parser with config values; a config-supplied value
    also satisfies an otherwise required flag."""
    stack = [parser]
    while stack:
        p = stack.pop()
        p.set_defaults(**defaults)
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
            elif action.dest in defaults:
                action.required = False


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    # a config file provides defaults; explicit flags win by coming later
    if "--config" in argv:
        idx = argv.index("--config")
        try:
            with open(argv[idx + 1], "r", encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError, IndexError) as exc:
            print(json.dumps({"errors": [{"type": "ConfigError", "message": str(exc)}]}))
            return EXIT_VALIDATION
        defaults = {}
        for key, value in config.items():
            norm = key.replace("-", "_")
            if isinstance(value, str) and norm in ("thresholds", "probabilities", "coverages"):
                value = _float_list(value)
            if isinstance(value, str) and norm == "seeds":
                value = _int_list(value)
            if isinstance(value, list):
                value = tuple(value)
            defaults[norm] = value
        _apply_config_defaults(parser, defaults)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DominanceError as exc:
        print(json.dumps({"errors": [{"type": "DominanceError", "message": str(exc)}]}))
        return EXIT_CONSISTENCY
    except (SchemaError, WeightError) as exc:
        print(json.dumps({"errors": [{"type": type(exc).__name__, "message": str(exc)}]}))
        return EXIT_VALIDATION
    except (ValueError, FileNotFoundError) as exc:
        kind = type(exc).__name__
        print(json.dumps({"errors": [{"type": kind, "message": str(exc)}]}))
        return EXIT_VALIDATION if isinstance(exc, ValueError) else EXIT_RUNTIME
    except OSError as exc:
        print(json.dumps({"errors": [{"type": "OSError", "message": str(exc)}]}))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
