"""Command-line front end.

Commands: gen-corpus, run, compare, validate-trace. Exit codes: 0 success,
2 usage error, 3 validation failure, 4 runtime contract violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    ContractViolationError,
    ReplayUnderrunError,
    StddError,
    StructuralError,
)
from .harness import (
    STRATEGY_NAMES,
    execute_compare,
    execute_run,
    gen_corpus,
    load_corpus_dir,
    template_from_dict,
    validate_report,
    write_report,
)
from .synth import CorpusTemplate
from .trace import validate_trace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_CONTRACT = 4


def _parse_strategy_arg(arg: str) -> dict:
    """Parse ``name`` or ``name:key=value,key=value`` into a strategy config."""
    name, _, rest = arg.partition(":")
    if name not in STRATEGY_NAMES:
        raise ConfigError(f"unknown strategy {name!r}; expected one of {STRATEGY_NAMES}")
    cfg: dict = {"name": name, "params": {}}
    if rest:
        for pair in rest.split(","):
            key, sep, value = pair.partition("=")
            if not sep:
                raise ConfigError(f"bad strategy parameter {pair!r}, expected key=value")
            if key == "preset":
                cfg["preset"] = value
                continue
            if key == "label":
                cfg["label"] = value
                continue
            cfg["params"][key] = _coerce(value)
    return cfg


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stdd",
        description="Remasking-strategy simulator for diffusion language model decoding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-corpus", help="write seeded synthetic spec files")
    p_gen.add_argument("--template", type=Path, help="corpus template JSON file")
    p_gen.add_argument("--count", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", type=Path, required=True, help="output directory")

    p_run = sub.add_parser("run", help="run one sequence under one strategy")
    p_run.add_argument("--config", type=Path, help="run config JSON (flags override)")
    p_run.add_argument("--spec", type=Path, help="synthetic spec file")
    p_run.add_argument("--trace", type=Path, help="trace file to replay")
    p_run.add_argument("--strategy", help="stdd | fixed | dus, with optional :key=value,... params")
    p_run.add_argument("--max-steps", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", type=Path, help="report output path")

    p_cmp = sub.add_parser("compare", help="compare strategies over a shared corpus")
    p_cmp.add_argument("--config", type=Path, help="compare config JSON (flags override)")
    p_cmp.add_argument("--corpus", type=Path, help="directory of spec-*.json files")
    p_cmp.add_argument("--trace", type=Path, action="append", help="trace file (repeatable)")
    p_cmp.add_argument(
        "--strategy",
        action="append",
        default=None,
        help="strategy entry, repeatable; name with optional :key=value,... params",
    )
    p_cmp.add_argument("--baseline", help="label of the baseline strategy")
    p_cmp.add_argument("--max-steps", type=int)
    p_cmp.add_argument("--out", type=Path, help="report output path")

    p_val = sub.add_parser("validate-trace", help="check a trace file's invariants")
    p_val.add_argument("path", type=Path)

    return parser


def _cmd_gen_corpus(args) -> int:
    if args.count < 1:
        print("gen-corpus: --count must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    template = CorpusTemplate()
    if args.template is not None:
        template = template_from_dict(_load_json(args.template))
    paths = gen_corpus(template, args.count, args.seed, args.out)
    print(f"wrote {len(paths)} spec files to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config: dict = {}
    if args.config is not None:
        config = _load_json(args.config)
    if args.spec is not None and args.trace is not None:
        print("run: give exactly one of --spec or --trace", file=sys.stderr)
        return EXIT_USAGE
    if args.spec is not None:
        config["source"] = {"kind": "synth", "spec": _load_json(args.spec)}
    elif args.trace is not None:
        config["source"] = {"kind": "trace", "path": str(args.trace)}
    if "source" not in config:
        print("run: no source given (use --spec, --trace, or --config)", file=sys.stderr)
        return EXIT_USAGE
    if args.strategy is not None:
        try:
            config["strategy"] = _parse_strategy_arg(args.strategy)
        except ConfigError as exc:
            print(f"run: {exc}", file=sys.stderr)
            return EXIT_USAGE
    config.setdefault("strategy", {"name": "stdd"})
    if args.max_steps is not None:
        config["max_steps"] = args.max_steps
    if args.seed is not None:
        config["seed"] = args.seed

    report = execute_run(config)
    if args.out is not None:
        write_report(args.out, report)
    m = report["metrics"]
    fid = "n/a" if m["fidelity"] is None else f"{m['fidelity']:.4f}"
    print(
        f"run: strategy={report['config']['strategy']['name']} "
        f"steps_used={m['steps_used']} "
        f"mean_decoded_per_step={m['mean_decoded_per_step']:.3f} "
        f"remasks={m['remask_count']} forced={m['force_decode_count']} "
        f"fidelity={fid}"
    )
    return EXIT_OK


def _cmd_compare(args) -> int:
    config: dict = {}
    if args.config is not None:
        config = _load_json(args.config)
    if args.corpus is not None and args.trace:
        print("compare: give either --corpus or --trace, not both", file=sys.stderr)
        return EXIT_USAGE
    if args.corpus is not None:
        config["corpus"] = load_corpus_dir(args.corpus)
    elif args.trace:
        config["corpus"] = [{"kind": "trace", "path": str(p)} for p in args.trace]
    if args.strategy:
        try:
            config["strategies"] = [_parse_strategy_arg(s) for s in args.strategy]
        except ConfigError as exc:
            print(f"compare: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.baseline is not None:
        config["baseline"] = args.baseline
    if args.max_steps is not None:
        config["max_steps"] = args.max_steps
    if "corpus" not in config:
        print("compare: no corpus given (use --corpus, --trace, or --config)", file=sys.stderr)
        return EXIT_USAGE
    if len(config.get("strategies") or []) < 2:
        print("compare: need at least two --strategy entries", file=sys.stderr)
        return EXIT_USAGE

    report = execute_compare(config)
    if args.out is not None:
        write_report(args.out, report)
    baseline = report["baseline"]
    for label, agg in report["aggregates"].items():
        line = (
            f"compare: {label}: mean_steps={agg['mean_steps']:.2f} "
            f"mean_fidelity={agg['mean_fidelity']:.4f}"
        )
        if label != baseline:
            line += (
                f" median_speedup={agg['median_speedup']:.2f}x"
                f" mean_speedup={agg['mean_speedup']:.2f}x"
                f" fidelity_delta={agg['fidelity_delta']:+.4f}"
            )
        print(line)
    return EXIT_OK


def _cmd_validate_trace(args) -> int:
    problems = validate_trace(args.path)
    if not problems:
        print(f"{args.path}: ok")
        return EXIT_OK
    for p in problems:
        print(f"{args.path}: {p}", file=sys.stderr)
    return EXIT_VALIDATION


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "gen-corpus":
            return _cmd_gen_corpus(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "validate-trace":
            return _cmd_validate_trace(args)
        parser.error(f"unknown command {args.command!r}")
        return EXIT_USAGE
    except (ContractViolationError, ReplayUnderrunError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (ConfigError, StructuralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
