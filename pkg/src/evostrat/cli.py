"""Command line entry point: ``evostrat <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 I/O or parse error, 3 internal
invariant violation. ``--config FILE`` reads a JSON object whose keys mirror
flag names (``"budget": 5000``, ``"train-fraction": 0.5``); explicit flags win.
The default output directory comes from ``$EVOSTRAT_OUT_DIR`` (else ``.``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Optional, Sequence

from .benchmark import load_benchmark, generate_benchmark, save_benchmark
from .errors import ConfigurationError, InvariantError, ParseError
from .evolution import EvolutionConfig, evolve, write_trace_csv
from .harness import cross_validate, write_plot_data, write_plot_svg, write_report_csv
from .search import Budget, best_first_search, check_compatible
from .strategy import Kind, load_strategy, save_strategy

OUT_DIR_ENV = "EVOSTRAT_OUT_DIR"
DEFAULT_SEED = 0xC0FFEE

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("evostrat")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int(text: str) -> int:
    """Integer in any base Python accepts (``42``, ``0xC0FFEE``)."""
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None


def _positive(text: str) -> int:
    value = _int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative(text: str) -> int:
    value = _int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {value}")
    return value


def _kind(text: str) -> Kind:
    try:
        return Kind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_search_options(p: argparse.ArgumentParser) -> None:
    # SUPPRESS keeps a top-level --jobs from being reset by the subcommand.
    p.add_argument("--jobs", type=_positive, default=argparse.SUPPRESS)
    p.add_argument("--benchmark", help="benchmark JSON file (required)")
    p.add_argument("--budget", type=_positive, default=10_000, help="max node expansions per search")
    p.add_argument("--wall-clock-ms", type=float, default=None,
                   help="extra per-search time limit; nondeterministic, off by default")


def _add_evolution_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--generations", type=_non_negative, default=40)
    p.add_argument("--seed", type=_non_negative, default=0, help="master seed for mutation")
    p.add_argument("--algorithm1-mode", action="store_true",
                   help="one mutant per survivor (pool of 40) instead of champion-weighted")
    p.add_argument("--out-dir", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evostrat", description="Evolve best-first search strategies.")
    parser.add_argument("--config", help="JSON file with flag defaults")
    parser.add_argument("--jobs", type=_positive, default=None,
                        help="worker threads for fitness evaluation (results do not depend on it)")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-problems", help="generate a benchmark file")
    p.add_argument("--seed", type=_non_negative, default=DEFAULT_SEED)
    p.add_argument("--count", type=_positive, default=65)
    p.add_argument("--name", default=None)
    p.add_argument("--out", default=None, help="output file (default OUT_DIR/benchmark.json)")

    p = sub.add_parser("evolve", help="evolve a strategy on a whole benchmark")
    _add_search_options(p)
    _add_evolution_options(p)
    p.add_argument("--kind", type=_kind, default=Kind.GENERAL)

    p = sub.add_parser("crossval", help="cross-validate evolution on random splits")
    _add_search_options(p)
    _add_evolution_options(p)
    p.add_argument("--kind", type=_kind, action="append", default=None,
                   help="repeatable; default general")
    p.add_argument("--repeats", type=_positive, default=4)
    p.add_argument("--train-fraction", type=_fraction, default=0.5)
    p.add_argument("--split-seed", type=_non_negative, default=0,
                   help="repetition r splits with seed SPLIT_SEED + r")
    p.add_argument("--svg", action="store_true", help="also write plot.svg (needs matplotlib)")

    p = sub.add_parser("eval", help="evaluate one strategy file")
    _add_search_options(p)
    p.add_argument("--strategy", help="strategy JSON file (required)")
    p.add_argument("--out", default=None, help="results CSV (default stdout)")
    return parser


def _config_value(action: argparse.Action, key: str, value):
    if action.type is None or isinstance(value, bool):
        return value
    values = value if isinstance(value, list) else [value]
    try:
        converted = [action.type(str(v)) for v in values]
    except (argparse.ArgumentTypeError, ValueError) as exc:
        raise UsageError(f"config {key}: {exc}") from None
    return converted if isinstance(action, argparse._AppendAction) else converted[0]


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    """Install values from ``--config`` as parser defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, encoding="utf-8") as fh:
            config = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", known.config) from None
    if not isinstance(config, dict):
        raise ParseError("config must be a JSON object", known.config)

    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    targets = [parser] + list(subparsers.choices.values())
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest == "config":
            continue
        matched = False
        for target in targets:
            for action in target._actions:
                if action.dest != dest:
                    continue
                matched = True
                target.set_defaults(**{dest: _config_value(action, key, value)})
        if not matched:
            raise UsageError(f"config: unknown option {key!r}")


def _out_dir(args) -> str:
    out = getattr(args, "out_dir", None) or os.environ.get(OUT_DIR_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _budget(args) -> Budget:
    return Budget(args.budget, args.wall_clock_ms)


def _jobs(args) -> int:
    return args.jobs or 1


def _require(args, *names: str) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required")


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _render(write, *argv) -> str:
    buf = io.StringIO()
    write(*argv, buf)
    return buf.getvalue()


def cmd_gen_problems(args) -> int:
    benchmark = generate_benchmark(args.seed, args.count, name=args.name)
    out = args.out or os.path.join(_out_dir(args), "benchmark.json")
    _atomic_write(out, _render(save_benchmark, benchmark))
    print(f"wrote {len(benchmark)} problems to {out}")
    for category, problems in benchmark.by_category().items():
        depths = [p.planted_depth for p in problems]
        span = f", planted depth {min(depths)}-{max(depths)}" if depths else ""
        print(f"  {category:<20} {len(problems):>3} problems{span}")
    return EXIT_OK


def _evolution_config(args, kind: Kind) -> EvolutionConfig:
    return EvolutionConfig(generations=args.generations, budget=_budget(args), kind=kind,
                           master_seed=args.seed, algorithm1_mode=args.algorithm1_mode)


def cmd_evolve(args) -> int:
    _require(args, "benchmark")
    benchmark = load_benchmark(args.benchmark)
    cfg = _evolution_config(args, args.kind)
    out = _out_dir(args)

    def progress(rec):
        log.info("generation %d: solved %d, rules fired %d", rec.generation,
                 rec.best.solved, rec.best.rules_fired_total)

    trace, strategy = evolve(benchmark.problems, cfg, jobs=_jobs(args), on_generation=progress)
    _atomic_write(os.path.join(out, "trace.csv"), _render(write_trace_csv, trace))
    _atomic_write(os.path.join(out, "strategy.json"), _render(save_strategy, strategy))
    first, last = trace.records[0].best, trace.records[-1].best
    print(f"{cfg.kind.value}: solved {first.solved} -> {last.solved} of {len(benchmark)} "
          f"over {cfg.generations} generations; wrote trace.csv and strategy.json to {out}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    _require(args, "benchmark")
    benchmark = load_benchmark(args.benchmark)
    kinds = list(dict.fromkeys(args.kind or [Kind.GENERAL]))
    out = _out_dir(args)
    reports = []
    for kind in kinds:
        cfg = _evolution_config(args, kind)
        report = cross_validate(benchmark, cfg, args.repeats, args.split_seed,
                                args.train_fraction, jobs=_jobs(args))
        reports.append(report)
        last = cfg.generations
        print(f"{kind.value}: mean validation unsolved {report.mean_validation_unsolved(0):.2f} "
              f"(generation 0) -> {report.mean_validation_unsolved(last):.2f} (generation {last})")
    _atomic_write(os.path.join(out, "report.csv"), _render(write_report_csv, reports))
    _atomic_write(os.path.join(out, "plot_data.csv"), _render(write_plot_data, reports))
    if args.svg:
        write_plot_svg(reports, os.path.join(out, "plot.svg"))
    print(f"wrote report.csv and plot_data.csv to {out}")
    return EXIT_OK


EVAL_COLUMNS = ("problem_id", "solved", "rules_fired", "nodes_expanded")


def cmd_eval(args) -> int:
    _require(args, "benchmark", "strategy")
    benchmark = load_benchmark(args.benchmark)
    strategy = load_strategy(args.strategy)
    if strategy.domain_id != benchmark.domain.domain_id:
        raise ConfigurationError(
            f"strategy domain_id {strategy.domain_id!r} does not match "
            f"benchmark domain_id {benchmark.domain.domain_id!r}"
        )
    check_compatible(benchmark.domain, strategy)
    budget = _budget(args)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVAL_COLUMNS)
    for problem in benchmark.problems:
        o = best_first_search(problem, strategy, budget)
        writer.writerow((problem.problem_id, int(o.solved), o.rules_fired, o.nodes_expanded))
    if args.out:
        _atomic_write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "gen-problems": cmd_gen_problems,
    "evolve": cmd_evolve,
    "crossval": cmd_crossval,
    "eval": cmd_eval,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("evostrat: a subcommand is required")
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as exc:
        print(f"evostrat: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ParseError, ConfigurationError, OSError) as exc:
        print(f"evostrat: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"evostrat: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
