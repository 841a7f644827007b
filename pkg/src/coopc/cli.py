"""Command-line driver: ``coopc compile|run|difftest|bench``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .alpha import alpha_text
from .checker import check
from .difftest import default_corpus_dir, difftest, format_matrix, load_corpus
from .interp import interpret
from .parser import CompileError, parse
from .pipeline import CONTROLS, DATAS, PASS_NAMES, InternalError, PipelineConfig, compile_program
from .printer import program as print_program
from .runtime import CodegenError, format_report, run_event_loop
from .sched import CoopRuntimeError, DeadlockError, World, format_trace

EXIT_OK = 0
EXIT_COMPILE = 1
EXIT_USAGE = 2
EXIT_DIFFTEST = 3
EXIT_DEADLOCK = 4


class UsageError(Exception):
    pass


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _config(args) -> PipelineConfig:
    return PipelineConfig(args.control, args.data,
                          direct_dispatch=not args.no_direct_dispatch,
                          all_vars=args.all_vars)


def _dump_points(specs, config) -> list:
    points = []
    for spec in specs or []:
        key, _, value = spec.partition("=")
        if key != "after" or not value:
            raise UsageError(f"--dump expects after=<pass>, got {spec!r}")
        if value == "all":
            points.extend(config.passes())
            continue
        if value not in PASS_NAMES:
            raise UsageError(f"unknown pass {value!r}; known: {', '.join(PASS_NAMES)}")
        if value not in config.passes():
            raise UsageError(f"pass {value!r} is not part of the {config.name} pipeline")
        points.append(value)
    return points


def _add_pipeline_flags(p):
    p.add_argument("--control", choices=CONTROLS, default="callbacks")
    p.add_argument("--data", choices=DATAS, default="lift")
    p.add_argument("--no-direct-dispatch", action="store_true",
                   help="resume through the dispatch switch instead of goto")
    p.add_argument("--all-vars", action="store_true",
                   help="lift every variable, not only the live ones")


def cmd_compile(args, out) -> int:
    config = _config(args)
    points = _dump_points(args.dump, config)
    prog = check(parse(_read(args.file)))

    def dump(name, stage):
        if name in points:
            text = print_program(stage)
            out.write(f"// after {name}\n")
            out.write(alpha_text(text) if args.alpha else text)

    result = compile_program(prog, config, dump)
    target = Path(args.output) if args.output else Path(args.file).with_suffix(".evir")
    target.write_text(print_program(result.ir, entry=True))
    return EXIT_OK


def _load_world(path):
    return World.parse(_read(path)) if path else None


def cmd_run(args, out) -> int:
    path = Path(args.file)
    world = _load_world(args.world)
    if path.suffix == ".evir":
        if args.interp:
            raise UsageError("--interp needs a .coop source")
        ir = parse(_read(path), internal=True)
        runner = lambda: run_event_loop(ir, args.args, world)
    else:
        prog = check(parse(_read(path)))
        if args.interp:
            runner = lambda: interpret(prog, args.args, world)
        else:
            ir = compile_program(prog, _config(args)).ir
            runner = lambda: run_event_loop(ir, args.args, world)
    try:
        res = runner()
    except DeadlockError as exc:
        out.write(format_trace(exc.trace or []))
        print(f"coopc: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK
    except CoopRuntimeError as exc:     # raised before the run starts, e.g. wrong arity
        raise UsageError(str(exc)) from exc
    out.write(format_trace(res.trace))
    if args.report:
        out.write(format_report(res.report))
    return EXIT_OK


def cmd_difftest(args, out) -> int:
    directory = Path(args.dir) if args.dir else default_corpus_dir()
    if not directory.is_dir():
        raise UsageError(f"no such corpus directory: {directory}")
    entries = load_corpus(directory)
    if not entries:
        raise UsageError(f"no .coop programs in {directory}")
    cells = difftest(entries, jobs=args.jobs)
    out.write(format_matrix(cells))
    return EXIT_OK if all(c.ok for c in cells) else EXIT_DIFFTEST


def cmd_bench(args, out) -> int:
    if args.trials < bench.MIN_TRIALS:
        raise UsageError(f"--trials must be at least {bench.MIN_TRIALS}")
    if args.n < bench.MIN_ITERATIONS:
        raise UsageError(f"--n must be at least {bench.MIN_ITERATIONS}")
    if args.tasks < 1:
        raise UsageError("--tasks must be at least 1")
    results = bench.run_suite(args.suite, args.trials, args.n, args.tasks,
                              timing=not args.counters_only, jobs=args.jobs)
    text = bench.report(results, counters_only=args.counters_only)
    if args.out:
        Path(args.out).write_text(text)
    out.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coopc", description="Coop to EventIR compiler")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="translate a .coop file to EventIR")
    p.add_argument("file")
    _add_pipeline_flags(p)
    p.add_argument("--dump", action="append", metavar="after=PASS",
                   help="print the program after PASS (repeatable; after=all)")
    p.add_argument("--alpha", action="store_true", help="alpha-normalise dumps")
    p.add_argument("-o", "--output", help="output file (default: FILE.evir)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="run a .coop or .evir program")
    p.add_argument("file")
    _add_pipeline_flags(p)
    p.add_argument("--interp", action="store_true", help="use the reference interpreter")
    p.add_argument("--world", help="channel script")
    p.add_argument("--report", action="store_true", help="print counters after the trace")
    p.add_argument("args", nargs="*", type=int, help="entry arguments (after --)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("difftest", help="compare every pipeline with the interpreter")
    p.add_argument("dir", nargs="?", help="corpus directory (default: bundled corpus)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_difftest)

    p = sub.add_parser("bench", help="run benchmarks")
    p.add_argument("--suite", choices=bench.SUITES, default="all")
    p.add_argument("--trials", type=int, default=bench.MIN_TRIALS)
    p.add_argument("--n", type=int, default=bench.MIN_ITERATIONS, help="micro iterations")
    p.add_argument("--tasks", type=int, default=1, help="tic-tac-toe tasks")
    p.add_argument("--counters-only", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="run cells in parallel processes")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # argparse does not forward "--" to a subcommand's positionals
    extra = []
    if "--" in argv:
        cut = argv.index("--")
        argv, extra = argv[:cut], argv[cut + 1:]
    try:
        args = ap.parse_args(argv)
        if extra:
            if args.command != "run":
                ap.error("arguments after -- are only accepted by run")
            try:
                args.args = args.args + [int(a) for a in extra]
            except ValueError:
                ap.error(f"entry arguments must be integers: {' '.join(extra)}")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"coopc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CompileError as exc:
        print(exc.format(getattr(args, "file", "<input>")), file=sys.stderr)
        return EXIT_COMPILE
    except (InternalError, CodegenError) as exc:
        print(f"coopc: internal error: {exc}", file=sys.stderr)
        return EXIT_COMPILE
    except bench.BenchError as exc:
        print(f"coopc: {exc}", file=sys.stderr)
        return EXIT_COMPILE


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
