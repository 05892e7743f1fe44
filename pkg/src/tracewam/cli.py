"""Command-line front end: ``tracewam run`` and ``tracewam bench``."""

from __future__ import annotations

import argparse
import sys

from . import bench
from .compiler import CompileError, load_program
from .emulator import Clock, Machine, MachineConfig, MachineError, ResourceExhausted
from .reader import PrologSyntaxError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WRONG_ANSWER = 2
EXIT_COMPILE = 3
EXIT_RESOURCES = 4


def _positive(text):
    n = int(text)
    if n <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return n


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--critical", type=_positive, default=500,
                        help="head entries before a predicate's trace is recorded")
    common.add_argument("--hot", type=_positive, default=1000,
                        help="head entries before the recorded trace is compiled")
    common.add_argument("--no-jit", action="store_true",
                        help="run the default emulator only")
    common.add_argument("--no-mutability", action="store_true",
                        help="a trace that side-exits is dropped instead of rebuilt")
    common.add_argument("--heap-cells", type=_positive, default=1 << 16,
                        help="initial heap size in cells")
    common.add_argument("--max-heap-cells", type=_positive, default=1 << 24,
                        help="the heap never grows beyond this")
    common.add_argument("--trace-dump", action="store_true",
                        help="print every recorded block to stderr")
    common.add_argument("--disasm", action="store_true",
                        help="print each installed specialized emulator to stderr")
    common.add_argument("--stats-out", metavar="PATH", help="write a CSV of the run(s)")
    common.add_argument("--reps", type=_positive, default=None,
                        help="repetitions per benchmark (default 10)")

    p = argparse.ArgumentParser(prog="tracewam", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run a goal against a program")
    r.add_argument("file")
    r.add_argument("-g", "--goal", required=True)
    r.add_argument("--max-solutions", type=_positive, default=None)
    r.add_argument("--expect", action="append", metavar="ANSWER",
                   help="expected answer (repeat for several); mismatch exits 2")
    b = sub.add_parser("bench", parents=[common], help="run the benchmark suite")
    b.add_argument("names", nargs="*", help="benchmarks to run (default: all)")
    return p


def _config(args, jit=None, mutability=None):
    err = sys.stderr
    return dict(
        critical=args.critical, hot=args.hot,
        jit=(not args.no_jit) if jit is None else jit,
        mutability=(not args.no_mutability) if mutability is None else mutability,
        heap_cells=args.heap_cells,
        max_heap_cells=max(args.max_heap_cells, args.heap_cells),
        trace_dump=(lambda line: print(line, file=err)) if args.trace_dump else None,
        disasm_dump=(lambda text: print(text, file=err)) if args.disasm else None,
    )


def cmd_run(args):
    with open(args.file) as f:
        program = load_program(f.read())
    cfg = _config(args)
    m = Machine(program, MachineConfig(**cfg))
    m.clock = Clock()
    result = m.run_query(args.goal, args.max_solutions)
    m.clock.stop()
    answers = result.solutions
    print(" ;\n".join(answers) + "." if answers else "false.")
    if args.stats_out:
        mode = (bench.Mode.DEFAULT_ONLY if args.no_jit else
                bench.Mode.SPEC_NO_MUTABILITY if args.no_mutability else
                bench.Mode.SPEC_WITH_MUTABILITY)
        stats = bench.RunStats(solutions=answers)
        stats.add(m.stats)
        times = bench.TimingBreakdown(**m.clock.totals, total=m.clock.elapsed)
        bench.emit_stats_csv([bench.BenchResult(args.file, mode, times, stats)],
                             args.stats_out)
    if args.expect is not None and answers != args.expect:
        raise bench.WrongAnswer(args.file, bench.Mode.DEFAULT_ONLY if args.no_jit
                                else bench.Mode.SPEC_WITH_MUTABILITY, args.expect, answers)
    return EXIT_OK


def cmd_bench(args):
    unknown = [n for n in args.names if n not in bench.SUITE_BY_NAME]
    if unknown:
        print(f"unknown benchmark(s): {', '.join(unknown)}; "
              f"choose from {', '.join(bench.SUITE_BY_NAME)}", file=sys.stderr)
        return EXIT_ERROR
    specs = [bench.SUITE_BY_NAME[n] for n in args.names] or bench.SUITE
    if args.no_jit:
        modes = [bench.Mode.DEFAULT_ONLY]
    elif args.no_mutability:
        modes = [bench.Mode.DEFAULT_ONLY, bench.Mode.SPEC_NO_MUTABILITY]
    else:
        modes = list(bench.Mode)
    cfg = _config(args)
    del cfg["jit"], cfg["mutability"]     # decided per mode
    results = bench.run_suite(specs, modes, args.reps, **cfg)
    print(f"{'benchmark':<14}{'mode':<22}{'total s':>9}{'speedup':>9}"
          f"{'dispatch':>10}{'guards':>9}{'exits':>7}{'rebuilds':>9}")
    for row in bench.csv_rows(results):
        name, mode, total = row[0], row[1], row[2]
        speedup, dispatches, guards = row[9], row[11], row[12]
        exits = row[13] + row[14]
        print(f"{name:<14}{mode:<22}{total:>9}{speedup:>9}{dispatches:>10}"
              f"{guards:>9}{exits:>7}{row[16]:>9}")
    if args.stats_out:
        bench.emit_stats_csv(results, args.stats_out)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.hot < args.critical:
        print("--hot must be at least --critical", file=sys.stderr)
        return EXIT_ERROR
    handler = cmd_run if args.command == "run" else cmd_bench
    try:
        return handler(args)
    except bench.WrongAnswer as e:
        print(e, file=sys.stderr)
        return EXIT_WRONG_ANSWER
    except (CompileError, PrologSyntaxError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPILE
    except ResourceExhausted as e:
        print(f"resource exhausted: {e}", file=sys.stderr)
        return EXIT_RESOURCES
    except (MachineError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
