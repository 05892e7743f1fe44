"""Benchmark harness: the program suite, repeated timed runs, CSV output."""

from __future__ import annotations

import csv
import difflib
import enum
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from statistics import fmean

from .compiler import load_program
from .emulator import COMPONENTS, Clock, Machine, MachineConfig
from .semulator import COMPLETED, ELEMENTARY_BLOCK, GC_EXCEPTION

DEFAULT_SEED = 42


class Mode(enum.Enum):
    DEFAULT_ONLY = "DEFAULT_ONLY"
    SPEC_NO_MUTABILITY = "SPEC_NO_MUTABILITY"
    SPEC_WITH_MUTABILITY = "SPEC_WITH_MUTABILITY"


class WrongAnswer(Exception):
    def __init__(self, name, mode, expected, got):
        self.name, self.mode = name, mode
        self.expected, self.got = expected, got
        diff = "\n".join(difflib.unified_diff(expected, got, "expected", "got", lineterm=""))
        super().__init__(f"{name} [{mode.value}]: wrong answer\n{diff}")


@dataclass
class TimingBreakdown:
    default_emulator: float = 0.0
    overflow: float = 0.0
    garbage_collector: float = 0.0
    monitor_and_trace_builder: float = 0.0
    trace_compiler: float = 0.0
    s_emulator: float = 0.0
    total: float = 0.0

    def components(self):
        return [getattr(self, c) for c in COMPONENTS]

    @classmethod
    def mean(cls, runs):
        return cls(**{f: fmean(getattr(r, f) for r in runs)
                      for f in (*COMPONENTS, "total")})


@dataclass
class RunStats:
    dispatches: int = 0
    type_test_evals: int = 0
    tt_default: int = 0
    tt_spec: int = 0
    guard_evals: int = 0
    head_entries_default: int = 0
    head_entries_spec: int = 0
    side_exits: dict = field(default_factory=lambda: dict.fromkeys(
        (ELEMENTARY_BLOCK, GC_EXCEPTION, COMPLETED), 0))
    rebuilds: int = 0
    reclamations: int = 0
    reclamations_in_semulator: int = 0
    traces_installed: int = 0
    solutions: list = field(default_factory=list)

    def add(self, st):
        for f in ("dispatches", "type_test_evals", "tt_default", "tt_spec", "guard_evals",
                  "head_entries_default", "head_entries_spec", "rebuilds", "reclamations",
                  "reclamations_in_semulator", "traces_installed"):
            setattr(self, f, getattr(self, f) + getattr(st, f))
        for k, v in st.side_exits.items():
            self.side_exits[k] = self.side_exits.get(k, 0) + v

    def check(self):
        if self.side_exits[GC_EXCEPTION] > self.reclamations:
            raise AssertionError("more GC exits than reclamations")
        if self.rebuilds > self.side_exits[ELEMENTARY_BLOCK]:
            raise AssertionError("more rebuilds than elementary exits")


@dataclass
class BenchmarkSpec:
    name: str
    source: str        # file name inside the programs directory, or a path
    goal: str          # template; {n} is the scale, {seed} the data seed
    scale: object
    repetitions: int = 10

    def __post_init__(self):
        parts = self.scale if isinstance(self.scale, tuple) else (self.scale,)
        if not all(isinstance(x, int) and x > 0 for x in parts):
            raise ValueError(f"{self.name}: scale must be positive")
        if self.repetitions < 1:
            raise ValueError(f"{self.name}: need at least one repetition")

    def goal_text(self, seed=None):
        n = self.scale
        if isinstance(n, tuple):
            n = ", ".join(map(str, n))
        return self.goal.format(n=n, seed=seed_from_env() if seed is None else seed)

    def source_text(self):
        if os.path.sep in self.source or os.path.exists(self.source):
            with open(self.source) as f:
                return f.read()
        return resources.files("tracewam.programs").joinpath(self.source).read_text()


# Desk-scale suite.  The published input sizes would take hours in this
# interpreter, so every size is chosen to keep one run around a second.
SUITE = [
    BenchmarkSpec("append", "append.pl", "bench({n}, Len)", 20000),
    BenchmarkSpec("nreverse", "nreverse.pl", "bench({n}, R)", 60),
    BenchmarkSpec("tak", "tak.pl", "bench({n}, A)", (15, 10, 5)),
    BenchmarkSpec("hanoi", "hanoi.pl", "bench({n}, Moves)", 12),
    BenchmarkSpec("quicksort", "quicksort.pl", "bench({n}, {seed}, First, Sum)", 400),
    BenchmarkSpec("binary_trees", "binary_trees.pl", "bench({n}, Long, Total)", 8),
    BenchmarkSpec("nsieve", "nsieve.pl", "bench({n}, C1, C2, C3)", 1200),
    BenchmarkSpec("partial_sums", "partial_sums.pl", "bench({n}, A, B, C, D)", 20000),
    BenchmarkSpec("recursive", "recursive.pl", "bench({n}, A, F, T)", 5),
]
SUITE_BY_NAME = {s.name: s for s in SUITE}


def seed_from_env():
    return int(os.environ.get("TRACEWAM_SEED", DEFAULT_SEED))


def _expected_key(spec, seed):
    return f"{spec.name}|{spec.goal_text(seed)}"


def load_expected():
    try:
        text = resources.files("tracewam.programs").joinpath("expected.json").read_text()
    except FileNotFoundError:
        return {}
    return json.loads(text)


def config_for(mode, **overrides):
    if mode is Mode.DEFAULT_ONLY:
        overrides["jit"] = False
    else:
        overrides.setdefault("jit", True)
        overrides["mutability"] = mode is Mode.SPEC_WITH_MUTABILITY
    return MachineConfig(**overrides)


def run_once(spec, config, seed=None):
    """One fresh machine, one run: (TimingBreakdown, Stats, answers)."""
    program = load_program(spec.source_text())
    m = Machine(program, config)
    m.clock = Clock()
    result = m.run_query(spec.goal_text(seed))
    m.clock.stop()
    t = TimingBreakdown(**m.clock.totals, total=m.clock.elapsed)
    return t, m.stats, result.solutions


def run_benchmark(spec, mode=Mode.SPEC_WITH_MUTABILITY, expected=None, seed=None,
                  repetitions=None, **config):
    """Run ``spec`` sequentially ``repetitions`` times in ``mode``.

    Returns the mean ``TimingBreakdown`` and the ``RunStats`` summed over the
    runs.  Raises ``WrongAnswer`` when a run's answers differ from
    ``expected`` (or from the first run when nothing is expected).
    """
    mode = Mode(mode)
    reps = repetitions or spec.repetitions
    cfg = config_for(mode, **config)
    times = []
    stats = RunStats()
    for _ in range(reps):
        t, st, answers = run_once(spec, cfg, seed)
        if expected is None:
            expected = answers
        if answers != expected:
            raise WrongAnswer(spec.name, mode, expected, answers)
        times.append(t)
        stats.add(st)
    stats.solutions = list(expected)
    stats.type_test_evals = stats.tt_default + stats.tt_spec
    stats.check()
    return TimingBreakdown.mean(times), stats


def compute_speedup(old_time, new_time):
    if old_time <= 0 or new_time <= 0:
        raise ValueError("times must be positive")
    return old_time / new_time


def compute_improvement(speedup):
    return (speedup - 1) * 100


CSV_HEADER = ["name", "mode", "total", *COMPONENTS, "speedup", "improvement",
              "dispatches", "guard_evals", "exits_elementary", "exits_gc",
              "exits_completed", "rebuilds"]


@dataclass
class BenchResult:
    name: str
    mode: Mode
    times: TimingBreakdown
    stats: RunStats


def csv_rows(results):
    baseline = {r.name: r.times.total for r in results if r.mode is Mode.DEFAULT_ONLY}
    rows = []
    for r in results:
        base = baseline.get(r.name)
        speedup = compute_speedup(base, r.times.total) if base else 1.0
        if r.mode is Mode.DEFAULT_ONLY:
            speedup = 1.0
        ex = r.stats.side_exits
        rows.append([r.name, r.mode.value,
                     *(f"{x:.4f}" for x in (r.times.total, *r.times.components(),
                                            speedup, compute_improvement(speedup))),
                     r.stats.dispatches, r.stats.guard_evals,
                     ex[ELEMENTARY_BLOCK], ex[GC_EXCEPTION], ex[COMPLETED],
                     r.stats.rebuilds])
    return rows


def emit_stats_csv(results, path):
    if not results:
        raise ValueError("no benchmark results to write")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        w.writerows(csv_rows(results))
    return path


def run_suite(specs, modes, repetitions=None, seed=None, **config):
    """Run every spec in every mode; answers are checked against the stored
    expected output (or the DEFAULT_ONLY answer when none is stored)."""
    stored = load_expected()
    results = []
    for spec in specs:
        expected = stored.get(_expected_key(spec, seed_from_env() if seed is None else seed))
        for mode in modes:
            times, stats = run_benchmark(spec, mode, expected, seed, repetitions, **config)
            expected = stats.solutions
            results.append(BenchResult(spec.name, Mode(mode), times, stats))
    return results


def write_expected(path, specs=SUITE):
    """Regenerate the stored answers from DEFAULT_ONLY runs."""
    out = {}
    for spec in specs:
        _, stats = run_benchmark(spec, Mode.DEFAULT_ONLY, repetitions=1, seed=DEFAULT_SEED)
        out[_expected_key(spec, DEFAULT_SEED)] = stats.solutions
    with open(path, "w") as f:
        json.dump(out, f, indent=1, sort_keys=True)
        f.write("\n")
    return out
