"""Benchmarks: primitive micro-benchmarks, the tic-tac-toe generator and a
simulated echo service, each compiled under the four pipelines.

Timings are wall-clock medians of repeated runs of the event loop, after
one discarded warm-up run, with the garbage collector paused.  Counter
snapshots (pushes, invokes, allocations) are deterministic and serve as
machine-independent cost proxies.
"""

from __future__ import annotations

import gc
import statistics
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

from .checker import check
from .difftest import default_corpus_dir
from .parser import parse
from .pipeline import PIPELINES, PipelineConfig, compile_program
from .runtime import CompiledProgram, EventLoop
from .sched import World, WorldEvent

MICRO_SOURCES = {
    # one cps call (and return) per iteration
    "cps-call": """
cps int step(int x) {
  return x + 1;
}
cps void main(int n) {
  int i;
  int s = 0;
  for (i = 0; i < n; i++) {
    s = step(s);
  }
  printf("%d\\n", s);
}
""",
    # two tasks yielding to each other n times each
    "switch": """
cps void spinner(int n) {
  int i;
  for (i = 0; i < n; i++) {
    yield();
  }
}
cps void main(int n) {
  spawn spinner(n);
  spawn spinner(n);
}
""",
    # two tasks handing a turn back and forth through condition variables
    "condvar": """
cps void player(int me, int n, int *turn) {
  int i;
  for (i = 0; i < n; i++) {
    while (turn[0] != me) {
      cv_wait(me);
    }
    turn[0] = 1 - me;
    cv_signal(1 - me);
  }
  turn[1] = turn[1] - 1;
  if (turn[1] == 0) {
    free(turn);
  }
}
cps void main(int n) {
  int *turn = malloc(2);
  turn[1] = 2;
  spawn player(0, n, turn);
  spawn player(1, n, turn);
}
""",
    # n short-lived tasks
    "spawn": """
cps void child(int i, int *count) {
  count[0] = count[0] + i % 2;
}
cps void main(int n) {
  int *count = malloc(1);
  int i;
  for (i = 0; i < n; i++) {
    spawn child(i, count);
  }
  yield();
  printf("%d\\n", count[0]);
  free(count);
}
""",
}

MICROS = tuple(MICRO_SOURCES)

ECHO_SOURCE = """
cps int serve(int id, int msgs) {
  int echoed = 0;
  while (echoed < msgs) {
    io_wait(100 + id, IN);
    cpc_sleep(1);
    io_wait(100 + id, OUT);
    echoed++;
  }
  return echoed;
}
cps void conn(int id, int msgs, int *total) {
  int echoed = serve(id, msgs);
  *total = *total + echoed;
}
cps void main(int conns, int msgs) {
  int *total = malloc(1);
  int id;
  for (id = 0; id < conns; id++) {
    io_wait(1, IN);
    spawn conn(id, msgs, total);
  }
  while (*total < conns * msgs) {
    cpc_sleep(1);
  }
  printf("%d\\n", *total);
  free(total);
}
"""

# Ratios of the environment-based translator to the lambda-lifting one,
# as published for x86-64.
PUBLISHED_MICRO_RATIOS = {"cps-call": 2.45, "switch": 1.67, "condvar": 1.13, "spawn": 2.18}
PUBLISHED_TTT_MS = {"manual": (13.2, 11.0), "auto": (31.3, 26.5)}   # (env, lift) per task
PUBLISHED_TTT_RATIOS = {m: env / lift for m, (env, lift) in PUBLISHED_TTT_MS.items()}
TTT_LEAVES = 3 ** 9

MIN_TRIALS = 5
SUITES = ("all", "micro", "ttt", "echo")
MIN_ITERATIONS = 10 ** 4


class BenchError(Exception):
    pass


@dataclass
class BenchResult:
    name: str
    pipeline: str
    trials: int
    median_ns: int
    times_ns: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    work: int = 1          # units the time is divided by (tasks for tic-tac-toe)

    @property
    def per_unit_ns(self) -> float:
        return self.median_ns / self.work


@lru_cache(maxsize=None)
def _compiled(source: str, config: PipelineConfig) -> CompiledProgram:
    return CompiledProgram.build(compile_program(check(parse(source)), config).ir)


def _config(pipeline) -> PipelineConfig:
    return pipeline if isinstance(pipeline, PipelineConfig) else PipelineConfig.parse(pipeline)


def _timed_run(compiled, args, world):
    gc.collect()
    gc.disable()
    try:
        loop = EventLoop(compiled, world)
        t0 = time.perf_counter_ns()
        res = loop.run(args)
        elapsed = time.perf_counter_ns() - t0
    finally:
        gc.enable()
    return elapsed, res


def _measure(name, config, source, args, world, trials, timing, check_run=None, work=1):
    compiled = _compiled(source, config)
    elapsed, res = _timed_run(compiled, args, world)     # warm-up, also the counter run
    if check_run is not None:
        check_run(res)
    times = []
    if timing:
        if trials < MIN_TRIALS:
            raise BenchError(f"at least {MIN_TRIALS} trials are needed")
        for _ in range(trials):
            times.append(_timed_run(compiled, args, world)[0])
    median = int(statistics.median(times)) if times else 0
    return BenchResult(name, config.name, len(times), median, times, res.report, work)


def run_micro(name: str, pipeline, n: int = MIN_ITERATIONS, trials: int = MIN_TRIALS,
              timing: bool = True) -> BenchResult:
    if name not in MICRO_SOURCES:
        raise BenchError(f"unknown micro-benchmark {name!r}")
    if n < MIN_ITERATIONS:
        raise BenchError(f"micro-benchmarks need n >= {MIN_ITERATIONS}")
    return _measure(name, _config(pipeline), MICRO_SOURCES[name], [n], None, trials, timing)


@lru_cache(maxsize=None)
def ttt_source(mode: str) -> str:
    if mode not in ("manual", "auto"):
        raise BenchError(f"unknown tic-tac-toe mode {mode!r}")
    return (default_corpus_dir() / f"ttt_{mode}.coop").read_text()


def leaf_count(trace) -> int:
    """TaskEnd events of generator threads (task 0 is the driver)."""
    return sum(1 for ev in trace if ev[0] == "END" and ev[1] != 0)


def run_tictactoe(mode: str, tasks: int, pipeline, trials: int = MIN_TRIALS,
                  timing: bool = True) -> BenchResult:
    if tasks < 1:
        raise BenchError("tic-tac-toe needs at least one task")

    def check_run(res):
        leaves = leaf_count(res.trace)
        if leaves != tasks * TTT_LEAVES:
            raise BenchError(f"tic-tac-toe {mode}: {leaves} leaves, expected {tasks * TTT_LEAVES}")

    return _measure(f"ttt-{mode}", _config(pipeline), ttt_source(mode), [tasks, 9], None,
                    trials, timing, check_run, work=tasks)


def echo_world(conns: int, msgs: int) -> World:
    """Connections arrive one per tick; every message is readable, then writable."""
    events = [WorldEvent(t, 1, 0) for t in range(1, conns + 1)]
    for j in range(msgs):
        t_in = conns + 2 + 4 * j
        for i in range(conns):
            events.append(WorldEvent(t_in, 100 + i, 0))
            events.append(WorldEvent(t_in + 2, 100 + i, 1))
    return World(events)


def run_echo(pipeline, conns: int = 50, msgs: int = 20, trials: int = MIN_TRIALS,
             timing: bool = True) -> BenchResult:
    def check_run(res):
        if ("PRINT", f"{conns * msgs}\n") not in res.trace:
            raise BenchError("echo: not every message was echoed")

    return _measure("echo", _config(pipeline), ECHO_SOURCE, [conns, msgs],
                    echo_world(conns, msgs), trials, timing, check_run)


def scaling(mode: str, pipeline, sizes=(1, 20), trials: int = MIN_TRIALS,
            min_tasks: int = 5) -> dict:
    """Median time per task for each task count.

    A sample for ``n`` tasks runs the program ``ceil(min_tasks / n)`` times in
    a row, so that short sizes are not timed over a single brief run.  Trials
    of the different sizes are interleaved so that drift in machine speed
    affects every size alike.
    """
    config = _config(pipeline)
    compiled = _compiled(ttt_source(mode), config)
    samples = {n: [] for n in sizes}
    for n in sizes:     # warm-up and leaf check
        _, res = _timed_run(compiled, [n, 9], None)
        if leaf_count(res.trace) != n * TTT_LEAVES:
            raise BenchError(f"tic-tac-toe {mode}: wrong leaf count with {n} tasks")
    reps = {n: -(-min_tasks // n) for n in sizes}
    for _ in range(trials):
        for n in sizes:
            total = sum(_timed_run(compiled, [n, 9], None)[0] for _ in range(reps[n]))
            samples[n].append(total / (n * reps[n]))
    return {n: statistics.median(v) for n, v in samples.items()}


# -- suites and reporting ----------------------------------------------------

def _cell(job):
    kind, name, pipeline, arg, trials, timing = job
    if kind == "micro":
        return run_micro(name, pipeline, arg, trials, timing)
    if kind == "ttt":
        return run_tictactoe(name, arg, pipeline, trials, timing)
    return run_echo(pipeline, trials=trials, timing=timing)


def run_suite(suite: str = "all", trials: int = MIN_TRIALS, n: int = MIN_ITERATIONS,
              tasks: int = 1, timing: bool = True, pipelines=PIPELINES, jobs: int = 1) -> list:
    """Every benchmark of ``suite`` under every pipeline.

    With ``jobs > 1`` the cells run in separate processes, each with its own
    event loop; timings then compete for the CPU.
    """
    if suite not in SUITES:
        raise BenchError(f"unknown suite {suite!r}")
    cells = []
    if suite in ("all", "micro"):
        cells += [("micro", name, p.name, n, trials, timing) for name in MICROS for p in pipelines]
    if suite in ("all", "ttt"):
        cells += [("ttt", mode, p.name, tasks, trials, timing)
                  for mode in ("manual", "auto") for p in pipelines]
    if suite in ("all", "echo"):
        cells += [("echo", "echo", p.name, None, trials, timing) for p in pipelines]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_cell, cells))
    return [_cell(c) for c in cells]


def ratios(results) -> dict:
    """env/lift time ratio per (benchmark, control style)."""
    cells = {(r.name, r.pipeline): r for r in results}
    out = {}
    for (name, pipe), r in cells.items():
        control, data = pipe.split("-")
        if data != "env":
            continue
        lift = cells.get((name, f"{control}-lift"))
        if lift is not None and lift.median_ns and r.median_ns:
            out[(name, control)] = r.per_unit_ns / lift.per_unit_ns
    return out


def published_ratio(name: str):
    if name in PUBLISHED_MICRO_RATIOS:
        return PUBLISHED_MICRO_RATIOS[name]
    if name.startswith("ttt-"):
        return PUBLISHED_TTT_RATIOS.get(name[4:])
    return None


def _soft_checks(rat: dict) -> list:
    notes = []
    for (name, control), value in sorted(rat.items()):
        if name in ("cps-call", "spawn") and value <= 1:
            notes.append(f"note: env/lift ratio {value:.2f} on {name} ({control}) is not above 1")
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return notes


def format_counters(results) -> str:
    names = list(dict.fromkeys(r.name for r in results))
    pipes = list(dict.fromkeys(r.pipeline for r in results))
    cells = {(r.name, r.pipeline): r.counters for r in results}
    head = "benchmark".ljust(12) + "".join(p.rjust(30) for p in pipes)
    lines = ["counters (pushes/invokes/allocs)", head]
    for name in names:
        row = name.ljust(12)
        for p in pipes:
            c = cells.get((name, p))
            row += (f"{c['pushes']}/{c['invokes']}/{c['allocs']}" if c else "-").rjust(30)
        lines.append(row)
    return "\n".join(lines) + "\n"


def report(results, counters_only: bool = False) -> str:
    """Aligned ratio table, counter table and machine-readable lines."""
    out = []
    if not counters_only:
        rat = ratios(results)
        names = list(dict.fromkeys(r.name for r in results))
        out.append("env/lift median time ratio")
        out.append("benchmark".ljust(12) + "callbacks".rjust(12) + "statemachine".rjust(14)
                   + "published".rjust(11))
        for name in names:
            cb = rat.get((name, "cb"))
            sm = rat.get((name, "sm"))
            pr = published_ratio(name)
            out.append(name.ljust(12)
                       + (f"{cb:.2f}" if cb else "-").rjust(12)
                       + (f"{sm:.2f}" if sm else "-").rjust(14)
                       + (f"{pr:.2f}" if pr else "-").rjust(11))
        out.append("")
        out.extend(_soft_checks(rat))
    out.append(format_counters(results))
    for r in results:
        key = f"bench.{r.name}.{r.pipeline}"
        if not counters_only:
            out.append(f"{key}.median_ns={r.median_ns}")
            out.append(f"{key}.trials={r.trials}")
        for c in ("pushes", "invokes", "allocs", "releases"):
            out.append(f"{key}.{c}={r.counters[c]}")
    if not counters_only:
        for (name, control), value in sorted(ratios(results).items()):
            out.append(f"bench.{name}.ratio.{control}={value:.3f}")
    return "\n".join(out) + "\n"
