"""Differential testing: every pipeline against the reference interpreter.

A corpus is a directory of ``.coop`` programs.  A program's entry arguments
come from a ``// args: 1 2`` header line; a ``<name>.world`` file next to
it, if present, scripts its channels.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .checker import check
from .interp import interpret
from .parser import parse
from .pipeline import PIPELINES, CompileResult, PipelineConfig, compile_program
from .runtime import run_event_loop
from .sched import DeadlockError, World, trace_lines

_ARGS_RE = re.compile(r"^\s*//\s*args:(.*)$", re.MULTILINE)


@dataclass
class CorpusEntry:
    name: str
    path: Path
    source: str
    args: list
    world: Optional[World] = None

    @classmethod
    def load(cls, path) -> "CorpusEntry":
        path = Path(path)
        source = path.read_text()
        m = _ARGS_RE.search(source)
        args = [int(a) for a in m.group(1).split()] if m else []
        wpath = path.with_suffix(".world")
        world = World.parse(wpath.read_text()) if wpath.exists() else None
        return cls(path.stem, path, source, args, world)


def load_corpus(directory) -> list:
    return [CorpusEntry.load(p) for p in sorted(Path(directory).glob("*.coop"))]


def default_corpus_dir() -> Path:
    return Path(__file__).parent / "corpus"


@dataclass
class Outcome:
    """A run's trace, with deadlocks folded in as a final event."""
    trace: list
    report: dict = field(default_factory=dict)

    @property
    def lines(self) -> list:
        return trace_lines(self.trace)


def _guard(run) -> Outcome:
    try:
        res = run()
    except DeadlockError as exc:
        trace = list(exc.trace or []) + [("DEADLOCK", " ".join(map(str, exc.parked)))]
        return Outcome(trace, {})
    return Outcome(res.trace, res.report)


def run_reference(entry: CorpusEntry, prog=None) -> Outcome:
    prog = prog if prog is not None else check(parse(entry.source))
    return _guard(lambda: interpret(prog, entry.args, entry.world))


def run_pipeline(entry: CorpusEntry, config: PipelineConfig, prog=None) -> tuple:
    prog = prog if prog is not None else check(parse(entry.source))
    result: CompileResult = compile_program(prog, config)
    return result, _guard(lambda: run_event_loop(result.ir, entry.args, entry.world))


@dataclass
class Cell:
    program: str
    pipeline: str
    ok: bool
    outcome: Outcome
    divergence: Optional[tuple] = None   # (line number, expected, actual)

    def describe(self) -> str:
        if self.ok:
            return f"{self.program} {self.pipeline}: ok"
        n, want, got = self.divergence
        return f"{self.program} {self.pipeline}: trace line {n}: expected {want!r}, got {got!r}"


def first_divergence(expected: list, actual: list):
    for i in range(max(len(expected), len(actual))):
        a = expected[i] if i < len(expected) else "<end>"
        b = actual[i] if i < len(actual) else "<end>"
        if a != b:
            return (i + 1, a, b)
    return None


def difftest_entry(entry: CorpusEntry, pipelines=PIPELINES) -> tuple:
    """Reference outcome and one cell per pipeline for ``entry``."""
    prog = check(parse(entry.source))
    ref = run_reference(entry, prog)
    cells = []
    for config in pipelines:
        _, out = run_pipeline(entry, config, prog)
        div = first_divergence(ref.lines, out.lines)
        cells.append(Cell(entry.name, config.name, div is None, out, div))
    return ref, cells


def difftest(entries, pipelines=PIPELINES, jobs: int = 1) -> list:
    """All cells for all entries, in corpus order."""
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(difftest_entry, entries, [pipelines] * len(entries)))
    else:
        results = [difftest_entry(e, pipelines) for e in entries]
    return [c for _, cells in results for c in cells]


def format_matrix(cells, pipelines=PIPELINES) -> str:
    names = [p.name for p in pipelines]
    programs = list(dict.fromkeys(c.program for c in cells))
    width = max([len(p) for p in programs] + [7])
    lines = ["program".ljust(width) + "  " + "  ".join(n.ljust(7) for n in names)]
    table = {(c.program, c.pipeline): c for c in cells}
    for prog in programs:
        row = [("pass" if table[(prog, n)].ok else "FAIL").ljust(7) for n in names]
        lines.append(prog.ljust(width) + "  " + "  ".join(row))
    passed = sum(c.ok for c in cells)
    lines.append(f"{passed}/{len(cells)} cells pass")
    for c in cells:
        if not c.ok:
            lines.append(c.describe())
    return "\n".join(lines) + "\n"
