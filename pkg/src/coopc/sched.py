"""Scheduling contract shared by the event loop and the reference interpreter.

Both engines delegate queue management to :class:`Scheduler`, so the wake
orders below hold by construction on both sides of a differential test:

* the ready queue is FIFO; spawned tasks and yields go to its tail;
* timers fire in (deadline, insertion) order;
* io waiters on a (channel, direction) wake in registration order when the
  World script marks the pair ready; a readiness event with no waiter is lost;
* ``cv_signal`` wakes the longest waiter, ``cv_broadcast`` wakes all in order;
  neither yields;
* the virtual clock only advances when the ready queue is empty.

See docs/scheduling.md for the full contract.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field


class CoopRuntimeError(Exception):
    """Error raised by the running program (bad index, division by zero...)."""


class DeadlockError(Exception):
    def __init__(self, parked, trace=None):
        self.parked = sorted(parked)
        self.trace = trace
        super().__init__("deadlock: parked tasks " + ", ".join(str(t) for t in self.parked))


def cdiv(a: int, b: int) -> int:
    if b == 0:
        raise CoopRuntimeError("division by zero")
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def cmod(a: int, b: int) -> int:
    if b == 0:
        raise CoopRuntimeError("division by zero")
    return a - b * cdiv(a, b)


def format_print(fmt: str, args) -> str:
    return fmt % tuple(int(a) for a in args)


# -- trace -------------------------------------------------------------------

def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append("\n" if text[i + 1] == "n" else text[i + 1])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def trace_lines(trace) -> list:
    lines = []
    for ev in trace:
        kind = ev[0]
        if kind == "PRINT":
            lines.append("PRINT " + _escape(ev[1]))
        else:
            lines.append(f"{kind} {ev[1]}")
    return lines


def format_trace(trace) -> str:
    return "".join(line + "\n" for line in trace_lines(trace))


def parse_trace(text: str) -> list:
    trace = []
    for line in text.splitlines():
        kind, _, rest = line.partition(" ")
        if kind == "PRINT":
            trace.append(("PRINT", _unescape(rest)))
        elif kind in ("END", "CLOCK"):
            trace.append((kind, int(rest)))
        else:
            trace.append((kind, rest))
    return trace


# -- world -------------------------------------------------------------------

@dataclass(frozen=True)
class WorldEvent:
    tick: int
    chan: int
    dir: int   # 0 = IN, 1 = OUT


@dataclass
class World:
    events: list = field(default_factory=list)

    def __post_init__(self):
        # stable: same-tick events keep script order
        self.events = sorted(self.events, key=lambda e: e.tick)

    @classmethod
    def parse(cls, text: str) -> "World":
        events = []
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5 or parts[0] != "tick" or parts[2] != "ready" or parts[4] not in ("IN", "OUT"):
                raise ValueError(f"world line {n}: expected 'tick <n> ready <chan> <IN|OUT>'")
            events.append(WorldEvent(int(parts[1]), int(parts[3]), 0 if parts[4] == "IN" else 1))
        return cls(events)

    def format(self) -> str:
        return "".join(f"tick {e.tick} ready {e.chan} {'IN' if e.dir == 0 else 'OUT'}\n"
                       for e in self.events)


# -- allocator ---------------------------------------------------------------

class TrackingAllocator:
    """Counts allocations and releases of heap blocks.

    Blocks are never empty when allocated.  Releasing one empties it, which
    makes a second release detectable and turns any later access into an
    out-of-bounds fault, without keeping a table of live blocks.
    """

    def __init__(self):
        self.allocs = 0
        self.releases = 0
        self.double_releases = 0

    def alloc(self, block):
        self.allocs += 1
        return block

    def release(self, block):
        if block:
            block.clear()
            self.releases += 1
        else:
            self.double_releases += 1

    @property
    def leaks(self) -> int:
        return self.allocs - self.releases


# -- scheduler ---------------------------------------------------------------

class Scheduler:
    """Queues, virtual clock and trace.  Tasks are opaque objects with ``tid``."""

    def __init__(self, world: World = None):
        self.ready = deque()
        self.timers = []
        self.seq = 0
        self.io_waiters = {}
        self.cv_waiters = {}
        self.clock = 0
        self.world = (world or World()).events
        self.wi = 0
        self.trace = []
        self.max_ready = 0
        self.heap = TrackingAllocator()
        self.next_tid = 0
        self.tasks_ended = 0

    def new_tid(self) -> int:
        tid = self.next_tid
        self.next_tid += 1
        return tid

    def make_ready(self, task):
        ready = self.ready
        ready.append(task)
        if len(ready) > self.max_ready:
            self.max_ready = len(ready)

    def sleep(self, ticks: int, task):
        if ticks < 0:
            raise CoopRuntimeError("sleep with negative ticks")
        if ticks == 0:
            self.make_ready(task)
        else:
            self.seq += 1
            heapq.heappush(self.timers, (self.clock + ticks, self.seq, task))

    def io_wait(self, chan: int, direction: int, task):
        if chan < 0 or direction not in (0, 1):
            raise CoopRuntimeError(f"unknown channel {chan}")
        self.io_waiters.setdefault((chan, direction), []).append(task)

    def cv_wait(self, cv: int, task):
        if cv < 0:
            raise CoopRuntimeError(f"unknown condition variable {cv}")
        self.cv_waiters.setdefault(cv, deque()).append(task)

    def cv_signal(self, cv: int):
        if cv < 0:
            raise CoopRuntimeError(f"unknown condition variable {cv}")
        q = self.cv_waiters.get(cv)
        if q:
            self.make_ready(q.popleft())
            if not q:
                del self.cv_waiters[cv]

    def cv_broadcast(self, cv: int):
        if cv < 0:
            raise CoopRuntimeError(f"unknown condition variable {cv}")
        q = self.cv_waiters.pop(cv, None)
        if q:
            for t in q:
                self.make_ready(t)

    def emit(self, text: str):
        self.trace.append(("PRINT", text))

    def task_end(self, tid: int):
        self.tasks_ended += 1
        self.trace.append(("END", tid))

    def parked(self) -> list:
        tids = [t.tid for q in self.io_waiters.values() for t in q]
        tids += [t.tid for q in self.cv_waiters.values() for t in q]
        return tids

    def advance(self) -> bool:
        """Move the clock to the next wake source; False when the run is over."""
        io_parked = any(self.io_waiters.values())
        world_pending = self.wi < len(self.world) and io_parked
        if not self.timers and not world_pending:
            parked = self.parked()
            if parked:
                raise DeadlockError(parked, self.trace)
            return False
        candidates = []
        if self.timers:
            candidates.append(self.timers[0][0])
        if world_pending:
            candidates.append(self.world[self.wi].tick)
        self.clock = max(self.clock, min(candidates))
        timers = self.timers
        while timers and timers[0][0] <= self.clock:
            self.make_ready(heapq.heappop(timers)[2])
        while self.wi < len(self.world) and self.world[self.wi].tick <= self.clock:
            ev = self.world[self.wi]
            self.wi += 1
            for t in self.io_waiters.pop((ev.chan, ev.dir), ()):
                self.make_ready(t)
        return True

    def run(self, resume):
        """Drive ``resume(task)`` until every queue is empty; returns the trace."""
        ready = self.ready
        try:
            while True:
                while ready:
                    resume(ready.popleft())
                if not self.advance():
                    break
        except CoopRuntimeError as exc:
            self.trace.append(("ERROR", str(exc)))
        except (ZeroDivisionError,):
            self.trace.append(("ERROR", "division by zero"))
        except IndexError:
            self.trace.append(("ERROR", "index out of bounds"))
        self.trace.append(("CLOCK", self.clock))
        return self.trace
