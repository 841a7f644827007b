"""Scheduling contract, checked on the interpreter and on every pipeline."""

import pytest

from coopc.difftest import CorpusEntry, run_pipeline, run_reference
from coopc.pipeline import PIPELINES
from coopc.sched import World

from conftest import COUNTDOWN, COUNTDOWN_TRACE

ENGINES = ["interp"] + [c.name for c in PIPELINES]


def run(source, args=(), world=None):
    """Trace lines per engine; a deadlock shows up as a final DEADLOCK line."""
    entry = CorpusEntry("t", None, source, list(args), world)
    out = {"interp": run_reference(entry).lines}
    for config in PIPELINES:
        out[config.name] = run_pipeline(entry, config)[1].lines
    return out


def same_everywhere(source, args=(), world=None):
    runs = run(source, args, world)
    ref = runs["interp"]
    for engine in ENGINES:
        assert runs[engine] == ref, engine
    return ref


def test_countdown():
    assert same_everywhere(COUNTDOWN, [3]) == COUNTDOWN_TRACE


def test_empty_program():
    assert same_everywhere("cps void main() {}") == ["END 0", "CLOCK 0"]


def test_spawn_order_is_fifo():
    src = r"""
    cps void child(int id) { printf("child %d\n", id); }
    cps void main() {
      spawn child(1);
      spawn child(2);
      printf("parent\n");
      yield();
      printf("parent again\n");
    }
    """
    assert same_everywhere(src) == [
        "PRINT parent\\n", "PRINT child 1\\n", "END 1", "PRINT child 2\\n", "END 2",
        "PRINT parent again\\n", "END 0", "CLOCK 0"]


def test_same_deadline_wakes_in_insertion_order():
    src = r"""
    cps void sleeper(int id, int t) { cpc_sleep(t); printf("%d\n", id); }
    cps void main() {
      spawn sleeper(1, 3);
      spawn sleeper(2, 2);
      spawn sleeper(3, 3);
      spawn sleeper(4, 2);
    }
    """
    prints = [l for l in same_everywhere(src) if l.startswith("PRINT")]
    assert prints == ["PRINT 2\\n", "PRINT 4\\n", "PRINT 1\\n", "PRINT 3\\n"]


def test_sleep_zero_is_a_yield():
    src = r"""
    cps void other() { printf("other\n"); }
    cps void main() {
      spawn other();
      cpc_sleep(0);
      printf("main\n");
    }
    """
    assert same_everywhere(src) == [
        "PRINT other\\n", "END 1", "PRINT main\\n", "END 0", "CLOCK 0"]


def test_clock_advances_only_when_idle():
    src = r"""
    cps void busy(int n) {
      int i;
      for (i = 0; i < n; i++) { yield(); }
      printf("busy done\n");
    }
    cps void main() {
      spawn busy(50);
      cpc_sleep(1);
      printf("slept\n");
    }
    """
    assert same_everywhere(src) == [
        "PRINT busy done\\n", "END 1", "PRINT slept\\n", "END 0", "CLOCK 1"]


def test_signal_without_waiter_is_noop():
    src = r"""
    cps void main() { cv_signal(4); cv_broadcast(4); printf("ok\n"); }
    """
    assert same_everywhere(src) == ["PRINT ok\\n", "END 0", "CLOCK 0"]


def test_signal_wakes_longest_waiter_and_does_not_yield():
    src = r"""
    cps void waiter(int id) { cv_wait(1); printf("woke %d\n", id); }
    cps void main() {
      spawn waiter(1);
      spawn waiter(2);
      spawn waiter(3);
      yield();
      cv_signal(1);
      printf("signalled\n");
      yield();
      cv_broadcast(1);
    }
    """
    assert same_everywhere(src) == [
        "PRINT signalled\\n", "PRINT woke 1\\n", "END 1",
        "END 0", "PRINT woke 2\\n", "END 2", "PRINT woke 3\\n", "END 3", "CLOCK 0"]


def test_io_wait_resumes_at_scripted_tick():
    src = r"""
    cps void main() {
      io_wait(7, IN);
      printf("readable\n");
    }
    """
    world = World.parse("tick 5 ready 7 IN\n")
    assert same_everywhere(src, world=world) == ["PRINT readable\\n", "END 0", "CLOCK 5"]


def test_io_waiters_wake_in_registration_order():
    src = r"""
    cps void reader(int id) { io_wait(2, IN); printf("reader %d\n", id); }
    cps void writer() { io_wait(2, OUT); printf("writer\n"); }
    cps void main() {
      spawn reader(1);
      spawn writer();
      spawn reader(2);
    }
    """
    world = World.parse("tick 3 ready 2 IN\ntick 3 ready 2 OUT\n")
    assert [l for l in same_everywhere(src, world=world) if l.startswith("PRINT")] == [
        "PRINT reader 1\\n", "PRINT reader 2\\n", "PRINT writer\\n"]


def test_event_without_waiter_is_lost():
    src = r"""
    cps void main() {
      cpc_sleep(4);
      io_wait(1, IN);
      printf("got it\n");
    }
    """
    early = World.parse("tick 2 ready 1 IN\n")
    lines = same_everywhere(src, world=early)
    assert lines[-1] == "DEADLOCK 0"
    later = World.parse("tick 2 ready 1 IN\ntick 6 ready 1 IN\n")
    assert same_everywhere(src, world=later)[-2:] == ["END 0", "CLOCK 6"]


def test_missing_world_means_no_readiness():
    src = "cps void main() { io_wait(3, OUT); }"
    assert same_everywhere(src) == ["DEADLOCK 0"]


def test_condvar_deadlock_names_both_tasks():
    src = r"""
    cps void stuck(int cv) { cv_wait(cv); }
    cps void main() {
      spawn stuck(1);
      spawn stuck(2);
    }
    """
    lines = same_everywhere(src)
    assert lines == ["END 0", "DEADLOCK 1 2"]


@pytest.mark.parametrize("body, message", [
    ("int a[2]; int i = 2; a[i] = 1;", "ERROR index out of bounds"),
    ("int z = 0; printf(\"%d\\n\", 1 / z);", "ERROR division by zero"),
])
def test_runtime_errors_stop_the_run(body, message):
    src = "cps void main() { printf(\"start\\n\"); " + body + " printf(\"never\\n\"); }"
    assert same_everywhere(src) == ["PRINT start\\n", message, "CLOCK 0"]


def test_negative_sleep_at_runtime():
    src = "cps void main(int t) { cpc_sleep(t); }"
    lines = same_everywhere(src, [-1])
    assert lines[0].startswith("ERROR") and lines[-1] == "CLOCK 0"


def test_c_division_semantics():
    src = r"""
    cps void main() { printf("%d %d %d %d\n", -7 / 2, -7 % 2, 7 / -2, 7 % -2); }
    """
    assert same_everywhere(src)[0] == "PRINT -3 -1 -3 1\\n"


def test_timer_and_world_at_same_tick():
    src = r"""
    cps void napper() { cpc_sleep(3); printf("timer\n"); }
    cps void main() {
      spawn napper();
      io_wait(9, IN);
      printf("io\n");
    }
    """
    world = World.parse("tick 3 ready 9 IN\n")
    prints = [l for l in same_everywhere(src, world=world) if l.startswith("PRINT")]
    # timers fire before World events of the same tick
    assert prints == ["PRINT timer\\n", "PRINT io\\n"]


def test_determinism():
    src = r"""
    cps void w(int id) { int i; for (i = 0; i < 3; i++) { cpc_sleep(id % 2); printf("%d\n", id); } }
    cps void main() { int i; for (i = 0; i < 5; i++) spawn w(i); }
    """
    assert run(src) == run(src)
