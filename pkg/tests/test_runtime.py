import pytest

from coopc.parser import parse
from coopc.pipeline import PIPELINES, PipelineConfig, compile_source
from coopc.runtime import CompiledProgram, EventLoop, format_report, run_event_loop
from coopc.sched import DeadlockError, format_trace, parse_trace, trace_lines

from conftest import COUNTDOWN, COUNTDOWN_TRACE


def evir(text, args=(), world=None):
    return run_event_loop(parse(text, internal=True), list(args), world)


def test_invoke_single_frame():
    res = evir("""
    entry main;
    void timeout(cont *k) { printf("time is over!\\n"); invoke(k); return; }
    void main(cont *k) { invoke(push(timeout, k)); return; }
    """)
    assert trace_lines(res.trace) == ["PRINT time is over!\\n", "END 0", "CLOCK 0"]
    assert res.report["pushes"] == 1


def test_invoke_empty_continuation_ends_task():
    res = evir("entry main; void main(cont *k) { invoke(k); return; }")
    assert trace_lines(res.trace) == ["END 0", "CLOCK 0"]


def test_frames_are_lifo():
    res = evir("""
    entry main;
    void say(int n, cont *k) { printf("%d\\n", n); invoke(k); return; }
    void main(cont *k) { invoke(push(say, 1, push(say, 2, k))); return; }
    """)
    assert trace_lines(res.trace)[:2] == ["PRINT 1\\n", "PRINT 2\\n"]
    assert (res.report["pushes"], res.report["invokes"]) == (2, 3)


def test_push_with_saved_argument():
    res = evir("""
    entry main;
    void loop(int x, cont *k) { printf("%d\\n", x); invoke(k); return; }
    void main(cont *k) { cpc_sleep(1, push(loop, 3, k)); return; }
    """)
    assert trace_lines(res.trace) == ["PRINT 3\\n", "END 0", "CLOCK 1"]


def test_return_value_is_last_frame_argument():
    res = evir("""
    entry main;
    void show(int tag, int v, cont *k) { printf("%d %d\\n", tag, v); invoke(k); return; }
    void answer(cont *k) { invoke(k, 42); return; }
    void main(cont *k) { answer(push(show, 7, k)); return; }
    """)
    assert trace_lines(res.trace)[0] == "PRINT 7 42\\n"


def test_spawn_copies_arguments():
    res = evir("""
    entry main;
    void child(int v, cont *k) { printf("%d\\n", v); invoke(k); return; }
    void main(cont *k) { int x = 1; spawn child(x); x = 2; printf("%d\\n", x); invoke(k); return; }
    """)
    assert trace_lines(res.trace) == ["PRINT 2\\n", "END 0", "PRINT 1\\n", "END 1", "CLOCK 0"]
    assert res.report["tasks"] == 2


@pytest.mark.parametrize("config", PIPELINES, ids=lambda c: c.name)
def test_countdown_on_every_pipeline(config):
    res = run_event_loop(compile_source(COUNTDOWN, config).ir, [3])
    assert trace_lines(res.trace) == COUNTDOWN_TRACE


def test_countdown_allocations():
    for config in PIPELINES:
        report = run_event_loop(compile_source(COUNTDOWN, config).ir, [3]).report
        expected = 1 if config.data == "env" else 0
        assert (report["allocs"], report["releases"]) == (expected, expected), config.name


def test_state_machine_pushes_less_on_countdown():
    for n in (1, 3, 10):
        pushes = {c.name: run_event_loop(compile_source(COUNTDOWN, c).ir, [n]).report["pushes"]
                  for c in PIPELINES}
        assert pushes["sm-lift"] < pushes["cb-lift"]
        assert pushes["sm-env"] < pushes["cb-env"]


def test_deadlock_error_lists_parked_tasks():
    src = """
    cps void stuck() { cv_wait(3); }
    cps void main() { spawn stuck(); spawn stuck(); cv_wait(3); }
    """
    with pytest.raises(DeadlockError) as info:
        run_event_loop(compile_source(src, PipelineConfig()).ir)
    assert info.value.parked == [0, 1, 2]
    assert "parked tasks 0, 1, 2" in str(info.value)


def test_compiled_program_is_reusable():
    compiled = CompiledProgram.build(compile_source(COUNTDOWN, PipelineConfig()).ir)
    first = EventLoop(compiled, None).run([2])
    second = EventLoop(compiled, None).run([2])
    assert first.trace == second.trace
    assert "def __make" in compiled.source


def test_report_format():
    report = run_event_loop(compile_source(COUNTDOWN, PipelineConfig()).ir, [3]).report
    text = format_report(report)
    assert text.splitlines()[0] == f"pushes={report['pushes']}"
    for key in ("pushes", "invokes", "allocs", "releases", "max_ready"):
        assert f"\n{key}=" in "\n" + text


def test_trace_serialisation_round_trip():
    trace = [("PRINT", "a\tb\\c\n"), ("END", 0), ("ERROR", "division by zero"), ("CLOCK", 4)]
    text = format_trace(trace)
    assert text.splitlines()[0] == "PRINT a\tb\\\\c\\n"
    assert parse_trace(text) == trace


def test_event_loop_never_recurses_deeply():
    src = """
    cps int depth(int n) {
      if (n == 0) return 0;
      int below = depth(n - 1);
      return below + 1;
    }
    cps void main(int n) { printf("%d\\n", depth(n)); }
    """
    for config in PIPELINES:
        res = run_event_loop(compile_source(src, config).ir, [20000])
        assert trace_lines(res.trace)[0] == "PRINT 20000\\n"
