import pytest

from coopc.checker import check
from coopc.difftest import default_corpus_dir, load_corpus
from coopc.interp import interpret
from coopc.parser import parse
from coopc.pipeline import PIPELINES, compile_program
from coopc.runtime import run_event_loop
from coopc.sched import trace_lines

COUNTDOWN = """\
cps void countdown(int x) {
  while (x > 0) {
    printf("%d seconds remaining\\n", x);
    x--;
    cpc_sleep(1);
  }
  printf("time is over!\\n");
}
"""

COUNTDOWN_TRACE = [
    "PRINT 3 seconds remaining\\n",
    "PRINT 2 seconds remaining\\n",
    "PRINT 1 seconds remaining\\n",
    "PRINT time is over!\\n",
    "END 0",
    "CLOCK 3",
]


def checked(source):
    return check(parse(source))


def interp_lines(source, args=(), world=None):
    return trace_lines(interpret(checked(source), list(args), world).trace)


def compiled(source, config):
    return compile_program(checked(source), config).ir


def loop_lines(source, config, args=(), world=None):
    return trace_lines(run_event_loop(compiled(source, config), list(args), world).trace)


def all_engines(source, args=(), world=None):
    """Trace lines from the interpreter and from each pipeline, keyed by name."""
    out = {"interp": interp_lines(source, args, world)}
    for config in PIPELINES:
        out[config.name] = loop_lines(source, config, args, world)
    return out


def assert_agree(source, args=(), world=None):
    runs = all_engines(source, args, world)
    ref = runs["interp"]
    for name, lines in runs.items():
        assert lines == ref, name
    return ref


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(default_corpus_dir())


@pytest.fixture(scope="session")
def difftest_results(corpus):
    """(entry, reference outcome, cells) for every corpus program."""
    from coopc.difftest import difftest_entry
    return [(e,) + difftest_entry(e) for e in corpus]


@pytest.fixture(params=PIPELINES, ids=lambda c: c.name)
def pipeline(request):
    return request.param


# criterion number -> "C<n> PASS|FAIL ..." line, filled in by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
