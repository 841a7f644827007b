import io
import subprocess
import sys

import pytest

from coopc.cli import (EXIT_COMPILE, EXIT_DEADLOCK, EXIT_DIFFTEST, EXIT_OK, EXIT_USAGE, main)
from coopc.difftest import default_corpus_dir

from conftest import COUNTDOWN, COUNTDOWN_TRACE

CORPUS = default_corpus_dir()


def cli(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


@pytest.fixture
def countdown(tmp_path):
    path = tmp_path / "countdown.coop"
    path.write_text(COUNTDOWN)
    return path


def test_run_with_interpreter(countdown):
    code, text = cli("run", countdown, "--interp", "--", 3)
    assert code == EXIT_OK
    assert text.splitlines() == COUNTDOWN_TRACE


@pytest.mark.parametrize("control", ["callbacks", "statemachine"])
@pytest.mark.parametrize("data", ["lift", "env"])
def test_compile_then_run_evir(countdown, control, data):
    code, _ = cli("compile", countdown, "--control", control, "--data", data)
    assert code == EXIT_OK
    evir = countdown.with_suffix(".evir")
    assert evir.read_text().startswith("entry ")
    code, text = cli("run", evir, "--", 3)
    assert (code, text.splitlines()) == (EXIT_OK, COUNTDOWN_TRACE)


def test_run_report(countdown):
    code, text = cli("run", countdown, "--control", "statemachine", "--report", "--", 2)
    assert code == EXIT_OK
    assert "pushes=" in text and "allocs=0" in text.splitlines()


def test_compile_output_option(countdown, tmp_path):
    target = tmp_path / "out.evir"
    assert cli("compile", countdown, "-o", target)[0] == EXIT_OK
    assert target.exists() and not countdown.with_suffix(".evir").exists()


def test_dump_all_prints_every_pass(countdown, tmp_path):
    code, text = cli("compile", countdown, "--control", "statemachine", "--dump", "after=all",
                     "-o", tmp_path / "x.evir")
    assert code == EXIT_OK
    headers = [l for l in text.splitlines() if l.startswith("// after ")]
    assert headers[0] == "// after normalize" and headers[-1] == "// after cps"
    assert "// after defun" in headers


def test_dump_unknown_pass_is_usage_error(countdown):
    # defun is not part of a callbacks pipeline
    assert cli("compile", countdown, "--dump", "after=defun")[0] == EXIT_USAGE
    assert cli("compile", countdown, "--dump", "split")[0] == EXIT_USAGE


def test_bad_flags_are_usage_errors(countdown):
    assert cli("compile", countdown, "--control", "threads")[0] == EXIT_USAGE
    assert cli("frobnicate")[0] == EXIT_USAGE
    assert cli("run", countdown, "--", "three")[0] == EXIT_USAGE
    assert cli("compile", countdown, "--", "1")[0] == EXIT_USAGE
    assert cli("run", countdown.with_name("missing.coop"))[0] == EXIT_USAGE


def test_wrong_argument_count_is_usage_error(countdown):
    assert cli("run", countdown, "--", 1, 2)[0] == EXIT_USAGE


def test_interp_rejects_evir(countdown):
    cli("compile", countdown)
    assert cli("run", countdown.with_suffix(".evir"), "--interp")[0] == EXIT_USAGE


def test_compile_errors(tmp_path, capsys):
    bad = tmp_path / "bad.coop"
    bad.write_text("cps void main() {\n  int x = ;\n}\n")
    assert cli("compile", bad)[0] == EXIT_COMPILE
    assert "bad.coop:2" in capsys.readouterr().err
    nocps = tmp_path / "nocps.coop"
    nocps.write_text("void f() { yield(); }\ncps void main() { }\n")
    assert cli("run", nocps)[0] == EXIT_COMPILE


def test_deadlock_exit_code(tmp_path, capsys):
    prog = tmp_path / "wait.coop"
    prog.write_text('cps void main() { printf("a\\n"); io_wait(1, IN); }\n')
    code, text = cli("run", prog)
    assert code == EXIT_DEADLOCK
    assert text.splitlines()[0] == "PRINT a\\n"
    assert "deadlock" in capsys.readouterr().err.lower()


def test_missing_world_on_evir_deadlocks(tmp_path):
    target = tmp_path / "accept.evir"
    assert cli("compile", CORPUS / "accept_loop.coop", "-o", target)[0] == EXIT_OK
    assert cli("run", target, "--", 3)[0] == EXIT_DEADLOCK
    code, text = cli("run", target, "--world", CORPUS / "accept_loop.world", "--", 3)
    assert code == EXIT_OK and text.splitlines()[-1].startswith("CLOCK")


def test_runtime_error_is_part_of_the_trace(tmp_path):
    prog = tmp_path / "div.coop"
    prog.write_text("cps void main(int d) { printf(\"%d\\n\", 1 / d); }\n")
    code, text = cli("run", prog, "--", 0)
    assert code == EXIT_OK
    assert text.splitlines()[0] == "ERROR division by zero"


def test_difftest_passing_dir(tmp_path, countdown):
    (tmp_path / "countdown.coop").write_text("// args: 2\n" + COUNTDOWN)
    code, text = cli("difftest", tmp_path)
    assert code == EXIT_OK
    assert "4/4 cells pass" in text


def test_difftest_failure_names_program(tmp_path, monkeypatch):
    (tmp_path / "countdown.coop").write_text("// args: 2\n" + COUNTDOWN)
    import coopc.difftest as D
    real = D.run_pipeline

    def broken(entry, config, prog=None):
        result, outcome = real(entry, config, prog)
        if config.name == "sm-env":
            outcome.trace[0] = ("PRINT", "wrong")
        return result, outcome

    monkeypatch.setattr(D, "run_pipeline", broken)
    code, text = cli("difftest", tmp_path)
    assert code == EXIT_DIFFTEST
    assert "countdown sm-env: trace line 1" in text


def test_difftest_missing_dir(tmp_path):
    assert cli("difftest", tmp_path / "nope")[0] == EXIT_USAGE
    assert cli("difftest", tmp_path)[0] == EXIT_USAGE


def test_bench_counters_only(tmp_path):
    out = tmp_path / "report.txt"
    code, text = cli("bench", "--suite", "micro", "--counters-only", "--out", out)
    assert code == EXIT_OK
    assert out.read_text() == text
    assert "bench.cps-call.sm-lift.pushes=20001" in text.splitlines()
    assert "median_ns" not in text


def test_bench_argument_checks():
    assert cli("bench", "--trials", 2)[0] == EXIT_USAGE
    assert cli("bench", "--n", 10)[0] == EXIT_USAGE
    assert cli("bench", "--suite", "nope")[0] == EXIT_USAGE


def test_console_script_module(countdown):
    done = subprocess.run([sys.executable, "-m", "coopc", "run", str(countdown), "--", "1"],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert done.stdout.splitlines()[0] == "PRINT 1 seconds remaining\\n"
