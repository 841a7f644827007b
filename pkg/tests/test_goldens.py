"""Countdown dumps against hand-transcribed reference listings.

Each listing is compared after alpha-normalisation, so only structure
counts: the compiler's names (``__l0``, ``countdown__state``...) and the
listings' names (``loop``, ``state``...) are both renamed away.
"""

import io
import time

import pytest

from coopc.alpha import alpha_equivalent, alpha_text
from coopc.cli import main as cli_main
from coopc.difftest import default_corpus_dir
from coopc.pipeline import PipelineConfig, compile_source

from conftest import COUNTDOWN

GOTO_FORM = r"""
cps void countdown(int x) {
 loop:
  if (x <= 0) goto timeout;
  printf("%d seconds remaining\n", x);
  x = x - 1;
  cpc_sleep(1);
  goto loop;
 timeout:
  printf("time is over!\n");
  return;
}
"""

SPLIT = r"""
cps void countdown(int x) {
 cps void loop() {
   if (x <= 0) { timeout(); return; }
   printf("%d seconds remaining\n", x);
   x = x - 1;
   cpc_sleep(1); loop(); return;
 }
 cps void timeout() { printf("time is over!\n"); return; }
 loop(); return;
}
"""

PARAM_LIFTED = r"""
cps void countdown(int x) {
 cps void loop(int x) {
   if (x <= 0) { timeout(); return; }
   printf("%d seconds remaining\n", x);
   x = x - 1;
   cpc_sleep(1); loop(x); return;
 }
 cps void timeout() { printf("time is over!\n"); return; }
 loop(x); return;
}
"""

CPS = r"""
void loop(int x, cont *k) {
  if (x <= 0) { timeout(k); return; }
  printf("%d seconds remaining\n", x);
  x = x - 1;
  cpc_sleep(1, push(loop, x, k)); return;
}
void timeout(cont *k) {
  printf("time is over!\n");
  invoke(k); return;
}
void countdown(int x, cont *k) { loop(x, k); return; }
"""

DEFUNCTIONALISED = r"""
enum state { LOOP, TIMEOUT };
cps void countdown(int x) {
  cps void dispatch(enum state s) {
    switch (s) {
     case LOOP:
      if (x <= 0) { dispatch(TIMEOUT); return; }
      printf("%d seconds remaining\n", x);
      x = x - 1;
      cpc_sleep(1); dispatch(LOOP); return;
     case TIMEOUT:
      printf("time is over!\n"); return;
    }
  }
  dispatch(LOOP); return;
}
"""

STATE_MACHINE = r"""
enum state { LOOP, TIMEOUT };
cps void dispatch(enum state s, int x) {
  switch (s) {
   case LOOP:
    if (x <= 0) goto timeout_label;
    printf("%d seconds remaining\n", x);
    x = x - 1;
    cpc_sleep(1); dispatch(LOOP, x); return;
   case TIMEOUT: timeout_label:
    printf("time is over!\n"); return;
  }
}
cps void countdown(int x) { dispatch(LOOP, x); return; }
"""

ENVIRONMENT = r"""
struct env_countdown { int x; };
cps void countdown(int x) {
  struct env_countdown *e =
     malloc(sizeof(struct env_countdown));
  e->x = x;
  cps void loop(struct env_countdown *e) {
    if (e->x <= 0) { timeout(e); return; }
    printf("%d seconds remaining\n", e->x);
    e->x = e->x - 1;
    cpc_sleep(1); loop(e); return;
  }
  cps void timeout(struct env_countdown *e) {
    printf("time is over!\n");
    free(e); return;
  }
  loop(e); return;
}
"""

CASES = [
    # (listing, control, data, direct dispatch, stage)
    ("goto-form", GOTO_FORM, "callbacks", "lift", True, "normalize"),
    ("split", SPLIT, "callbacks", "lift", True, "split"),
    ("param-lifted", PARAM_LIFTED, "callbacks", "lift", True, "param-lift"),
    ("cps", CPS, "callbacks", "lift", True, "cps"),
    ("defun", DEFUNCTIONALISED, "statemachine", "lift", False, "defun"),
    ("state-machine", STATE_MACHINE, "statemachine", "lift", True, "lift"),
    ("environment", ENVIRONMENT, "callbacks", "env", True, "env-generate"),
]


@pytest.mark.parametrize("name, listing, control, data, direct, stage", CASES,
                         ids=[c[0] for c in CASES])
def test_countdown_listing(name, listing, control, data, direct, stage):
    config = PipelineConfig(control, data, direct_dispatch=direct)
    dumped = compile_source(COUNTDOWN, config).stages[stage]
    assert alpha_equivalent(dumped, listing)


def test_listings_are_not_trivially_equal():
    texts = {alpha_text(c[1]) for c in CASES}
    assert len(texts) == len(CASES)


def test_alpha_detects_structural_change():
    mutated = SPLIT.replace("x <= 0", "x < 0")
    dumped = compile_source(COUNTDOWN, PipelineConfig()).stages["split"]
    assert not alpha_equivalent(dumped, mutated)


def test_alpha_detects_swapped_names():
    swapped = CPS.replace("push(loop, x, k)", "push(timeout, x, k)")
    ir = compile_source(COUNTDOWN, PipelineConfig()).ir
    assert not alpha_equivalent(ir, swapped)


def test_cli_dump_matches_listing(tmp_path):
    out = io.StringIO()
    src = default_corpus_dir() / "countdown.coop"
    code = cli_main(["compile", str(src), "--dump", "after=split", "--alpha",
                     "-o", str(tmp_path / "c.evir")], out)
    assert code == 0
    header, _, body = out.getvalue().partition("\n")
    assert header == "// after split"
    assert body == alpha_text(SPLIT)


def test_goldens_are_fast():
    start = time.perf_counter()
    for _, listing, control, data, direct, stage in CASES:
        config = PipelineConfig(control, data, direct_dispatch=direct)
        alpha_equivalent(compile_source(COUNTDOWN, config).stages[stage], listing)
    assert time.perf_counter() - start < 1.0
