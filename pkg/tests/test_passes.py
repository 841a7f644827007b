import random

import pytest

from coopc import ast as A
from coopc.interp import interpret
from coopc.passes.boxing import box_program, extruded, rewrite_slots
from coopc.passes.cps import converted_names, cps_convert
from coopc.passes.defun import defun_program
from coopc.passes.env import generate_program, layout_of, prepare_environments
from coopc.passes.lift import (float_program, free_variables, lambda_lift, liveness,
                               param_lift_program)
from coopc.passes.normalize import dead_labels, is_goto_form, normalize_program
from coopc.passes.split import TailViolation, split_program, validate_tails
from coopc.pipeline import PIPELINES, PipelineConfig, compile_program
from coopc.printer import program as print_program
from coopc.runtime import run_event_loop
from coopc.sched import trace_lines

from conftest import COUNTDOWN, COUNTDOWN_TRACE, assert_agree, checked, interp_lines


def lines(prog, args=(), world=None):
    return trace_lines(interpret(prog, list(args), world).trace)


def stmts_of(f, kind):
    return [s for s in A.walk_stmts(f.body, into_functions=True) if isinstance(s, kind)]


def fn(prog, name):
    return next(f for f in prog.functions if f.name == name)


def normalized(source):
    return normalize_program(checked(source))


def split_of(source):
    return split_program(box_program(normalized(source)))


STRAIGHT = """
cps void main(int a) {
  int b = a * 2;
  printf("%d\\n", a + b);
}
"""

NESTED = """
cps void main(int n, int m) {
  int i = 0;
  int total = 0;
  while (i < n) {
    int j = 0;
    i++;
    if (i % 3 == 0) continue;
    while (1) {
      j++;
      if (j > m) break;
      if ((i + j) % 2 == 0 && j != 1) continue;
      total = total + i * j;
      yield();
    }
    if (total > 500) break;
  }
  printf("%d %d\\n", i, total);
}
"""


# -- normalize ---------------------------------------------------------------

def test_normalize_countdown_shape():
    f = normalized(COUNTDOWN).functions[0]
    assert is_goto_form(f)
    body = f.body
    assert isinstance(body[0], A.Label)
    head = body[0].name
    test = body[1]
    assert isinstance(test, A.If) and test.cond == A.Binary("<=", A.Var("x"), A.IntLit(0))
    exit_label = test.then.stmts[0].label
    assert isinstance(body[5], A.Goto) and body[5].label == head
    assert isinstance(body[6], A.Label) and body[6].name == exit_label
    assert not stmts_of(f, A.While)
    assert dead_labels(f) == set()


def test_normalize_labels_reset_per_function():
    prog = normalized(COUNTDOWN + COUNTDOWN.replace("countdown", "again") + "cps void main() {}")
    labels = [[s.name for s in f.body if isinstance(s, A.Label)] for f in prog.functions[:2]]
    assert labels[0] == labels[1] == ["__l0", "__l1"]


def test_normalize_straight_line_has_no_labels():
    f = normalized(STRAIGHT).functions[0]
    assert is_goto_form(f)
    assert not stmts_of(f, A.Label) and not stmts_of(f, A.Goto)


def test_normalize_lowers_short_circuit():
    f = normalized(NESTED).functions[0]
    for s in A.walk_stmts(f.body):
        for e in A.stmt_exprs(s):
            assert not any(isinstance(x, A.Binary) and x.op in ("&&", "||") for x in A.walk_expr(e))


def test_normalize_nested_loops_random_inputs():
    prog = checked(NESTED)
    low = normalize_program(prog)
    assert is_goto_form(low.functions[0])
    rng = random.Random(7)
    for _ in range(20):
        args = [rng.randint(0, 12), rng.randint(0, 6)]
        assert lines(low, args) == lines(prog, args)


# -- boxing ------------------------------------------------------------------

def test_boxing_leaves_countdown_alone():
    prog = normalized(COUNTDOWN)
    assert box_program(prog) == prog


EXTRUDED = """
cps void set(int *p) { *p = 7; }
cps void main(int y) {
  int x;
  set(&x);
  if (y > 1) {
    printf("%d\\n", x);
    return;
  }
  printf("%d\\n", y);
}
"""


def test_boxing_extruded_variable():
    prog = normalized(EXTRUDED)
    assert extruded(fn(prog, "main")) == ["x"]
    main = fn(box_program(prog), "main")
    text = print_program(A.Program([main]))
    assert "malloc(1)" in text
    # released before each of the two returns
    returns = stmts_of(main, A.Return)
    assert len(returns) == 2
    assert text.count("free(") == 2
    # no address-of on a plain local remains
    for s in A.walk_stmts(main.body):
        for e in A.stmt_exprs(s):
            assert not any(isinstance(x, A.AddrOf) for x in A.walk_expr(e))
    for y in (0, 5):
        assert lines(box_program(prog), [y]) == interp_lines(EXTRUDED, [y])


def test_boxed_variable_receives_cps_result_through_temporary():
    src = """
    cps int helper(int x) { yield(); return x * 2 + 1; }
    cps void main(int a) {
      int c = 0;
      int *p = &c;
      c = helper(a);
      printf("%d %d\\n", c, *p);
    }
    """
    boxed = fn(box_program(normalized(src)), "main")
    calls = [s for s in A.walk_stmts(boxed.body)
             if isinstance(s, A.Assign) and isinstance(s.value, A.Call) and s.value.cps]
    assert len(calls) == 1 and isinstance(calls[0].target, A.Var)
    assert assert_agree(src, [4])[0] == "PRINT 9 9\\n"


def test_boxing_ttt_manual_trace_unchanged(corpus):
    entry = next(e for e in corpus if e.name == "ttt_manual")
    prog = normalize_program(checked(entry.source))
    small = [1, 4]   # four plies keeps the oracle fast
    assert lines(box_program(prog), small) == lines(prog, small)


# -- split -------------------------------------------------------------------

def test_split_countdown():
    f = split_of(COUNTDOWN).functions[0]
    loop, timeout = f.inner_functions()
    assert loop.params == [] and timeout.params == []
    tail = loop.body[-3:]
    assert tail[0] == A.ExprStmt(A.Call("cpc_sleep", [A.IntLit(1)], True))
    assert tail[1] == A.ExprStmt(A.Call(loop.name, [], True))
    assert tail[2] == A.Return()
    # the outer body hands over to the first block
    assert f.body[-2] == A.ExprStmt(A.Call(loop.name, [], True))


def test_split_straight_line():
    f = split_of(STRAIGHT).functions[0]
    assert f.inner_functions() == []
    assert lines(split_of(STRAIGHT), [4]) == interp_lines(STRAIGHT, [4])


THREE_STATES = """
cps void main(int n) {
  int a = n;
  int b = 0;
  while (a > 0) {
    b = b + a;
    a--;
    yield();
  }
  if (b > 10) {
    printf("big %d\\n", b);
    return;
  }
  printf("small %d\\n", b);
}
"""


def test_split_three_state_machine():
    prog = split_of(THREE_STATES)
    f = prog.functions[0]
    labels = [s.name for s in normalized(THREE_STATES).functions[0].body if isinstance(s, A.Label)]
    assert len(labels) == 3
    # the code before the first label becomes an entry block
    assert [g.name for g in f.inner_functions()] == ["__entry"] + labels
    for n in (0, 3, 5):
        assert lines(prog, [n]) == interp_lines(THREE_STATES, [n])


def test_validate_tails_countdown():
    f = split_of(COUNTDOWN).functions[0]
    loop, timeout = (g.name for g in f.inner_functions())
    kinds = [(t.function, t.kind) for t in validate_tails(f)]
    assert kinds == [(loop, "b"), (loop, "c"), (timeout, "a")]


def test_validate_tails_empty_inner_function():
    f = A.FunDef("outer", True, [], "void", [
        A.FunDef("inner", True, [], "void", []),
        A.ExprStmt(A.Call("inner", [], True)), A.Return()])
    assert [(t.function, t.kind) for t in validate_tails(f)] == [("inner", "a")]


def test_validate_tails_rejects_non_tail_call():
    bad = A.FunDef("outer", True, [], "void", [
        A.FunDef("inner", True, [], "void", [
            A.ExprStmt(A.Call("cpc_sleep", [A.IntLit(1)], True)),
            A.ExprStmt(A.Call("printf", [A.StrLit("x")], False)),
            A.Return()]),
        A.ExprStmt(A.Call("inner", [], True)), A.Return()])
    with pytest.raises(TailViolation) as info:
        validate_tails(bad)
    assert info.value.function == "inner"
    assert info.value.stmt.expr.name == "cpc_sleep"


def test_validate_tails_on_corpus(corpus):
    for entry in corpus:
        for config in PIPELINES:
            # the pipeline runs the validator after split and defun
            compile_program(checked(entry.source), config)


# -- lambda lifting ----------------------------------------------------------

def test_param_lift_countdown():
    prog = param_lift_program(split_of(COUNTDOWN))
    loop, timeout = prog.functions[0].inner_functions()
    assert [(p.name, p.type) for p in loop.params] == [("x", "int")]
    assert timeout.params == []
    calls = [s.expr for s in A.walk_stmts(prog.functions[0].body, into_functions=True)
             if isinstance(s, A.ExprStmt) and isinstance(s.expr, A.Call)
             and s.expr.name == loop.name]
    assert calls and all(c.args == [A.Var("x")] for c in calls)


def test_lift_without_free_variables_is_pure_floating():
    src = """
    cps void main() {
      yield();
      printf("a\\n");
      yield();
      printf("b\\n");
    }
    """
    split = split_of(src)
    lifted = lambda_lift(split)
    assert all(not f.inner_functions() for f in lifted.functions)
    originals = {g.name: g.params for g in split.functions[0].inner_functions()}
    for f in lifted.functions:
        if f.name != "main":
            assert f.params == []
    assert len(lifted.functions) == 1 + len(originals)


def test_lift_drops_dead_variable():
    split = split_of(THREE_STATES)
    f = split.functions[0]
    live = liveness(f)
    entry, loop, test, last = (g.name for g in f.inner_functions())
    assert live[entry] == {"n"}
    assert live[loop] == {"a", "b"}
    assert live[test] == live[last] == {"b"}
    lifted = lambda_lift(split)
    floated = [f for f in lifted.functions if f.name != "main"]
    assert [p.name for p in floated[-1].params] == ["b"]
    for n in (0, 4):
        assert lines(lifted, [n]) == interp_lines(THREE_STATES, [n])


def test_lift_all_vars_mode_keeps_everything():
    lifted = lambda_lift(split_of(THREE_STATES), all_vars=True)
    last = [f for f in lifted.functions if f.name != "main"][-1]
    assert {p.name for p in last.params} == {"n", "a", "b"}
    assert lines(lifted, [4]) == interp_lines(THREE_STATES, [4])


def test_lifted_programs_are_closed(corpus):
    for entry in corpus:
        for config in PIPELINES:
            stages = compile_program(checked(entry.source), config).stages
            final = stages["lift"] if config.data == "lift" else stages["env-float"]
            tags = {t for it in final.items if isinstance(it, A.EnumDef) for t in it.tags}
            for f in final.functions:
                assert not f.inner_functions()
                assert free_variables(f, tags) == set(), (entry.name, config.name, f.name)


# -- environments ------------------------------------------------------------

ACCEPT = """
int accept(int fd) { return fd + 1; }
cps int cpc_accept(int fd) {
  io_wait(fd, IN);
  return accept(fd);
}
cps void main() {
  int c = cpc_accept(3);
  printf("%d\\n", c);
}
"""


def test_slot_rewriting():
    prog = prepare_environments(normalized(ACCEPT))
    f = fn(prog, "cpc_accept")
    assert f.ret_type == "void"
    assert [(p.name, p.type) for p in f.params] == [("fd", "int"), ("__slot", "int*")]
    assign = next(s for s in f.body if isinstance(s, A.Assign))
    assert assign.target == A.Deref(A.Var("__slot"))
    assert A.Return() in f.body
    # lift pipelines for the state machine share the same rewriting
    assert fn(rewrite_slots(normalized(ACCEPT)), "cpc_accept").params == f.params


def test_single_exit_gets_one_release_marker():
    prog = prepare_environments(normalized(STRAIGHT))
    assert print_program(prog).count("free(") == 1


def test_release_marker_per_exit():
    src = """
    cps void main(int n) {
      if (n == 0) { printf("zero\\n"); return; }
      if (n == 1) { printf("one\\n"); return; }
      printf("many\\n");
    }
    """
    prog = prepare_environments(normalized(src))
    assert len(stmts_of(prog.functions[0], A.Return)) == 3
    assert print_program(prog).count("free(") == 3
    for n in range(3):
        assert lines(prog, [n]) == interp_lines(src, [n])


def env_of(source):
    return generate_program(split_program(prepare_environments(normalized(source))))


def test_generate_countdown_environment():
    prog = env_of(COUNTDOWN)
    (struct,) = [it for it in prog.items if isinstance(it, A.StructDef)]
    assert struct.name == "env_countdown"
    assert layout_of(split_of(COUNTDOWN).functions[0]) == [("x", "int")]
    text = print_program(prog)
    assert "e = malloc(sizeof(struct env_countdown));" in text
    assert "e->x = x;" in text
    assert "e->x <= 0" in text
    f = prog.functions[0]
    loop, timeout = f.inner_functions()
    assert [p.type for p in loop.params] == ["struct env_countdown*"]
    assert A.ExprStmt(A.Call("free", [A.Var("e")], False)) in timeout.body
    assert "free" not in print_program(A.Program([loop]))


def test_empty_layout_allocates_nothing():
    src = "cps void main() { yield(); printf(\"done\\n\"); }"
    text = print_program(env_of(src))
    assert "malloc" not in text and "free" not in text and "struct" not in text
    for config in PIPELINES:
        if config.data == "env":
            res = run_event_loop(compile_program(checked(src), config).ir)
            assert res.report["allocs"] == 0


def test_env_two_exits_balance():
    src = """
    cps void main(int n) {
      int twice = n * 2;
      yield();
      if (twice > 4) { printf("%d\\n", twice); return; }
      printf("small\\n");
    }
    """
    for n in (1, 5):
        res = run_event_loop(compile_program(checked(src), PipelineConfig("callbacks", "env")).ir, [n])
        assert (res.report["allocs"], res.report["releases"]) == (1, 1)
        assert res.report["double_releases"] == 0


def test_env_programs_are_closed():
    prog = float_program(env_of(THREE_STATES))
    for f in prog.functions:
        assert free_variables(f) == set()


# -- defunctionalisation -----------------------------------------------------

def test_defun_countdown():
    prog = defun_program(split_program(rewrite_slots(normalized(COUNTDOWN))), direct_dispatch=False)
    (enum,) = [it for it in prog.items if isinstance(it, A.EnumDef)]
    assert len(enum.tags) == 2
    loop_tag, timeout_tag = enum.tags
    (dispatch,) = prog.functions[0].inner_functions()
    (switch,) = [s for s in dispatch.body if isinstance(s, A.Switch)]
    cases = [s.tag for s in switch.body if isinstance(s, A.Case)]
    assert cases == [loop_tag, timeout_tag]
    text = print_program(prog)
    assert f"cpc_sleep(1);\n        dispatch({loop_tag});\n        return;" in text
    assert not stmts_of(dispatch, A.Goto)


def test_defun_goto_optimisation():
    prog = defun_program(split_program(rewrite_slots(normalized(COUNTDOWN))))
    (dispatch,) = prog.functions[0].inner_functions()
    (goto,) = stmts_of(dispatch, A.Goto)
    labels = [s.name for s in stmts_of(dispatch, A.Label)]
    assert labels == [goto.label]
    text = print_program(prog)
    # the call after cpc_sleep stays a call
    assert "cpc_sleep(1);\n        dispatch(" in text


def test_defun_single_state():
    say = A.ExprStmt(A.Call("printf", [A.StrLit("a\n")], False))
    only = A.FunDef("__l0", True, [], "void", [say, A.Return()])
    split = A.Program([A.FunDef("main", True, [], "void", [
        only, A.ExprStmt(A.Call("__l0", [], True)), A.Return()])], "main")
    prog = defun_program(split)
    (enum,) = [it for it in prog.items if isinstance(it, A.EnumDef)]
    (dispatch,) = prog.functions[0].inner_functions()
    (switch,) = [s for s in dispatch.body if isinstance(s, A.Switch)]
    assert len(enum.tags) == 1
    assert len([s for s in switch.body if isinstance(s, A.Case)]) == 1


def test_defun_without_direct_transitions_unchanged():
    src = """
    cps void main(int n) {
      while (n > 0) { n--; yield(); }
    }
    """
    base = split_program(rewrite_slots(normalized(src)))
    plain = defun_program(base, direct_dispatch=False)
    opt = defun_program(base)
    gotos = stmts_of(opt.functions[0].inner_functions()[0], A.Goto)
    # the loop test jumps directly to the exit: that is the only direct transition
    assert len(gotos) == 1
    src2 = "cps void main() { yield(); yield(); }"
    base2 = split_program(rewrite_slots(normalized(src2)))
    assert defun_program(base2) == defun_program(base2, direct_dispatch=False)


LOOP_BRANCHES = """
cps void main(int n) {
  int i = 0;
  while (i < n) {
    i++;
    if (i % 2 == 0) {
      yield();
    } else {
      cpc_sleep(1);
    }
  }
  printf("%d\\n", i);
}
"""


def test_defun_only_direct_transitions_become_gotos():
    base = split_program(rewrite_slots(normalized(LOOP_BRANCHES)))
    inner = base.functions[0].inner_functions()
    direct = 0
    names = {g.name for g in inner}
    for g in inner:
        for s in A.walk_stmts(g.body):
            if isinstance(s, A.ExprStmt) and isinstance(s.expr, A.Call) and s.expr.name in names:
                direct += 1
    opt = defun_program(base)
    (dispatch,) = opt.functions[0].inner_functions()
    gotos = stmts_of(dispatch, A.Goto)
    calls_after_prims = [s for s in A.walk_stmts(dispatch.body)
                         if isinstance(s, A.ExprStmt) and s.expr.name in ("yield", "cpc_sleep")]
    assert len(calls_after_prims) == 2
    after_cps = len(calls_after_prims)
    assert len(gotos) == direct - after_cps == 4
    for n in (0, 3, 4):
        assert lines(opt, [n]) == interp_lines(LOOP_BRANCHES, [n])


# -- cps conversion ----------------------------------------------------------

def test_cps_countdown():
    ir = compile_program(checked(COUNTDOWN), PipelineConfig()).ir
    text = print_program(ir)
    assert "cpc_sleep(1, push(countdown__l0, x, k));\n  return;" in text
    assert "invoke(k);" in text
    assert converted_names(ir) == {"countdown", "countdown__l0", "countdown__l1"}
    for f in ir.functions:
        assert not f.is_cps
        assert f.params[-1].type == "cont*"


def test_cps_leaves_plain_functions_alone():
    prog = compile_program(checked(ACCEPT), PipelineConfig()).stages["lift"]
    helper = fn(prog, "accept")
    assert fn(cps_convert(prog), "accept") == helper


def test_cps_env_countdown():
    ir = compile_program(checked(COUNTDOWN), PipelineConfig("callbacks", "env")).ir
    text = print_program(ir)
    assert "push(countdown__l0, e, k)" in text
    l1 = fn(ir, "countdown__l1")
    names = [s.expr.name for s in l1.body if isinstance(s, A.ExprStmt)]
    assert names.index("free") < names.index("invoke")
    for config in PIPELINES:
        res = run_event_loop(compile_program(checked(COUNTDOWN), config).ir, [3])
        assert trace_lines(res.trace) == COUNTDOWN_TRACE


def test_lift_mode_return_value_rides_on_the_continuation():
    ir = compile_program(checked(ACCEPT), PipelineConfig()).ir
    text = print_program(ir)
    assert "invoke_v(" in text or "invoke(" in text
    assert_agree(ACCEPT, world=__import__("coopc.sched", fromlist=["World"]).World.parse(
        "tick 2 ready 3 IN\n"))
