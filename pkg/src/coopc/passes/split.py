"""Splitting: one inner function per label, gotos become tail calls.

Before splitting, a fresh label is placed after every cps call that is not
already followed by a jump, so that each such call ends its block: the
code after it becomes the continuation block.  Value-returning calls always
get their own continuation label.

Inner functions of a non-void function (only seen when return values travel
through continuations) tail-call with ``return L();``; otherwise tail calls
are written ``L(); return;``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import ast as A
from .util import Fresh

ENTRY = "__entry"


class TailViolation(Exception):
    def __init__(self, function: str, stmt, reason: str):
        self.function = function
        self.stmt = stmt
        self.reason = reason
        pos = getattr(stmt, "pos", None)
        where = f" at {pos[0]}:{pos[1]}" if pos else ""
        super().__init__(f"{function}{where}: {reason}")


def _cps_call_of(s):
    """The cps call performed by statement ``s`` as a whole, if any."""
    if isinstance(s, A.ExprStmt) and isinstance(s.expr, A.Call) and s.expr.cps:
        return s.expr
    if isinstance(s, A.Assign) and isinstance(s.value, A.Call) and s.value.cps:
        return s.value
    return None


def _split_decls(body):
    i = 0
    while i < len(body) and isinstance(body[i], A.VarDecl) and body[i].init is None:
        i += 1
    return body[:i], body[i:]


def tail_call(name: str, args, ret_type: str, pos=None) -> list:
    call = A.Call(name, list(args), True, pos)
    if ret_type == "void":
        return [A.ExprStmt(call, pos), A.Return(None)]
    return [A.Return(call, pos)]


def add_continuation_labels(f: A.FunDef) -> A.FunDef:
    """Label the statement after every cps call not already in tail position."""
    decls, rest = _split_decls(f.body)
    labels = {s.name for s in rest if isinstance(s, A.Label)}
    fresh = Fresh("__l", labels | set(A.var_types(f)))
    out = []
    for i, s in enumerate(rest):
        out.append(s)
        call = _cps_call_of(s)
        if call is None:
            continue
        nxt = rest[i + 1] if i + 1 < len(rest) else None
        if isinstance(s, A.ExprStmt):
            if isinstance(nxt, (A.Goto, A.Label)):
                continue
            if isinstance(nxt, A.Return) and nxt.value is None:
                continue
        out.append(A.Label(fresh()))
    return A.FunDef(f.name, f.is_cps, list(f.params), f.ret_type, decls + out, f.pos)


def split_function(f: A.FunDef) -> A.FunDef:
    """Split a goto-form cps function into nested inner functions."""
    f = add_continuation_labels(f)
    decls, rest = _split_decls(f.body)
    if not any(isinstance(s, A.Label) for s in rest):
        return f
    blocks = []
    if not rest or not isinstance(rest[0], A.Label):
        blocks.append([ENTRY, []])
    for s in rest:
        if isinstance(s, A.Label):
            blocks.append([s.name, []])
        else:
            blocks[-1][1].append(s)
    rt = f.ret_type
    inner = []
    for i, (name, stmts) in enumerate(blocks):
        body = []
        for s in stmts:
            if isinstance(s, A.Goto):
                body.extend(tail_call(s.label, [], rt, s.pos))
                break
            if isinstance(s, A.If):
                target = s.then.stmts[0].label
                body.append(A.If(s.cond, A.Block(tail_call(target, [], rt, s.pos)), None, s.pos))
                continue
            body.append(s)
            if isinstance(s, A.Return):
                break
        else:
            if i + 1 < len(blocks):
                body.extend(tail_call(blocks[i + 1][0], [], rt))
            else:
                body.append(A.Return(None if rt == "void" else A.IntLit(0)))
        inner.append(A.FunDef(name, True, [], rt, body))
    outer_body = decls + inner + tail_call(blocks[0][0], [], rt)
    return A.FunDef(f.name, f.is_cps, list(f.params), rt, outer_body, f.pos)


def split_program(prog: A.Program) -> A.Program:
    items = [split_function(it) if isinstance(it, A.FunDef) and it.is_cps else it
             for it in prog.items]
    return A.Program(items, prog.entry)


# -- tail validation ---------------------------------------------------------

@dataclass
class Tail:
    function: str
    kind: str        # 'a', 'b' or 'c'
    stmt: object


def _classify_list(fname, stmts, inner: set, tails: list):
    i = 0
    n = len(stmts)
    while i < n:
        s = stmts[i]
        call = _cps_call_of(s)
        if call is not None:
            nxt = stmts[i + 1] if i + 1 < n else None
            nxt2 = stmts[i + 2] if i + 2 < n else None
            external = call.name not in inner
            if isinstance(s, A.ExprStmt) and isinstance(nxt, A.Return) and nxt.value is None:
                tails.append(Tail(fname, "b", s))
                i += 2
                continue
            follow = _cps_call_of(nxt) if nxt is not None else None
            if external and follow is not None and isinstance(nxt, A.ExprStmt) \
                    and follow.name in inner and isinstance(nxt2, A.Return) and nxt2.value is None:
                tails.append(Tail(fname, "c", s))
                i += 3
                continue
            if external and isinstance(nxt, A.Return) and isinstance(nxt.value, A.Call) \
                    and nxt.value.cps and nxt.value.name in inner:
                tails.append(Tail(fname, "c", s))
                i += 2
                continue
            raise TailViolation(fname, s, f"cps call to {call.name} is not in tail position")
        if isinstance(s, A.Return):
            if s.value is not None and isinstance(s.value, A.Call) and s.value.cps:
                tails.append(Tail(fname, "b", s))
            elif s.value is not None and A.contains_cps_call(s.value):
                raise TailViolation(fname, s, "cps call nested in a return value")
            else:
                tails.append(Tail(fname, "a", s))
        elif isinstance(s, A.Goto):
            tails.append(Tail(fname, "b", s))
        elif isinstance(s, A.If):
            if A.contains_cps_call(s.cond):
                raise TailViolation(fname, s, "cps call in a condition")
            _classify_list(fname, s.then.stmts, inner, tails)
            if s.els is not None:
                _classify_list(fname, s.els.stmts, inner, tails)
        elif isinstance(s, A.Switch):
            _classify_list(fname, s.body, inner, tails)
        elif isinstance(s, A.Block):
            _classify_list(fname, s.stmts, inner, tails)
        elif isinstance(s, A.FunDef):
            pass
        else:
            for e in A.stmt_exprs(s):
                if isinstance(s, A.Spawn):
                    exprs = e.args
                else:
                    exprs = [e]
                if any(A.contains_cps_call(x) for x in exprs):
                    raise TailViolation(fname, s, "cps call not in tail position")
        i += 1


def validate_tails(f: A.FunDef) -> list:
    """Classify every tail of the inner functions of a split function.

    Returns a list of :class:`Tail`; raises :class:`TailViolation` at the
    first cps call found outside a tail position.
    """
    inner = {g.name for g in f.inner_functions()}
    tails = []
    for g in f.inner_functions():
        before = len(tails)
        _classify_list(g.name, g.body, inner, tails)
        if len(tails) == before:
            # falling off the end is an implicit return
            tails.append(Tail(g.name, "a", None))
    return tails
