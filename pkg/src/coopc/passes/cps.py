"""One-pass partial CPS conversion to EventIR.

Only tails change, which splitting guarantees are the only places cps calls
occur.  Every cps function gets a continuation parameter ``k`` and loses its
cps annotation:

* ``return;``               becomes ``invoke(k); return;``
* ``return v;``             becomes ``invoke(k, v); return;`` (value travels
  as the last argument of the continuation's top frame)
* ``g(a); return;``         becomes ``g(a, k); return;``
* ``f(a); L(b); return;``   becomes ``f(a, push(L, b, k)); return;``
* ``v = f(a); L(b, v); …``  becomes ``f(a, push(L, b, k)); return;``: the
  callee supplies ``v`` when it invokes the continuation.
"""

from __future__ import annotations

from .. import ast as A

CONT_TYPE = "cont*"


class CpsError(Exception):
    pass


def _k_name(f: A.FunDef) -> str:
    taken = set(A.var_types(f))
    return "k" if "k" not in taken else "__k"


def _call_stmt(s):
    if isinstance(s, A.ExprStmt) and isinstance(s.expr, A.Call) and s.expr.cps:
        return s.expr
    return None


def _is_void_return(s) -> bool:
    return isinstance(s, A.Return) and s.value is None


def _convert_list(stmts, k: str, cps_names: set) -> list:
    out = []
    kv = lambda: A.Var(k)
    i = 0
    n = len(stmts)
    while i < n:
        s = stmts[i]
        nxt = stmts[i + 1] if i + 1 < n else None
        nxt2 = stmts[i + 2] if i + 2 < n else None
        value_call = isinstance(s, A.Assign) and isinstance(s.value, A.Call) and s.value.cps
        call = s.value if value_call else _call_stmt(s)
        if call is not None:
            follow = None
            consumed = 0
            if isinstance(nxt, A.ExprStmt) and isinstance(nxt.expr, A.Call) and nxt.expr.cps \
                    and _is_void_return(nxt2):
                follow, consumed = nxt.expr, 3
            elif isinstance(nxt, A.Return) and isinstance(nxt.value, A.Call) and nxt.value.cps:
                follow, consumed = nxt.value, 2
            if follow is not None:
                largs = list(follow.args)
                if value_call:
                    if not largs or largs[-1] != s.target:
                        raise CpsError(f"value of {call.name} is not passed to {follow.name}")
                    largs = largs[:-1]
                push = A.Call("push", [A.FunRef(follow.name)] + largs + [kv()], False)
                out.append(A.ExprStmt(A.Call(call.name, list(call.args) + [push], False, call.pos)))
                out.append(A.Return(None))
                i += consumed
                continue
            if not value_call and _is_void_return(nxt):
                out.append(A.ExprStmt(A.Call(call.name, list(call.args) + [kv()], False, call.pos)))
                out.append(A.Return(None))
                i += 2
                continue
            raise CpsError(f"cps call to {call.name} is not in tail position")
        if isinstance(s, A.Return):
            if s.value is None:
                out.append(A.ExprStmt(A.Call("invoke", [kv()], False)))
            elif isinstance(s.value, A.Call) and s.value.cps:
                c = s.value
                out.append(A.ExprStmt(A.Call(c.name, list(c.args) + [kv()], False, c.pos)))
            else:
                out.append(A.ExprStmt(A.Call("invoke", [kv(), s.value], False)))
            out.append(A.Return(None, s.pos))
        elif isinstance(s, A.If):
            els = A.Block(_convert_list(s.els.stmts, k, cps_names)) if s.els is not None else None
            out.append(A.If(s.cond, A.Block(_convert_list(s.then.stmts, k, cps_names)), els, s.pos))
        elif isinstance(s, A.Switch):
            out.append(A.Switch(s.subject, _convert_list(s.body, k, cps_names), s.pos))
        elif isinstance(s, A.Block):
            out.append(A.Block(_convert_list(s.stmts, k, cps_names), s.pos))
        elif isinstance(s, A.Spawn):
            c = s.call
            out.append(A.Spawn(A.Call(c.name, list(c.args), False, c.pos), s.pos))
        else:
            for e in A.stmt_exprs(s):
                if A.contains_cps_call(e):
                    raise CpsError("cps call outside a tail")
            out.append(s)
        i += 1
    return out


def convert_function(f: A.FunDef, cps_names: set) -> A.FunDef:
    if not f.is_cps:
        return f
    if f.inner_functions():
        raise CpsError(f"{f.name} still has inner functions")
    k = _k_name(f)
    params = list(f.params) + [A.Param(k, CONT_TYPE)]
    return A.FunDef(f.name, False, params, "void", _convert_list(f.body, k, cps_names), f.pos)


def cps_convert(prog: A.Program) -> A.Program:
    """Convert a closed, first-order program to EventIR."""
    cps_names = {f.name for f in prog.functions if f.is_cps}
    items = [convert_function(it, cps_names) if isinstance(it, A.FunDef) else it
             for it in prog.items]
    return A.Program(items, prog.entry)


def converted_names(ir: A.Program) -> set:
    """Functions of an EventIR program that take a continuation."""
    return {f.name for f in ir.functions if f.params and f.params[-1].type == CONT_TYPE}
