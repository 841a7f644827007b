"""Partial defunctionalisation of split functions into state machines.

The inner functions of one cps function are merged into a single inner
function ``dispatch`` taking a state tag; its body is a switch with one arm
per former inner function.  Tail calls between inner functions become
``dispatch(TAG)``.  Free variables are kept, so the result can go through
either lambda lifting or environment generation.

:func:`optimize_direct_dispatch` then replaces every ``dispatch(TAG)`` that
does not follow an external cps call by a jump to a label placed at the
start of the target arm.  A call that follows an external cps call must
stay a call: CPS conversion turns it into the callback pushed for that
external call.
"""

from __future__ import annotations

from .. import ast as A

DISPATCH = "dispatch"


def tag_name(outer: str, inner: str) -> str:
    return f"{outer.upper()}_{inner.lstrip('_').upper()}"


def label_name(inner: str) -> str:
    return f"{inner.lstrip('_')}_label"


def defunctionalize(f: A.FunDef, enums: list) -> A.FunDef:
    """Merge the inner functions of split ``f``; the state enum goes to ``enums``."""
    inner_fns = f.inner_functions()
    if not inner_fns:
        return f
    taken = set(A.var_types(f)) | {g.name for g in inner_fns}
    state = "s" if "s" not in taken else "__s"
    name = DISPATCH if DISPATCH not in taken else "__dispatch"
    tags = {g.name: tag_name(f.name, g.name) for g in inner_fns}
    enum_name = f"{f.name}__state"
    enums.append(A.EnumDef(enum_name, [tags[g.name] for g in inner_fns]))
    rt = f.ret_type

    def redirect(e):
        if isinstance(e, A.Call) and e.name in tags:
            return A.Call(name, [A.Var(tags[e.name])] + list(e.args), e.cps, e.pos)
        return e

    arms = []
    for g in inner_fns:
        arms.append(A.Case(tags[g.name]))
        arms.extend(A.map_stmt_exprs(s, redirect) for s in g.body)
    dispatch = A.FunDef(name, True, [A.Param(state, f"enum {enum_name}")], rt,
                        [A.Switch(A.Var(state), arms)])
    decls = [s for s in f.body if isinstance(s, A.VarDecl)]
    rest = [A.map_stmt_exprs(s, redirect) for s in f.body
            if not isinstance(s, (A.VarDecl, A.FunDef))]
    return A.FunDef(f.name, f.is_cps, list(f.params), rt, decls + [dispatch] + rest, f.pos)


def _dispatch_target(s, dname: str):
    """Tag of a ``dispatch(TAG)`` call made by statement ``s``, if any."""
    call = None
    if isinstance(s, A.ExprStmt):
        call = s.expr
    elif isinstance(s, A.Return):
        call = s.value
    if isinstance(call, A.Call) and call.name == dname and call.args \
            and isinstance(call.args[0], A.Var):
        return call.args[0].name
    return None


def optimize_direct_dispatch(f: A.FunDef) -> A.FunDef:
    """Turn direct transitions of the dispatch function of ``f`` into gotos."""
    inner = f.inner_functions()
    if len(inner) != 1 or not inner[0].body or not isinstance(inner[0].body[0], A.Switch):
        return f
    d = inner[0]
    sw = d.body[0]
    prefix = f.name.upper() + "_"
    tag_to_inner = {s.tag: s.tag[len(prefix):].lower() if s.tag.startswith(prefix) else s.tag.lower()
                    for s in sw.body if isinstance(s, A.Case)}
    targeted = []

    def after_external(stmts, i) -> bool:
        if i == 0:
            return False
        prev = stmts[i - 1]
        call = None
        if isinstance(prev, A.ExprStmt):
            call = prev.expr
        elif isinstance(prev, A.Assign):
            call = prev.value
        return isinstance(call, A.Call) and bool(call.cps) and call.name != d.name

    def rewrite(stmts):
        out = []
        i = 0
        while i < len(stmts):
            s = stmts[i]
            tag = _dispatch_target(s, d.name)
            if tag is not None and not after_external(stmts, i):
                if tag not in targeted:
                    targeted.append(tag)
                out.append(A.Goto(label_name(tag_to_inner[tag]), s.pos))
                # the return that followed the call is now unreachable
                if isinstance(s, A.ExprStmt) and i + 1 < len(stmts) and \
                        isinstance(stmts[i + 1], A.Return):
                    i += 1
                i += 1
                continue
            if isinstance(s, A.If):
                then = rewrite(s.then.stmts)
                els = A.Block(rewrite(s.els.stmts)) if s.els is not None else None
                s = A.If(s.cond, A.Block(then), els, s.pos)
            out.append(s)
            i += 1
        return out

    body = rewrite(sw.body)
    final = []
    for s in body:
        final.append(s)
        if isinstance(s, A.Case) and s.tag in targeted:
            final.append(A.Label(label_name(tag_to_inner[s.tag])))
    nd = A.FunDef(d.name, d.is_cps, list(d.params), d.ret_type,
                  [A.Switch(sw.subject, final, sw.pos)] + d.body[1:], d.pos)
    body = [nd if s is d else s for s in f.body]
    return A.FunDef(f.name, f.is_cps, list(f.params), f.ret_type, body, f.pos)


def defun_program(prog: A.Program, direct_dispatch: bool = True) -> A.Program:
    items = []
    for it in prog.items:
        if isinstance(it, A.FunDef) and it.is_cps:
            enums = []
            g = defunctionalize(it, enums)
            if direct_dispatch:
                g = optimize_direct_dispatch(g)
            items.extend(enums)
            items.append(g)
        else:
            items.append(it)
    return A.Program(items, prog.entry)

