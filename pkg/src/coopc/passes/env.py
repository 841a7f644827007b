"""Shared environments: one heap record per cps activation.

``prepare_environments`` runs on goto form, before splitting: it gives each
cps function an opaque handle ``__env``, puts a release marker
``free(__env)`` before every return (exits are easy to find at this stage)
and rewrites non-void cps functions to use return slots.

``generate_environments`` runs after splitting (and after defunctionalising
in the state-machine pipeline).  It builds the layout ``struct env_<f>``
from the parameters and locals, allocates it on entry, copies parameters
in, turns every variable access into a field access, and passes the handle
to each inner function as its last parameter.  Release markers become real
releases.  A function with an empty layout allocates nothing and passes a
null handle.
"""

from __future__ import annotations

from .. import ast as A
from .boxing import box_noncps, insert_before_returns, rewrite_slots

ENV = "__env"


def _with_release(f: A.FunDef) -> A.FunDef:
    i = 0
    while i < len(f.body) and isinstance(f.body[i], A.VarDecl) and f.body[i].init is None:
        i += 1
    decls, rest = f.body[:i], f.body[i:]
    release = lambda r: [A.ExprStmt(A.Call("free", [A.Var(ENV)], False)), r]
    rest = insert_before_returns(rest, release)
    body = decls + [A.VarDecl(ENV, "void*", None)] + rest
    return A.FunDef(f.name, f.is_cps, list(f.params), f.ret_type, body, f.pos)


def prepare_environments(prog: A.Program) -> A.Program:
    """Env handles, release markers and return slots on a goto-form program."""
    prog = rewrite_slots(prog)
    prog = box_noncps(prog)
    items = [_with_release(it) if isinstance(it, A.FunDef) and it.is_cps else it
             for it in prog.items]
    return A.Program(items, prog.entry)


def layout_of(f: A.FunDef) -> list:
    """(name, type) of every parameter and local of ``f`` except the handle."""
    fields = [(p.name, p.type) for p in f.params]
    for s in A.walk_stmts(f.body, into_functions=True):
        if isinstance(s, A.VarDecl) and s.name != ENV:
            fields.append((s.name, s.type))
    return fields


def _is_release(s) -> bool:
    return (isinstance(s, A.ExprStmt) and isinstance(s.expr, A.Call) and s.expr.name == "free"
            and len(s.expr.args) == 1 and isinstance(s.expr.args[0], A.Var)
            and s.expr.args[0].name == ENV)


def _drop_releases(stmts) -> list:
    out = []
    for s in stmts:
        if _is_release(s):
            continue
        if isinstance(s, A.If):
            s = A.If(s.cond, A.Block(_drop_releases(s.then.stmts)),
                     A.Block(_drop_releases(s.els.stmts)) if s.els is not None else None, s.pos)
        elif isinstance(s, A.Block):
            s = A.Block(_drop_releases(s.stmts), s.pos)
        elif isinstance(s, A.Switch):
            s = A.Switch(s.subject, _drop_releases(s.body), s.pos)
        out.append(s)
    return out


def generate_environments(f: A.FunDef, structs: list) -> A.FunDef:
    """Environment-based data flow for one split cps function.

    The generated layout, if any, is appended to ``structs``.
    """
    fields = layout_of(f)
    names = {n for n, _ in fields}
    inner_fns = f.inner_functions()
    inner = {g.name for g in inner_fns}
    env = "e" if "e" not in names and "e" not in inner else ENV
    empty = not fields
    if empty:
        env_type = "void*"
    else:
        sname = f"env_{f.name}"
        structs.append(A.StructDef(sname, [A.Param(n, t) for n, t in fields]))
        env_type = f"struct {sname}*"

    def access(e):
        if isinstance(e, A.Var):
            if e.name in names:
                return A.EnvField(env, e.name, e.pos)
            if e.name == ENV:
                return A.Var(env, e.pos)
            return None
        if isinstance(e, A.Call) and e.name in inner:
            return A.Call(e.name, [A.rewrite_expr(a, access) for a in e.args] + [A.Var(env)],
                          e.cps, e.pos)
        return None

    def convert(stmts):
        if empty:
            stmts = _drop_releases(stmts)
        return [A.map_stmt_exprs(s, access, top_down=True) for s in stmts
                if not isinstance(s, (A.VarDecl, A.FunDef))]

    new_inner = []
    for g in inner_fns:
        params = list(g.params) + [A.Param(env, env_type)]
        new_inner.append(A.FunDef(g.name, g.is_cps, params, g.ret_type, convert(g.body), g.pos))
    if empty:
        head = [A.VarDecl(env, "void*", None)]
    else:
        head = [A.VarDecl(env, env_type, A.EnvAlloc(sname))]
        for p in f.params:
            head.append(A.Assign(A.EnvField(env, p.name), A.Var(p.name)))
    body = head + new_inner + convert([s for s in f.body if not isinstance(s, A.FunDef)])
    return A.FunDef(f.name, f.is_cps, list(f.params), f.ret_type, body, f.pos)


def generate_program(prog: A.Program) -> A.Program:
    """Apply :func:`generate_environments` to every cps function.

    Layouts are emitted before the functions that use them.
    """
    items = []
    for it in prog.items:
        if isinstance(it, A.FunDef) and it.is_cps:
            structs = []
            g = generate_environments(it, structs)
            items.extend(structs)
            items.append(g)
        else:
            items.append(it)
    return A.Program(items, prog.entry)
