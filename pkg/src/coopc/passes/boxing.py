"""Boxing of extruded variables and return-slot rewriting.

A variable is extruded when its address is taken.  Boxing moves it into a
heap cell allocated at function entry and released before every return, so
that later passes which copy variables (lambda lifting, CPS frames) copy
the cell reference rather than the value.

Return slots turn a cps function returning ``T`` into a void function with
an extra ``T *__slot`` parameter; the caller passes the address of the
variable that receives the result.
"""

from __future__ import annotations

from .. import ast as A
from .util import Fresh, expr_type, is_cps_call

SLOT = "__slot"


def extruded(f: A.FunDef) -> list:
    """Names whose address is taken in ``f``, in order of first use."""
    names = []
    for e in A.all_exprs(f.body):
        if isinstance(e, A.AddrOf):
            inner = e.expr
            if isinstance(inner, A.Index):
                inner = inner.base
            if isinstance(inner, A.Var) and inner.name not in names:
                names.append(inner.name)
    types = A.var_types(f)
    return [n for n in names if n in types and not A.is_pointer(types[n])]


def insert_before_returns(stmts, make) -> list:
    """Rewrite ``stmts`` so that ``make(ret)`` replaces every Return.

    ``make`` returns a list of statements.  Nested blocks are rewritten
    recursively; nested function definitions are left alone.
    """
    return replace_stmts(stmts, lambda s: isinstance(s, A.Return), make)


def replace_stmts(stmts, match, make) -> list:
    """Replace every statement satisfying ``match`` by the list ``make(s)``."""
    out = []
    for s in stmts:
        if match(s):
            out.extend(make(s))
        elif isinstance(s, A.Block):
            out.append(A.Block(replace_stmts(s.stmts, match, make), s.pos))
        elif isinstance(s, A.If):
            els = A.Block(replace_stmts(s.els.stmts, match, make)) if s.els is not None else None
            out.append(A.If(s.cond, A.Block(replace_stmts(s.then.stmts, match, make)), els, s.pos))
        elif isinstance(s, A.While):
            out.append(A.While(s.cond, A.Block(replace_stmts(s.body.stmts, match, make)), s.pos))
        elif isinstance(s, A.For):
            out.append(A.For(s.init, s.cond, s.step,
                             A.Block(replace_stmts(s.body.stmts, match, make)), s.pos))
        elif isinstance(s, A.Switch):
            out.append(A.Switch(s.subject, replace_stmts(s.body, match, make), s.pos))
        else:
            out.append(s)
    return out


def _falls_off(stmts) -> bool:
    return not stmts or not isinstance(stmts[-1], (A.Return, A.Goto))


def _split_decls(f: A.FunDef):
    """Leading declarations of a goto-form body, and the rest."""
    i = 0
    while i < len(f.body) and isinstance(f.body[i], A.VarDecl) and f.body[i].init is None:
        i += 1
    return f.body[:i], f.body[i:]


def box_function(f: A.FunDef) -> A.FunDef:
    """Box the extruded variables of ``f`` (a goto-form or structured body)."""
    names = extruded(f)
    if not names:
        return f
    types = A.var_types(f)
    taken = set(types)
    box = {}
    for n in names:
        b = f"{n}__box"
        while b in taken:
            b += "_"
        taken.add(b)
        box[n] = b
    temps = Fresh("__t", taken)

    def rewrite(e):
        if isinstance(e, A.AddrOf):
            inner = e.expr
            if isinstance(inner, A.Var) and inner.name in box:
                return A.Var(box[inner.name], e.pos)
            if isinstance(inner, A.Index) and isinstance(inner.base, A.Var) and inner.base.name in box:
                return A.AddrOf(A.Index(A.Var(box[inner.base.name]),
                                        A.rewrite_expr(inner.index, rewrite)), e.pos)
            return None
        if isinstance(e, A.Var) and e.name in box:
            if A.is_array(types[e.name]):
                return A.Var(box[e.name], e.pos)
            return A.Index(A.Var(box[e.name]), A.IntLit(0), e.pos)
        return None

    new_decls = []
    entry = []
    for n in names:
        ty = types[n]
        info = A.array_info(ty)
        elem, size = (info[0], info[1]) if info else (ty, 1)
        new_decls.append(A.VarDecl(box[n], elem + "*", None))
        entry.append(A.Assign(A.Var(box[n]), A.Call("malloc", [A.IntLit(size)], False)))
        if any(p.name == n for p in f.params):
            entry.append(A.Assign(A.Index(A.Var(box[n]), A.IntLit(0)), A.Var(n)))

    def strip(stmts):
        out = []
        for s in stmts:
            if isinstance(s, A.VarDecl) and s.name in box:
                if s.init is not None:
                    out.append(A.Assign(A.Var(s.name), s.init, s.pos))
                continue
            if isinstance(s, A.Block):
                s = A.Block(strip(s.stmts), s.pos)
            elif isinstance(s, A.If):
                s = A.If(s.cond, A.Block(strip(s.then.stmts)),
                         A.Block(strip(s.els.stmts)) if s.els is not None else None, s.pos)
            elif isinstance(s, A.While):
                s = A.While(s.cond, A.Block(strip(s.body.stmts)), s.pos)
            elif isinstance(s, A.For):
                init = s.init
                if init is not None:
                    got = strip([init])
                    init = got[0] if len(got) == 1 else (A.Block(got) if got else None)
                s = A.For(init, s.cond, s.step, A.Block(strip(s.body.stmts)), s.pos)
            out.append(s)
        return out

    frees = lambda: [A.ExprStmt(A.Call("free", [A.Var(box[n])], False)) for n in names]

    def at_return(r: A.Return):
        if r.value is None or isinstance(r.value, (A.IntLit, A.BoolLit)):
            return frees() + [r]
        t = temps()
        new_decls.append(A.VarDecl(t, types_of(r.value), None))
        return [A.Assign(A.Var(t), r.value)] + frees() + [A.Return(A.Var(t), r.pos)]

    def types_of(e):
        return expr_type(e, types, {})

    decls, rest = _split_decls(f)
    decls = [d for d in decls if d.name not in box]
    rest = strip(rest)
    # a cps call cannot deliver its result into a cell, so go through a temporary
    def boxed_call(s):
        return isinstance(s, A.Assign) and isinstance(s.target, A.Var) \
            and s.target.name in box and is_cps_call(s.value)

    def via_temp(s):
        t = temps()
        new_decls.append(A.VarDecl(t, types[s.target.name], None))
        return [A.Assign(A.Var(t), s.value, s.pos), A.Assign(s.target, A.Var(t))]

    rest = replace_stmts(rest, boxed_call, via_temp)
    if _falls_off(rest):
        rest = rest + [A.Return(None)] if f.ret_type == "void" else rest
    rest = [A.map_stmt_exprs(s, rewrite, top_down=True) for s in rest]
    rest = insert_before_returns(rest, lambda r: at_return(r))
    if _falls_off(rest):
        rest = rest + frees()
    body = decls + new_decls + entry + rest
    return A.FunDef(f.name, f.is_cps, list(f.params), f.ret_type, body, f.pos)


def box_program(prog: A.Program) -> A.Program:
    items = [box_function(it) if isinstance(it, A.FunDef) else it for it in prog.items]
    return A.Program(items, prog.entry)


def box_noncps(prog: A.Program) -> A.Program:
    """Box only non-cps functions (environment pipelines house cps locals)."""
    items = [box_function(it) if isinstance(it, A.FunDef) and not it.is_cps else it
             for it in prog.items]
    return A.Program(items, prog.entry)


# -- return slots ------------------------------------------------------------

def _slot_calls(stmts, slotted: dict) -> list:
    """Rewrite ``v = f(args)`` into ``f(args, &v)`` and spawns of slotted functions."""
    out = []
    for s in stmts:
        if isinstance(s, A.Assign) and isinstance(s.value, A.Call) and s.value.name in slotted \
                and s.value.cps:
            c = s.value
            out.append(A.ExprStmt(A.Call(c.name, list(c.args) + [A.AddrOf(s.target)], True, c.pos), s.pos))
        elif isinstance(s, A.Spawn) and s.call.name in slotted:
            c = s.call
            sink = A.Call("__sink", [], False)
            out.append(A.Spawn(A.Call(c.name, list(c.args) + [sink], c.cps, c.pos), s.pos))
        elif isinstance(s, A.Block):
            out.append(A.Block(_slot_calls(s.stmts, slotted), s.pos))
        elif isinstance(s, A.If):
            out.append(A.If(s.cond, A.Block(_slot_calls(s.then.stmts, slotted)),
                            A.Block(_slot_calls(s.els.stmts, slotted)) if s.els is not None else None,
                            s.pos))
        elif isinstance(s, A.While):
            out.append(A.While(s.cond, A.Block(_slot_calls(s.body.stmts, slotted)), s.pos))
        elif isinstance(s, A.For):
            out.append(A.For(s.init, s.cond, s.step, A.Block(_slot_calls(s.body.stmts, slotted)), s.pos))
        else:
            out.append(s)
    return out


def rewrite_slots(prog: A.Program) -> A.Program:
    """Give every non-void cps function a return slot (goto-form input)."""
    slotted = {f.name: f.ret_type for f in prog.functions if f.is_cps and f.ret_type != "void"}
    items = []
    for it in prog.items:
        if not isinstance(it, A.FunDef):
            items.append(it)
            continue
        body = _slot_calls(it.body, slotted)
        params = list(it.params)
        ret = it.ret_type
        if it.name in slotted:
            params.append(A.Param(SLOT, ret + "*"))

            def write(r: A.Return):
                return [A.Assign(A.Deref(A.Var(SLOT)), r.value), A.Return(None, r.pos)]
            body = insert_before_returns(body, write)
            ret = "void"
        items.append(A.FunDef(it.name, it.is_cps, params, ret, body, it.pos))
    return A.Program(items, prog.entry)
