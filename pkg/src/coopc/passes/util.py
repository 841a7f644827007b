"""Helpers shared by the passes: fresh names, typing, variable scans."""

from __future__ import annotations

from .. import ast as A


class Fresh:
    """Per-function counter producing ``<prefix><n>`` names."""

    def __init__(self, prefix: str, taken=()):
        self.prefix = prefix
        self.n = 0
        self.taken = set(taken)

    def __call__(self) -> str:
        while True:
            name = f"{self.prefix}{self.n}"
            self.n += 1
            if name not in self.taken:
                self.taken.add(name)
                return name


def expr_type(e, types: dict, funcs: dict) -> str:
    """Static type of a checked expression."""
    if isinstance(e, A.IntLit):
        return "int"
    if isinstance(e, A.BoolLit):
        return "bool"
    if isinstance(e, A.Var):
        return types.get(e.name, "int")
    if isinstance(e, A.Index):
        return A.element_type(expr_type(e.base, types, funcs))
    if isinstance(e, A.Deref):
        return A.pointee(expr_type(e.expr, types, funcs))
    if isinstance(e, A.AddrOf):
        inner = expr_type(e.expr, types, funcs)
        return inner + "*"
    if isinstance(e, A.Unary):
        return "int" if e.op == "-" else "bool"
    if isinstance(e, A.Binary):
        return "int" if e.op in ("+", "-", "*", "/", "%") else "bool"
    if isinstance(e, A.Call):
        if e.name in funcs:
            return funcs[e.name].ret_type
        if A.canonical_builtin(e.name) in ("malloc", "__sink"):
            return "int*"
        return "void"
    if isinstance(e, A.EnvField):
        return "int"
    return "int"


def vars_used(stmts, into_functions: bool = True) -> set:
    """Names of every variable read or written in ``stmts``."""
    names = set()
    for e in A.all_exprs(stmts, into_functions):
        if isinstance(e, A.Var):
            names.add(e.name)
        elif isinstance(e, A.EnvField):
            names.add(e.env)
    return names


def declared(stmts) -> list:
    """VarDecls directly in ``stmts`` (not inside nested functions), in order."""
    return [s for s in A.walk_stmts(stmts) if isinstance(s, A.VarDecl)]


def is_tail_stmt(s) -> bool:
    return isinstance(s, (A.Return, A.Goto))


def ends_in_jump(stmts) -> bool:
    return bool(stmts) and is_tail_stmt(stmts[-1])


def map_functions(prog: A.Program, fn) -> A.Program:
    """Apply ``fn`` to every cps function of ``prog``; other items are kept."""
    items = []
    for it in prog.items:
        if isinstance(it, A.FunDef) and it.is_cps:
            res = fn(it)
            items.extend(res if isinstance(res, list) else [res])
        else:
            items.append(it)
    return A.Program(items, prog.entry)


def functions_by_name(prog: A.Program) -> dict:
    return {f.name: f for f in prog.functions}


def is_cps_call(e) -> bool:
    return isinstance(e, A.Call) and bool(e.cps)


def negate(c):
    """Logical negation, flipping comparisons instead of wrapping them."""
    flips = {"<": ">=", ">=": "<", ">": "<=", "<=": ">", "==": "!=", "!=": "=="}
    if isinstance(c, A.Binary) and c.op in flips:
        return A.Binary(flips[c.op], c.left, c.right, c.pos)
    if isinstance(c, A.Unary) and c.op == "!":
        return c.expr
    if isinstance(c, A.BoolLit):
        return A.BoolLit(not c.value, c.pos)
    return A.Unary("!", c, c.pos)
