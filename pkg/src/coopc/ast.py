"""Abstract syntax shared by the source language and every intermediate form.

The same node family carries a program from parsing down to EventIR: later
passes only add node kinds (labels, gotos, nested functions, environment
fields, switches) instead of switching representation.  Types are plain
strings such as ``int``, ``bool*``, ``int[9]``, ``cont*`` or
``struct env_f*``.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

Pos = Optional[tuple]


# -- expressions -------------------------------------------------------------

@dataclass
class IntLit:
    value: int
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class BoolLit:
    value: bool
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class StrLit:
    value: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Var:
    name: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Index:
    base: "Expr"
    index: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class AddrOf:
    expr: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Deref:
    expr: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Unary:
    op: str
    expr: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Call:
    name: str
    args: list
    # None until checked; True for calls to cps functions and primitives.
    cps: Optional[bool] = None
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class FunRef:
    """A function used as a value; only appears as the first argument of push."""
    name: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class EnvField:
    env: str
    field: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class EnvAlloc:
    layout: str
    pos: Pos = field(default=None, compare=False, repr=False)


Expr = Union[IntLit, BoolLit, StrLit, Var, Index, AddrOf, Deref, Unary, Binary,
             Call, FunRef, EnvField, EnvAlloc]


# -- statements --------------------------------------------------------------

@dataclass
class Block:
    stmts: list
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class VarDecl:
    name: str
    type: str
    init: Optional[Expr] = None
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Assign:
    target: Expr
    value: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class If:
    cond: Expr
    then: Block
    els: Optional[Block] = None
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class While:
    cond: Expr
    body: Block
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class For:
    init: Optional[object]
    cond: Optional[Expr]
    step: Optional[object]
    body: Block
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Break:
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Continue:
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Return:
    value: Optional[Expr] = None
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class ExprStmt:
    expr: Expr
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Label:
    name: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Goto:
    label: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Spawn:
    call: Call
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Case:
    tag: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Switch:
    """C switch over an enum tag; ``body`` is flat, arms start at Case markers."""
    subject: Expr
    body: list
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Param:
    name: str
    type: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class FunDef:
    name: str
    is_cps: bool
    params: list
    ret_type: str
    body: list
    pos: Pos = field(default=None, compare=False, repr=False)

    def inner_functions(self) -> list:
        return [s for s in self.body if isinstance(s, FunDef)]


@dataclass
class StructDef:
    name: str
    fields: list
    pos: Pos = field(default=None, compare=False, repr=False)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.fields):
            if f.name == name:
                return i
        raise KeyError(name)


@dataclass
class EnumDef:
    name: str
    tags: list
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass
class Program:
    items: list
    entry: Optional[str] = None

    @property
    def functions(self) -> list:
        return [i for i in self.items if isinstance(i, FunDef)]

    def function(self, name: str) -> FunDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def structs(self) -> dict:
        return {i.name: i for i in self.items if isinstance(i, StructDef)}

    def enums(self) -> dict:
        return {i.name: i for i in self.items if isinstance(i, EnumDef)}


Stmt = Union[Block, VarDecl, Assign, If, While, For, Break, Continue, Return,
             ExprStmt, Label, Goto, Spawn, Case, Switch, FunDef]


# -- builtins ----------------------------------------------------------------

PRIMITIVES = {
    "sleep": 1,
    "io_wait": 2,
    "cv_wait": 1,
    "cv_signal": 1,
    "cv_broadcast": 1,
    "yield": 0,
}

# Non-cps builtins; print takes a variable number of arguments.
BUILTINS = {"print", "malloc", "free", "__sink"}

INTRINSICS = {"push", "invoke"}

IO_DIRECTIONS = {"IN": 0, "OUT": 1, "CPC_IO_IN": 0, "CPC_IO_OUT": 1}


def canonical_builtin(name: str) -> Optional[str]:
    """Map a call name (including ``cpc_`` aliases) to its builtin, if any."""
    if name == "printf":
        return "print"
    if name.startswith("cpc_") and name[4:] in PRIMITIVES:
        return name[4:]
    if name in PRIMITIVES or name in BUILTINS:
        return name
    return None


def is_primitive(name: str) -> bool:
    b = canonical_builtin(name)
    return b is not None and b in PRIMITIVES


def is_builtin_name(name: str) -> bool:
    return canonical_builtin(name) is not None or name in INTRINSICS


# -- types -------------------------------------------------------------------

_ARRAY_RE = re.compile(r"^(int|bool)\[(\d+)\]$")


def array_info(t: str) -> Optional[tuple]:
    m = _ARRAY_RE.match(t)
    if m:
        return m.group(1), int(m.group(2))
    return None


def is_array(t: str) -> bool:
    return _ARRAY_RE.match(t) is not None


def is_pointer(t: str) -> bool:
    return t.endswith("*")


def pointee(t: str) -> str:
    assert t.endswith("*"), t
    return t[:-1]


def is_env_type(t: str) -> bool:
    return t.startswith("struct ") or t == "void*"


def struct_name(t: str) -> str:
    return t[len("struct "):-1]


def element_type(t: str) -> str:
    info = array_info(t)
    if info:
        return info[0]
    return pointee(t)


# -- traversal helpers -------------------------------------------------------

def deepcopy(node):
    return copy.deepcopy(node)


def child_exprs(e) -> list:
    if isinstance(e, (Index,)):
        return [e.base, e.index]
    if isinstance(e, (AddrOf, Deref, Unary)):
        return [e.expr]
    if isinstance(e, Binary):
        return [e.left, e.right]
    if isinstance(e, Call):
        return list(e.args)
    return []


def walk_expr(e) -> Iterator:
    yield e
    for c in child_exprs(e):
        yield from walk_expr(c)


def stmt_exprs(s) -> list:
    """Expressions directly owned by a statement (not nested statements)."""
    if isinstance(s, VarDecl):
        return [s.init] if s.init is not None else []
    if isinstance(s, Assign):
        return [s.target, s.value]
    if isinstance(s, (If, While)):
        return [s.cond]
    if isinstance(s, For):
        return [s.cond] if s.cond is not None else []
    if isinstance(s, Return):
        return [s.value] if s.value is not None else []
    if isinstance(s, ExprStmt):
        return [s.expr]
    if isinstance(s, Spawn):
        return [s.call]
    if isinstance(s, Switch):
        return [s.subject]
    return []


def child_stmts(s) -> list:
    if isinstance(s, Block):
        return list(s.stmts)
    if isinstance(s, If):
        return [s.then] + ([s.els] if s.els is not None else [])
    if isinstance(s, While):
        return [s.body]
    if isinstance(s, For):
        return [x for x in (s.init, s.step) if x is not None] + [s.body]
    if isinstance(s, Switch):
        return list(s.body)
    return []


def walk_stmts(stmts, into_functions: bool = False) -> Iterator:
    """Yield every statement in ``stmts`` recursively.

    Nested function definitions are yielded but not entered unless
    ``into_functions`` is set.
    """
    for s in stmts:
        yield s
        if isinstance(s, FunDef):
            if into_functions:
                yield from walk_stmts(s.body, True)
            continue
        yield from walk_stmts(child_stmts(s), into_functions)


def all_exprs(stmts, into_functions: bool = False) -> Iterator:
    for s in walk_stmts(stmts, into_functions):
        for e in stmt_exprs(s):
            yield from walk_expr(e)


def contains_cps_call(e) -> bool:
    return any(isinstance(x, Call) and x.cps for x in walk_expr(e))


def map_expr(e, fn):
    """Bottom-up rebuild of an expression; ``fn`` may replace each node."""
    if isinstance(e, Index):
        e = Index(map_expr(e.base, fn), map_expr(e.index, fn), e.pos)
    elif isinstance(e, AddrOf):
        e = AddrOf(map_expr(e.expr, fn), e.pos)
    elif isinstance(e, Deref):
        e = Deref(map_expr(e.expr, fn), e.pos)
    elif isinstance(e, Unary):
        e = Unary(e.op, map_expr(e.expr, fn), e.pos)
    elif isinstance(e, Binary):
        e = Binary(e.op, map_expr(e.left, fn), map_expr(e.right, fn), e.pos)
    elif isinstance(e, Call):
        e = Call(e.name, [map_expr(a, fn) for a in e.args], e.cps, e.pos)
    else:
        e = copy.copy(e)
    return fn(e)


def rewrite_expr(e, fn):
    """Top-down rebuild: ``fn(e)`` returns a replacement or None to descend."""
    r = fn(e)
    if r is not None:
        return r
    if isinstance(e, Index):
        return Index(rewrite_expr(e.base, fn), rewrite_expr(e.index, fn), e.pos)
    if isinstance(e, AddrOf):
        return AddrOf(rewrite_expr(e.expr, fn), e.pos)
    if isinstance(e, Deref):
        return Deref(rewrite_expr(e.expr, fn), e.pos)
    if isinstance(e, Unary):
        return Unary(e.op, rewrite_expr(e.expr, fn), e.pos)
    if isinstance(e, Binary):
        return Binary(e.op, rewrite_expr(e.left, fn), rewrite_expr(e.right, fn), e.pos)
    if isinstance(e, Call):
        return Call(e.name, [rewrite_expr(a, fn) for a in e.args], e.cps, e.pos)
    return copy.copy(e)


def map_stmt_exprs(s, fn, top_down: bool = False):
    """Copy of statement ``s`` (recursively) with every expression rewritten.

    By default ``fn`` is applied bottom-up through :func:`map_expr`; with
    ``top_down`` it goes through :func:`rewrite_expr`.
    """
    if top_down:
        m = lambda e: rewrite_expr(e, fn) if e is not None else None
    else:
        m = lambda e: map_expr(e, fn) if e is not None else None
    rec = lambda x: map_stmt_exprs(x, fn, top_down)
    if isinstance(s, Block):
        return Block([rec(x) for x in s.stmts], s.pos)
    if isinstance(s, VarDecl):
        return VarDecl(s.name, s.type, m(s.init), s.pos)
    if isinstance(s, Assign):
        return Assign(m(s.target), m(s.value), s.pos)
    if isinstance(s, If):
        return If(m(s.cond), rec(s.then),
                  rec(s.els) if s.els is not None else None, s.pos)
    if isinstance(s, While):
        return While(m(s.cond), rec(s.body), s.pos)
    if isinstance(s, For):
        return For(rec(s.init) if s.init is not None else None, m(s.cond),
                   rec(s.step) if s.step is not None else None,
                   rec(s.body), s.pos)
    if isinstance(s, Return):
        return Return(m(s.value), s.pos)
    if isinstance(s, ExprStmt):
        return ExprStmt(m(s.expr), s.pos)
    if isinstance(s, Spawn):
        return Spawn(m(s.call), s.pos)
    if isinstance(s, Switch):
        return Switch(m(s.subject), [rec(x) for x in s.body], s.pos)
    if isinstance(s, FunDef):
        return FunDef(s.name, s.is_cps, list(s.params), s.ret_type,
                      [rec(x) for x in s.body], s.pos)
    return copy.copy(s)


def var_types(f: FunDef, include_inner: bool = True) -> dict:
    """Name -> type for every parameter and declaration of ``f``."""
    types = {}
    for p in f.params:
        types[p.name] = p.type
    for s in walk_stmts(f.body):
        if isinstance(s, VarDecl):
            types[s.name] = s.type
        elif isinstance(s, FunDef) and include_inner:
            types.update(var_types(s))
    return types


def zero_value(t: str):
    if t == "bool":
        return False
    if t == "int" or t.startswith("enum "):
        return 0
    return None
