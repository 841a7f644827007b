"""Name resolution, cps-context rule and type checking for source programs.

``check`` returns an annotated copy of the program: every call carries its
``cps`` flag, direction constants are folded to integers, and shadowing
declarations are renamed so that every local name is unique within its
function (later passes flatten block scopes).
"""

from __future__ import annotations

import re

from . import ast as A
from .parser import CompileError, Diagnostic

_FORMAT_RE = re.compile(r"%(.)", re.DOTALL)


def format_arity(fmt: str):
    """Number of ``%d`` conversions in a print format, or None if invalid."""
    n = 0
    for m in _FORMAT_RE.finditer(fmt):
        if m.group(1) == "d":
            n += 1
        elif m.group(1) != "%":
            return None
    if fmt.replace("%%", "").endswith("%"):
        return None
    return n


class _Scope:
    def __init__(self, parent=None):
        self.parent = parent
        self.names = {}

    def lookup(self, name):
        s = self
        while s is not None:
            if name in s.names:
                return s.names[name]
            s = s.parent
        return None


class Checker:
    def __init__(self, prog: A.Program):
        self.prog = prog
        self.errors = []
        self.funcs = {f.name: f for f in prog.functions}

    def err(self, node, message):
        pos = getattr(node, "pos", None) or (0, 0)
        self.errors.append(Diagnostic(pos[0], pos[1], message))

    def run(self) -> A.Program:
        prog = self.prog
        for it in prog.items:
            if not isinstance(it, A.FunDef):
                self.err(it, "only function definitions are allowed at top level")
        if prog.entry is None or prog.entry not in self.funcs:
            self.errors.append(Diagnostic(1, 1, "no entry function (define 'main' or a single cps function)"))
        elif not self.funcs[prog.entry].is_cps:
            self.err(self.funcs[prog.entry], f"entry function '{prog.entry}' must be cps")
        for f in prog.functions:
            self.function(f)
        if self.errors:
            self.errors.sort(key=lambda d: (d.line, d.col))
            raise CompileError(self.errors)
        return prog

    # functions and statements
    def function(self, f: A.FunDef):
        self.fn = f
        self.used = set()
        scope = _Scope()
        if f.ret_type not in ("int", "bool", "void"):
            self.err(f, "functions return int, bool or void")
        if A.is_builtin_name(f.name) or f.name.startswith("__"):
            self.err(f, f"reserved function name '{f.name}'")
        for p in f.params:
            if p.type not in ("int", "bool", "int*", "bool*"):
                self.err(p if p.pos else f, f"unsupported parameter type '{p.type}'")
            if p.name in scope.names:
                self.err(f, f"duplicate parameter '{p.name}'")
            self.declare(scope, p, f)
        self.loop_depth = 0
        self.block(f.body, scope)

    def declare(self, scope, node, where):
        name = node.name
        if name.startswith("__"):
            self.err(where, f"reserved identifier '{name}'")
        unique = name
        k = 1
        while unique in self.used:
            unique = f"{name}_{k}"
            k += 1
        self.used.add(unique)
        scope.names[name] = (unique, node.type)
        node.name = unique

    def block(self, stmts, scope):
        for s in stmts:
            self.stmt(s, scope)

    def stmt(self, s, scope):
        if isinstance(s, A.Block):
            self.block(s.stmts, _Scope(scope))
        elif isinstance(s, A.VarDecl):
            if s.type in ("void",) or (A.is_pointer(s.type) and s.type not in ("int*", "bool*")):
                self.err(s, f"cannot declare variable of type '{s.type}'")
            if s.init is not None:
                if A.is_array(s.type):
                    self.err(s, "arrays cannot have initializers")
                t = self.expr(s.init, scope)
                self.assignable(s.type, t, s)
            self.declare(scope, s, s)
        elif isinstance(s, A.Assign):
            tv = self.expr(s.value, scope)
            tt = self.lvalue(s.target, scope)
            if tt is not None:
                self.assignable(tt, tv, s)
        elif isinstance(s, A.If):
            self.cond(s.cond, scope)
            self.block(s.then.stmts, _Scope(scope))
            if s.els is not None:
                self.block(s.els.stmts, _Scope(scope))
        elif isinstance(s, A.While):
            self.cond(s.cond, scope)
            self.loop_depth += 1
            self.block(s.body.stmts, _Scope(scope))
            self.loop_depth -= 1
        elif isinstance(s, A.For):
            inner = _Scope(scope)
            if s.init is not None:
                self.stmt(s.init, inner) if not isinstance(s.init, A.Block) else self.block(s.init.stmts, inner)
            if s.cond is not None:
                self.cond(s.cond, inner)
            if s.step is not None:
                self.stmt(s.step, inner)
            self.loop_depth += 1
            self.block(s.body.stmts, _Scope(inner))
            self.loop_depth -= 1
        elif isinstance(s, (A.Break, A.Continue)):
            if self.loop_depth == 0:
                self.err(s, f"'{'break' if isinstance(s, A.Break) else 'continue'}' outside a loop")
        elif isinstance(s, A.Return):
            rt = self.fn.ret_type
            if s.value is None:
                if rt != "void":
                    self.err(s, f"return without value in function returning {rt}")
            else:
                t = self.expr(s.value, scope)
                if rt == "void":
                    self.err(s, "return with a value in void function")
                else:
                    self.assignable(rt, t, s)
        elif isinstance(s, A.ExprStmt):
            if isinstance(s.expr, A.Call):
                self.call(s.expr, scope, statement=True)
            else:
                self.expr(s.expr, scope)
                self.err(s, "expression statement has no effect")
        elif isinstance(s, A.Spawn):
            callee = self.funcs.get(s.call.name)
            if callee is None or not callee.is_cps:
                self.err(s, f"spawn requires a cps function, got '{s.call.name}'")
            self.call(s.call, scope, statement=True, spawned=True)
        else:
            self.err(s, f"{type(s).__name__.lower()} is not allowed in source programs")

    def cond(self, e, scope):
        t = self.expr(e, scope)
        if t not in ("int", "bool", None):
            self.err(e, f"condition must be int or bool, not {t}")

    def assignable(self, target, value, node):
        if value is None or target is None:
            return
        if target != value:
            self.err(node, f"type mismatch: cannot assign {value} to {target}")

    # expressions
    def lvalue(self, e, scope):
        if isinstance(e, A.Var):
            t = self.expr(e, scope)
            if t is not None and A.is_array(t):
                self.err(e, "cannot assign to an array")
                return None
            return t
        if isinstance(e, (A.Index, A.Deref)):
            return self.expr(e, scope)
        self.err(e, "expression is not assignable")
        return None

    def expr(self, e, scope):
        if isinstance(e, A.IntLit):
            return "int"
        if isinstance(e, A.BoolLit):
            return "bool"
        if isinstance(e, A.StrLit):
            self.err(e, "string literals are only allowed as print formats")
            return None
        if isinstance(e, A.Var):
            if e.name in A.IO_DIRECTIONS and scope.lookup(e.name) is None:
                return "dir"
            hit = scope.lookup(e.name)
            if hit is None:
                self.err(e, f"undeclared variable '{e.name}'")
                return None
            e.name = hit[0]
            return hit[1]
        if isinstance(e, A.Index):
            tb = self.expr(e.base, scope)
            ti = self.expr(e.index, scope)
            if ti not in ("int", None):
                self.err(e.index, "array index must be int")
            if tb is None:
                return None
            if not (A.is_array(tb) or A.is_pointer(tb)):
                self.err(e, f"cannot index a value of type {tb}")
                return None
            return A.element_type(tb)
        if isinstance(e, A.AddrOf):
            inner = e.expr
            if isinstance(inner, A.Var):
                t = self.expr(inner, scope)
                if t not in ("int", "bool"):
                    if t is not None:
                        self.err(e, "address-of applies only to int or bool variables and array elements")
                    return None
                return t + "*"
            if isinstance(inner, A.Index):
                t = self.expr(inner, scope)
                return None if t is None else t + "*"
            self.expr(inner, scope)
            self.err(e, "address-of applies only to variables and array elements")
            return None
        if isinstance(e, A.Deref):
            t = self.expr(e.expr, scope)
            if t is None:
                return None
            if not A.is_pointer(t):
                self.err(e, f"cannot dereference a value of type {t}")
                return None
            return A.pointee(t)
        if isinstance(e, A.Unary):
            t = self.expr(e.expr, scope)
            if e.op == "-":
                if t not in ("int", None):
                    self.err(e, "unary '-' expects int")
                return "int"
            if t not in ("int", "bool", None):
                self.err(e, "'!' expects int or bool")
            return "bool"
        if isinstance(e, A.Binary):
            lt = self.expr(e.left, scope)
            rt = self.expr(e.right, scope)
            if e.op in ("&&", "||"):
                for t, side in ((lt, e.left), (rt, e.right)):
                    if t not in ("int", "bool", None):
                        self.err(side, f"'{e.op}' expects int or bool operands")
                return "bool"
            if e.op in ("==", "!="):
                if lt is not None and rt is not None and (lt != rt or lt not in ("int", "bool")):
                    self.err(e, f"cannot compare {lt} with {rt}")
                return "bool"
            for t, side in ((lt, e.left), (rt, e.right)):
                if t not in ("int", None):
                    self.err(side, f"'{e.op}' expects int operands, not {t}")
            return "bool" if e.op in ("<", "<=", ">", ">=") else "int"
        if isinstance(e, A.Call):
            return self.call(e, scope)
        self.err(e, f"unexpected expression {type(e).__name__}")
        return None

    def fold_direction(self, call, i):
        a = call.args[i]
        if isinstance(a, A.Var) and a.name in A.IO_DIRECTIONS:
            call.args[i] = A.IntLit(A.IO_DIRECTIONS[a.name], a.pos)

    def call(self, c: A.Call, scope, statement=False, spawned=False):
        builtin = A.canonical_builtin(c.name)
        if c.name in self.funcs:
            builtin = None
        if builtin is not None:
            return self.builtin_call(c, builtin, scope, statement)
        callee = self.funcs.get(c.name)
        if callee is None:
            self.err(c, f"call of undefined function '{c.name}'")
            for a in c.args:
                self.expr(a, scope)
            return None
        c.cps = callee.is_cps
        if callee.is_cps and not self.fn.is_cps:
            self.err(c, "cps call in non-cps context")
        if len(c.args) != len(callee.params):
            self.err(c, f"'{c.name}' expects {len(callee.params)} arguments, got {len(c.args)}")
        for a, p in zip(c.args, callee.params):
            self.assignable(p.type, self.expr(a, scope), a)
        for a in c.args[len(callee.params):]:
            self.expr(a, scope)
        if callee.ret_type == "void" and not statement:
            self.err(c, f"void function '{c.name}' used as a value")
        return callee.ret_type

    def builtin_call(self, c, builtin, scope, statement):
        if builtin in A.PRIMITIVES:
            c.cps = True
            if not self.fn.is_cps:
                self.err(c, "cps call in non-cps context")
            if len(c.args) != A.PRIMITIVES[builtin]:
                self.err(c, f"'{c.name}' expects {A.PRIMITIVES[builtin]} arguments, got {len(c.args)}")
                return "void"
            if builtin == "io_wait":
                self.fold_direction(c, 1)
                d = c.args[1]
                if not (isinstance(d, A.IntLit) and d.value in (0, 1)):
                    self.err(d, "io_wait direction must be IN or OUT")
            for a in c.args[:1]:
                if self.expr(a, scope) not in ("int", None):
                    self.err(a, f"'{c.name}' expects an int argument")
            if builtin == "sleep" and isinstance(c.args[0], A.IntLit) and c.args[0].value < 0:
                self.err(c.args[0], "sleep with negative ticks")
            if not statement:
                self.err(c, f"'{c.name}' returns no value")
            return "void"
        c.cps = False
        if builtin == "print":
            if not c.args or not isinstance(c.args[0], A.StrLit):
                self.err(c, "print expects a format string as first argument")
                return "void"
            n = format_arity(c.args[0].value)
            if n is None:
                self.err(c.args[0], "print formats support only %d and %%")
            elif n != len(c.args) - 1:
                self.err(c, f"print format expects {n} arguments, got {len(c.args) - 1}")
            for a in c.args[1:]:
                if self.expr(a, scope) not in ("int", "bool", None):
                    self.err(a, "print arguments must be int or bool")
            if not statement:
                self.err(c, "print returns no value")
            return "void"
        if builtin == "malloc":
            if len(c.args) != 1 or self.expr(c.args[0], scope) not in ("int", None):
                self.err(c, "malloc expects one int argument")
            return "int*"
        if builtin == "free":
            if len(c.args) != 1:
                self.err(c, "free expects one argument")
                return "void"
            t = self.expr(c.args[0], scope)
            if t not in ("int*", "bool*", None):
                self.err(c, "free expects a pointer")
            if not statement:
                self.err(c, "free returns no value")
            return "void"
        self.err(c, f"'{c.name}' is not available in source programs")
        return None


def check(prog: A.Program) -> A.Program:
    """Return an annotated copy of ``prog``; raises CompileError on errors."""
    return Checker(A.deepcopy(prog)).run()
