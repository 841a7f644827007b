"""Control lowering: structured statements to if/goto form.

The result of :func:`lower_control` contains only declarations (hoisted to
the top), assignments, expression statements, spawns, labels, ``goto L``,
``if (c) goto L`` and returns.  ``&&``/``||`` disappear into jumping code, and
every cps call is linearised into its own statement in evaluation order,
either ``f(args);`` or ``v = f(args);`` with ``v`` a plain local.
"""

from __future__ import annotations

from .. import ast as A
from .util import Fresh, expr_type, functions_by_name, map_functions, negate


def _is_logic(e) -> bool:
    return isinstance(e, A.Binary) and e.op in ("&&", "||")


def _needs_work(e) -> bool:
    return any(_is_logic(x) or (isinstance(x, A.Call) and x.cps) for x in A.walk_expr(e))


def _is_literal(e) -> bool:
    return isinstance(e, (A.IntLit, A.BoolLit, A.StrLit))


class _Lowerer:
    def __init__(self, f: A.FunDef, funcs: dict):
        self.f = f
        self.funcs = funcs
        self.types = A.var_types(f)
        taken = set(self.types)
        self.label = Fresh("__l", taken)
        self.temp = Fresh("__t", taken)
        self.decls = []
        self.out = []
        self.loops = []   # (break label, continue label holder)

    # -- helpers --------------------------------------------------------------
    def emit(self, s):
        self.out.append(s)

    def new_temp(self, ty: str) -> str:
        name = self.temp()
        self.types[name] = ty
        self.decls.append(A.VarDecl(name, ty, None))
        return name

    def to_temp(self, e) -> A.Var:
        t = self.new_temp(expr_type(e, self.types, self.funcs))
        self.emit(A.Assign(A.Var(t), e))
        return A.Var(t)

    # -- expressions ----------------------------------------------------------
    def lin(self, e):
        """Return a copy of ``e`` free of cps calls and ``&&``/``||``."""
        if not _needs_work(e):
            return e
        if _is_logic(e):
            t = self.new_temp("bool")
            end = self.label()
            self.emit(A.Assign(A.Var(t), A.BoolLit(False)))
            self.cond_false(e, end)
            self.emit(A.Assign(A.Var(t), A.BoolLit(True)))
            self.emit(A.Label(end))
            return A.Var(t)
        if isinstance(e, A.Call):
            call = A.Call(e.name, self.lin_list(e.args), e.cps, e.pos)
            if e.cps:
                return self.to_temp(call)
            return call
        if isinstance(e, A.Binary):
            left, right = self.lin_list([e.left, e.right])
            return A.Binary(e.op, left, right, e.pos)
        if isinstance(e, A.Index):
            base, index = self.lin_list([e.base, e.index], keep_first=True)
            return A.Index(base, index, e.pos)
        if isinstance(e, A.Unary):
            return A.Unary(e.op, self.lin(e.expr), e.pos)
        if isinstance(e, A.Deref):
            return A.Deref(self.lin(e.expr), e.pos)
        if isinstance(e, A.AddrOf):
            inner = e.expr
            if isinstance(inner, A.Index):
                return A.AddrOf(A.Index(inner.base, self.lin(inner.index)), e.pos)
            return e
        return e

    def lin_list(self, exprs, keep_first: bool = False):
        """Linearise operands left to right.

        Operands evaluated before the last one containing a cps call are saved
        in temporaries so the call cannot change what they read.  With
        ``keep_first`` the first operand (an array base) is left in place.
        """
        last = -1
        for i, x in enumerate(exprs):
            if A.contains_cps_call(x):
                last = i
        out = []
        for i, x in enumerate(exprs):
            y = self.lin(x)
            if i < last and not _is_literal(y) and not (keep_first and i == 0):
                y = self.to_temp(y)
            out.append(y)
        return out

    # -- conditions -----------------------------------------------------------
    def cond_false(self, c, target: str):
        """Jump to ``target`` when ``c`` is false, fall through otherwise."""
        if isinstance(c, A.Binary) and c.op == "&&":
            self.cond_false(c.left, target)
            self.cond_false(c.right, target)
        elif isinstance(c, A.Binary) and c.op == "||":
            skip = self.label()
            self.cond_true(c.left, skip)
            self.cond_false(c.right, target)
            self.emit(A.Label(skip))
        elif isinstance(c, A.Unary) and c.op == "!" and _needs_work(c.expr):
            self.cond_true(c.expr, target)
        else:
            self.emit(A.If(negate(self.lin(c)), A.Block([A.Goto(target)])))

    def cond_true(self, c, target: str):
        if isinstance(c, A.Binary) and c.op == "||":
            self.cond_true(c.left, target)
            self.cond_true(c.right, target)
        elif isinstance(c, A.Binary) and c.op == "&&":
            skip = self.label()
            self.cond_false(c.left, skip)
            self.cond_true(c.right, target)
            self.emit(A.Label(skip))
        elif isinstance(c, A.Unary) and c.op == "!" and _needs_work(c.expr):
            self.cond_false(c.expr, target)
        else:
            self.emit(A.If(self.lin(c), A.Block([A.Goto(target)])))

    # -- statements -----------------------------------------------------------
    def stmts(self, body):
        for s in body:
            self.stmt(s)

    def assign(self, target, value, pos=None):
        plain = isinstance(target, A.Var) and not A.is_array(self.types.get(target.name, "int"))
        if isinstance(value, A.Call) and value.cps and plain:
            self.emit(A.Assign(target, A.Call(value.name, self.lin_list(value.args), True, value.pos), pos))
            return
        v = self.lin(value)
        if _needs_work(target):
            if not _is_literal(v) and not isinstance(v, A.Var):
                v = self.to_temp(v)
            target = self.lin(target)
        self.emit(A.Assign(target, v, pos))

    def stmt(self, s):
        if isinstance(s, A.Block):
            self.stmts(s.stmts)
        elif isinstance(s, A.VarDecl):
            self.decls.append(A.VarDecl(s.name, s.type, None, s.pos))
            if s.init is not None:
                self.assign(A.Var(s.name), s.init, s.pos)
        elif isinstance(s, A.Assign):
            self.assign(s.target, s.value, s.pos)
        elif isinstance(s, A.ExprStmt):
            e = s.expr
            if isinstance(e, A.Call) and e.cps:
                call = A.Call(e.name, self.lin_list(e.args), True, e.pos)
                if expr_type(call, self.types, self.funcs) == "void":
                    self.emit(A.ExprStmt(call, s.pos))
                else:
                    self.to_temp(call)
            else:
                e = self.lin(e)
                if not isinstance(e, A.Var):
                    self.emit(A.ExprStmt(e, s.pos))
        elif isinstance(s, A.Return):
            v = None
            if s.value is not None:
                v = self.lin(s.value)
            self.emit(A.Return(v, s.pos))
        elif isinstance(s, A.Spawn):
            args = self.lin_list(s.call.args)
            self.emit(A.Spawn(A.Call(s.call.name, args, s.call.cps, s.call.pos), s.pos))
        elif isinstance(s, A.If):
            self.lower_if(s)
        elif isinstance(s, A.While):
            top, end = self.label(), self.label()
            self.emit(A.Label(top))
            if not (isinstance(s.cond, A.BoolLit) and s.cond.value):
                self.cond_false(s.cond, end)
            self.loop_body(s.body, end, [top])
            self.emit(A.Goto(top))
            self.emit(A.Label(end))
        elif isinstance(s, A.For):
            self.lower_for(s)
        elif isinstance(s, A.Break):
            self.emit(A.Goto(self.loops[-1][0]))
        elif isinstance(s, A.Continue):
            holder = self.loops[-1][1]
            if holder[0] is None:
                holder[0] = self.label()
            self.emit(A.Goto(holder[0]))
        elif isinstance(s, (A.Label, A.Goto)):
            self.emit(s)
        elif isinstance(s, A.FunDef):
            raise ValueError("nested function in source program")
        else:
            raise TypeError(f"cannot lower {type(s).__name__}")

    def loop_body(self, body, brk, holder):
        self.loops.append((brk, holder))
        self.stmts(body.stmts)
        self.loops.pop()

    def lower_if(self, s: A.If):
        skip = self.label()
        self.cond_false(s.cond, skip)
        self.stmts(s.then.stmts)
        if s.els is None:
            self.emit(A.Label(skip))
            return
        then_jumps = bool(self.out) and isinstance(self.out[-1], (A.Goto, A.Return))
        end = None
        if not then_jumps:
            end = self.label()
            self.emit(A.Goto(end))
        self.emit(A.Label(skip))
        self.stmts(s.els.stmts)
        if end is not None:
            self.emit(A.Label(end))

    def lower_for(self, s: A.For):
        if s.init is not None:
            self.stmt(s.init)
        top, end = self.label(), self.label()
        self.emit(A.Label(top))
        if s.cond is not None:
            self.cond_false(s.cond, end)
        holder = [None]
        if s.step is None:
            holder = [top]
        self.loop_body(s.body, end, holder)
        if s.step is not None:
            if holder[0] is not None:
                self.emit(A.Label(holder[0]))
            self.stmt(s.step)
        self.emit(A.Goto(top))
        self.emit(A.Label(end))

    def run(self) -> A.FunDef:
        self.stmts(self.f.body)
        if not self.out or not isinstance(self.out[-1], (A.Return, A.Goto)):
            rt = self.f.ret_type
            self.emit(A.Return(None if rt == "void" else A.IntLit(0) if rt == "int" else A.BoolLit(False)))
        return A.FunDef(self.f.name, self.f.is_cps, list(self.f.params), self.f.ret_type,
                        self.decls + self.out, self.f.pos)


def lower_control(f: A.FunDef, funcs: dict = None) -> A.FunDef:
    """Lower one checked cps function to goto form."""
    return _Lowerer(f, funcs or {}).run()


def normalize_program(prog: A.Program) -> A.Program:
    funcs = functions_by_name(prog)
    return map_functions(prog, lambda f: lower_control(f, funcs))


def dead_labels(f: A.FunDef) -> set:
    """Labels of a goto-form body that no path from the entry reaches."""
    body = f.body
    index = {s.name: i for i, s in enumerate(body) if isinstance(s, A.Label)}
    seen = set()
    work = [0]
    reached = set()
    while work:
        i = work.pop()
        while i < len(body) and i not in seen:
            seen.add(i)
            s = body[i]
            if isinstance(s, A.Label):
                reached.add(s.name)
            if isinstance(s, A.Goto):
                work.append(index[s.label])
                break
            if isinstance(s, A.Return):
                break
            if isinstance(s, A.If):
                work.append(index[s.then.stmts[0].label])
            i += 1
    return set(index) - reached


def is_goto_form(f: A.FunDef) -> bool:
    """True when ``f`` only uses the statements goto form allows."""
    labels = [s.name for s in f.body if isinstance(s, A.Label)]
    if len(labels) != len(set(labels)):
        return False
    for s in f.body:
        if isinstance(s, A.If):
            if s.els is not None or len(s.then.stmts) != 1 or not isinstance(s.then.stmts[0], A.Goto):
                return False
            if s.then.stmts[0].label not in labels:
                return False
        elif isinstance(s, A.Goto):
            if s.label not in labels:
                return False
        elif not isinstance(s, (A.VarDecl, A.Assign, A.ExprStmt, A.Label, A.Return, A.Spawn)):
            return False
        for e in A.stmt_exprs(s):
            if any(_is_logic(x) for x in A.walk_expr(e)):
                return False
    return True
