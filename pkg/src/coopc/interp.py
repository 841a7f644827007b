"""Reference interpreter: the semantic oracle for every compiled pipeline.

It executes checked source programs directly, and also every intermediate
form the passes produce before CPS conversion (goto form, boxed code, split
functions with free variables, lifted functions, environments, dispatch
switches), so each pass can be checked by trace equality on its own.

Each task keeps an explicit stack of activations; an activation of a cps
function is a Python generator that yields ``('call', ...)`` or
``('prim', ...)`` requests to the task driver.  Code without cps calls runs
on a plain recursive fast path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ast as A
from .sched import CoopRuntimeError, Scheduler, World, cdiv, cmod, format_print

BREAK = object()
CONTINUE = object()


class _Ret:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


class _Goto:
    __slots__ = ("label",)

    def __init__(self, label):
        self.label = label


@dataclass
class RunResult:
    trace: list
    report: dict = field(default_factory=dict)


class _FnInfo:
    """Per-function facts computed once."""

    def __init__(self, f: A.FunDef, outer: "_FnInfo" = None):
        self.fn = f
        self.decls = [(s.name, s.type) for s in A.walk_stmts(f.body) if isinstance(s, A.VarDecl)]
        own = A.var_types(f, include_inner=False)
        self.types = dict(outer.types) if outer else {}
        self.types.update(own)
        self.arrays = {n for n, t in self.types.items() if A.is_array(t)}
        self.inner = {s.name: s for s in f.body if isinstance(s, A.FunDef)}
        self.outer = outer


class _Act:
    __slots__ = ("info", "vars", "scope")

    def __init__(self, info, vars, scope):
        self.info = info
        self.vars = vars
        self.scope = scope


class _Task:
    __slots__ = ("tid", "stack", "sendval")

    def __init__(self, tid):
        self.tid = tid
        self.stack = []
        self.sendval = None


class Interpreter:
    def __init__(self, prog: A.Program, world: World = None):
        self.prog = prog
        self.sched = Scheduler(world)
        self.funcs = {f.name: f for f in prog.functions}
        self.structs = prog.structs()
        self.tags = {}
        for e in prog.enums().values():
            for i, t in enumerate(e.tags):
                self.tags[t] = i
        self.infos = {}
        self.gen_cache = {}
        self.label_cache = {}
        self.case_cache = {}

    # -- bookkeeping --------------------------------------------------------
    def info(self, f, outer=None):
        key = id(f)
        inf = self.infos.get(key)
        if inf is None:
            inf = self.infos[key] = _FnInfo(f, outer)
        return inf

    def needs_gen(self, s) -> bool:
        key = id(s)
        r = self.gen_cache.get(key)
        if r is None:
            r = False
            for x in A.walk_stmts([s]):
                if isinstance(x, A.FunDef):
                    continue
                for e in A.stmt_exprs(x):
                    if isinstance(x, A.Spawn):
                        if any(A.contains_cps_call(a) for a in e.args):
                            r = True
                    elif A.contains_cps_call(e):
                        r = True
            self.gen_cache[key] = r
        return r

    def labels(self, stmts) -> dict:
        key = id(stmts)
        m = self.label_cache.get(key)
        if m is None:
            m = {s.name: i for i, s in enumerate(stmts) if isinstance(s, A.Label)}
            self.label_cache[key] = m
        return m

    # -- activations ----------------------------------------------------------
    def activate(self, f, args, caller: _Act = None):
        """Create the activation for calling ``f`` from ``caller``."""
        if caller is not None and f.name in caller.scope:
            fdef, defining = caller.scope[f.name]
            info = self.info(fdef, defining.info)
            vars = dict(defining.vars)
            scope = dict(defining.scope)
        else:
            fdef = self.funcs[f.name] if isinstance(f, A.Call) else f
            info = self.info(fdef)
            vars = {}
            scope = {}
        fdef = info.fn
        if len(args) != len(fdef.params):
            raise CoopRuntimeError(f"arity mismatch calling {fdef.name}")
        for p, v in zip(fdef.params, args):
            vars[p.name] = v if A.is_array(p.type) else [v]
        for name, ty in info.decls:
            vars[name] = self.fresh(ty)
        act = _Act(info, vars, scope)
        for name, inner in info.inner.items():
            scope[name] = (inner, act)
        return act

    def fresh(self, ty):
        info = A.array_info(ty)
        if info:
            return [A.zero_value(info[0])] * info[1]
        return [A.zero_value(ty)]

    def resolve(self, name, act):
        if act is not None and name in act.scope:
            return act.scope[name][0]
        f = self.funcs.get(name)
        if f is None:
            raise CoopRuntimeError(f"call of unknown function {name}")
        return f

    # -- driver ---------------------------------------------------------------
    def spawn(self, fname, args):
        f = self.funcs[fname]
        if len(args) + 1 == len(f.params) and f.params[-1].name == "__slot":
            args = list(args) + [([0], 0)]
        task = _Task(self.sched.new_tid())
        act = self.activate(f, args)
        task.stack.append(self.run_fn(act))
        self.sched.make_ready(task)
        return task

    def resume(self, task):
        stack = task.stack
        val = task.sendval
        task.sendval = None
        sched = self.sched
        while stack:
            try:
                req = stack[-1].send(val)
            except StopIteration as stop:
                stack.pop()
                val = stop.value
                continue
            val = None
            if req[0] == "call":
                _, call, args, caller = req
                stack.append(self.run_fn(self.activate(call, args, caller)))
                continue
            name, args = req[1], req[2]
            if name == "sleep":
                sched.sleep(args[0], task)
                return
            if name == "yield":
                sched.make_ready(task)
                return
            if name == "io_wait":
                sched.io_wait(args[0], args[1], task)
                return
            if name == "cv_wait":
                sched.cv_wait(args[0], task)
                return
            if name == "cv_signal":
                sched.cv_signal(args[0])
            elif name == "cv_broadcast":
                sched.cv_broadcast(args[0])
        sched.task_end(task.tid)

    def run(self, entry_args=()) -> RunResult:
        self.spawn(self.prog.entry, list(entry_args))
        trace = self.sched.run(self.resume)
        heap = self.sched.heap
        report = {
            "allocs": heap.allocs,
            "releases": heap.releases,
            "double_releases": heap.double_releases,
            "leaks": heap.leaks,
            "tasks": self.sched.next_tid,
            "max_ready": self.sched.max_ready,
        }
        return RunResult(trace, report)

    # -- statements (generator path) ------------------------------------------
    def run_fn(self, act):
        sig = yield from self.exec_list(act.info.fn.body, act, 0)
        if isinstance(sig, _Ret):
            return sig.value
        return None

    def exec_list(self, stmts, act, pc):
        labels = self.labels(stmts)
        n = len(stmts)
        while pc < n:
            s = stmts[pc]
            pc += 1
            if self.needs_gen(s):
                sig = yield from self.exec_gen(s, act)
            else:
                sig = self.exec_pure(s, act)
            if sig is not None:
                if type(sig) is _Goto and sig.label in labels:
                    pc = labels[sig.label]
                    continue
                return sig
        return None

    def exec_gen(self, s, act):
        if isinstance(s, A.Block):
            return (yield from self.exec_list(s.stmts, act, 0))
        if isinstance(s, A.VarDecl):
            if s.init is not None:
                v = yield from self.gev(s.init, act)
                act.vars[s.name][0] = v
            return None
        if isinstance(s, A.Assign):
            v = yield from self.gev(s.value, act)
            yield from self.gassign(s.target, v, act)
            return None
        if isinstance(s, A.ExprStmt):
            yield from self.gev(s.expr, act)
            return None
        if isinstance(s, A.Return):
            v = None
            if s.value is not None:
                v = yield from self.gev(s.value, act)
            return _Ret(v)
        if isinstance(s, A.If):
            c = yield from self.gev(s.cond, act)
            if c:
                return (yield from self.exec_list(s.then.stmts, act, 0))
            if s.els is not None:
                return (yield from self.exec_list(s.els.stmts, act, 0))
            return None
        if isinstance(s, A.While):
            while True:
                c = yield from self.gev(s.cond, act)
                if not c:
                    return None
                sig = yield from self.exec_list(s.body.stmts, act, 0)
                if sig is BREAK:
                    return None
                if sig is not None and sig is not CONTINUE:
                    return sig
        if isinstance(s, A.For):
            if s.init is not None:
                sig = yield from self.exec_list([s.init], act, 0)
            while True:
                if s.cond is not None:
                    c = yield from self.gev(s.cond, act)
                    if not c:
                        return None
                sig = yield from self.exec_list(s.body.stmts, act, 0)
                if sig is BREAK:
                    return None
                if sig is not None and sig is not CONTINUE:
                    return sig
                if s.step is not None:
                    yield from self.exec_list([s.step], act, 0)
        if isinstance(s, A.Spawn):
            args = []
            for a in s.call.args:
                args.append((yield from self.gev(a, act)))
            self.spawn(s.call.name, args)
            return None
        if isinstance(s, A.Switch):
            body, start = self.switch_start(s, act)
            if start is None:
                return None
            return (yield from self.exec_list(body, act, start))
        return self.exec_pure(s, act)

    def switch_start(self, s, act):
        v = self.ev(s.subject, act)
        key = id(s.body)
        cases = self.case_cache.get(key)
        if cases is None:
            cases = {self.tags[x.tag]: i for i, x in enumerate(s.body) if isinstance(x, A.Case)}
            self.case_cache[key] = cases
        return s.body, cases.get(v)

    # -- statements (pure path) ------------------------------------------------
    def exec_pure_list(self, stmts, act, pc=0):
        labels = self.labels(stmts)
        n = len(stmts)
        while pc < n:
            sig = self.exec_pure(stmts[pc], act)
            pc += 1
            if sig is not None:
                if type(sig) is _Goto and sig.label in labels:
                    pc = labels[sig.label]
                    continue
                return sig
        return None

    def exec_pure(self, s, act):
        t = type(s)
        if t is A.Assign:
            self.assign(s.target, self.ev(s.value, act), act)
            return None
        if t is A.ExprStmt:
            self.ev(s.expr, act)
            return None
        if t is A.If:
            if self.ev(s.cond, act):
                return self.exec_pure_list(s.then.stmts, act)
            if s.els is not None:
                return self.exec_pure_list(s.els.stmts, act)
            return None
        if t is A.VarDecl:
            if s.init is not None:
                act.vars[s.name][0] = self.ev(s.init, act)
            return None
        if t is A.Block:
            return self.exec_pure_list(s.stmts, act)
        if t is A.While:
            while self.ev(s.cond, act):
                sig = self.exec_pure_list(s.body.stmts, act)
                if sig is BREAK:
                    break
                if sig is not None and sig is not CONTINUE:
                    return sig
            return None
        if t is A.For:
            if s.init is not None:
                self.exec_pure(s.init, act)
            while s.cond is None or self.ev(s.cond, act):
                sig = self.exec_pure_list(s.body.stmts, act)
                if sig is BREAK:
                    break
                if sig is not None and sig is not CONTINUE:
                    return sig
                if s.step is not None:
                    self.exec_pure(s.step, act)
            return None
        if t is A.Return:
            return _Ret(self.ev(s.value, act) if s.value is not None else None)
        if t is A.Break:
            return BREAK
        if t is A.Continue:
            return CONTINUE
        if t is A.Goto:
            return _Goto(s.label)
        if t is A.Spawn:
            self.spawn(s.call.name, [self.ev(a, act) for a in s.call.args])
            return None
        if t is A.Switch:
            body, start = self.switch_start(s, act)
            if start is None:
                return None
            return self.exec_pure_list(body, act, start)
        if t in (A.Label, A.Case, A.FunDef):
            return None
        raise CoopRuntimeError(f"cannot execute {t.__name__}")

    # -- expressions ----------------------------------------------------------
    def gev(self, e, act):
        """Evaluate an expression that contains cps calls."""
        if not A.contains_cps_call(e):
            return self.ev(e, act)
        if isinstance(e, A.Call):
            args = []
            for a in e.args:
                args.append((yield from self.gev(a, act)))
            if e.cps:
                builtin = A.canonical_builtin(e.name)
                if builtin in A.PRIMITIVES and e.name not in self.funcs and e.name not in act.scope:
                    yield ("prim", builtin, args)
                    return None
                return (yield ("call", self.resolve(e.name, act), args, act))
            return self.call_value(e, args, act)
        if isinstance(e, A.Binary):
            left = yield from self.gev(e.left, act)
            if e.op == "&&":
                if not left:
                    return False
                return bool((yield from self.gev(e.right, act)))
            if e.op == "||":
                if left:
                    return True
                return bool((yield from self.gev(e.right, act)))
            right = yield from self.gev(e.right, act)
            return self.binop(e.op, left, right)
        if isinstance(e, A.Unary):
            v = yield from self.gev(e.expr, act)
            return -v if e.op == "-" else not v
        if isinstance(e, A.Index):
            if self.is_array_expr(e.base, act):
                b = self.ev(e.base, act)
            else:
                b = yield from self.gev(e.base, act)
            i = yield from self.gev(e.index, act)
            return self.load_index(b, i)
        if isinstance(e, A.Deref):
            p = yield from self.gev(e.expr, act)
            return self.load_ref(p)
        if isinstance(e, A.AddrOf):
            inner = e.expr
            if isinstance(inner, A.Index):
                b = self.ev(inner.base, act)
                i = yield from self.gev(inner.index, act)
                return self.ref_index(b, i)
            return self.ev(e, act)
        raise CoopRuntimeError(f"cannot evaluate {type(e).__name__}")

    def gassign(self, target, v, act):
        if isinstance(target, A.Index) and A.contains_cps_call(target.index):
            b = self.ev(target.base, act)
            i = yield from self.gev(target.index, act)
            self.store_index(b, i, v)
            return
        self.assign(target, v, act)

    def is_array_expr(self, e, act):
        return isinstance(e, A.Var) and e.name in act.info.arrays

    def ev(self, e, act):
        t = type(e)
        if t is A.Var:
            name = e.name
            block = act.vars.get(name)
            if block is None:
                if name in self.tags:
                    return self.tags[name]
                raise CoopRuntimeError(f"unbound variable {name}")
            if name in act.info.arrays:
                return block
            return block[0]
        if t is A.IntLit or t is A.BoolLit:
            return e.value
        if t is A.Binary:
            op = e.op
            if op == "&&":
                return bool(self.ev(e.left, act)) and bool(self.ev(e.right, act))
            if op == "||":
                return bool(self.ev(e.left, act)) or bool(self.ev(e.right, act))
            return self.binop(op, self.ev(e.left, act), self.ev(e.right, act))
        if t is A.Index:
            return self.load_index(self.ev(e.base, act), self.ev(e.index, act))
        if t is A.Unary:
            v = self.ev(e.expr, act)
            return -v if e.op == "-" else not v
        if t is A.Call:
            args = [self.ev(a, act) for a in e.args]
            return self.call_value(e, args, act)
        if t is A.Deref:
            return self.load_ref(self.ev(e.expr, act))
        if t is A.AddrOf:
            inner = e.expr
            if isinstance(inner, A.Var):
                return (act.vars[inner.name], 0)
            if isinstance(inner, A.Index):
                return self.ref_index(self.ev(inner.base, act), self.ev(inner.index, act))
            if isinstance(inner, A.EnvField):
                env = self.ev(A.Var(inner.env), act)
                return (env, self.field_index(inner, act))
            if isinstance(inner, A.Deref):
                return self.ev(inner.expr, act)
            raise CoopRuntimeError("bad address-of")
        if t is A.EnvField:
            env = self.ev(A.Var(e.env), act)
            if env is None:
                raise CoopRuntimeError("null environment")
            return env[self.field_index(e, act)]
        if t is A.EnvAlloc:
            layout = self.structs[e.layout]
            env = [self.fresh(f.type) if A.is_array(f.type) else A.zero_value(f.type)
                   for f in layout.fields]
            return self.sched.heap.alloc(env)
        if t is A.StrLit:
            return e.value
        raise CoopRuntimeError(f"cannot evaluate {t.__name__}")

    def field_index(self, e: A.EnvField, act):
        ty = act.info.types[e.env]
        return self.structs[A.struct_name(ty)].index(e.field)

    def binop(self, op, a, b):
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return cdiv(a, b)
        if op == "%":
            return cmod(a, b)
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        raise CoopRuntimeError(f"unknown operator {op}")

    # -- memory ---------------------------------------------------------------
    def load_index(self, b, i):
        if type(b) is list:
            if not 0 <= i < len(b):
                raise CoopRuntimeError("index out of bounds")
            return b[i]
        block, off = b
        j = off + i
        if not 0 <= j < len(block):
            raise CoopRuntimeError("index out of bounds")
        return block[j]

    def store_index(self, b, i, v):
        if type(b) is list:
            if not 0 <= i < len(b):
                raise CoopRuntimeError("index out of bounds")
            b[i] = v
            return
        block, off = b
        j = off + i
        if not 0 <= j < len(block):
            raise CoopRuntimeError("index out of bounds")
        block[j] = v

    def ref_index(self, b, i):
        if type(b) is list:
            if not 0 <= i < len(b):
                raise CoopRuntimeError("index out of bounds")
            return (b, i)
        block, off = b
        if not 0 <= off + i < len(block):
            raise CoopRuntimeError("index out of bounds")
        return (block, off + i)

    def load_ref(self, p):
        if p is None:
            raise CoopRuntimeError("null dereference")
        return self.load_index(p, 0)

    def assign(self, target, v, act):
        t = type(target)
        if t is A.Var:
            act.vars[target.name][0] = v
        elif t is A.Index:
            self.store_index(self.ev(target.base, act), self.ev(target.index, act), v)
        elif t is A.Deref:
            p = self.ev(target.expr, act)
            if p is None:
                raise CoopRuntimeError("null dereference")
            self.store_index(p, 0, v)
        elif t is A.EnvField:
            env = self.ev(A.Var(target.env), act)
            env[self.field_index(target, act)] = v
        else:
            raise CoopRuntimeError("bad assignment target")

    # -- calls ----------------------------------------------------------------
    def call_value(self, e: A.Call, args, act):
        name = e.name
        if name not in self.funcs and (act is None or name not in act.scope):
            builtin = A.canonical_builtin(name)
            if builtin == "print":
                self.sched.emit(format_print(args[0], args[1:]))
                return None
            if builtin == "malloc":
                n = args[0]
                if n <= 0:
                    raise CoopRuntimeError("malloc of non-positive size")
                return (self.sched.heap.alloc([0] * n), 0)
            if builtin == "free":
                p = args[0]
                if p is None:
                    return None
                self.sched.heap.release(p if type(p) is list else p[0])
                return None
            if builtin == "__sink":
                return ([0], 0)
            raise CoopRuntimeError(f"unknown function {name}")
        f = self.resolve(name, act)
        if f.is_cps:
            raise CoopRuntimeError(f"cps function {name} called on the pure path")
        callee = self.activate(f, args)
        sig = self.exec_pure_list(f.body, callee)
        return sig.value if isinstance(sig, _Ret) else None


def interpret(prog: A.Program, entry_args=(), world: World = None) -> RunResult:
    """Run ``prog`` under the reference semantics and return its trace."""
    return Interpreter(prog, world).run(entry_args)
