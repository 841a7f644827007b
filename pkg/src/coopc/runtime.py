"""Deterministic event loop for EventIR programs.

EventIR is compiled once to Python source: every function becomes a Python
function, cps-converted ones taking the continuation last.  A converted
function never blocks.  It returns either ``None`` (the task is parked in a
scheduler queue, or finished) or the next step ``(fn, args)``, which the
trampoline in :meth:`EventLoop.resume` runs.  A continuation (:class:`Cont`)
is a flat stack tagged with its task id; ``push`` appends a frame and
``invoke`` pops one.

Cost model, mirroring continuation-based runtimes: a tail call to another
converted function is counted as one push and one invoke, since it goes
through the continuation; a ``goto`` inside a dispatch function costs
nothing.  Spawning a task creates its continuation with a single frame and
is counted separately from pushes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ast as A
from .passes.cps import converted_names
from .sched import CoopRuntimeError, Scheduler, World, format_print


class CodegenError(Exception):
    pass


class Cont(list):
    """A continuation: a flat stack of frames, top at the end.

    A frame is laid out as ``v1 .. vn, n, fn``: the saved argument values,
    their count, then the function to resume.
    """
    __slots__ = ("tid",)


_PRIM_HELPERS = {"sleep": "_sleep", "yield": "_yield", "io_wait": "_io_wait",
                 "cv_wait": "_cv_wait", "cv_signal": "_cv_signal",
                 "cv_broadcast": "_cv_broadcast"}

_ARITH = {"+": "+", "-": "-", "*": "*", "<": "<", "<=": "<=", ">": ">", ">=": ">=",
          "==": "==", "!=": "!="}
_BOOL_OPS = {"<", "<=", ">", ">=", "==", "!=", "&&", "||"}


class _FnGen:
    def __init__(self, gen: "_Codegen", f: A.FunDef):
        self.g = gen
        self.f = f
        self.types = A.var_types(f)
        self.lines = []
        self.loops = []        # step statement (or None) per enclosing loop
        self.label_tags = {}   # label -> state value inside a dispatch switch
        self.state_var = None
        self.temp = 0

    # -- expressions ----------------------------------------------------------
    def ty(self, e) -> str:
        if isinstance(e, A.Var):
            return self.types.get(e.name, "int")
        if isinstance(e, A.EnvField):
            return self.g.field_type(self.types[e.env], e.field)
        return "int*"

    def ex(self, e) -> str:
        t = type(e)
        if t is A.IntLit:
            return str(e.value) if e.value >= 0 else f"({e.value})"
        if t is A.BoolLit:
            return "True" if e.value else "False"
        if t is A.StrLit:
            return repr(e.value)
        if t is A.Var:
            if e.name not in self.types and e.name in self.g.tags:
                return str(self.g.tags[e.name])
            return "v_" + e.name
        if t is A.EnvField:
            return f"v_{e.env}[{self.g.field_index(self.types[e.env], e.field)}]"
        if t is A.Index:
            return self.index(e)
        if t is A.Deref:
            return self.ex(A.Index(e.expr, A.IntLit(0)))
        if t is A.AddrOf:
            inner = e.expr
            if isinstance(inner, A.EnvField):
                return f"(v_{inner.env}, {self.g.field_index(self.types[inner.env], inner.field)})"
            if isinstance(inner, A.Index):
                base = self.ex(inner.base)
                helper = "_aref" if A.is_array(self.ty(inner.base)) else "_pref"
                return f"{helper}({base}, {self.ex(inner.index)})"
            if isinstance(inner, A.Deref):
                return self.ex(inner.expr)
            raise CodegenError(f"{self.f.name}: address of a plain variable reached the runtime")
        if t is A.Unary:
            return f"(-{self.ex(e.expr)})" if e.op == "-" else f"(not {self.ex(e.expr)})"
        if t is A.Binary:
            a, b = self.ex(e.left), self.ex(e.right)
            if e.op == "/":
                return f"_cdiv({a}, {b})"
            if e.op == "%":
                return f"_cmod({a}, {b})"
            if e.op in ("&&", "||"):
                a = a if self.is_bool(e.left) else f"bool({a})"
                b = b if self.is_bool(e.right) else f"bool({b})"
                return f"({a} {'and' if e.op == '&&' else 'or'} {b})"
            return f"({a} {_ARITH[e.op]} {b})"
        if t is A.Call:
            return self.call(e)
        if t is A.FunRef:
            return "f_" + e.name
        if t is A.EnvAlloc:
            return f"_env_{e.layout}()"
        raise CodegenError(f"cannot compile {t.__name__}")

    def is_bool(self, e) -> bool:
        if isinstance(e, A.Binary):
            return e.op in _BOOL_OPS
        if isinstance(e, A.Unary):
            return e.op == "!"
        if isinstance(e, A.Var):
            return self.types.get(e.name) == "bool"
        return isinstance(e, A.BoolLit)

    def index(self, e: A.Index) -> str:
        """Element access with C bounds: negative offsets must not wrap."""
        base = self.ex(e.base)
        idx = e.index
        literal = isinstance(idx, A.IntLit) and idx.value >= 0
        if A.is_array(self.ty(e.base)):
            if literal:
                return f"{base}[{idx.value}]"
            if isinstance(idx, A.Var):
                v = self.ex(idx)
                return f"{base}[{v} if {v} >= 0 else _oob()]"
            return f"{base}[_j if (_j := {self.ex(idx)}) >= 0 else _oob()]"
        if not isinstance(e.base, (A.Var, A.EnvField)):
            raise CodegenError("pointer access through a computed base")
        if literal:
            off = f"{base}[1]" if idx.value == 0 else f"{base}[1] + {idx.value}"
            return f"{base}[0][{off}]"
        return f"{base}[0][_j if (_j := {base}[1] + {self.ex(idx)}) >= 0 else _oob()]"

    def args(self, exprs) -> str:
        inner = ", ".join(self.ex(a) for a in exprs)
        return f"({inner},)" if len(exprs) == 1 else f"({inner})"

    def call(self, c: A.Call) -> str:
        name = c.name
        if name == "push":
            fn = c.args[0]
            vals = "".join(", " + self.ex(a) for a in c.args[1:-1])
            return f"_push({self.ex(c.args[-1])}, f_{fn.name}{vals})"
        if name in self.g.funcs:
            return f"f_{name}({', '.join(self.ex(a) for a in c.args)})"
        b = A.canonical_builtin(name)
        if b == "print":
            return f"_print({self.ex(c.args[0])}, {self.args(c.args[1:])})"
        if b == "malloc":
            return f"_malloc({self.ex(c.args[0])})"
        if b == "free":
            return f"_free({self.ex(c.args[0])})"
        if b == "__sink":
            return "([0], 0)"
        raise CodegenError(f"unknown call {name} in expression position")

    # -- statements -----------------------------------------------------------
    def emit(self, d: int, text: str):
        self.lines.append("    " * d + text)

    def block(self, d: int, stmts):
        start = len(self.lines)
        indent = "    " * d
        for s in stmts:
            self.stmt(d, s)
            last = self.lines[-1] if len(self.lines) > start else ""
            if last.startswith(indent) and not last.startswith(indent + " ") and \
                    last.split(None, 1)[0] in ("return", "continue", "break"):
                break   # the rest of the list is unreachable
        if len(self.lines) == start:
            self.emit(d, "pass")

    def store(self, d: int, target, value: str):
        if isinstance(target, A.Var):
            self.emit(d, f"v_{target.name} = {value}")
            return
        if isinstance(target, A.EnvField):
            self.emit(d, f"{self.ex(target)} = {value}")
            return
        if isinstance(target, A.Deref):
            target = A.Index(target.expr, A.IntLit(0))
        if isinstance(target, A.Index):
            # Python evaluates the value before the subscript, as C does here
            self.emit(d, f"{self.index(target)} = {value}")
            return
        raise CodegenError("bad assignment target")

    def tail_stmt(self, d: int, c: A.Call) -> bool:
        """Emit a suspending or continuing call; False if ``c`` is an ordinary call."""
        name = c.name
        if name == "invoke":
            if len(c.args) == 1:
                self.emit(d, f"return _invoke({self.ex(c.args[0])})")
            else:
                self.emit(d, f"return _invoke_v({self.ex(c.args[0])}, {self.ex(c.args[1])})")
            return True
        if name in self.g.converted:
            # counted by the trampoline as one push and one invoke
            self.emit(d, f"return (f_{name}, {self.args(c.args)})")
            return True
        if name not in self.g.funcs:
            prim = A.canonical_builtin(name)
            if prim in _PRIM_HELPERS:
                self.emit(d, f"return {_PRIM_HELPERS[prim]}({', '.join(self.ex(a) for a in c.args)})")
                return True
        return False

    def stmt(self, d: int, s):
        t = type(s)
        if t is A.Assign:
            self.store(d, s.target, self.ex(s.value))
        elif t is A.ExprStmt:
            if isinstance(s.expr, A.Call) and self.tail_stmt(d, s.expr):
                return
            self.emit(d, self.ex(s.expr))
        elif t is A.VarDecl:
            if s.init is not None:
                self.store(d, A.Var(s.name), self.ex(s.init))
        elif t is A.Return:
            self.emit(d, "return None" if s.value is None else f"return {self.ex(s.value)}")
        elif t is A.If:
            self.emit(d, f"if {self.ex(s.cond)}:")
            self.block(d + 1, s.then.stmts)
            if s.els is not None and s.els.stmts:
                self.emit(d, "else:")
                self.block(d + 1, s.els.stmts)
        elif t is A.While:
            self.emit(d, f"while {self.ex(s.cond)}:")
            self.loops.append(None)
            self.block(d + 1, s.body.stmts)
            self.loops.pop()
        elif t is A.For:
            if s.init is not None:
                self.stmt(d, s.init)
            cond = self.ex(s.cond) if s.cond is not None else "True"
            self.emit(d, f"while {cond}:")
            self.loops.append(s.step)
            self.block(d + 1, s.body.stmts)
            self.loops.pop()
            if s.step is not None:
                self.stmt(d + 1, s.step)
        elif t is A.Break:
            self.emit(d, "break")
        elif t is A.Continue:
            step = self.loops[-1]
            if step is not None:
                self.stmt(d, step)
            self.emit(d, "continue")
        elif t is A.Block:
            self.block(d, s.stmts)
        elif t is A.Spawn:
            c = s.call
            self.emit(d, f"_spawn(f_{c.name}, {self.args(c.args)})")
        elif t is A.Goto:
            if s.label not in self.label_tags:
                raise CodegenError(f"goto {s.label} outside a dispatch switch")
            self.emit(d, f"v_{self.state_var} = {self.label_tags[s.label]}")
            self.emit(d, "continue")
        elif t in (A.Label, A.Case):
            pass
        elif t is A.Switch:
            self.switch(d, s)
        else:
            raise CodegenError(f"cannot compile {t.__name__}")

    def switch(self, d: int, s: A.Switch):
        if not isinstance(s.subject, A.Var):
            raise CodegenError("switch subject must be a variable")
        self.state_var = s.subject.name
        arms = []
        for x in s.body:
            if isinstance(x, A.Case):
                arms.append([self.g.tags[x.tag], [], True])
            elif isinstance(x, A.Label):
                if not arms or not arms[-1][2]:
                    raise CodegenError(f"label {x.name} is not at the start of a switch arm")
                self.label_tags[x.name] = arms[-1][0]
            else:
                arms[-1][1].append(x)
                arms[-1][2] = False
        self.emit(d, "while True:")
        for i, (value, body, _) in enumerate(arms):
            self.emit(d + 1, f"{'if' if i == 0 else 'elif'} v_{self.state_var} == {value}:")
            self.block(d + 2, body)
        self.emit(d + 1, "return None")

    def function(self) -> list:
        f = self.f
        params = ", ".join("v_" + p.name for p in f.params)
        self.emit(1, f"def f_{f.name}({params}):")
        pnames = {p.name for p in f.params}
        seen = set()
        for s in A.walk_stmts(f.body):
            if isinstance(s, A.VarDecl) and s.name not in pnames and s.name not in seen:
                seen.add(s.name)
                info = A.array_info(s.type)
                if info:
                    zero = "False" if info[0] == "bool" else "0"
                    self.emit(2, f"v_{s.name} = [{zero}] * {info[1]}")
                else:
                    self.emit(2, f"v_{s.name} = {A.zero_value(s.type)!r}")
        self.block(2, f.body)
        return self.lines


class _Codegen:
    def __init__(self, ir: A.Program):
        self.ir = ir
        self.funcs = {f.name: f for f in ir.functions}
        self.converted = converted_names(ir)
        self.structs = ir.structs()
        self.tags = {}
        for e in ir.enums().values():
            for i, tag in enumerate(e.tags):
                self.tags[tag] = i

    def field_index(self, ty: str, name: str) -> int:
        return self.structs[A.struct_name(ty)].index(name)

    def field_type(self, ty: str, name: str) -> str:
        st = self.structs[A.struct_name(ty)]
        return st.fields[st.index(name)].type

    def source(self) -> str:
        lines = ["def __make(R):"]
        for h in ("_push", "_invoke", "_invoke_v", "_sleep", "_yield", "_io_wait",
                  "_cv_wait", "_cv_signal", "_cv_broadcast", "_spawn", "_print", "_malloc",
                  "_free", "_envalloc", "_oob", "_aref", "_pref",
                  "_cdiv", "_cmod"):
            attr = "yield_" if h == "_yield" else h[1:]
            lines.append(f"    {h} = R.{attr}")
        for st in self.structs.values():
            template = []
            for fdef in st.fields:
                info = A.array_info(fdef.type)
                template.append(("a", info[1], A.zero_value(info[0])) if info
                                else ("s", A.zero_value(fdef.type)))
            lines.append(f"    _env_{st.name} = lambda: _envalloc({tuple(template)!r})")
        for f in self.ir.functions:
            lines.extend(_FnGen(self, f).function())
        names = ", ".join(f"{f.name!r}: f_{f.name}" for f in self.ir.functions)
        lines.append(f"    return {{{names}}}")
        return "\n".join(lines) + "\n"


@dataclass
class CompiledProgram:
    """EventIR compiled to Python; instantiate per run with :class:`EventLoop`."""
    ir: A.Program
    source: str
    code: object = field(repr=False, default=None)

    @classmethod
    def build(cls, ir: A.Program) -> "CompiledProgram":
        src = _Codegen(ir).source()
        return cls(ir, src, compile(src, f"<evir:{ir.entry}>", "exec"))


@dataclass
class RunResult:
    trace: list
    report: dict


class _Helpers:
    """Runtime intrinsics bound to one event loop, exposed to generated code."""

    def __init__(self, loop: "EventLoop"):
        sched = loop.sched
        heap = sched.heap
        counters = loop.counters

        def push(k, fn, *args):
            counters[0] += 1
            k += args
            k.append(len(args))
            k.append(fn)
            return k

        def pop(k):
            fn = k.pop()
            n = k.pop()
            if n:
                args = k[-n:]
                del k[-n:]
                return fn, args
            return fn, []

        def invoke(k):
            if not k:
                sched.task_end(k.tid)
                return None
            counters[1] += 1
            fn, args = pop(k)
            args.append(k)
            return (fn, args)

        def invoke_v(k, v):
            if not k:
                sched.task_end(k.tid)
                return None
            counters[1] += 1
            fn, args = pop(k)
            args.append(v)
            args.append(k)
            return (fn, args)

        def sleep(n, k):
            sched.sleep(n, k)

        def yield_(k):
            sched.make_ready(k)

        def io_wait(chan, direction, k):
            sched.io_wait(chan, direction, k)

        def cv_wait(cv, k):
            sched.cv_wait(cv, k)

        def cv_signal(cv, k):
            sched.cv_signal(cv)
            return invoke(k)

        def cv_broadcast(cv, k):
            sched.cv_broadcast(cv)
            return invoke(k)

        def spawn(fn, args):
            k = Cont()
            k.tid = sched.new_tid()
            counters[2] += 1
            k += args
            k.append(len(args))
            k.append(fn)
            sched.make_ready(k)

        def print_(fmt, args):
            sched.emit(format_print(fmt, args))

        def malloc(n):
            if n <= 0:
                raise CoopRuntimeError("malloc of non-positive size")
            b = [0] * n
            heap.alloc(b)
            return (b, 0)

        def free(p):
            if p is None:
                return
            heap.release(p if type(p) is list else p[0])

        def envalloc(template):
            env = [[t[2]] * t[1] if t[0] == "a" else t[1] for t in template]
            heap.alloc(env)
            return env

        def oob():
            raise CoopRuntimeError("index out of bounds")

        def aref(b, i):
            if not 0 <= i < len(b):
                raise CoopRuntimeError("index out of bounds")
            return (b, i)

        def pref(p, i):
            j = p[1] + i
            if not 0 <= j < len(p[0]):
                raise CoopRuntimeError("index out of bounds")
            return (p[0], j)

        from .sched import cdiv, cmod
        self.push, self.invoke, self.invoke_v = push, invoke, invoke_v
        self.sleep, self.yield_, self.io_wait = sleep, yield_, io_wait
        self.cv_wait, self.cv_signal, self.cv_broadcast = cv_wait, cv_signal, cv_broadcast
        self.spawn, self.print, self.malloc, self.free = spawn, print_, malloc, free
        self.envalloc, self.oob = envalloc, oob
        self.aref, self.pref, self.cdiv, self.cmod = aref, pref, cdiv, cmod


class EventLoop:
    """One run of a compiled program; not reusable and not thread-safe."""

    def __init__(self, compiled: CompiledProgram, world: World = None):
        self.compiled = compiled
        self.sched = Scheduler(world)
        self.counters = [0, 0, 0, 0]   # pushes, invokes, spawns, steps
        self.helpers = _Helpers(self)
        ns = {}
        exec(compiled.code, ns)
        self.functions = ns["__make"](self.helpers)
        self.resume = self._trampoline()

    def _trampoline(self):
        invoke = self.helpers.invoke
        counters = self.counters

        def resume(k):
            n = 0
            step = invoke(k)
            try:
                while step is not None:
                    n += 1
                    fn, args = step
                    step = fn(*args)
            finally:
                counters[3] += n
        return resume

    def run(self, entry_args=()) -> RunResult:
        ir = self.compiled.ir
        entry = ir.function(ir.entry)
        args = list(entry_args)
        user = [p for p in entry.params if p.type != "cont*"]
        if len(args) + 1 == len(user) and user[-1].name == "__slot":
            args.append(([0], 0))
        if len(args) != len(user):
            raise CoopRuntimeError(f"entry {ir.entry} expects {len(user)} arguments")
        self.helpers.spawn(self.functions[ir.entry], tuple(args))
        trace = self.sched.run(self.resume)
        return RunResult(trace, self.report())

    def report(self) -> dict:
        heap = self.sched.heap
        pushes, pops, spawns, steps = self.counters
        tails = steps - pops    # every other step came from a direct tail call
        return {
            "pushes": pushes + tails,
            "invokes": pops + tails,
            "allocs": heap.allocs,
            "releases": heap.releases,
            "double_releases": heap.double_releases,
            "leaks": heap.leaks,
            "tasks": spawns,
            "max_ready": self.sched.max_ready,
        }


def run_event_loop(ir, entry_args=(), world: World = None) -> RunResult:
    """Run an EventIR program (or an already compiled one) to completion."""
    compiled = ir if isinstance(ir, CompiledProgram) else CompiledProgram.build(ir)
    return EventLoop(compiled, world).run(entry_args)


def format_report(report: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in report.items())
