"""C-like pretty printer; output re-parses to the same AST."""

from __future__ import annotations

from . import ast as A

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6, "%": 6}
_UNARY_PREC = 7
_POSTFIX_PREC = 8


def _escape(s: str) -> str:
    return (s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            .replace("\t", "\\t").replace("\0", "\\0"))


def expr(e, prec: int = 0) -> str:
    if isinstance(e, A.IntLit):
        text = str(e.value)
        return f"({text})" if e.value < 0 and prec >= _UNARY_PREC else text
    if isinstance(e, A.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, A.StrLit):
        return f'"{_escape(e.value)}"'
    if isinstance(e, (A.Var, A.FunRef)):
        return e.name
    if isinstance(e, A.EnvField):
        return f"{e.env}->{e.field}"
    if isinstance(e, A.EnvAlloc):
        return f"malloc(sizeof(struct {e.layout}))"
    if isinstance(e, A.Index):
        return f"{expr(e.base, _POSTFIX_PREC)}[{expr(e.index)}]"
    if isinstance(e, A.Call):
        return f"{e.name}({', '.join(expr(a) for a in e.args)})"
    if isinstance(e, (A.AddrOf, A.Deref, A.Unary)):
        op = "&" if isinstance(e, A.AddrOf) else "*" if isinstance(e, A.Deref) else e.op
        inner = expr(e.expr, _UNARY_PREC)
        if op == "-" and inner.startswith("-"):
            inner = f"({inner})"
        text = op + inner
        return f"({text})" if prec > _UNARY_PREC else text
    if isinstance(e, A.Binary):
        p = _PREC[e.op]
        # left-associative: the right operand needs parentheses at equal precedence
        text = f"{expr(e.left, p)} {e.op} {expr(e.right, p + 1)}"
        return f"({text})" if p < prec else text
    raise TypeError(f"cannot print {e!r}")


def decl_text(name: str, ty: str) -> str:
    info = A.array_info(ty)
    if info:
        return f"{info[0]} {name}[{info[1]}]"
    if ty.endswith("*"):
        return f"{ty[:-1]} *{name}"
    return f"{ty} {name}"


def _simple(s) -> str:
    if isinstance(s, A.Assign):
        return f"{expr(s.target)} = {expr(s.value)}"
    if isinstance(s, A.ExprStmt):
        return expr(s.expr)
    if isinstance(s, A.VarDecl):
        init = f" = {expr(s.init)}" if s.init is not None else ""
        return decl_text(s.name, s.type) + init
    raise TypeError(f"not a simple statement: {s!r}")


class _Printer:
    def __init__(self, indent: str = "  "):
        self.lines = []
        self.unit = indent

    def emit(self, depth: int, text: str):
        self.lines.append(self.unit * depth + text)

    def body(self, depth: int, block: A.Block, head: str):
        stmts = block.stmts
        if len(stmts) == 1 and isinstance(stmts[0], (A.Goto, A.Return, A.Break, A.Continue)):
            self.emit(depth, f"{head} {self.inline(stmts[0])}")
            return False
        self.emit(depth, head + " {")
        for s in stmts:
            self.stmt(depth + 1, s)
        return True

    def inline(self, s) -> str:
        if isinstance(s, A.Goto):
            return f"goto {s.label};"
        if isinstance(s, A.Return):
            return "return;" if s.value is None else f"return {expr(s.value)};"
        if isinstance(s, A.Break):
            return "break;"
        return "continue;"

    def stmt(self, d: int, s):
        if isinstance(s, A.Block):
            self.emit(d, "{")
            for x in s.stmts:
                self.stmt(d + 1, x)
            self.emit(d, "}")
        elif isinstance(s, (A.VarDecl, A.Assign, A.ExprStmt)):
            self.emit(d, _simple(s) + ";")
        elif isinstance(s, A.If):
            braced = self.body(d, s.then, f"if ({expr(s.cond)})")
            if s.els is not None:
                if braced:
                    self.emit(d, "} else {")
                else:
                    self.emit(d, "else {")
                for x in s.els.stmts:
                    self.stmt(d + 1, x)
                self.emit(d, "}")
            elif braced:
                self.emit(d, "}")
        elif isinstance(s, A.While):
            self.emit(d, f"while ({expr(s.cond)}) {{")
            for x in s.body.stmts:
                self.stmt(d + 1, x)
            self.emit(d, "}")
        elif isinstance(s, A.For):
            init = ""
            if isinstance(s.init, A.Block):
                ds = s.init.stmts
                init = ", ".join(
                    (decl_text(x.name, x.type) if i == 0 else x.name)
                    + (f" = {expr(x.init)}" if x.init is not None else "")
                    for i, x in enumerate(ds))
            elif s.init is not None:
                init = _simple(s.init)
            cond = expr(s.cond) if s.cond is not None else ""
            step = _simple(s.step) if s.step is not None else ""
            self.emit(d, f"for ({init}; {cond}; {step}) {{")
            for x in s.body.stmts:
                self.stmt(d + 1, x)
            self.emit(d, "}")
        elif isinstance(s, (A.Break, A.Continue, A.Return, A.Goto)):
            self.emit(d, self.inline(s))
        elif isinstance(s, A.Spawn):
            self.emit(d, f"spawn {expr(s.call)};")
        elif isinstance(s, A.Label):
            self.emit(max(d - 1, 0), f"{s.name}:")
        elif isinstance(s, A.Case):
            self.emit(max(d - 1, 0), f"case {s.tag}:")
        elif isinstance(s, A.Switch):
            self.emit(d, f"switch ({expr(s.subject)}) {{")
            for x in s.body:
                self.stmt(d + 2 if not isinstance(x, A.Case) else d + 1, x)
            self.emit(d, "}")
        elif isinstance(s, A.FunDef):
            self.fundef(d, s)
        else:
            raise TypeError(f"cannot print {s!r}")

    def fundef(self, d: int, f: A.FunDef):
        params = ", ".join(decl_text(p.name, p.type) for p in f.params)
        head = ("cps " if f.is_cps else "") + decl_text(f.name, f.ret_type) + f"({params})"
        self.emit(d, head + " {")
        for s in f.body:
            self.stmt(d + 1, s)
        self.emit(d, "}")

    def item(self, it):
        if isinstance(it, A.FunDef):
            self.fundef(0, it)
        elif isinstance(it, A.StructDef):
            fields = " ".join(decl_text(f.name, f.type) + ";" for f in it.fields)
            self.emit(0, f"struct {it.name} {{ {fields} }};" if fields else f"struct {it.name} {{ }};")
        elif isinstance(it, A.EnumDef):
            self.emit(0, f"enum {it.name} {{ {', '.join(it.tags)} }};")
        else:
            raise TypeError(f"cannot print {it!r}")


def function(f: A.FunDef) -> str:
    p = _Printer()
    p.fundef(0, f)
    return "\n".join(p.lines) + "\n"


def program(prog: A.Program, entry: bool = False) -> str:
    p = _Printer()
    if entry and prog.entry:
        p.emit(0, f"entry {prog.entry};")
    for it in prog.items:
        p.item(it)
    return "\n".join(p.lines) + "\n"
