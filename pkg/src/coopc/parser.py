"""Lexer and recursive-descent parser for Coop source and its internal forms.

Source mode accepts the user language.  ``internal=True`` additionally
accepts the constructs that only compiler passes produce (labels, gotos,
nested functions, switches, environment structs, continuations), which is
what lets dumps and ``.evir`` files be read back.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import ast as A


@dataclass
class Diagnostic:
    line: int
    col: int
    message: str

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


class CompileError(Exception):
    def __init__(self, diagnostics):
        if isinstance(diagnostics, Diagnostic):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(f"{d.line}:{d.col}: {d.message}" for d in self.diagnostics))

    def format(self, filename: str = "<input>") -> str:
        return "\n".join(d.format(filename) for d in self.diagnostics)


def error_at(pos, message):
    line, col = pos if pos else (0, 0)
    return CompileError(Diagnostic(line, col, message))


# -- lexer -------------------------------------------------------------------

KEYWORDS = {
    "cps", "int", "bool", "void", "if", "else", "while", "for", "break",
    "continue", "return", "spawn", "true", "false", "goto", "switch", "case",
    "struct", "enum", "sizeof", "entry", "cont",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<op>->|\+\+|--|\+=|-=|\*=|==|!=|<=|>=|&&|\|\||[-+*/%<>=!&(){}\[\];,:])
""", re.VERBOSE | re.DOTALL)

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "0": "\0"}


@dataclass
class Token:
    kind: str      # 'int', 'ident', 'kw', 'string', 'op', 'eof'
    text: str
    line: int
    col: int
    indent: int = 0

    @property
    def pos(self):
        return (self.line, self.col)


def _unescape(body: str, pos) -> str:
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise error_at(pos, f"unknown escape '\\{nxt}'")
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def tokenize(source: str) -> list:
    tokens = []
    line, line_start, i = 1, 0, 0
    indent = 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        col = i - line_start + 1
        if not m:
            raise error_at((line, col), f"unexpected character {source[i]!r}")
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            line_text = source[line_start:source.find("\n", line_start) if "\n" in source[line_start:] else len(source)]
            indent = len(line_text) - len(line_text.lstrip(" \t"))
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, text, line, col, indent))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = i + text.rfind("\n") + 1
        i = m.end()
    tokens.append(Token("eof", "", line, i - line_start + 1, 0))
    return tokens


# -- parser ------------------------------------------------------------------

_BINARY_LEVELS = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]


class Parser:
    def __init__(self, source: str, internal: bool = False):
        self.toks = tokenize(source)
        self.i = 0
        self.internal = internal
        self.open_braces = []      # stack of tokens for '{'
        self.suspect_brace = None  # innermost '{' closed by a misindented '}'

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected '{text}' but found {self.describe(self.tok)}")
        return self.advance()

    def expect_ident(self) -> Token:
        if self.tok.kind != "ident":
            self.fail(f"expected identifier but found {self.describe(self.tok)}")
        return self.advance()

    def describe(self, t: Token) -> str:
        return "end of input" if t.kind == "eof" else repr(t.text)

    def fail(self, message: str, tok: Token = None):
        t = tok or self.tok
        if t.kind == "eof" and self.open_braces:
            brace = self.suspect_brace or self.open_braces[-1]
            raise error_at(brace.pos, "unclosed '{' (missing closing brace)")
        raise error_at(t.pos, message)

    def require_internal(self, what: str, tok: Token):
        if not self.internal:
            raise error_at(tok.pos, f"{what} is not allowed in source programs")

    # program
    def parse_program(self) -> A.Program:
        items = []
        entry = None
        names = {}
        while self.tok.kind != "eof":
            if self.at("entry"):
                t = self.advance()
                self.require_internal("'entry'", t)
                entry = self.expect_ident().text
                self.expect(";")
            elif self.at("struct") and self.peek(2).text == "{":
                items.append(self.parse_struct())
            elif self.at("enum") and self.peek(2).text == "{":
                items.append(self.parse_enum())
            else:
                f = self.parse_fundef()
                if f.name in names:
                    raise error_at(f.pos, f"duplicate function name '{f.name}'")
                names[f.name] = f
                items.append(f)
        prog = A.Program(items, entry)
        if prog.entry is None:
            prog.entry = default_entry(prog)
        return prog

    def parse_struct(self) -> A.StructDef:
        t = self.advance()
        self.require_internal("struct", t)
        name = self.expect_ident().text
        self.expect("{")
        fields = []
        while not self.at("}"):
            ty = self.parse_type()
            n = self.expect_ident().text
            ty = self.array_suffix(ty)
            self.expect(";")
            fields.append(A.Param(n, ty))
        self.expect("}")
        self.expect(";")
        return A.StructDef(name, fields, t.pos)

    def parse_enum(self) -> A.EnumDef:
        t = self.advance()
        self.require_internal("enum", t)
        name = self.expect_ident().text
        self.expect("{")
        tags = [self.expect_ident().text]
        while self.accept(","):
            tags.append(self.expect_ident().text)
        self.expect("}")
        self.expect(";")
        return A.EnumDef(name, tags, t.pos)

    def is_type_start(self) -> bool:
        t = self.tok
        if t.kind != "kw":
            return False
        if t.text in ("int", "bool", "void", "struct", "enum"):
            return True
        return t.text == "cont" and self.internal

    def parse_type(self) -> str:
        t = self.tok
        if self.accept("struct"):
            self.require_internal("struct", t)
            base = "struct " + self.expect_ident().text
        elif self.accept("enum"):
            self.require_internal("enum", t)
            base = "enum " + self.expect_ident().text
        elif t.kind == "kw" and t.text in ("int", "bool", "void", "cont"):
            if t.text == "cont":
                self.require_internal("cont", t)
            self.advance()
            base = t.text
        else:
            self.fail(f"expected a type but found {self.describe(t)}")
        if self.accept("*"):
            base += "*"
            if self.at("*"):
                self.fail("pointers to pointers are not supported")
        return base

    def array_suffix(self, ty: str) -> str:
        if self.at("["):
            lb = self.advance()
            if ty not in ("int", "bool"):
                raise error_at(lb.pos, "arrays must have int or bool elements")
            if self.tok.kind != "int":
                self.fail("array size must be an integer literal")
            n = int(self.advance().text)
            if n <= 0:
                raise error_at(lb.pos, "array size must be positive")
            self.expect("]")
            return f"{ty}[{n}]"
        return ty

    def parse_fundef(self) -> A.FunDef:
        start = self.tok
        is_cps = self.accept("cps")
        ret = self.parse_type()
        name = self.expect_ident().text
        self.expect("(")
        params = []
        if self.at("void") and self.peek().text == ")":
            self.advance()
        elif not self.at(")"):
            while True:
                pt = self.parse_type()
                pn = self.expect_ident().text
                pt = self.array_suffix(pt)
                if pt != "int[0]" and A.is_array(pt):
                    self.require_internal("array parameter", self.tok)
                params.append(A.Param(pn, pt))
                if not self.accept(","):
                    break
        self.expect(")")
        body = self.parse_block_list()
        return A.FunDef(name, is_cps, params, ret, body, start.pos)

    # statements
    def parse_block_list(self) -> list:
        lb = self.expect("{")
        self.open_braces.append(lb)
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.fail("unexpected end of input")
            stmts.extend(self.parse_stmt())
        rb = self.advance()
        self.open_braces.pop()
        if rb.indent != lb.indent and rb.line != lb.line and self.suspect_brace is None:
            self.suspect_brace = lb
        return stmts

    def parse_body(self) -> A.Block:
        t = self.tok
        if self.at("{"):
            return A.Block(self.parse_block_list(), t.pos)
        return A.Block(self.parse_stmt(), t.pos)

    def parse_stmt(self) -> list:
        t = self.tok
        if self.at("{"):
            return [A.Block(self.parse_block_list(), t.pos)]
        if self.at("cps") or (self.is_type_start() and self.peek().kind == "ident"
                              and self.peek(2).text == "(") or (
                self.is_type_start() and self.peek().text == "*" and self.peek(3).text == "("):
            self.require_internal("nested function", t)
            return [self.parse_fundef()]
        if self.is_type_start():
            return self.parse_decl()
        if self.accept("if"):
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            then = self.parse_body()
            els = None
            if self.accept("else"):
                els = self.parse_body()
            return [A.If(cond, then, els, t.pos)]
        if self.accept("while"):
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            return [A.While(cond, self.parse_body(), t.pos)]
        if self.accept("for"):
            return [self.parse_for(t)]
        if self.accept("break"):
            self.expect(";")
            return [A.Break(t.pos)]
        if self.accept("continue"):
            self.expect(";")
            return [A.Continue(t.pos)]
        if self.accept("return"):
            value = None
            if not self.at(";"):
                value = self.parse_expr()
            self.expect(";")
            return [A.Return(value, t.pos)]
        if self.accept("spawn"):
            call = self.parse_expr()
            if not isinstance(call, A.Call):
                raise error_at(t.pos, "spawn expects a function call")
            self.expect(";")
            return [A.Spawn(call, t.pos)]
        if self.accept("goto"):
            self.require_internal("goto", t)
            label = self.expect_ident().text
            self.expect(";")
            return [A.Goto(label, t.pos)]
        if self.accept("switch"):
            self.require_internal("switch", t)
            self.expect("(")
            subject = self.parse_expr()
            self.expect(")")
            return [A.Switch(subject, self.parse_block_list(), t.pos)]
        if self.accept("case"):
            self.require_internal("case", t)
            tag = self.expect_ident().text
            self.expect(":")
            return [A.Case(tag, t.pos)]
        if t.kind == "ident" and self.peek().text == ":":
            self.require_internal("label", t)
            self.advance()
            self.advance()
            return [A.Label(t.text, t.pos)]
        s = self.parse_simple()
        self.expect(";")
        return [s]

    def parse_decl(self) -> list:
        t = self.tok
        base = self.parse_type()
        decls = []
        while True:
            nt = self.expect_ident()
            ty = self.array_suffix(base)
            init = None
            if self.accept("="):
                init = self.parse_expr()
            decls.append(A.VarDecl(nt.text, ty, init, nt.pos))
            if not self.accept(","):
                break
        self.expect(";")
        return decls

    def parse_for(self, t: Token) -> A.For:
        self.expect("(")
        init = None
        if self.is_type_start():
            decls = self.parse_decl()
            init = decls[0] if len(decls) == 1 else A.Block(decls, t.pos)
        else:
            if not self.at(";"):
                init = self.parse_simple()
            self.expect(";")
        cond = None if self.at(";") else self.parse_expr()
        self.expect(";")
        step = None if self.at(")") else self.parse_simple()
        self.expect(")")
        return A.For(init, cond, step, self.parse_body(), t.pos)

    def parse_simple(self):
        """Assignment, compound assignment, increment, or expression statement."""
        t = self.tok
        e = self.parse_expr()
        for op in ("+=", "-=", "*="):
            if self.accept(op):
                rhs = self.parse_expr()
                return A.Assign(e, A.Binary(op[0], e, rhs, t.pos), t.pos)
        if self.accept("++"):
            return A.Assign(e, A.Binary("+", e, A.IntLit(1, t.pos), t.pos), t.pos)
        if self.accept("--"):
            return A.Assign(e, A.Binary("-", e, A.IntLit(1, t.pos), t.pos), t.pos)
        if self.accept("="):
            return A.Assign(e, self.parse_expr(), t.pos)
        return A.ExprStmt(e, t.pos)

    # expressions
    def parse_expr(self, level: int = 0):
        if level == len(_BINARY_LEVELS):
            return self.parse_unary()
        left = self.parse_expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in _BINARY_LEVELS[level]:
            op = self.advance()
            right = self.parse_expr(level + 1)
            left = A.Binary(op.text, left, right, op.pos)
        return left

    def parse_unary(self):
        t = self.tok
        if self.accept("!"):
            return A.Unary("!", self.parse_unary(), t.pos)
        if self.accept("-"):
            operand = self.parse_unary()
            if isinstance(operand, A.IntLit):
                return A.IntLit(-operand.value, t.pos)
            return A.Unary("-", operand, t.pos)
        if self.accept("&"):
            return A.AddrOf(self.parse_unary(), t.pos)
        if self.accept("*"):
            return A.Deref(self.parse_unary(), t.pos)
        return self.parse_postfix()

    def parse_postfix(self):
        e = self.parse_primary()
        while True:
            t = self.tok
            if self.accept("["):
                idx = self.parse_expr()
                self.expect("]")
                e = A.Index(e, idx, t.pos)
            elif self.accept("->"):
                self.require_internal("'->'", t)
                if not isinstance(e, A.Var):
                    raise error_at(t.pos, "'->' expects an environment variable")
                e = A.EnvField(e.name, self.expect_ident().text, e.pos)
            else:
                return e

    def parse_primary(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return A.IntLit(int(t.text), t.pos)
        if t.kind == "string":
            self.advance()
            return A.StrLit(_unescape(t.text[1:-1], t.pos), t.pos)
        if self.accept("true"):
            return A.BoolLit(True, t.pos)
        if self.accept("false"):
            return A.BoolLit(False, t.pos)
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                return self.parse_call(t)
            return A.Var(t.text, t.pos)
        self.fail(f"unexpected {self.describe(t)} in expression")

    def parse_call(self, name: Token):
        self.expect("(")
        if name.text == "malloc" and self.at("sizeof"):
            st = self.advance()
            self.require_internal("sizeof", st)
            self.expect("(")
            self.expect("struct")
            layout = self.expect_ident().text
            self.expect(")")
            self.expect(")")
            return A.EnvAlloc(layout, name.pos)
        args = []
        if not self.at(")"):
            while True:
                args.append(self.parse_expr())
                if not self.accept(","):
                    break
        self.expect(")")
        if name.text in A.INTRINSICS:
            self.require_internal(f"'{name.text}'", name)
            if name.text == "push" and args and isinstance(args[0], A.Var):
                args[0] = A.FunRef(args[0].name, args[0].pos)
        return A.Call(name.text, args, None, name.pos)


def default_entry(prog: A.Program):
    names = [f.name for f in prog.functions]
    if "main" in names:
        return "main"
    cps = [f.name for f in prog.functions if f.is_cps]
    if len(cps) == 1:
        return cps[0]
    return None


def parse(source: str, internal: bool = False) -> A.Program:
    """Parse Coop source text into a Program; raises CompileError."""
    return Parser(source, internal).parse_program()
