"""Alpha-normalisation of printed programs.

Every user-chosen identifier (functions, variables, labels, state tags,
layout names) is renamed to ``n<i>`` in order of first appearance in the
canonical printed form.  Keywords, builtins, primitives and intrinsics keep
their names.  Two programs are alpha-equivalent iff their normalised forms
are equal, whatever names the passes (or a hand-written listing) chose.
"""

from __future__ import annotations

from . import ast as A
from .parser import parse, tokenize
from .printer import program as print_program


def _reserved(name: str) -> bool:
    return A.is_builtin_name(name) or name in A.IO_DIRECTIONS


def alpha_text(text: str) -> str:
    """Rename identifiers of program text; the result is printed canonically."""
    names = {}
    out = []
    line = None
    for tok in tokenize(text):
        if tok.kind == "eof":
            break
        piece = tok.text
        if tok.kind == "ident" and not _reserved(piece):
            piece = names.setdefault(piece, f"n{len(names) + 1}")
        if line is not None and tok.line != line:
            out.append("\n")
        elif out:
            out.append(" ")
        out.append(piece)
        line = tok.line
    # reparse so that the result is in canonical layout
    return print_program(parse("".join(out), internal=True))


def alpha_program(prog: A.Program) -> A.Program:
    return parse(alpha_text(print_program(prog)), internal=True)


def alpha_equivalent(a, b) -> bool:
    """Compare two programs (AST or text) up to renaming and layout."""
    ta = a if isinstance(a, str) else print_program(a)
    tb = b if isinstance(b, str) else print_program(b)
    return alpha_text(ta) == alpha_text(tb)
