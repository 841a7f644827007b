"""Lambda lifting of split functions: parameter lifting, then floating.

Parameter lifting turns every outer variable an inner function needs into
a parameter of that function.  "Needs" means live at the function's entry:
read on some path before being written, either directly or by an inner
function it tail-calls.  Liveness is a fixpoint over the inner-function
call graph, so a variable dead in a block is not copied into it.

Floating then moves the closed inner functions to top level under the name
``<outer>__<inner>``.
"""

from __future__ import annotations

from .. import ast as A


def _vars_in(e) -> set:
    return {x.name for x in A.walk_expr(e) if isinstance(x, A.Var)}


class _Instr:
    __slots__ = ("uses", "defs", "calls", "succ")

    def __init__(self, uses=(), defs=(), calls=(), succ=None):
        self.uses = set(uses)
        self.defs = set(defs)
        self.calls = list(calls)     # inner functions whose live-in sets are used here
        self.succ = succ             # None: fall through; list: explicit targets


def _inner_calls(e, inner: set) -> list:
    return [x.name for x in A.walk_expr(e) if isinstance(x, A.Call) and x.name in inner]


def _flatten(stmts, inner: set, code: list, labels: dict, pending: list):
    """Append instructions for ``stmts``; ``pending`` collects (index, label) jumps."""
    for s in stmts:
        if isinstance(s, A.If):
            cond = _Instr(_vars_in(s.cond), calls=_inner_calls(s.cond, inner))
            code.append(cond)
            ci = len(code) - 1
            _flatten(s.then.stmts, inner, code, labels, pending)
            if s.els is not None:
                jump = _Instr(succ=[])
                code.append(jump)
                cond.succ = [ci + 1, len(code)]
                _flatten(s.els.stmts, inner, code, labels, pending)
                jump.succ = [len(code)]
            else:
                cond.succ = [ci + 1, len(code)]
        elif isinstance(s, A.Block):
            _flatten(s.stmts, inner, code, labels, pending)
        elif isinstance(s, A.Switch):
            head = _Instr(_vars_in(s.subject), succ=[])
            code.append(head)
            case_at = []
            for x in s.body:
                if isinstance(x, A.Case):
                    case_at.append(len(code))
                _flatten([x], inner, code, labels, pending)
            head.succ = case_at + [len(code)]
        elif isinstance(s, A.Label):
            labels[s.name] = len(code)
        elif isinstance(s, A.Case):
            pass
        elif isinstance(s, A.Goto):
            code.append(_Instr(succ=[]))
            pending.append((len(code) - 1, s.label))
        elif isinstance(s, A.Return):
            uses = _vars_in(s.value) if s.value is not None else set()
            calls = _inner_calls(s.value, inner) if s.value is not None else []
            code.append(_Instr(uses, calls=calls, succ=[]))
        elif isinstance(s, A.Assign):
            uses = _vars_in(s.value)
            defs = set()
            if isinstance(s.target, A.Var):
                defs.add(s.target.name)
            else:
                uses |= _vars_in(s.target)
            code.append(_Instr(uses, defs, _inner_calls(s.value, inner)))
        elif isinstance(s, A.FunDef):
            pass
        else:
            uses, calls = set(), []
            for e in A.stmt_exprs(s):
                uses |= _vars_in(e)
                calls += _inner_calls(e, inner)
            code.append(_Instr(uses, calls=calls))


def _compile(g: A.FunDef, inner: set) -> list:
    code, labels, pending = [], {}, []
    _flatten(g.body, inner, code, labels, pending)
    for i, label in pending:
        code[i].succ = [labels[label]]
    return code


def _live_in(code: list, live_of: dict) -> set:
    n = len(code)
    live = [set() for _ in range(n + 1)]
    changed = True
    while changed:
        changed = False
        for i in range(n - 1, -1, -1):
            ins = code[i]
            succ = [i + 1] if ins.succ is None else ins.succ
            out = set()
            for j in succ:
                out |= live[j]
            new = (out - ins.defs) | ins.uses
            for c in ins.calls:
                new |= live_of[c]
            if new != live[i]:
                live[i] = new
                changed = True
    return live[0] if code else set()


def liveness(f: A.FunDef) -> dict:
    """Outer variables live at entry of each inner function of split ``f``."""
    inner_fns = f.inner_functions()
    inner = {g.name for g in inner_fns}
    outer_vars = {p.name for p in f.params} | {
        s.name for s in f.body if isinstance(s, A.VarDecl)}
    codes = {g.name: _compile(g, inner) for g in inner_fns}
    own = {g.name: {p.name for p in g.params} for g in inner_fns}
    live = {g.name: set() for g in inner_fns}
    changed = True
    while changed:
        changed = False
        for g in inner_fns:
            new = (_live_in(codes[g.name], live) & outer_vars) - own[g.name]
            if new != live[g.name]:
                live[g.name] = new
                changed = True
    return live


def _value_continuations(f: A.FunDef) -> dict:
    """Inner function -> variable receiving the value of the call it follows."""
    inner = {g.name for g in f.inner_functions()}
    forced = {}

    def scan(stmts):
        for i, s in enumerate(stmts):
            if isinstance(s, A.Assign) and isinstance(s.value, A.Call) and s.value.cps \
                    and s.value.name not in inner and isinstance(s.target, A.Var):
                nxt = stmts[i + 1] if i + 1 < len(stmts) else None
                call = None
                if isinstance(nxt, A.ExprStmt) and isinstance(nxt.expr, A.Call):
                    call = nxt.expr
                elif isinstance(nxt, A.Return) and isinstance(nxt.value, A.Call):
                    call = nxt.value
                if call is not None and call.name in inner:
                    forced[call.name] = s.target.name
            for c in A.child_stmts(s):
                if isinstance(c, A.Block):
                    scan(c.stmts)
            if isinstance(s, A.Switch):
                scan(s.body)

    for g in f.inner_functions():
        scan(g.body)
    return forced


def _first_use_order(f: A.FunDef) -> list:
    order = [p.name for p in f.params]
    seen = set(order)
    for g in f.inner_functions():
        for e in A.all_exprs(g.body):
            if isinstance(e, A.Var) and e.name not in seen:
                seen.add(e.name)
                order.append(e.name)
    for s in f.body:
        if isinstance(s, A.VarDecl) and s.name not in seen:
            seen.add(s.name)
            order.append(s.name)
    return order


def _add_args(stmts_or_stmt, lifted: dict):
    def fix(e):
        if isinstance(e, A.Call) and e.name in lifted:
            return A.Call(e.name, list(e.args) + [A.Var(v) for v in lifted[e.name]], e.cps, e.pos)
        return e
    return A.map_stmt_exprs(stmts_or_stmt, fix)


def param_lift(f: A.FunDef, all_vars: bool = False) -> A.FunDef:
    """Lift free variables of the inner functions of split ``f`` into parameters."""
    inner_fns = f.inner_functions()
    if not inner_fns:
        return f
    types = A.var_types(f)
    outer_params = [p.name for p in f.params]
    decls = [s for s in f.body if isinstance(s, A.VarDecl)]
    if all_vars:
        everything = set(outer_params) | {d.name for d in decls}
        live = {g.name: everything - {p.name for p in g.params} for g in inner_fns}
    else:
        live = liveness(f)
    forced = _value_continuations(f)
    order = _first_use_order(f)
    rank = {n: i for i, n in enumerate(order)}
    lifted = {}
    for g in inner_fns:
        names = sorted(live[g.name], key=lambda n: rank.get(n, len(rank)))
        v = forced.get(g.name)
        if v is not None:
            names = [n for n in names if n != v] + [v]
        lifted[g.name] = names
    new_inner = []
    for g in inner_fns:
        params = list(g.params) + [A.Param(n, types[n]) for n in lifted[g.name]]
        pnames = {p.name for p in params}
        used = []
        for e in A.all_exprs(g.body):
            if isinstance(e, A.Var) and e.name in types and e.name not in pnames \
                    and e.name not in used and (e.name in outer_params or
                                                any(d.name == e.name for d in decls)):
                used.append(e.name)
        used.sort(key=lambda n: rank.get(n, len(rank)))
        local = [A.VarDecl(n, types[n], None) for n in used]
        body = local + [_add_args(s, lifted) for s in g.body]
        new_inner.append(A.FunDef(g.name, g.is_cps, params, g.ret_type, body, g.pos))
    tail = [s for s in f.body if not isinstance(s, (A.VarDecl, A.FunDef))]
    tail = [_add_args(s, lifted) for s in tail]
    needed = set()
    for s in tail:
        needed |= {e.name for e in A.all_exprs([s]) if isinstance(e, A.Var)}
    outer_decls = [d for d in decls if d.name in needed]
    body = outer_decls + new_inner + tail
    return A.FunDef(f.name, f.is_cps, list(f.params), f.ret_type, body, f.pos)


def float_inner(f: A.FunDef) -> list:
    """Move the (closed) inner functions of ``f`` to top level, before ``f``."""
    inner_fns = f.inner_functions()
    if not inner_fns:
        return [f]
    rename = {g.name: f"{f.name}__{g.name.lstrip('_')}" for g in inner_fns}

    def fix(e):
        if isinstance(e, A.Call) and e.name in rename:
            return A.Call(rename[e.name], e.args, e.cps, e.pos)
        if isinstance(e, A.FunRef) and e.name in rename:
            return A.FunRef(rename[e.name], e.pos)
        return e

    out = []
    for g in inner_fns:
        out.append(A.FunDef(rename[g.name], g.is_cps, list(g.params), g.ret_type,
                            [A.map_stmt_exprs(s, fix) for s in g.body], g.pos))
    body = [A.map_stmt_exprs(s, fix) for s in f.body if not isinstance(s, A.FunDef)]
    out.append(A.FunDef(f.name, f.is_cps, list(f.params), f.ret_type, body, f.pos))
    return out


def param_lift_program(prog: A.Program, all_vars: bool = False) -> A.Program:
    items = [param_lift(it, all_vars) if isinstance(it, A.FunDef) and it.is_cps else it
             for it in prog.items]
    return A.Program(items, prog.entry)


def float_program(prog: A.Program) -> A.Program:
    items = []
    for it in prog.items:
        if isinstance(it, A.FunDef):
            items.extend(float_inner(it))
        else:
            items.append(it)
    return A.Program(items, prog.entry)


def lambda_lift(prog: A.Program, all_vars: bool = False) -> A.Program:
    return float_program(param_lift_program(prog, all_vars))


def free_variables(f: A.FunDef, tags=()) -> set:
    """Variables used in ``f`` (including nested functions) but bound nowhere in it."""
    bound = {p.name for p in f.params} | set(tags)
    free = set()

    def visit(g, outer_bound):
        b = set(outer_bound) | {p.name for p in g.params}
        b |= {s.name for s in A.walk_stmts(g.body) if isinstance(s, A.VarDecl)}
        for s in A.walk_stmts(g.body):
            if isinstance(s, A.FunDef):
                visit(s, b)
        for e in A.all_exprs(g.body):
            if isinstance(e, A.Var) and e.name not in b:
                free.add(e.name)
            elif isinstance(e, A.EnvField) and e.env not in b:
                free.add(e.env)

    visit(f, bound)
    return free


def closed_free_scan(f: A.FunDef, tags=()) -> set:
    """Free variables of ``f``'s inner functions taken on their own."""
    out = set()
    for g in f.inner_functions():
        out |= free_variables(g, tags)
    return out
