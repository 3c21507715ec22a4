"""Normalized statement IR and control-flow graphs.

Expressions are flattened so every right-hand side applies at most one
operator; intermediate values live in temporaries named ``$tN``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from crusted import diagnostics
from crusted.annotations import (AnnotatedSignature, Contract, CType, Resolver, Tables,
                                 pointer_to, scalar)
from crusted.frontend import ast
from crusted.source import Span

# --- operands -----------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str
    span: Span

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: int | float
    span: Span
    unsigned: bool = False

    def __str__(self) -> str:
        return f"{self.value}U" if self.unsigned else str(self.value)


@dataclass(frozen=True)
class Null:
    span: Span

    def __str__(self) -> str:
        return "NULL"


@dataclass(frozen=True)
class StrConst:
    text: str
    span: Span

    def __str__(self) -> str:
        return self.text


Operand = Var | Const | Null | StrConst

# --- lvalues ------------------------------------------------------------------


@dataclass(frozen=True)
class LVar:
    name: str
    span: Span

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class LDeref:
    ptr: Operand
    span: Span

    def __str__(self) -> str:
        return f"*{self.ptr}"


@dataclass(frozen=True)
class LField:
    """``base.name`` (base is an lvalue) or ``base->name`` (base is a pointer operand)."""

    base: object
    name: str
    arrow: bool
    span: Span

    def __str__(self) -> str:
        return f"{self.base}{'->' if self.arrow else '.'}{self.name}"


@dataclass(frozen=True)
class LIndex:
    base: Operand
    index: Operand
    span: Span

    def __str__(self) -> str:
        return f"{self.base}[{self.index}]"


LValue = LVar | LDeref | LField | LIndex

# --- right-hand sides -----------------------------------------------------------


@dataclass(frozen=True)
class Use:
    operand: Operand

    def __str__(self) -> str:
        return str(self.operand)


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: Operand
    rhs: Operand
    incdec: str | None = None  # "increment"/"decrement" when lowered from ++/--
    span: Span | None = None

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class UnOp:
    op: str
    operand: Operand
    span: Span | None = None

    def __str__(self) -> str:
        return f"{self.op}{self.operand}"


@dataclass(frozen=True)
class AddrOf:
    lvalue: LValue

    def __str__(self) -> str:
        return f"&{self.lvalue}"


@dataclass(frozen=True)
class Load:
    lvalue: LValue

    def __str__(self) -> str:
        return f"load {self.lvalue}"


@dataclass(frozen=True)
class CastOp:
    ctype: CType
    operand: Operand
    span: Span | None = None

    def __str__(self) -> str:
        return f"({self.ctype}) {self.operand}"


Rvalue = Use | BinOp | UnOp | AddrOf | Load | CastOp

# --- instructions --------------------------------------------------------------------


@dataclass(frozen=True)
class Declare:
    name: str
    span: Span

    def __str__(self) -> str:
        return f"declare {self.name}"


@dataclass(frozen=True)
class Assign:
    target: LValue
    value: Rvalue
    span: Span

    def __str__(self) -> str:
        return f"{self.target} = {self.value}"


@dataclass(frozen=True)
class Call:
    dst: str | None
    callee: str
    args: tuple
    span: Span
    func_span: Span

    def __str__(self) -> str:
        call = f"call {self.callee}({', '.join(str(a) for a in self.args)})"
        return f"{self.dst} = {call}" if self.dst else call


@dataclass(frozen=True)
class Return:
    value: Operand | None
    span: Span
    implicit: bool = False

    def __str__(self) -> str:
        return "return" if self.value is None else f"return {self.value}"


@dataclass(frozen=True)
class Region:
    enter: bool
    mode: str  # "checked" | "unchecked"
    kind: str
    span: Span

    def __str__(self) -> str:
        return f"{'enter' if self.enter else 'exit'} {self.mode}(\"{self.kind}\")"


@dataclass(frozen=True)
class Kill:
    """End of lifetime for temporaries or block-scoped locals."""

    names: tuple
    span: Span
    scope_end: bool = False

    def __str__(self) -> str:
        return f"kill {', '.join(self.names)}"


Instr = Declare | Assign | Call | Return | Region | Kill


@dataclass(frozen=True)
class Cond:
    """Branch condition ``lhs op rhs`` with op a comparison."""

    op: str
    lhs: Operand
    rhs: Operand
    span: Span

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class Goto:
    target: int

    def __str__(self) -> str:
        return f"goto B{self.target}"


@dataclass(frozen=True)
class Branch:
    cond: Cond
    on_true: int
    on_false: int

    def __str__(self) -> str:
        return f"if {self.cond} then B{self.on_true} else B{self.on_false}"


@dataclass(frozen=True)
class Exit:
    def __str__(self) -> str:
        return "exit"


NEGATE = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}
FLIP = {"==": "==", "!=": "!=", "<": ">", ">": "<", "<=": ">=", ">=": "<="}


# --- graph ------------------------------------------------------------------------


@dataclass
class Block:
    id: int
    instrs: list = field(default_factory=list)
    term: object = None
    reachable: bool = True

    def successors(self) -> list[int]:
        if isinstance(self.term, Goto):
            return [self.term.target]
        if isinstance(self.term, Branch):
            return [self.term.on_true, self.term.on_false]
        return []


@dataclass
class VarInfo:
    name: str
    display: str
    contract: Contract
    kind: str  # param | local | temp | global
    span: Span


@dataclass
class Cfg:
    name: str
    blocks: list
    entry: int
    exit: int
    vars: dict
    params: list
    signature: AnnotatedSignature
    span: Span
    diags: list = field(default_factory=list)

    def block(self, i: int) -> Block:
        return self.blocks[i]

    def predecessors(self) -> dict[int, list[int]]:
        preds: dict[int, list[int]] = {b.id: [] for b in self.blocks}
        for b in self.blocks:
            for s in b.successors():
                preds[s].append(b.id)
        return preds

    def display(self, name: str) -> str:
        info = self.vars.get(name)
        return info.display if info else name

    def has_loops(self) -> bool:
        order = {b: i for i, b in enumerate(reverse_postorder(self))}
        for b in self.blocks:
            if b.id not in order:
                continue
            for s in b.successors():
                if s in order and order[s] <= order[b.id]:
                    return True
        return False

    def dump(self) -> str:
        lines = [f"function {self.name}"]
        for bid in reverse_postorder(self):
            b = self.blocks[bid]
            tag = " (entry)" if bid == self.entry else " (exit)" if bid == self.exit else ""
            lines.append(f"  B{bid}{tag}:")
            for ins in b.instrs:
                lines.append(f"    {ins}    @{ins.span.line}:{ins.span.col}")
            if b.term is not None:
                lines.append(f"    {b.term}")
        return "\n".join(lines) + "\n"


def reverse_postorder(cfg: Cfg) -> list[int]:
    """Blocks reachable from the entry; ties broken by ascending block id."""
    seen: set[int] = set()
    post: list[int] = []
    stack = [(cfg.entry, iter(sorted(cfg.blocks[cfg.entry].successors(), reverse=True)))]
    seen.add(cfg.entry)
    while stack:
        node, it = stack[-1]
        for s in it:
            if s not in seen:
                seen.add(s)
                stack.append((s, iter(sorted(cfg.blocks[s].successors(), reverse=True))))
                break
        else:
            stack.pop()
            post.append(node)
    return list(reversed(post))


# --- uses and definitions (for liveness) --------------------------------------------


def _operand_vars(op) -> set[str]:
    return {op.name} if isinstance(op, Var) else set()


def _lvalue_uses(lv) -> set[str]:
    if isinstance(lv, LVar):
        return set()
    if isinstance(lv, LDeref):
        return _operand_vars(lv.ptr)
    if isinstance(lv, LField):
        if lv.arrow:
            return _operand_vars(lv.base)
        return _lvalue_uses(lv.base) | ({lv.base.name} if isinstance(lv.base, LVar) else set())
    if isinstance(lv, LIndex):
        return _operand_vars(lv.base) | _operand_vars(lv.index)
    return set()


def _rvalue_uses(rv) -> set[str]:
    if isinstance(rv, Use):
        return _operand_vars(rv.operand)
    if isinstance(rv, BinOp):
        return _operand_vars(rv.lhs) | _operand_vars(rv.rhs)
    if isinstance(rv, (UnOp, CastOp)):
        return _operand_vars(rv.operand)
    if isinstance(rv, AddrOf):
        return _lvalue_uses(rv.lvalue)
    if isinstance(rv, Load):
        lv = rv.lvalue
        return _lvalue_uses(lv) | ({lv.name} if isinstance(lv, LVar) else set())
    return set()


def uses_defs(ins) -> tuple[set[str], set[str]]:
    if isinstance(ins, Assign):
        uses = _rvalue_uses(ins.value) | _lvalue_uses(ins.target)
        defs = {ins.target.name} if isinstance(ins.target, LVar) else set()
        return uses, defs
    if isinstance(ins, Call):
        uses = set()
        for a in ins.args:
            uses |= _operand_vars(a)
        return uses, ({ins.dst} if ins.dst else set())
    if isinstance(ins, Return):
        return (_operand_vars(ins.value) if ins.value is not None else set()), set()
    if isinstance(ins, Declare):
        return set(), {ins.name}
    if isinstance(ins, Kill):
        return set(), set(ins.names)
    return set(), set()


def liveness(cfg: Cfg) -> dict[tuple[int, int], frozenset]:
    """Variables live immediately after each instruction ``(block, index)``."""
    live_in: dict[int, set] = {b.id: set() for b in cfg.blocks}
    changed = True
    while changed:
        changed = False
        for b in reversed(cfg.blocks):
            live = set()
            for s in b.successors():
                live |= live_in[s]
            if isinstance(b.term, Branch):
                live |= _operand_vars(b.term.cond.lhs) | _operand_vars(b.term.cond.rhs)
            for ins in reversed(b.instrs):
                uses, defs = uses_defs(ins)
                live = (live - defs) | uses
            if live != live_in[b.id]:
                live_in[b.id] = live
                changed = True
    out: dict[tuple[int, int], frozenset] = {}
    for b in cfg.blocks:
        live = set()
        for s in b.successors():
            live |= live_in[s]
        if isinstance(b.term, Branch):
            live |= _operand_vars(b.term.cond.lhs) | _operand_vars(b.term.cond.rhs)
        for i in range(len(b.instrs) - 1, -1, -1):
            out[(b.id, i)] = frozenset(live)
            uses, defs = uses_defs(b.instrs[i])
            live = (live - defs) | uses
    return out


# --- lowering -------------------------------------------------------------------------


class LowerError(Exception):
    def __init__(self, diag):
        super().__init__(diag.message)
        self.diagnostic = diag


INT = scalar("int")
UINT = scalar("unsigned")
DOUBLE = scalar("double")
CHAR = scalar("char")


class Typer:
    """Static C types of operands and lvalues in a lowered function."""

    def __init__(self, vars: dict, tables: Tables):
        self.vars = vars
        self.tables = tables

    def type_of_var(self, name: str) -> CType:
        info = self.vars.get(name)
        if info is not None:
            return info.contract.ctype
        if name in self.tables.globals:
            return self.tables.globals[name].ctype
        return INT


    def operand_type(self, op) -> CType:
        if isinstance(op, Var):
            return self.type_of_var(op.name)
        if isinstance(op, Const):
            if isinstance(op.value, float):
                return DOUBLE
            return UINT if op.unsigned else INT
        if isinstance(op, Null):
            return pointer_to(scalar("void"))
        return pointer_to(CType("int", "char", const=True, signed=True, bits=8))


    def lvalue_type(self, lv) -> CType:
        if isinstance(lv, LVar):
            return self.type_of_var(lv.name)
        if isinstance(lv, LDeref):
            pt = self.operand_type(lv.ptr)
            return pt.target if pt.target is not None else INT
        if isinstance(lv, LIndex):
            pt = self.operand_type(lv.base)
            return pt.target if pt.target is not None else INT
        if isinstance(lv, LField):
            if lv.arrow:
                st = self.operand_type(lv.base).target
            else:
                st = self.lvalue_type(lv.base)
            info = self.tables.struct_of(st)
            if info is not None and info.field(lv.name) is not None:
                return info.field(lv.name).ctype
            return INT
        return INT


    def rvalue_type(self, rv) -> CType:
        if isinstance(rv, BinOp):
            if rv.op in NEGATE:
                return INT
            lt, rt = self.operand_type(rv.lhs), self.operand_type(rv.rhs)
            if lt.is_pointer:
                return lt
            if lt.kind == "float" or rt.kind == "float":
                return DOUBLE
            return lt if lt.bits >= rt.bits else rt
        if isinstance(rv, UnOp):
            return INT if rv.op == "!" else self.operand_type(rv.operand)
        if isinstance(rv, AddrOf):
            return pointer_to(self.lvalue_type(rv.lvalue))
        if isinstance(rv, Load):
            return self.lvalue_type(rv.lvalue)
        if isinstance(rv, CastOp):
            return rv.ctype
        return self.operand_type(rv.operand)



class Lowerer(Typer):
    def __init__(self, fn: ast.FunctionDef, tables: Tables, sig: AnnotatedSignature,
                 source: str | None = None):
        self.fn = fn
        self.source = source
        self.tables = tables
        self.sig = sig
        self.blocks: list[Block] = []
        self.vars: dict[str, VarInfo] = {}
        self.scopes: list[dict[str, str]] = []
        self.scope_locals: list[list[str]] = []
        self.temp_count = 0
        self.stmt_temps: list[str] = []
        self.cur: Block | None = None
        self.diags: list = []
        self.resolver = Resolver(tables)
        self.unreachable_reported = False

    # blocks

    def new_block(self) -> Block:
        b = Block(len(self.blocks))
        self.blocks.append(b)
        return b

    def emit(self, ins) -> None:
        if self.cur is None:
            self.cur = self.new_block()
            self.cur.reachable = False
        self.cur.instrs.append(ins)

    def terminate(self, term) -> None:
        if self.cur is not None and self.cur.term is None:
            self.cur.term = term
        self.cur = None

    def start(self, b: Block) -> None:
        self.cur = b

    def error(self, span: Span, detail: str, code: str = "CR-LOWER") -> LowerError:
        return LowerError(diagnostics.make(code, span, detail=detail))

    # variables

    def lookup(self, name: str) -> str | None:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def declare_var(self, display: str, contract: Contract, kind: str, span: Span) -> str:
        name = display
        n = 1
        while name in self.vars:
            n += 1
            name = f"{display}#{n}"
        self.vars[name] = VarInfo(name, display, contract, kind, span)
        if self.scopes:
            self.scopes[-1][display] = name
            self.scope_locals[-1].append(name)
        return name

    def temp(self, ctype: CType, span: Span, contract: Contract | None = None) -> str:
        self.temp_count += 1
        name = f"$t{self.temp_count}"
        display = name
        if self.source is not None and span.length > 0:
            # messages name a temporary by the expression it holds
            display = " ".join(self.source[span.offset:span.offset + span.length].split())
        self.vars[name] = VarInfo(name, display, contract or Contract(ctype), "temp", span)
        self.stmt_temps.append(name)
        return name

    # entry point

    def lower(self) -> Cfg:
        entry = self.new_block()
        self.start(entry)
        self.scopes.append({})
        self.scope_locals.append([])
        params = []
        for i, p in enumerate(self.fn.decl.params):
            if p.name is None:
                continue
            contract = self.sig.params[i] if i < len(self.sig.params) else Contract(INT)
            params.append(self.declare_var(p.name, contract, "param", p.span))
        self.lower_block_items(self.fn.body.items)
        end_span = last_char_span(self.fn.body.span, self.source)
        if self.cur is not None:
            self.emit(Return(None, end_span, implicit=True))
        self.terminate(None)
        exit_block = self.new_block()
        exit_block.term = Exit()
        for b in self.blocks:
            if b.term is None and b.id != exit_block.id:
                b.term = Goto(exit_block.id)
        cfg = Cfg(self.fn.decl.name, self.blocks, entry.id, exit_block.id, self.vars, params,
                  self.sig, self.fn.span, self.diags)
        reach = set(reverse_postorder(cfg))
        for b in self.blocks:
            b.reachable = b.id in reach
        return cfg

    # statements

    def lower_block_items(self, items) -> None:
        for s in items:
            self.statement(s)

    def statement(self, s) -> None:
        if self.cur is None and not isinstance(s, ast.Empty):
            if not self.unreachable_reported:
                self.diags.append(diagnostics.make("CR-UNREACHABLE", s.span))
                self.unreachable_reported = True
        self.stmt_temps = []
        try:
            self.statement_inner(s)
        except LowerError as e:
            self.diags.append(e.diagnostic)
        self.end_statement(s.span)

    def end_statement(self, span: Span) -> None:
        if self.stmt_temps and self.cur is not None:
            self.emit(Kill(tuple(self.stmt_temps), span))
        self.stmt_temps = []

    def statement_inner(self, s) -> None:
        if isinstance(s, ast.VarDecl):
            self.var_decl(s)
        elif isinstance(s, ast.ExprStmt):
            self.expr_stmt(s.expr)
        elif isinstance(s, ast.Return):
            value = self.expr(s.value) if s.value is not None else None
            self.emit(Return(value, s.span))
            self.terminate(None)
        elif isinstance(s, ast.If):
            self.if_stmt(s)
        elif isinstance(s, ast.While):
            self.while_stmt(s)
        elif isinstance(s, ast.Block):
            self.block_stmt(s)
        elif isinstance(s, ast.Empty):
            pass
        else:
            raise self.error(s.span, f"unsupported statement {type(s).__name__}")

    def var_decl(self, d: ast.VarDecl) -> None:
        if "static" in d.storage or "extern" in d.storage:
            raise self.error(d.span, "block-scope static or extern declarations")
        contract = self.resolver.contract(d.type, "local", d.span, d.name)
        self.diags.extend(self.resolver.diags)
        self.resolver.diags = []
        init = None
        if d.init is not None:
            init = self.rvalue(d.init)
        name = self.declare_var(d.name, contract, "local", d.name_span or d.span)
        self.emit(Declare(name, d.name_span or d.span))
        if init is not None:
            self.emit(Assign(LVar(name, d.name_span or d.span), init, d.span))

    def expr_stmt(self, e) -> None:
        if isinstance(e, ast.Cast) and e.type.base == "void" and not e.type.pointers:
            self.expr_stmt(e.operand)
            return
        if isinstance(e, ast.Paren):
            self.expr_stmt(e.expr)
            return
        if isinstance(e, (ast.Unary, ast.Postfix)) and e.op in ("++", "--"):
            self.incdec(e, want_value=False)
            return
        if isinstance(e, ast.Assign):
            self.assign(e)
            return
        self.expr(e)

    def if_stmt(self, s: ast.If) -> None:
        then_b, else_b = self.new_block(), self.new_block()
        cond_temps_before = len(self.stmt_temps)
        self.cond(s.cond, then_b.id, else_b.id)
        temps = tuple(self.stmt_temps[cond_temps_before:])
        self.stmt_temps = self.stmt_temps[:cond_temps_before]
        join = self.new_block()
        self.start(then_b)
        if temps:
            self.emit(Kill(temps, s.cond.span))
        self.nested(s.then)
        self.terminate(Goto(join.id))
        self.start(else_b)
        if temps:
            self.emit(Kill(temps, s.cond.span))
        if s.orelse is not None:
            self.nested(s.orelse)
        self.terminate(Goto(join.id))
        self.start(join)
        if not self._has_preds(join.id):
            self.cur = None

    def _has_preds(self, bid: int) -> bool:
        return any(bid in b.successors() for b in self.blocks)

    def while_stmt(self, s: ast.While) -> None:
        head = self.new_block()
        self.terminate(Goto(head.id))
        self.start(head)
        body, after = self.new_block(), self.new_block()
        before = len(self.stmt_temps)
        self.cond(s.cond, body.id, after.id)
        temps = tuple(self.stmt_temps[before:])
        self.stmt_temps = self.stmt_temps[:before]
        self.start(body)
        if temps:
            self.emit(Kill(temps, s.cond.span))
        self.nested(s.body)
        self.terminate(Goto(head.id))
        self.start(after)
        if temps:
            self.emit(Kill(temps, s.cond.span))

    def nested(self, s) -> None:
        saved = self.stmt_temps
        self.statement(s)
        self.stmt_temps = saved

    def block_stmt(self, b: ast.Block) -> None:
        regions = []
        for a in b.annotations:
            if a.malformed:
                continue
            mode = "checked" if a.name == "e_checked" else "unchecked"
            regions.append(Region(True, mode, a.args, a.span))
        for r in regions:
            self.emit(r)
        self.scopes.append({})
        self.scope_locals.append([])
        self.lower_block_items(b.items)
        locals_ = self.scope_locals.pop()
        self.scopes.pop()
        close = last_char_span(b.span, self.source)
        if locals_ and self.cur is not None:
            self.emit(Kill(tuple(locals_), close, scope_end=True))
        for r in reversed(regions):
            if self.cur is not None:
                self.emit(Region(False, r.mode, r.kind, close))

    # conditions

    def cond(self, e, t: int, f: int) -> None:
        if isinstance(e, ast.Paren):
            return self.cond(e.expr, t, f)
        if isinstance(e, ast.Binary) and e.op == "||":
            mid = self.new_block()
            self.cond(e.lhs, t, mid.id)
            self.start(mid)
            return self.cond(e.rhs, t, f)
        if isinstance(e, ast.Binary) and e.op == "&&":
            mid = self.new_block()
            self.cond(e.lhs, mid.id, f)
            self.start(mid)
            return self.cond(e.rhs, t, f)
        if isinstance(e, ast.Unary) and e.op == "!":
            return self.cond(e.operand, f, t)
        if isinstance(e, ast.Binary) and e.op in NEGATE:
            lhs = self.expr(e.lhs)
            rhs = self.expr(e.rhs)
            self.terminate(Branch(Cond(e.op, lhs, rhs, e.span), t, f))
            return None
        v = self.expr(e)
        self.terminate(Branch(Cond("!=", v, Const(0, e.span), e.span), t, f))
        return None

    # expressions

    def assign(self, e: ast.Assign):
        target = self.lvalue(e.target)
        value = self.rvalue(e.value)
        self.emit(Assign(target, value, e.span))
        if isinstance(target, LVar):
            return Var(target.name, e.span)
        return None

    def incdec(self, e, want_value: bool):
        target = self.lvalue(e.operand)
        old = self.read_lvalue(target, e.operand.span)
        op = "+" if e.op == "++" else "-"
        kind = "increment" if e.op == "++" else "decrement"
        result = None
        if want_value and isinstance(e, ast.Postfix):
            saved = self.temp(self.operand_type(old), e.span)
            self.emit(Assign(LVar(saved, e.span), Use(old), e.span))
            result = Var(saved, e.span)
        self.emit(Assign(target, BinOp(op, old, Const(1, e.span), kind, e.span), e.span))
        if want_value and result is None:
            result = self.read_lvalue(target, e.span)
        return result

    def read_lvalue(self, lv, span: Span):
        if isinstance(lv, LVar):
            return Var(lv.name, span)
        t = self.temp(self.lvalue_type(lv), span)
        self.emit(Assign(LVar(t, span), Load(lv), span))
        return Var(t, span)

    def lvalue(self, e):
        if isinstance(e, ast.Paren):
            return self.lvalue(e.expr)
        if isinstance(e, ast.Name):
            name = self.lookup(e.ident)
            if name is None:
                if e.ident in self.tables.globals:
                    return LVar(e.ident, e.span)
                raise self.error(e.span, f"undeclared identifier '{e.ident}'", "CR-PARSE")
            return LVar(name, e.span)
        if isinstance(e, ast.Unary) and e.op == "*":
            return LDeref(self.expr(e.operand), e.span)
        if isinstance(e, ast.Index):
            return LIndex(self.expr(e.base), self.expr(e.index), e.span)
        if isinstance(e, ast.Member):
            if e.arrow:
                return LField(self.expr(e.base), e.name, True, e.span)
            return LField(self.lvalue(e.base), e.name, False, e.span)
        raise self.error(e.span, "assignment target is not an lvalue")

    def rvalue(self, e):
        """Lower ``e`` to a flat right-hand side (at most one operator)."""
        if isinstance(e, ast.Paren):
            return self.rvalue(e.expr)
        folded = _fold_negative(e)
        if folded is not None:
            return Use(folded)
        if isinstance(e, ast.Binary) and e.op not in ("&&", "||"):
            return BinOp(e.op, self.expr(e.lhs), self.expr(e.rhs), span=e.span)
        if isinstance(e, ast.Unary) and e.op in ("-", "+", "!", "~"):
            return UnOp(e.op, self.expr(e.operand), e.span)
        if isinstance(e, ast.Unary) and e.op == "&":
            return AddrOf(self.lvalue(e.operand))
        if isinstance(e, ast.Unary) and e.op == "*":
            return Load(LDeref(self.expr(e.operand), e.span))
        if isinstance(e, ast.Index):
            return Load(self.lvalue(e))
        if isinstance(e, ast.Member):
            return Load(self.lvalue(e))
        if isinstance(e, ast.Cast):
            operand = self.expr(e.operand)
            return CastOp(self.resolver.full_type(e.type), operand, e.span)
        return Use(self.expr(e))

    def expr(self, e) -> Operand:
        """Lower ``e`` to an operand, emitting instructions for its effects."""
        if isinstance(e, ast.Paren):
            return self.expr(e.expr)
        if isinstance(e, ast.Name):
            return self.name(e)
        if isinstance(e, ast.IntLit):
            return Const(e.value, e.span, e.unsigned)
        if isinstance(e, ast.CharLit):
            return Const(e.value, e.span)
        if isinstance(e, ast.FloatLit):
            return Const(e.value, e.span)
        if isinstance(e, ast.StrLit):
            return StrConst(e.text, e.span)
        if isinstance(e, ast.Call):
            return self.call(e)
        if isinstance(e, ast.Assign):
            v = self.assign(e)
            if v is None:
                raise self.error(e.span, "value of an assignment through a reference")
            return v
        if isinstance(e, (ast.Unary, ast.Postfix)) and e.op in ("++", "--"):
            return self.incdec(e, want_value=True)
        if isinstance(e, ast.Binary) and e.op in ("&&", "||"):
            return self.logical_value(e)
        rv = self.rvalue(e)
        if isinstance(rv, Use):
            return rv.operand
        t = self.temp(self.rvalue_type(rv), e.span)
        self.emit(Assign(LVar(t, e.span), rv, e.span))
        return Var(t, e.span)

    def name(self, e: ast.Name) -> Operand:
        name = self.lookup(e.ident)
        if name is not None:
            t = self.vars[name].contract.ctype
            if t.kind == "array":
                tmp = self.temp(pointer_to(t.target), e.span)
                self.emit(Assign(LVar(tmp, e.span), AddrOf(LVar(name, e.span)), e.span))
                return Var(tmp, e.span)
            return Var(name, e.span)
        if e.ident == "NULL":
            return Null(e.span)
        if e.ident in self.tables.constants:
            return Const(self.tables.constants[e.ident], e.span)
        if e.ident in self.tables.globals:
            return Var(e.ident, e.span)
        if e.ident in self.tables.signatures:
            raise self.error(e.span, f"function '{e.ident}' used as a value")
        raise self.error(e.span, f"undeclared identifier '{e.ident}'", "CR-PARSE")

    def call(self, e: ast.Call) -> Operand:
        args = tuple(self.expr(a) for a in e.args)
        sig = self.tables.signatures.get(e.func)
        ret = sig.ret if sig is not None else Contract(INT)
        dst = None
        result: Operand = Const(0, e.span)
        if ret.ctype.kind != "void":
            dst = self.temp(ret.ctype, e.span, ret)
            result = Var(dst, e.span)
        self.emit(Call(dst, e.func, args, e.span, e.func_span))
        return result

    def logical_value(self, e: ast.Binary) -> Operand:
        t = self.temp(INT, e.span)
        yes, no, join = self.new_block(), self.new_block(), self.new_block()
        self.cond(e, yes.id, no.id)
        self.start(yes)
        self.emit(Assign(LVar(t, e.span), Use(Const(1, e.span)), e.span))
        self.terminate(Goto(join.id))
        self.start(no)
        self.emit(Assign(LVar(t, e.span), Use(Const(0, e.span)), e.span))
        self.terminate(Goto(join.id))
        self.start(join)
        return Var(t, e.span)


def _fold_negative(e) -> Const | None:
    """``-1`` and ``-1.5`` are constants, not operator applications."""
    if isinstance(e, ast.Unary) and e.op == "-":
        inner = e.operand
        while isinstance(inner, ast.Paren):
            inner = inner.expr
        if isinstance(inner, (ast.IntLit, ast.FloatLit)):
            return Const(-inner.value, e.span, getattr(inner, "unsigned", False))
    return None


def last_char_span(span: Span, source: str | None) -> Span:
    """Span of the final character of ``span`` (a closing brace)."""
    off = span.end - 1
    if source is None or off < 0 or off >= len(source):
        return Span(span.file, span.line, span.col, span.offset, 1)
    line = source.count("\n", 0, off) + 1
    col = off - source.rfind("\n", 0, off)
    return Span(span.file, line, col, off, 1)


def lower_function(fn: ast.FunctionDef, tables: Tables,
                   sig: AnnotatedSignature | None = None, source: str | None = None) -> Cfg:
    """Lower one function definition; ``source`` improves closing-brace spans."""
    if sig is None:
        sig = tables.signatures.get(fn.decl.name)
    if sig is None:
        r = Resolver(tables)
        sig = r.signature(fn.decl)
    return Lowerer(fn, tables, sig, source).lower()
