"""Concrete all-paths interpreter used as an oracle for the analyzer.

It walks the parsed syntax tree of a loop-free function with concrete
values. Every unknown input (parameters, call results, fields read through
pointers) forks over a handful of representative values, and every
feasible path is executed to its end. A finding reported on any path is a
finding of the function. Nothing here uses the IR or the abstract
interpreter; only the parser and the annotation tables are shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from crusted.annotations import (INIT_ON_SUCCESS, INITIALIZES, MAYBE_UNINIT, REQUIRES, Contract,
                                 CType, Resolver, build_annotation_tables, scalar)
from crusted.frontend import ast, parse_source, resolve_includes
from crusted.libmodels import builtin_models

# codes produced by the path-sensitive checks
ANALYSIS_CODES = frozenset({
    "CR-OPT-DEREF", "CR-OPT-ARG", "CR-OPT-RET", "CR-UNINIT-USE", "CR-USE-AFTER-MOVE",
    "CR-USE-AFTER-RELEASE", "CR-OWN-LEAK", "CR-OWN-UNCLEAR", "CR-RELEASE-INVALID",
    "CR-FINI-MISSING", "CR-NOMINAL-OP", "CR-NOMINAL-MIX", "CR-VAL-RANGE", "CR-PRE-VIOLATION",
    "CR-POST-VIOLATION", "CR-UNSAFE-ACCESS", "CR-UNSAFE-PROPAGATE", "CR-EXCL-VIOLATION",
    "CR-CONST-CAST",
})

# allocation functions that return NULL for a zero size argument
ZERO_SIZE = {"malloc": (0,), "calloc": (0, 1)}

MAX_PATHS = 50_000
UNKNOWN_PROP = object()
_INT = scalar("int")
_UINT = scalar("unsigned int")
_DOUBLE = scalar("double")
_COMPARE = {"==", "!=", "<", "<=", ">", ">="}


class Unsupported(Exception):
    """The function uses a construct the oracle does not model (loops)."""


class _Stop(Exception):
    """The current path ends (return, or a dereference that cannot proceed)."""


@dataclass(frozen=True)
class Val:
    num: int | float = 0
    ctype: CType | None = None
    ptr: bool = False
    obj: int | None = None  # target object of a pointer; None with ptr=True is NULL
    nominal: str | None = None
    sentinel: object = None  # set when the value is the "absent" case of an optional
    const: bool = False  # a literal (or folded literal expression)
    src: str | None = None  # variable the value was read from
    owned: int | None = None  # resource carried by the value
    moved: bool = False  # read from a moved-out variable
    addr_of: str | None = None  # ``&x`` of variable x


@dataclass
class Obj:
    state: str = "init"  # uninit, init, finalized, released, moved
    ctype: CType | None = None
    props: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    value: Val | None = None
    owns: int | None = None
    var: str | None = None
    unknown: bool = False  # reached through a pointer nothing is known about


@dataclass
class Slot:
    name: str
    obj: int
    contract: Contract
    kind: str  # local, param


def representatives(parts, ctype: CType | None) -> list:
    """A few concrete members of a union of intervals: bounds and values near zero."""
    is_float = ctype is not None and ctype.kind == "float"
    out: list = []
    for lo, hi in parts:
        cands = [lo, hi, -1, 0, 1, 16]
        for x in cands:
            if isinstance(x, float) and math.isinf(x):
                continue
            if lo <= x <= hi:
                x = float(x) if is_float else int(x)
                if x not in out:
                    out.append(x)
        if not any(lo <= x <= hi for x in out):
            x = lo + 1 if math.isinf(hi) else hi - 1
            out.append(float(x) if is_float else int(x))
    return out


def convert(num, ctype: CType | None):
    if ctype is None or isinstance(num, bool):
        return int(num) if isinstance(num, bool) else num
    if ctype.kind == "float":
        return float(num)
    if ctype.kind == "bool":
        return int(bool(num))
    if ctype.kind in ("int", "enum"):
        if isinstance(num, float):
            if math.isinf(num) or math.isnan(num):
                return 0
            num = int(num)
        bits = ctype.bits or 32
        num &= (1 << bits) - 1
        if ctype.signed and num >= 1 << (bits - 1):
            num -= 1 << bits
        return num
    return num


def arith_type(a: CType | None, b: CType | None) -> CType:
    a, b = a or _INT, b or _INT
    if a.kind == "float" or b.kind == "float":
        return _DOUBLE
    ranked = sorted((a, b), key=lambda t: (max(t.bits, 32), not t.signed))
    top = ranked[-1]
    if top.bits < 32:
        return _INT
    if top.bits == 32 and top.signed and not ranked[0].signed and ranked[0].bits >= 32:
        return _UINT
    return replace(top, typedef=None, nominal=None, const=False)


def c_div(x, y):
    if isinstance(x, float) or isinstance(y, float):
        return x / y
    q = abs(x) // abs(y)
    return q if (x >= 0) == (y > 0) else -q


def _strip(e):
    while isinstance(e, ast.Paren):
        e = e.expr
    return e


def _point(source: str, offset: int) -> tuple[int, int]:
    line = source.count("\n", 0, offset) + 1
    col = offset - (source.rfind("\n", 0, offset) + 1) + 1
    return line, col


class PathRun:
    """One execution of a function along the path selected by ``prefix``."""

    def __init__(self, oracle: Oracle, fn: ast.FunctionDef, prefix: list[int]):
        self.o = oracle
        self.t = oracle.tables
        self.fn = fn
        self.sig = self.t.signatures.get(fn.decl.name)
        self.prefix = prefix
        self.trace: list[tuple[int, int]] = []
        self.diags: set = set()
        self.objs: dict[int, Obj] = {}
        self.scopes: list[dict[str, Slot]] = []
        self.regions: list[tuple[str, str]] = []
        self.events: list[tuple] = []
        self.entry_props: dict[str, dict] = {}
        self.entry_objs: dict[str, int] = {}  # parameter -> pointee object at entry

    # --- bookkeeping -------------------------------------------------------------

    def choose(self, options: list):
        if len(options) == 1:
            return options[0]
        i = len(self.trace)
        pick = self.prefix[i] if i < len(self.prefix) else 0
        self.trace.append((pick, len(options)))
        return options[pick]

    def emit(self, code: str, span, suppressible: bool = True) -> None:
        if suppressible and self.regions:
            return
        self.diags.add((code, span.line, span.col))

    def new_obj(self, **kw) -> int:
        oid = len(self.objs) + 1
        self.objs[oid] = Obj(**kw)
        return oid

    def lookup(self, name: str) -> Slot | None:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def use(self, name: str, span, write: bool, exclude: str | None = None) -> None:
        self.events.append(("use", name, write, span, exclude, bool(self.regions)))

    # --- entry ----------------------------------------------------------------------

    def contract_values(self, c: Contract) -> list:
        rng = c.ctype.value_range()
        parts = c.values.meet(rng).parts if c.values is not None else rng.parts
        if c.ctype.kind == "float" and c.values is not None:
            parts = c.values.parts
        return representatives(parts, c.ctype)

    def fresh_value(self, c: Contract, annotated: bool, site) -> Val:
        """A value produced by an unknown source with contract ``c``."""
        t = c.ctype
        options = []
        if annotated and c.optional:
            if c.sentinel == "NULL":
                options.append(Val(0, t, ptr=True, sentinel="NULL", nominal=t.nominal))
            else:
                options.append(Val(c.sentinel, t, sentinel=c.sentinel, nominal=t.nominal))
        if t.is_pointer:
            options.append("object")
        elif t.kind == "void":
            options.append(Val(0, t))
        elif annotated:
            sent = c.sentinel if isinstance(c.sentinel, (int, float)) else None
            options += [Val(x, t, nominal=t.nominal) for x in self.contract_values(c)
                        if sent is None or x != sent]
        elif t.kind == "float":
            options += [Val(0.0, t), Val(1.0, t)]
        else:
            options += [Val(0, t, nominal=t.nominal), Val(1, t, nominal=t.nominal)]
        v = self.choose(options)
        if v != "object":
            if annotated and c.owning and v.sentinel is None:
                rid = self.new_obj(state="init")
                v = replace(v, owned=rid, num=2 + rid)
            return v
        target = t.target or _INT
        if annotated and c.owning:
            state = "uninit" if c.init == MAYBE_UNINIT else "init"
            oid = self.new_obj(state=state, ctype=target)
            return Val(1, t, ptr=True, obj=oid, nominal=t.nominal, owned=oid)
        oid = self.new_obj(ctype=target, unknown=True)
        return Val(1, t, ptr=True, obj=oid, nominal=t.nominal)

    def enter(self) -> None:
        params = {}
        sig = self.sig
        for i, p in enumerate(self.fn.decl.params):
            if p.name is None:
                continue
            c = sig.params[i]
            v = self.param_value(p.name, c)
            oid = self.new_obj(state="init", ctype=c.ctype, value=v, owns=v.owned, var=p.name)
            params[p.name] = Slot(p.name, oid, c, "param")
        self.scopes.append(params)

    def param_value(self, name: str, c: Contract) -> Val:
        t = c.ctype
        options = []
        if c.optional:
            if c.sentinel == "NULL":
                options.append(Val(0, t, ptr=True, sentinel="NULL", nominal=t.nominal))
            else:
                options.append(Val(c.sentinel, t, sentinel=c.sentinel, nominal=t.nominal))
        if t.is_pointer:
            target = t.target or _INT
            state = "uninit" if c.init in (INITIALIZES, MAYBE_UNINIT) else "init"
            props = {k: (UNKNOWN_PROP if v == "?" else v) for k, v in c.props_in}
            self.entry_props[name] = dict(props)
            oid = self.new_obj(state=state, ctype=target, props=props)
            self.entry_objs[name] = oid
            options.append(Val(1, t, ptr=True, obj=oid, nominal=t.nominal))
        else:
            sent = c.sentinel if isinstance(c.sentinel, (int, float)) else None
            options += [Val(x, t, nominal=t.nominal) for x in self.contract_values(c)
                        if sent is None or x != sent]
        v = self.choose(options)
        if c.owning and v.sentinel is None:
            rid = v.obj if v.ptr else self.new_obj(state="init")
            v = replace(v, owned=rid)
        return v

    # --- statements --------------------------------------------------------------------

    def run(self) -> None:
        self.enter()
        try:
            self.block(self.fn.body, body=True)
            close = self.closing(self.fn.body)
            self.exit_checks(close, None)
        except _Stop:
            pass
        self.borrow_violations()

    def closing(self, block: ast.Block):
        line, col = _point(self.o.source, block.span.end - 1)
        return replace(block.span, line=line, col=col)

    def block(self, b: ast.Block, body: bool = False) -> None:
        entered = 0
        for a in b.annotations:
            if a.malformed:
                continue
            mode = "checked" if a.name == "e_checked" else "unchecked"
            if mode == "unchecked" and a.args not in self.sig.unsafe:
                self.emit("CR-UNSAFE-PROPAGATE", a.span, suppressible=False)
            self.regions.append((mode, a.args))
            entered += 1
        self.scopes.append({})
        for item in b.items:
            self.stmt(item)
        scope = self.scopes.pop()
        if scope and not body:
            close = self.closing(b)
            for name, slot in scope.items():
                self.scope_end(slot, close)
        if body:
            self.scopes.append(scope)  # the function exit still sees body locals
        for _ in range(entered):
            self.regions.pop()

    def scope_end(self, slot: Slot, span) -> None:
        o = self.objs[slot.obj]
        if o.owns is not None:
            self.emit("CR-OWN-LEAK", span)
        if o.state == "init" and self.t.fini_required(slot.contract.ctype):
            self.emit("CR-FINI-MISSING", span)
        self.events.append(("end", slot.name))

    def stmt(self, s) -> None:
        if isinstance(s, ast.Block):
            self.block(s)
        elif isinstance(s, ast.VarDecl):
            self.declare(s)
        elif isinstance(s, ast.ExprStmt):
            self.expr(s.expr)
        elif isinstance(s, ast.If):
            if self.truth(self.expr(s.cond)):
                self.stmt(s.then)
            elif s.orelse is not None:
                self.stmt(s.orelse)
        elif isinstance(s, ast.Return):
            self.ret(s)
        elif isinstance(s, ast.Empty):
            pass
        else:
            raise Unsupported(type(s).__name__)

    def declare(self, d: ast.VarDecl) -> None:
        c = Resolver(self.t).contract(d.type, "local", d.span, d.name)
        oid = self.new_obj(state="uninit", ctype=c.ctype, var=d.name)
        self.events.append(("end", d.name))
        self.scopes[-1][d.name] = Slot(d.name, oid, c, "local")
        if d.init is not None:
            self.store_var(d.name, self.expr(d.init), d.span)

    def ret(self, s: ast.Return) -> None:
        excluded = None
        rc = self.sig.ret
        if s.value is not None:
            v = self.expr(s.value)
            e = _strip(s.value)
            if isinstance(e, ast.Name):
                excluded = e.ident
            if v.sentinel is not None and not rc.optional:
                self.emit("CR-OPT-RET", s.value.span)
            if rc.values is not None and v.sentinel is None and not self.in_range(v.num, rc):
                self.emit("CR-VAL-RANGE", s.value.span)
            if rc.nominal and v.nominal != rc.nominal and not v.const:
                self.emit("CR-NOMINAL-MIX", s.value.span)
        self.exit_checks(s.span, excluded)
        raise _Stop

    def in_range(self, num, c: Contract) -> bool:
        if c.sentinel == num:
            return True
        return c.values.contains(num) and c.ctype.value_range().contains(num)

    def exit_checks(self, span, excluded: str | None) -> None:
        for scope in self.scopes:
            for name, slot in scope.items():
                o = self.objs[slot.obj]
                if o.owns is not None and name != excluded:
                    self.emit("CR-OWN-LEAK", span)
                if (slot.kind == "local" and o.state == "init"
                        and self.t.fini_required(slot.contract.ctype)):
                    self.emit("CR-FINI-MISSING", span)
        for name, slot in self.scopes[0].items():
            c = slot.contract
            target = self.entry_objs.get(name)
            if target is None:
                continue
            out = dict(c.props_out)
            checks = [(k, w) for k, w in sorted(out.items()) if w != "?"]
            checks += [(k, w) for k, w in self.entry_props[name].items()
                       if k not in out and w is not UNKNOWN_PROP]
            for key, want in checks:
                if self.objs[target].props.get(key) != want:
                    self.emit("CR-POST-VIOLATION", span)

    # --- expressions --------------------------------------------------------------------

    def truth(self, v: Val) -> bool:
        if v.ptr:
            return v.obj is not None
        return v.num != 0

    def read_var(self, name: str, span) -> Val:
        slot = self.lookup(name)
        if slot is None:
            c = self.t.globals.get(name)
            t = c.ctype if c is not None else _INT
            return Val(0, t, ptr=t.is_pointer, obj=None, nominal=t.nominal)
        o = self.objs[slot.obj]
        self.use(name, span, write=False)
        if o.state == "uninit":
            self.emit("CR-UNINIT-USE", span)
            o.state = "init"
            if o.value is None and not slot.contract.ctype.is_struct:
                o.value = self.fresh_value(Contract(slot.contract.ctype), False, span)
        moved = o.state == "moved"
        if moved:
            self.emit("CR-USE-AFTER-MOVE", span)
        v = o.value or Val(0, slot.contract.ctype)
        return replace(v, src=name, owned=o.owns, moved=moved, const=False, addr_of=None)

    def expr(self, e) -> Val:
        if isinstance(e, ast.Paren):
            return self.expr(e.expr)
        if isinstance(e, ast.IntLit):
            return Val(e.value, _UINT if e.unsigned else _INT, const=True)
        if isinstance(e, ast.FloatLit):
            return Val(e.value, _DOUBLE, const=True)
        if isinstance(e, ast.CharLit):
            return Val(e.value, _INT, const=True)
        if isinstance(e, ast.StrLit):
            oid = self.new_obj(ctype=scalar("char"), unknown=True)
            return Val(1, CType("pointer", "char *", target=scalar("char")), ptr=True, obj=oid,
                       const=True)
        if isinstance(e, ast.Name):
            if e.ident == "NULL" and self.lookup("NULL") is None:
                return Val(0, CType("pointer", "void *", target=scalar("void")), ptr=True,
                           sentinel="NULL", const=True)
            if self.lookup(e.ident) is None and e.ident in self.t.constants:
                return Val(self.t.constants[e.ident], _INT, const=True)
            return self.read_var(e.ident, e.span)
        if isinstance(e, ast.Assign):
            v = self.expr(e.value)
            self.store(e.target, v, e.span)
            return v
        if isinstance(e, ast.Binary):
            return self.binary(e)
        if isinstance(e, ast.Unary):
            return self.unary(e)
        if isinstance(e, ast.Postfix):
            return self.incdec(e, e.operand, e.op, post=True)
        if isinstance(e, ast.Cast):
            return self.cast(e)
        if isinstance(e, ast.Call):
            return self.call(e)
        if isinstance(e, (ast.Index, ast.Member)):
            return self.load(e)
        raise Unsupported(type(e).__name__)

    def type_name(self, v: Val) -> str:
        return v.nominal or (v.ctype or _INT).spelling()

    def binary(self, e: ast.Binary) -> Val:
        if e.op in ("&&", "||"):
            a = self.truth(self.expr(e.lhs))
            if (e.op == "&&") != a:
                return Val(int(a), _INT)
            return Val(int(self.truth(self.expr(e.rhs))), _INT)
        a, b = self.expr(e.lhs), self.expr(e.rhs)
        nominal = None
        if a.nominal or b.nominal:
            res = self.t.binops.get((e.op, self.type_name(a), self.type_name(b)))
            if res is not None:
                nominal = self.t.nominal_of(res)
            elif not (e.op in _COMPARE and (a.nominal == b.nominal or a.const or b.const)):
                self.emit("CR-NOMINAL-OP", e.span)
        const = a.const and b.const
        if a.ptr or b.ptr:
            return self.pointer_op(e.op, a, b)
        t = arith_type(a.ctype, b.ctype)
        x, y = a.num, b.num
        if e.op in ("/", "%") and y == 0:
            if t.kind != "float":
                raise _Stop  # division by zero: the path has no defined continuation
            num = math.copysign(math.inf, x) if x else math.nan
        elif e.op in _COMPARE:
            num = int({"==": x == y, "!=": x != y, "<": x < y, "<=": x <= y, ">": x > y,
                       ">=": x >= y}[e.op])
            return Val(num, _INT, const=const, nominal=nominal)
        elif e.op == "/":
            num = c_div(convert(x, t), convert(y, t))
        elif e.op == "%":
            x, y = convert(x, t), convert(y, t)
            num = math.fmod(x, y) if t.kind == "float" else x - c_div(x, y) * y
        else:
            ops = {"+": lambda: x + y, "-": lambda: x - y, "*": lambda: x * y,
                   "&": lambda: int(x) & int(y), "|": lambda: int(x) | int(y),
                   "^": lambda: int(x) ^ int(y), "<<": lambda: int(x) << (int(y) & 63),
                   ">>": lambda: int(x) >> (int(y) & 63)}
            if e.op not in ops:
                raise Unsupported(e.op)
            num = ops[e.op]()
        return Val(convert(num, t), t, const=const, nominal=nominal)

    def pointer_op(self, op: str, a: Val, b: Val) -> Val:
        if op in _COMPARE:
            ka = (a.obj or 0, a.num if a.ptr else 0)
            kb = (b.obj or 0, b.num if b.ptr else 0)
            if not a.ptr:
                ka = (0, 0) if a.num == 0 else ka
            if not b.ptr:
                kb = (0, 0) if b.num == 0 else kb
            if op in ("==", "!="):
                res = (ka == kb) == (op == "==")
            else:
                res = {"<": ka < kb, "<=": ka <= kb, ">": ka > kb, ">=": ka >= kb}[op]
            return Val(int(res), _INT)
        if a.ptr and b.ptr:
            return Val(a.num - b.num, scalar("long"))
        p, k = (a, b) if a.ptr else (b, a)
        step = k.num if op == "+" else -k.num
        # a derived reference into the same object: not owning, keeps "maybe NULL"
        return Val(p.num + step, p.ctype, ptr=True, obj=p.obj, sentinel=p.sentinel)

    def unary(self, e: ast.Unary) -> Val:
        if e.op in ("++", "--"):
            return self.incdec(e, e.operand, e.op, post=False)
        if e.op == "&":
            return self.address(e.operand)
        if e.op == "*":
            return self.load(e)
        a = self.expr(e.operand)
        nominal = None
        if a.nominal and e.op != "!":
            res = self.t.unops.get((e.op, a.nominal))
            if res is None:
                self.emit("CR-NOMINAL-OP", e.span)
            else:
                nominal = self.t.nominal_of(res)
        if e.op == "!":
            return Val(int(not self.truth(a)), _INT, const=a.const)
        t = a.ctype or _INT
        if t.kind != "float":
            t = arith_type(t, _INT)
        num = {"-": lambda x: -x, "+": lambda x: x, "~": lambda x: ~int(x)}[e.op](a.num)
        return Val(convert(num, t), t, const=a.const, nominal=nominal)

    def incdec(self, e, target, op: str, post: bool) -> Val:
        a = self.expr(target)
        if a.nominal:
            res = self.t.unops.get((op, a.nominal))
            if res is None:
                res = self.t.binops.get((op[0], a.nominal, "int"))
            if res is None:
                self.emit("CR-NOMINAL-OP", e.span)
                return a  # the rejected update does not happen
        if a.ptr:
            new = self.pointer_op(op[0], a, Val(1, _INT))
        else:
            t = a.ctype or _INT
            new = Val(convert(a.num + (1 if op == "++" else -1), t), t, nominal=a.nominal)
        self.store(target, new, e.span)
        return a if post else new

    def cast(self, e: ast.Cast) -> Val:
        v = self.expr(e.operand)
        dst = Resolver(self.t).full_type(e.type)
        src = v.ctype
        if (src is not None and src.is_pointer and dst.is_pointer and src.target is not None
                and dst.target is not None and src.target.const and not dst.target.const):
            self.emit("CR-CONST-CAST", e.span)
        if dst.kind == "void":
            return Val(0, dst)
        if v.nominal and v.nominal != dst.nominal:
            self.emit("CR-NOMINAL-MIX", e.span)
        num = v.num if v.ptr or dst.is_pointer else convert(v.num, dst)
        return replace(v, num=num, ctype=dst, nominal=dst.nominal)

    # --- memory access -----------------------------------------------------------------

    def address(self, target) -> Val:
        target = _strip(target)
        if isinstance(target, ast.Name):
            slot = self.lookup(target.ident)
            if slot is None:
                raise Unsupported("address of a global")
            self.use(target.ident, target.span, write=False)
            return Val(1, CType("pointer", "", target=slot.contract.ctype), ptr=True,
                       obj=slot.obj, addr_of=target.ident)
        if isinstance(target, ast.Unary) and target.op == "*":
            return self.expr(target.operand)
        raise Unsupported("address of an element")

    def deref(self, ptr_expr, span, write: bool) -> int | None:
        """Object a pointer expression designates, checking the access itself."""
        v = self.expr(ptr_expr)
        pt = v.ctype.target if v.ctype is not None else None
        for kind in sorted(self.t.unsafe_kinds(pt)):
            if not any(k == kind for _, k in self.regions):
                self.emit("CR-UNSAFE-ACCESS", span, suppressible=False)
        if v.obj is None:
            self.emit("CR-OPT-DEREF", span)
            raise _Stop
        o = self.objs[v.obj]
        if o.state == "released" and not v.moved:
            self.emit("CR-USE-AFTER-RELEASE", span)
        e = _strip(ptr_expr)
        if write and isinstance(e, ast.Name):
            slot = self.lookup(e.ident)
            c = slot.contract if slot is not None else self.t.globals.get(e.ident)
            if c is not None and (c.borrow == "shared" or (c.ctype.target is not None
                                                          and c.ctype.target.const)):
                self.emit("CR-EXCL-VIOLATION", span)
        return v.obj

    def place(self, e, write: bool) -> tuple[int, str | None, CType | None]:
        """(object, field or None, type) designated by an lvalue expression."""
        e = _strip(e)
        if isinstance(e, ast.Unary) and e.op == "*":
            oid = self.deref(e.operand, e.span, write)
            return oid, None, self.objs[oid].ctype
        if isinstance(e, ast.Index):
            oid = self.deref(e.base, e.span, write)
            idx = self.expr(e.index)
            if idx.sentinel is not None:
                self.emit("CR-OPT-DEREF", e.span)
                raise _Stop
            return oid, "[]", self.objs[oid].ctype
        if isinstance(e, ast.Member):
            if e.arrow:
                oid = self.deref(e.base, e.span, write)
            else:
                base = _strip(e.base)
                if not isinstance(base, ast.Name) or self.lookup(base.ident) is None:
                    raise Unsupported("member of a non-variable")
                oid = self.lookup(base.ident).obj
                self.use(base.ident, base.span, write)
            st = self.t.struct_of(self.objs[oid].ctype)
            fc = st.field(e.name) if st is not None else None
            return oid, e.name, fc.ctype if fc is not None else None
        raise Unsupported(type(e).__name__)

    def load(self, e) -> Val:
        oid, fld, t = self.place(e, write=False)
        o = self.objs[oid]
        if fld != "[]" and not o.unknown:
            if o.state == "uninit":
                self.emit("CR-UNINIT-USE", e.span)
                o.state = "init"
            if o.state == "finalized":
                self.emit("CR-UNINIT-USE", e.span)
        if fld is None:
            if o.value is None:
                o.value = self.fresh_value(Contract(t or _INT), False, e.span)
            return replace(o.value, src=None, owned=None, const=False)
        if fld == "[]":
            et = t or scalar("char")
            return Val(0, et)
        if fld not in o.fields:
            ft = t or _INT
            o.fields[fld] = self.fresh_value(Contract(ft, values=ft.value_range()), True, e.span)
        return o.fields[fld]

    def store(self, target, v: Val, span) -> None:
        target = _strip(target)
        if isinstance(target, ast.Name):
            self.store_var(target.ident, v, span)
            return
        oid, fld, t = self.place(target, write=True)
        o = self.objs[oid]
        if fld == "[]":
            return
        nv = replace(v, src=None, owned=None, moved=False, addr_of=None,
                     nominal=(t.nominal if t is not None else None) or v.nominal)
        if fld is None:
            o.value = nv
            o.state = "init" if o.state in ("uninit", "init") else o.state
        else:
            o.fields[fld] = nv

    def store_var(self, name: str, v: Val, span) -> None:
        slot = self.lookup(name)
        if slot is None:
            c = self.t.globals.get(name)
            if c is not None and c.nominal and v.nominal != c.nominal and not v.const:
                self.emit("CR-NOMINAL-MIX", span)
            return
        self.use(name, span, write=True)
        o = self.objs[slot.obj]
        if o.owns is not None and v.src != name:
            self.emit("CR-OWN-LEAK", span)
        ctype = slot.contract.ctype
        nominal = ctype.nominal
        if nominal and v.nominal != nominal and not v.const:
            self.emit("CR-NOMINAL-MIX", span)
        elif nominal is None:
            nominal = v.nominal  # plain declarations adopt the nominal type they receive
        num = v.num if v.ptr or not ctype.is_scalar else convert(v.num, ctype)
        owns = v.owned
        if owns is not None and v.src is not None and v.src != name:
            if ctype.target is not None and ctype.target.const:
                owns = None
            else:
                src = self.objs[self.lookup(v.src).obj]
                if src.owns is not None:
                    src.owns = None
                    src.state = "moved"
        o.value = replace(v, num=num, ctype=ctype if not v.ptr else (v.ctype or ctype),
                          nominal=nominal, src=None, owned=None, moved=False, addr_of=None)
        o.owns = owns
        o.state = "init"
        self.events.append(("def", name))
        if v.addr_of is not None:
            mode = "shared" if ctype.target is not None and ctype.target.const else "exclusive"
            self.events.append(("borrow", name, v.addr_of, mode))

    # --- calls ------------------------------------------------------------------------

    def call(self, e: ast.Call) -> Val:
        sig = self.t.signatures.get(e.func)
        annotated = sig is not None and sig.annotated
        if sig is not None:
            for kind in sorted(sig.unsafe):
                if not any(k == kind for _, k in self.regions):
                    self.emit("CR-UNSAFE-ACCESS", e.func_span, suppressible=False)
        values = [self.expr(a) for a in e.args]
        passed: dict[int, str] = {}
        effects = []
        for i, (arg, v) in enumerate(zip(e.args, values)):
            c = sig.param(i) if sig is not None else None
            a = _strip(arg)
            name = a.ident if isinstance(a, ast.Name) and self.lookup(a.ident) else None
            if not annotated or c is None:
                if v.owned is not None:
                    self.emit("CR-OWN-UNCLEAR", e.span)  # treated as a borrow
                continue
            if v.sentinel is not None and not c.optional and not v.moved:
                self.emit("CR-OPT-ARG", arg.span)
            if not v.const and v.nominal != c.nominal:
                self.emit("CR-NOMINAL-MIX", arg.span)
            obj = v.obj if c.ctype.is_pointer and v.ptr else None
            exclusive = c.borrow == "exclusive" or c.owning is not None
            if obj is not None and not self.objs[obj].unknown:
                prev = passed.get(obj)
                if prev is not None and (exclusive or prev == "exclusive"):
                    self.emit("CR-EXCL-VIOLATION", arg.span)
                passed[obj] = "exclusive" if exclusive else "shared"
                owner = self.objs[obj].var
                if owner is not None:
                    self.use(owner, arg.span, write=exclusive, exclude=name or v.src)
            target = self.objs[obj] if obj is not None and not self.objs[obj].unknown else None
            if target is not None and (c.init == REQUIRES or c.finalizes or c.props_in):
                if target.state == "released":
                    self.emit("CR-USE-AFTER-RELEASE", arg.span)
                elif target.state == "uninit" and c.init == REQUIRES and not c.release:
                    self.emit("CR-UNINIT-USE", arg.span)
                    target.state = "init"
                elif target.state == "finalized":
                    self.emit("CR-UNINIT-USE", arg.span)
            for key, want in c.props_in:
                if want != "?" and target is not None and target.props.get(key) != want:
                    self.emit("CR-PRE-VIOLATION", arg.span)
                    target.props[key] = want
            if c.owning:
                if v.owned is None and not v.moved and not v.const and v.sentinel is None:
                    self.emit("CR-RELEASE-INVALID", arg.span)
                if (c.release and target is not None and target.state == "init"
                        and self.t.fini_required(target.ctype)):
                    self.emit("CR-RELEASE-INVALID", arg.span)
                effects.append(("move", name, target, c.release))
            if c.init == INITIALIZES:
                effects.append(("init", name, target, None))
            if c.finalizes:
                effects.append(("fini", name, target, None))
            if c.props_out:
                effects.append(("props", name, target, c.props_out))
            if c.init == INIT_ON_SUCCESS:
                effects.append(("link-init", name, target, None))
        for kind, name, target, extra in effects:
            if kind == "move":
                if name is not None:
                    src = self.objs[self.lookup(name).obj]
                    if src.owns is not None:
                        src.owns = None
                        src.state = "moved"
                if extra and target is not None:
                    target.state = "released"
            elif kind == "init" and target is not None:
                target.state = "init"
            elif kind == "fini" and target is not None:
                target.state = "finalized"
            elif kind == "props" and target is not None:
                for key, val in extra:
                    target.props[key] = UNKNOWN_PROP if val == "?" else val
        ret = sig.ret if sig is not None else Contract(_INT)
        if ret.ctype.kind == "void":
            return Val(0, ret.ctype)
        if annotated and e.func in ZERO_SIZE and any(
                i < len(values) and not values[i].ptr and values[i].num == 0
                for i in ZERO_SIZE[e.func]):
            result = Val(0, ret.ctype, ptr=True, sentinel="NULL", nominal=ret.nominal)
        else:
            result = self.fresh_value(ret, annotated, e.span)
        for kind, _, target, _ in effects:
            if kind == "link-init" and target is not None and result.sentinel is None \
                    and result.num >= 0:
                target.state = "init"
        return result

    # --- exclusive borrows ------------------------------------------------------------

    def borrow_violations(self) -> None:
        """Uses of a variable while a later-used borrower still refers to it."""
        ev = self.events
        for i, e in enumerate(ev):
            if e[0] != "use":
                continue
            _, name, write, span, exclude, in_region = e
            active = {}
            for f in ev[:i]:
                if f[0] == "borrow" and f[2] == name:
                    active[f[1]] = f[3]
                elif f[0] == "def":
                    active.pop(f[1], None)
                elif f[0] == "end":
                    active = {} if f[1] == name else active
                    active.pop(f[1], None)
            for borrower, mode in sorted(active.items()):
                if borrower in (name, exclude):
                    continue
                if not (mode == "exclusive" or write):
                    continue
                if self.live_after(borrower, i) and not in_region:
                    self.diags.add(("CR-EXCL-VIOLATION", span.line, span.col))

    def live_after(self, name: str, i: int) -> bool:
        for f in self.events[i + 1:]:
            if f[0] == "use" and f[1] == name and not f[2]:
                return True
            if f[0] in ("def", "end") and f[1] == name:
                return False
        return False


@dataclass
class FunctionResult:
    name: str
    diags: set
    paths: int


class Oracle:
    def __init__(self, source: str, path: str = "<input>"):
        self.source = source
        unit = parse_source(source, path)
        self.errors = list(unit.errors)
        unit, libs, _ = resolve_includes(unit)
        self.unit = unit
        self.tables, _, _ = build_annotation_tables(unit, builtin_models(), libs)

    def functions(self) -> list[ast.FunctionDef]:
        return list(self.unit.functions())

    def explore(self, fn: ast.FunctionDef) -> FunctionResult:
        """Run every path of ``fn``; raises Unsupported for loops."""
        if has_loop(fn.body):
            raise Unsupported("loop")
        diags: set = set()
        prefix: list[int] = []
        paths = 0
        while True:
            r = PathRun(self, fn, prefix)
            r.run()
            paths += 1
            diags |= r.diags
            if paths > MAX_PATHS:
                raise Unsupported("too many paths")
            trace = r.trace
            while trace and trace[-1][0] + 1 >= trace[-1][1]:
                trace.pop()
            if not trace:
                return FunctionResult(fn.decl.name, diags, paths)
            prefix = [p for p, _ in trace[:-1]] + [trace[-1][0] + 1]


def has_loop(node) -> bool:
    if isinstance(node, ast.While):
        return True
    if isinstance(node, ast.Block):
        return any(has_loop(s) for s in node.items)
    if isinstance(node, ast.If):
        return has_loop(node.then) or (node.orelse is not None and has_loop(node.orelse))
    return False


def oracle_diagnostics(source: str, path: str = "<input>") -> dict[str, set]:
    """(code, line, col) findings per loop-free function of ``source``."""
    o = Oracle(source, path)
    return {fn.decl.name: o.explore(fn).diags for fn in o.functions()}
