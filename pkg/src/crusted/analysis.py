"""Flow-sensitive abstract interpretation of lowered functions.

Each block's entry state is computed by a worklist fixpoint over the CFG
(reverse postorder, widening at loop heads). A final pass replays every
reachable block once from its stable entry state and reports diagnostics,
so each rule fires at most once per program point.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

from crusted import diagnostics
from crusted.annotations import (INITIALIZES, INIT_ON_SUCCESS, MAYBE_UNINIT, REQUIRES,
                                 Contract, CType, Tables, scalar)
from crusted.domains import (FINALIZED, INIT, MOVED, NULL_REF, RELEASED, STATIC_REF, UNINIT,
                             UNKNOWN, UNKNOWN_REF, AbstractState, Cell, Link, MultiInterval,
                             PropertyMap, ReferentSet, Typestate, mi_binop, mi_clip, mi_unop,
                             owned, sentinel, ts)
from crusted.ir import (FLIP, NEGATE, AddrOf, Assign, BinOp, Branch, Call, CastOp, Cfg, Const,
                        Declare, Kill, LDeref, LField, LIndex, Load, LVar, Null, Region, Return,
                        StrConst, Typer, UnOp, Use, Var, liveness, reverse_postorder, uses_defs)
from crusted.libmodels import HEAP_RESOURCE, ZERO_SIZE_NULL, LibraryModel, origin_of

WIDEN_AFTER = 3  # visits of a loop head before widening kicks in
MAX_VISITS = 64  # per block; exceeding it means the widening is broken

_INT = scalar("int")
_SPECIAL_REFS = (NULL_REF, UNKNOWN_REF, STATIC_REF)
_COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass
class Value:
    """Abstract value of a right-hand side."""

    ts: Typestate
    val: MultiInterval
    refs: ReferentSet = field(default_factory=ReferentSet)
    nominal: str | None = None
    source: str | None = None  # variable the value was copied from
    is_const: bool = False
    addr_of: bool = False


@dataclass
class AnalysisResult:
    function: str
    diags: list
    entry_states: dict  # block id -> AbstractState
    point_states: dict  # (block id, index) -> state before that instruction
    visits: dict  # block id -> fixpoint visits


class Frame:
    """Mutable copy of an AbstractState used while transferring one block."""

    def __init__(self, st: AbstractState):
        self.cells = st.as_dict()
        self.regions = list(st.regions)
        self.links = set(st.links)
        self.borrows = set(st.borrows)
        self.dead = st.bottom

    def freeze(self) -> AbstractState:
        if self.dead:
            return AbstractState.unreachable()
        return AbstractState(tuple(sorted(self.cells.items())), tuple(self.regions),
                             frozenset(self.links), tuple(sorted(self.borrows)))


def _objects(refs) -> list[str]:
    return sorted(r for r in refs if r not in _SPECIAL_REFS)


def _int_sentinels(t: Typestate) -> list:
    return [s for s in t.sentinels() if s != "NULL"]


def _without_sentinels(t: Typestate) -> Typestate:
    out = t.without("sentinel")
    return out if out else ts(INIT)


def _replace_atom(t: Typestate, old, new) -> Typestate:
    return Typestate((new if a == old else a) for a in t)


class FunctionAnalyzer:
    def __init__(self, cfg: Cfg, tables: Tables, models: LibraryModel | None = None):
        self.cfg = cfg
        self.tables = tables
        self.models = models
        self.sig = cfg.signature
        self.typer = Typer(cfg.vars, tables)
        self.live = liveness(cfg)
        self.report = False
        self.diags: list = []
        self.entry_props: dict = {}
        self.f: Frame = Frame(AbstractState())
        self.point: tuple = (cfg.entry, 0)
        self.point_live: frozenset = frozenset()

    # --- diagnostics -------------------------------------------------------

    def emit(self, code: str, span, suppressible: bool = True, **payload) -> None:
        if not self.report:
            return
        if suppressible and self.f.regions:
            return
        self.diags.append(diagnostics.make(code, span, **payload))

    def display(self, place: str) -> str:
        if place.startswith("*"):
            return "*" + self.display(place[1:])
        if "." in place and place.split(".", 1)[0] in self.cfg.vars:
            head, rest = place.split(".", 1)
            return f"{self.display(head)}.{rest}"
        if place.startswith("heap@") or place.startswith("res@"):
            return f"resource allocated at {place.split('@', 1)[1]}"
        return self.cfg.display(place)

    def operand_display(self, op) -> str:
        if isinstance(op, Var):
            return self.display(op.name)
        return str(op)

    # --- types and contracts ----------------------------------------------

    def contract_of(self, name: str) -> Contract:
        info = self.cfg.vars.get(name)
        if info is not None:
            return info.contract
        return self.tables.globals.get(name) or Contract(_INT)

    def range_of(self, c: Contract) -> MultiInterval:
        rng = c.ctype.value_range()
        v = c.values.meet(rng) if c.values is not None else rng
        if isinstance(c.sentinel, (int, float)) and not isinstance(c.sentinel, bool):
            v = v.join(MultiInterval.const(c.sentinel))
        return v

    def covered(self, kind: str) -> bool:
        return any(k == kind for _, k in self.f.regions)

    # --- entry state ----------------------------------------------------------

    def entry_state(self) -> AbstractState:
        cells: dict[str, Cell] = {}
        for g, c in sorted(self.tables.globals.items()):
            cells[g] = Cell(ts(INIT), self.range_of(c), nominal=c.nominal)
        for name in self.cfg.params:
            c = self.cfg.vars[name].contract
            if c.owning:
                rc = c.resource_class or (HEAP_RESOURCE if c.owning == "heap" else "resource")
                atoms = {owned(rc, "the caller", f"parameter {name}")}
            else:
                atoms = {INIT}
            if c.optional:
                atoms.add(sentinel(c.sentinel))
            refs: set = set()
            if c.ctype.is_pointer:
                obj = "*" + name
                refs.add(obj)
                if c.sentinel == "NULL":
                    refs.add(NULL_REF)
                props = PropertyMap.of({k: (UNKNOWN if v == "?" else v) for k, v in c.props_in})
                self.entry_props[obj] = props
                target = c.ctype.target or _INT
                obj_ts = UNINIT if c.init in (INITIALIZES, MAYBE_UNINIT) else INIT
                cells[obj] = Cell(ts(obj_ts), target.value_range(), props,
                                  nominal=target.nominal)
            cells[name] = Cell(Typestate(atoms), self.range_of(c), refs=ReferentSet(refs),
                               nominal=c.nominal)
        return AbstractState.from_cells(cells)

    # --- places ------------------------------------------------------------

    def cell(self, place: str, ctype: CType | None = None) -> Cell | None:
        """The cell of ``place``, materializing struct fields on demand."""
        c = self.f.cells.get(place)
        if c is not None or place in _SPECIAL_REFS:
            return c
        if "." in place:
            parent = self.cell(place.rsplit(".", 1)[0])
            if parent is None:
                return None
            atoms = [a for a in parent.ts if a in (UNINIT, INIT, FINALIZED, RELEASED)]
            rng = ctype.value_range() if ctype is not None else MultiInterval.top()
            c = Cell(Typestate(atoms or [INIT]), rng,
                     nominal=ctype.nominal if ctype is not None else None)
            self.f.cells[place] = c
        return c

    def assume_not_sentinel(self, name: str) -> None:
        c = self.f.cells.get(name)
        if c is None:
            return
        val = c.val
        for s in _int_sentinels(c.ts):
            val = val.minus(MultiInterval.const(s))
        if val.is_bottom:
            val = c.val
        self.f.cells[name] = replace(c, ts=_without_sentinels(c.ts), val=val,
                                     refs=ReferentSet(c.refs - {NULL_REF}))
        self.fire_links(self.f, name, val)

    # --- borrows -------------------------------------------------------------

    def check_borrowed_use(self, name: str, span, write: bool, exclude: str | None = None) -> None:
        for borrower, target, mode in sorted(self.f.borrows):
            if target != name or borrower in (name, exclude):
                continue
            if borrower not in self.point_live:
                continue
            if mode == "exclusive" or write:
                how = "exclusively" if mode == "exclusive" else "shared"
                verb = "modified" if write else "used"
                self.emit("CR-EXCL-VIOLATION", span, place=self.display(name),
                          detail=f"'{self.display(name)}' is {verb} while {how} borrowed by "
                                 f"'{self.display(borrower)}'")

    # --- reads ---------------------------------------------------------------

    def read_var(self, name: str, span) -> Value:
        c = self.f.cells.get(name)
        if c is None:
            ctype = self.typer.type_of_var(name)
            return Value(ts(INIT), ctype.value_range(), source=name)
        self.check_borrowed_use(name, span, write=False)
        if UNINIT in c.ts:
            self.emit("CR-UNINIT-USE", span, place=self.display(name))
            c = replace(c, ts=_replace_atom(c.ts, UNINIT, INIT))
            self.f.cells[name] = c
        if MOVED in c.ts:
            self.emit("CR-USE-AFTER-MOVE", span, place=self.display(name))
        return Value(c.ts, c.val, c.refs, c.nominal, source=name)

    def operand(self, op) -> Value:
        if isinstance(op, Var):
            return self.read_var(op.name, op.span)
        if isinstance(op, Const):
            return Value(ts(INIT), MultiInterval.const(op.value), is_const=True)
        if isinstance(op, Null):
            return Value(ts(sentinel("NULL")), MultiInterval.const(0),
                         ReferentSet({NULL_REF}), is_const=True)
        if isinstance(op, StrConst):
            return Value(ts(INIT), MultiInterval.top(), ReferentSet({STATIC_REF}), is_const=True)
        raise TypeError(f"not an operand: {op!r}")

    def deref(self, ptr, span, write: bool) -> list[str]:
        """Referents of pointer operand ``ptr``, checking the dereference."""
        v = self.operand(ptr)
        name = ptr.name if isinstance(ptr, Var) else None
        if "NULL" in v.ts.sentinels() or (NULL_REF in v.refs and v.is_const):
            self.emit("CR-OPT-DEREF", span, place=self.operand_display(ptr), sentinel="NULL")
            if name is not None:
                self.assume_not_sentinel(name)
        refs = _objects(v.refs)
        # a moved-out pointer was already reported when it was read
        for r in refs if MOVED not in v.ts else ():
            c = self.f.cells.get(r)
            if c is not None and RELEASED in c.ts:
                self.emit("CR-USE-AFTER-RELEASE", span, place=self.operand_display(ptr))
                break
        if write and name is not None:
            ctype = self.contract_of(name).ctype
            shared = self.contract_of(name).borrow == "shared"
            if shared or (ctype.target is not None and ctype.target.const):
                self.emit("CR-EXCL-VIOLATION", span, place=self.display(name),
                          detail=f"write through shared reference '{self.display(name)}'")
        return refs

    def check_unsafe(self, ctype: CType | None, what: str, span) -> None:
        for kind in sorted(self.tables.unsafe_kinds(ctype)):
            if not self.covered(kind):
                self.emit("CR-UNSAFE-ACCESS", span, suppressible=False, what=what, kind=kind)

    def lvalue_places(self, lv, write: bool) -> list[str]:
        if isinstance(lv, LVar):
            return [lv.name]
        if isinstance(lv, LDeref):
            pt = self.typer.operand_type(lv.ptr).target
            self.check_unsafe(pt, f"'*{self.operand_display(lv.ptr)}'", lv.span)
            return self.deref(lv.ptr, lv.span, write)
        if isinstance(lv, LIndex):
            pt = self.typer.operand_type(lv.base).target
            self.check_unsafe(pt, f"'{self.operand_display(lv.base)}[]'", lv.span)
            refs = self.deref(lv.base, lv.span, write)
            idx = self.operand(lv.index)
            sents = _int_sentinels(idx.ts)
            if sents:
                self.emit("CR-OPT-DEREF", lv.span, place=self.operand_display(lv.index),
                          sentinel=sents[0], role="index")
                if isinstance(lv.index, Var):
                    self.assume_not_sentinel(lv.index.name)
            return refs
        if isinstance(lv, LField):
            if lv.arrow:
                st = self.typer.operand_type(lv.base).target
                what = f"'{self.operand_display(lv.base)}->{lv.name}'"
                self.check_unsafe(st, what, lv.span)
                bases = self.deref(lv.base, lv.span, write)
            else:
                st = self.typer.lvalue_type(lv.base)
                self.check_unsafe(st, f"member '{lv.name}'", lv.span)
                bases = self.lvalue_places(lv.base, write)
            return [f"{b}.{lv.name}" for b in bases]
        raise TypeError(f"not an lvalue: {lv!r}")

    def load(self, lv) -> Value:
        if isinstance(lv, LVar):
            return self.read_var(lv.name, lv.span)
        ctype = self.typer.lvalue_type(lv)
        places = self.lvalue_places(lv, write=False)
        out: Value | None = None
        for p in places:
            c = self.cell(p, ctype)
            if c is None:
                v = Value(ts(INIT), ctype.value_range(), ReferentSet({UNKNOWN_REF})
                          if ctype.is_pointer else ReferentSet(), ctype.nominal)
            else:
                if isinstance(lv, LIndex):
                    # element reads of a partially initialized buffer are not tracked
                    pass
                elif UNINIT in c.ts:
                    self.emit("CR-UNINIT-USE", lv.span, place=self.display(p))
                    c = replace(c, ts=_replace_atom(c.ts, UNINIT, INIT))
                    self.f.cells[p] = c
                if FINALIZED in c.ts:
                    self.emit("CR-UNINIT-USE", lv.span, place=self.display(p), state="finalized")
                refs = c.refs
                if ctype.is_pointer and not refs:
                    refs = ReferentSet({UNKNOWN_REF})
                v = Value(ts(*[a for a in c.ts if a.kind == "sentinel"] or [INIT]),
                          mi_clip(c.val, ctype.value_range().lo, ctype.value_range().hi)
                          if ctype.is_scalar else c.val, refs, c.nominal or ctype.nominal)
            out = v if out is None else Value(Typestate(out.ts | v.ts), out.val.join(v.val),
                                              ReferentSet(out.refs | v.refs),
                                              out.nominal if out.nominal == v.nominal else None)
        if out is None:
            out = Value(ts(INIT), ctype.value_range(),
                        ReferentSet({UNKNOWN_REF}) if ctype.is_pointer else ReferentSet(),
                        ctype.nominal)
        return out

    # --- right-hand sides --------------------------------------------------

    def type_name(self, v: Value, op) -> str:
        return v.nominal or self.typer.operand_type(op).spelling()

    def binop(self, rv: BinOp, span) -> Value | None:
        a, b = self.operand(rv.lhs), self.operand(rv.rhs)
        ltype, rtype = self.typer.operand_type(rv.lhs), self.typer.operand_type(rv.rhs)
        rtype_out = self.typer.rvalue_type(rv)
        span = rv.span or span
        nominal = None
        if a.nominal or b.nominal:
            if rv.incdec is not None:
                key = ("++" if rv.incdec == "increment" else "--", a.nominal)
                res = self.tables.unops.get(key)
                if res is None:
                    res = self.tables.binops.get((rv.op, a.nominal, "int"))
                if res is None:
                    self.emit("CR-NOMINAL-OP", span, operation=rv.incdec, type=a.nominal)
                    return None
                nominal = self.tables.nominal_of(res)
            else:
                key = (rv.op, self.type_name(a, rv.lhs), self.type_name(b, rv.rhs))
                res = self.tables.binops.get(key)
                if res is not None:
                    nominal = self.tables.nominal_of(res)
                elif rv.op in _COMPARISONS and (a.nominal == b.nominal or a.is_const or b.is_const):
                    nominal = None
                else:
                    self.emit("CR-NOMINAL-OP", span, operator=rv.op, lhs=key[1], rhs=key[2])
        if ltype.is_pointer and rv.op not in _COMPARISONS:
            # pointer arithmetic: a derived, non-owning reference into the same object
            atoms = [x for x in a.ts if x.kind == "sentinel"] or [INIT]
            return Value(Typestate(atoms), MultiInterval.top(), a.refs)
        if ltype.kind == "float" or rtype.kind == "float":
            val = MultiInterval.top()
            if rv.op in _COMPARISONS:
                val = MultiInterval.of((0, 1))
        else:
            val = mi_binop(rv.op, a.val, b.val)
            rng = rtype_out.value_range()
            val = mi_clip(val, rng.lo, rng.hi)
        return Value(ts(INIT), val, nominal=nominal)

    def unop(self, rv: UnOp, span) -> Value:
        a = self.operand(rv.operand)
        span = rv.span or span
        nominal = None
        if a.nominal and rv.op != "!":
            res = self.tables.unops.get((rv.op, a.nominal))
            if res is None:
                names = {"-": "negation", "+": "unary plus", "~": "bitwise complement"}
                self.emit("CR-NOMINAL-OP", span, operation=names.get(rv.op, rv.op), type=a.nominal)
            else:
                nominal = self.tables.nominal_of(res)
        if self.typer.operand_type(rv.operand).kind == "float" and rv.op != "!":
            return Value(ts(INIT), MultiInterval.top(), nominal=nominal)
        return Value(ts(INIT), mi_unop(rv.op, a.val), nominal=nominal)

    def cast(self, rv: CastOp, span) -> Value:
        v = self.operand(rv.operand)
        src = self.typer.operand_type(rv.operand)
        dst = rv.ctype
        span = rv.span or span
        if (src.is_pointer and dst.is_pointer and src.target is not None
                and dst.target is not None and src.target.const and not dst.target.const):
            self.emit("CR-CONST-CAST", span, place=self.operand_display(rv.operand))
        if dst.kind == "void":
            return Value(ts(INIT), MultiInterval.top())
        nominal = dst.nominal
        if v.nominal and v.nominal != nominal:
            self.emit("CR-NOMINAL-MIX", span, place=self.operand_display(rv.operand),
                      expected=nominal or dst.spelling(), actual=v.nominal)
        val = v.val
        if dst.is_scalar:
            rng = dst.value_range()
            val = mi_clip(val, rng.lo, rng.hi)
        return replace(v, val=val, nominal=nominal)

    def rvalue(self, rv, span) -> Value | None:
        if isinstance(rv, Use):
            return self.operand(rv.operand)
        if isinstance(rv, BinOp):
            return self.binop(rv, span)
        if isinstance(rv, UnOp):
            return self.unop(rv, span)
        if isinstance(rv, AddrOf):
            lv = rv.lvalue
            places = self.lvalue_places(lv, write=False) if not isinstance(lv, LVar) else [lv.name]
            if isinstance(lv, LVar):
                # taking the address of a borrowed variable is itself a use
                self.check_borrowed_use(lv.name, lv.span, write=False)
            return Value(ts(INIT), MultiInterval.top(), ReferentSet(places), addr_of=True)
        if isinstance(rv, Load):
            return self.load(rv.lvalue)
        if isinstance(rv, CastOp):
            return self.cast(rv, span)
        raise TypeError(f"not an rvalue: {rv!r}")

    # --- stores --------------------------------------------------------------

    def leak(self, place: str, c: Cell, span) -> None:
        for a in c.ts.owned_atoms():
            self.emit("CR-OWN-LEAK", span, place=self.display(place),
                      **{"resource-class": a.arg, "origin": a.origin or "an unknown source"})

    def store_var(self, name: str, v: Value, span) -> None:
        f = self.f
        self.check_borrowed_use(name, span, write=True)
        old = f.cells.get(name)
        if old is not None and v.source != name:
            self.leak(name, old, span)
        contract = self.contract_of(name)
        ctype = contract.ctype
        nominal = ctype.nominal
        info = self.cfg.vars.get(name)
        is_temp = info is not None and info.kind == "temp"
        if is_temp:
            nominal = v.nominal  # temporaries carry whatever the expression produced
        elif nominal and v.nominal != nominal and not v.is_const:
            self.emit("CR-NOMINAL-MIX", span, place=self.display(name), expected=nominal,
                      actual=v.nominal or "a plain value")
        elif nominal is None:
            nominal = v.nominal  # plain declarations adopt the nominal type they receive
        val = v.val
        if ctype.is_scalar:
            rng = ctype.value_range()
            val = mi_clip(val, rng.lo, rng.hi)
        new_ts = v.ts
        src = v.source if v.source != name else None
        if new_ts.owned_atoms() and src is not None:
            if ctype.target is not None and ctype.target.const:
                new_ts = Typestate([a for a in new_ts if a.kind != "owned"] + [INIT])
            else:
                sc = f.cells.get(src)
                if sc is not None:
                    moved = Typestate([a for a in sc.ts if a.kind != "owned"] + [MOVED])
                    f.cells[src] = replace(sc, ts=moved)
        f.cells[name] = Cell(new_ts, val, old.props if old is not None else PropertyMap(),
                             v.refs, nominal)
        f.links = {l for l in f.links if l.trigger != name and l.target != name}
        if src is not None:
            for l in sorted(f.links):
                if l.trigger == src:
                    f.links.add(replace(l, trigger=name))
                if l.target == src:
                    f.links.add(replace(l, target=name))
        f.borrows = {b for b in f.borrows if b[0] != name}
        if v.addr_of and info is not None and info.kind in ("local", "param"):
            mode = "shared" if ctype.target is not None and ctype.target.const else "exclusive"
            for r in v.refs:
                if r in self.cfg.vars and self.cfg.vars[r].kind != "temp":
                    f.borrows.add((name, r, mode))

    def store(self, target, v: Value, span) -> None:
        if isinstance(target, LVar):
            self.store_var(target.name, v, span)
            return
        ctype = self.typer.lvalue_type(target)
        places = self.lvalue_places(target, write=True)
        strong = len(places) == 1 and not isinstance(target, LIndex)
        for p in places:
            old = self.cell(p, ctype)
            if isinstance(target, LIndex):
                continue
            val = v.val
            if ctype.is_scalar:
                rng = ctype.value_range()
                val = mi_clip(val, rng.lo, rng.hi)
            new = Cell(ts(INIT), val, old.props if old else PropertyMap(), v.refs,
                       ctype.nominal or v.nominal)
            self.f.cells[p] = new if strong or old is None else old.join(new)

    # --- instructions ----------------------------------------------------------

    def declare(self, ins: Declare) -> None:
        ctype = self.typer.type_of_var(ins.name)
        f = self.f
        for p in [p for p in f.cells if p == ins.name or p.startswith(ins.name + ".")]:
            del f.cells[p]
        f.cells[ins.name] = Cell(ts(UNINIT), ctype.value_range(), nominal=ctype.nominal)
        f.links = {l for l in f.links if ins.name not in (l.trigger, l.target)}
        f.borrows = {b for b in f.borrows if ins.name not in (b[0], b[1])}

    def assign(self, ins: Assign) -> None:
        v = self.rvalue(ins.value, ins.span)
        if v is None:
            return  # a rejected nominal operation leaves the state unchanged
        self.store(ins.target, v, ins.span)

    def call(self, ins: Call) -> None:
        f = self.f
        sig = self.tables.signatures.get(ins.callee)
        annotated = sig is not None and sig.annotated
        if sig is not None:
            for kind in sorted(sig.unsafe):
                if not self.covered(kind):
                    self.emit("CR-UNSAFE-ACCESS", ins.func_span, suppressible=False,
                              what=f"function '{ins.callee}'", kind=kind)
        values = [self.operand(a) for a in ins.args]
        passed: dict[str, str] = {}
        effects = []
        for i, (arg, v) in enumerate(zip(ins.args, values)):
            c = sig.param(i) if sig is not None else None
            name = arg.name if isinstance(arg, Var) else None
            disp = self.operand_display(arg)
            pname = (sig.param_names[i] if sig is not None and i < len(sig.param_names)
                     else None) or f"#{i + 1}"
            if not annotated or c is None:
                if v.ts.owned_atoms():
                    self.emit("CR-OWN-UNCLEAR", ins.span, function=ins.callee, place=disp,
                              param=pname)
                continue
            sents = v.ts.sentinels()
            # a moved-out value was already reported when it was read
            if sents and not c.optional and MOVED not in v.ts:
                self.emit("CR-OPT-ARG", arg.span, place=disp, sentinel=sents[0], param=pname,
                          function=ins.callee)
            if not v.is_const and v.nominal != c.nominal:
                self.emit("CR-NOMINAL-MIX", arg.span, place=disp,
                          expected=c.nominal or c.ctype.spelling(),
                          actual=v.nominal or self.typer.operand_type(arg).spelling())
            refs = _objects(v.refs) if c.ctype.is_pointer else []
            exclusive = c.borrow == "exclusive" or (c.owning is not None)
            for r in refs:
                prev = passed.get(r)
                if prev is not None and (exclusive or prev == "exclusive"):
                    self.emit("CR-EXCL-VIOLATION", arg.span, place=self.display(r),
                              detail=f"'{self.display(r)}' is passed to '{ins.callee}' more "
                                     f"than once while exclusively borrowed")
                passed[r] = "exclusive" if exclusive else "shared"
                source = v.source if v.source != name else None
                self.check_borrowed_use(r, arg.span, write=exclusive, exclude=name or source)
            if c.init in (REQUIRES,) or c.finalizes or c.props_in:
                for r in refs:
                    rc = self.cell(r)
                    if rc is None:
                        continue
                    if RELEASED in rc.ts:
                        self.emit("CR-USE-AFTER-RELEASE", arg.span, place=disp)
                    elif UNINIT in rc.ts and c.init == REQUIRES and not c.release:
                        # releasing storage does not read its contents
                        self.emit("CR-UNINIT-USE", arg.span, place=self.display(r))
                        f.cells[r] = replace(rc, ts=_replace_atom(rc.ts, UNINIT, INIT))
                    elif FINALIZED in rc.ts:
                        self.emit("CR-UNINIT-USE", arg.span, place=self.display(r),
                                  state="finalized")
            for key, want in c.props_in:
                if want == "?":
                    continue
                for r in refs:
                    rc = self.cell(r)
                    if rc is None:
                        continue
                    actual = rc.props.get(key)
                    if actual != want:
                        self.emit("CR-PRE-VIOLATION", arg.span, function=ins.callee,
                                  property=key, place=disp, expected=want, actual=actual)
                        f.cells[r] = replace(rc, props=rc.props.set(key, want))
            if c.owning:
                null_only = bool(v.ts) and all(a.kind == "sentinel" for a in v.ts)
                if (not v.ts.owned_atoms() and MOVED not in v.ts and not v.is_const
                        and not (c.optional and null_only)):
                    self.emit("CR-RELEASE-INVALID", arg.span, place=disp, function=ins.callee,
                              detail=f"'{disp}' does not own the resource")
                if c.release:
                    for r in refs:
                        rc = self.cell(r)
                        if (rc is not None and INIT in rc.ts
                                and self.tables.fini_required(self.place_type(r))):
                            self.emit("CR-RELEASE-INVALID", arg.span, place=disp,
                                      function=ins.callee,
                                      detail="the resource has not been finalized")
                effects.append(("move", name, refs, c.release))
            if c.init == INITIALIZES:
                effects.append(("init", name, refs, None))
            if c.finalizes:
                effects.append(("fini", name, refs, None))
            if c.props_out:
                effects.append(("props", name, refs, c.props_out))
            if c.init == INIT_ON_SUCCESS:
                effects.append(("link-init", name, refs, None))
        for kind, name, refs, extra in effects:
            if kind == "move":
                if name is not None and name in f.cells:
                    sc = f.cells[name]
                    if sc.ts.owned_atoms():
                        moved = Typestate([a for a in sc.ts if a.kind != "owned"] + [MOVED])
                        f.cells[name] = replace(sc, ts=moved)
                if extra:
                    for r in refs:
                        if r in f.cells:
                            f.cells[r] = replace(f.cells[r], ts=ts(RELEASED))
            elif kind in ("init", "fini"):
                for r in refs:
                    rc = self.cell(r)
                    if rc is not None:
                        new = ts(INIT) if kind == "init" else ts(FINALIZED)
                        f.cells[r] = replace(rc, ts=new if len(refs) == 1 else rc.ts | new)
            elif kind == "props":
                for r in refs:
                    rc = self.cell(r)
                    if rc is not None:
                        props = rc.props
                        for key, val in extra:
                            props = props.set(key, UNKNOWN if val == "?" else val)
                        f.cells[r] = replace(rc, props=props)
        if ins.dst is not None:
            ret = sig.ret if sig is not None else Contract(self.typer.type_of_var(ins.dst))
            self.store_result(ins, ret, annotated)
            for kind, name, refs, _ in effects:
                if kind == "link-init":
                    ok = self.range_of(ret)
                    for s in _int_sentinels(f.cells[ins.dst].ts):
                        ok = ok.minus(MultiInterval.const(s))
                    for r in refs:
                        f.links.add(Link(ins.dst, ok.parts, r, "init"))
            for idx in ZERO_SIZE_NULL.get(ins.callee, ()) if annotated else ():
                if idx < len(ins.args) and isinstance(ins.args[idx], Var):
                    f.links.add(Link(ins.args[idx].name, ((0, 0),), ins.dst, "null", "NULL"))

    def store_result(self, ins: Call, ret: Contract, annotated: bool) -> None:
        f = self.f
        site = f"{ins.span.line}:{ins.span.col}"
        atoms = set()
        refs: set = set()
        if annotated and ret.owning:
            rc = ret.resource_class or (HEAP_RESOURCE if ret.owning == "heap" else "resource")
            atoms.add(owned(rc, origin_of(self.models, ins.callee), site))
        else:
            atoms.add(INIT)
        if annotated and ret.optional:
            atoms.add(sentinel(ret.sentinel))
        if ret.ctype.is_pointer:
            if annotated and ret.owning:
                obj = ("heap@" if ret.owning == "heap" else "res@") + site
                target = ret.ctype.target or _INT
                f.cells[obj] = Cell(ts(UNINIT if ret.init == MAYBE_UNINIT else INIT),
                                    target.value_range(), nominal=target.nominal)
                refs.add(obj)
            else:
                refs.add(UNKNOWN_REF)
            if annotated and ret.sentinel == "NULL":
                refs.add(NULL_REF)
        val = self.range_of(ret) if annotated else ret.ctype.value_range()
        old = f.cells.get(ins.dst)
        if old is not None:
            self.leak(ins.dst, old, ins.span)
        f.cells[ins.dst] = Cell(Typestate(atoms), val, refs=ReferentSet(refs),
                                nominal=ret.nominal)
        f.links = {l for l in f.links if ins.dst not in (l.trigger, l.target)}

    def place_type(self, place: str) -> CType | None:
        if place in self.cfg.vars:
            return self.cfg.vars[place].contract.ctype
        if place.startswith("*") and place[1:] in self.cfg.vars:
            return self.cfg.vars[place[1:]].contract.ctype.target
        return None

    def ret(self, ins: Return) -> None:
        excluded = None
        rc = self.sig.ret
        if ins.value is not None:
            v = self.operand(ins.value)
            disp = self.operand_display(ins.value)
            if isinstance(ins.value, Var):
                excluded = ins.value.name
            sents = v.ts.sentinels()
            if sents and not rc.optional:
                self.emit("CR-OPT-RET", ins.value.span, place=disp, sentinel=sents[0],
                          function=self.cfg.name)
            if rc.values is not None:
                allowed = self.range_of(rc)
                actual = v.val
                for s in _int_sentinels(v.ts):
                    actual = actual.minus(MultiInterval.const(s))  # reported as CR-OPT-RET
                if not actual.leq(allowed):
                    self.emit("CR-VAL-RANGE", ins.value.span, place=disp, actual=str(v.val),
                              expected=str(allowed))
            if rc.nominal and v.nominal != rc.nominal and not v.is_const:
                self.emit("CR-NOMINAL-MIX", ins.value.span, place=disp, expected=rc.nominal,
                          actual=v.nominal or "a plain value")
        self.check_exit(ins.span, excluded)
        self.f.dead = True

    def check_exit(self, span, excluded: str | None) -> None:
        f = self.f
        for place in sorted(f.cells):
            if place != excluded:
                self.leak(place, f.cells[place], span)
        for place in sorted(f.cells):
            info = self.cfg.vars.get(place)
            if info is None or info.kind != "local":
                continue
            if INIT in f.cells[place].ts and self.tables.fini_required(info.contract.ctype):
                self.emit("CR-FINI-MISSING", span, place=info.display,
                          type=info.contract.ctype.spelling())
        for name in self.cfg.params:
            c = self.cfg.vars[name].contract
            obj = "*" + name
            cell = f.cells.get(obj)
            if cell is None:
                continue
            out = dict(c.props_out)
            entry = self.entry_props.get(obj, PropertyMap())
            checks = [(k, v) for k, v in sorted(out.items()) if v != "?"]
            checks += [(k, v) for k, v in entry.items if k not in out and v != UNKNOWN]
            for key, want in checks:
                actual = cell.props.get(key)
                if actual != want:
                    self.emit("CR-POST-VIOLATION", span, function=self.cfg.name, property=key,
                              place=self.display(name), expected=want, actual=actual)

    def kill(self, ins: Kill) -> None:
        f = self.f
        for name in ins.names:
            c = f.cells.get(name)
            if c is None:
                continue
            self.leak(name, c, ins.span)
            info = self.cfg.vars.get(name)
            if (ins.scope_end and info is not None and info.kind == "local" and INIT in c.ts
                    and self.tables.fini_required(info.contract.ctype)):
                self.emit("CR-FINI-MISSING", ins.span, place=info.display,
                          type=info.contract.ctype.spelling())
        gone = set(ins.names)
        for p in list(f.cells):
            if p in gone or p.split(".", 1)[0] in gone:
                del f.cells[p]
        f.links = {l for l in f.links if l.trigger not in gone and l.target not in gone}
        f.borrows = {b for b in f.borrows if b[0] not in gone and b[1] not in gone}

    def region(self, ins: Region) -> None:
        if ins.enter:
            if ins.mode == "unchecked" and ins.kind not in self.sig.unsafe:
                self.emit("CR-UNSAFE-PROPAGATE", ins.span, suppressible=False, kind=ins.kind,
                          function=self.cfg.name)
            self.f.regions.append((ins.mode, ins.kind))
        elif self.f.regions:
            self.f.regions.pop()

    def step(self, ins) -> None:
        if isinstance(ins, Declare):
            self.declare(ins)
        elif isinstance(ins, Assign):
            self.assign(ins)
        elif isinstance(ins, Call):
            self.call(ins)
        elif isinstance(ins, Return):
            self.ret(ins)
        elif isinstance(ins, Kill):
            self.kill(ins)
        elif isinstance(ins, Region):
            self.region(ins)
        else:
            raise TypeError(f"unknown instruction {ins!r}")

    def transfer_block(self, bid: int, st: AbstractState, record: dict | None = None) -> AbstractState:
        self.f = Frame(st)
        block = self.cfg.block(bid)
        for i, ins in enumerate(block.instrs):
            if self.f.dead:
                break
            if record is not None:
                record[(bid, i)] = self.f.freeze()
            self.point = (bid, i)
            uses, _ = uses_defs(ins)
            live_after = self.live.get((bid, i), frozenset())
            self.point_live = frozenset(live_after | uses)
            self.step(ins)
            self.f.borrows = {b for b in self.f.borrows if b[0] in live_after}
        return self.f.freeze()

    # --- guards ----------------------------------------------------------------

    def fire_links(self, f: Frame, name: str, val: MultiInterval) -> None:
        for link in sorted(f.links):
            if link.trigger != name:
                continue
            when = link.when_mi
            if val.leq(when):
                f.links.discard(link)
                tc = f.cells.get(link.target)
                if tc is None:
                    continue
                if link.effect == "null":
                    f.cells[link.target] = Cell(ts(sentinel(link.sentinel or "NULL")),
                                                MultiInterval.const(0), tc.props,
                                                ReferentSet({NULL_REF}), tc.nominal)
                elif link.effect == "init":
                    f.cells[link.target] = replace(tc, ts=_replace_atom(tc.ts, UNINIT, INIT))
            elif val.meet(when).is_bottom:
                f.links.discard(link)

    def refine(self, st: AbstractState, cond, truth: bool) -> AbstractState:
        if st.bottom:
            return st
        op = cond.op if truth else NEGATE[cond.op]
        lhs, rhs = cond.lhs, cond.rhs
        if not isinstance(lhs, Var) and isinstance(rhs, Var):
            lhs, rhs, op = rhs, lhs, FLIP[op]
        if not isinstance(lhs, Var):
            return st
        f = Frame(st)
        c = f.cells.get(lhs.name)
        if c is None:
            return st
        is_ptr = self.typer.type_of_var(lhs.name).is_pointer
        if isinstance(rhs, Var):
            rc = f.cells.get(rhs.name)
            k = rc.val.singleton() if rc is not None and not rc.ts.maybe_optional else None
            if k is None or is_ptr:
                return st
            rhs = Const(k, rhs.span)
        if isinstance(rhs, Null) or (is_ptr and isinstance(rhs, Const) and rhs.value == 0):
            if op not in ("==", "!="):
                return st
            return self.refine_null(f, lhs.name, c, op == "==")
        if isinstance(rhs, Const) and not is_ptr:
            return self.refine_value(f, lhs.name, c, op, rhs.value)
        return st

    def refine_null(self, f: Frame, name: str, c: Cell, is_null: bool) -> AbstractState:
        may_null = (NULL_REF in c.refs or "NULL" in c.ts.sentinels() or UNKNOWN_REF in c.refs
                    or not c.refs or any(r.startswith("*") for r in c.refs))
        if is_null:
            if not may_null:
                return AbstractState.unreachable()
            f.cells[name] = Cell(ts(sentinel("NULL")), MultiInterval.const(0), c.props,
                                 ReferentSet({NULL_REF}), c.nominal)
        else:
            if c.refs == {NULL_REF}:
                return AbstractState.unreachable()
            f.cells[name] = replace(c, ts=_without_sentinels(c.ts),
                                    refs=ReferentSet(c.refs - {NULL_REF}))
        return f.freeze()

    def refine_value(self, f: Frame, name: str, c: Cell, op: str, k) -> AbstractState:
        if isinstance(k, float) and not k.is_integer():
            return f.freeze()
        k = int(k)
        allowed = {
            "==": MultiInterval.const(k),
            "!=": MultiInterval.top().minus(MultiInterval.const(k)),
            "<": MultiInterval.of((-float("inf"), k - 1)),
            "<=": MultiInterval.of((-float("inf"), k)),
            ">": MultiInterval.of((k + 1, float("inf"))),
            ">=": MultiInterval.of((k, float("inf"))),
        }[op]
        val = c.val.meet(allowed)
        if val.is_bottom:
            return AbstractState.unreachable()
        new_ts = c.ts
        for s in _int_sentinels(c.ts):
            if not val.contains(s):
                new_ts = Typestate(a for a in new_ts if a != sentinel(s))
            elif val.singleton() == s:
                new_ts = ts(sentinel(s))
        if not new_ts:
            new_ts = ts(INIT)
        f.cells[name] = replace(c, ts=new_ts, val=val)
        self.fire_links(f, name, val)
        return f.freeze()

    # --- driver ----------------------------------------------------------------

    def edges(self, bid: int, out: AbstractState) -> list[tuple[int, AbstractState]]:
        term = self.cfg.block(bid).term
        if isinstance(term, Branch):
            return [(term.on_true, self.refine(out, term.cond, True)),
                    (term.on_false, self.refine(out, term.cond, False))]
        return [(s, out) for s in self.cfg.block(bid).successors()]

    def run(self) -> AnalysisResult:
        cfg = self.cfg
        order = reverse_postorder(cfg)
        rank = {b: i for i, b in enumerate(order)}
        loop_heads = {s for b in order for s in cfg.block(b).successors()
                      if s in rank and rank[s] <= rank[b]}
        states: dict[int, AbstractState] = {cfg.entry: self.entry_state()}
        visits = {b: 0 for b in order}
        heap = [(rank[cfg.entry], cfg.entry)]
        queued = {cfg.entry}
        while heap:
            _, bid = heapq.heappop(heap)
            queued.discard(bid)
            visits[bid] += 1
            assert visits[bid] <= MAX_VISITS, f"no fixpoint at B{bid} in {cfg.name}"
            out = self.transfer_block(bid, states[bid])
            for succ, st in self.edges(bid, out):
                if st.bottom or succ not in rank:
                    continue
                old = states.get(succ)
                if old is None:
                    new = st
                elif succ in loop_heads and visits[succ] >= WIDEN_AFTER:
                    new = old.widen(old.join(st))
                else:
                    new = old.join(st)
                if old is None or not new.leq(old):
                    states[succ] = new
                    if succ not in queued:
                        heapq.heappush(heap, (rank[succ], succ))
                        queued.add(succ)
        # reporting pass over the stable states
        self.report = True
        points: dict = {}
        for bid in order:
            if bid in states:
                self.transfer_block(bid, states[bid], points)
        return AnalysisResult(cfg.name, diagnostics.dedupe(self.diags), states, points, visits)


def analyze_function(cfg: Cfg, tables: Tables, models: LibraryModel | None = None) -> AnalysisResult:
    return FunctionAnalyzer(cfg, tables, models).run()
