"""Abstract domains used by the analysis engine.

All values are immutable. ``Typestate`` is a finite powerset of lifecycle
atoms, ``MultiInterval`` a normalized union of integer intervals,
``PropertyMap`` a per-resource map of custom properties. ``AbstractState``
combines them per abstract place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

INF = math.inf
NEG_INF = -math.inf

# --- typestate ---------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Atom:
    """One lifecycle fact. ``arg`` is the resource class for ``owned`` and
    the sentinel for ``sentinel``; ``origin`` names the acquiring call and
    ``site`` its location, so two acquisitions never collapse."""

    kind: str
    arg: object = None
    origin: str | None = None
    site: str | None = None

    def __str__(self) -> str:
        if self.kind == "owned":
            return f"Owned({self.arg})"
        if self.kind == "sentinel":
            return f"Sentinel({self.arg})"
        return _ATOM_NAMES.get(self.kind, self.kind)


UNINIT = Atom("uninit")
INIT = Atom("init")
MOVED = Atom("moved")
RELEASED = Atom("released")
FINALIZED = Atom("finalized")
BOR_SHARED = Atom("bor-shared")
BOR_EXCL = Atom("bor-excl")
TOP_ATOM = Atom("top")

_ATOM_NAMES = {
    "uninit": "Uninitialized",
    "init": "Initialized",
    "moved": "MovedOut",
    "released": "Released",
    "finalized": "Finalized",
    "bor-shared": "BorrowedShared",
    "bor-excl": "BorrowedExclusive",
    "top": "Top",
}


def owned(resource: str, origin: str | None = None, site: str | None = None) -> Atom:
    return Atom("owned", resource, origin, site)


def sentinel(value) -> Atom:
    return Atom("sentinel", value)


class Typestate(frozenset):
    """A set of atoms; the empty set is the unanalyzed bottom.

    Two states that differ join to their union, which keeps the contributing
    states visible for messages. ``{s, Sentinel(k)}`` is MaybeOptional(s, k).
    Any set containing Top normalizes to ``{Top}``.
    """

    def __new__(cls, atoms: Iterable[Atom] = ()):
        atoms = frozenset(atoms)
        if TOP_ATOM in atoms:
            atoms = frozenset((TOP_ATOM,))
        return super().__new__(cls, atoms)

    @property
    def is_bottom(self) -> bool:
        return not self

    @property
    def is_top(self) -> bool:
        return TOP_ATOM in self

    def has(self, kind: str) -> bool:
        return any(a.kind == kind for a in self)

    def sentinels(self) -> list:
        return sorted((a.arg for a in self if a.kind == "sentinel"), key=str)

    @property
    def maybe_optional(self) -> bool:
        return self.has("sentinel")

    def owned_atoms(self) -> list[Atom]:
        return sorted(a for a in self if a.kind == "owned")

    def without(self, kind: str) -> Typestate:
        return Typestate(a for a in self if a.kind != kind)

    def __repr__(self) -> str:
        if not self:
            return "Bottom"
        return "{" + ", ".join(sorted(str(a) for a in self)) + "}"


BOTTOM_TS = Typestate()
TOP_TS = Typestate((TOP_ATOM,))


def ts(*atoms: Atom) -> Typestate:
    return Typestate(atoms)


def ts_join(a: Typestate, b: Typestate) -> Typestate:
    return Typestate(a | b)


def ts_leq(a: Typestate, b: Typestate) -> bool:
    return b.is_top or a <= b


# --- multi-intervals ---------------------------------------------------------


def _norm(bounds: Iterable[tuple]) -> tuple:
    items = sorted((lo, hi) for lo, hi in bounds if lo <= hi)
    out: list[list] = []
    for lo, hi in items:
        if out and lo <= out[-1][1] + 1:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return tuple((lo, hi) for lo, hi in out)


@dataclass(frozen=True)
class MultiInterval:
    """Sorted, disjoint, non-adjacent closed intervals; bounds may be ±inf."""

    parts: tuple = ()

    @staticmethod
    def of(*bounds: tuple) -> MultiInterval:
        return MultiInterval(_norm(bounds))

    @staticmethod
    def const(v: int) -> MultiInterval:
        return MultiInterval(((v, v),))

    @staticmethod
    def top() -> MultiInterval:
        return MultiInterval(((NEG_INF, INF),))

    @staticmethod
    def bottom() -> MultiInterval:
        return MultiInterval(())

    @property
    def is_bottom(self) -> bool:
        return not self.parts

    @property
    def is_top(self) -> bool:
        return self.parts == ((NEG_INF, INF),)

    @property
    def lo(self):
        return self.parts[0][0]

    @property
    def hi(self):
        return self.parts[-1][1]

    def singleton(self):
        if len(self.parts) == 1 and self.parts[0][0] == self.parts[0][1]:
            return self.parts[0][0]
        return None

    def contains(self, v) -> bool:
        return any(lo <= v <= hi for lo, hi in self.parts)

    def leq(self, other: MultiInterval) -> bool:
        return self.meet(other) == self

    def join(self, other: MultiInterval) -> MultiInterval:
        return MultiInterval(_norm(self.parts + other.parts))

    def meet(self, other: MultiInterval) -> MultiInterval:
        out = []
        for a, b in self.parts:
            for c, d in other.parts:
                lo, hi = max(a, c), min(b, d)
                if lo <= hi:
                    out.append((lo, hi))
        return MultiInterval(_norm(out))

    def minus(self, other: MultiInterval) -> MultiInterval:
        """Set difference; exact for integer intervals."""
        cur = list(self.parts)
        for c, d in other.parts:
            nxt = []
            for a, b in cur:
                if d < a or c > b:
                    nxt.append((a, b))
                    continue
                if a < c:
                    nxt.append((a, c - 1))
                if d < b:
                    nxt.append((d + 1, b))
            cur = nxt
        return MultiInterval(_norm(cur))

    def hull(self) -> MultiInterval:
        if self.is_bottom:
            return self
        return MultiInterval(((self.lo, self.hi),))

    def widen(self, other: MultiInterval) -> MultiInterval:
        """Standard widening lifted to interval sets.

        Extreme bounds that grow jump to infinity. If the interior layout
        also changed, the result collapses to a single hull so that chains
        stabilize after a bounded number of steps.
        """
        if self.is_bottom:
            return other
        if other.is_bottom:
            return self
        j = self.join(other)
        if j == self:
            return self
        lo = self.lo if j.lo >= self.lo else NEG_INF
        hi = self.hi if j.hi <= self.hi else INF
        if _interior(j) != _interior(self):
            return MultiInterval(((lo, hi),))
        parts = list(j.parts)
        parts[0] = (lo, parts[0][1])
        parts[-1] = (parts[-1][0], hi)
        return MultiInterval(_norm(parts))

    def __str__(self) -> str:
        if self.is_bottom:
            return "{}"
        items = []
        for lo, hi in self.parts:
            if lo == hi:
                items.append(f"[{_b(lo)}]")
            else:
                items.append(f"[{_b(lo)},{_b(hi)}]")
        return "{" + ",".join(items) + "}" if len(items) > 1 else items[0]


def _interior(m: MultiInterval) -> tuple:
    """Interval boundaries excluding the two extreme ones."""
    if len(m.parts) <= 1:
        return ()
    inner = []
    for i, (lo, hi) in enumerate(m.parts):
        if i > 0:
            inner.append(lo)
        if i < len(m.parts) - 1:
            inner.append(hi)
    return tuple(inner)


def _b(v) -> str:
    if v == INF:
        return "+inf"
    if v == NEG_INF:
        return "-inf"
    return str(int(v)) if float(v).is_integer() else str(v)


def mi_from_predicate(pred) -> MultiInterval:
    """Convert an e_val predicate (frontend AST node) into a multi-interval.

    Floating bounds are rounded outward to integers.
    """
    from crusted.frontend import ast

    if isinstance(pred, ast.PredGeq):
        return MultiInterval.of((math.floor(pred.value), INF))
    if isinstance(pred, ast.PredRange):
        return MultiInterval.of((math.floor(pred.lo), math.ceil(pred.hi)))
    if isinstance(pred, ast.PredEq):
        v = pred.value
        return MultiInterval.of((math.floor(v), math.ceil(v)))
    if isinstance(pred, ast.PredOr):
        out = MultiInterval.bottom()
        for opt in pred.options:
            out = out.join(mi_from_predicate(opt))
        return out
    raise TypeError(f"not a value predicate: {pred!r}")


def _mul(a, b):
    if a == 0 or b == 0:
        return 0
    return a * b


def _cdiv(a, b):
    """C division (truncation toward zero) extended to infinite bounds."""
    if math.isinf(a):
        return INF if (a > 0) == (b > 0) else NEG_INF
    if math.isinf(b):
        return 0
    q = abs(int(a)) // abs(int(b))
    return q if (a >= 0) == (b > 0) else -q


def _pairwise(op, a: MultiInterval, b: MultiInterval) -> MultiInterval:
    out = []
    for x in a.parts:
        for y in b.parts:
            out.append(op(x, y))
    return MultiInterval(_norm(out))


def _add(x, y):
    return (x[0] + y[0], x[1] + y[1])


def _sub(x, y):
    return (x[0] - y[1], x[1] - y[0])


def _mulr(x, y):
    c = [_mul(p, q) for p in x for q in y]
    return (min(c), max(c))


def _split_zero(m: MultiInterval) -> MultiInterval:
    return m.minus(MultiInterval.const(0))


def _divr(x, y):
    # y excludes 0 here, so it lies entirely on one side of zero
    c = [_cdiv(p, q) for p in x for q in y]
    lo, hi = min(c), max(c)
    if x[0] <= 0 <= x[1]:
        lo, hi = min(lo, 0), max(hi, 0)
    return (lo, hi)


def _modr(x, y):
    m = max(abs(y[0]), abs(y[1]))
    bound = m - 1 if not math.isinf(m) else INF
    if x[0] >= 0:
        return (0, min(bound, x[1]))
    if x[1] <= 0:
        return (max(-bound, x[0]), 0)
    return (max(-bound, x[0]), min(bound, x[1]))


_CMP = {
    "<": lambda x, y: (x[1] < y[0], x[0] < y[1]),
    "<=": lambda x, y: (x[1] <= y[0], x[0] <= y[1]),
    ">": lambda x, y: (x[0] > y[1], x[1] > y[0]),
    ">=": lambda x, y: (x[0] >= y[1], x[1] >= y[0]),
    "==": lambda x, y: (x[0] == x[1] == y[0] == y[1], x[0] <= y[1] and y[0] <= x[1]),
    "!=": lambda x, y: (x[1] < y[0] or y[1] < x[0], not (x[0] == x[1] == y[0] == y[1])),
}


def mi_binop(op: str, a: MultiInterval, b: MultiInterval) -> MultiInterval:
    """Abstract binary operator. Comparisons yield a subset of [0, 1].

    For ``/`` and ``%`` the divisor's zero is excluded (the caller decides
    whether to report it).
    """
    if a.is_bottom or b.is_bottom:
        return MultiInterval.bottom()
    if op == "+":
        return _pairwise(_add, a, b)
    if op == "-":
        return _pairwise(_sub, a, b)
    if op == "*":
        return _pairwise(_mulr, a, b)
    if op in ("/", "%"):
        nz = _split_zero(b)
        if nz.is_bottom:
            return MultiInterval.bottom()
        # split each divisor component at zero so corners are monotone
        neg = nz.meet(MultiInterval.of((NEG_INF, -1)))
        pos = nz.meet(MultiInterval.of((1, INF)))
        divisor = MultiInterval(neg.parts + pos.parts)
        return _pairwise(_divr if op == "/" else _modr, a, divisor)
    if op in _CMP:
        may_true = may_false = False
        for x in a.parts:
            for y in b.parts:
                must, may = _CMP[op](x, y)
                may_true = may_true or may
                may_false = may_false or not must
        vals = []
        if may_false:
            vals.append((0, 0))
        if may_true:
            vals.append((1, 1))
        return MultiInterval(_norm(vals))
    if op in ("&&", "||"):
        az, bz = a.contains(0), b.contains(0)
        anz, bnz = a != MultiInterval.const(0), b != MultiInterval.const(0)
        if op == "&&":
            may_true, may_false = anz and bnz, az or bz
        else:
            may_true, may_false = anz or bnz, az and bz
        vals = ([(0, 0)] if may_false else []) + ([(1, 1)] if may_true else [])
        return MultiInterval(_norm(vals))
    # bitwise and shifts: no precise model
    return MultiInterval.top()


def mi_unop(op: str, a: MultiInterval) -> MultiInterval:
    if a.is_bottom:
        return a
    if op == "-":
        return MultiInterval(_norm((-hi, -lo) for lo, hi in a.parts))
    if op == "+":
        return a
    if op == "!":
        vals = []
        if a != MultiInterval.const(0):
            vals.append((0, 0))
        if a.contains(0):
            vals.append((1, 1))
        return MultiInterval(_norm(vals))
    return MultiInterval.top()


def mi_clip(a: MultiInterval, lo, hi) -> MultiInterval:
    """Clamp to a type range; values outside it wrap, so give the full range."""
    rng = MultiInterval.of((lo, hi))
    if a.leq(rng):
        return a
    return rng


# --- property maps -------------------------------------------------------------

UNKNOWN = "?"
ABSENT = None


@dataclass(frozen=True)
class PropertyMap:
    items: tuple = ()  # sorted (key, value) pairs; value is an atom or UNKNOWN

    @staticmethod
    def of(mapping: Mapping[str, str]) -> PropertyMap:
        return PropertyMap(tuple(sorted(mapping.items())))

    def get(self, key: str):
        for k, v in self.items:
            if k == key:
                return v
        return ABSENT

    def set(self, key: str, value) -> PropertyMap:
        d = dict(self.items)
        if value is ABSENT:
            d.pop(key, None)
        else:
            d[key] = value
        return PropertyMap.of(d)

    def keys(self) -> set:
        return {k for k, _ in self.items}

    def join(self, other: PropertyMap) -> PropertyMap:
        d = {}
        for k in self.keys() | other.keys():
            a, b = self.get(k), other.get(k)
            d[k] = a if a == b else UNKNOWN
        return PropertyMap.of(d)

    def leq(self, other: PropertyMap) -> bool:
        return self.join(other) == other

    def __str__(self) -> str:
        return "{" + ", ".join(f"{k}={v}" for k, v in self.items) + "}"


# --- referents -------------------------------------------------------------------

NULL_REF = "null"
UNKNOWN_REF = "unknown"
STATIC_REF = "static"


class ReferentSet(frozenset):
    def __repr__(self) -> str:
        return "{" + ", ".join(sorted(self)) + "}"


# --- cells and states ------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    """Everything known about one abstract place."""

    ts: Typestate = BOTTOM_TS
    val: MultiInterval = field(default_factory=MultiInterval.top)
    props: PropertyMap = field(default_factory=PropertyMap)
    refs: ReferentSet = field(default_factory=ReferentSet)
    nominal: str | None = None

    def join(self, other: Cell) -> Cell:
        nominal = self.nominal if self.nominal == other.nominal else None
        if self.ts.is_bottom and self.val.is_bottom:
            return other
        if other.ts.is_bottom and other.val.is_bottom:
            return self
        return Cell(ts_join(self.ts, other.ts), self.val.join(other.val),
                    self.props.join(other.props), ReferentSet(self.refs | other.refs),
                    nominal)

    def widen(self, other: Cell) -> Cell:
        j = self.join(other)
        return replace(j, val=self.val.widen(j.val))

    def leq(self, other: Cell) -> bool:
        return (ts_leq(self.ts, other.ts) and self.val.leq(other.val)
                and self.props.leq(other.props) and self.refs <= other.refs
                and (other.nominal is None or self.nominal == other.nominal))

    def __str__(self) -> str:
        parts = [repr(self.ts)]
        if not self.val.is_top:
            parts.append(f"val={self.val}")
        if self.refs:
            parts.append(f"refs={self.refs!r}")
        if self.props.items:
            parts.append(f"props={self.props}")
        if self.nominal:
            parts.append(f"type={self.nominal}")
        return " ".join(parts)


@dataclass(frozen=True, order=True)
class Link:
    """A fact that becomes known once ``trigger``'s value is narrowed.

    When guard refinement proves ``trigger`` lies inside ``when``, ``effect``
    is applied to ``target``: ``"null"`` makes it the null sentinel,
    ``"init"`` initializes it. If the value is proven outside ``when`` the
    link is dropped.
    """

    trigger: str
    when: tuple
    target: str
    effect: str
    sentinel: object = None

    @property
    def when_mi(self) -> MultiInterval:
        return MultiInterval(self.when)


@dataclass(frozen=True)
class AbstractState:
    cells: tuple = ()  # sorted (place, Cell)
    regions: tuple = ()  # stack of (mode, kind)
    links: frozenset = frozenset()
    borrows: tuple = ()  # sorted (borrower, target, mode)
    bottom: bool = False

    # construction and lookup

    @staticmethod
    def unreachable() -> AbstractState:
        return AbstractState(bottom=True)

    @staticmethod
    def from_cells(cells: Mapping[str, Cell], **kw) -> AbstractState:
        return AbstractState(tuple(sorted(cells.items())), **kw)

    def as_dict(self) -> dict:
        return dict(self.cells)

    def get(self, place: str) -> Cell | None:
        for p, c in self.cells:
            if p == place:
                return c
        return None

    def places(self) -> list[str]:
        return [p for p, _ in self.cells]

    def with_cells(self, cells: Mapping[str, Cell]) -> AbstractState:
        return replace(self, cells=tuple(sorted(cells.items())))

    def set(self, place: str, cell: Cell) -> AbstractState:
        d = self.as_dict()
        d[place] = cell
        return self.with_cells(d)

    def drop(self, places: Iterable[str]) -> AbstractState:
        gone = set(places)
        d = {p: c for p, c in self.cells if p not in gone}
        links = frozenset(l for l in self.links if l.trigger not in gone and l.target not in gone)
        borrows = tuple(b for b in self.borrows if b[0] not in gone)
        return replace(self, cells=tuple(sorted(d.items())), links=links, borrows=borrows)

    # lattice

    def join(self, other: AbstractState) -> AbstractState:
        if self.bottom:
            return other
        if other.bottom:
            return self
        a, b = self.as_dict(), other.as_dict()
        out = {}
        for p in sorted(set(a) | set(b)):
            if p in a and p in b:
                out[p] = a[p].join(b[p])
            else:
                out[p] = a.get(p) or b.get(p)
        regions = self.regions if len(self.regions) >= len(other.regions) else other.regions
        borrows = tuple(sorted(set(self.borrows) | set(other.borrows)))
        return AbstractState(tuple(sorted(out.items())), regions, self.links & other.links,
                             borrows)

    def widen(self, other: AbstractState) -> AbstractState:
        if self.bottom:
            return other
        if other.bottom:
            return self
        a, b = self.as_dict(), other.as_dict()
        out = {}
        for p in sorted(set(a) | set(b)):
            if p in a and p in b:
                out[p] = a[p].widen(b[p])
            else:
                out[p] = a.get(p) or b.get(p)
        j = self.join(other)
        return replace(j, cells=tuple(sorted(out.items())))

    def leq(self, other: AbstractState) -> bool:
        if self.bottom:
            return True
        if other.bottom:
            return False
        b = other.as_dict()
        for p, c in self.cells:
            if p not in b or not c.leq(b[p]):
                return False
        return other.links <= self.links and set(self.borrows) <= set(other.borrows)

    def __str__(self) -> str:
        if self.bottom:
            return "unreachable"
        lines = [f"{p}: {c}" for p, c in self.cells]
        if self.regions:
            lines.append("regions: " + ", ".join(f"{m}({k})" for m, k in self.regions))
        for l in sorted(self.links):
            lines.append(f"link: {l.trigger} in {MultiInterval(l.when)} => {l.effect} {l.target}")
        for b in self.borrows:
            lines.append(f"borrow: {b[0]} -> {b[1]} ({b[2]})")
        return "\n".join(lines)
