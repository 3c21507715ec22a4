"""Annotation tables: typedef-chain resolution, contracts, header emission.

A declaration slot (parameter, return type, local, member) resolves to a
``Contract``: its C type plus every C-rusted property that applies to it,
whether written inline or inherited from typedefs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from crusted import diagnostics
from crusted.domains import INF, MultiInterval, mi_from_predicate
from crusted.frontend import ast
from crusted.registry import FUNCTION_LIKE, GLOBAL, OBJECT_LIKE
from crusted.source import Span

# --- C types -------------------------------------------------------------------

# name -> (kind, signed, bits)
_SCALARS = {
    "void": ("void", False, 0),
    "char": ("int", True, 8),
    "signed char": ("int", True, 8),
    "unsigned char": ("int", False, 8),
    "short": ("int", True, 16),
    "short int": ("int", True, 16),
    "unsigned short": ("int", False, 16),
    "int": ("int", True, 32),
    "signed": ("int", True, 32),
    "signed int": ("int", True, 32),
    "unsigned": ("int", False, 32),
    "unsigned int": ("int", False, 32),
    "long": ("int", True, 64),
    "long int": ("int", True, 64),
    "unsigned long": ("int", False, 64),
    "long long": ("int", True, 64),
    "unsigned long long": ("int", False, 64),
    "size_t": ("int", False, 64),
    "ssize_t": ("int", True, 64),
    "_Bool": ("bool", False, 1),
    "bool": ("bool", False, 1),
    "float": ("float", True, 0),
    "double": ("float", True, 0),
    "long double": ("float", True, 0),
}


@dataclass(frozen=True)
class CType:
    """A resolved C type.

    ``kind`` is one of void, int, bool, float, enum, struct, pointer, array.
    ``typedef`` is the outermost typedef name used to spell it and
    ``nominal`` the nominal type the value carries (if any).
    """

    kind: str
    name: str
    const: bool = False
    target: CType | None = None
    signed: bool = True
    bits: int = 0
    typedef: str | None = None
    nominal: str | None = None

    @property
    def is_pointer(self) -> bool:
        return self.kind in ("pointer", "array")

    @property
    def is_scalar(self) -> bool:
        return self.kind in ("int", "bool", "enum", "float")

    @property
    def is_struct(self) -> bool:
        return self.kind == "struct"

    def value_range(self) -> MultiInterval:
        if self.kind == "bool":
            return MultiInterval.of((0, 1))
        if self.kind == "int" and self.bits:
            if self.signed:
                return MultiInterval.of((-(1 << (self.bits - 1)), (1 << (self.bits - 1)) - 1))
            return MultiInterval.of((0, (1 << self.bits) - 1))
        if self.kind == "enum":
            return MultiInterval.of((-(1 << 31), (1 << 31) - 1))
        return MultiInterval.top()

    def spelling(self) -> str:
        if self.typedef:
            return self.typedef
        if self.kind == "pointer":
            return f"{self.target.spelling()} *"
        return self.name

    def __str__(self) -> str:
        base = self.spelling()
        return f"const {base}" if self.const and not self.typedef else base


def scalar(name: str) -> CType:
    kind, signed, bits = _SCALARS[name]
    return CType(kind, name, signed=signed, bits=bits)


def pointer_to(t: CType, const: bool = False) -> CType:
    return CType("pointer", f"{t.spelling()} *", const=const, target=t)


# --- contracts -----------------------------------------------------------------

# init modes
REQUIRES = "requires-initialized"
INITIALIZES = "initializes"
MAYBE_UNINIT = "may-be-uninitialized"
INIT_ON_SUCCESS = "initializes-on-success"


@dataclass(frozen=True)
class Contract:
    """Everything the annotations say about one declaration slot."""

    ctype: CType
    sentinel: object = None  # -1, "NULL", ... when optional
    owning: str | None = None  # "heap" (e_hown) or "resource" (e_own)
    release: bool = False
    borrow: str | None = None  # "shared" / "exclusive" for non-owning references
    init: str = REQUIRES
    finalizes: bool = False
    values: MultiInterval | None = None
    props_in: tuple = ()
    props_out: tuple = ()
    resource_class: str | None = field(default=None, compare=False)  # for messages
    explicit: bool = False  # any annotation applies to this slot

    @property
    def nominal(self) -> str | None:
        return self.ctype.nominal

    @property
    def optional(self) -> bool:
        return self.sentinel is not None

    def ownership_mode(self, is_return: bool = False) -> str:
        if self.owning:
            if is_return:
                return "owning-out"
            return "release" if self.release else "owning-in"
        return "borrow" if self.borrow else "none"


@dataclass(frozen=True)
class AnnotatedSignature:
    name: str
    params: tuple  # tuple[Contract]
    param_names: tuple
    ret: Contract
    unsafe: frozenset = frozenset()
    annotated: bool = False
    span: Span | None = field(default=None, compare=False)

    def param(self, i: int) -> Contract | None:
        return self.params[i] if i < len(self.params) else None


@dataclass(frozen=True)
class TypeInfo:
    """A typedef name after chain flattening."""

    name: str
    ctype: CType
    parent: str | None
    nominal: str | None
    values: MultiInterval | None
    unsafe: frozenset
    fini_required: bool
    slot: tuple  # annotations (name, args) inherited by slots of this type
    annotated: bool


@dataclass(frozen=True)
class StructInfo:
    tag: str
    fields: tuple  # (name, Contract)
    unsafe: frozenset = frozenset()
    fini_required: bool = False

    def field(self, name: str) -> Contract | None:
        for n, c in self.fields:
            if n == name:
                return c
        return None


@dataclass
class Tables:
    """Nominal type table, struct layouts, operation tables, signatures."""

    types: dict = field(default_factory=dict)  # typedef name -> TypeInfo
    structs: dict = field(default_factory=dict)  # "struct tag" -> StructInfo
    binops: dict = field(default_factory=dict)  # (op, lhs, rhs) -> result type name
    unops: dict = field(default_factory=dict)  # (op, operand) -> result type name
    signatures: dict = field(default_factory=dict)  # name -> AnnotatedSignature
    globals: dict = field(default_factory=dict)  # name -> Contract
    constants: dict = field(default_factory=dict)  # enum and builtin constants
    declared_props: dict = field(default_factory=dict)  # type name -> annotations

    def nominal_of(self, type_name: str | None) -> str | None:
        info = self.types.get(type_name) if type_name else None
        return info.nominal if info else None

    def unsafe_kinds(self, t: CType | None) -> frozenset:
        """Unsafety kinds carried by a type (through typedefs and structs)."""
        kinds: set = set()
        while t is not None:
            if t.typedef and t.typedef in self.types:
                kinds |= self.types[t.typedef].unsafe
            if t.kind == "struct" and t.name in self.structs:
                kinds |= self.structs[t.name].unsafe
            if t.kind == "pointer":
                break
            t = t.target
        return frozenset(kinds)

    def fini_required(self, t: CType | None) -> bool:
        if t is None:
            return False
        if t.typedef and t.typedef in self.types and self.types[t.typedef].fini_required:
            return True
        return t.kind == "struct" and t.name in self.structs and self.structs[t.name].fini_required

    def struct_of(self, t: CType | None) -> StructInfo | None:
        if t is not None and t.kind == "struct":
            return self.structs.get(t.name)
        return None

    def is_nominal(self, name: str | None) -> bool:
        return name is not None and name in self.types and self.types[name].nominal == name


# --- resolution ------------------------------------------------------------------

SLOT_ANNOTATIONS = ("e_hown", "e_own", "e_opt", "e_opt_hown", "e_excl", "e_shar", "e_init",
                    "e_uninit", "e_fini", "e_release", "e_in", "e_out", "e_val")
_EXCLUSIVE_GROUPS = (
    ("e_hown", "e_own"),
    ("e_excl", "e_shar"),
    ("e_init", "e_uninit"),
    ("e_init", "e_release"),
)


def _flat(anns) -> list[tuple]:
    """Expand e_opt_hown and reduce annotations to (name, args, span)."""
    out = []
    for a in anns:
        if a.malformed:
            continue
        if a.name == "e_opt_hown":
            out.append(("e_opt", "NULL", a.span))
            out.append(("e_hown", None, a.span))
        else:
            out.append((a.name, a.args, a.span))
    return out


class Resolver:
    def __init__(self, tables: Tables):
        self.t = tables
        self.diags: list = []

    def error(self, code: str, span: Span, **payload) -> None:
        self.diags.append(diagnostics.make(code, span, **payload))

    # types

    def base_type(self, texpr: ast.TypeExpr) -> CType:
        base = texpr.base
        if isinstance(base, ast.StructDecl):
            tag = base.tag or f"<anon@{base.span.line}:{base.span.col}>"
            name = f"struct {tag}"
            if base.members is not None and name not in self.t.structs:
                self.define_struct(name, base)
            return CType("struct", name, const=texpr.const)
        if texpr.enum:
            return CType("enum", base, const=texpr.const, signed=True, bits=32)
        if base in self.t.types:
            return replace(self.t.types[base].ctype, const=texpr.const or self.t.types[base].ctype.const)
        if base in _SCALARS:
            return replace(scalar(base), const=texpr.const)
        norm = " ".join(w for w in base.split() if w != "int") or "int"
        for candidate in (norm, norm + " int"):
            if candidate in _SCALARS:
                return replace(scalar(candidate), const=texpr.const)
        if base.startswith("unsigned") or base.startswith("signed") or base.startswith("long"):
            return CType("int", base, const=texpr.const, signed="unsigned" not in base, bits=64)
        # unknown type name: opaque struct-like object
        return CType("struct", base, const=texpr.const)

    def full_type(self, texpr: ast.TypeExpr) -> CType:
        t = self.base_type(texpr)
        for p in texpr.pointers:
            t = pointer_to(t, p.const)
        if texpr.array is not None:
            t = CType("array", f"{t.spelling()} []", target=t)
        return t

    def define_struct(self, name: str, decl: ast.StructDecl) -> None:
        fields = []
        self.t.structs[name] = StructInfo(name, ())
        for m in decl.members or ():
            fields.append((m.name, self.contract(m.type, "member", m.span)))
        old = self.t.structs[name]
        self.t.structs[name] = replace(old, fields=tuple(fields))

    # slots

    def inherited(self, texpr: ast.TypeExpr) -> tuple:
        """Annotations inherited from the typedef naming the slot type."""
        if texpr.pointers or texpr.array is not None or isinstance(texpr.base, ast.StructDecl):
            return ()
        info = self.t.types.get(texpr.base)
        return info.slot if info else ()

    def contract(self, texpr: ast.TypeExpr, site: str, span: Span,
                 place: str | None = None) -> Contract:
        ctype = self.full_type(texpr)
        inline = _flat(texpr.all_annotations())
        inherited = self.inherited(texpr)
        values = None
        if inherited or (not texpr.pointers and texpr.array is None
                         and isinstance(texpr.base, str) and texpr.base in self.t.types):
            values = self.t.types[texpr.base].values
        return self.build_contract(ctype, inline, inherited, site, span, place, values)

    def build_contract(self, ctype: CType, inline: list, inherited: tuple, site: str,
                       span: Span, place: str | None = None,
                       values: MultiInterval | None = None) -> Contract:
        seen: dict[str, tuple] = {}
        for name, args, aspan in list(inherited) + list(inline):
            if name in ("e_type", "e_unsafe"):
                continue
            if name == "e_fini" and site == "typedef":
                continue
            if name == "e_val":
                mi = mi_from_predicate(args)
                values = mi if values is None else values.meet(mi)
                continue
            if name in seen and name in ("e_opt", "e_in", "e_out") and seen[name][0] != args:
                self.error("CR-ANN-CONFLICT", aspan,
                           detail=f"'{name}' given with different arguments")
                continue
            seen.setdefault(name, (args, aspan))
        conflicted = False
        for group in _EXCLUSIVE_GROUPS:
            present = [n for n in group if n in seen]
            if len(present) > 1:
                conflicted = True
                self.error("CR-ANN-CONFLICT", seen[present[1]][1],
                           detail=f"'{present[0]}' and '{present[1]}' on the same declaration")
                for n in present[1:]:
                    seen.pop(n)
        owning = "heap" if "e_hown" in seen else "resource" if "e_own" in seen else None
        release = "e_release" in seen
        if release and not owning:
            owning = "resource"
        borrow = None
        if not owning:
            if "e_shar" in seen:
                borrow = "shared"
            elif "e_excl" in seen:
                borrow = "exclusive"
            elif site in ("param", "member", "local") and ctype.kind == "pointer":
                borrow = "shared" if ctype.target.const else "exclusive"
            if (ctype.kind == "pointer" and not conflicted
                    and ("e_shar" in seen or "e_excl" in seen)):
                implied = "shared" if ctype.target.const else "exclusive"
                name = "e_shar" if borrow == "shared" else "e_excl"
                if implied == borrow and name not in [n for n, _, _ in inherited]:
                    self.error("CR-ANN-REDUNDANT", seen[name][1], annotation=name,
                               place=place or "?")
        init = REQUIRES
        if "e_init" in seen:
            init = INITIALIZES
        elif "e_uninit" in seen:
            init = MAYBE_UNINIT
        sentinel = seen["e_opt"][0] if "e_opt" in seen else None
        resource_class = None
        if owning == "heap":
            resource_class = "heap-memory"
        elif owning:
            resource_class = f"{ctype.nominal}-resource" if ctype.nominal else "resource"
        return Contract(
            ctype=ctype,
            sentinel=sentinel,
            owning=owning,
            release=release,
            borrow=borrow,
            init=init,
            finalizes="e_fini" in seen and site != "typedef",
            values=values,
            props_in=tuple(seen["e_in"][0]) if "e_in" in seen else (),
            props_out=tuple(seen["e_out"][0]) if "e_out" in seen else (),
            resource_class=resource_class,
            explicit=bool(inline) or bool(inherited),
        )

    # typedefs and globals

    def typedef(self, td: ast.Typedef) -> None:
        if td.name in self.t.types:
            self.error("CR-ANN-CONFLICT", td.name_span or td.span,
                       detail=f"type '{td.name}' is defined more than once")
            return
        texpr = td.type
        anns = _flat(texpr.all_annotations())
        names = [n for n, _, _ in anns]
        for n in set(names):
            if names.count(n) > 1 and n not in ("e_val",):
                span = [s for m, _, s in anns if m == n][1]
                self.error("CR-ANN-CONFLICT", span, detail=f"'{n}' repeated on type '{td.name}'")
        ctype = self.full_type(texpr)
        parent = None
        parent_info = None
        if not texpr.pointers and texpr.array is None and isinstance(texpr.base, str) \
                and texpr.base in self.t.types:
            parent = texpr.base
            parent_info = self.t.types[parent]
        nominal = td.name if "e_type" in names else (parent_info.nominal if parent_info else None)
        values = parent_info.values if parent_info else None
        for n, args, _ in anns:
            if n == "e_val":
                mi = mi_from_predicate(args)
                values = mi if values is None else values.meet(mi)
        fini = "e_fini" in names or bool(parent_info and parent_info.fini_required)
        unsafe = set(parent_info.unsafe) if parent_info else set()
        unsafe |= {args for n, args, _ in anns if n == "e_unsafe"}
        slot = tuple(parent_info.slot) if parent_info else ()
        slot += tuple(a for a in anns if a[0] in SLOT_ANNOTATIONS and a[0] != "e_val"
                      and not (a[0] == "e_fini"))
        ctype = replace(ctype, typedef=td.name, nominal=nominal)
        if ctype.kind == "struct" and fini and ctype.name in self.t.structs:
            s = self.t.structs[ctype.name]
            self.t.structs[ctype.name] = replace(s, fini_required=True)
        annotated = bool(anns) or bool(parent_info and parent_info.annotated)
        self.t.types[td.name] = TypeInfo(td.name, ctype, parent, nominal, values,
                                         frozenset(unsafe), fini, slot, annotated)

    def global_annotation(self, g: ast.GlobalAnnotation) -> None:
        a = g.annotation
        if a.malformed:
            return
        if a.name == "e_bop":
            result, lhs, op, rhs = a.args
            if self.check_types(a, (result, lhs, rhs)):
                key = (op, lhs, rhs)
                if key in self.t.binops and self.t.binops[key] != result:
                    self.error("CR-ANN-CONFLICT", a.span,
                               detail=f"operation '{lhs} {op} {rhs}' declared with two result types")
                self.t.binops[key] = result
        elif a.name == "e_uop":
            result, op, operand = a.args
            if self.check_types(a, (result, operand)):
                key = (op, operand)
                if key in self.t.unops and self.t.unops[key] != result:
                    self.error("CR-ANN-CONFLICT", a.span,
                               detail=f"operation '{op}{operand}' declared with two result types")
                self.t.unops[key] = result
        elif a.name == "e_declprops":
            target, props = a.args
            if not self.check_types(a, (target,)):
                return
            self.declare_props(target, props)

    def declare_props(self, target: str, props: list) -> None:
        props = [p for p in props if not p.malformed]
        kinds = frozenset(p.args for p in props if p.name == "e_unsafe")
        fini = any(p.name == "e_fini" for p in props)
        self.t.declared_props.setdefault(target, []).extend(props)
        if target in self.t.types:
            info = self.t.types[target]
            self.t.types[target] = replace(info, unsafe=info.unsafe | kinds,
                                           fini_required=info.fini_required or fini,
                                           annotated=True)
            ctype = info.ctype
            if ctype.kind == "struct" and ctype.name in self.t.structs:
                s = self.t.structs[ctype.name]
                self.t.structs[ctype.name] = replace(s, unsafe=s.unsafe | kinds,
                                                     fini_required=s.fini_required or fini)
        else:
            key = target if target.startswith("struct ") else f"struct {target}"
            s = self.t.structs.get(key, StructInfo(key, ()))
            self.t.structs[key] = replace(s, unsafe=s.unsafe | kinds,
                                          fini_required=s.fini_required or fini)

    def check_types(self, a: ast.Annotation, names) -> bool:
        ok = True
        for n in names:
            if n in self.t.types or n in _SCALARS or " ".join(n.split()) in _SCALARS:
                continue
            if n.startswith("struct ") and n in self.t.structs:
                continue
            self.error("CR-ANN-UNKNOWN-TYPE", a.span, annotation=a.name, type=n)
            ok = False
        return ok

    # functions

    def signature(self, decl: ast.FunctionDecl) -> AnnotatedSignature:
        ret_anns = decl.ret.all_annotations()
        unsafe = frozenset(a.args for a in ret_anns if a.name == "e_unsafe" and not a.malformed)
        ret_texpr = decl.ret
        ret = self.contract(ret_texpr, "return", decl.span)
        for name in ("e_init", "e_in"):
            if any(a.name == name for a in ret_anns):
                a = next(a for a in ret_anns if a.name == name)
                self.error("CR-ANN-CONFLICT", a.span,
                           detail=f"'{name}' is not meaningful on a return type")
        params = []
        names = []
        annotated = ret.explicit or bool(unsafe)
        for i, p in enumerate(decl.params):
            c = self.contract(p.type, "param", p.span, p.name or f"#{i + 1}")
            params.append(c)
            names.append(p.name or f"#{i + 1}")
            annotated = annotated or c.explicit or self.type_annotated(c.ctype)
        annotated = annotated or self.type_annotated(ret.ctype)
        return AnnotatedSignature(decl.name, tuple(params), tuple(names), ret, unsafe,
                                  annotated, decl.span)

    def type_annotated(self, t: CType | None) -> bool:
        while t is not None:
            if t.typedef and t.typedef in self.t.types and self.t.types[t.typedef].annotated:
                return True
            if t.kind == "struct" and t.name in self.t.structs:
                s = self.t.structs[t.name]
                if s.unsafe or s.fini_required:
                    return True
            t = t.target
        return False


def build_annotation_tables(unit: ast.TranslationUnit, models=None,
                            libs: set | None = None) -> tuple[Tables, dict, list]:
    """Flatten typedef chains and collect signatures and operation tables.

    ``models`` (a library model) seeds the tables with built-in types and
    function contracts for the activated ``libs``.
    """
    tables = Tables()
    from crusted.frontend.includes import BUILTIN_CONSTANTS

    tables.constants.update(BUILTIN_CONSTANTS)
    if models is not None:
        models.install(tables, libs if libs is not None else set(models.libraries))
    r = Resolver(tables)
    user_sigs: dict[str, AnnotatedSignature] = {}
    for item in unit.items:
        if isinstance(item, ast.Typedef):
            r.typedef(item)
        elif isinstance(item, ast.StructDef):
            name = f"struct {item.struct.tag}"
            if item.struct.members is not None:
                r.define_struct(name, item.struct)
        elif isinstance(item, ast.EnumDef):
            tables.constants.update(item.values)
        elif isinstance(item, ast.GlobalAnnotation):
            r.global_annotation(item)
        elif isinstance(item, (ast.FunctionDecl, ast.FunctionDef)):
            decl = item if isinstance(item, ast.FunctionDecl) else item.decl
            sig = r.signature(decl)
            prev = user_sigs.get(decl.name)
            if prev is not None and _contract_key(prev) != _contract_key(sig) and sig.annotated \
                    and prev.annotated:
                r.error("CR-ANN-CONFLICT", decl.name_span,
                        detail=f"'{decl.name}' is redeclared with different annotations")
            if prev is None or sig.annotated:
                user_sigs[decl.name] = sig
        elif isinstance(item, ast.VarDecl):
            tables.globals[item.name] = r.contract(item.type, "global", item.span, item.name)
    for name, sig in user_sigs.items():
        model = tables.signatures.get(name)
        if model is not None:
            merged, detail = merge_with_model(sig, model)
            if detail:
                r.error("CR-MODEL-CONFLICT", sig.span, function=name, detail=detail)
            tables.signatures[name] = merged
        else:
            tables.signatures[name] = sig
    return tables, dict(tables.signatures), r.diags


def _contract_key(sig: AnnotatedSignature) -> tuple:
    def ck(c: Contract):
        return (c.sentinel, c.owning, c.release, c.borrow, c.init, c.finalizes, c.values,
                c.props_in, c.props_out, c.nominal)
    return (tuple(ck(c) for c in sig.params), ck(sig.ret), sig.unsafe)


def merge_with_model(user: AnnotatedSignature, model: AnnotatedSignature):
    """Combine a user declaration with the library model of the same function.

    A consistent declaration keeps the model's contract; a contradicting one
    wins (models never override explicit annotations) and the conflict is
    reported. Returns (signature, conflict detail or None).
    """
    if len(user.params) != len(model.params):
        return model, f"expected {len(model.params)} parameters, found {len(user.params)}"
    if not user.annotated:
        return replace(model, span=user.span), None
    for i, (u, m) in enumerate(zip(user.params, model.params)):
        detail = _contract_conflict(u, m)
        if detail:
            return user, f"parameter {i + 1}: {detail}"
    detail = _contract_conflict(user.ret, model.ret)
    if detail:
        return user, f"return type: {detail}"
    return replace(model, span=user.span, unsafe=model.unsafe | user.unsafe), None


def _contract_conflict(u: Contract, m: Contract) -> str | None:
    if not u.explicit:
        return None
    if u.sentinel != m.sentinel:
        return f"optional sentinel {u.sentinel} differs from {m.sentinel}"
    if bool(u.owning) != bool(m.owning):
        return "ownership differs"
    if u.release != m.release:
        return "release differs"
    if u.values is not None and m.values is not None and u.values != m.values:
        return f"value set {u.values} differs from {m.values}"
    if u.nominal != m.nominal:
        return f"nominal type {u.nominal} differs from {m.nominal}"
    return None


def effective_parameter_contract(param: ast.Param, tables: Tables) -> tuple[Contract, list]:
    """Resolve one parameter declaration against already built tables."""
    r = Resolver(tables)
    c = r.contract(param.type, "param", param.span, param.name)
    return c, r.diags


# --- compile-neutral header ----------------------------------------------------

_HEADER_GUARD = "CRUSTED_H"


def emit_crusted_header() -> str:
    """Header that makes every annotation vanish under a standard preprocessor."""
    lines = [
        "/* C-rusted annotations: all expand to nothing for the C compiler. */",
        f"#ifndef {_HEADER_GUARD}",
        f"#define {_HEADER_GUARD}",
        "",
    ]
    for name in OBJECT_LIKE:
        lines.append(f"#define {name}")
    lines.append("")
    for name in FUNCTION_LIKE:
        if name in GLOBAL:
            continue
        lines.append(f"#define {name}(...)")
    lines.append("")
    lines.append("/* File-scope annotations become a harmless declaration. */")
    for name in GLOBAL:
        lines.append(f"#define {name}(...) extern int e_crusted_global_annotation")
    lines.append("")
    lines.append(f"#endif /* {_HEADER_GUARD} */")
    return "\n".join(lines) + "\n"
