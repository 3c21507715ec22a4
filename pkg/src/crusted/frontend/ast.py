"""Syntax tree for the supported C subset.

Every node carries a ``span``. Annotations are kept as first-class nodes at
the grammar position where they were written.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from crusted.source import Span


# --- annotations -----------------------------------------------------------

@dataclass
class PredGeq:
    value: float | int
    span: Span


@dataclass
class PredRange:
    lo: float | int
    hi: float | int
    span: Span


@dataclass
class PredEq:
    value: float | int
    span: Span


@dataclass
class PredOr:
    options: list
    span: Span


ValuePredicate = Union[PredGeq, PredRange, PredEq, PredOr]


@dataclass
class Annotation:
    """One annotation occurrence.

    ``args`` depends on ``name``: a sentinel constant for e_opt, a value
    predicate for e_val, ``(key, value)`` pairs for e_in/e_out, a string for
    the unsafety family, type names and an operator for e_bop/e_uop, and
    ``(type name, [Annotation])`` for e_declprops. ``tokens`` are the
    lexemes as written, for printing.
    """

    name: str
    args: object
    span: Span
    tokens: tuple = ()
    malformed: bool = False  # arguments were rejected; the annotation is ignored


# --- types -----------------------------------------------------------------

@dataclass
class StructDecl:
    tag: str | None
    members: list | None  # list[VarDecl] when a body is given
    span: Span


@dataclass
class PointerLevel:
    const: bool
    restrict: bool
    annotations: list
    span: Span


@dataclass
class TypeExpr:
    """Declaration specifiers plus the pointer part of a declarator.

    ``base`` is the base-type keyword sequence (``"unsigned int"``), a
    typedef name, or a struct.
    """

    base: str | StructDecl
    const: bool
    annotations: list
    pointers: list
    span: Span
    array: object = None  # one-dimensional array size expression
    const_after: bool = False  # written ``char const`` rather than ``const char``
    enum: bool = False

    def all_annotations(self) -> list:
        out = list(self.annotations)
        for p in self.pointers:
            out.extend(p.annotations)
        return out


# --- expressions -----------------------------------------------------------

@dataclass
class Name:
    ident: str
    span: Span


@dataclass
class IntLit:
    value: int
    text: str
    span: Span
    unsigned: bool = False


@dataclass
class FloatLit:
    value: float
    text: str
    span: Span


@dataclass
class CharLit:
    value: int
    text: str
    span: Span


@dataclass
class StrLit:
    text: str
    span: Span


@dataclass
class Paren:
    expr: object
    span: Span


@dataclass
class Unary:
    op: str  # - + ! ~ & * ++ -- (prefix)
    operand: object
    span: Span


@dataclass
class Postfix:
    op: str  # ++ --
    operand: object
    span: Span


@dataclass
class Binary:
    op: str
    lhs: object
    rhs: object
    span: Span


@dataclass
class Assign:
    target: object
    value: object
    span: Span


@dataclass
class Call:
    func: str
    func_span: Span
    args: list
    span: Span


@dataclass
class Index:
    base: object
    index: object
    span: Span


@dataclass
class Member:
    base: object
    name: str
    arrow: bool
    span: Span


@dataclass
class Cast:
    type: TypeExpr
    operand: object
    span: Span


Expr = Union[Name, IntLit, FloatLit, CharLit, StrLit, Paren, Unary, Postfix,
             Binary, Assign, Call, Index, Member, Cast]


# --- statements ------------------------------------------------------------

@dataclass
class VarDecl:
    type: TypeExpr
    name: str
    init: object
    span: Span
    name_span: Span | None = None
    storage: tuple = ()


@dataclass
class ExprStmt:
    expr: object
    span: Span


@dataclass
class If:
    cond: object
    then: object
    orelse: object
    span: Span


@dataclass
class While:
    cond: object
    body: object
    span: Span


@dataclass
class Return:
    value: object
    span: Span


@dataclass
class Block:
    items: list
    span: Span
    annotations: list = field(default_factory=list)  # e_checked / e_unchecked
    braced: bool = True


@dataclass
class Empty:
    span: Span


Stmt = Union[VarDecl, ExprStmt, If, While, Return, Block, Empty]


# --- top level -------------------------------------------------------------

@dataclass
class Include:
    header: str
    angled: bool
    span: Span


@dataclass
class Define:
    name: str
    body: list  # list[Token]
    span: Span


@dataclass
class Typedef:
    type: TypeExpr
    name: str
    span: Span
    name_span: Span | None = None


@dataclass
class StructDef:
    struct: StructDecl
    span: Span


@dataclass
class EnumDef:
    tag: str | None
    constants: list  # list[(name, value expression or None)]
    values: dict
    span: Span


@dataclass
class GlobalAnnotation:
    annotation: Annotation
    span: Span


@dataclass
class Param:
    type: TypeExpr
    name: str | None
    span: Span


@dataclass
class FunctionDecl:
    ret: TypeExpr
    name: str
    params: list  # list[Param]
    span: Span
    name_span: Span
    storage: tuple = ()
    void_params: bool = False  # written ``f(void)``


@dataclass
class FunctionDef:
    decl: FunctionDecl
    body: Block
    span: Span


Item = Union[Include, Define, Typedef, StructDef, EnumDef, GlobalAnnotation,
             FunctionDecl, FunctionDef, VarDecl]


@dataclass
class TranslationUnit:
    file: str
    items: list
    errors: list = field(default_factory=list)  # list[Diagnostic]

    def functions(self) -> list:
        return [i for i in self.items if isinstance(i, FunctionDef)]
