"""Recursive-descent parser for the supported C subset."""

from __future__ import annotations

from dataclasses import replace

from crusted import diagnostics
from crusted.frontend import ast
from crusted.frontend.includes import BUILTIN_CONSTANTS, HEADER_TYPE_NAMES, KNOWN_HEADERS
from crusted.frontend.lexer import (ANNOT, CHAR, FLOAT, IDENT, INT, KEYWORD, PUNCT,
                                    STRING, Token, tokenize)
from crusted.registry import FUNCTION_LIKE, GLOBAL, OBJECT_LIKE, PREDICATES
from crusted.source import Span

BASE_TYPE_KEYWORDS = frozenset(
    "void char short int long signed unsigned float double _Bool".split())
BUILTIN_TYPE_NAMES = frozenset({"bool", "size_t", "ssize_t"})
UNSUPPORTED_KEYWORDS = frozenset(
    "for do switch case default goto break continue sizeof union volatile".split())

BINARY_PREC = {
    "||": 1, "&&": 2, "|": 3, "^": 4, "&": 5, "==": 6, "!=": 6,
    "<": 7, ">": 7, "<=": 7, ">=": 7, "<<": 8, ">>": 8,
    "+": 9, "-": 9, "*": 10, "/": 10, "%": 10,
}
COMPOUND_ASSIGN = frozenset("+= -= *= /= %= &= |= ^= <<= >>=".split())
UNARY_OPS = frozenset("++ -- & * - + ! ~".split())
OPERATOR_LEXEMES = frozenset(BINARY_PREC) | frozenset("++ -- ! ~".split())
STATEMENT_ANNOTATIONS = ("e_checked", "e_unchecked")


class ParseError(Exception):
    def __init__(self, diag: diagnostics.Diagnostic):
        super().__init__(diag.message)
        self.diagnostic = diag


def int_literal_value(text: str) -> tuple[int, bool]:
    body = text.rstrip("uUlL")
    suffix = text[len(body):]
    if body[:2] in ("0x", "0X"):
        value = int(body[2:], 16)
    elif len(body) > 1 and body.startswith("0"):
        value = int(body, 8)
    else:
        value = int(body)
    return value, "u" in suffix.lower()


_ESCAPES = {"n": 10, "t": 9, "r": 13, "0": 0, "\\": 92, "'": 39, '"': 34,
            "a": 7, "b": 8, "f": 12, "v": 11}


def char_literal_value(text: str) -> int:
    inner = text[1:-1]
    if inner.startswith("\\"):
        esc = inner[1:]
        if esc[:1] in "01234567" and len(esc) > 1:
            return int(esc, 8)
        if esc.startswith("x"):
            return int(esc[1:], 16)
        return _ESCAPES.get(esc, ord(esc[:1] or "\0"))
    return ord(inner[:1]) if inner else 0


class Parser:
    def __init__(self, tokens: list[Token], file: str = "<input>",
                 type_names: set[str] | None = None, constants: dict | None = None):
        self.toks = list(tokens)
        self.file = file
        self.i = 0
        self.errors: list[diagnostics.Diagnostic] = []
        self.type_names = set(BUILTIN_TYPE_NAMES) if type_names is None else type_names
        self.constants = dict(BUILTIN_CONSTANTS) if constants is None else constants
        self.prev: Span | None = None

    # -- token helpers ------------------------------------------------------

    def peek(self, k: int = 0) -> Token | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, kind: str, lexeme: str | None = None, k: int = 0) -> bool:
        t = self.peek(k)
        return t is not None and t.is_(kind, lexeme)

    def at_punct(self, lexeme: str, k: int = 0) -> bool:
        return self.at(PUNCT, lexeme, k)

    def at_kw(self, lexeme: str, k: int = 0) -> bool:
        return self.at(KEYWORD, lexeme, k)

    def next(self) -> Token:
        t = self.peek()
        if t is None:
            raise self.error("unexpected end of input")
        self.i += 1
        self.prev = t.span
        return t

    def accept(self, kind: str, lexeme: str | None = None) -> Token | None:
        if self.at(kind, lexeme):
            return self.next()
        return None

    def expect(self, kind: str, lexeme: str | None = None, what: str | None = None) -> Token:
        t = self.peek()
        if t is not None and t.is_(kind, lexeme):
            return self.next()
        want = what or (f"'{lexeme}'" if lexeme else kind)
        got = f"'{t.lexeme}'" if t is not None else "end of input"
        raise self.error(f"expected {want}, found {got}", t)

    def here(self) -> Span:
        t = self.peek()
        if t is not None:
            return t.span
        if self.prev is not None:
            return Span(self.file, self.prev.line, self.prev.col + self.prev.length, self.prev.end, 0)
        return Span(self.file, 1, 1, 0, 0)

    def span_from(self, start: Span) -> Span:
        if self.prev is None or self.prev.offset < start.offset:
            return start
        return start.cover(self.prev)

    def error(self, detail: str, tok: Token | None = None) -> ParseError:
        span = tok.span if tok is not None else self.here()
        return ParseError(diagnostics.make("CR-PARSE", span, detail=detail))

    def ann_error(self, name: str, detail: str, tok: Token | None = None) -> ParseError:
        span = tok.span if tok is not None else self.here()
        return ParseError(diagnostics.make("CR-ANN-ARG", span, annotation=name, detail=detail))

    # -- translation unit -----------------------------------------------------

    def parse_translation_unit(self) -> ast.TranslationUnit:
        items = []
        while self.peek() is not None:
            start = self.i
            try:
                item = self.parse_item()
                if item is not None:
                    items.append(item)
            except ParseError as e:
                self.errors.append(e.diagnostic)
                if self.i == start:
                    self.i += 1
                self.sync_top()
        return ast.TranslationUnit(self.file, items, list(self.errors))

    def sync_top(self) -> None:
        depth = 0
        while self.peek() is not None:
            t = self.next()
            if t.is_(PUNCT, "{"):
                depth += 1
            elif t.is_(PUNCT, "}"):
                depth -= 1
                if depth <= 0:
                    if self.at_punct(";"):
                        self.next()
                    return
            elif t.is_(PUNCT, ";") and depth <= 0:
                return

    def first_on_line(self) -> bool:
        if self.i == 0:
            return True
        return self.toks[self.i - 1].span.line != self.toks[self.i].span.line

    def parse_item(self):
        t = self.peek()
        if t.is_(PUNCT, "#"):
            if not self.first_on_line():
                raise self.error("stray '#'", t)
            return self.parse_directive()
        if t.kind == ANNOT and t.lexeme in GLOBAL:
            ann = self.parse_annotation()
            self.expect(PUNCT, ";")
            return ast.GlobalAnnotation(ann, self.span_from(ann.span))
        if t.kind == ANNOT:
            raise self.error(f"annotation '{t.lexeme}' is not allowed at file scope", t)
        start = t.span
        storage = self.parse_storage()
        if self.accept(KEYWORD, "typedef"):
            return self.parse_typedef(start)
        specs = self.parse_specifiers()
        if self.at_punct(";") and isinstance(specs.base, ast.StructDecl) and not specs.pointers:
            self.next()
            return ast.StructDef(specs.base, self.span_from(start))
        if self.at_punct(";") and specs.enum:
            self.next()
            return self._enum_item
        self.parse_pointers(specs)
        name_tok = self.expect(IDENT, what="declarator name")
        if self.at_punct("("):
            decl = self.parse_function_rest(specs, name_tok, storage, start)
            if self.at_punct("{"):
                body = self.parse_block()
                return ast.FunctionDef(decl, body, self.span_from(start))
            self.expect(PUNCT, ";")
            return decl
        self.parse_array(specs)
        init = None
        if self.accept(PUNCT, "="):
            init = self.parse_assign()
        self.expect(PUNCT, ";")
        return ast.VarDecl(specs, name_tok.lexeme, init, self.span_from(start),
                           name_tok.span, storage)

    def parse_storage(self) -> tuple:
        storage = []
        while self.peek() is not None and self.peek().kind == KEYWORD and \
                self.peek().lexeme in ("extern", "static", "inline"):
            storage.append(self.next().lexeme)
        return tuple(storage)

    def parse_directive(self) -> ast.Include | ast.Define | None:
        hash_tok = self.next()
        line = hash_tok.span.line
        words = []
        while self.peek() is not None and self.peek().span.line == line:
            words.append(self.next())
        span = self.span_from(hash_tok.span)
        if not words:
            raise self.error("empty preprocessing directive", hash_tok)
        head = words[0].lexeme
        if head == "include":
            rest = words[1:]
            if len(rest) == 1 and rest[0].kind == STRING:
                return ast.Include(rest[0].lexeme[1:-1], False, span)
            if len(rest) >= 3 and rest[0].is_(PUNCT, "<") and rest[-1].is_(PUNCT, ">"):
                header = "".join(w.lexeme for w in rest[1:-1])
                lib = KNOWN_HEADERS.get(header)
                for name in HEADER_TYPE_NAMES.get(lib, ()):
                    self.type_names.add(name)
                return ast.Include(header, True, span)
            raise self.error("malformed #include", hash_tok)
        if head == "define":
            if len(words) < 2 or words[1].kind not in (IDENT, ANNOT):
                raise self.error("malformed #define", hash_tok)
            name_tok = words[1]
            body = words[2:]
            if body and body[0].is_(PUNCT, "(") and body[0].span.offset == name_tok.span.end:
                raise self.error("function-like macros are not supported", name_tok)
            self.substitute(name_tok.lexeme, body)
            return ast.Define(name_tok.lexeme, body, span)
        raise self.error(f"unsupported preprocessing directive '#{head}'", hash_tok)

    def substitute(self, name: str, body: list[Token]) -> None:
        out = self.toks[:self.i]
        for t in self.toks[self.i:]:
            if t.lexeme == name and t.kind in (IDENT, ANNOT):
                out.extend(replace(b, span=t.span) for b in body)
            else:
                out.append(t)
        self.toks = out

    def parse_typedef(self, start: Span) -> ast.Typedef:
        specs = self.parse_specifiers()
        self.parse_pointers(specs)
        name_tok = self.expect(IDENT, what="typedef name")
        self.parse_array(specs)
        self.expect(PUNCT, ";")
        self.type_names.add(name_tok.lexeme)
        return ast.Typedef(specs, name_tok.lexeme, self.span_from(start), name_tok.span)

    # -- types --------------------------------------------------------------

    def is_type_start(self, k: int = 0) -> bool:
        t = self.peek(k)
        if t is None:
            return False
        if t.kind == KEYWORD:
            return t.lexeme in BASE_TYPE_KEYWORDS or t.lexeme in ("const", "struct", "enum")
        return t.kind == IDENT and t.lexeme in self.type_names

    def parse_specifiers(self, allow_annotations: bool = True) -> ast.TypeExpr:
        start = self.here()
        const = False
        const_after = False
        words: list[str] = []
        base: str | ast.StructDecl | None = None
        annotations = []
        enum = False
        while True:
            t = self.peek()
            if t is None:
                break
            if t.is_(KEYWORD, "const"):
                self.next()
                const = True
                const_after = base is not None or bool(words)
            elif t.kind == KEYWORD and t.lexeme in BASE_TYPE_KEYWORDS and base is None:
                words.append(self.next().lexeme)
            elif t.is_(KEYWORD, "struct") and base is None and not words:
                base = self.parse_struct()
            elif t.is_(KEYWORD, "enum") and base is None and not words:
                base = self.parse_enum()
                enum = True
            elif t.kind == IDENT and t.lexeme in self.type_names and base is None and not words:
                base = self.next().lexeme
            elif t.kind == ANNOT and (base is not None or words) and t.lexeme not in GLOBAL \
                    and t.lexeme not in STATEMENT_ANNOTATIONS:
                if not allow_annotations:
                    raise self.error("annotations are not allowed in a cast", t)
                annotations.append(self.parse_annotation())
            elif t.kind == KEYWORD and t.lexeme in UNSUPPORTED_KEYWORDS:
                raise self.error(f"'{t.lexeme}' is not supported", t)
            else:
                break
        if base is None:
            if not words:
                raise self.error("expected a type", self.peek())
            base = " ".join(words)
        return ast.TypeExpr(base, const, annotations, [], self.span_from(start),
                            const_after=const_after, enum=enum)

    def parse_pointers(self, specs: ast.TypeExpr, allow_annotations: bool = True) -> None:
        while self.at_punct("*"):
            star = self.next()
            const = restrict = False
            anns = []
            while True:
                if self.accept(KEYWORD, "const"):
                    const = True
                elif self.accept(KEYWORD, "restrict"):
                    restrict = True
                elif self.peek() is not None and self.peek().kind == ANNOT and \
                        self.peek().lexeme not in GLOBAL:
                    if not allow_annotations:
                        raise self.error("annotations are not allowed in a cast", self.peek())
                    anns.append(self.parse_annotation())
                else:
                    break
            specs.pointers.append(ast.PointerLevel(const, restrict, anns, self.span_from(star.span)))
        specs.span = self.span_from(specs.span)

    def parse_array(self, specs: ast.TypeExpr) -> None:
        if self.accept(PUNCT, "["):
            size = None if self.at_punct("]") else self.parse_expr()
            self.expect(PUNCT, "]")
            specs.array = size if size is not None else ast.Empty(self.prev)
            if self.at_punct("["):
                raise self.error("multi-dimensional arrays are not supported")

    def parse_struct(self) -> ast.StructDecl:
        start = self.next().span
        tag = None
        if self.peek() is not None and self.peek().kind == IDENT:
            tag = self.next().lexeme
        members = None
        if self.accept(PUNCT, "{"):
            members = []
            while not self.at_punct("}"):
                mstart = self.here()
                specs = self.parse_specifiers()
                self.parse_pointers(specs)
                name_tok = self.expect(IDENT, what="member name")
                self.parse_array(specs)
                self.expect(PUNCT, ";")
                members.append(ast.VarDecl(specs, name_tok.lexeme, None,
                                           self.span_from(mstart), name_tok.span))
            self.expect(PUNCT, "}")
        elif tag is None:
            raise self.error("expected struct tag or body")
        return ast.StructDecl(tag, members, self.span_from(start))

    def parse_enum(self) -> str:
        start = self.next().span
        tag = None
        if self.peek() is not None and self.peek().kind == IDENT:
            tag = self.next().lexeme
        constants = []
        values = {}
        if self.accept(PUNCT, "{"):
            value = 0
            while not self.at_punct("}"):
                name = self.expect(IDENT, what="enumerator").lexeme
                expr = None
                if self.accept(PUNCT, "="):
                    expr = self.parse_binary(1)
                    value = self.const_eval(expr)
                constants.append((name, expr))
                values[name] = value
                self.constants[name] = value
                value += 1
                if not self.accept(PUNCT, ","):
                    break
            self.expect(PUNCT, "}")
        self._enum_item = ast.EnumDef(tag, constants, values, self.span_from(start))
        return f"enum {tag}" if tag else "enum"

    def const_eval(self, expr) -> int:
        if isinstance(expr, ast.IntLit) or isinstance(expr, ast.CharLit):
            return expr.value
        if isinstance(expr, ast.Paren):
            return self.const_eval(expr.expr)
        if isinstance(expr, ast.Unary) and expr.op in ("-", "+"):
            v = self.const_eval(expr.operand)
            return -v if expr.op == "-" else v
        if isinstance(expr, ast.Name) and expr.ident in self.constants:
            return self.constants[expr.ident]
        raise ParseError(diagnostics.make("CR-PARSE", expr.span, detail="expected an integer constant"))

    def parse_function_rest(self, ret: ast.TypeExpr, name_tok: Token, storage: tuple,
                            start: Span) -> ast.FunctionDecl:
        self.expect(PUNCT, "(")
        params = []
        void_params = False
        if self.at_kw("void") and self.at_punct(")", 1):
            self.next()
            void_params = True
        elif not self.at_punct(")"):
            while True:
                pstart = self.here()
                if self.at_punct("..."):
                    raise self.error("variadic functions are not supported")
                specs = self.parse_specifiers()
                self.parse_pointers(specs)
                name = None
                if self.peek() is not None and self.peek().kind == IDENT:
                    name = self.next().lexeme
                self.parse_array(specs)
                params.append(ast.Param(specs, name, self.span_from(pstart)))
                if not self.accept(PUNCT, ","):
                    break
        self.expect(PUNCT, ")")
        return ast.FunctionDecl(ret, name_tok.lexeme, params, self.span_from(start),
                                name_tok.span, storage, void_params)

    # -- annotations ----------------------------------------------------------

    def parse_annotation(self) -> ast.Annotation:
        name_tok = self.expect(ANNOT, what="annotation")
        name = name_tok.lexeme
        if name in OBJECT_LIKE:
            if self.at_punct("(") and self.peek().span.offset == name_tok.span.end:
                raise self.ann_error(name, "takes no arguments", self.peek())
            return ast.Annotation(name, None, name_tok.span, (name,))
        if name in PREDICATES:
            raise self.ann_error(name, "only allowed inside e_val(...)", name_tok)
        if not self.at_punct("("):
            raise self.ann_error(name, "expected '('", self.peek())
        open_tok = self.next()
        depth = 1
        inner: list[Token] = []
        while True:
            t = self.peek()
            if t is None:
                raise self.ann_error(name, "unterminated argument list", open_tok)
            self.next()
            if t.is_(PUNCT, "("):
                depth += 1
            elif t.is_(PUNCT, ")"):
                depth -= 1
                if depth == 0:
                    break
            inner.append(t)
        span = self.span_from(name_tok.span)
        sub = Parser(inner, self.file, self.type_names, self.constants)
        sub.prev = open_tok.span
        tokens = (name, "(") + tuple(t.lexeme for t in inner) + (")",)
        try:
            args = sub.annotation_args(name, span)
        except ParseError as e:
            # The argument list is balanced, so the surrounding declaration
            # is still usable: keep it and drop only this annotation.
            self.errors.extend(sub.errors)
            self.errors.append(e.diagnostic)
            return ast.Annotation(name, None, span, tokens, malformed=True)
        self.errors.extend(sub.errors)
        return ast.Annotation(name, args, span, tokens)

    def annotation_args(self, name: str, span: Span):
        if not self.toks:
            raise self.ann_error(name, "missing arguments", None)
        if name == "e_opt":
            value = self.annotation_constant(name, allow_null=True)
        elif name == "e_val":
            value = self.predicate(name)
        elif name in ("e_in", "e_out"):
            value = self.property_list(name)
        elif name in ("e_unsafe", "e_checked", "e_unchecked"):
            tok = self.expect_ann(name, STRING, "a string literal")
            value = tok.lexeme[1:-1]
        elif name == "e_bop":
            result = self.type_name_arg(name)
            self.expect_ann(name, PUNCT, "','", ",")
            lhs = self.type_name_arg(name)
            self.expect_ann(name, PUNCT, "','", ",")
            op = self.operator_arg(name)
            self.expect_ann(name, PUNCT, "','", ",")
            rhs = self.type_name_arg(name)
            value = (result, lhs, op, rhs)
        elif name == "e_uop":
            result = self.type_name_arg(name)
            self.expect_ann(name, PUNCT, "','", ",")
            op = self.operator_arg(name)
            self.expect_ann(name, PUNCT, "','", ",")
            operand = self.type_name_arg(name)
            value = (result, op, operand)
        elif name == "e_declprops":
            target = self.type_name_arg(name)
            props = []
            while self.accept(PUNCT, ","):
                if self.peek() is None or self.peek().kind != ANNOT:
                    raise self.ann_error(name, "expected an annotation", self.peek())
                props.append(self.parse_annotation())
            if not props:
                raise self.ann_error(name, "expected at least one annotation", None)
            value = (target, props)
        else:  # pragma: no cover - registry and parser agree
            raise self.ann_error(name, "unknown annotation", None)
        if self.peek() is not None:
            raise self.ann_error(name, f"unexpected '{self.peek().lexeme}'", self.peek())
        return value

    def expect_ann(self, name: str, kind: str, what: str, lexeme: str | None = None) -> Token:
        t = self.peek()
        if t is not None and t.is_(kind, lexeme):
            return self.next()
        raise self.ann_error(name, f"expected {what}", t)

    def annotation_constant(self, name: str, allow_null: bool = False):
        neg = bool(self.accept(PUNCT, "-"))
        t = self.peek()
        if t is None:
            raise self.ann_error(name, "expected a constant", None)
        if t.kind == INT:
            self.next()
            value = int_literal_value(t.lexeme)[0]
        elif t.kind == FLOAT:
            self.next()
            value = float(t.lexeme.rstrip("fFlL"))
        elif t.kind == IDENT and t.lexeme == "NULL" and allow_null and not neg:
            self.next()
            return "NULL"
        elif t.kind == IDENT and t.lexeme in self.constants:
            self.next()
            value = self.constants[t.lexeme]
        else:
            raise self.ann_error(name, f"expected a constant, found '{t.lexeme}'", t)
        return -value if neg else value

    def predicate(self, name: str):
        start = self.here()
        options = [self.predicate_atom(name)]
        while self.accept(PUNCT, "||"):
            options.append(self.predicate_atom(name))
        if len(options) == 1:
            return options[0]
        return ast.PredOr(options, self.span_from(start))

    def predicate_atom(self, name: str):
        t = self.peek()
        if t is not None and t.is_(PUNCT, "("):
            self.next()
            inner = self.predicate(name)
            self.expect_ann(name, PUNCT, "')'", ")")
            return inner
        if t is None or t.kind != ANNOT or t.lexeme not in PREDICATES:
            raise self.ann_error(name, "expected e_geq, e_range or e_eq", t)
        self.next()
        self.expect_ann(name, PUNCT, "'('", "(")
        if t.lexeme == "e_range":
            lo = self.annotation_constant(name)
            self.expect_ann(name, PUNCT, "','", ",")
            hi = self.annotation_constant(name)
            self.expect_ann(name, PUNCT, "')'", ")")
            if lo > hi:
                raise self.ann_error(name, f"empty range [{lo}, {hi}]", t)
            return ast.PredRange(lo, hi, self.span_from(t.span))
        value = self.annotation_constant(name)
        self.expect_ann(name, PUNCT, "')'", ")")
        cls = ast.PredGeq if t.lexeme == "e_geq" else ast.PredEq
        return cls(value, self.span_from(t.span))

    def property_list(self, name: str) -> tuple:
        pairs = []
        while True:
            key = self.peek()
            if key is None or key.kind not in (IDENT, KEYWORD):
                raise self.ann_error(name, "expected property name", key)
            self.next()
            self.expect_ann(name, PUNCT, "'='", "=")
            val = self.peek()
            if val is not None and val.is_(PUNCT, "?"):
                self.next()
                pairs.append((key.lexeme, "?"))
            elif val is not None and val.kind in (IDENT, KEYWORD, INT):
                self.next()
                pairs.append((key.lexeme, val.lexeme))
            else:
                raise self.ann_error(name, "expected property value or '?'", val)
            if not self.accept(PUNCT, ","):
                return tuple(pairs)

    def type_name_arg(self, name: str) -> str:
        words = []
        while self.peek() is not None and (
                (self.peek().kind == KEYWORD and self.peek().lexeme in BASE_TYPE_KEYWORDS)
                or (self.peek().kind == IDENT and not words)):
            words.append(self.next().lexeme)
        if not words:
            raise self.ann_error(name, "expected a type name", self.peek())
        return " ".join(words)

    def operator_arg(self, name: str) -> str:
        t = self.peek()
        if t is None or t.kind != PUNCT or t.lexeme not in OPERATOR_LEXEMES:
            raise self.ann_error(name, "expected an operator", t)
        return self.next().lexeme

    # -- statements -----------------------------------------------------------

    def parse_block(self) -> ast.Block:
        open_tok = self.expect(PUNCT, "{")
        items = []
        while not self.at_punct("}"):
            if self.peek() is None:
                raise self.error("expected '}'", None)
            start = self.i
            try:
                items.append(self.parse_statement())
            except ParseError as e:
                self.errors.append(e.diagnostic)
                if self.i == start:
                    self.i += 1
                self.sync_statement()
        self.expect(PUNCT, "}")
        return ast.Block(items, self.span_from(open_tok.span))

    def sync_statement(self) -> None:
        depth = 0
        while self.peek() is not None:
            t = self.peek()
            if t.is_(PUNCT, "}") and depth == 0:
                return
            self.next()
            if t.is_(PUNCT, "{"):
                depth += 1
            elif t.is_(PUNCT, "}"):
                depth -= 1
                if depth == 0:
                    return
            elif t.is_(PUNCT, ";") and depth == 0:
                return

    def parse_statement(self):
        t = self.peek()
        if t is None:
            raise self.error("expected a statement")
        start = t.span
        if t.is_(PUNCT, "{"):
            return self.parse_block()
        if t.kind == ANNOT and t.lexeme in STATEMENT_ANNOTATIONS:
            ann = self.parse_annotation()
            stmt = self.parse_statement()
            if isinstance(stmt, ast.Block) and stmt.braced:
                stmt.annotations.insert(0, ann)
                stmt.span = self.span_from(start)
                return stmt
            return ast.Block([stmt], self.span_from(start), [ann], braced=False)
        if t.kind == ANNOT:
            raise self.error(f"annotation '{t.lexeme}' is not allowed here", t)
        if t.is_(PUNCT, ";"):
            self.next()
            return ast.Empty(t.span)
        if t.kind == KEYWORD:
            if t.lexeme == "if":
                self.next()
                self.expect(PUNCT, "(")
                cond = self.parse_expr()
                self.expect(PUNCT, ")")
                then = self.parse_statement()
                orelse = None
                if self.accept(KEYWORD, "else"):
                    orelse = self.parse_statement()
                return ast.If(cond, then, orelse, self.span_from(start))
            if t.lexeme == "while":
                self.next()
                self.expect(PUNCT, "(")
                cond = self.parse_expr()
                self.expect(PUNCT, ")")
                body = self.parse_statement()
                return ast.While(cond, body, self.span_from(start))
            if t.lexeme == "return":
                self.next()
                value = None if self.at_punct(";") else self.parse_expr()
                span = self.span_from(start)
                self.expect(PUNCT, ";")
                return ast.Return(value, span)
            if t.lexeme in UNSUPPORTED_KEYWORDS or t.lexeme in ("static", "extern", "typedef"):
                raise self.error(f"'{t.lexeme}' is not supported in this C subset", t)
        if self.is_type_start():
            specs = self.parse_specifiers()
            self.parse_pointers(specs)
            name_tok = self.expect(IDENT, what="declarator name")
            self.parse_array(specs)
            init = None
            if self.accept(PUNCT, "="):
                init = self.parse_assign()
            if self.at_punct(","):
                raise self.error("multiple declarators in one declaration are not supported")
            self.expect(PUNCT, ";")
            return ast.VarDecl(specs, name_tok.lexeme, init, self.span_from(start), name_tok.span)
        expr = self.parse_expr()
        span = self.span_from(start)
        self.expect(PUNCT, ";")
        return ast.ExprStmt(expr, span)

    # -- expressions ----------------------------------------------------------

    def parse_expr(self):
        expr = self.parse_assign()
        if self.at_punct(","):
            raise self.error("the comma operator is not supported")
        return expr

    def parse_assign(self):
        lhs = self.parse_binary(1)
        t = self.peek()
        if t is not None and t.is_(PUNCT, "="):
            self.next()
            rhs = self.parse_assign()
            return ast.Assign(lhs, rhs, lhs.span.cover(rhs.span))
        if t is not None and t.kind == PUNCT and t.lexeme in COMPOUND_ASSIGN:
            raise self.error("compound assignment is not supported", t)
        if t is not None and t.is_(PUNCT, "?"):
            raise self.error("the conditional operator is not supported", t)
        return lhs

    def parse_binary(self, min_prec: int):
        lhs = self.parse_unary()
        while True:
            t = self.peek()
            if t is None or t.kind != PUNCT or t.lexeme not in BINARY_PREC:
                return lhs
            prec = BINARY_PREC[t.lexeme]
            if prec < min_prec:
                return lhs
            self.next()
            rhs = self.parse_binary(prec + 1)
            lhs = ast.Binary(t.lexeme, lhs, rhs, lhs.span.cover(rhs.span))

    def parse_unary(self):
        t = self.peek()
        if t is None:
            raise self.error("expected an expression")
        if t.kind == PUNCT and t.lexeme in UNARY_OPS:
            self.next()
            operand = self.parse_unary()
            return ast.Unary(t.lexeme, operand, t.span.cover(operand.span))
        if t.is_(PUNCT, "(") and self.is_type_start(1):
            self.next()
            specs = self.parse_specifiers(allow_annotations=False)
            self.parse_pointers(specs, allow_annotations=False)
            if self.peek() is not None and self.peek().kind == ANNOT:
                raise self.error("annotations are not allowed in a cast", self.peek())
            self.expect(PUNCT, ")")
            operand = self.parse_unary()
            return ast.Cast(specs, operand, t.span.cover(operand.span))
        if t.is_(KEYWORD, "sizeof"):
            raise self.error("'sizeof' is not supported", t)
        return self.parse_postfix()

    def parse_postfix(self):
        expr = self.parse_primary()
        while True:
            t = self.peek()
            if t is None:
                return expr
            if t.is_(PUNCT, "("):
                if not isinstance(expr, ast.Name):
                    raise self.error("only direct calls of named functions are supported", t)
                self.next()
                args = []
                if not self.at_punct(")"):
                    while True:
                        args.append(self.parse_assign())
                        if not self.accept(PUNCT, ","):
                            break
                self.expect(PUNCT, ")")
                expr = ast.Call(expr.ident, expr.span, args, self.span_from(expr.span))
            elif t.is_(PUNCT, "["):
                self.next()
                index = self.parse_expr()
                self.expect(PUNCT, "]")
                expr = ast.Index(expr, index, self.span_from(expr.span))
            elif t.is_(PUNCT, ".") or t.is_(PUNCT, "->"):
                self.next()
                name = self.expect(IDENT, what="member name")
                expr = ast.Member(expr, name.lexeme, t.lexeme == "->", self.span_from(expr.span))
            elif t.is_(PUNCT, "++") or t.is_(PUNCT, "--"):
                self.next()
                expr = ast.Postfix(t.lexeme, expr, self.span_from(expr.span))
            else:
                return expr

    def parse_primary(self):
        t = self.peek()
        if t is None:
            raise self.error("expected an expression")
        if t.kind == IDENT:
            self.next()
            return ast.Name(t.lexeme, t.span)
        if t.kind == INT:
            self.next()
            try:
                value, unsigned = int_literal_value(t.lexeme)
            except ValueError:
                raise self.error(f"malformed integer literal '{t.lexeme}'", t) from None
            return ast.IntLit(value, t.lexeme, t.span, unsigned)
        if t.kind == FLOAT:
            self.next()
            try:
                value = float(t.lexeme.rstrip("fFlL"))
            except ValueError:
                raise self.error(f"malformed floating literal '{t.lexeme}'", t) from None
            return ast.FloatLit(value, t.lexeme, t.span)
        if t.kind == CHAR:
            self.next()
            return ast.CharLit(char_literal_value(t.lexeme), t.lexeme, t.span)
        if t.kind == STRING:
            self.next()
            return ast.StrLit(t.lexeme, t.span)
        if t.is_(PUNCT, "("):
            self.next()
            inner = self.parse_expr()
            self.expect(PUNCT, ")")
            return ast.Paren(inner, self.span_from(t.span))
        if t.kind == ANNOT:
            raise self.error(f"annotation '{t.lexeme}' is not allowed in an expression", t)
        raise self.error(f"unexpected '{t.lexeme}'", t)


def parse_translation_unit(tokens: list[Token], file: str | None = None) -> ast.TranslationUnit:
    if file is None:
        file = tokens[0].span.file if tokens else "<input>"
    return Parser(tokens, file).parse_translation_unit()


def parse_source(source: str, file: str = "<input>") -> ast.TranslationUnit:
    return parse_translation_unit(tokenize(source, file), file)
