"""Tokenizer for the supported C subset with embedded annotations."""

from __future__ import annotations

from dataclasses import dataclass

from crusted import diagnostics
from crusted.registry import ANNOTATION_NAMES
from crusted.source import Span

IDENT = "identifier"
KEYWORD = "keyword"
PUNCT = "punctuator"
INT = "integer-literal"
FLOAT = "floating-literal"
STRING = "string-literal"
CHAR = "char-literal"
ANNOT = "annotation-name"

KEYWORDS = frozenset("""
    typedef struct enum union extern static const restrict volatile inline
    void char short int long signed unsigned float double _Bool
    if else while for do switch case default goto break continue return sizeof
""".split())

_PUNCTS = sorted("""
    ... <<= >>= -> ++ -- << >> <= >= == != && || += -= *= /= %= &= |= ^= ##
    [ ] ( ) { } . & * + - ~ ! / % < > ^ | ? : ; = , #
""".split(), key=len, reverse=True)


@dataclass(frozen=True)
class Token:
    kind: str
    lexeme: str
    span: Span

    def is_(self, kind: str, lexeme: str | None = None) -> bool:
        return self.kind == kind and (lexeme is None or self.lexeme == lexeme)

    def __repr__(self) -> str:
        return f"Token({self.kind}, {self.lexeme!r}, {self.span.line}:{self.span.col})"


class LexError(Exception):
    def __init__(self, diag: diagnostics.Diagnostic):
        super().__init__(diag.message)
        self.diagnostic = diag


class _Cursor:
    def __init__(self, text: str, file: str):
        self.text = text
        self.file = file
        self.pos = 0
        self.line = 1
        self.col = 1

    def peek(self, k: int = 0) -> str:
        i = self.pos + k
        return self.text[i] if i < len(self.text) else ""

    def advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos >= len(self.text):
                return
            if self.text[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def span_from(self, line: int, col: int, start: int) -> Span:
        return Span(self.file, line, col, start, self.pos - start)


def _lex_error(cur: _Cursor, line: int, col: int, start: int, detail: str) -> LexError:
    span = Span(cur.file, line, col, start, max(1, cur.pos - start))
    return LexError(diagnostics.make("CR-LEX", span, detail=detail))


def _skip_quoted(cur: _Cursor, quote: str, line: int, col: int, start: int) -> None:
    cur.advance()
    while True:
        ch = cur.peek()
        if ch == "" or ch == "\n":
            what = "string" if quote == '"' else "character"
            raise _lex_error(cur, line, col, start, f"unterminated {what} literal")
        if ch == "\\":
            cur.advance(2)
            continue
        cur.advance()
        if ch == quote:
            return


def tokenize(source: str, file: str = "<input>") -> list[Token]:
    """Split ``source`` into tokens; comments and whitespace are dropped."""
    cur = _Cursor(source, file)
    tokens: list[Token] = []
    while cur.pos < len(source):
        ch = cur.peek()
        if ch in " \t\r\n\f\v":
            cur.advance()
            continue
        line, col, start = cur.line, cur.col, cur.pos
        if ch == "/" and cur.peek(1) == "/":
            while cur.peek() not in ("", "\n"):
                cur.advance()
            continue
        if ch == "/" and cur.peek(1) == "*":
            cur.advance(2)
            while not (cur.peek() == "*" and cur.peek(1) == "/"):
                if cur.peek() == "":
                    raise _lex_error(cur, line, col, start, "unterminated comment")
                cur.advance()
            cur.advance(2)
            continue
        if ch.isalpha() or ch == "_":
            while cur.peek().isalnum() or cur.peek() == "_":
                cur.advance()
            word = source[start:cur.pos]
            if word in KEYWORDS:
                kind = KEYWORD
            elif word in ANNOTATION_NAMES:
                kind = ANNOT
            else:
                kind = IDENT
            tokens.append(Token(kind, word, cur.span_from(line, col, start)))
            continue
        if ch.isdigit() or (ch == "." and cur.peek(1).isdigit()):
            kind = INT
            if ch == "0" and cur.peek(1) in "xX":
                cur.advance(2)
                while cur.peek().isalnum():
                    cur.advance()
            else:
                while cur.peek().isdigit():
                    cur.advance()
                if cur.peek() == ".":
                    kind = FLOAT
                    cur.advance()
                    while cur.peek().isdigit():
                        cur.advance()
                if cur.peek() in ("e", "E"):
                    kind = FLOAT
                    cur.advance()
                    if cur.peek() in ("+", "-"):
                        cur.advance()
                    while cur.peek().isdigit():
                        cur.advance()
                while cur.peek().isalpha():
                    cur.advance()
            tokens.append(Token(kind, source[start:cur.pos], cur.span_from(line, col, start)))
            continue
        if ch in ('"', "'"):
            _skip_quoted(cur, ch, line, col, start)
            kind = STRING if ch == '"' else CHAR
            tokens.append(Token(kind, source[start:cur.pos], cur.span_from(line, col, start)))
            continue
        for p in _PUNCTS:
            if source.startswith(p, cur.pos):
                cur.advance(len(p))
                tokens.append(Token(PUNCT, p, cur.span_from(line, col, start)))
                break
        else:
            cur.advance()
            raise _lex_error(cur, line, col, start, f"illegal character {ch!r}")
    return tokens
