"""Lexing and parsing of annotated C sources."""

from crusted.frontend.includes import resolve_includes
from crusted.frontend.lexer import LexError, Token, tokenize
from crusted.frontend.parser import ParseError, parse_source, parse_translation_unit

__all__ = ["LexError", "ParseError", "Token", "parse_source", "parse_translation_unit",
           "resolve_includes", "tokenize"]
