"""Shared helpers for locating and reading the test corpus."""

from __future__ import annotations

import re
from pathlib import Path

CORPUS = Path(__file__).parent / "corpus"
CODES = CORPUS / "codes"

_EXPECT = re.compile(r"// expect: (CR-[A-Z-]+) (\d+):(\d+)")


def corpus_files() -> list[Path]:
    return sorted(CORPUS.rglob("*.c"))


def code_files() -> list[Path]:
    return sorted(CODES.glob("*.c"))


def expectations(path: Path) -> list[tuple]:
    """``(code, line, col)`` triples declared by ``// expect:`` comments."""
    text = path.read_text(encoding="utf-8")
    return sorted((c, int(l), int(k)) for c, l, k in _EXPECT.findall(text))


def observed(diags) -> list[tuple]:
    return sorted((d.code, d.span.line, d.span.col) for d in diags)
