"""Source buffers and spans."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class Span:
    """A byte range in a source file. ``line`` and ``col`` are 1-based."""

    file: str
    line: int
    col: int
    offset: int = 0
    length: int = 0

    @property
    def end(self) -> int:
        return self.offset + self.length

    def cover(self, other: Span) -> Span:
        """Smallest span containing both ``self`` and ``other``."""
        first, last = (self, other) if self.offset <= other.offset else (other, self)
        end = max(self.end, other.end)
        return Span(first.file, first.line, first.col, first.offset, end - first.offset)

    def contains(self, other: Span) -> bool:
        return self.offset <= other.offset and other.end <= self.end

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


class SourceMap:
    """Keeps the text of every analysed file so renderers can quote lines."""

    def __init__(self) -> None:
        self._files: dict[str, str] = {}

    def add(self, file: str, text: str) -> None:
        self._files[file] = text

    def text(self, file: str) -> str | None:
        return self._files.get(file)

    def line(self, file: str, line: int) -> str | None:
        text = self._files.get(file)
        if text is None:
            return None
        lines = text.splitlines()
        if 1 <= line <= len(lines):
            return lines[line - 1]
        return None
