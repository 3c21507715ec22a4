"""Recognition of library headers."""

from __future__ import annotations

from crusted import diagnostics
from crusted.frontend import ast

# header -> library name activated in the built-in models
KNOWN_HEADERS = {
    "fcntl.h": "fcntl",
    "unistd.h": "unistd",
    "stdlib.h": "stdlib",
    "stdio.h": "stdio",
    "errno.h": "errno",
    "string.h": "string",
    "crusted.h": "crusted",
    "stdbool.h": "stdbool",
    "stddef.h": "stddef",
}

_FD_TYPES = ("fd_t", "fd_own_t", "fd_opt_own_t")

# Type names a header makes available; the parser needs them to tell
# declarations from expressions.
HEADER_TYPE_NAMES = {
    "fcntl": _FD_TYPES,
    "unistd": _FD_TYPES,
    "stdio": ("FILE", "fp_t", "fp_own_t", "fp_opt_own_t"),
}


def resolve_includes(unit: ast.TranslationUnit) -> tuple[ast.TranslationUnit, set[str], list]:
    """Strip include directives, returning the libraries they activate."""
    libs: set[str] = set()
    diags = []
    items = []
    for item in unit.items:
        if not isinstance(item, ast.Include):
            items.append(item)
            continue
        lib = KNOWN_HEADERS.get(item.header)
        if lib is None:
            diags.append(diagnostics.make("CR-INCLUDE-UNKNOWN", item.span, header=item.header))
        else:
            libs.add(lib)
    resolved = ast.TranslationUnit(unit.file, items, list(unit.errors))
    return resolved, libs, diags


# Object-like constants available without a preprocessor. NULL is the null
# pointer constant and is handled separately.
BUILTIN_CONSTANTS = {
    "EOF": -1,
    "EBADF": 9,
    "O_RDONLY": 0,
    "true": 1,
    "false": 0,
}
