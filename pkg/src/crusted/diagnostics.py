"""Diagnostic catalog and text/JSON rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from crusted.source import SourceMap, Span

ERROR = "error"
WARNING = "warning"
NOTE = "note"

_SEVERITY_RANK = {NOTE: 0, WARNING: 1, ERROR: 2}


def _opt(p: dict) -> str:
    return f"'{p['place']}' may hold the optional value {p['sentinel']}"


# code -> (default severity, message builder). Codes are never renumbered.
def _origin(origin: str) -> str:
    return origin if " " in origin else f"{origin}()"


def _prop_value(value) -> str:
    if value is None:
        return "unset"
    if value == "?":
        return "unknown"
    return f"'{value}'"


CATALOG: dict[str, tuple[str, Callable[[dict], str]]] = {
    "CR-PARSE": (ERROR, lambda p: f"{p['detail']}"),
    "CR-LEX": (ERROR, lambda p: f"{p['detail']}"),
    "CR-LOWER": (ERROR, lambda p: f"cannot analyze construct: {p['detail']}"),
    "CR-INCLUDE-UNKNOWN": (
        WARNING,
        lambda p: f"unknown header '{p['header']}': its declarations are not available",
    ),
    "CR-ANN-CONFLICT": (ERROR, lambda p: f"conflicting annotations: {p['detail']}"),
    "CR-ANN-ARG": (ERROR, lambda p: f"malformed arguments for '{p['annotation']}': {p['detail']}"),
    "CR-ANN-UNKNOWN-TYPE": (
        ERROR,
        lambda p: f"'{p['annotation']}' names undeclared type '{p['type']}'",
    ),
    "CR-ANN-REDUNDANT": (
        NOTE,
        lambda p: f"'{p['annotation']}' restates the reference kind implied by const-qualification of '{p['place']}'",
    ),
    "CR-MODEL-CONFLICT": (
        WARNING,
        lambda p: f"declaration of '{p['function']}' conflicts with the library model: {p['detail']}",
    ),
    "CR-OPT-DEREF": (
        WARNING,
        lambda p: (
            f"index {_opt(p)}"
            if p.get("role") == "index"
            else f"dereference of optional reference: {_opt(p)}"
        ),
    ),
    "CR-OPT-ARG": (
        WARNING,
        lambda p: f"optional argument passed to non-optional parameter '{p['param']}' of '{p['function']}': {_opt(p)}",
    ),
    "CR-OPT-RET": (
        WARNING,
        lambda p: f"optional value returned from '{p['function']}' whose return type is not optional: {_opt(p)}",
    ),
    "CR-UNINIT-USE": (
        WARNING,
        lambda p: f"use of {p.get('state', 'uninitialized')} resource '{p['place']}'",
    ),
    "CR-USE-AFTER-MOVE": (
        WARNING,
        lambda p: f"use of '{p['place']}' after its ownership was moved",
    ),
    "CR-USE-AFTER-RELEASE": (
        WARNING,
        lambda p: f"use of '{p['place']}' whose referred resource has been released",
    ),
    "CR-OWN-LEAK": (
        WARNING,
        lambda p: f"the {p['resource-class'].replace('-', ' ')} possibly obtained from {_origin(p['origin'])} and owned by '{p['place']}' is leaked here",
    ),
    "CR-OWN-UNCLEAR": (
        WARNING,
        lambda p: f"does '{p['function']}' take ownership of '{p['place']}'? its parameter '{p['param']}' carries no ownership annotation",
    ),
    "CR-RELEASE-INVALID": (
        WARNING,
        lambda p: f"invalid release of '{p['place']}' through '{p['function']}': {p['detail']}",
    ),
    "CR-FINI-MISSING": (
        WARNING,
        lambda p: f"missing finalization of '{p['place']}' of type '{p['type']}'",
    ),
    "CR-NOMINAL-OP": (
        WARNING,
        lambda p: (
            f"{p['operation']} not permitted on nominal type '{p['type']}'"
            if "type" in p
            else f"operator '{p['operator']}' not permitted between '{p['lhs']}' and '{p['rhs']}'"
        ),
    ),
    "CR-NOMINAL-MIX": (
        WARNING,
        lambda p: f"value of type '{p['actual']}' used where '{p['expected']}' is required",
    ),
    "CR-VAL-RANGE": (
        WARNING,
        lambda p: f"value {p['actual']} of '{p['place']}' is not within the declared range {p['expected']}",
    ),
    "CR-PRE-VIOLATION": (
        WARNING,
        lambda p: f"precondition of '{p['function']}' not met: '{p['property']}' of '{p['place']}' must be '{p['expected']}' but is {_prop_value(p['actual'])}",
    ),
    "CR-POST-VIOLATION": (
        WARNING,
        lambda p: f"postcondition of '{p['function']}' not met: '{p['property']}' of '{p['place']}' must be '{p['expected']}' but is {_prop_value(p['actual'])}",
    ),
    "CR-UNSAFE-ACCESS": (
        WARNING,
        lambda p: f"access to {p['what']} of unsafety kind \"{p['kind']}\" outside a checked or unchecked region",
    ),
    "CR-UNSAFE-PROPAGATE": (
        WARNING,
        lambda p: f"unchecked region of kind \"{p['kind']}\" in '{p['function']}', which is not annotated e_unsafe(\"{p['kind']}\")",
    ),
    "CR-EXCL-VIOLATION": (WARNING, lambda p: f"{p['detail']}"),
    "CR-CONST-CAST": (
        WARNING,
        lambda p: f"cast discards const qualification of the resource referred to by '{p['place']}'",
    ),
    "CR-UNREACHABLE": (NOTE, lambda p: "unreachable code"),
}


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: str
    span: Span
    message: str
    payload: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def place(self) -> str:
        return str(self.payload.get("place", ""))

    def key(self) -> tuple:
        return (self.code, self.span, self.place)

    def sort_key(self) -> tuple:
        return (self.span.file, self.span.line, self.span.col, self.code, self.place, self.message)


def make(code: str, span: Span, **payload: Any) -> Diagnostic:
    if code not in CATALOG:
        raise KeyError(f"unknown diagnostic code {code}")
    severity, build = CATALOG[code]
    return Diagnostic(code, severity, span, build(payload), dict(payload))


def dedupe(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    seen: dict[tuple, Diagnostic] = {}
    for d in diags:
        seen.setdefault(d.key(), d)
    return sorted(seen.values(), key=Diagnostic.sort_key)


def promote(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    """``--warn-as-error``: warnings become errors, notes stay notes."""
    out = []
    for d in diags:
        if d.severity == WARNING:
            d = Diagnostic(d.code, ERROR, d.span, d.message, d.payload)
        out.append(d)
    return out


def at_least(diags: Iterable[Diagnostic], severity: str) -> bool:
    rank = _SEVERITY_RANK[severity]
    return any(_SEVERITY_RANK[d.severity] >= rank for d in diags)


def render_text(diags: Iterable[Diagnostic], sources: SourceMap | None = None,
                excerpts: bool = False) -> str:
    lines = []
    for d in sorted(diags, key=Diagnostic.sort_key):
        lines.append(f"{d.span.file}:{d.span.line}:{d.span.col}: {d.severity}: {d.code}: {d.message}")
        if excerpts and sources is not None:
            src = sources.line(d.span.file, d.span.line)
            if src is not None:
                width = max(1, min(d.span.length, len(src) - d.span.col + 1))
                lines.append("  " + src)
                lines.append("  " + " " * (d.span.col - 1) + "^" + "~" * (width - 1))
    return "".join(line + "\n" for line in lines)


def _jsonable(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in sorted(value.items())}
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


def render_json(diags: Iterable[Diagnostic]) -> str:
    items = []
    for d in sorted(diags, key=Diagnostic.sort_key):
        items.append({
            "file": d.span.file,
            "line": d.span.line,
            "col": d.span.col,
            "length": d.span.length,
            "code": d.code,
            "severity": d.severity,
            "message": d.message,
            "payload": _jsonable(d.payload),
        })
    doc = {"version": 1, "diagnostics": items}
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n"
