from __future__ import annotations

import json

import pytest

from corpus_util import CORPUS, code_files, expectations
from crusted import diagnostics
from crusted.diagnostics import CATALOG, ERROR, NOTE, WARNING, Diagnostic, make
from crusted.pipeline import check_file
from crusted.source import SourceMap, Span

SPAN = Span("a.c", 3, 5, 40, 4)


def test_catalog_is_the_fixed_code_set():
    assert set(CATALOG) == {
        "CR-PARSE", "CR-LEX", "CR-LOWER", "CR-INCLUDE-UNKNOWN", "CR-ANN-CONFLICT", "CR-ANN-ARG",
        "CR-ANN-UNKNOWN-TYPE", "CR-ANN-REDUNDANT", "CR-MODEL-CONFLICT", "CR-OPT-DEREF",
        "CR-OPT-ARG", "CR-OPT-RET", "CR-UNINIT-USE", "CR-USE-AFTER-MOVE", "CR-USE-AFTER-RELEASE",
        "CR-OWN-LEAK", "CR-OWN-UNCLEAR", "CR-RELEASE-INVALID", "CR-FINI-MISSING",
        "CR-NOMINAL-OP", "CR-NOMINAL-MIX", "CR-VAL-RANGE", "CR-PRE-VIOLATION",
        "CR-POST-VIOLATION", "CR-UNSAFE-ACCESS", "CR-UNSAFE-PROPAGATE", "CR-EXCL-VIOLATION",
        "CR-CONST-CAST", "CR-UNREACHABLE"}


def test_every_catalog_code_is_triggered_by_the_corpus():
    seen = set()
    for path in code_files():
        seen |= {d.code for d in check_file(path).diags}
        seen |= {code for code, _, _ in expectations(path)}
    assert seen == set(CATALOG)


def test_severity_policy():
    assert make("CR-PARSE", SPAN, detail="x").severity == ERROR
    assert make("CR-LEX", SPAN, detail="x").severity == ERROR
    assert make("CR-OPT-DEREF", SPAN, place="p", sentinel="NULL").severity == WARNING
    assert make("CR-ANN-REDUNDANT", SPAN, annotation="e_excl", place="q").severity == NOTE


def test_unknown_code_is_rejected():
    with pytest.raises(KeyError):
        make("CR-NOPE", SPAN)


def test_nominal_op_text_line():
    d = make("CR-NOMINAL-OP", Span("fig1.c", 10, 3, 0, 4), operation="increment", type="fd_t", place="fd")
    assert diagnostics.render_text([d]) == (
        "fig1.c:10:3: warning: CR-NOMINAL-OP: increment not permitted on nominal type 'fd_t'\n")


def test_text_output_of_fig1_starts_with_the_increment():
    diags = check_file(CORPUS / "fig1.c").diags
    first = diagnostics.render_text(diags).splitlines()[0]
    assert first.endswith("10:3: warning: CR-NOMINAL-OP: increment not permitted on nominal type 'fd_t'")


def test_empty_renderings():
    assert diagnostics.render_text([]) == ""
    assert diagnostics.render_json([]) == '{"version":1,"diagnostics":[]}\n'


def test_same_line_is_ordered_by_column_then_code():
    a = make("CR-OPT-DEREF", Span("f.c", 2, 9), place="p", sentinel="NULL")
    b = make("CR-OPT-ARG", Span("f.c", 2, 3), place="q", sentinel="NULL", param="x", function="g")
    c = make("CR-NOMINAL-OP", Span("f.c", 2, 9), operation="increment", type="t", place="n")
    lines = diagnostics.render_text([a, c, b]).splitlines()
    assert [ln.split(": ")[2] for ln in lines] == ["CR-OPT-ARG", "CR-NOMINAL-OP", "CR-OPT-DEREF"]


def test_json_schema_and_key_order():
    diags = check_file(CORPUS / "fig1.c").diags
    text = diagnostics.render_json(diags)
    assert text.endswith("\n") and text.count("\n") == 1
    doc = json.loads(text)
    assert list(doc) == ["version", "diagnostics"] and doc["version"] == 1
    assert len(doc["diagnostics"]) == 8
    for item in doc["diagnostics"]:
        assert list(item) == ["file", "line", "col", "length", "code", "severity", "message",
                              "payload"]
    leak = [i for i in doc["diagnostics"] if i["code"] == "CR-OWN-LEAK"
            and i["payload"]["place"] == "fd"]
    assert leak[0]["payload"]["resource-class"] == "open-file-description"


def test_rendering_is_pure():
    diags = check_file(CORPUS / "fig1.c").diags
    assert diagnostics.render_json(diags) == diagnostics.render_json(list(reversed(diags)))
    assert diagnostics.render_text(diags) == diagnostics.render_text(list(reversed(diags)))


def test_dedupe_merges_identical_findings():
    d1 = make("CR-OWN-LEAK", SPAN, place="p", **{"resource-class": "heap-memory"},
              origin="malloc")
    d2 = make("CR-OWN-LEAK", SPAN, place="p", **{"resource-class": "heap-memory"},
              origin="malloc")
    assert diagnostics.dedupe([d1, d2]) == [d1]


def test_promote_turns_warnings_into_errors_only():
    w = make("CR-OPT-DEREF", SPAN, place="p", sentinel="NULL")
    n = make("CR-ANN-REDUNDANT", SPAN, annotation="e_excl", place="q")
    assert [d.severity for d in diagnostics.promote([w, n])] == [ERROR, NOTE]
    assert diagnostics.at_least([n], WARNING) is False
    assert diagnostics.at_least([w, n], WARNING) is True


def test_excerpt_with_caret():
    sources = SourceMap()
    sources.add("a.c", "int x;\nint y;\n  ++fd;\n")
    d = make("CR-NOMINAL-OP", Span("a.c", 3, 3, 16, 4), operation="increment", type="fd_t", place="fd")
    out = diagnostics.render_text([d], sources, excerpts=True).splitlines()
    assert out[1:] == ["    ++fd;", "    ^~~~"]


def test_messages_are_functions_of_the_payload():
    d = make("CR-PRE-VIOLATION", SPAN, function="mixer_on", property="door", place="mxp",
             expected="closed", actual="opened")
    same = make("CR-PRE-VIOLATION", SPAN, function="mixer_on", property="door", place="mxp",
                expected="closed", actual="opened")
    assert d.message == same.message and "'closed'" in d.message
    assert isinstance(d, Diagnostic)
