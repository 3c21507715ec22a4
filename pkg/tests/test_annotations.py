from __future__ import annotations

import re

from crusted.annotations import (INITIALIZES, REQUIRES, build_annotation_tables,
                                 emit_crusted_header)
from crusted.domains import INF, MultiInterval
from crusted.frontend import parse_source, resolve_includes
from crusted.libmodels import builtin_models
from crusted.registry import ANNOTATION_NAMES, FUNCTION_LIKE, GLOBAL, OBJECT_LIKE


def tables_for(src: str):
    unit = parse_source(src)
    unit, libs, _ = resolve_includes(unit)
    tables, sigs, diags = build_annotation_tables(unit, builtin_models(), libs)
    return tables, sigs, diags


def codes(diags) -> list[str]:
    return [d.code for d in diags]


def test_parameter_contract_collects_every_slot_annotation():
    _, sigs, diags = tables_for(
        "#include <crusted.h>\n"
        "int e_val(e_range(0, 9)) k(int * e_in(door=open) e_out(door=closed) p,\n"
        "                           char * e_opt(NULL) e_hown q);\n")
    assert diags == []
    k = sigs["k"]
    p, q = k.params
    assert k.param_names == ("p", "q")
    assert p.props_in == (("door", "open"),) and p.props_out == (("door", "closed"),)
    assert p.init == REQUIRES
    assert q.sentinel == "NULL" and q.owning == "heap" and q.optional
    assert q.resource_class == "heap-memory"
    assert k.ret.values == MultiInterval.of((0, 9))
    assert k.annotated


def test_opt_hown_is_shorthand_for_opt_null_and_hown():
    _, sigs, _ = tables_for("#include <crusted.h>\n"
                            "void a(char * e_opt_hown p);\n"
                            "void b(char * e_opt(NULL) e_hown p);\n")
    assert sigs["a"].params == sigs["b"].params


def test_release_and_init_modes():
    _, sigs, diags = tables_for("#include <crusted.h>\n"
                                "void fr(char * e_hown e_release p);\n"
                                "void ctor(int * e_init p);\n")
    assert diags == []
    assert sigs["fr"].params[0].ownership_mode() == "release"
    assert sigs["ctor"].params[0].init == INITIALIZES


def test_typedef_chains_inherit_annotations():
    tables, sigs, _ = tables_for(
        "typedef int e_type e_val(e_geq(0)) fd_t;\n"
        "typedef fd_t e_own fd_own_t;\n"
        "typedef fd_own_t e_opt(-1) fd_opt_own_t;\n"
        "fd_opt_own_t get(void);\n")
    info = tables.types["fd_opt_own_t"]
    assert info.nominal == "fd_t"
    assert info.values == MultiInterval.of((0, INF))
    ret = sigs["get"].ret
    assert ret.sentinel == -1 and ret.owning == "resource" and ret.nominal == "fd_t"


def test_nominal_operation_tables():
    tables, _, diags = tables_for(
        "#include <crusted.h>\n"
        "typedef double e_type e_val(e_geq(-273.15)) celsius_t;\n"
        "typedef double e_type dc_t;\n"
        "e_bop(dc_t, celsius_t, -, celsius_t);\n"
        "e_uop(celsius_t, -, celsius_t);\n")
    assert diags == []
    assert tables.binops == {("-", "celsius_t", "celsius_t"): "dc_t"}
    assert tables.unops == {("-", "celsius_t"): "celsius_t"}
    # Float bounds are rounded outward so the integer domain stays sound.
    assert tables.types["celsius_t"].values.contains(-273)
    assert tables.types["celsius_t"].values.lo <= -273.15


def test_unknown_type_in_operation_table():
    _, _, diags = tables_for("#include <crusted.h>\ne_bop(meters_t, meters_t, +, meters_t);\n")
    assert set(codes(diags)) == {"CR-ANN-UNKNOWN-TYPE"}


def test_mutually_exclusive_annotations_conflict():
    _, _, diags = tables_for("#include <crusted.h>\nvoid g(int * e_hown e_own p);\n")
    (d,) = diags
    assert d.code == "CR-ANN-CONFLICT" and d.severity == "error"
    assert (d.span.line, d.span.col) == (2, 21)


def test_redeclaration_with_different_annotations_conflicts():
    _, _, diags = tables_for("#include <crusted.h>\n"
                             "void g(char * e_hown p);\n"
                             "void g(char * e_opt(NULL) p);\n")
    assert codes(diags) == ["CR-ANN-CONFLICT"]


def test_unsafe_function_annotation():
    _, sigs, _ = tables_for('#include <crusted.h>\nint e_unsafe("FILE") u(void);\n')
    assert sigs["u"].unsafe == frozenset({"FILE"})


def test_consistent_redeclaration_of_a_library_function_keeps_the_model():
    _, sigs, diags = tables_for("#include <stdlib.h>\nvoid *malloc(size_t n);\n")
    assert diags == []
    assert sigs["malloc"] == builtin_models().signature("malloc")


def test_contradicting_library_redeclaration_wins_and_is_reported():
    _, sigs, diags = tables_for("#include <stdlib.h>\n#include <crusted.h>\n"
                                "void free(void * e_hown p);\n")
    assert codes(diags) == ["CR-MODEL-CONFLICT"]
    assert not sigs["free"].params[0].optional


def test_header_defines_every_annotation():
    header = emit_crusted_header()
    for name in OBJECT_LIKE:
        assert re.search(rf"^#define {name}$", header, re.M), name
    for name in FUNCTION_LIKE:
        if name in GLOBAL:
            assert re.search(rf"^#define {name}\(\.\.\.\) extern int \w+$", header, re.M), name
        else:
            assert re.search(rf"^#define {name}\(\.\.\.\)$", header, re.M), name
    defined = set(re.findall(r"^#define (e_\w+)", header, re.M))
    assert defined == set(ANNOTATION_NAMES)


def test_header_is_stable():
    assert emit_crusted_header() == emit_crusted_header()
    assert emit_crusted_header().startswith("/*")
