"""Run the whole chain (parse, annotate, lower, analyze) on one source file."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from crusted import diagnostics
from crusted.analysis import AnalysisResult, analyze_function
from crusted.annotations import build_annotation_tables
from crusted.frontend import LexError, ParseError, parse_source, resolve_includes
from crusted.ir import LowerError, lower_function
from crusted.libmodels import LibraryModel, builtin_models


@dataclass
class FileReport:
    path: str
    diags: list = field(default_factory=list)
    cfgs: list = field(default_factory=list)
    results: list = field(default_factory=list)  # AnalysisResult per function
    failed: bool = False  # the file could not be analyzed at all


def check_source(source: str, path: str = "<input>",
                 models: LibraryModel | None = None) -> FileReport:
    report = FileReport(path)
    models = models if models is not None else builtin_models()
    try:
        unit = parse_source(source, path)
    except (LexError, ParseError) as exc:
        report.diags = [exc.diagnostic]
        report.failed = True
        return report
    diags = list(unit.errors)
    unit, libs, inc_diags = resolve_includes(unit)
    diags.extend(inc_diags)
    tables, _, table_diags = build_annotation_tables(unit, models, libs)
    diags.extend(table_diags)
    for fn in unit.functions():
        try:
            cfg = lower_function(fn, tables, source=source)
        except LowerError as exc:
            diags.append(exc.diagnostic)
            continue
        diags.extend(cfg.diags)
        report.cfgs.append(cfg)
        result: AnalysisResult = analyze_function(cfg, tables, models)
        report.results.append(result)
        diags.extend(result.diags)
    report.diags = diagnostics.dedupe(diags)
    return report


def check_file(path: str | Path, models: LibraryModel | None = None) -> FileReport:
    p = Path(path)
    try:
        source = p.read_text(encoding="utf-8")
    except OSError as exc:
        report = FileReport(str(path), failed=True)
        report.diags = [diagnostics.make("CR-PARSE", diagnostics.Span(str(path), 1, 1),
                                         detail=f"cannot read file: {exc.strerror}")]
        return report
    return check_source(source, str(path), models)
