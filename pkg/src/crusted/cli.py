"""``crusted-check``: analyze annotated C files and report diagnostics."""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from crusted import diagnostics
from crusted.annotations import emit_crusted_header
from crusted.pipeline import FileReport, check_file

EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2

_COLORS = {diagnostics.ERROR: "\033[1;31m", diagnostics.WARNING: "\033[1;35m",
           diagnostics.NOTE: "\033[1;36m"}
_RESET = "\033[0m"


@dataclass
class RunConfig:
    paths: list
    format: str = "text"
    warn_as_error: bool = False
    emit_header: str | None = None
    dump_cfg: bool = False
    dump_states: bool = False
    jobs: int | None = None


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crusted-check",
                description="Check C sources annotated for ownership, optionality, "
                            "nominal types and properties.")
    p.add_argument("paths", nargs="*", help="source files to analyze")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--warn-as-error", action="store_true",
                   help="report warnings with error severity")
    p.add_argument("--emit-header", metavar="PATH",
                   help="write the crusted.h header that expands annotations to nothing")
    p.add_argument("--dump-cfg", action="store_true", help="print the lowered CFGs")
    p.add_argument("--dump-states", action="store_true",
                   help="print the abstract state before every instruction")
    p.add_argument("-j", "--jobs", type=int, default=None,
                   help="files analyzed concurrently (default: one per input)")
    return p


def parse_args(argv: list[str]) -> RunConfig:
    ns = build_parser().parse_args(argv)
    if not ns.paths and ns.emit_header is None:
        build_parser().error("no input files")
    if ns.jobs is not None and ns.jobs < 1:
        build_parser().error("--jobs must be at least 1")
    return RunConfig(ns.paths, ns.format, ns.warn_as_error, ns.emit_header, ns.dump_cfg,
                     ns.dump_states, ns.jobs)


def _use_color(stream) -> bool:
    if os.environ.get("CRUSTED_NO_COLOR"):
        return False
    return hasattr(stream, "isatty") and stream.isatty()


def _colorize(text: str) -> str:
    out = []
    for line in text.splitlines(keepends=True):
        for sev, color in _COLORS.items():
            marker = f": {sev}: "
            if marker in line:
                line = line.replace(marker, f": {color}{sev}{_RESET}: ", 1)
                break
        out.append(line)
    return "".join(out)


def dump_report(report: FileReport, cfg_dump: bool, state_dump: bool) -> str:
    lines = []
    for cfg, result in zip(report.cfgs, report.results):
        if cfg_dump:
            lines.append(cfg.dump())
        if state_dump:
            lines.append(f"states of {cfg.name}")
            for (bid, idx), st in sorted(result.point_states.items()):
                ins = cfg.block(bid).instrs[idx]
                lines.append(f"  B{bid}.{idx} before: {ins}")
                for row in str(st).splitlines():
                    lines.append(f"    {row}")
    return "".join(line.rstrip("\n") + "\n" for line in lines)


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        with contextlib.redirect_stderr(stderr), contextlib.redirect_stdout(stdout):
            config = parse_args(list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    if config.emit_header is not None:
        try:
            Path(config.emit_header).write_text(emit_crusted_header(), encoding="utf-8")
        except OSError as exc:
            print(f"crusted-check: cannot write {config.emit_header}: {exc.strerror}", file=stderr)
            return EXIT_USAGE
        if not config.paths:
            return EXIT_CLEAN
    unreadable = [p for p in config.paths if not Path(p).is_file()]
    if unreadable:
        for p in unreadable:
            print(f"crusted-check: cannot read {p}", file=stderr)
        return EXIT_USAGE
    jobs = config.jobs or max(1, len(config.paths))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        reports = list(pool.map(check_file, config.paths))
    if config.dump_cfg or config.dump_states:
        dumps = "".join(dump_report(r, config.dump_cfg, config.dump_states)
                        for r in sorted(reports, key=lambda r: r.path))
        (stderr if config.format == "json" else stdout).write(dumps)
    diags = [d for r in reports for d in r.diags]
    if config.warn_as_error:
        diags = diagnostics.promote(diags)
    diags = sorted(diags, key=diagnostics.Diagnostic.sort_key)
    if config.format == "json":
        stdout.write(diagnostics.render_json(diags))
    else:
        text = diagnostics.render_text(diags)
        stdout.write(_colorize(text) if _use_color(stdout) else text)
    if diagnostics.at_least(diags, diagnostics.WARNING):
        return EXIT_FINDINGS
    return EXIT_CLEAN


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
