"""Toolchain invocation and diagnostic parsing.

Each language gets a ToolchainConfig describing how to compile and how to
run. Commands are argv lists with three placeholders substituted at call
time: {IN} is the written source file, {OUT} an output artifact path, {DIR}
the fresh working directory. Every invocation gets its own temp dir and a
wall-clock deadline, and failures come back as statuses, not exceptions;
the pipeline treats a broken build as data.

Test programs follow a printed protocol instead of a framework: each check
emits 'PASS <name>' or 'FAIL <name>' on one stdout line.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

from .errors import ConfigError, UnknownParserError

DEFAULT_TIMEOUT = 60.0


class Severity(str, Enum):
    ERROR = "ERROR"
    WARNING = "WARNING"
    NOTE = "NOTE"


class CompileStatus(str, Enum):
    OK = "OK"
    COMPILE_ERROR = "COMPILE_ERROR"
    TIMEOUT = "TIMEOUT"
    TOOL_MISSING = "TOOL_MISSING"


class TestStatus(str, Enum):
    __test__ = False  # not a pytest class despite the name

    ALL_PASS = "ALL_PASS"
    SOME_FAIL = "SOME_FAIL"
    RUN_ERROR = "RUN_ERROR"
    TIMEOUT = "TIMEOUT"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    message: str
    file: str = ""
    line: int = 0
    column: int = 0
    code: str | None = None


@dataclass(frozen=True)
class ToolchainConfig:
    language: str
    compile_command: tuple[str, ...]
    run_command: tuple[str, ...] | None = None
    timeout: float = DEFAULT_TIMEOUT
    diagnostic_format: str = "gcc"
    source_filename: str = "main.txt"

    def __post_init__(self):
        if not self.compile_command:
            raise ConfigError(f"{self.language}: compile_command is empty")
        if self.timeout <= 0:
            raise ConfigError(f"{self.language}: timeout must be positive")


@dataclass(frozen=True)
class CompileResult:
    status: CompileStatus
    diagnostics: tuple[Diagnostic, ...] = ()
    raw_output: str = ""
    duration_ms: float = 0.0
    workdir: str | None = None

    def error_diagnostics(self) -> tuple[Diagnostic, ...]:
        return tuple(
            d for d in self.diagnostics if d.severity is Severity.ERROR
        )


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class, despite the name

    status: TestStatus
    passed: int = 0
    failed: int = 0
    raw_output: str = ""


# =========================================================================
# Diagnostic parsers
# =========================================================================

_GCC_RE = re.compile(
    r"^(?P<file>[^:\s][^:\n]*?):(?P<line>\d+):(?:(?P<col>\d+):)?\s*"
    r"(?P<sev>fatal error|error|warning|note):\s*(?P<msg>.*)$"
)
_SEVERITY_WORDS = {
    "fatal error": Severity.ERROR,
    "error": Severity.ERROR,
    "warning": Severity.WARNING,
    "note": Severity.NOTE,
}
_PY_FILE_RE = re.compile(r'^\s*File "(?P<file>[^"]+)", line (?P<line>\d+)')
_PY_ERROR_RE = re.compile(
    r"^(?P<code>[A-Za-z_]+(?:Error|Exception|Warning)):\s*(?P<msg>.*)$"
)


def _fallback_line(line: str) -> Diagnostic | None:
    if "error" in line.lower():
        return Diagnostic(severity=Severity.ERROR, message=line.strip())
    return None


def parse_gcc(raw: str) -> list[Diagnostic]:
    """file:line[:col]: severity: message, one record per line."""
    found = []
    for line in raw.splitlines():
        match = _GCC_RE.match(line)
        if match:
            found.append(
                Diagnostic(
                    severity=_SEVERITY_WORDS[match.group("sev")],
                    message=match.group("msg").strip(),
                    file=match.group("file"),
                    line=int(match.group("line")),
                    column=int(match.group("col") or 0),
                )
            )
            continue
        fallback = _fallback_line(line)
        if fallback:
            found.append(fallback)
    return found


def parse_generic(raw: str) -> list[Diagnostic]:
    """Any line mentioning 'error' becomes an ERROR with no location."""
    found = []
    for line in raw.splitlines():
        fallback = _fallback_line(line)
        if fallback:
            found.append(fallback)
    return found


def parse_python_trace(raw: str) -> list[Diagnostic]:
    """Interpreter tracebacks: pair the nearest File line with the final
    '<Name>Error: message' line."""
    found = []
    file = ""
    line_no = 0
    for line in raw.splitlines():
        file_match = _PY_FILE_RE.match(line)
        if file_match:
            file = file_match.group("file")
            line_no = int(file_match.group("line"))
            continue
        err_match = _PY_ERROR_RE.match(line.strip())
        if err_match:
            found.append(
                Diagnostic(
                    severity=Severity.ERROR,
                    message=err_match.group("msg").strip(),
                    file=file,
                    line=line_no,
                    code=err_match.group("code"),
                )
            )
    return found


PARSERS: dict[str, Callable[[str], list[Diagnostic]]] = {
    "gcc": parse_gcc,
    "generic": parse_generic,
    "python": parse_python_trace,
}


def parse_diagnostics(raw: str, parser_id: str) -> list[Diagnostic]:
    try:
        parser = PARSERS[parser_id]
    except KeyError:
        raise UnknownParserError(parser_id) from None
    return parser(raw)


# =========================================================================
# Invocation
# =========================================================================

# Bounds concurrent compiler/test subprocesses across worker threads.
_process_gate = threading.BoundedSemaphore(max(os.cpu_count() or 2, 2))


def set_process_limit(n: int) -> None:
    global _process_gate
    if n < 1:
        raise ConfigError("process limit must be >= 1")
    _process_gate = threading.BoundedSemaphore(n)


def _substitute(arg: str, src: Path, out: Path, workdir: Path) -> str:
    return (
        arg.replace("{IN}", str(src))
        .replace("{OUT}", str(out))
        .replace("{DIR}", str(workdir))
    )


def _combined_output(stdout: str | None, stderr: str | None) -> str:
    parts = [p for p in (stderr, stdout) if p]
    return "\n".join(parts)


def _mask_workdir(text: str, workdir: Path) -> str:
    # Temp dir names differ per invocation; scrubbing them keeps tool
    # output, parsed diagnostics, and everything derived from them (hints,
    # prompts, ledger payloads) identical across reruns.
    return text.replace(str(workdir) + os.sep, "").replace(
        str(workdir), "<workdir>"
    )


def compile_source(
    code: str, cfg: ToolchainConfig, *, keep_artifacts: bool = False
) -> CompileResult:
    """Write the code to a fresh directory and run the compile command.

    Returns a status in every case: missing tool, deadline expiry, and
    compiler failure are results, not exceptions.
    """
    tool = cfg.compile_command[0]
    if shutil.which(tool) is None:
        return CompileResult(
            status=CompileStatus.TOOL_MISSING,
            raw_output=f"tool not found on PATH: {tool}",
        )
    workdir = Path(tempfile.mkdtemp(prefix="transforge-"))
    try:
        src = workdir / cfg.source_filename
        src.write_text(code)
        out = workdir / "prog.out"
        argv = [_substitute(a, src, out, workdir) for a in cfg.compile_command]
        started = time.monotonic()
        try:
            with _process_gate:
                proc = subprocess.run(
                    argv,
                    capture_output=True,
                    text=True,
                    timeout=cfg.timeout,
                    cwd=workdir,
                )
        except subprocess.TimeoutExpired as exc:
            return CompileResult(
                status=CompileStatus.TIMEOUT,
                raw_output=_mask_workdir(
                    _combined_output(_as_text(exc.stdout), _as_text(exc.stderr)),
                    workdir,
                ),
                duration_ms=(time.monotonic() - started) * 1000.0,
                workdir=str(workdir) if keep_artifacts else None,
            )
        duration_ms = (time.monotonic() - started) * 1000.0
        raw = _mask_workdir(_combined_output(proc.stdout, proc.stderr), workdir)
        diagnostics = parse_diagnostics(raw, cfg.diagnostic_format)
        if proc.returncode == 0:
            # A clean exit is authoritative; stray error-looking lines in
            # chatty compiler output get demoted rather than trusted.
            diagnostics = [
                d
                if d.severity is not Severity.ERROR
                else Diagnostic(
                    severity=Severity.WARNING,
                    message=d.message,
                    file=d.file,
                    line=d.line,
                    column=d.column,
                    code=d.code,
                )
                for d in diagnostics
            ]
            status = CompileStatus.OK
        else:
            status = CompileStatus.COMPILE_ERROR
            if not any(d.severity is Severity.ERROR for d in diagnostics):
                diagnostics = list(diagnostics) + [
                    Diagnostic(
                        severity=Severity.ERROR,
                        message=f"compiler exited with status {proc.returncode}",
                        file=cfg.source_filename,
                    )
                ]
        return CompileResult(
            status=status,
            diagnostics=tuple(diagnostics),
            raw_output=raw,
            duration_ms=duration_ms,
            workdir=str(workdir) if keep_artifacts else None,
        )
    finally:
        if not keep_artifacts:
            shutil.rmtree(workdir, ignore_errors=True)


def _as_text(data) -> str | None:
    if data is None:
        return None
    if isinstance(data, bytes):
        return data.decode(errors="replace")
    return data


_PROTOCOL_RE = re.compile(r"^(PASS|FAIL)\b\s*(\S.*)?$")


def run_tests(
    program: str, tests: str, cfg: ToolchainConfig, *, keep_artifacts: bool = False
) -> TestReport:
    """Execute program plus tests under the toolchain's run command.

    The two sources are concatenated into one file. When the compile
    command produces an {OUT} artifact it runs first; interpreted
    toolchains go straight to run_command.
    """
    if not cfg.run_command:
        raise ConfigError(f"{cfg.language}: toolchain has no run_command")
    combined = program.rstrip("\n") + "\n\n" + tests.strip("\n") + "\n"
    workdir = Path(tempfile.mkdtemp(prefix="transforge-"))
    try:
        src = workdir / cfg.source_filename
        src.write_text(combined)
        out = workdir / "prog.out"
        needs_build = any("{OUT}" in a for a in cfg.compile_command)
        if needs_build:
            argv = [
                _substitute(a, src, out, workdir) for a in cfg.compile_command
            ]
            if shutil.which(argv[0]) is None:
                return TestReport(
                    status=TestStatus.RUN_ERROR,
                    raw_output=f"tool not found on PATH: {argv[0]}",
                )
            try:
                with _process_gate:
                    built = subprocess.run(
                        argv,
                        capture_output=True,
                        text=True,
                        timeout=cfg.timeout,
                        cwd=workdir,
                    )
            except subprocess.TimeoutExpired:
                return TestReport(status=TestStatus.TIMEOUT)
            if built.returncode != 0:
                return TestReport(
                    status=TestStatus.RUN_ERROR,
                    raw_output=_mask_workdir(
                        _combined_output(built.stdout, built.stderr), workdir
                    ),
                )
        argv = [_substitute(a, src, out, workdir) for a in cfg.run_command]
        if "{OUT}" not in cfg.run_command[0] and shutil.which(argv[0]) is None:
            return TestReport(
                status=TestStatus.RUN_ERROR,
                raw_output=f"tool not found on PATH: {argv[0]}",
            )
        try:
            with _process_gate:
                proc = subprocess.run(
                    argv,
                    capture_output=True,
                    text=True,
                    timeout=cfg.timeout,
                    cwd=workdir,
                )
        except subprocess.TimeoutExpired as exc:
            return TestReport(
                status=TestStatus.TIMEOUT,
                raw_output=_mask_workdir(
                    _combined_output(_as_text(exc.stdout), _as_text(exc.stderr)),
                    workdir,
                ),
            )
        passed = failed = 0
        for line in (proc.stdout or "").splitlines():
            match = _PROTOCOL_RE.match(line.strip())
            if not match:
                continue
            if match.group(1) == "PASS":
                passed += 1
            else:
                failed += 1
        raw = _mask_workdir(_combined_output(proc.stdout, proc.stderr), workdir)
        if passed + failed == 0:
            return TestReport(status=TestStatus.RUN_ERROR, raw_output=raw)
        if failed > 0:
            return TestReport(
                status=TestStatus.SOME_FAIL,
                passed=passed,
                failed=failed,
                raw_output=raw,
            )
        if proc.returncode != 0:
            return TestReport(
                status=TestStatus.RUN_ERROR,
                passed=passed,
                failed=failed,
                raw_output=raw,
            )
        return TestReport(
            status=TestStatus.ALL_PASS, passed=passed, failed=failed, raw_output=raw
        )
    finally:
        if not keep_artifacts:
            shutil.rmtree(workdir, ignore_errors=True)


# =========================================================================
# Config
# =========================================================================


def toolchain_from_doc(raw: Mapping) -> ToolchainConfig:
    try:
        return ToolchainConfig(
            language=raw["language"],
            compile_command=tuple(raw["compile_command"]),
            run_command=(
                tuple(raw["run_command"]) if raw.get("run_command") else None
            ),
            timeout=float(raw.get("timeout", DEFAULT_TIMEOUT)),
            diagnostic_format=raw.get("diagnostic_format", "gcc"),
            source_filename=raw.get("source_filename", "main.txt"),
        )
    except KeyError as exc:
        raise ConfigError(f"toolchain entry missing field {exc}") from None


def load_toolchains(path: str | Path) -> dict[str, ToolchainConfig]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"toolchain config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    chains: dict[str, ToolchainConfig] = {}
    for raw in doc.get("toolchains", []):
        cfg = toolchain_from_doc(raw)
        if cfg.language in chains:
            raise ConfigError(f"duplicate toolchain for {cfg.language!r}")
        if cfg.diagnostic_format not in PARSERS:
            raise UnknownParserError(cfg.diagnostic_format)
        chains[cfg.language] = cfg
    return chains


def default_toolchains() -> dict[str, ToolchainConfig]:
    """Built-in toolchains for hosts with cc and python3 on PATH.

    Anything missing simply reports TOOL_MISSING at use.
    """
    return {
        "python": ToolchainConfig(
            language="python",
            compile_command=("python3", "-m", "py_compile", "{IN}"),
            run_command=("python3", "{IN}"),
            timeout=30.0,
            diagnostic_format="python",
            source_filename="main.py",
        ),
        "c": ToolchainConfig(
            language="c",
            compile_command=("gcc", "-std=c11", "{IN}", "-o", "{OUT}"),
            run_command=("{OUT}",),
            timeout=30.0,
            diagnostic_format="gcc",
            source_filename="main.c",
        ),
        "cpp": ToolchainConfig(
            language="cpp",
            compile_command=("g++", "-std=c++17", "{IN}", "-o", "{OUT}"),
            run_command=("{OUT}",),
            timeout=30.0,
            diagnostic_format="gcc",
            source_filename="main.cpp",
        ),
        "go": ToolchainConfig(
            language="go",
            compile_command=("go", "build", "-o", "{OUT}", "{IN}"),
            run_command=("{OUT}",),
            timeout=60.0,
            diagnostic_format="generic",
            source_filename="main.go",
        ),
    }
