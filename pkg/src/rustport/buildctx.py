"""Build-trace ingestion.

Loads ``compile_commands.json``-shaped traces, derives per-unit defines and
include paths from the recorded argv, and preprocesses each translation unit
with the host preprocessor under exactly those flags, so later stages see the
declarations the real build saw.
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import BuildTraceError, MalformedRecordError, MissingSourceError, PreprocessError

logger = logging.getLogger(__name__)


@dataclass
class CompileCommand:
    """One recorded compiler invocation for one source file."""

    directory: str
    source_file: str
    arguments: list[str]
    output_file: Optional[str] = None

    def source_path(self) -> Path:
        p = Path(self.source_file)
        if not p.is_absolute():
            p = Path(self.directory) / p
        return p


@dataclass
class TranslationUnitContext:
    """The flags that matter for preprocessing, pulled out of the argv."""

    command: CompileCommand
    defines: list[tuple[str, Optional[str]]]
    include_paths: list[str]
    language_standard: Optional[str] = None
    forced_includes: list[str] = field(default_factory=list)


@dataclass
class PreprocessedUnit:
    """Fully expanded translation unit plus a line-origin map."""

    origin: TranslationUnitContext
    text: str
    # preprocessed line number (1-based) -> (origin file, origin line)
    line_map: dict[int, tuple[str, int]]


@dataclass
class PreprocessorConfig:
    """How to invoke the host C preprocessor."""

    executable: list[str] = field(default_factory=lambda: ["gcc", "-E"])
    base_flags: list[str] = field(default_factory=list)


def load_compile_commands(path, skip_missing_sources: bool = False) -> list[CompileCommand]:
    """Load a build trace and normalize every entry to an argv list.

    Both the single-string ``command`` form and the array ``arguments`` form
    are accepted. Entries whose source file does not exist raise unless
    ``skip_missing_sources`` is set, in which case they are logged and dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise BuildTraceError(f"build trace not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BuildTraceError(f"build trace is not valid JSON: {path}: {exc}") from exc
    if not isinstance(data, list):
        raise BuildTraceError(f"build trace must be an array, got {type(data).__name__}")

    commands: list[CompileCommand] = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise MalformedRecordError(i, "<entry>", "not an object")
        directory = entry.get("directory")
        if not isinstance(directory, str) or not directory:
            raise MalformedRecordError(i, "directory")
        source = entry.get("file")
        if not isinstance(source, str) or not source:
            raise MalformedRecordError(i, "file")
        if "arguments" in entry:
            arguments = entry["arguments"]
            if not isinstance(arguments, list) or not arguments or not all(
                isinstance(a, str) for a in arguments
            ):
                raise MalformedRecordError(i, "arguments", "must be a non-empty string array")
            arguments = list(arguments)
        elif "command" in entry:
            if not isinstance(entry["command"], str) or not entry["command"].strip():
                raise MalformedRecordError(i, "command", "must be a non-empty string")
            arguments = shlex.split(entry["command"])
        else:
            raise MalformedRecordError(i, "command/arguments", "entry has neither")

        cmd = CompileCommand(
            directory=directory,
            source_file=source,
            arguments=arguments,
            output_file=entry.get("output"),
        )
        if not cmd.source_path().is_file():
            if skip_missing_sources:
                logger.warning("trace entry %d: source %s missing, skipped", i, cmd.source_path())
                continue
            raise MissingSourceError(f"trace entry {i}: source file not found: {cmd.source_path()}")
        commands.append(cmd)
    return commands


def expand_response_files(arguments: list[str], directory: str) -> list[str]:
    """Inline ``@file`` response-file arguments (one level, recursively)."""
    out: list[str] = []
    for arg in arguments:
        if arg.startswith("@") and len(arg) > 1:
            rsp = Path(arg[1:])
            if not rsp.is_absolute():
                rsp = Path(directory) / rsp
            if rsp.is_file():
                nested = shlex.split(rsp.read_text(encoding="utf-8"))
                out.extend(expand_response_files(nested, directory))
                continue
            logger.warning("response file not found, keeping literal: %s", arg)
        out.append(arg)
    return out


def derive_unit_context(cmd: CompileCommand) -> TranslationUnitContext:
    """Pull defines, include paths, and the language standard out of the argv.

    ``-U`` cancels earlier ``-D`` entries of the same name; ``@file`` response
    files are expanded first; unknown flags are ignored, never an error.
    """
    args = expand_response_files(cmd.arguments, cmd.directory)
    defines: list[tuple[str, Optional[str]]] = []
    include_paths: list[str] = []
    forced_includes: list[str] = []
    std: Optional[str] = None

    def add_define(spec: str) -> None:
        name, _, value = spec.partition("=")
        defines.append((name, value if "=" in spec else None))

    i = 1  # args[0] is the compiler itself
    while i < len(args):
        arg = args[i]
        if arg == "-D" and i + 1 < len(args):
            add_define(args[i + 1])
            i += 2
            continue
        if arg.startswith("-D") and len(arg) > 2:
            add_define(arg[2:])
        elif arg == "-U" and i + 1 < len(args):
            name = args[i + 1]
            defines[:] = [d for d in defines if d[0] != name]
            i += 2
            continue
        elif arg.startswith("-U") and len(arg) > 2:
            name = arg[2:]
            defines[:] = [d for d in defines if d[0] != name]
        elif arg == "-I" and i + 1 < len(args):
            include_paths.append(args[i + 1])
            i += 2
            continue
        elif arg.startswith("-I") and len(arg) > 2:
            include_paths.append(arg[2:])
        elif arg == "-isystem" and i + 1 < len(args):
            include_paths.append(args[i + 1])
            i += 2
            continue
        elif arg == "-include" and i + 1 < len(args):
            forced_includes.append(args[i + 1])
            i += 2
            continue
        elif arg.startswith("-std="):
            std = arg[len("-std=") :]
        i += 1

    return TranslationUnitContext(
        command=cmd,
        defines=defines,
        include_paths=include_paths,
        language_standard=std,
        forced_includes=forced_includes,
    )


# GNU-style line marker: `# <line> "<file>" [flags]`
_LINE_MARKER = re.compile(r'^#\s+(\d+)\s+"([^"]*)"')


def preprocess_unit(ctx: TranslationUnitContext, toolchain: PreprocessorConfig) -> PreprocessedUnit:
    """Run the external preprocessor under the unit's exact flags.

    The output keeps line markers; ``line_map`` is reconstructed from them so
    every non-marker output line maps back to one original file:line.
    """
    cmd = ctx.command
    argv = list(toolchain.executable) + list(toolchain.base_flags)
    for name, value in ctx.defines:
        argv.append(f"-D{name}={value}" if value is not None else f"-D{name}")
    for inc in ctx.include_paths:
        argv.append(f"-I{inc}")
    for forced in ctx.forced_includes:
        argv.extend(["-include", forced])
    if ctx.language_standard:
        argv.append(f"-std={ctx.language_standard}")
    argv.append(str(cmd.source_path()))

    try:
        proc = subprocess.run(
            argv,
            cwd=cmd.directory,
            capture_output=True,
            text=True,
            check=False,
        )
    except OSError as exc:
        raise PreprocessError(f"cannot invoke preprocessor {argv[0]}: {exc}") from exc
    if proc.returncode != 0:
        raise PreprocessError(
            f"preprocessor failed on {cmd.source_file} (exit {proc.returncode})",
            diagnostics=proc.stderr,
        )

    text = proc.stdout
    line_map: dict[int, tuple[str, int]] = {}
    current_file = str(cmd.source_path())
    current_line = 1
    for out_line_no, line in enumerate(text.splitlines(), start=1):
        m = _LINE_MARKER.match(line)
        if m:
            current_line = int(m.group(1))
            current_file = m.group(2)
            continue
        if line.lstrip().startswith("#"):
            # stray directive (e.g. #pragma survives -E); no origin advance
            line_map[out_line_no] = (current_file, current_line)
            current_line += 1
            continue
        line_map[out_line_no] = (current_file, current_line)
        current_line += 1

    return PreprocessedUnit(origin=ctx, text=text, line_map=line_map)


def dedupe_by_source(commands: list[CompileCommand]) -> list[CompileCommand]:
    """Keep the first entry per source file; log any flag conflicts.

    Multi-config builds record one file several times with different flags;
    the skeleton needs exactly one view per file, chosen deterministically.
    """
    seen: dict[str, CompileCommand] = {}
    kept: list[CompileCommand] = []
    for cmd in commands:
        key = str(cmd.source_path().resolve())
        if key in seen:
            if seen[key].arguments != cmd.arguments:
                logger.warning(
                    "multiple build variants for %s; keeping first occurrence", cmd.source_file
                )
            continue
        seen[key] = cmd
        kept.append(cmd)
    return kept
