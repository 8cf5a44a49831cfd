"""Evaluation metrics: incremental compilation pass rate with rollback,
functional correctness from the project's test harness, the unsafe ratio by
lexical scan, warning counts on compiled artifacts only, and average repair
rounds over successes.

Fallback-origin bodies are pre-marked and count as failures without being
restored; a workspace that fails to build reports warnings as not-available.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .cargo import BuildRunner
from .errors import MetricsError
from .repair import compile_and_install
from .skeleton import FALLBACK_MARK
from .workspace import Workspace

logger = logging.getLogger(__name__)


@dataclass
class LedgerEntry:
    fn_id: str
    outcome: str  # restored | failed | fallback
    rounds: Optional[int] = None
    reason: str = ""


@dataclass
class MetricsReport:
    icomp_rate: Optional[float] = None
    fc: Optional[float] = None
    fc_note: str = ""
    unsafe_ratio: Optional[float] = None
    warnings: Optional[int] = None
    avg_repair: Optional[float] = None
    ledger: list[LedgerEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "icomp_rate": self.icomp_rate,
            "fc": self.fc,
            "fc_note": self.fc_note,
            "unsafe_ratio": self.unsafe_ratio,
            "warnings": self.warnings,
            "avg_repair": self.avg_repair,
            "ledger": [
                {
                    "function": e.fn_id,
                    "outcome": e.outcome,
                    "rounds": e.rounds,
                    "reason": e.reason,
                }
                for e in self.ledger
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _fmt(value, suffix="") -> str:
    if value is None:
        return "--"
    if isinstance(value, float):
        return f"{value:.2f}{suffix}"
    return f"{value}{suffix}"


def render_table(report: MetricsReport, title: str = "run") -> str:
    headers = ["ICompRate", "FC", "Unsafe", "Warnings", "AvgRepair"]
    values = [
        _fmt(report.icomp_rate),
        _fmt(report.fc),
        _fmt(report.unsafe_ratio),
        _fmt(report.warnings),
        _fmt(report.avg_repair),
    ]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    vals = "  ".join(v.ljust(w) for v, w in zip(values, widths))
    return f"[{title}]\n{line}\n{vals}"


# --- incremental compilation pass rate -----------------------------------------


def incremental_comp_rate(
    skeleton_workspace,
    bodies: dict[str, str],
    order: Sequence[str],
    runner: Optional[BuildRunner] = None,
) -> tuple[float, list[LedgerEntry]]:
    """Restore bodies one-by-one in schedule order, rolling back failures.

    Fallback-marked bodies are counted as failures without restoration. The
    skeleton must build clean before evaluation starts.
    """
    runner = runner or BuildRunner()
    workspace = Workspace(skeleton_workspace)
    if hasattr(order, "flatten"):
        order = order.flatten()
    baseline = runner.build(workspace.root)
    if not baseline.ok:
        raise MetricsError("skeleton workspace does not build; cannot evaluate")

    ledger: list[LedgerEntry] = []
    restored = 0
    evaluated = 0
    ordered = [fn for fn in order if fn in bodies]
    remaining = [fn for fn in sorted(bodies) if fn not in set(ordered)]
    for fn_id in ordered + remaining:
        body = bodies[fn_id]
        evaluated += 1
        if FALLBACK_MARK in body:
            ledger.append(
                LedgerEntry(fn_id, "fallback", reason="fallback shim counted as failure")
            )
            continue
        ok, diags, _snapshot = compile_and_install(workspace, fn_id, body, runner)
        if ok:
            restored += 1
            ledger.append(LedgerEntry(fn_id, "restored"))
        else:
            first = diags[0].message if diags else "compile failure"
            ledger.append(LedgerEntry(fn_id, "failed", reason=first))
    rate = 100.0 * restored / evaluated if evaluated else 0.0
    return rate, ledger


# --- unsafe ratio ------------------------------------------------------------------


@dataclass
class _LineInfo:
    has_code: bool = False
    unsafe_token: bool = False


def _scan_rust_file(text: str) -> tuple[list[_LineInfo], list[tuple[int, int]], bool]:
    """Lexical pass: per-line code presence, unsafe tokens, brace pairs.

    Returns (line infos, unsafe block spans as (start_line, end_line), balanced).
    Comments, string/char literals, and raw strings are excluded from code.
    """
    lines = [_LineInfo() for _ in range(text.count("\n") + 2)]
    brace_stack: list[tuple[int, int]] = []  # (line, token index)
    unsafe_tokens: list[int] = []  # token index of each `unsafe`
    blocks: list[tuple[int, int]] = []
    pending_unsafe: list[int] = []  # unsafe tokens waiting for their block

    state = "code"
    block_depth = 0
    raw_hashes = 0
    line_no = 1
    i = 0
    n = len(text)
    word = ""
    balanced = True

    def end_word():
        nonlocal word
        if word == "unsafe":
            lines[line_no].unsafe_token = True
            pending_unsafe.append(len(unsafe_tokens))
            unsafe_tokens.append(line_no)
        word = ""

    while i < n:
        ch = text[i]
        nxt = text[i + 1] if i + 1 < n else ""
        if ch == "\n":
            if state == "code":
                end_word()
            line_no += 1
            i += 1
            continue

        if state == "code":
            if ch == "/" and nxt == "/":
                end_word()
                while i < n and text[i] != "\n":
                    i += 1
                continue
            if ch == "/" and nxt == "*":
                end_word()
                state = "block_comment"
                block_depth = 1
                i += 2
                continue
            if ch == '"':
                end_word()
                lines[line_no].has_code = True  # the quote itself is code
                state = "string"
                i += 1
                continue
            if ch == "r" and not word and (nxt == '"' or nxt == "#"):
                j = i + 1
                hashes = 0
                while j < n and text[j] == "#":
                    hashes += 1
                    j += 1
                if j < n and text[j] == '"':
                    lines[line_no].has_code = True
                    state = "raw_string"
                    raw_hashes = hashes
                    i = j + 1
                    continue
            if ch == "'":
                # char literal or lifetime; consume conservatively
                end_word()
                lines[line_no].has_code = True
                if nxt == "\\":
                    k = i + 2
                    while k < n and text[k] != "'":
                        k += 1
                    i = k + 1
                    continue
                if i + 2 < n and text[i + 2] == "'":
                    i += 3
                    continue
                i += 1  # lifetime tick
                continue
            if ch.isalnum() or ch == "_":
                word += ch
                lines[line_no].has_code = True
                i += 1
                continue
            end_word()
            if not ch.isspace():
                lines[line_no].has_code = True
            if ch == "{":
                if pending_unsafe:
                    idx = pending_unsafe.pop(0)
                    brace_stack.append((line_no, -(idx + 1)))  # unsafe-opened
                else:
                    brace_stack.append((line_no, 0))
            elif ch == "}":
                if not brace_stack:
                    balanced = False
                else:
                    open_line, marker = brace_stack.pop()
                    if marker < 0:
                        start = unsafe_tokens[-marker - 1]
                        blocks.append((start, line_no))
            i += 1
            continue

        if state == "block_comment":
            if ch == "/" and nxt == "*":
                block_depth += 1
                i += 2
                continue
            if ch == "*" and nxt == "/":
                block_depth -= 1
                i += 2
                if block_depth == 0:
                    state = "code"
                continue
            i += 1
            continue

        if state == "string":
            if ch == "\\":
                i += 2
                continue
            if ch == '"':
                state = "code"
            i += 1
            continue

        if state == "raw_string":
            if ch == '"' and text[i + 1 : i + 1 + raw_hashes] == "#" * raw_hashes:
                state = "code"
                i += 1 + raw_hashes
                continue
            i += 1
            continue

    if state == "code":
        end_word()
    if brace_stack or pending_unsafe:
        balanced = False
    return lines, blocks, balanced


def classify_file(text: str) -> tuple[set[int], set[int], bool]:
    """(countable line numbers, unsafe line numbers, balanced) for one file."""
    lines, blocks, balanced = _scan_rust_file(text)
    countable = {no for no, info in enumerate(lines) if info.has_code}
    unsafe_lines = {no for no, info in enumerate(lines) if info.unsafe_token}
    for start, end in blocks:
        for no in range(start, end + 1):
            if no in countable:
                unsafe_lines.add(no)
    unsafe_lines &= countable
    return countable, unsafe_lines, balanced


def unsafe_ratio(workspace_dir) -> float:
    """Union of unsafe-keyword lines and unsafe-scope lines over countable
    lines (comment-only and string-only lines excluded), as a percentage."""
    root = Path(workspace_dir)
    total = 0
    unsafe_total = 0
    for path in sorted(root.glob("src/**/*.rs")):
        text = path.read_text(encoding="utf-8")
        countable, unsafe_lines, balanced = classify_file(text)
        if not balanced:
            logger.warning("unbalanced braces in %s; file excluded from unsafe ratio", path)
            continue
        total += len(countable)
        unsafe_total += len(unsafe_lines)
    if total == 0:
        return 0.0
    return 100.0 * unsafe_total / total


# --- warnings -----------------------------------------------------------------------


def warning_count(workspace_dir, runner: Optional[BuildRunner] = None) -> Optional[int]:
    """Distinct warning diagnostics on a successfully compiled artifact.

    Returns None (rendered "--") when the build fails: warnings cannot be
    collected reliably after early termination.
    """
    runner = runner or BuildRunner()
    outcome = runner.build(workspace_dir)
    if not outcome.ok:
        return None
    distinct = {d.span_key() for d in outcome.warnings}
    return len(distinct)


# --- functional correctness ------------------------------------------------------------


_TEST_SUMMARY_RE = re.compile(r"(\d+) passed; (\d+) failed")


def functional_correctness(
    workspace_dir,
    test_command: Optional[list[str]] = None,
    runner: Optional[BuildRunner] = None,
) -> tuple[Optional[float], str]:
    """Project-level test pass rate; (None, note) when not run."""
    runner = runner or BuildRunner()
    build = runner.build(workspace_dir)
    if not build.ok:
        return None, "workspace does not build"
    proc = runner.run_tests(workspace_dir, test_command)
    output = proc.stdout + "\n" + proc.stderr
    matches = _TEST_SUMMARY_RE.findall(output)
    if not matches:
        raise MetricsError(
            f"test harness output had no parsable summary (exit {proc.returncode}):\n"
            + output[-2000:]
        )
    passed = sum(int(p) for p, _ in matches)
    failed = sum(int(f) for _, f in matches)
    total = passed + failed
    if total == 0:
        return None, "no tests discovered"
    return 100.0 * passed / total, ""


# --- average repair rounds ----------------------------------------------------------------


def avg_repair(ledger: Sequence) -> Optional[float]:
    """Mean repair rounds over functions that reached a successful build.

    Functions that never succeeded (failed or fallback) are excluded; with no
    successes at all the metric is not-available.
    """
    if not ledger:
        raise MetricsError("empty ledger")
    rounds = []
    for entry in ledger:
        outcome = getattr(entry, "outcome", None) or getattr(entry, "final_state", None)
        if outcome in ("restored", "translated"):
            r = getattr(entry, "rounds", None)
            if r is None:
                r = getattr(entry, "rounds_used", 0)
            rounds.append(r or 0)
    if not rounds:
        return None
    return sum(rounds) / len(rounds)
