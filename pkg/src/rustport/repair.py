"""Compiler-feedback repair: compile-and-install validation, a closed set of
deterministic rule fixes, model-guided repair under a budget, and the
foreign-declaration fallback that keeps the project compilable while counting
as a translation failure.

Round accounting: a rule-based fix is free when its candidate compiles; if it
fails to compile it consumes the round. Compile invocations per function stay
within budget + 2 (initial, one compile per round, at most one extra for a
successful rule fix or the fallback install).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from .backends import GenerationRequest
from .cargo import BuildRunner, Diagnostic, render_diagnostics
from .graph import GlobalSymbolIndex
from .skeleton import FALLBACK_MARK, FunctionStub
from .translate import TranslationContext, build_repair_prompt, extract_body
from .workspace import Workspace

logger = logging.getLogger(__name__)

RULE_FIX_VERSION = 1
DEFAULT_REPAIR_BUDGET = 5
DIAG_PROMPT_LIMIT = 20

_INT_TYPES = {"i8", "i16", "i32", "i64", "i128", "u8", "u16", "u32", "u64", "u128", "usize", "isize"}


@dataclass
class RepairAttempt:
    round_index: int  # 0 = initial generation
    body: str
    ok: bool
    diagnostics: list[tuple[Optional[str], str, str]]  # (code, message, span)
    fix_source: str  # generation | rule_fix | model_repair | fallback
    note: str = ""


@dataclass
class FunctionOutcome:
    node_id: str
    final_state: str  # translated | fallback | failed
    attempts: list[RepairAttempt] = field(default_factory=list)
    rounds_used: int = 0
    final_body: str = ""


def _diag_tuples(diags: list[Diagnostic]) -> list[tuple[Optional[str], str, str]]:
    return [
        (d.code, d.message, f"{d.file}:{d.line}:{d.column}" if d.file else "")
        for d in diags
    ]


def compile_and_install(
    workspace: Workspace,
    fn_id: str,
    body: str,
    runner: BuildRunner,
) -> tuple[bool, list[Diagnostic], str]:
    """Install the body and build the whole project.

    Success leaves the body installed; failure rolls the module file back
    byte-identically and returns the diagnostics plus a snapshot of the file
    as it looked with the failing body (rule fixes edit that snapshot).
    """
    workspace.install_body(fn_id, body)
    outcome = runner.build(workspace.root)
    if outcome.ok:
        workspace.commit_install(fn_id)
        return True, [], ""
    snapshot = workspace.module_file(fn_id).read_text(encoding="utf-8")
    workspace.rollback_body(fn_id)
    return False, outcome.errors, snapshot


_UNRESOLVED_RE = re.compile(r"cannot find (?:value|function|type|struct, variant or union type) `(\w+)`")
_MISMATCH_RE = re.compile(r"expected `([^`]+)`, found `([^`]+)`")


def rule_based_fix(
    body: str,
    diagnostics: list[Diagnostic],
    index: Optional[GlobalSymbolIndex] = None,
    file_snapshot: str = "",
    fn_id: str = "",
    from_module: str = "",
) -> Optional[str]:
    """Apply the closed, ordered fix set; return a body only if something fixed.

    Classes (version 1): integer-width casts at mismatch sites, pointer
    dereference/address-of suggestions the compiler marks machine-applicable,
    path qualification unique in the global symbol index, and mutability
    annotations on compiler-named locals. Anything else routes to model repair.
    """
    if not diagnostics or not file_snapshot:
        return None
    data = file_snapshot.encode("utf-8")
    edits: list[tuple[int, int, bytes]] = []

    def span_in_file(diag: Diagnostic) -> bool:
        return diag.file is not None and diag.line is not None

    for diag in diagnostics:
        if diag.code == "E0308" and span_in_file(diag):
            m = _MISMATCH_RE.search(diag.message) or _MISMATCH_RE.search(diag.rendered)
            if (
                m
                and m.group(1) in _INT_TYPES
                and m.group(2) in _INT_TYPES
                and diag.byte_start is not None
            ):
                start, end = diag.byte_start, diag.byte_end
                snippet = data[start:end].decode("utf-8", "replace")
                edits.append((start, end, f"({snippet}) as {m.group(1)}".encode("utf-8")))
                continue
            _collect_machine_applicable(diag, edits)
        elif diag.code == "E0614":
            _collect_machine_applicable(diag, edits)
        elif diag.code in ("E0425", "E0412", "E0433") and index is not None:
            m = _UNRESOLVED_RE.search(diag.message)
            if not m:
                continue
            name = m.group(1)
            target = index.resolve(name, from_module)
            if target is None:
                candidates = index.by_bare.get(name, [])
                target = candidates[0] if len(candidates) == 1 else None
            if target is not None and diag.byte_start is not None:
                edits.append(
                    (diag.byte_start, diag.byte_end, index.path_of(target).encode("utf-8"))
                )
        elif diag.code in ("E0384", "E0596"):
            _collect_machine_applicable(diag, edits)

    if not edits:
        return None
    # apply right-to-left so earlier offsets stay valid; drop overlaps
    edits.sort(key=lambda e: e[0], reverse=True)
    applied = 0
    last_start = len(data) + 1
    for start, end, replacement in edits:
        if end > last_start:
            continue
        data = data[:start] + replacement + data[end:]
        last_start = start
        applied += 1
    if not applied:
        return None
    fixed_file = data.decode("utf-8", "replace")
    return _body_from_snapshot(fixed_file, fn_id)


def _collect_machine_applicable(diag: Diagnostic, edits: list) -> None:
    for s in diag.suggestions:
        if s.applicability == "MachineApplicable":
            edits.append((s.byte_start, s.byte_end, s.replacement.encode("utf-8")))


def _body_from_snapshot(file_text: str, fn_id: str) -> Optional[str]:
    from .skeleton import BODY_BEGIN, BODY_END

    begin = (BODY_BEGIN + fn_id).strip()
    end = (BODY_END + fn_id).strip()
    lines = file_text.splitlines()
    try:
        bi = next(i for i, l in enumerate(lines) if l.strip() == begin)
        ei = next(i for i, l in enumerate(lines) if l.strip() == end)
    except StopIteration:
        return None
    segment = lines[bi + 1 : ei]
    return "\n".join(l[4:] if l.startswith("    ") else l for l in segment)


def model_repair(
    ctx: TranslationContext,
    body: str,
    diagnostics: list[Diagnostic],
    backend,
    attempt_tag: str,
    fn_name: str,
    prompt_sink: Optional[Callable] = None,
) -> tuple[Optional[str], str]:
    """One model-guided repair: context + failing body + verbatim diagnostics.

    Returns (new body or None on backend error, note)."""
    note = ""
    if len(diagnostics) > DIAG_PROMPT_LIMIT:
        note = f"diagnostics truncated to first {DIAG_PROMPT_LIMIT} of {len(diagnostics)}"
    rendered = render_diagnostics(diagnostics, limit=DIAG_PROMPT_LIMIT)
    prompt = build_repair_prompt(ctx, body, rendered)
    if prompt_sink is not None:
        prompt_sink(attempt_tag, prompt.render())
    resp = backend.generate(
        GenerationRequest(system=prompt.system, user=prompt.user, tag=attempt_tag)
    )
    if resp.finish_reason == "error":
        return None, (note + "; " if note else "") + f"backend error: {resp.backend_id}"
    return extract_body(resp.text, fn_name), note


def fallback_body(stub: FunctionStub) -> str:
    """A foreign-function shim delegating to the original C symbol.

    Compilable in a library crate (resolution happens at link time in a mixed
    C/Rust build); strictly counted as a translation failure downstream.
    """
    sig = stub.signature_text
    open_idx = sig.index("(")
    depth = 0
    close_idx = open_idx
    for i in range(open_idx, len(sig)):
        if sig[i] == "(":
            depth += 1
        elif sig[i] == ")":
            depth -= 1
            if depth == 0:
                close_idx = i
                break
    params_text = sig[open_idx + 1 : close_idx]
    ret_clause = sig[close_idx + 1 :].strip()
    name = stub.qualified_name.rsplit("::", 1)[1]
    decl = f"fn {name}({params_text})"
    if ret_clause.startswith("->"):
        decl += f" {ret_clause}"
    args = ", ".join(stub.param_names)
    return (
        f"{FALLBACK_MARK} delegating to the untranslated C symbol\n"
        f'extern "C" {{\n'
        f"    {decl};\n"
        f"}}\n"
        f"unsafe {{ {name}({args}) }}"
    )


def repair_loop(
    workspace: Workspace,
    stub: FunctionStub,
    ctx: TranslationContext,
    initial_body: str,
    backend,
    runner: BuildRunner,
    index: Optional[GlobalSymbolIndex] = None,
    budget: int = DEFAULT_REPAIR_BUDGET,
    prompt_sink: Optional[Callable] = None,
) -> FunctionOutcome:
    """Run the compile/repair loop for one function.

    Per round: compile; on failure try the rule fix (free if its candidate
    then compiles, a consumed round if not), otherwise model repair. Once the
    budget is exhausted the fallback shim is installed and the outcome is
    `fallback`, which downstream metrics count strictly as failure.
    """
    fn_id = stub.qualified_name
    fn_name = fn_id.rsplit("::", 1)[1]
    outcome = FunctionOutcome(node_id=fn_id, final_state="failed")

    ok, diags, snapshot = compile_and_install(workspace, fn_id, initial_body, runner)
    outcome.attempts.append(
        RepairAttempt(0, initial_body, ok, _diag_tuples(diags), "generation")
    )
    body = initial_body
    rounds = 0

    while not ok and rounds < budget:
        fixed = rule_based_fix(
            body, diags, index=index, file_snapshot=snapshot, fn_id=fn_id,
            from_module=stub.module,
        )
        if fixed is not None and fixed != body:
            ok2, diags2, snap2 = compile_and_install(workspace, fn_id, fixed, runner)
            if ok2:
                # free: the rule fix verified on its own compile
                outcome.attempts.append(RepairAttempt(rounds, fixed, True, [], "rule_fix"))
                body, ok = fixed, True
                break
            rounds += 1
            outcome.attempts.append(
                RepairAttempt(rounds, fixed, False, _diag_tuples(diags2), "rule_fix")
            )
            body, diags, snapshot = fixed, diags2, snap2
            continue

        rounds += 1
        new_body, note = model_repair(
            ctx, body, diags, backend, f"{fn_id}#{rounds + 1}", fn_name, prompt_sink
        )
        if new_body is None:
            outcome.attempts.append(
                RepairAttempt(rounds, body, False, _diag_tuples(diags), "model_repair", note=note)
            )
            continue
        ok, diags, snapshot = compile_and_install(workspace, fn_id, new_body, runner)
        outcome.attempts.append(
            RepairAttempt(rounds, new_body, ok, _diag_tuples(diags), "model_repair", note=note)
        )
        body = new_body

    outcome.rounds_used = rounds
    if ok:
        outcome.final_state = "translated"
        outcome.final_body = body
        return outcome

    shim = fallback_body(stub)
    ok_fb, diags_fb, _snap = compile_and_install(workspace, fn_id, shim, runner)
    if ok_fb:
        outcome.final_state = "fallback"
        outcome.final_body = shim
        outcome.attempts.append(RepairAttempt(rounds, shim, True, [], "fallback"))
    else:
        logger.error("fallback shim for %s failed to compile; placeholder restored", fn_id)
        outcome.final_state = "failed"
        outcome.attempts.append(
            RepairAttempt(rounds, shim, False, _diag_tuples(diags_fb), "fallback")
        )
    return outcome
