"""Function alignment and rule mining over C/Rust pairs.

The deterministic extractor derives API-Level rules from call-site
correspondence (unmatched C callees paired with unmatched Rust callees by
first occurrence) and Fragment-Level rules from Rust macro-idiom lines paired
with their closest C line by token overlap. A model-backed extractor can be
plugged in through the generation backend protocol and must return the same
record shapes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from .bm25 import default_rerank_score, rerank_top_n, tokenize_code

logger = logging.getLogger(__name__)

C_KEYWORDS = {
    "if", "for", "while", "switch", "return", "sizeof", "do", "else", "case",
    "break", "continue", "goto", "typedef", "struct", "union", "enum",
}
RUST_KEYWORDS = {
    "if", "for", "while", "match", "loop", "return", "fn", "let", "mut",
    "impl", "pub", "use", "mod", "unsafe", "as", "in", "else", "move", "ref",
}
# housekeeping macros that are never translation idioms
BORING_MACROS = {"unimplemented", "todo", "panic", "assert", "assert_eq", "assert_ne", "dbg"}


@dataclass
class AlignedFunctionPair:
    c_name: str
    c_source: str
    rust_name: str
    rust_source: str
    c_file: str = ""
    rust_file: str = ""
    rerank_score: float = 0.0
    commit: Optional[str] = None

    @property
    def pair_id(self) -> str:
        digest = hashlib.sha256(
            (self.c_source + "\x00" + self.rust_source).encode("utf-8")
        ).hexdigest()
        return digest[:16]


@dataclass
class ApiRule:
    c_interface: str
    rust_interface: str
    support: int = 1
    provenance: list[str] = field(default_factory=list)

    def key(self) -> tuple[str, str]:
        return (self.c_interface, self.rust_interface)


@dataclass
class FragmentRule:
    c_idiom: str
    rust_idiom: str
    hint: str
    support: int = 1
    provenance: list[str] = field(default_factory=list)

    def key(self) -> tuple[str, str]:
        return (self.c_idiom, self.rust_idiom)


# --- function splitting -------------------------------------------------------

_C_FN_RE = re.compile(
    r"^[ \t]*(?:[A-Za-z_][\w]*[ \t*]+)+?(?P<name>[A-Za-z_]\w*)[ \t]*\((?P<args>[^;{)]*)\)[ \t\r\n]*\{",
    re.M,
)
_RUST_FN_RE = re.compile(r"^[ \t]*(?:pub(?:\([^)]*\))?[ \t]+)?(?:const[ \t]+|async[ \t]+|unsafe[ \t]+|extern[ \t]+\"[^\"]*\"[ \t]+)*fn[ \t]+(?P<name>[A-Za-z_]\w*)", re.M)


def _match_braces(text: str, open_idx: int) -> Optional[int]:
    depth = 0
    for i in range(open_idx, len(text)):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    return None


def split_c_functions(text: str) -> list[tuple[str, str]]:
    """(name, full text) for each function definition found in a C file."""
    out: list[tuple[str, str]] = []
    for m in _C_FN_RE.finditer(text):
        name = m.group("name")
        if name in C_KEYWORDS:
            continue
        open_idx = text.index("{", m.start())
        end = _match_braces(text, open_idx)
        if end is None:
            continue
        out.append((name, text[m.start() : end + 1]))
    return out


def split_rust_functions(text: str) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    for m in _RUST_FN_RE.finditer(text):
        open_idx = text.find("{", m.end())
        semi_idx = text.find(";", m.end())
        if open_idx == -1 or (semi_idx != -1 and semi_idx < open_idx):
            continue  # trait method signature or declaration
        end = _match_braces(text, open_idx)
        if end is None:
            continue
        out.append((m.group("name"), text[m.start() : end + 1]))
    return out


def align_functions(file_pair, reranker: Optional[Callable] = None) -> list[AlignedFunctionPair]:
    """Cartesian candidate function pairs within one file pair, reranked to 5."""
    c_text, rust_text = file_pair.c_text, file_pair.rust_text
    c_fns = split_c_functions(c_text)
    rust_fns = split_rust_functions(rust_text)
    if not c_fns or not rust_fns:
        return []
    candidates = [
        AlignedFunctionPair(
            c_name=cn,
            c_source=cs,
            rust_name=rn,
            rust_source=rs,
            c_file=getattr(file_pair, "c_path", ""),
            rust_file=getattr(file_pair, "rust_path", ""),
            commit=getattr(file_pair, "commit", None),
        )
        for cn, cs in c_fns
        for rn, rs in rust_fns
    ]
    return rerank_top_n(candidates, n=5, reranker=reranker)


# --- deterministic rule extraction ---------------------------------------------

_CALL_RE = re.compile(r"\b([A-Za-z_]\w*)\s*\(")
_METHOD_RE = re.compile(r"\.\s*([A-Za-z_]\w*)\s*\(")
_MACRO_RE = re.compile(r"\b([A-Za-z_]\w*)!\s*[\(\[\{]")


def _c_callees(text: str) -> list[str]:
    seen: list[str] = []
    for m in _CALL_RE.finditer(text):
        name = m.group(1)
        if name in C_KEYWORDS or name in seen:
            continue
        seen.append(name)
    return seen


def _rust_callees(text: str) -> list[str]:
    seen: list[str] = []
    for m in _METHOD_RE.finditer(text):
        name = m.group(1)
        if name not in seen:
            seen.append(name)
    for m in _CALL_RE.finditer(text):
        name = m.group(1)
        if name in RUST_KEYWORDS or name in seen:
            continue
        seen.append(name)
    return seen


def mine_rules(
    pair: AlignedFunctionPair,
    extractor: Optional[Callable] = None,
    token_budget: int = 30,
) -> list:
    """Extract API-Level and Fragment-Level rules from one aligned pair.

    An extractor failure yields an empty list (logged); mining must never
    abort the pipeline.
    """
    if extractor is not None:
        try:
            return list(extractor(pair))
        except Exception as exc:
            logger.warning("rule extractor failed on %s: %s", pair.pair_id, exc)
            return []

    rules: list = []
    c_calls = _c_callees(pair.c_source)
    rust_calls = _rust_callees(pair.rust_source)
    unmatched_c = [c for c in c_calls if c not in set(rust_calls)]
    unmatched_rust = [r for r in rust_calls if r not in set(c_calls)]
    for c_iface, rust_iface in zip(unmatched_c, unmatched_rust):
        rules.append(
            ApiRule(
                c_interface=c_iface,
                rust_interface=rust_iface,
                support=1,
                provenance=[pair.pair_id],
            )
        )

    c_lines = [ln.strip() for ln in pair.c_source.splitlines() if ln.strip()]
    seen_fragments: set[tuple[str, str]] = set()
    for line in pair.rust_source.splitlines():
        stripped = line.strip()
        macro_match = _MACRO_RE.search(stripped)
        if not macro_match or macro_match.group(1) in BORING_MACROS:
            continue
        rust_tokens = set(tokenize_code(stripped))
        best_line, best_overlap = None, 0
        for c_line in c_lines:
            overlap = len(rust_tokens & set(tokenize_code(c_line)))
            if overlap > best_overlap:
                best_line, best_overlap = c_line, overlap
        if best_line is None:
            continue
        if len(tokenize_code(stripped)) > token_budget or len(tokenize_code(best_line)) > token_budget:
            logger.info("fragment near %r exceeds token budget; skipped", macro_match.group(1))
            continue
        key = (best_line, stripped)
        if key in seen_fragments:
            continue
        seen_fragments.add(key)
        rules.append(
            FragmentRule(
                c_idiom=best_line,
                rust_idiom=stripped,
                hint=f"use the {macro_match.group(1)}! idiom",
                support=1,
                provenance=[pair.pair_id],
            )
        )
    return rules


class ModelRuleExtractor:
    """Rule extraction through a generation backend.

    The backend is prompted for a JSON array of rule records and must return
    the same shapes as the deterministic extractor.
    """

    def __init__(self, backend, max_tokens: int = 1024):
        self.backend = backend
        self.max_tokens = max_tokens

    def __call__(self, pair: AlignedFunctionPair) -> list:
        from ..backends import GenerationRequest

        req = GenerationRequest(
            system=(
                "Extract reusable C-to-Rust mapping rules from the aligned pair. "
                'Reply with a JSON array; each item is {"type": "api"|"fragment", '
                '"c": ..., "rust": ..., "hint": ...}.'
            ),
            user=f"C:\n{pair.c_source}\n\nRust:\n{pair.rust_source}\n",
            max_tokens=self.max_tokens,
            tag=f"mine:{pair.pair_id}",
        )
        resp = self.backend.generate(req)
        records = json.loads(resp.text)
        out: list = []
        for rec in records:
            if rec.get("type") == "api":
                out.append(
                    ApiRule(
                        c_interface=rec["c"],
                        rust_interface=rec["rust"],
                        provenance=[pair.pair_id],
                    )
                )
            elif rec.get("type") == "fragment":
                out.append(
                    FragmentRule(
                        c_idiom=rec["c"],
                        rust_idiom=rec["rust"],
                        hint=rec.get("hint", ""),
                        provenance=[pair.pair_id],
                    )
                )
        return out
