"""Layer-by-layer translation run: retrieval, generation, repair, accumulation.

Within a layer, initial generation may fan out across worker threads; installs
and builds stay serialized through the single build runner, and results are
reduced in canonical layer order so runs are reproducible.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backends import GenerationRequest
from .cargo import BuildRunner
from .graph import FALLBACK, FAILED, TRANSLATED, ScheduleLayers, SkeletonGraph, GlobalSymbolIndex
from .knowledge import KnowledgeBase
from .repair import DEFAULT_REPAIR_BUDGET, FunctionOutcome, repair_loop
from .skeleton import SkeletonProject
from .translate import assemble_context, build_prompt, extract_body
from .workspace import Workspace

logger = logging.getLogger(__name__)


@dataclass
class RunArtifacts:
    run_dir: Path

    def __post_init__(self):
        self.run_dir = Path(self.run_dir)
        (self.run_dir / "prompts").mkdir(parents=True, exist_ok=True)
        self.attempts_file = self.run_dir / "attempts.jsonl"

    def save_prompt(self, tag: str, text: str) -> None:
        safe = re.sub(r"\W+", "_", tag).strip("_")
        (self.run_dir / "prompts" / f"{safe}.txt").write_text(text, encoding="utf-8")

    def log_attempts(self, outcome: FunctionOutcome) -> None:
        with self.attempts_file.open("a", encoding="utf-8") as fh:
            for attempt in outcome.attempts:
                fh.write(
                    json.dumps(
                        {
                            "function": outcome.node_id,
                            "round": attempt.round_index,
                            "ok": attempt.ok,
                            "fix_source": attempt.fix_source,
                            "diagnostics": attempt.diagnostics,
                            "note": attempt.note,
                            "body": attempt.body,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


@dataclass
class TranslationRun:
    skeleton: SkeletonProject
    workspace: Workspace
    graph: SkeletonGraph
    index: GlobalSymbolIndex
    layers: ScheduleLayers
    backend: object
    runner: BuildRunner
    kb: Optional[KnowledgeBase] = None
    retrieval_depth: int = 5
    repair_budget: int = DEFAULT_REPAIR_BUDGET
    jobs: int = 1
    artifacts: Optional[RunArtifacts] = None
    accumulate: bool = True
    outcomes: dict[str, FunctionOutcome] = field(default_factory=dict)

    def execute(self) -> dict[str, FunctionOutcome]:
        for layer in self.layers.layers:
            prepared = self._prepare_layer(layer)
            for fn_id in layer:  # canonical order: reduce deterministically
                ctx, prompt, initial_body = prepared[fn_id]
                stub = self.skeleton.stub_by_name(fn_id)
                outcome = repair_loop(
                    self.workspace,
                    stub,
                    ctx,
                    initial_body,
                    self.backend,
                    self.runner,
                    index=self.index,
                    budget=self.repair_budget,
                    prompt_sink=self._prompt_sink,
                )
                self.outcomes[fn_id] = outcome
                state = {
                    "translated": TRANSLATED,
                    "fallback": FALLBACK,
                    "failed": FAILED,
                }[outcome.final_state]
                self.graph.mark(fn_id, state)
                if self.artifacts is not None:
                    self.artifacts.log_attempts(outcome)
                if (
                    outcome.final_state == "translated"
                    and self.kb is not None
                    and self.accumulate
                ):
                    self.kb.accumulate(
                        c_name=stub.origin.name,
                        c_source=stub.origin.source_text,
                        rust_name=fn_id,
                        rust_source=f"{stub.signature_text} {{\n{outcome.final_body}\n}}",
                    )
        return self.outcomes

    def _prepare_layer(self, layer: list[str]) -> dict[str, tuple]:
        """Assemble contexts and run initial generation, possibly in parallel."""
        def prepare(fn_id: str):
            ctx = assemble_context(fn_id, self.skeleton, self.graph, self.index)
            examples, api_rules, frag_rules = [], [], []
            if self.kb is not None and self.retrieval_depth > 0:
                examples, api_rules, frag_rules = self.kb.retrieve(
                    ctx.c_source, k=self.retrieval_depth
                )
            prompt = build_prompt(ctx, examples, list(api_rules) + list(frag_rules))
            tag = f"{fn_id}#1"
            if self.artifacts is not None:
                self.artifacts.save_prompt(tag, prompt.render())
            resp = self.backend.generate(
                GenerationRequest(system=prompt.system, user=prompt.user, tag=tag)
            )
            fn_name = fn_id.rsplit("::", 1)[1]
            if resp.finish_reason == "error":
                logger.warning("initial generation failed for %s: %s", fn_id, resp.backend_id)
                body = ""  # forces a compile failure; the repair loop takes over
            else:
                body = extract_body(resp.text, fn_name)
            return fn_id, (ctx, prompt, body)

        if self.jobs > 1 and len(layer) > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                results = dict(pool.map(prepare, layer))
        else:
            results = dict(prepare(fn) for fn in layer)
        return results

    def _prompt_sink(self, tag: str, text: str) -> None:
        if self.artifacts is not None:
            self.artifacts.save_prompt(tag, text)
