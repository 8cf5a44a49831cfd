"""Skeleton graph: global symbol index, dependency edges, and scheduling.

Function-call edges drive the bottom-up translation order; type and symbol
reference edges are recorded for context assembly but never constrain
scheduling, since all declarations already exist in the skeleton. Mutually
recursive functions go wholly into the final layer and are translated against
each other's placeholder signatures.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import DuplicateDefinitionError
from .skeleton import SkeletonProject

logger = logging.getLogger(__name__)

PENDING = "pending"
TRANSLATED = "translated"
FAILED = "failed"
FALLBACK = "fallback"


@dataclass
class IndexEntry:
    module: str
    kind: str  # function | type | static | constant
    visibility: str
    bare_name: str
    path: str = ""  # the real Rust path (keys may be disambiguated)


@dataclass
class GlobalSymbolIndex:
    # index key (usually the qualified Rust path) -> entry
    entries: dict[str, IndexEntry] = field(default_factory=dict)
    # bare name -> index keys defining it
    by_bare: dict[str, list[str]] = field(default_factory=dict)

    def add(self, qualified: str, entry: IndexEntry) -> None:
        if not entry.path:
            entry.path = qualified
        key = qualified
        if key in self.entries:
            existing = self.entries[key]
            # C and Rust both separate the type and value namespaces, so a
            # type may legally share a name with a function/static
            if ("type" in (existing.kind, entry.kind)) and existing.kind != entry.kind:
                key = f"{qualified}#type" if entry.kind == "type" else f"{qualified}#value"
            else:
                raise DuplicateDefinitionError(
                    f"duplicate definition of {qualified} "
                    f"(in {existing.module} and {entry.module})"
                )
        if key in self.entries:
            raise DuplicateDefinitionError(f"duplicate definition of {qualified}")
        self.entries[key] = entry
        self.by_bare.setdefault(entry.bare_name, []).append(key)

    def resolve(self, bare: str, from_module: str, kind: Optional[str] = None) -> Optional[str]:
        """Bare-name resolution: same module first, then a unique global match."""
        candidates = [
            q
            for q in self.by_bare.get(bare, [])
            if kind is None or self.entries[q].kind == kind
        ]
        local = [q for q in candidates if self.entries[q].module == from_module]
        if local:
            return local[0]
        if len(candidates) == 1:
            return candidates[0]
        return None

    def path_of(self, key: str) -> str:
        return self.entries[key].path


def build_symbol_index(skeleton: SkeletonProject) -> GlobalSymbolIndex:
    """Index every stub, type, static, and constant; duplicates are errors.

    Internal-linkage duplicates are fine (distinct qualified names); two
    externally-linked definitions of one bare name are a construction error.
    """
    index = GlobalSymbolIndex()
    external_seen: dict[str, str] = {}
    for stub in skeleton.stubs:
        index.add(
            stub.qualified_name,
            IndexEntry(
                module=stub.module,
                kind="function",
                visibility=stub.visibility,
                bare_name=stub.qualified_name.rsplit("::", 1)[1],
            ),
        )
        if stub.origin.storage == "external":
            bare = stub.origin.name
            if bare in external_seen:
                raise DuplicateDefinitionError(
                    f"externally-linked '{bare}' defined in both "
                    f"{external_seen[bare]} and {stub.module}"
                )
            external_seen[bare] = stub.module
    for t in skeleton.types:
        index.add(
            f"{t.module}::{t.name}",
            IndexEntry(module=t.module, kind="type", visibility="public", bare_name=t.name),
        )
    for s in skeleton.statics:
        index.add(
            f"{s.module}::{s.name}",
            IndexEntry(module=s.module, kind="static", visibility="public", bare_name=s.name),
        )
    for c in skeleton.constants:
        index.add(
            f"{c.module}::{c.name}",
            IndexEntry(module=c.module, kind="constant", visibility="public", bare_name=c.name),
        )
    return index


@dataclass
class GraphNode:
    node_id: str
    kind: str  # function | type | static | constant | boundary
    module: str = ""
    state: str = PENDING
    schedulable: bool = True


@dataclass
class SkeletonGraph:
    nodes: dict[str, GraphNode] = field(default_factory=dict)
    call_edges: set[tuple[str, str]] = field(default_factory=set)
    symbol_edges: set[tuple[str, str]] = field(default_factory=set)

    def function_nodes(self) -> list[str]:
        return sorted(n.node_id for n in self.nodes.values() if n.kind == "function")

    def callees_of(self, node_id: str) -> set[str]:
        return {v for (u, v) in self.call_edges if u == node_id}

    def mark(self, node_id: str, state: str) -> None:
        node = self.nodes[node_id]
        if node.state != PENDING and state != node.state:
            raise ValueError(f"node {node_id} already {node.state}; cannot become {state}")
        node.state = state

    def eligible(self) -> list[str]:
        """Pending function nodes whose function callees are all settled."""
        done = {TRANSLATED, FALLBACK, FAILED}
        out = []
        for nid in self.function_nodes():
            node = self.nodes[nid]
            if node.state != PENDING:
                continue
            callees = {
                v
                for v in self.callees_of(nid)
                if self.nodes[v].kind == "function" and v != nid
            }
            if all(self.nodes[v].state in done for v in callees):
                out.append(nid)
        return out


def build_graph(
    index: GlobalSymbolIndex,
    skeleton: SkeletonProject,
) -> SkeletonGraph:
    """Edges from each stub's harvested call and value references.

    References that resolve nowhere become boundary nodes (the untranslated C
    world) and never constrain scheduling.
    """
    graph = SkeletonGraph()
    # node ids are index keys, so edges and nodes can never disagree
    for key, entry in index.entries.items():
        graph.nodes[key] = GraphNode(
            node_id=key,
            kind=entry.kind,
            module=entry.module,
            schedulable=entry.kind == "function",
        )

    def boundary(name: str) -> str:
        qid = f"boundary::{name}"
        if qid not in graph.nodes:
            graph.nodes[qid] = GraphNode(node_id=qid, kind="boundary", schedulable=False)
        return qid

    for stub in skeleton.stubs:
        caller = stub.qualified_name
        for callee in sorted(stub.origin.calls):
            target = index.resolve(callee, stub.module, kind="function")
            if target is not None:
                graph.call_edges.add((caller, target))
            else:
                graph.symbol_edges.add((caller, boundary(callee)))
        for ref in sorted(stub.origin.value_refs):
            target = index.resolve(ref, stub.module)
            if target is not None and index.entries[target].kind != "function":
                graph.symbol_edges.add((caller, target))
            elif target is not None:
                graph.call_edges.add((caller, target))
            else:
                graph.symbol_edges.add((caller, boundary(ref)))
    return graph


@dataclass
class ScheduleLayers:
    layers: list[list[str]]

    def flatten(self) -> list[str]:
        return [n for layer in self.layers for n in layer]

    def layer_of(self, node_id: str) -> int:
        for i, layer in enumerate(self.layers):
            if node_id in layer:
                return i
        raise KeyError(node_id)


def _tarjan_scc(nodes: list[str], edges: set[tuple[str, str]]) -> list[set[str]]:
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in edges:
        if u in adj and v in adj:
            adj[u].append(v)
    index_counter = [0]
    stack: list[str] = []
    on_stack: set[str] = set()
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    out: list[set[str]] = []

    def strongconnect(root: str) -> None:
        work = [(root, 0)]
        while work:
            node, pi = work[-1]
            if pi == 0:
                index[node] = low[node] = index_counter[0]
                index_counter[0] += 1
                stack.append(node)
                on_stack.add(node)
            recurse = False
            for i in range(pi, len(adj[node])):
                nxt = adj[node][i]
                if nxt not in index:
                    work[-1] = (node, i + 1)
                    work.append((nxt, 0))
                    recurse = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if recurse:
                continue
            if low[node] == index[node]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == node:
                        break
                out.append(comp)
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])

    for n in nodes:
        if n not in index:
            strongconnect(n)
    return out


def schedule(graph: SkeletonGraph) -> ScheduleLayers:
    """Layered leaf-stripping over function-call edges.

    Members of nontrivial strongly connected components (plus self-recursive
    functions) all land in the final layer; edges into those members do not
    block the stripping of acyclic callers, which are generated against the
    cycle's placeholder signatures.
    """
    fns = graph.function_nodes()
    fn_set = set(fns)
    edges = {(u, v) for (u, v) in graph.call_edges if u in fn_set and v in fn_set}

    sccs = _tarjan_scc(fns, edges)
    cyclic: set[str] = set()
    for comp in sccs:
        if len(comp) > 1:
            cyclic |= comp
    for u, v in edges:
        if u == v:
            cyclic.add(u)

    acyclic = [n for n in fns if n not in cyclic]
    # callee -> callers among acyclic nodes only
    out_deg: dict[str, int] = {n: 0 for n in acyclic}
    rev: dict[str, list[str]] = {n: [] for n in acyclic}
    for u, v in edges:
        if u in out_deg and v in out_deg and u != v:
            out_deg[u] += 1
            rev[v].append(u)

    layers: list[list[str]] = []
    current = sorted(n for n in acyclic if out_deg[n] == 0)
    placed: set[str] = set()
    while current:
        layers.append(sorted(current, key=_layer_key))
        placed.update(current)
        counts: dict[str, int] = {}
        for n in current:
            for caller in rev[n]:
                out_deg[caller] -= 1
        current = sorted(
            n for n in acyclic if n not in placed and out_deg[n] == 0
        )
    if cyclic:
        layers.append(sorted(cyclic, key=_layer_key))
    return ScheduleLayers(layers=layers)


def _layer_key(node_id: str) -> tuple[str, str]:
    module, _, name = node_id.rpartition("::")
    return (module, name)


def export_graph(graph: SkeletonGraph, layers: Optional[ScheduleLayers], path) -> None:
    doc = {
        "nodes": [
            {
                "id": n.node_id,
                "kind": n.kind,
                "module": n.module,
                "state": n.state,
            }
            for n in sorted(graph.nodes.values(), key=lambda n: n.node_id)
        ],
        "call_edges": sorted(graph.call_edges),
        "symbol_edges": sorted(graph.symbol_edges),
        "layers": layers.layers if layers else [],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
