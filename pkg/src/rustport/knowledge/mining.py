"""File-pair candidate mining from repository history and snapshots.

Implements the heuristic families for recovering C-to-Rust migration pairs:
synchronous commit signals (message keywords, build-config switches, interface
migration, code-churn balance), asynchronous history signals (delete-then-
create inside a 365-day window, evolutionary coupling, developer identity),
and snapshot signals (module colocation, key-token overlap, shared long
literals). Heuristics combine disjunctively; every candidate keeps its
evidence tags so the downstream cascade can filter.
"""

from __future__ import annotations

import logging
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .bm25 import long_string_literals
from .rules import split_c_functions, split_rust_functions

logger = logging.getLogger(__name__)

BUILD_FILE_NAMES = {"Makefile", "makefile", "CMakeLists.txt", "meson.build", "BUILD.gn"}
BUILD_FILE_SUFFIXES = {".mk", ".gn", ".gni", ".bp"}


@dataclass
class MiningConfig:
    keywords: tuple[str, ...] = ("rewrite", "port", "migrate", "translate")
    churn_ratio: float = 0.5
    coupling_min_commits: int = 3
    window_days: int = 365
    recent_contributor_commits: int = 10
    key_token_min_overlap: int = 3
    key_token_max_df: int = 1
    literal_min_len: int = 6  # literals longer than 5 characters


@dataclass
class FilePairCandidate:
    c_path: str
    rust_path: str
    evidence: set[str] = field(default_factory=set)
    scores: dict[str, float] = field(default_factory=dict)
    regime: str = "co_evolution"
    c_text: str = ""
    rust_text: str = ""
    commit: Optional[str] = None
    rerank_score: float = 0.0


@dataclass
class Commit:
    sha: str
    author: str
    email: str
    timestamp: int
    message: str
    # path -> status letter (A/M/D/R...)
    status: dict[str, str] = field(default_factory=dict)
    # path -> (added, deleted) line counts
    numstat: dict[str, tuple[int, int]] = field(default_factory=dict)


class GitRepo:
    """Thin wrapper over the host git executable."""

    def __init__(self, path):
        self.path = Path(path)

    def _git(self, *args: str) -> str:
        proc = subprocess.run(
            ["git", "-C", str(self.path), *args],
            capture_output=True,
            text=True,
            check=False,
        )
        if proc.returncode != 0:
            raise RuntimeError(f"git {' '.join(args)} failed: {proc.stderr.strip()}")
        return proc.stdout

    def commits(self) -> list[Commit]:
        fmt = "%H%x01%an%x01%ae%x01%at%x01%s"
        raw = self._git("log", "--reverse", f"--format={fmt}")
        commits: list[Commit] = []
        for line in raw.splitlines():
            if not line.strip():
                continue
            sha, author, email, ts, message = line.split("\x01", 4)
            commits.append(
                Commit(sha=sha, author=author, email=email, timestamp=int(ts), message=message)
            )
        for commit in commits:
            # rename detection off: the heuristics reason over raw add/delete
            status_raw = self._git("show", "--no-renames", "--name-status", "--format=", commit.sha)
            for row in status_raw.splitlines():
                if not row.strip():
                    continue
                parts = row.split("\t")
                if len(parts) >= 2:
                    commit.status[parts[-1]] = parts[0][0]
            numstat_raw = self._git("show", "--no-renames", "--numstat", "--format=", commit.sha)
            for row in numstat_raw.splitlines():
                parts = row.split("\t")
                if len(parts) == 3 and parts[0] != "-":
                    try:
                        commit.numstat[parts[2]] = (int(parts[0]), int(parts[1]))
                    except ValueError:
                        continue
        return commits

    def file_at(self, sha: str, path: str) -> str:
        return self._git("show", f"{sha}:{path}")

    def parent_of(self, sha: str) -> Optional[str]:
        try:
            return self._git("rev-parse", f"{sha}^").strip()
        except RuntimeError:
            return None

    def diff_of(self, sha: str, path: str) -> str:
        return self._git("show", "--format=", sha, "--", path)


def _snapshot_files(root: Path, suffix: str) -> list[str]:
    return sorted(
        str(p.relative_to(root).as_posix())
        for p in root.rglob(f"*{suffix}")
        if ".git" not in p.parts
    )


def _is_build_file(path: str) -> bool:
    p = Path(path)
    return p.name in BUILD_FILE_NAMES or p.suffix in BUILD_FILE_SUFFIXES


_CALL_IN_LINE_RE = re.compile(r"\b([A-Za-z_]\w*)\s*\(")


class _CandidateSet:
    def __init__(self, regime: str):
        self.regime = regime
        self.items: dict[tuple[str, str], FilePairCandidate] = {}

    def tag(self, c_path: str, rust_path: str, heuristic: str, score: float = 1.0,
            commit: Optional[str] = None) -> None:
        key = (c_path, rust_path)
        cand = self.items.get(key)
        if cand is None:
            cand = FilePairCandidate(c_path=c_path, rust_path=rust_path, regime=self.regime)
            self.items[key] = cand
        cand.evidence.add(heuristic)
        cand.scores[heuristic] = score
        if commit and cand.commit is None:
            cand.commit = commit

    def ensure(self, c_path: str, rust_path: str) -> None:
        key = (c_path, rust_path)
        if key not in self.items:
            self.items[key] = FilePairCandidate(
                c_path=c_path, rust_path=rust_path, regime=self.regime
            )


def get_file_candidates(
    repo_path,
    regime: str = "co_evolution",
    config: Optional[MiningConfig] = None,
) -> list[FilePairCandidate]:
    """Union of candidates from all enabled heuristics, each tagged.

    The general regime falls back to the Cartesian product of snapshot C and
    Rust files (candidates may carry empty evidence); the co-evolution regime
    returns only evidence-tagged pairs. Unreadable history degrades to
    snapshot heuristics with a logged warning.
    """
    config = config or MiningConfig()
    root = Path(repo_path)
    repo = GitRepo(root)
    cands = _CandidateSet(regime)

    c_files = _snapshot_files(root, ".c")
    rust_files = _snapshot_files(root, ".rs")

    commits: list[Commit] = []
    if regime == "co_evolution":
        try:
            commits = repo.commits()
        except RuntimeError as exc:
            logger.warning("history unreadable (%s); falling back to snapshot heuristics", exc)

    if commits:
        _mine_synchronous(commits, cands, config, repo, root)
        _mine_asynchronous(commits, cands, config)

    _mine_snapshot(root, c_files, rust_files, cands, config)

    if regime == "general":
        for c in c_files:
            for r in rust_files:
                cands.ensure(c, r)

    out = sorted(cands.items.values(), key=lambda c: (c.c_path, c.rust_path))
    for cand in out:
        _attach_texts(cand, root, repo, commits)
    return out


def _commit_files(commit: Commit, suffix: str, statuses: str) -> list[str]:
    return sorted(
        p for p, s in commit.status.items() if p.endswith(suffix) and s in statuses
    )


def _mine_synchronous(
    commits: list[Commit],
    cands: _CandidateSet,
    config: MiningConfig,
    repo: GitRepo,
    root: Path,
) -> None:
    # snapshot definition maps for interface-migration lookups
    c_def_files: dict[str, str] = {}
    for path in _snapshot_files(root, ".c"):
        try:
            for name, _ in split_c_functions((root / path).read_text(encoding="utf-8")):
                c_def_files.setdefault(name, path)
        except OSError:
            continue
    rust_def_files: dict[str, str] = {}
    for path in _snapshot_files(root, ".rs"):
        try:
            for name, _ in split_rust_functions((root / path).read_text(encoding="utf-8")):
                rust_def_files.setdefault(name, path)
        except OSError:
            continue

    for commit in commits:
        gone_c = _commit_files(commit, ".c", "DM")
        new_rust = _commit_files(commit, ".rs", "A")

        # commit-message keyword matching
        message = commit.message.lower()
        if any(re.search(rf"\b{re.escape(k)}", message) for k in config.keywords):
            for c in gone_c:
                for r in new_rust:
                    cands.tag(c, r, "keyword", commit=commit.sha)

        # code churn balance over numstat
        for c in _commit_files(commit, ".c", "DM"):
            c_del = commit.numstat.get(c, (0, 0))[1]
            if c_del <= 0:
                continue
            for r in new_rust:
                r_add = commit.numstat.get(r, (0, 0))[0]
                if r_add <= 0:
                    continue
                ratio = abs(c_del - r_add) / max(c_del, r_add)
                if ratio <= config.churn_ratio:
                    cands.tag(c, r, "churn_balance", score=ratio, commit=commit.sha)

        # build-config switch: one build-file diff drops a .c and gains a .rs
        for path, status in commit.status.items():
            if status != "M" or not _is_build_file(path):
                continue
            try:
                diff = repo.diff_of(commit.sha, path)
            except RuntimeError:
                continue
            removed_c = set()
            added_rust = set()
            for line in diff.splitlines():
                if line.startswith("-") and not line.startswith("---"):
                    removed_c.update(re.findall(r"[\w/.-]+\.c\b", line))
                elif line.startswith("+") and not line.startswith("+++"):
                    added_rust.update(re.findall(r"[\w/.-]+\.rs\b", line))
            for c in sorted(removed_c):
                for r in sorted(added_rust):
                    cands.tag(
                        _resolve_repo_path(c, commit, root),
                        _resolve_repo_path(r, commit, root),
                        "build_config",
                        commit=commit.sha,
                    )

        # interface migration: a caller swaps a C call for a Rust call
        for path, status in commit.status.items():
            if status != "M" or path.endswith(".rs"):
                continue
            try:
                diff = repo.diff_of(commit.sha, path)
            except RuntimeError:
                continue
            removed_calls: set[str] = set()
            added_calls: set[str] = set()
            for line in diff.splitlines():
                if line.startswith("-") and not line.startswith("---"):
                    removed_calls.update(m.group(1) for m in _CALL_IN_LINE_RE.finditer(line))
                elif line.startswith("+") and not line.startswith("+++"):
                    added_calls.update(m.group(1) for m in _CALL_IN_LINE_RE.finditer(line))
            for old_call in sorted(removed_calls - added_calls):
                c_home = c_def_files.get(old_call)
                if c_home is None:
                    continue
                for new_call in sorted(added_calls - removed_calls):
                    rust_home = rust_def_files.get(new_call)
                    if rust_home is not None:
                        cands.tag(c_home, rust_home, "interface_migration", commit=commit.sha)


def _resolve_repo_path(name: str, commit: Commit, root: Path) -> str:
    """Build files often list bare names; prefer a commit or snapshot match."""
    for path in commit.status:
        if path.endswith(name) or Path(path).name == Path(name).name:
            return path
    for found in root.rglob(Path(name).name):
        if ".git" not in found.parts:
            return str(found.relative_to(root).as_posix())
    return name


def _mine_asynchronous(commits: list[Commit], cands: _CandidateSet, config: MiningConfig) -> None:
    window = config.window_days * 86400

    deletions: list[tuple[str, int, str]] = []  # (path, ts, sha)
    creations: list[tuple[str, int, str]] = []
    for commit in commits:
        for path, status in commit.status.items():
            if path.endswith(".c") and status == "D":
                deletions.append((path, commit.timestamp, commit.sha))
            elif path.endswith(".rs") and status == "A":
                creations.append((path, commit.timestamp, commit.sha))
    for c_path, c_ts, del_sha in deletions:
        for r_path, r_ts, _sha in creations:
            if 0 <= r_ts - c_ts <= window:
                cands.tag(c_path, r_path, "delete_then_create", score=(r_ts - c_ts) / 86400.0,
                          commit=del_sha)

    # evolutionary coupling: co-changed in enough commits
    co_changes: dict[tuple[str, str], int] = {}
    for commit in commits:
        touched_c = [p for p in commit.status if p.endswith(".c")]
        touched_rust = [p for p in commit.status if p.endswith(".rs")]
        for c in touched_c:
            for r in touched_rust:
                co_changes[(c, r)] = co_changes.get((c, r), 0) + 1
    for (c, r), count in sorted(co_changes.items()):
        if count >= config.coupling_min_commits:
            cands.tag(c, r, "evolutionary_coupling", score=float(count))

    # developer identity: Rust author was the C file's recent contributor
    rust_creators: dict[str, str] = {}
    c_touchers: dict[str, list[str]] = {}
    for commit in commits:
        for path, status in commit.status.items():
            if path.endswith(".rs") and status == "A" and path not in rust_creators:
                rust_creators[path] = commit.email
            elif path.endswith(".c"):
                c_touchers.setdefault(path, []).append(commit.email)
    for c_path, emails in c_touchers.items():
        recent = set(emails[-config.recent_contributor_commits :])
        for r_path, creator in rust_creators.items():
            if creator in recent:
                cands.tag(c_path, r_path, "developer_identity")


def _mine_snapshot(
    root: Path,
    c_files: list[str],
    rust_files: list[str],
    cands: _CandidateSet,
    config: MiningConfig,
) -> None:
    texts: dict[str, str] = {}
    for path in c_files + rust_files:
        try:
            texts[path] = (root / path).read_text(encoding="utf-8")
        except OSError:
            texts[path] = ""

    # module colocation: a build file listing both sides
    build_files = sorted(
        str(p.relative_to(root).as_posix())
        for p in root.rglob("*")
        if p.is_file() and ".git" not in p.parts and _is_build_file(str(p))
    )
    for bf in build_files:
        try:
            content = (root / bf).read_text(encoding="utf-8")
        except OSError:
            continue
        listed_c = [c for c in c_files if Path(c).name in content]
        listed_rust = [r for r in rust_files if Path(r).name in content]
        for c in listed_c:
            for r in listed_rust:
                cands.tag(c, r, "module_colocation")

    # key-token overlap: identifiers rare on both sides, ≥ 3 shared
    ident_re = re.compile(r"[A-Za-z_]\w{3,}")
    side_df: dict[str, dict[str, int]] = {"c": {}, "rs": {}}
    file_idents: dict[str, set[str]] = {}
    for side, files in (("c", c_files), ("rs", rust_files)):
        for path in files:
            idents = set(ident_re.findall(texts[path]))
            file_idents[path] = idents
            for ident in idents:
                side_df[side][ident] = side_df[side].get(ident, 0) + 1
    for c in c_files:
        for r in rust_files:
            shared = {
                ident
                for ident in file_idents[c] & file_idents[r]
                if side_df["c"][ident] <= config.key_token_max_df
                and side_df["rs"][ident] <= config.key_token_max_df
            }
            if len(shared) >= config.key_token_min_overlap:
                cands.tag(c, r, "key_token_overlap", score=float(len(shared)))

    # shared long string literals
    literal_cache = {
        path: long_string_literals(texts[path], min_len=config.literal_min_len)
        for path in c_files + rust_files
    }
    for c in c_files:
        for r in rust_files:
            shared = literal_cache[c] & literal_cache[r]
            if shared:
                cands.tag(c, r, "shared_literal", score=float(len(shared)))


def _attach_texts(
    cand: FilePairCandidate, root: Path, repo: GitRepo, commits: list[Commit]
) -> None:
    c_abs = root / cand.c_path
    if c_abs.is_file():
        cand.c_text = c_abs.read_text(encoding="utf-8", errors="replace")
    else:
        cand.c_text = _text_from_history(repo, commits, cand.c_path)
    r_abs = root / cand.rust_path
    if r_abs.is_file():
        cand.rust_text = r_abs.read_text(encoding="utf-8", errors="replace")
    else:
        cand.rust_text = _text_from_history(repo, commits, cand.rust_path)


def _text_from_history(repo: GitRepo, commits: list[Commit], path: str) -> str:
    for commit in reversed(commits):
        status = commit.status.get(path)
        if status is None:
            continue
        sha = commit.sha
        if status == "D":
            parent = repo.parent_of(sha)
            if parent is None:
                continue
            sha = parent
        try:
            return repo.file_at(sha, path)
        except RuntimeError:
            continue
    return ""
