"""Run configuration: defaults, config-file overrides, then CLI flags."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import RustportError


@dataclass
class RunConfig:
    project_root: Optional[str] = None
    trace_path: Optional[str] = None
    kb_path: Optional[str] = None
    backend: str = "oracle"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    auth_env: str = "RUSTPORT_API_TOKEN"
    retrieval_depth: int = 5
    repair_budget: int = 5
    jobs: int = 1
    out_dir: Optional[str] = None
    run_id: Optional[str] = None
    crate_name: Optional[str] = None
    flatten_root: bool = False
    strict_holes: bool = True
    placeholder_style: str = "unimplemented"
    test_command: Optional[list[str]] = None
    rust_tests_dir: Optional[str] = None
    oracle_bodies: Optional[str] = None
    replay_dir: Optional[str] = None
    script_file: Optional[str] = None
    preprocessor: list[str] = field(default_factory=lambda: ["gcc", "-E"])
    preprocessor_flags: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.retrieval_depth < 0:
            raise RustportError("retrieval depth k must be >= 0")
        if self.repair_budget < 0:
            raise RustportError("repair budget must be >= 0")
        if self.jobs < 1:
            raise RustportError("jobs must be >= 1")


def load_config(path: Optional[str]) -> RunConfig:
    config = RunConfig()
    if path is None:
        return config
    p = Path(path)
    if not p.is_file():
        raise RustportError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RustportError(f"config file is not valid JSON: {exc}") from exc
    known = {f.name for f in fields(RunConfig)}
    for key, value in data.items():
        if key not in known:
            raise RustportError(f"unknown config key: {key!r}")
        setattr(config, key, value)
    return config


def apply_flag_overrides(config: RunConfig, args) -> RunConfig:
    """CLI flags win over config-file values when explicitly provided."""
    mapping = {
        "trace": "trace_path",
        "kb": "kb_path",
        "backend": "backend",
        "k": "retrieval_depth",
        "repair_budget": "repair_budget",
        "jobs": "jobs",
        "out": "out_dir",
        "run_id": "run_id",
        "crate_name": "crate_name",
        "endpoint": "endpoint",
        "model": "model",
        "auth_env": "auth_env",
        "oracle_bodies": "oracle_bodies",
        "replay_dir": "replay_dir",
        "script": "script_file",
    }
    for flag, attr in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, attr, value)
    config.validate()
    return config
