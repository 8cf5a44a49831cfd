"""Generation backends: a remote chat-style wire protocol plus deterministic
local backends (replay, oracle, scripted-failure) for hermetic tests.

Replay fixtures are keyed by a digest of the normalized prompt text only, so
they survive refactors that do not change prompts. A replay miss is a hard
error: hermetic tests must never fall through to a live service.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import BackendError

logger = logging.getLogger(__name__)

MAX_OUTPUT_TOKENS_CAP = 8192


@dataclass
class GenerationRequest:
    system: str
    user: str
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = MAX_OUTPUT_TOKENS_CAP
    tag: str = ""  # "<function id>#<attempt number>"

    def __post_init__(self):
        if self.max_tokens > MAX_OUTPUT_TOKENS_CAP:
            logger.warning(
                "max_tokens %d exceeds cap %d; clamped", self.max_tokens, MAX_OUTPUT_TOKENS_CAP
            )
            self.max_tokens = MAX_OUTPUT_TOKENS_CAP

    @property
    def function_id(self) -> str:
        return self.tag.rsplit("#", 1)[0] if self.tag else ""


@dataclass
class GenerationResponse:
    text: str
    finish_reason: str  # complete | length | error
    latency: float = 0.0
    backend_id: str = ""


def request_digest(req: GenerationRequest) -> str:
    """Digest of the normalized prompt text only (no decoding params)."""
    normalized = "\n".join(
        line.rstrip() for line in (req.system + "\n\x00\n" + req.user).splitlines()
    )
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


class _Bounded:
    """Bounded in-flight counter shared by all backends."""

    def __init__(self, limit: int):
        self._sem = threading.Semaphore(limit)

    def __enter__(self):
        self._sem.acquire()
        return self

    def __exit__(self, *exc):
        self._sem.release()
        return False


class ReplayBackend:
    """Returns canned responses from a directory of digest-named text files."""

    def __init__(self, fixture_dir, max_inflight: int = 4):
        self.fixture_dir = Path(fixture_dir)
        self._gate = _Bounded(max_inflight)

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        with self._gate:
            digest = request_digest(req)
            path = self.fixture_dir / f"{digest}.txt"
            if not path.is_file():
                raise BackendError(
                    f"replay miss: no fixture {path.name} for request {req.tag!r} "
                    "(hermetic runs must not fall through)"
                )
            return GenerationResponse(
                text=path.read_text(encoding="utf-8"),
                finish_reason="complete",
                backend_id="replay",
            )

    def record(self, req: GenerationRequest, text: str) -> Path:
        self.fixture_dir.mkdir(parents=True, exist_ok=True)
        path = self.fixture_dir / f"{request_digest(req)}.txt"
        path.write_text(text, encoding="utf-8")
        return path


class OracleBackend:
    """Returns a fixture-supplied correct body for the tagged function."""

    def __init__(self, bodies: dict[str, str], max_inflight: int = 4):
        self.bodies = dict(bodies)
        self._gate = _Bounded(max_inflight)

    @classmethod
    def from_file(cls, path) -> "OracleBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        with self._gate:
            fn = req.function_id
            if fn not in self.bodies:
                raise BackendError(f"oracle has no body for function {fn!r}")
            return GenerationResponse(
                text=self.bodies[fn], finish_reason="complete", backend_id="oracle"
            )


class ScriptedFailureBackend:
    """Returns invalid bodies for the first r attempts of a function, then a
    valid one. ``failures[fn] = None`` means the function never succeeds.

    When ``unlock_substring`` is set and appears in the user prompt, the valid
    body is returned immediately regardless of the remaining script; this
    models guidance that resolves the failure up front.
    """

    DEFAULT_INVALID = "__rustport_scripted_failure__()"

    def __init__(
        self,
        failures: dict[str, Optional[int]],
        bodies: dict[str, str],
        invalid_body: str = DEFAULT_INVALID,
        unlock_substring: Optional[str] = None,
        max_inflight: int = 4,
    ):
        self.failures = dict(failures)
        self.bodies = dict(bodies)
        self.invalid_body = invalid_body
        self.unlock_substring = unlock_substring
        self.attempts: dict[str, int] = {}
        self._lock = threading.Lock()
        self._gate = _Bounded(max_inflight)

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        with self._gate:
            fn = req.function_id
            with self._lock:
                self.attempts[fn] = self.attempts.get(fn, 0) + 1
                attempt = self.attempts[fn]
            if self.unlock_substring and self.unlock_substring in req.user:
                return self._valid(fn)
            budget = self.failures.get(fn, 0)
            if budget is None or attempt <= budget:
                return GenerationResponse(
                    text=self.invalid_body, finish_reason="complete", backend_id="script"
                )
            return self._valid(fn)

    def _valid(self, fn: str) -> GenerationResponse:
        if fn not in self.bodies:
            raise BackendError(f"scripted backend has no valid body for {fn!r}")
        return GenerationResponse(
            text=self.bodies[fn], finish_reason="complete", backend_id="script"
        )


class RemoteBackend:
    """Chat-completions HTTP backend with bounded retry and backoff."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        auth_env: str = "RUSTPORT_API_TOKEN",
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        extra_params: Optional[dict] = None,
        max_inflight: int = 4,
    ):
        self.endpoint = endpoint
        self.model = model
        self.auth_env = auth_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.extra_params = dict(extra_params or {})
        self._gate = _Bounded(max_inflight)

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_tokens,
        }
        body.update(self.extra_params)
        payload = json.dumps(body).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"

        start = time.monotonic()
        last_error = "unknown"
        with self._gate:
            for attempt in range(1, self.max_attempts + 1):
                try:
                    request = urllib.request.Request(
                        self.endpoint, data=payload, headers=headers, method="POST"
                    )
                    with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                        data = json.loads(resp.read().decode("utf-8"))
                    choice = data["choices"][0]
                    text = choice["message"]["content"]
                    finish = choice.get("finish_reason", "stop")
                    return GenerationResponse(
                        text=text,
                        finish_reason="length" if finish == "length" else "complete",
                        latency=time.monotonic() - start,
                        backend_id=f"remote:{self.model}",
                    )
                except (urllib.error.URLError, urllib.error.HTTPError, KeyError, ValueError) as exc:
                    last_error = str(exc)
                    logger.warning(
                        "remote backend attempt %d/%d failed: %s", attempt, self.max_attempts, exc
                    )
                    if attempt < self.max_attempts:
                        time.sleep(self.backoff_base * (2 ** (attempt - 1)))
        return GenerationResponse(
            text="",
            finish_reason="error",
            latency=time.monotonic() - start,
            backend_id=f"remote:{self.model} ({last_error})",
        )
