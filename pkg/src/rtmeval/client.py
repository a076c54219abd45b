"""Chat-completions HTTP client used to collect model summaries.

The wire shape is the common chat-completions request/response: one POST per
prompt with optional image parts, retried with jittered exponential backoff
on transient failures. Every final outcome is appended to a JSONL audit log
keyed by a request digest, and a client can be pointed back at that log to
replay recorded responses without touching the network.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import RtmEvalError
from .ingest import Summary

ENDPOINT_ENV = "RTM_LLM_ENDPOINT"
KEY_ENV = "RTM_LLM_KEY"


class ClientError(RtmEvalError):
    pass


class AuthFailure(ClientError):
    pass


class RateLimited(ClientError):
    pass


class Timeout(ClientError):
    pass


class MalformedResponse(ClientError):
    pass


class UnparseableScore(ClientError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    model: str
    prompt: str
    images: tuple[str, ...] = ()  # paths to image files, image_based only
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 30.0


@dataclass(frozen=True)
class ClarityScore:
    score: int
    rationale: str

    def __post_init__(self) -> None:
        if not 1 <= self.score <= 5:
            raise ClientError(f"clarity score {self.score} outside 1-5")


def request_digest(req: GenerationRequest) -> str:
    """Stable digest identifying a request; the audit/replay key."""
    image_digests = []
    for image in req.images:
        image_digests.append(hashlib.sha256(Path(image).read_bytes()).hexdigest())
    payload = json.dumps(
        {
            "model": req.model,
            "prompt": req.prompt,
            "images": image_digests,
            "temperature": req.temperature,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _image_part(path: str) -> dict:
    data = Path(path).read_bytes()
    suffix = Path(path).suffix.lstrip(".").lower() or "png"
    mime = "image/svg+xml" if suffix == "svg" else f"image/{suffix}"
    encoded = base64.b64encode(data).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{encoded}"}}


class SummaryClient:
    """Thread-safe client with a bounded in-flight request count."""

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        max_in_flight: int = 4,
        backoff_base: float = 0.5,
        audit_path: str | Path | None = None,
        replay_path: str | Path | None = None,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.backoff_base = backoff_base
        self.audit_path = Path(audit_path) if audit_path else None
        self._semaphore = threading.Semaphore(max_in_flight)
        self._audit_lock = threading.Lock()
        self._rng = random.Random()
        self._replay: dict[str, str] | None = None
        if replay_path is not None:
            self._replay = _load_replay_index(replay_path)

    @classmethod
    def from_env(cls, **kwargs) -> "SummaryClient":
        return cls(
            endpoint=os.environ.get(ENDPOINT_ENV),
            api_key=os.environ.get(KEY_ENV),
            **kwargs,
        )

    def generate(self, req: GenerationRequest) -> str:
        """Return the model's text for one request, retrying transient failures."""
        digest = request_digest(req)
        if self._replay is not None:
            text = self._replay.get(digest)
            if text is None:
                raise ClientError(f"request {digest[:12]} not present in replay log")
            return text

        if not self.endpoint or not self.api_key:
            raise AuthFailure(
                f"missing credentials: set {ENDPOINT_ENV} and {KEY_ENV} (no request sent)"
            )

        payload: dict = {
            "model": req.model,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": self._content(req)}],
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}

        attempts = 0
        last_error: ClientError | None = None
        with self._semaphore:
            while attempts <= req.max_retries:
                attempts += 1
                try:
                    response = requests.post(
                        self.endpoint, json=payload, headers=headers, timeout=req.timeout
                    )
                except requests.Timeout:
                    last_error = Timeout(f"request timed out after {req.timeout}s")
                except requests.RequestException as exc:
                    last_error = ClientError(f"transport failure: {exc}")
                else:
                    if response.status_code in (401, 403):
                        error = AuthFailure(f"authentication rejected ({response.status_code})")
                        self._audit(digest, req, attempts, error=str(error))
                        raise error
                    if response.status_code == 429:
                        last_error = RateLimited("rate limited (HTTP 429)")
                    elif response.status_code >= 500:
                        last_error = ClientError(f"server error (HTTP {response.status_code})")
                    elif response.status_code != 200:
                        error = ClientError(f"unexpected HTTP {response.status_code}")
                        self._audit(digest, req, attempts, error=str(error))
                        raise error
                    else:
                        try:
                            text = _extract_text(response.json())
                        except (ValueError, MalformedResponse) as exc:
                            error = MalformedResponse(f"bad response body: {exc}")
                            self._audit(digest, req, attempts, error=str(error))
                            raise error from None
                        self._audit(digest, req, attempts, response=text)
                        return text
                if attempts <= req.max_retries:
                    delay = self.backoff_base * (2 ** (attempts - 1))
                    time.sleep(delay * (1.0 + self._rng.uniform(0.0, 0.25)))
        self._audit(digest, req, attempts, error=str(last_error))
        raise last_error

    def judge_clarity(self, summary: Summary, judge_model: str) -> ClarityScore:
        """Ask a judge model for a 1-5 clarity rating and parse the integer."""
        prompt = (
            "You are reviewing a clinical monitoring summary for coherence, readability, "
            "and professional tone. Rate it on a 1-5 Likert scale (5 = excellent). "
            "Reply with 'Score: N' followed by a one-sentence rationale.\n\n"
            f"Summary:\n{summary.text}"
        )
        for attempt in range(2):
            text = self.generate(GenerationRequest(model=judge_model, prompt=prompt))
            score = _parse_score(text)
            if score is not None:
                return ClarityScore(score=score, rationale=text.strip())
        raise UnparseableScore(f"no 1-5 score found in judge response: {text!r}")

    def _content(self, req: GenerationRequest):
        if not req.images:
            return req.prompt
        parts: list[dict] = [{"type": "text", "text": req.prompt}]
        parts.extend(_image_part(p) for p in req.images)
        return parts

    def _audit(
        self,
        digest: str,
        req: GenerationRequest,
        attempts: int,
        response: str | None = None,
        error: str | None = None,
    ) -> None:
        if self.audit_path is None:
            return
        record = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "digest": digest,
            "model": req.model,
            "temperature": req.temperature,
            "n_images": len(req.images),
            "prompt_chars": len(req.prompt),
            "attempts": attempts,
            "status": "ok" if error is None else "error",
        }
        if response is not None:
            record["response"] = response
        if error is not None:
            record["error"] = error
        with self._audit_lock:
            with open(self.audit_path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")
                handle.flush()


def _extract_text(body) -> str:
    try:
        choices = body["choices"]
        message = choices[0]["message"]
        content = message["content"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponse("missing choices[0].message.content") from None
    if isinstance(content, list):
        content = "".join(
            part.get("text", "") for part in content if isinstance(part, dict)
        )
    if not isinstance(content, str):
        raise MalformedResponse(f"content has type {type(content).__name__}")
    return content


_SCORE_PATTERNS = (
    re.compile(r"\b([1-5])\s*/\s*5\b"),
    re.compile(r"\bscore\s*[:=]?\s*([1-5])\b", re.IGNORECASE),
    re.compile(r"\b([1-5])\b"),
)


def _parse_score(text: str) -> int | None:
    for pattern in _SCORE_PATTERNS:
        match = pattern.search(text)
        if match:
            return int(match.group(1))
    return None


def _load_replay_index(path: str | Path) -> dict[str, str]:
    index: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("status") == "ok" and "response" in record:
                # Last successful record wins: the log is append-only.
                index[record["digest"]] = record["response"]
    return index
