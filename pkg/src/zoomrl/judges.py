"""Judge handles: role-specific prompt rendering, transport, and caching.

Four roles share one chat-style transport contract: the answer-similarity
judge used during reward computation, the strict answer extractor, the
rubric scorer, and the image-difficulty scorer. Prompt templates are
byte-stable per role. Replies are cached by content hash (role plus rendered
prompt), so identical inputs never issue a second wire call within a run;
the disk layer makes reruns cheap and reproducible.

Deterministic mocks are pure functions of their inputs. They exist so every
pipeline is runnable and testable offline; they make no claim of matching a
hosted judge's scores.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

from . import prompts
from .backends import (
    GenerationRequest,
    ImagePart,
    Message,
    Part,
    TextPart,
    request_to_wire,
)
from .errors import TransportError
from .images import ppm_bytes
from .parsing import parse_response
from .textstats import tokenize

logger = logging.getLogger(__name__)

ROLE_ANSWER = "answer_similarity"
ROLE_EXTRACTOR = "extractor"
ROLE_RUBRIC = "rubric_scorer"
ROLE_DIFFICULTY = "difficulty_scorer"

# Judge transports consume a rendered request and return the reply text.
Transport = Callable[[GenerationRequest], str]

_FLOAT_RE = re.compile(r"-?\d+(?:\.\d+)?")


class RateLimiter:
    """Concurrency bound for wire calls, shareable across judge handles."""

    def __init__(self, max_in_flight: int = 4):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.max_in_flight = max_in_flight
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def __enter__(self) -> "RateLimiter":
        self._gate.acquire()
        return self

    def __exit__(self, *exc_info) -> None:
        self._gate.release()


class JudgeCache:
    """Thread-safe reply cache, optionally persisted one file per entry."""

    def __init__(self, directory: str | Path | None = None):
        self._memory: dict[str, str] = {}
        self._lock = threading.Lock()
        self._directory = Path(directory) if directory is not None else None
        if self._directory is not None:
            self._directory.mkdir(parents=True, exist_ok=True)

    def get(self, key: str) -> str | None:
        with self._lock:
            if key in self._memory:
                return self._memory[key]
        if self._directory is not None:
            path = self._directory / f"{key}.json"
            if path.exists():
                reply = json.loads(path.read_text(encoding="utf-8"))["reply"]
                with self._lock:
                    self._memory[key] = reply
                return reply
        return None

    def put(self, key: str, reply: str) -> None:
        with self._lock:
            self._memory[key] = reply
        if self._directory is not None:
            path = self._directory / f"{key}.json"
            path.write_text(json.dumps({"reply": reply}), encoding="utf-8")


def _render(role: str, **inputs) -> tuple[Message, ...]:
    if role in (ROLE_ANSWER, ROLE_RUBRIC):
        system = prompts.ANSWER_RUBRIC_SYSTEM_PROMPT
        user: tuple[Part, ...] = (
            TextPart(
                prompts.answer_rubric_user_prompt(
                    inputs["question"], inputs["ground_truth"], inputs["answer"]
                )
            ),
        )
    elif role == ROLE_EXTRACTOR:
        system = prompts.EXTRACTOR_SYSTEM_PROMPT
        user = (TextPart(prompts.extractor_user_prompt(inputs["question"], inputs["response"])),)
    elif role == ROLE_DIFFICULTY:
        system = prompts.DIFFICULTY_SYSTEM_PROMPT
        parts: list[Part] = []
        image = inputs.get("image")
        image_path = inputs.get("image_path")
        if image is not None or image_path is not None:
            parts.append(ImagePart(image=image, path=image_path))
        parts.append(TextPart(prompts.difficulty_user_prompt(inputs["question"])))
        user = tuple(parts)
    else:
        raise ValueError(f"unknown judge role {role!r}")
    return (
        Message(role="system", parts=(TextPart(system),)),
        Message(role="user", parts=user),
    )


def _cache_key(role: str, messages: tuple[Message, ...]) -> str:
    hasher = hashlib.sha256()
    hasher.update(role.encode("utf-8"))
    for message in messages:
        hasher.update(b"\x00" + message.role.encode("utf-8"))
        for part in message.parts:
            if isinstance(part, TextPart):
                hasher.update(b"\x01" + part.text.encode("utf-8"))
            else:
                if part.image is not None:
                    hasher.update(b"\x02" + ppm_bytes(part.image))
                else:
                    hasher.update(b"\x03" + (part.path or "").encode("utf-8"))
    return hasher.hexdigest()


@dataclass
class JudgeHandle:
    """One judge role bound to a transport, an optional cache, and an
    optional shared rate limiter bounding concurrent wire calls."""

    role: str
    transport: Transport
    cache: JudgeCache | None = None
    limiter: RateLimiter | None = None
    temperature: float = 0.0
    top_p: float = 1.0

    def invoke(self, *, bypass_cache: bool = False, **inputs) -> str:
        messages = _render(self.role, **inputs)
        key = _cache_key(self.role, messages)
        if self.cache is not None and not bypass_cache:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        request = GenerationRequest(
            messages=messages, temperature=self.temperature, top_p=self.top_p
        )
        if self.limiter is not None:
            with self.limiter:
                reply = self.transport(request)
        else:
            reply = self.transport(request)
        if self.cache is not None:
            self.cache.put(key, reply)
        return reply


def http_transport(url: str, timeout: float = 30.0, retries: int = 1) -> Transport:
    """Chat-wire transport for hosted judges; retries once, then raises."""

    def call(request: GenerationRequest) -> str:
        payload = request_to_wire(request)
        last_exc: Exception | None = None
        for attempt in range(retries + 1):
            try:
                resp = requests.post(url, json=payload, timeout=timeout)
                resp.raise_for_status()
                return resp.json()["text"]
            except (requests.RequestException, ValueError, KeyError) as exc:
                last_exc = exc
                if attempt < retries:
                    logger.warning("judge call failed (%s); retrying", exc)
        raise TransportError(f"judge {url} failed: {last_exc}")

    return call


def parse_judge_score(text: str) -> float:
    """First float in the judge's reply; raises ValueError when absent."""
    match = _FLOAT_RE.search(text)
    if match is None:
        raise ValueError(f"no float in judge reply {text!r}")
    return float(match.group(0))


def answer_judge_fn(handle: JudgeHandle) -> Callable[[str, str, str], float]:
    """Adapt a judge handle to the reward engine's (q, gt, a) -> score shape."""

    def judge(question: str, ground_truth: str, answer: str) -> float:
        reply = handle.invoke(question=question, ground_truth=ground_truth, answer=answer)
        return parse_judge_score(reply)

    return judge


# --- deterministic mocks ----------------------------------------------------


def heuristic_answer_score(question: str, ground_truth: str, answer: str) -> float:
    """Pure lattice-valued similarity stand-in for the hosted judge."""
    gt = ground_truth.strip().lower()
    ans = answer.strip().lower()
    if not ans:
        return 0.0
    if gt == ans:
        return 1.0
    if gt in ans or ans in gt:
        return 0.75
    gt_tokens = set(tokenize(gt))
    ans_tokens = set(tokenize(ans))
    if not gt_tokens:
        return 0.0
    overlap = len(gt_tokens & ans_tokens) / len(gt_tokens)
    if overlap >= 0.5:
        return 0.5
    if overlap > 0.0:
        return 0.25
    return 0.0


def _all_text(request: GenerationRequest) -> str:
    return "\n".join(
        part.text
        for message in request.messages
        for part in message.parts
        if isinstance(part, TextPart)
    )


def _user_field(request: GenerationRequest, start: str, end: str | None) -> str:
    """Recover a field from our own user-prompt render format."""
    text = _all_text(request)
    begin = text.find(start)
    if begin == -1:
        return ""
    begin += len(start)
    if end is None:
        return text[begin:]
    stop = text.rfind(end)
    if stop == -1 or stop < begin:
        return text[begin:]
    return text[begin:stop]


def mock_rubric_transport(request: GenerationRequest) -> str:
    question = _user_field(request, "Question: ", ", Ground Truth: ")
    ground_truth = _user_field(request, ", Ground Truth: ", ", Model Answer: ")
    answer = _user_field(request, ", Model Answer: ", ", Score:")
    return str(heuristic_answer_score(question, ground_truth, answer))


def mock_extractor_transport(request: GenerationRequest) -> str:
    response = _user_field(request, ", Model Response: ", ", Extracted Answer:")
    parsed = parse_response(response)
    if parsed.answer_text is not None and parsed.answer_text.strip():
        return parsed.answer_text.strip()
    stripped = response.strip()
    if not stripped:
        return "Refusal"
    # Last short line of free-form text, mirroring a concise extraction.
    tail = stripped.splitlines()[-1].strip()
    return tail if 0 < len(tail) <= 80 else "Refusal"


def hash_difficulty_transport(request: GenerationRequest) -> str:
    """Deterministic 1..10 score derived from the question text."""
    question = _user_field(request, "Question: ", None)
    digest = hashlib.sha256(question.encode("utf-8")).digest()
    score = digest[0] % 10 + 1
    return json.dumps({"reasoning": "mock difficulty heuristic", "zoom_score": score})


def scripted_transport(replies: dict[str, str], default: str | None = None) -> Transport:
    """Returns the reply whose key occurs in the request's text; longest key
    wins so more specific entries shadow generic ones."""

    def call(request: GenerationRequest) -> str:
        text = _all_text(request)
        best: str | None = None
        for key in replies:
            if key in text and (best is None or len(key) > len(best)):
                best = key
        if best is not None:
            return replies[best]
        if default is not None:
            return default
        raise TransportError("scripted judge has no entry matching the request")

    return call


def mock_transport_for_role(role: str) -> Transport:
    if role in (ROLE_ANSWER, ROLE_RUBRIC):
        return mock_rubric_transport
    if role == ROLE_EXTRACTOR:
        return mock_extractor_transport
    if role == ROLE_DIFFICULTY:
        return hash_difficulty_transport
    raise ValueError(f"unknown judge role {role!r}")


def load_judge_script(path: str | Path, role: str) -> Transport:
    """Scripted transport from a JSON file: {role: {"by_key": {...},
    "default": "..."}}. Roles without an entry fall back to the builtin
    deterministic mock."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    entry = spec.get(role)
    if entry is None:
        return mock_transport_for_role(role)
    return scripted_transport(entry.get("by_key", {}), entry.get("default"))
