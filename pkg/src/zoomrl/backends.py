"""Generation backends and wire clients.

The backend contract is a chat-completion-style exchange: ordered messages
of interleaved text and image parts, sampling parameters, and stop
sequences; the response is text plus optional per-token log-probabilities.
Images travel base64-encoded with a declared format. The same wire shape
serves judges.

Local mocks implement the same protocol so rollouts replay byte-identically
without a server: a scripted backend replays canned text keyed by question,
and a stochastic mock fabricates plausibly-structured two-round responses
from the request seed.
"""

from __future__ import annotations

import base64
import logging
import threading
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import ImageError, TransportError
from .images import ppm_bytes, read_ppm_bytes
from .types import RasterImage

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    image: RasterImage | None = None
    path: str | None = None
    format: str = "ppm"

    def pixels(self) -> RasterImage:
        if self.image is not None:
            return self.image
        if self.path is not None:
            from .images import read_ppm

            return read_ppm(self.path)
        raise ValueError("image part carries neither pixels nor a path")


Part = TextPart | ImagePart


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    parts: tuple[Part, ...]


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple[Message, ...]
    temperature: float = 1.0
    top_p: float = 1.0
    stop: tuple[str, ...] = ()
    seed: int | None = None


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    tokens: tuple[int, ...] | None = None
    logprobs: tuple[float, ...] | None = None


@dataclass(frozen=True)
class BackendCapabilities:
    multimodal: bool = True
    returns_logprobs: bool = False


class Backend(Protocol):
    identity: str
    capabilities: BackendCapabilities

    def generate(self, request: GenerationRequest) -> GenerationResponse: ...


def request_to_wire(request: GenerationRequest) -> dict:
    messages = []
    for message in request.messages:
        content = []
        for part in message.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                data = ppm_bytes(part.pixels())
                content.append(
                    {
                        "type": "image",
                        "format": part.format,
                        "data": base64.b64encode(data).decode("ascii"),
                    }
                )
        messages.append({"role": message.role, "content": content})
    wire: dict = {
        "messages": messages,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "stop": list(request.stop),
    }
    if request.seed is not None:
        wire["seed"] = request.seed
    return wire


def request_from_wire(wire: dict) -> GenerationRequest:
    messages = []
    for message in wire["messages"]:
        parts: list[Part] = []
        for item in message["content"]:
            if item["type"] == "text":
                parts.append(TextPart(item["text"]))
            elif item["type"] == "image":
                raw = base64.b64decode(item["data"])
                if item.get("format", "ppm") != "ppm":
                    raise ValueError(f"unsupported image format {item.get('format')!r}")
                parts.append(ImagePart(image=read_ppm_bytes(raw)))
            else:
                raise ValueError(f"unknown part type {item['type']!r}")
        messages.append(Message(role=message["role"], parts=tuple(parts)))
    return GenerationRequest(
        messages=tuple(messages),
        temperature=wire.get("temperature", 1.0),
        top_p=wire.get("top_p", 1.0),
        stop=tuple(wire.get("stop", ())),
        seed=wire.get("seed"),
    )


def response_from_wire(wire: dict) -> GenerationResponse:
    tokens = wire.get("tokens")
    logprobs = wire.get("logprobs")
    return GenerationResponse(
        text=wire["text"],
        tokens=tuple(tokens) if tokens is not None else None,
        logprobs=tuple(logprobs) if logprobs is not None else None,
    )


def response_to_wire(response: GenerationResponse) -> dict:
    wire: dict = {"text": response.text}
    if response.tokens is not None:
        wire["tokens"] = list(response.tokens)
    if response.logprobs is not None:
        wire["logprobs"] = list(response.logprobs)
    return wire


class HttpBackend:
    """Chat-completion wire client with one retry on transport failure."""

    def __init__(
        self,
        url: str,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = 1,
        returns_logprobs: bool = False,
    ):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.identity = f"http:{url}"
        self.capabilities = BackendCapabilities(
            multimodal=True, returns_logprobs=returns_logprobs
        )

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        payload = request_to_wire(request)
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(self.url, json=payload, timeout=self.timeout)
                resp.raise_for_status()
                return response_from_wire(resp.json())
            except (requests.RequestException, ValueError, KeyError) as exc:
                last_exc = exc
                if attempt < self.retries:
                    logger.warning("backend call failed (%s); retrying", exc)
        raise TransportError(f"backend {self.url} failed: {last_exc}")


def _find_question(request: GenerationRequest, keys: Sequence[str]) -> str | None:
    for message in request.messages:
        for part in message.parts:
            if isinstance(part, TextPart) and part.text in keys:
                return part.text
    return None


def _is_round2(request: GenerationRequest) -> bool:
    return any(m.role == "assistant" for m in request.messages)


class ScriptedBackend:
    """Replays canned responses keyed by the question text.

    Scripts map a question to ``{"round1": [...], "round2": [...]}``; a
    ``default`` entry catches everything else. The request seed selects the
    list entry (modulo length), so groups replay deterministically even when
    rollouts run in parallel.
    """

    def __init__(self, script: dict, identity: str = "scripted-mock"):
        self.script = script
        self.identity = identity
        self.capabilities = BackendCapabilities(multimodal=True, returns_logprobs=False)

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        by_question = self.script.get("by_question", {})
        key = _find_question(request, list(by_question))
        entry = by_question.get(key) if key is not None else None
        if entry is None:
            entry = self.script.get("default")
        if entry is None:
            raise TransportError(f"{self.identity}: no script entry matches the request")
        round_key = "round2" if _is_round2(request) else "round1"
        options = entry.get(round_key, [])
        if not options:
            raise TransportError(f"{self.identity}: script has no {round_key} responses")
        index = (request.seed or 0) % len(options)
        return GenerationResponse(text=options[index])


_MOCK_WORDS = (
    "the region shows small distant objects near crowded background edges "
    "with partial occlusion and fine texture detail visible only after zoom"
).split()

_MOCK_ANSWERS = ("1", "2", "3", "4", "5", "yes", "no", "cat", "bus")


@dataclass
class StochasticMockBackend:
    """Fabricates two-round responses with seeded variety: tag families and
    box validity vary so group rewards spread out."""

    emit_logprobs: bool = False
    identity: str = "stochastic-mock"
    capabilities: BackendCapabilities = field(
        default_factory=lambda: BackendCapabilities(multimodal=True, returns_logprobs=False)
    )

    def __post_init__(self) -> None:
        if self.emit_logprobs:
            self.capabilities = BackendCapabilities(multimodal=True, returns_logprobs=True)

    def _image_size(self, request: GenerationRequest) -> tuple[int, int]:
        for message in request.messages:
            for part in message.parts:
                if isinstance(part, ImagePart) and part.image is not None:
                    return part.image.width, part.image.height
        return 100, 100

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        rng = np.random.default_rng(0 if request.seed is None else request.seed)
        width, height = self._image_size(request)

        def words(count: int) -> str:
            return " ".join(rng.choice(_MOCK_WORDS, size=count))

        if not _is_round2(request):
            n_boxes = int(rng.integers(0, 4))
            boxes = []
            for _ in range(n_boxes):
                x1 = int(rng.integers(0, max(1, width - 10)))
                y1 = int(rng.integers(0, max(1, height - 10)))
                bw = int(rng.integers(2, max(3, width // 2)))
                bh = int(rng.integers(2, max(3, height // 2)))
                boxes.append(f"[{x1}, {y1}, {x1 + bw}, {y1 + bh}]")
            zoom_block = f"<zoom>[{', '.join(boxes)}]</zoom>" if boxes else ""
            body = f"<think>{words(int(rng.integers(3, 20)))} {zoom_block}</think>"
            if rng.random() < 0.1:
                body = body.replace("<think>", "", 1)  # occasional format break
            text = body
        else:
            answer = str(rng.choice(_MOCK_ANSWERS))
            text = f"<rethink>{words(int(rng.integers(3, 30)))}</rethink><answer>{answer}</answer>"

        tokens = logprobs = None
        if self.emit_logprobs:
            count = max(1, len(text.split()))
            tokens = tuple(int(t) for t in rng.integers(0, 1000, size=count))
            logprobs = tuple(float(v) for v in -rng.uniform(0.05, 3.0, size=count))
        return GenerationResponse(text=text, tokens=tokens, logprobs=logprobs)


class HttpSrClient:
    """Wire client for the external super-resolution service: POST the PPM
    bytes with the desired minimum side, receive PPM bytes back.

    Safe to share across workers; in-flight requests are bounded.
    """

    def __init__(self, url: str, timeout: float = DEFAULT_TIMEOUT, max_in_flight: int = 4):
        self.url = url
        self.timeout = timeout
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def upscale(self, image: RasterImage, target_min_side: int) -> RasterImage:
        try:
            with self._gate:
                resp = requests.post(
                    self.url,
                    data=ppm_bytes(image),
                    headers={
                        "Content-Type": "image/x-portable-pixmap",
                        "X-Target-Min-Side": str(target_min_side),
                    },
                    timeout=self.timeout,
                )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise TransportError(f"SR service {self.url} failed: {exc}") from exc
        try:
            return read_ppm_bytes(resp.content)
        except ImageError as exc:
            raise TransportError(f"SR service returned an undecodable image: {exc}") from exc
