"""Two-round rollout orchestration against a pluggable backend.

One rollout is: round-1 draft (stopped at </think>), zoom execution on the
proposed boxes, feedback injection (labeled crops or the canonical failure
message), round-2 completion, then reward scoring over the concatenated
rounds with the zoom agent's (k, n). Stage errors are captured in the
transcript with zero rewards instead of crashing the batch.

Replay determinism: the per-call seed is derived from (base seed, member,
round) and passed to the backend, and the wall clock is injectable, so a
deterministic backend plus a fixed clock reproduces transcripts byte for
byte even under a parallel worker pool.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .backends import (
    Backend,
    GenerationRequest,
    GenerationResponse,
    ImagePart,
    Message,
    Part,
    TextPart,
)
from .errors import ZoomRLError
from .grpo import GroupBatch, GroupMember, TokenLogProbs, attach_advantages
from .images import Decoder, load_image, write_ppm
from .parsing import StructuredResponse, parse_response, truncate_at_think_close
from .rewards import AnswerJudge, RewardBreakdown, total_reward, zero_breakdown
from .types import RasterImage, Sample, StageConfig
from .zoom import ZoomConfig, ZoomFeedback, execute_zoom

logger = logging.getLogger(__name__)

Clock = Callable[[], float]


@dataclass(frozen=True)
class Round1Record:
    prompt: tuple[Message, ...]
    raw_output: str
    text: str
    truncation_violation: bool


@dataclass(frozen=True)
class ZoomRecord:
    feedback: ZoomFeedback
    k: int
    n: int


@dataclass(frozen=True)
class Round2Record:
    prompt: tuple[Message, ...]
    raw_output: str


@dataclass
class RolloutTranscript:
    sample_id: str
    stage: str
    backend_identity: str
    round1: Round1Record | None = None
    zoom: ZoomRecord | None = None
    round2: Round2Record | None = None
    parsed: StructuredResponse | None = None
    rewards: RewardBreakdown | None = None
    logprobs: TokenLogProbs | None = None
    timing: dict[str, float] | None = None
    error: str | None = None


def round1_prompt(sample: Sample, stage_cfg: StageConfig, image: RasterImage) -> tuple[Message, ...]:
    return (
        Message(role="system", parts=(TextPart(stage_cfg.system_prompt),)),
        Message(
            role="user",
            parts=(
                ImagePart(image=image, path=sample.image_path),
                TextPart(sample.question),
                TextPart(stage_cfg.prompt_suffix),
            ),
        ),
    )


def run_round1(
    backend: Backend,
    sample: Sample,
    stage_cfg: StageConfig,
    image: RasterImage,
    *,
    seed: int | None = None,
    top_p: float = 1.0,
) -> tuple[Round1Record, GenerationResponse]:
    """Round-1 draft: stage prompt, stage temperature, stopped at </think>.

    The stop sequence is both passed to the backend and enforced locally;
    the violation flag records a backend that ran past it.
    """
    prompt = round1_prompt(sample, stage_cfg, image)
    request = GenerationRequest(
        messages=prompt,
        temperature=stage_cfg.sampling_temperature,
        top_p=top_p,
        stop=("</think>",),
        seed=seed,
    )
    response = backend.generate(request)
    text, violation = truncate_at_think_close(response.text)
    record = Round1Record(
        prompt=prompt,
        raw_output=response.text,
        text=text,
        truncation_violation=violation,
    )
    return record, response


def build_round2_prompt(
    sample: Sample,
    round1: Round1Record,
    feedback: ZoomFeedback,
    stage_cfg: StageConfig,
    image: RasterImage,
) -> tuple[Message, ...]:
    """Round-2 conditioning: system prompt, original image, question and
    suffix, the round-1 text verbatim as assistant history, then the
    feedback block (labeled crops in proposal order, or the canonical
    failure message)."""
    feedback_parts: list[Part] = []
    if feedback.outcome == "crops":
        for i, item in enumerate(feedback.crops, start=1):
            x1, y1, x2, y2 = (int(v) for v in item.box.as_tuple())
            feedback_parts.append(TextPart(f"Region {i}: [{x1}, {y1}, {x2}, {y2}]"))
            feedback_parts.append(ImagePart(image=item.image))
    else:
        feedback_parts.append(TextPart(feedback.failure_message or ""))

    return (
        Message(role="system", parts=(TextPart(stage_cfg.system_prompt),)),
        Message(
            role="user",
            parts=(
                ImagePart(image=image, path=sample.image_path),
                TextPart(sample.question),
                TextPart(stage_cfg.prompt_suffix),
            ),
        ),
        Message(role="assistant", parts=(TextPart(round1.text),)),
        Message(role="user", parts=tuple(feedback_parts)),
    )


def _combined_logprobs(responses: list[GenerationResponse]) -> TokenLogProbs | None:
    """Stitch backend-reported token log-probabilities across both rounds.

    Sampling-time log-probabilities serve as logp_old; logp_new and logp_ref
    start out equal to them (on-policy ratio 1). Training infrastructure that
    rescores sequences under other policies can replace the tracks in the
    group batch file.
    """
    tokens: list[int] = []
    logps: list[float] = []
    for response in responses:
        if response.tokens is None or response.logprobs is None:
            return None
        tokens.extend(response.tokens)
        logps.extend(response.logprobs)
    if not tokens:
        return None
    try:
        return TokenLogProbs(
            tokens=tuple(tokens), logp_new=logps, logp_old=list(logps), logp_ref=list(logps)
        )
    except ValueError as exc:
        # A backend that reports unusable log-probabilities (wrong length,
        # positive values) should not sink the rollout; rewards don't need them.
        logger.warning("discarding backend log-probabilities: %s", exc)
        return None


def run_rollout(
    backend: Backend,
    sample: Sample,
    stage_cfg: StageConfig,
    judge: AnswerJudge | None = None,
    *,
    image: RasterImage | None = None,
    zoom_config: ZoomConfig = ZoomConfig(),
    seed: int | None = None,
    top_p: float = 1.0,
    clock: Clock = time.perf_counter,
    decoder: Decoder | None = None,
) -> RolloutTranscript:
    """Full two-round pipeline for one sample. Never raises on stage errors;
    failures come back as a transcript with an error marker and zero rewards.
    """
    transcript = RolloutTranscript(
        sample_id=sample.id, stage=stage_cfg.stage.value, backend_identity=backend.identity
    )
    timing: dict[str, float] = {}
    start = clock()
    try:
        if image is None:
            image = load_image(sample.image_path, decoder)

        t0 = clock()
        round1_seed = None if seed is None else 2 * seed
        round1, response1 = run_round1(
            backend, sample, stage_cfg, image, seed=round1_seed, top_p=top_p
        )
        transcript.round1 = round1
        timing["round1_s"] = clock() - t0

        t0 = clock()
        draft = parse_response(round1.text)
        feedback, k, n = execute_zoom(image, draft.zoom_boxes_raw, zoom_config)
        transcript.zoom = ZoomRecord(feedback=feedback, k=k, n=n)
        timing["zoom_s"] = clock() - t0

        t0 = clock()
        prompt2 = build_round2_prompt(sample, round1, feedback, stage_cfg, image)
        round2_seed = None if seed is None else 2 * seed + 1
        request2 = GenerationRequest(
            messages=prompt2,
            temperature=stage_cfg.sampling_temperature,
            top_p=top_p,
            seed=round2_seed,
        )
        response2 = backend.generate(request2)
        transcript.round2 = Round2Record(prompt=prompt2, raw_output=response2.text)
        timing["round2_s"] = clock() - t0

        t0 = clock()
        transcript.parsed = parse_response(round1.text + response2.text)
        transcript.rewards = total_reward(sample, transcript.parsed, k, n, stage_cfg, judge)
        transcript.logprobs = _combined_logprobs([response1, response2])
        timing["scoring_s"] = clock() - t0
    except ZoomRLError as exc:
        logger.warning("rollout failed for sample %s: %s (rewards zero-filled)", sample.id, exc)
        transcript.error = str(exc)
        transcript.rewards = zero_breakdown(str(exc))
    timing["total_s"] = clock() - start
    transcript.timing = timing
    return transcript


def run_group(
    backend: Backend,
    sample: Sample,
    stage_cfg: StageConfig,
    judge: AnswerJudge | None = None,
    group_size: int | None = None,
    *,
    image: RasterImage | None = None,
    zoom_config: ZoomConfig = ZoomConfig(),
    seed: int = 0,
    parallelism: int = 1,
    eps_std: float = 1e-4,
    require_logprobs: bool = False,
    clock: Clock = time.perf_counter,
) -> tuple[GroupBatch | None, list[RolloutTranscript]]:
    """G independent rollouts for one sample, with rewards turned into
    group-relative advantages.

    Groups with fewer than two successful members are discarded (None batch)
    with a logged reason; the transcripts are still returned for audit.
    """
    if group_size is None:
        group_size = stage_cfg.group_size
    if group_size < 2:
        raise ValueError(f"group size must be >= 2, got {group_size}")
    if require_logprobs and not backend.capabilities.returns_logprobs:
        raise ValueError(
            f"backend {backend.identity!r} does not return log-probabilities"
        )

    def member(i: int) -> RolloutTranscript:
        return run_rollout(
            backend,
            sample,
            stage_cfg,
            judge,
            image=image,
            zoom_config=zoom_config,
            seed=seed * group_size + i,
            clock=clock,
        )

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            transcripts = list(pool.map(member, range(group_size)))
    else:
        transcripts = [member(i) for i in range(group_size)]

    successful = [t for t in transcripts if t.error is None]
    if len(successful) < 2:
        logger.warning(
            "discarding group for sample %s: only %d of %d rollouts succeeded",
            sample.id,
            len(successful),
            group_size,
        )
        return None, transcripts

    batch = GroupBatch(
        input_id=sample.id,
        members=[
            GroupMember(reward=t.rewards.r_total, logprobs=t.logprobs) for t in successful
        ],
    )
    attach_advantages(batch, eps_std)
    return batch, transcripts


# --- transcript serialization ------------------------------------------------


def _part_to_dict(part: Part, image_ref: str | None = None) -> dict:
    if isinstance(part, TextPart):
        return {"type": "text", "text": part.text}
    return {"type": "image", "path": image_ref if image_ref is not None else part.path}


def _messages_to_dicts(
    messages: tuple[Message, ...], crop_refs: dict[int, str] | None = None
) -> list[dict]:
    out = []
    crop_counter = 0
    for message in messages:
        parts = []
        for part in message.parts:
            if isinstance(part, ImagePart) and part.path is None and crop_refs is not None:
                parts.append(_part_to_dict(part, crop_refs.get(crop_counter)))
                crop_counter += 1
            else:
                parts.append(_part_to_dict(part))
        out.append({"role": message.role, "parts": parts})
    return out


def transcript_to_dict(
    transcript: RolloutTranscript,
    crop_refs: dict[int, str] | None = None,
    include_timing: bool = True,
) -> dict:
    t = transcript
    out: dict = {
        "sample_id": t.sample_id,
        "stage": t.stage,
        "backend": t.backend_identity,
        "error": t.error,
        "timing": t.timing if include_timing else None,
    }
    if t.round1 is not None:
        out["round1"] = {
            "prompt": _messages_to_dicts(t.round1.prompt),
            "raw_output": t.round1.raw_output,
            "text": t.round1.text,
            "truncation_violation": t.round1.truncation_violation,
        }
    if t.zoom is not None:
        crops = []
        for j, item in enumerate(t.zoom.feedback.crops):
            crops.append(
                {
                    "index": item.index,
                    "box": list(item.box.as_tuple()),
                    "method_used": item.method_used,
                    "sr_fell_back": item.sr_fell_back,
                    "path": (crop_refs or {}).get(j),
                }
            )
        out["zoom"] = {
            "outcome": t.zoom.feedback.outcome,
            "failure_message": t.zoom.feedback.failure_message,
            "k": t.zoom.k,
            "n": t.zoom.n,
            "crops": crops,
        }
    if t.round2 is not None:
        out["round2"] = {
            "prompt": _messages_to_dicts(t.round2.prompt, crop_refs),
            "raw_output": t.round2.raw_output,
        }
    if t.parsed is not None:
        out["parsed"] = {
            "think_text": t.parsed.think_text,
            "zoom_boxes": [list(b.as_tuple()) for b in t.parsed.zoom_boxes_raw],
            "zoom_nested_in_think": t.parsed.zoom_nested_in_think,
            "rethink_text": t.parsed.rethink_text,
            "answer_text": t.parsed.answer_text,
            "ordering_ok": t.parsed.ordering_ok,
        }
    if t.rewards is not None:
        out["rewards"] = t.rewards.to_dict()
    out["logprobs"] = t.logprobs.to_record() if t.logprobs is not None else None
    return out


def write_transcripts(
    transcripts: list[RolloutTranscript],
    path: str | Path,
    crops_dir: str | Path | None = None,
    include_timing: bool = True,
) -> None:
    """Transcript file: one canonical-JSON object per rollout; crop images
    are written as sidecar PPM files referenced by relative path.

    ``include_timing=False`` drops the wall-clock timings so the file is
    byte-reproducible under a real clock.
    """
    path = Path(path)
    lines = []
    for idx, transcript in enumerate(transcripts):
        crop_refs: dict[int, str] = {}
        if crops_dir is not None and transcript.zoom is not None:
            crops_dir = Path(crops_dir)
            crops_dir.mkdir(parents=True, exist_ok=True)
            for j, item in enumerate(transcript.zoom.feedback.crops):
                name = f"{transcript.sample_id}_{idx:03d}_crop{j}.ppm"
                write_ppm(item.image, crops_dir / name)
                crop_refs[j] = str(Path(crops_dir.name) / name)
        lines.append(
            json.dumps(
                transcript_to_dict(transcript, crop_refs, include_timing),
                sort_keys=True,
                ensure_ascii=False,
                separators=(",", ":"),
            )
        )
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
