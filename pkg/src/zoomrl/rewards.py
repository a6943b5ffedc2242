"""Rule-based reward computation for two-round zoom-agent responses.

Four signals are combined into a weighted total:

* format rewards for each tag family (answer 1.0; think/rethink 0.5 each;
  zoom up to 1.0, gated on substantive, diverse round-1 reasoning),
* an answer reward (exact match 1.0, else 0.5 on a passing judge score),
* a zoom accuracy reward whose shape depends on the curriculum stage
  (precision of valid boxes in stage 1; recall against the ground-truth
  count with a spam penalty for counting tasks in stage 2),
* a rethink-volume reward growing with the square root of the unique-word
  count of the second-round reasoning.

All sub-rewards live in [0, 1] except think/rethink format (max 0.5); the
unweighted format sum is capped at 3.0 and the default-weight total at 4.2.
The valid/total box counts (k, n) must come from the zoom agent so that the
reward and the agent share one validity judgment.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .errors import ConfigError, RewardJudgeError
from .parsing import StructuredResponse
from .textstats import lex_stats
from .types import Sample, StageConfig, VARIANT_PRECISION, VARIANT_RECALL_COUNTING

# AnswerJudge scores a (question, ground_truth, answer) triplet in [0, 1].
AnswerJudge = Callable[[str, str, str], float]

MIN_UNIQUE_WORDS = 5
DIVERSITY_GATE = 0.4
LOG_SATURATION = 20.0
JUDGE_PASS_THRESHOLD = 0.7
SPAM_PENALTY = 0.05


@dataclass(frozen=True)
class RewardBreakdown:
    """Every sub-reward plus the intermediates, for the audit trail."""

    r_afmt: float = 0.0
    r_tfmt: float = 0.0
    r_rfmt: float = 0.0
    r_zfmt: float = 0.0
    r_fmt_unweighted: float = 0.0
    r_ans: float = 0.0
    r_zoom: float = 0.0
    r_revo: float = 0.0
    n_unique: int = 0
    diversity: float = 0.0
    n_unique_rethink: int = 0
    k: int = 0
    n: int = 0
    t_scale: float = 0.0
    s_scale: float = 0.0
    gpt_score: float | None = None
    r_total: float = 0.0
    error: str | None = None
    weights: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "r_afmt": self.r_afmt,
            "r_tfmt": self.r_tfmt,
            "r_rfmt": self.r_rfmt,
            "r_zfmt": self.r_zfmt,
            "r_fmt_unweighted": self.r_fmt_unweighted,
            "r_ans": self.r_ans,
            "r_zoom": self.r_zoom,
            "r_revo": self.r_revo,
            "n_unique": self.n_unique,
            "diversity": self.diversity,
            "n_unique_rethink": self.n_unique_rethink,
            "k": self.k,
            "n": self.n,
            "t_scale": self.t_scale,
            "s_scale": self.s_scale,
            "gpt_score": self.gpt_score,
            "r_total": self.r_total,
            "error": self.error,
        }


def format_rewards(resp: StructuredResponse) -> tuple[float, float, float]:
    """Per-family format rewards (answer, think, rethink).

    A family scores only when both tags are present in sequential order.
    """
    r_afmt = 1.0 if resp.ordering_ok.get("answer") else 0.0
    r_tfmt = 0.5 if resp.ordering_ok.get("think") else 0.0
    r_rfmt = 0.5 if resp.ordering_ok.get("rethink") else 0.0
    return r_afmt, r_tfmt, r_rfmt


def zoom_format_reward(
    resp: StructuredResponse,
    valid_box_exists: bool | None = None,
    *,
    n_unique: int | None = None,
    diversity: float | None = None,
) -> float:
    """Zoom format reward: gated on a triggered zoom block and substantive,
    diverse round-1 reasoning; grows logarithmically in the unique-word
    count and saturates at 1.0.

    ``valid_box_exists`` may override the "at least one parsed box tuple"
    component of the gate; by default it is derived from the parsed
    response. The lexical stats default to the round-1 think text.
    """
    if valid_box_exists is None:
        valid_box_exists = len(resp.zoom_boxes_raw) > 0
    i_zfmt = (
        resp.ordering_ok.get("zoom", False)
        and resp.zoom_nested_in_think
        and valid_box_exists
    )
    if not i_zfmt:
        return 0.0
    if n_unique is None or diversity is None:
        stats = lex_stats(resp.think_text or "")
        n_unique = stats.unique_words
        diversity = stats.diversity
    if n_unique < MIN_UNIQUE_WORDS:
        return 0.0
    if diversity < DIVERSITY_GATE:
        return 0.1
    log_term = min(1.0, math.log(n_unique + 1) / math.log(LOG_SATURATION))
    return 0.5 + 0.5 * log_term


def _normalize_answer(text: str) -> str:
    return text.strip().lower()


def answer_reward(
    sample: Sample, resp: StructuredResponse, judge: AnswerJudge | None
) -> tuple[float, float | None]:
    """Hierarchical answer reward: exact match 1.0, judge pass 0.5, else 0.

    Returns (reward, judge_score). The judge is only consulted when the
    answer tags are well-formed and the exact match fails; both short
    circuits keep judge cost down without changing the max-based result.
    Judge transport failures surface as RewardJudgeError with the sample id.
    """
    if not resp.ordering_ok.get("answer"):
        return 0.0, None
    answer = resp.answer_text or ""
    if _normalize_answer(answer) == _normalize_answer(sample.ground_truth):
        return 1.0, None
    if judge is None:
        return 0.0, None
    try:
        score = judge(sample.question, sample.ground_truth, answer)
    except Exception as exc:
        raise RewardJudgeError(sample.id, exc) from exc
    return (0.5 if score >= JUDGE_PASS_THRESHOLD else 0.0), score


def _reasoning_scales(
    resp: StructuredResponse, n_unique: int, diversity: float
) -> tuple[float, float]:
    """The stage-1 (T) and stage-2 (S) scaling factors tying zoom rewards to
    the quality of the round-1 reasoning."""
    i_zfmt = resp.zoom_triggered
    if not i_zfmt:
        return 0.0, 0.0
    substantive = n_unique >= MIN_UNIQUE_WORDS
    diverse = diversity >= DIVERSITY_GATE
    if substantive:
        t_scale = 1.0 if diverse else 0.1
    else:
        t_scale = 0.0
    s_scale = 0.1 + 0.9 * (1.0 if (substantive and diverse) else 0.0)
    return t_scale, s_scale


def zoom_accuracy_reward(
    sample: Sample,
    resp: StructuredResponse,
    k: int,
    n: int,
    stage_cfg: StageConfig,
    *,
    n_unique: int | None = None,
    diversity: float | None = None,
) -> tuple[float, float, float]:
    """Zoom accuracy reward for the agent's validity counts (k valid of n).

    Stage-1 precision variant: T * k/n. Stage-2 recall variant for counting
    tasks: S * max(0, min(1, k/count) - 0.05 * (n - k)); other tasks keep
    the precision core scaled by S. Clamped to [0, 1].

    Returns (r_zoom, T, S).
    """
    if k < 0 or n < 0 or k > n:
        raise ValueError(f"invalid box counts k={k}, n={n}")
    if n_unique is None or diversity is None:
        stats = lex_stats(resp.think_text or "")
        n_unique = stats.unique_words
        diversity = stats.diversity
    t_scale, s_scale = _reasoning_scales(resp, n_unique, diversity)

    f_box = k / n if n > 0 else 0.0
    variant = stage_cfg.zoom_reward_variant

    if variant == VARIANT_PRECISION:
        raw = t_scale * f_box
    elif variant == VARIANT_RECALL_COUNTING:
        if sample.task_type != "counting":
            raw = s_scale * f_box
        else:
            if sample.gt_count is None:
                raise ConfigError(
                    f"counting sample {sample.id!r} has no gt_count; cannot score recall"
                )
            if sample.gt_count == 0:
                # Zero-count questions reward abstention from boxing; k/0 is undefined.
                h_box = 1.0 if k == 0 else 0.0
            else:
                h_box = k / sample.gt_count
            g_box = n - k
            raw = s_scale * max(0.0, min(1.0, h_box) - SPAM_PENALTY * g_box)
    else:
        raise ConfigError(f"unknown zoom reward variant {variant!r}")

    return min(1.0, max(0.0, raw)), t_scale, s_scale


def rethink_volume_reward(
    resp: StructuredResponse, *, n_unique_rethink: int | None = None
) -> float:
    """Reward substantive second-round reasoning: gated at five unique words,
    growing with sqrt of the unique-word count, capped at 1.0, and halved
    when the answer tags are malformed."""
    if n_unique_rethink is None:
        n_unique_rethink = lex_stats(resp.rethink_text or "").unique_words
    if n_unique_rethink < MIN_UNIQUE_WORDS:
        return 0.0
    i_afmt = 1.0 if resp.ordering_ok.get("answer") else 0.0
    volume = min(1.0, 0.2 * math.sqrt(n_unique_rethink))
    return (0.5 + 0.5 * i_afmt) * volume


def total_reward(
    sample: Sample,
    resp: StructuredResponse,
    k: int,
    n: int,
    stage_cfg: StageConfig,
    judge: AnswerJudge | None = None,
) -> RewardBreakdown:
    """Compute every sub-reward and the weighted total for one response.

    (k, n) are the zoom agent's validity counts; they are recorded verbatim
    so the report stays consistent with the agent's judgment.
    """
    think_stats = lex_stats(resp.think_text or "")
    rethink_stats = lex_stats(resp.rethink_text or "")

    r_afmt, r_tfmt, r_rfmt = format_rewards(resp)
    r_zfmt = zoom_format_reward(
        resp, n_unique=think_stats.unique_words, diversity=think_stats.diversity
    )
    r_ans, gpt_score = answer_reward(sample, resp, judge)
    r_zoom, t_scale, s_scale = zoom_accuracy_reward(
        sample,
        resp,
        k,
        n,
        stage_cfg,
        n_unique=think_stats.unique_words,
        diversity=think_stats.diversity,
    )
    r_revo = rethink_volume_reward(resp, n_unique_rethink=rethink_stats.unique_words)

    w = stage_cfg.fmt_subweights
    r_total = (
        w["zfmt"] * r_zfmt
        + w["afmt"] * r_afmt
        + w["tfmt"] * r_tfmt
        + w["rfmt"] * r_rfmt
        + stage_cfg.lambda_ans * r_ans
        + stage_cfg.lambda_zoom * r_zoom
        + stage_cfg.lambda_revo * r_revo
    )

    return RewardBreakdown(
        r_afmt=r_afmt,
        r_tfmt=r_tfmt,
        r_rfmt=r_rfmt,
        r_zfmt=r_zfmt,
        r_fmt_unweighted=r_afmt + r_tfmt + r_rfmt + r_zfmt,
        r_ans=r_ans,
        r_zoom=r_zoom,
        r_revo=r_revo,
        n_unique=think_stats.unique_words,
        diversity=think_stats.diversity,
        n_unique_rethink=rethink_stats.unique_words,
        k=k,
        n=n,
        t_scale=t_scale,
        s_scale=s_scale,
        gpt_score=gpt_score,
        r_total=r_total,
        weights=dict(w),
    )


def zero_breakdown(error: str) -> RewardBreakdown:
    """An all-zero breakdown carrying an error marker, for failed rollouts."""
    return RewardBreakdown(error=error)
