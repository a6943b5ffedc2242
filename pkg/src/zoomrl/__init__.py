"""Two-round zoom-agent rollouts, rule-based rewards, group-relative policy
optimization math, and the matching evaluation protocol, runnable at desk
scale against pluggable model backends."""

from .evaluation import (
    REFUSAL,
    EvalRecord,
    aggregate,
    extract_answer,
    gpt_accuracy,
    inclusion_accuracy,
    stratify,
)
from .gradcheck import ToyPolicy, toy_policy_grad_check
from .grpo import (
    GroupBatch,
    GroupMember,
    TokenLogProbs,
    compute_advantages,
    grpo_loss,
    kl_term,
    surrogate_term,
)
from .parsing import (
    BoundingBox,
    StructuredResponse,
    parse_response,
    parse_zoom_payload,
    truncate_at_think_close,
)
from .rewards import (
    RewardBreakdown,
    answer_reward,
    format_rewards,
    rethink_volume_reward,
    total_reward,
    zoom_accuracy_reward,
    zoom_format_reward,
)
from .rollout import RolloutTranscript, build_round2_prompt, run_group, run_rollout
from .textstats import LexStats, lex_stats
from .types import (
    RasterImage,
    Sample,
    Stage,
    StageConfig,
    load_samples,
    load_stage_config,
)
from .zoom import (
    FAILURE_MESSAGE,
    BoxVerdict,
    ZoomConfig,
    ZoomFeedback,
    crop,
    execute_zoom,
    upscale,
    validate_boxes,
)

__version__ = "0.1.0"

__all__ = [
    "REFUSAL",
    "EvalRecord",
    "aggregate",
    "extract_answer",
    "gpt_accuracy",
    "inclusion_accuracy",
    "stratify",
    "ToyPolicy",
    "toy_policy_grad_check",
    "GroupBatch",
    "GroupMember",
    "TokenLogProbs",
    "compute_advantages",
    "grpo_loss",
    "kl_term",
    "surrogate_term",
    "BoundingBox",
    "StructuredResponse",
    "parse_response",
    "parse_zoom_payload",
    "truncate_at_think_close",
    "RewardBreakdown",
    "answer_reward",
    "format_rewards",
    "rethink_volume_reward",
    "total_reward",
    "zoom_accuracy_reward",
    "zoom_format_reward",
    "RolloutTranscript",
    "build_round2_prompt",
    "run_group",
    "run_rollout",
    "LexStats",
    "lex_stats",
    "RasterImage",
    "Sample",
    "Stage",
    "StageConfig",
    "load_samples",
    "load_stage_config",
    "FAILURE_MESSAGE",
    "BoxVerdict",
    "ZoomConfig",
    "ZoomFeedback",
    "crop",
    "execute_zoom",
    "upscale",
    "validate_boxes",
    "__version__",
]
