"""Group-relative policy optimization math on supplied log-probabilities.

Advantages standardize each member's reward against its group (sample
standard deviation, G-1 denominator, with a floor below which the whole
group collapses to zero advantage). The loss is the clipped importance-ratio
surrogate, token-averaged within a member and member-averaged within the
group, plus a beta-weighted nonnegative per-token KL estimate against the
reference policy. The sign is chosen so that minimizing the loss maximizes
the surrogate objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

DEFAULT_EPS_STD = 1e-4


@dataclass(frozen=True)
class TokenLogProbs:
    """Aligned per-token log-probabilities under the new, old (sampling),
    and reference policies."""

    tokens: tuple[int, ...]
    logp_new: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray

    def __post_init__(self) -> None:
        for name in ("logp_new", "logp_old", "logp_ref"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
        n = len(self.tokens)
        if n < 1:
            raise ValueError("token sequence must be non-empty")
        for name in ("logp_new", "logp_old", "logp_ref"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(
                    f"{name} has shape {arr.shape}, expected ({n},) to match tokens"
                )
            if np.any(arr > 0.0):
                raise ValueError(f"{name} contains positive values; log-probs must be <= 0")

    def to_record(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "logp_new": self.logp_new.tolist(),
            "logp_old": self.logp_old.tolist(),
            "logp_ref": self.logp_ref.tolist(),
        }

    @classmethod
    def from_record(cls, record: dict) -> "TokenLogProbs":
        return cls(
            tokens=tuple(record["tokens"]),
            logp_new=np.asarray(record["logp_new"], dtype=np.float64),
            logp_old=np.asarray(record["logp_old"], dtype=np.float64),
            logp_ref=np.asarray(record["logp_ref"], dtype=np.float64),
        )


@dataclass
class GroupMember:
    reward: float
    logprobs: TokenLogProbs | None = None
    advantage: float | None = None


@dataclass
class GroupBatch:
    """G sampled rollouts for one input, with rewards and (after
    compute_advantages) group-relative advantages."""

    input_id: str
    members: list[GroupMember]

    @property
    def group_size(self) -> int:
        return len(self.members)

    def rewards(self) -> list[float]:
        return [m.reward for m in self.members]


def compute_advantages(
    rewards: Iterable[float],
    eps_std: float = DEFAULT_EPS_STD,
    normalize: str = "std",
) -> list[float]:
    """Group-relative advantages: (r - mean) / std with the sample (G-1)
    standard deviation. Degenerate groups (std below the floor) get all-zero
    advantages rather than a mean-centered residue divided by the floor.

    ``normalize="mean"`` switches to mean-only centering (no division).
    """
    r = np.asarray(list(rewards), dtype=np.float64)
    if r.size < 2:
        raise ValueError(f"group must have at least 2 members, got {r.size}")
    if normalize == "mean":
        return (r - r.mean()).tolist()
    if normalize != "std":
        raise ValueError(f"unknown normalization {normalize!r}")
    std = float(np.std(r, ddof=1))
    if std < eps_std:
        return [0.0] * r.size
    return ((r - r.mean()) / std).tolist()


def attach_advantages(batch: GroupBatch, eps_std: float = DEFAULT_EPS_STD) -> GroupBatch:
    advantages = compute_advantages(batch.rewards(), eps_std)
    for member, adv in zip(batch.members, advantages):
        member.advantage = adv
    return batch


def surrogate_term(s: float, adv: float, eps: float) -> float:
    """Clipped-ratio surrogate: min(s * adv, clip(s, 1-eps, 1+eps) * adv)."""
    clipped = min(max(s, 1.0 - eps), 1.0 + eps)
    return min(s * adv, clipped * adv)


def kl_term(logp_new: float, logp_ref: float) -> float:
    """Nonnegative per-token KL estimate r - log(r) - 1, r = exp(ref - new).

    Computed as expm1(d) - d with d = logp_ref - logp_new, which stays
    nonnegative in floating point for every finite d.
    """
    d = logp_ref - logp_new
    return float(np.expm1(d) - d)


@dataclass
class GrpoLossTerms:
    """Per-token introspection table returned alongside the scalar loss."""

    ratios: list[np.ndarray] = field(default_factory=list)
    surrogate: list[np.ndarray] = field(default_factory=list)
    kl: list[np.ndarray] = field(default_factory=list)
    member_surrogate_means: list[float] = field(default_factory=list)
    member_kl_means: list[float] = field(default_factory=list)


def grpo_loss(batch: GroupBatch, eps: float, beta: float) -> tuple[float, GrpoLossTerms]:
    """Scalar loss for one group plus the per-token term table.

    Every member needs log-probabilities and a computed advantage. The
    advantage is constant across a member's tokens.
    """
    terms = GrpoLossTerms()
    for i, member in enumerate(batch.members):
        if member.logprobs is None:
            raise ValueError(f"member {i} has no log-probabilities")
        if member.advantage is None:
            raise ValueError(f"member {i} has no advantage; run compute_advantages first")
        lp = member.logprobs
        ratios = np.exp(lp.logp_new - lp.logp_old)
        clipped = np.clip(ratios, 1.0 - eps, 1.0 + eps)
        adv = member.advantage
        surrogate = np.minimum(ratios * adv, clipped * adv)
        d = lp.logp_ref - lp.logp_new
        kl = np.expm1(d) - d

        terms.ratios.append(ratios)
        terms.surrogate.append(surrogate)
        terms.kl.append(kl)
        terms.member_surrogate_means.append(float(surrogate.mean()))
        terms.member_kl_means.append(float(kl.mean()))

    surrogate_mean = float(np.mean(terms.member_surrogate_means))
    kl_mean = float(np.mean(terms.member_kl_means))
    loss = -surrogate_mean + beta * kl_mean
    return loss, terms


def write_group_batches(batches: Iterable[GroupBatch], path: str | Path) -> None:
    """Group batch file: one JSON object per group, members carrying tokens,
    the three log-probability tracks, reward, and advantage if computed."""
    with open(path, "w", encoding="utf-8") as fh:
        for batch in batches:
            members = []
            for m in batch.members:
                record: dict = {"reward": m.reward}
                if m.logprobs is not None:
                    record.update(m.logprobs.to_record())
                if m.advantage is not None:
                    record["advantage"] = m.advantage
                members.append(record)
            fh.write(
                json.dumps({"input_id": batch.input_id, "members": members}, sort_keys=True)
                + "\n"
            )


def read_group_batches(path: str | Path) -> list[GroupBatch]:
    batches = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            members = []
            for record in obj["members"]:
                logprobs = None
                if "tokens" in record:
                    logprobs = TokenLogProbs.from_record(record)
                members.append(
                    GroupMember(
                        reward=float(record["reward"]),
                        logprobs=logprobs,
                        advantage=record.get("advantage"),
                    )
                )
            batches.append(GroupBatch(input_id=obj["input_id"], members=members))
    return batches
