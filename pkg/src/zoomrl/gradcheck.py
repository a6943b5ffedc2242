"""Desk-scale analytic-vs-numeric gradient verification of the GRPO loss.

A toy policy factorizes over positions: each of L positions holds an
independent categorical distribution over a small vocabulary, parameterized
by a logits table. Sequences are sampled once from a frozen old policy,
scored with a fixed synthetic reward, and the loss is then a deterministic,
almost-everywhere-smooth function of the new policy's logits, so a central
finite difference over every logit checks the analytic gradient (and with
it the loss implementation) end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grpo import GroupBatch, GroupMember, TokenLogProbs, compute_advantages, grpo_loss

MAX_VOCAB = 64
MAX_SEQ_LEN = 8
FD_STEP = 1e-5
# Gradients smaller than this are treated as zero-scale when forming the
# relative error, which keeps finite-difference roundoff (~1e-11 absolute)
# from masquerading as a large relative mismatch on vanishing entries.
REL_ERROR_FLOOR = 1e-6


@dataclass
class ToyPolicy:
    """Position-factorized categorical policy over a tiny vocabulary."""

    logits: np.ndarray
    temperature: float = 1.0

    def __post_init__(self) -> None:
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 2:
            raise ValueError("logits must be a (length, vocab) table")
        length, vocab = self.logits.shape
        if not (1 <= length <= MAX_SEQ_LEN):
            raise ValueError(f"sequence length must be in [1, {MAX_SEQ_LEN}], got {length}")
        if not (2 <= vocab <= MAX_VOCAB):
            raise ValueError(f"vocabulary must be in [2, {MAX_VOCAB}], got {vocab}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def seq_len(self) -> int:
        return self.logits.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.logits.shape[1]

    def log_probs(self) -> np.ndarray:
        """(length, vocab) log-softmax table at the policy temperature."""
        scaled = self.logits / self.temperature
        scaled = scaled - scaled.max(axis=1, keepdims=True)
        return scaled - np.log(np.exp(scaled).sum(axis=1, keepdims=True))

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """(count, length) token ids drawn independently per position."""
        p = self.probs()
        out = np.empty((count, self.seq_len), dtype=np.int64)
        for t in range(self.seq_len):
            out[:, t] = rng.choice(self.vocab_size, size=count, p=p[t])
        return out

    def sequence_logps(self, sequences: np.ndarray) -> np.ndarray:
        """(count, length) log-probabilities of the given token grid."""
        table = self.log_probs()
        positions = np.arange(self.seq_len)
        return table[positions, sequences]


def synthetic_rewards(sequences: np.ndarray) -> np.ndarray:
    """Fixed, spread-out reward as a pure function of the sampled tokens."""
    weights = np.arange(3, 3 + sequences.shape[1], dtype=np.int64)
    return ((sequences * weights).sum(axis=1) % 17) / 16.0


def _build_batch(
    logp_new: np.ndarray,
    logp_old: np.ndarray,
    logp_ref: np.ndarray,
    sequences: np.ndarray,
    advantages: list[float],
) -> GroupBatch:
    members = []
    for i in range(sequences.shape[0]):
        members.append(
            GroupMember(
                reward=0.0,
                logprobs=TokenLogProbs(
                    tokens=tuple(int(t) for t in sequences[i]),
                    logp_new=logp_new[i],
                    logp_old=logp_old[i],
                    logp_ref=logp_ref[i],
                ),
                advantage=advantages[i],
            )
        )
    return GroupBatch(input_id="toy", members=members)


def analytic_logit_gradient(
    policy_new: ToyPolicy,
    policy_old: ToyPolicy,
    policy_ref: ToyPolicy,
    sequences: np.ndarray,
    advantages: np.ndarray,
    eps: float,
    beta: float,
) -> np.ndarray:
    """Closed-form d(loss)/d(new-policy logits), shape (length, vocab).

    Uses the standard clipped-surrogate subgradient: the unclipped branch
    contributes s * advantage wherever it attains the min, zero elsewhere.
    """
    group_size, seq_len = sequences.shape
    lp_new = policy_new.sequence_logps(sequences)
    lp_old = policy_old.sequence_logps(sequences)
    lp_ref = policy_ref.sequence_logps(sequences)

    ratios = np.exp(lp_new - lp_old)
    clipped = np.clip(ratios, 1.0 - eps, 1.0 + eps)
    adv = advantages[:, None]
    unclipped_active = ratios * adv <= clipped * adv
    d_surrogate = np.where(unclipped_active, ratios * adv, 0.0)
    r = np.exp(lp_ref - lp_new)
    d_kl = 1.0 - r

    # d(loss)/d(logp_new) per member and token.
    coeff = (-d_surrogate + beta * d_kl) / (group_size * seq_len)

    # Chain through d(logp_new)/d(logits[t, v]) = (1[v == token] - p_t(v)) / tau.
    probs = policy_new.probs()
    grad = np.zeros_like(policy_new.logits)
    positions = np.broadcast_to(np.arange(seq_len), sequences.shape)
    np.add.at(grad, (positions.ravel(), sequences.ravel()), coeff.ravel())
    grad -= probs * coeff.sum(axis=0)[:, None]
    return grad / policy_new.temperature


@dataclass
class GradCheckResult:
    max_rel_error: float
    loss: float
    analytic_grad: np.ndarray
    numeric_grad: np.ndarray

    @property
    def passed(self) -> bool:
        return self.max_rel_error < 1e-4


def relative_errors(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_ERROR_FLOOR)
    return np.abs(a - b) / denom


def toy_policy_grad_check(
    policy_old: ToyPolicy | None = None,
    *,
    seed: int = 0,
    vocab_size: int = 32,
    seq_len: int = 8,
    group_size: int = 16,
    eps: float = 0.2,
    beta: float = 0.04,
    temperature: float = 1.0,
    step: float = FD_STEP,
    offset_scale: float = 0.3,
    uniform_rewards: bool = False,
) -> GradCheckResult:
    """Compare the analytic GRPO gradient against central finite differences
    over every logit of the new policy.

    The old policy samples the group once; the new and reference policies
    are seeded perturbations of it so the check exercises clipping and the
    KL term. ``uniform_rewards`` forces equal rewards (zero advantages) for
    the degenerate-gradient case.
    """
    rng = np.random.default_rng(seed)
    if policy_old is None:
        policy_old = ToyPolicy(
            logits=rng.normal(scale=1.0, size=(seq_len, vocab_size)),
            temperature=temperature,
        )
    seq_len = policy_old.seq_len
    vocab_size = policy_old.vocab_size

    theta_new = policy_old.logits + rng.normal(scale=offset_scale, size=policy_old.logits.shape)
    policy_ref = ToyPolicy(
        logits=policy_old.logits + rng.normal(scale=offset_scale, size=policy_old.logits.shape),
        temperature=policy_old.temperature,
    )

    sequences = policy_old.sample(rng, group_size)
    if uniform_rewards:
        rewards = np.ones(group_size)
    else:
        rewards = synthetic_rewards(sequences)
    advantages = compute_advantages(rewards.tolist())

    lp_old = policy_old.sequence_logps(sequences)
    lp_ref = policy_ref.sequence_logps(sequences)

    def loss_at(theta: np.ndarray) -> float:
        policy = ToyPolicy(logits=theta, temperature=policy_old.temperature)
        lp_new = policy.sequence_logps(sequences)
        batch = _build_batch(lp_new, lp_old, lp_ref, sequences, advantages)
        loss, _ = grpo_loss(batch, eps=eps, beta=beta)
        return loss

    loss = loss_at(theta_new)
    analytic = analytic_logit_gradient(
        ToyPolicy(logits=theta_new, temperature=policy_old.temperature),
        policy_old,
        policy_ref,
        sequences,
        np.asarray(advantages),
        eps,
        beta,
    )

    numeric = np.zeros_like(theta_new)
    for t in range(seq_len):
        for v in range(vocab_size):
            up_theta = theta_new.copy()
            up_theta[t, v] += step
            down_theta = theta_new.copy()
            down_theta[t, v] -= step
            numeric[t, v] = (loss_at(up_theta) - loss_at(down_theta)) / (2 * step)

    max_rel = float(relative_errors(analytic, numeric).max())
    return GradCheckResult(
        max_rel_error=max_rel, loss=loss, analytic_grad=analytic, numeric_grad=numeric
    )
