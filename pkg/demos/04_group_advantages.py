"""Group sampling, relative advantages, and the clipped-surrogate loss.

A stochastic mock backend produces G=16 varied rollouts for one input; the
spread of totals becomes standardized advantages, and the emitted token
log-probabilities feed the loss (ratio 1 at sampling time, so the KL term
is the only nonzero piece here).
"""

import numpy as np

from zoomrl.backends import StochasticMockBackend
from zoomrl.grpo import grpo_loss
from zoomrl.rollout import run_group
from zoomrl.types import RasterImage, Sample, Stage, load_stage_config

sample = Sample(
    id="demo",
    image_path="unused.ppm",
    question="How many birds are on the wire?",
    ground_truth="3",
    task_type="counting",
    gt_count=3,
)
rng = np.random.default_rng(2)
image = RasterImage(rng.integers(0, 256, size=(100, 100, 3), dtype=np.uint8))
cfg = load_stage_config(Stage.STAGE2)

batch, transcripts = run_group(
    StochasticMockBackend(emit_logprobs=True),
    sample,
    cfg,
    group_size=16,
    image=image,
    seed=0,
)

print(f"group of {batch.group_size} rollouts for input {batch.input_id!r}:")
print(f"{'member':>6} {'reward':>8} {'advantage':>10}")
for i, member in enumerate(batch.members):
    print(f"{i:>6} {member.reward:>8.4f} {member.advantage:>10.4f}")

advantages = [m.advantage for m in batch.members]
print(f"\nadvantage sum: {sum(advantages):+.2e} (centered)")
print(f"reward spread: min {min(m.reward for m in batch.members):.3f}, "
      f"max {max(m.reward for m in batch.members):.3f}")

loss, terms = grpo_loss(batch, eps=cfg.clip_eps, beta=cfg.kl_beta)
print(f"\ngrpo loss at sampling time (all ratios 1): {loss:.6f}")
print(f"  mean surrogate {np.mean(terms.member_surrogate_means):+.6f} "
      f"(equals mean advantage)")
print(f"  mean KL {np.mean(terms.member_kl_means):.6f} "
      f"(zero: reference equals sampling policy here)")
