"""A complete two-round rollout against a scripted backend.

Round 1 drafts reasoning and zoom boxes and halts at </think>; the agent
crops and magnifies; round 2 receives the labeled crops, rethinks, and
answers. The transcript carries prompts, the zoom record, parsed views,
and the reward breakdown.
"""

import numpy as np

from zoomrl.backends import ScriptedBackend, TextPart
from zoomrl.rollout import run_rollout
from zoomrl.types import RasterImage, Sample, Stage, load_stage_config
from zoomrl.zoom import ZoomConfig

SCRIPT = {
    "default": {
        "round1": [
            "<think>Several vehicles cluster near the intersection and two more "
            "shapes hide behind the guardrail, so I will magnify three regions "
            "<zoom>[[5, 5, 40, 40], [50, 5, 90, 45], [10, 50, 60, 90]]</zoom>"
            "</think>THIS RUNS PAST THE STOP RULE"
        ],
        "round2": [
            "<rethink>The crops show three blue buses plus one occluded white "
            "bus, so the count is four</rethink><answer>4</answer>"
        ],
    }
}

sample = Sample(
    id="demo",
    image_path="unused.ppm",
    question="How many buses are in the picture?",
    ground_truth="4",
    task_type="counting",
    gt_count=4,
)
rng = np.random.default_rng(1)
image = RasterImage(rng.integers(0, 256, size=(100, 100, 3), dtype=np.uint8))

transcript = run_rollout(
    ScriptedBackend(SCRIPT),
    sample,
    load_stage_config(Stage.STAGE2),
    image=image,
    zoom_config=ZoomConfig(target_min_side=64),
    seed=0,
)

print("round 1 raw output ended with junk after </think>; local truncation:")
print(f"  violation flag: {transcript.round1.truncation_violation}")
print(f"  kept text: ...{transcript.round1.text[-60:]}")

print(f"\nzoom record: outcome={transcript.zoom.feedback.outcome}, "
      f"k={transcript.zoom.k}, n={transcript.zoom.n}")

print("\nround-2 prompt structure:")
for message in transcript.round2.prompt:
    kinds = ", ".join(
        f"text({len(p.text)} chars)" if isinstance(p, TextPart) else "image"
        for p in message.parts
    )
    print(f"  [{message.role}] {kinds}")

labels = [p.text for p in transcript.round2.prompt[3].parts if isinstance(p, TextPart)]
print("\ncrop labels in proposal order:")
for label in labels:
    print(f"  {label}")

b = transcript.rewards
print(f"\nrewards: ans={b.r_ans}, zoom={b.r_zoom:.4f}, zfmt={b.r_zfmt:.4f}, "
      f"revo={b.r_revo:.4f} -> total {b.r_total:.4f}")
