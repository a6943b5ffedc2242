"""The evaluation protocol end to end with deterministic mock judges.

Raw responses go through strict extraction (with the Refusal sentinel),
rubric scoring on the {0, 0.25, 0.5, 0.75, 1.0} lattice, inclusion
accuracy, and difficulty stratification, then aggregate into the report
table.
"""

from zoomrl.evaluation import (
    aggregate,
    evaluate_response,
    render_table,
    stratify,
)
from zoomrl.judges import (
    JudgeCache,
    JudgeHandle,
    ROLE_DIFFICULTY,
    ROLE_EXTRACTOR,
    ROLE_RUBRIC,
    mock_extractor_transport,
    mock_rubric_transport,
    scripted_transport,
)
from zoomrl.types import Sample

samples = [
    Sample(id="e1", image_path="a.ppm", question="How many buses are there?",
           ground_truth="4", task_type="counting", gt_count=4),
    Sample(id="e2", image_path="b.ppm", question="What animal is on the couch?",
           ground_truth="cat", task_type="other"),
    Sample(id="e3", image_path="c.ppm", question="Is the mug on the shelf?",
           ground_truth="yes", task_type="other"),
]
responses = {
    "e1": "<rethink>three in front one behind</rethink><answer>4</answer>",
    "e2": "The image clearly shows a small feline resting there.\na black cat",
    "e3": "it is hard to tell because the shelf region is blurry and the mug "
          "could also be a bowl or a pot so no definitive statement seems safe",
}

cache = JudgeCache()
extractor = JudgeHandle(role=ROLE_EXTRACTOR, transport=mock_extractor_transport, cache=cache)
rubric = JudgeHandle(role=ROLE_RUBRIC, transport=mock_rubric_transport, cache=cache)
difficulty = JudgeHandle(
    role=ROLE_DIFFICULTY,
    transport=scripted_transport(
        {
            "How many buses are there?": '{"reasoning": "dense", "zoom_score": 9}',
            "What animal is on the couch?": '{"reasoning": "plain", "zoom_score": 2}',
        },
        default='{"reasoning": "moderate", "zoom_score": 5}',
    ),
    cache=cache,
)

records = []
for sample in samples:
    bucket = stratify(sample, difficulty)
    record = evaluate_response(
        sample, responses[sample.id], extractor, rubric, dataset="demo", bucket=bucket
    )
    records.append(record)
    print(f"{sample.id}: extracted={record.extracted!r:24} gpt={record.gpt_score:<5} "
          f"inclusion={record.inclusion} bucket={record.bucket}")

print()
print(render_table(aggregate(records)))
