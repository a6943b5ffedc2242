"""Walk one model response through the full reward computation.

Shows how the tag grammar, the lexical gates, and the curriculum-stage
variants combine into the weighted total, then degrades the response piece
by piece to show each gate firing.
"""

from zoomrl import parse_response, total_reward, lex_stats
from zoomrl.types import Sample, Stage, load_stage_config

SAMPLE = Sample(
    id="demo",
    image_path="unused.ppm",
    question="How many buses are in the picture?",
    ground_truth="4",
    task_type="counting",
    gt_count=4,
)

GOOD = (
    "<think>The street is crowded and several distant vehicles could be buses, "
    "so I will magnify three candidate regions before counting "
    "<zoom>[[5, 5, 40, 40], [50, 5, 90, 45], [10, 50, 60, 90]]</zoom></think>"
    "<rethink>The magnified crops show three blue buses and one partially "
    "occluded white bus behind the guardrail, so four total</rethink>"
    "<answer>4</answer>"
)


def show(title, text, k, n, stage):
    cfg = load_stage_config(stage)
    resp = parse_response(text)
    b = total_reward(SAMPLE, resp, k, n, cfg)
    stats = lex_stats(resp.think_text or "")
    print(f"--- {title} ({stage.value}) ---")
    print(f"  think: {stats.unique_words} unique words, diversity {stats.diversity:.2f}")
    print(f"  format: answer {b.r_afmt}, think {b.r_tfmt}, rethink {b.r_rfmt}, "
          f"zoom {b.r_zfmt:.4f} (unweighted sum {b.r_fmt_unweighted:.4f})")
    print(f"  answer reward {b.r_ans}, zoom reward {b.r_zoom:.4f} "
          f"(k={k}, n={n}, T={b.t_scale}, S={b.s_scale}), rethink volume {b.r_revo:.4f}")
    print(f"  weighted total: {b.r_total:.4f}")
    print()


print("A well-formed two-round response, scored under both stages:\n")
show("full response", GOOD, k=3, n=3, stage=Stage.STAGE1)
show("full response", GOOD, k=3, n=3, stage=Stage.STAGE2)

print("Degradations:\n")
show("zoom block outside <think> (nesting gate)",
     GOOD.replace("<zoom>", "</think><zoom>").replace("</zoom></think>", "</zoom>"),
     k=3, n=3, stage=Stage.STAGE2)
show("repetitive reasoning (diversity gate)",
     GOOD.replace(
         "The street is crowded and several distant vehicles could be buses, "
         "so I will magnify three candidate regions before counting",
         "bus bus bus bus bus bus bus bus bus bus bus bus"),
     k=3, n=3, stage=Stage.STAGE2)
show("box spam (recall penalty: 3 valid of 20 proposed)", GOOD, k=3, n=20,
     stage=Stage.STAGE2)
show("no answer tags", GOOD.replace("<answer>4</answer>", "4"), k=3, n=3,
     stage=Stage.STAGE2)
