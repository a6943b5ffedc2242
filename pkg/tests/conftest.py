import json
from pathlib import Path

import numpy as np
import pytest

from zoomrl.images import write_ppm
from zoomrl.types import RasterImage, Sample, Stage, load_stage_config

DATA_DIR = Path(__file__).parent / "data"

SCORE_SAMPLES = [
    {"id": "s0", "question": "How many buses are in the picture?", "ground_truth": "4",
     "task_type": "counting", "gt_count": 4},
    {"id": "s1", "question": "How many buses are in the picture?", "ground_truth": "4",
     "task_type": "counting", "gt_count": 4},
    {"id": "s2", "question": "Is the plate on the table?", "ground_truth": "yes",
     "task_type": "other"},
    {"id": "s3", "question": "What animal is next to the couch?", "ground_truth": "cat",
     "task_type": "other"},
    {"id": "s4", "question": "How many signs are on the fence?", "ground_truth": "6",
     "task_type": "counting", "gt_count": 6},
    {"id": "s5", "question": "How many bicycles are there?", "ground_truth": "0",
     "task_type": "counting", "gt_count": 0},
    {"id": "s6", "question": "What vehicle is in the shadow?", "ground_truth": "blue bus",
     "task_type": "other"},
    {"id": "s7", "question": "How many wheels are by the bench?", "ground_truth": "2",
     "task_type": "counting", "gt_count": 2},
    {"id": "s8", "question": "Are there jars on the shelf?", "ground_truth": "no",
     "task_type": "other"},
    {"id": "s9", "question": "How many candles are on the sill?", "ground_truth": "5",
     "task_type": "counting", "gt_count": 5},
]


@pytest.fixture
def stage1_cfg():
    return load_stage_config(Stage.STAGE1)


@pytest.fixture
def stage2_cfg():
    return load_stage_config(Stage.STAGE2)


@pytest.fixture
def make_sample():
    def factory(**overrides):
        fields = dict(
            id="s1",
            image_path="image.ppm",
            question="How many buses are in the picture?",
            ground_truth="4",
            task_type="counting",
            gt_count=4,
        )
        fields.update(overrides)
        return Sample(**fields)

    return factory


def gradient_image(width=100, height=100):
    y, x = np.mgrid[0:height, 0:width]
    pixels = np.stack(
        [(x * 3) % 256, (y * 5) % 256, (x + y) % 256], axis=-1
    ).astype(np.uint8)
    return RasterImage(pixels)


@pytest.fixture
def make_image():
    """Deterministic color-gradient test image."""
    return gradient_image


@pytest.fixture
def score_fixture(tmp_path):
    """Samples file + fixture image matching the committed golden report."""
    ppm = tmp_path / "fixture.ppm"
    write_ppm(gradient_image(), ppm)
    samples_path = tmp_path / "samples.jsonl"
    samples_path.write_text(
        "".join(
            json.dumps({**record, "image_path": str(ppm)}, ensure_ascii=False) + "\n"
            for record in SCORE_SAMPLES
        ),
        encoding="utf-8",
    )
    return samples_path


def make_response(
    think="the scene is busy with several small distant vehicles",
    boxes="[[5, 5, 40, 40]]",
    rethink="after inspecting the crops closely I can confirm the count",
    answer="4",
    nested=True,
):
    """Well-formed two-round response text with configurable parts."""
    zoom = f"<zoom>{boxes}</zoom>" if boxes is not None else ""
    if nested:
        round1 = f"<think>{think} {zoom}</think>"
    else:
        round1 = f"<think>{think}</think>{zoom}"
    round2 = ""
    if rethink is not None:
        round2 += f"<rethink>{rethink}</rethink>"
    if answer is not None:
        round2 += f"<answer>{answer}</answer>"
    return round1 + round2
