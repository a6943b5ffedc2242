"""Core domain types: images, dataset records, and stage configuration.

Everything here is immutable after construction and safe to share across
concurrent workers. Dataset files are JSON Lines, one record per line, UTF-8.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from . import prompts
from .errors import ConfigError, DatasetError

TASK_TYPES = ("counting", "other")
DIFFICULTIES = ("easy", "medium", "hard")


class Stage(Enum):
    STAGE1 = "stage1"
    STAGE2 = "stage2"


class RasterImage:
    """8-bit RGB raster, row-major. The pixel buffer is frozen on construction."""

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) pixel array, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        arr = arr.copy()
        arr.setflags(write=False)
        self._pixels = arr

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and np.array_equal(
            self._pixels, other._pixels
        )

    def __hash__(self) -> int:
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self) -> str:
        return f"RasterImage({self.width}x{self.height})"


@dataclass(frozen=True)
class Sample:
    """One dataset record: an image reference, a question, and its answer."""

    id: str
    image_path: str
    question: str
    ground_truth: str
    task_type: str = "other"
    gt_count: int | None = None
    difficulty: str | None = None

    def __post_init__(self) -> None:
        if self.task_type not in TASK_TYPES:
            raise DatasetError(f"sample {self.id!r}: unknown task_type {self.task_type!r}")
        if self.difficulty is not None and self.difficulty not in DIFFICULTIES:
            raise DatasetError(f"sample {self.id!r}: unknown difficulty {self.difficulty!r}")
        if self.task_type == "counting":
            if self.gt_count is None:
                raise DatasetError(f"sample {self.id!r}: counting sample requires gt_count")
            if self.gt_count < 0:
                raise DatasetError(f"sample {self.id!r}: gt_count must be non-negative")
            try:
                parsed = int(self.ground_truth.strip())
            except ValueError:
                raise DatasetError(
                    f"sample {self.id!r}: counting ground_truth "
                    f"{self.ground_truth!r} is not an integer literal"
                ) from None
            if parsed != self.gt_count:
                raise DatasetError(
                    f"sample {self.id!r}: gt_count {self.gt_count} does not match "
                    f"ground_truth {self.ground_truth!r}"
                )

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "id": self.id,
            "image_path": self.image_path,
            "question": self.question,
            "ground_truth": self.ground_truth,
            "task_type": self.task_type,
        }
        if self.gt_count is not None:
            record["gt_count"] = self.gt_count
        if self.difficulty is not None:
            record["difficulty"] = self.difficulty
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "Sample":
        required = ("id", "image_path", "question", "ground_truth")
        for key in required:
            if key not in record:
                raise DatasetError(f"missing field {key!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(record) - known
        if unknown:
            raise DatasetError(f"unknown fields {sorted(unknown)}")
        gt_count = record.get("gt_count")
        if gt_count is not None and (isinstance(gt_count, bool) or not isinstance(gt_count, int)):
            raise DatasetError(f"gt_count must be an integer, got {gt_count!r}")
        return cls(
            id=str(record["id"]),
            image_path=str(record["image_path"]),
            question=str(record["question"]),
            ground_truth=str(record["ground_truth"]),
            task_type=record.get("task_type", "other"),
            gt_count=gt_count,
            difficulty=record.get("difficulty"),
        )


def load_samples(path: str | Path) -> list[Sample]:
    """Load and validate a JSONL dataset file. Failures carry the line number."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc}", line=line_no) from None
            try:
                samples.append(Sample.from_record(record))
            except DatasetError as exc:
                raise DatasetError(str(exc), line=line_no) from None
    return samples


def dump_samples(samples: list[Sample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_record(), ensure_ascii=False) + "\n")


DEFAULT_FMT_SUBWEIGHTS: Mapping[str, float] = MappingProxyType(
    {"zfmt": 0.5, "afmt": 0.1, "tfmt": 0.1, "rfmt": 0.1}
)

VARIANT_PRECISION = "precision"
VARIANT_RECALL_COUNTING = "recall_counting"


@dataclass(frozen=True)
class StageConfig:
    """Full bundle for one curriculum stage: prompts, reward variant, weights,
    and optimizer hyperparameters."""

    stage: Stage
    system_prompt: str
    prompt_suffix: str
    zoom_reward_variant: str
    lambda_ans: float = 2.0
    lambda_zoom: float = 1.0
    lambda_revo: float = 0.5
    fmt_subweights: Mapping[str, float] = field(default=DEFAULT_FMT_SUBWEIGHTS)
    clip_eps: float = 0.2
    kl_beta: float = 0.04
    group_size: int = 16
    batch_size: int = 64
    learning_rate: float = 2e-6
    sampling_temperature: float = 0.09
    max_steps: int = 300
    reference_policy: str = "base_model"


_STAGE_DEFAULTS: dict[Stage, dict[str, Any]] = {
    Stage.STAGE1: dict(
        system_prompt=prompts.STAGE1_SYSTEM_PROMPT,
        prompt_suffix=prompts.STAGE1_PROMPT_SUFFIX,
        zoom_reward_variant=VARIANT_PRECISION,
        kl_beta=0.04,
        sampling_temperature=0.09,
        learning_rate=2e-6,
        max_steps=300,
        reference_policy="base_model",
    ),
    Stage.STAGE2: dict(
        system_prompt=prompts.STAGE2_SYSTEM_PROMPT,
        prompt_suffix=prompts.STAGE2_PROMPT_SUFFIX,
        zoom_reward_variant=VARIANT_RECALL_COUNTING,
        kl_beta=0.03,
        sampling_temperature=1.0,
        learning_rate=5e-7,
        max_steps=225,
        reference_policy="stage1_model",
    ),
}

_NUMERIC_OVERRIDE_KEYS = {
    "lambda_ans",
    "lambda_zoom",
    "lambda_revo",
    "clip_eps",
    "kl_beta",
    "group_size",
    "batch_size",
    "learning_rate",
    "sampling_temperature",
    "max_steps",
}
_TEXT_OVERRIDE_KEYS = {"system_prompt", "prompt_suffix", "zoom_reward_variant", "reference_policy"}


def load_stage_config(
    stage: Stage | str, overrides: str | Path | Mapping[str, Any] | None = None
) -> StageConfig:
    """Build the stage bundle, optionally applying an override file or mapping.

    Overrides may change any numeric field and the format sub-weights.
    Prompt text is never altered implicitly: changing it requires an explicit
    ``system_prompt`` or ``prompt_suffix`` key in the override source.
    """
    if isinstance(stage, str):
        try:
            stage = Stage(stage.lower())
        except ValueError:
            raise ConfigError(f"unknown stage {stage!r}") from None

    fields_: dict[str, Any] = dict(_STAGE_DEFAULTS[stage])
    fields_["stage"] = stage

    if overrides is None:
        return StageConfig(**fields_)

    if isinstance(overrides, (str, Path)):
        try:
            with open(overrides, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read override file {overrides!r}: {exc}") from None
    if not isinstance(overrides, Mapping):
        raise ConfigError("override source must be a JSON object")

    for key, value in overrides.items():
        if key in _NUMERIC_OVERRIDE_KEYS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"override key {key!r} must be numeric, got {value!r}")
            fields_[key] = value
        elif key in _TEXT_OVERRIDE_KEYS:
            if not isinstance(value, str):
                raise ConfigError(f"override key {key!r} must be a string, got {value!r}")
            fields_[key] = value
        elif key == "fmt_subweights":
            if not isinstance(value, Mapping) or set(value) - set(DEFAULT_FMT_SUBWEIGHTS):
                raise ConfigError(f"override key 'fmt_subweights' has unknown sub-keys: {value!r}")
            merged = dict(DEFAULT_FMT_SUBWEIGHTS)
            merged.update({k: float(v) for k, v in value.items()})
            fields_["fmt_subweights"] = MappingProxyType(merged)
        else:
            raise ConfigError(f"unknown override key {key!r}")

    return StageConfig(**fields_)
