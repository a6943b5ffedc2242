"""The magnifying-glass agent: validate proposed boxes, crop, and upscale.

Validation clamps raw coordinates into the image (floor the mins, ceil the
maxes), then rejects degenerate rectangles and crops covering at least the
area limit (default 40% of the image). The valid/total counts (k, n) that
come out of here are the single source of truth for the zoom rewards.

When every box is rejected the agent returns the canonical failure message
verbatim, so round-2 prompts stay reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .errors import TransportError
from .images import scale_factor, upscale_bilinear, upscale_nearest
from .parsing import BoundingBox
from .types import RasterImage

logger = logging.getLogger(__name__)

AREA_LIMIT_DEFAULT = 0.40
TARGET_MIN_SIDE_DEFAULT = 448

METHOD_NEAREST = "nearest"
METHOD_BILINEAR = "bilinear"
METHOD_EXTERNAL_SR = "external_sr"

REASON_OK = "ok"
REASON_DEGENERATE = "degenerate"
REASON_AREA = "area_exceeds_limit"
REASON_UNPARSEABLE = "unparseable"

FAILURE_MESSAGE = (
    "Zoom failed: no valid regions were provided. "
    "Re-examine the original image and answer directly."
)


class SrService(Protocol):
    """External super-resolution slot: image in, magnified image out."""

    def upscale(self, image: RasterImage, target_min_side: int) -> RasterImage: ...


@dataclass(frozen=True)
class BoxVerdict:
    box: BoundingBox  # clamped, integer-valued coordinates
    valid: bool
    reason: str

    def __post_init__(self) -> None:
        if self.valid != (self.reason == REASON_OK):
            raise ValueError("valid flag must mirror reason == 'ok'")


@dataclass(frozen=True)
class ZoomCrop:
    index: int  # position in the proposal list
    box: BoundingBox
    image: RasterImage
    method_used: str
    sr_fell_back: bool = False


@dataclass(frozen=True)
class ZoomFeedback:
    outcome: str  # "crops" | "failure"
    crops: tuple[ZoomCrop, ...] = ()
    failure_message: str | None = None

    def __post_init__(self) -> None:
        if self.outcome == "crops" and not self.crops:
            raise ValueError("crops outcome requires at least one crop")
        if self.outcome == "failure" and self.failure_message != FAILURE_MESSAGE:
            raise ValueError("failure outcome must carry the canonical message")


@dataclass(frozen=True)
class ZoomConfig:
    area_limit: float = AREA_LIMIT_DEFAULT
    target_min_side: int = TARGET_MIN_SIDE_DEFAULT
    method: str = METHOD_NEAREST
    sr_service: SrService | None = field(default=None, compare=False)


def validate_boxes(
    boxes: Sequence[BoundingBox],
    width: int,
    height: int,
    area_limit: float = AREA_LIMIT_DEFAULT,
) -> list[BoxVerdict]:
    """Clamp and judge every proposed box against the protocol rules."""
    verdicts = []
    for box in boxes:
        if not all(math.isfinite(v) for v in box.as_tuple()):
            # The parser filters non-finite numbers, but external callers can
            # hand boxes in directly.
            verdicts.append(BoxVerdict(box, False, REASON_UNPARSEABLE))
            continue
        x1 = math.floor(min(max(box.x1, 0.0), float(width)))
        y1 = math.floor(min(max(box.y1, 0.0), float(height)))
        x2 = math.ceil(min(max(box.x2, 0.0), float(width)))
        y2 = math.ceil(min(max(box.y2, 0.0), float(height)))
        clamped = BoundingBox(float(x1), float(y1), float(x2), float(y2))
        if x2 <= x1 or y2 <= y1:
            verdicts.append(BoxVerdict(clamped, False, REASON_DEGENERATE))
            continue
        area_ratio = (x2 - x1) * (y2 - y1) / (width * height)
        if area_ratio >= area_limit:
            verdicts.append(BoxVerdict(clamped, False, REASON_AREA))
            continue
        verdicts.append(BoxVerdict(clamped, True, REASON_OK))
    return verdicts


def crop(image: RasterImage, verdict: BoxVerdict) -> RasterImage:
    """Exact pixel copy of a valid, clamped rectangle."""
    if not verdict.valid:
        raise ValueError(f"refusing to crop invalid box ({verdict.reason})")
    x1, y1, x2, y2 = (int(v) for v in verdict.box.as_tuple())
    return RasterImage(image.pixels[y1:y2, x1:x2])


def upscale(
    image: RasterImage,
    target_min_side: int,
    method: str = METHOD_NEAREST,
    sr_service: SrService | None = None,
) -> tuple[RasterImage, str, bool]:
    """Lift the short side to at least the target via an integer factor.

    Returns (image, method_used, sr_fell_back). A factor of 1 is a
    bit-identical pass-through for every method. An unreachable SR service
    falls back to bilinear; the flag records that for the transcript.
    """
    factor = scale_factor(image, target_min_side)
    if factor == 1:
        return image, method, False
    if method == METHOD_NEAREST:
        return upscale_nearest(image, factor), METHOD_NEAREST, False
    if method == METHOD_BILINEAR:
        return upscale_bilinear(image, factor), METHOD_BILINEAR, False
    if method == METHOD_EXTERNAL_SR:
        if sr_service is None:
            raise ValueError("external_sr requires a configured SR service")
        try:
            return sr_service.upscale(image, target_min_side), METHOD_EXTERNAL_SR, False
        except TransportError as exc:
            logger.warning("SR service unreachable (%s); falling back to bilinear", exc)
            return upscale_bilinear(image, factor), METHOD_BILINEAR, True
    raise ValueError(f"unknown upscale method {method!r}")


def execute_zoom(
    image: RasterImage,
    boxes: Sequence[BoundingBox],
    config: ZoomConfig = ZoomConfig(),
) -> tuple[ZoomFeedback, int, int]:
    """Validate, crop, and upscale every valid box in proposal order.

    Returns (feedback, k, n) where k counts valid boxes and n all proposed
    boxes; the reward engine must consume exactly these counts.
    """
    verdicts = validate_boxes(boxes, image.width, image.height, config.area_limit)
    n = len(verdicts)
    k = sum(1 for v in verdicts if v.valid)
    if k == 0:
        return ZoomFeedback(outcome="failure", failure_message=FAILURE_MESSAGE), k, n

    crops = []
    for index, verdict in enumerate(verdicts):
        if not verdict.valid:
            continue
        region = crop(image, verdict)
        upscaled, method_used, fell_back = upscale(
            region, config.target_min_side, config.method, config.sr_service
        )
        crops.append(
            ZoomCrop(
                index=index,
                box=verdict.box,
                image=upscaled,
                method_used=method_used,
                sr_fell_back=fell_back,
            )
        )
    return ZoomFeedback(outcome="crops", crops=tuple(crops)), k, n
