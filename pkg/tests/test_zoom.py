import numpy as np
import pytest

from zoomrl.errors import TransportError
from zoomrl.parsing import BoundingBox
from zoomrl.types import RasterImage
from zoomrl.zoom import (
    FAILURE_MESSAGE,
    ZoomConfig,
    crop,
    execute_zoom,
    upscale,
    validate_boxes,
)


class TestValidateBoxes:
    def test_ordinary_box_ok(self):
        [verdict] = validate_boxes([BoundingBox(10, 10, 50, 50)], 100, 100)
        assert verdict.valid
        assert verdict.reason == "ok"

    def test_area_limit_rejects_half_image(self):
        [verdict] = validate_boxes([BoundingBox(0, 0, 70, 70)], 100, 100)
        assert not verdict.valid
        assert verdict.reason == "area_exceeds_limit"

    def test_zero_width_degenerate(self):
        [verdict] = validate_boxes([BoundingBox(50, 50, 50, 80)], 100, 100)
        assert verdict.reason == "degenerate"

    def test_reversed_coordinates_degenerate(self):
        [verdict] = validate_boxes([BoundingBox(60, 10, 20, 50)], 100, 100)
        assert verdict.reason == "degenerate"

    def test_clamp_into_image(self):
        [verdict] = validate_boxes([BoundingBox(-5, -5, 30, 30)], 100, 100)
        assert verdict.valid
        assert verdict.box == BoundingBox(0, 0, 30, 30)

    def test_fractional_coordinates_floor_mins_ceil_maxes(self):
        [verdict] = validate_boxes([BoundingBox(1.7, 2.2, 10.1, 11.9)], 100, 100)
        assert verdict.box == BoundingBox(1, 2, 11, 12)

    def test_area_boundary_cases(self):
        # 100x100 image: 0.39 / 0.40 / 0.41 of the area.
        boxes = [
            BoundingBox(0, 0, 100, 39),
            BoundingBox(0, 0, 100, 40),
            BoundingBox(0, 0, 100, 41),
        ]
        verdicts = validate_boxes(boxes, 100, 100)
        assert [v.valid for v in verdicts] == [True, False, False]
        assert verdicts[1].reason == "area_exceeds_limit"

    def test_idempotent_on_clamped_output(self):
        first = validate_boxes([BoundingBox(-3.5, 0.2, 44.7, 31.0)], 100, 100)
        second = validate_boxes([v.box for v in first], 100, 100)
        assert [(v.box, v.valid, v.reason) for v in first] == [
            (v.box, v.valid, v.reason) for v in second
        ]

    def test_custom_area_limit(self):
        [strict] = validate_boxes([BoundingBox(0, 0, 30, 30)], 100, 100, area_limit=0.05)
        assert strict.reason == "area_exceeds_limit"

    def test_non_finite_coordinates_unparseable(self):
        nan = float("nan")
        verdicts = validate_boxes(
            [BoundingBox(nan, 0, 10, 10), BoundingBox(0, 0, float("inf"), 10)], 100, 100
        )
        assert [v.reason for v in verdicts] == ["unparseable", "unparseable"]
        assert not any(v.valid for v in verdicts)


class TestCrop:
    def test_exact_subblock(self, make_image):
        image = make_image(4, 4)
        [verdict] = validate_boxes([BoundingBox(1, 1, 3, 3)], 4, 4, area_limit=0.5)
        region = crop(image, verdict)
        np.testing.assert_array_equal(region.pixels, image.pixels[1:3, 1:3])

    def test_one_pixel_crop(self, make_image):
        image = make_image(4, 4)
        [verdict] = validate_boxes([BoundingBox(0, 0, 1, 1)], 4, 4)
        region = crop(image, verdict)
        assert (region.width, region.height) == (1, 1)

    def test_invalid_box_refused(self, make_image):
        [verdict] = validate_boxes([BoundingBox(0, 0, 90, 90)], 100, 100)
        with pytest.raises(ValueError, match="invalid box"):
            crop(make_image(), verdict)


class FlakySr:
    def __init__(self, fail=True):
        self.fail = fail
        self.calls = 0

    def upscale(self, image, target_min_side):
        self.calls += 1
        if self.fail:
            raise TransportError("service down")
        return RasterImage(np.zeros((target_min_side, target_min_side, 3), dtype=np.uint8))


class TestUpscale:
    def test_pass_through_when_large_enough(self, make_image):
        image = make_image(500, 500)
        out, method, fell_back = upscale(image, 448, "bilinear")
        assert out is image
        assert not fell_back

    def test_external_sr_used_when_available(self, make_image):
        sr = FlakySr(fail=False)
        out, method, fell_back = upscale(make_image(10, 10), 40, "external_sr", sr)
        assert method == "external_sr"
        assert not fell_back
        assert sr.calls == 1

    def test_external_sr_falls_back_to_bilinear(self, make_image):
        image = make_image(10, 10)
        out, method, fell_back = upscale(image, 40, "external_sr", FlakySr(fail=True))
        assert method == "bilinear"
        assert fell_back
        assert (out.width, out.height) == (40, 40)

    def test_external_sr_requires_service(self, make_image):
        with pytest.raises(ValueError, match="SR service"):
            upscale(make_image(10, 10), 40, "external_sr", None)

    def test_unknown_method(self, make_image):
        with pytest.raises(ValueError, match="unknown upscale method"):
            upscale(make_image(10, 10), 40, "bicubic")


class TestExecuteZoom:
    def test_mixed_verdicts(self, make_image):
        image = make_image(100, 100)
        boxes = [
            BoundingBox(0, 0, 20, 20),
            BoundingBox(0, 0, 90, 90),  # oversized
            BoundingBox(40, 40, 70, 70),
        ]
        feedback, k, n = execute_zoom(image, boxes, ZoomConfig(target_min_side=40))
        assert (k, n) == (2, 3)
        assert feedback.outcome == "crops"
        assert [c.index for c in feedback.crops] == [0, 2]

    def test_all_degenerate_yields_canonical_failure(self, make_image):
        boxes = [BoundingBox(5, 5, 5, 5), BoundingBox(9, 9, 2, 2)]
        feedback, k, n = execute_zoom(make_image(), boxes)
        assert (k, n) == (0, 2)
        assert feedback.outcome == "failure"
        assert feedback.failure_message == FAILURE_MESSAGE

    def test_empty_box_list(self, make_image):
        feedback, k, n = execute_zoom(make_image(), [])
        assert (k, n) == (0, 0)
        assert feedback.outcome == "failure"

    def test_crops_are_upscaled_to_target(self, make_image):
        image = make_image(100, 100)
        feedback, k, n = execute_zoom(
            image, [BoundingBox(0, 0, 10, 10)], ZoomConfig(target_min_side=40)
        )
        [item] = feedback.crops
        assert min(item.image.width, item.image.height) >= 40
        assert item.method_used == "nearest"

    def test_crop_content_matches_direct_crop(self, make_image):
        image = make_image(100, 100)
        feedback, _, _ = execute_zoom(
            image, [BoundingBox(10, 20, 30, 40)], ZoomConfig(target_min_side=1)
        )
        [item] = feedback.crops
        np.testing.assert_array_equal(item.image.pixels, image.pixels[20:40, 10:30])

    def test_failure_message_is_stable(self):
        assert FAILURE_MESSAGE == (
            "Zoom failed: no valid regions were provided. "
            "Re-examine the original image and answer directly."
        )
