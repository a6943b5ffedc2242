"""The magnifying-glass agent on a synthetic image.

Validates a mixed bag of proposed boxes (in-bounds, oversized, degenerate,
out-of-frame), crops the survivors, and upscales them with the bit-exact
nearest-neighbor path. Ends with the canonical failure message path.
"""

import numpy as np

from zoomrl import BoundingBox, execute_zoom, validate_boxes
from zoomrl.types import RasterImage
from zoomrl.zoom import ZoomConfig

rng = np.random.default_rng(0)
image = RasterImage(rng.integers(0, 256, size=(120, 160, 3), dtype=np.uint8))
print(f"image: {image.width}x{image.height}")

proposals = [
    BoundingBox(10, 10, 60, 50),      # fine
    BoundingBox(0, 0, 150, 110),      # covers ~86% of the image: rejected
    BoundingBox(30, 30, 30, 80),      # zero width: degenerate
    BoundingBox(-20, -10, 40, 35),    # clamped into frame, then fine
    BoundingBox(100.5, 20.2, 140.9, 60.7),  # fractional coords: floor/ceil
]

print("\nverdicts (area limit 40%):")
for verdict in validate_boxes(proposals, image.width, image.height):
    box = tuple(int(v) for v in verdict.box.as_tuple())
    print(f"  {box} -> {verdict.reason}")

feedback, k, n = execute_zoom(image, proposals, ZoomConfig(target_min_side=128))
print(f"\nexecuted zoom: outcome={feedback.outcome}, k={k} valid of n={n}")
for item in feedback.crops:
    print(f"  crop from proposal {item.index}: {item.image.width}x{item.image.height} "
          f"via {item.method_used}")

feedback, k, n = execute_zoom(image, [BoundingBox(5, 5, 5, 5)], ZoomConfig())
print(f"\nall-invalid proposal: k={k}, n={n}")
print(f"canonical failure message:\n  {feedback.failure_message}")
