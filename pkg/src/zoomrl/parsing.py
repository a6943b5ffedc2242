"""Tag-grammar parser for two-round model responses.

The protocol uses four tag families: <think>, <zoom>, <rethink>, <answer>.
Parsing is a total function: malformed input never raises, it just leaves
fields absent so the reward side scores the malformation. Only the first
occurrence of each opening and closing tag is honored; duplicates are
ignored, which keeps the single-pass protocol ungameable by tag spam.
"""

import math
import re
from dataclasses import dataclass, field

FAMILIES = ("think", "zoom", "rethink", "answer")

_BRACKET_GROUP_RE = re.compile(r"\[([^\[\]]*)\]")


@dataclass(frozen=True)
class BoundingBox:
    """Raw box coordinates exactly as parsed; validity is judged later."""

    x1: float
    y1: float
    x2: float
    y2: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class TagSpan:
    """First-occurrence scan result for one tag family."""

    open_found: bool
    close_found: bool
    ordered: bool
    open_idx: int = -1
    close_idx: int = -1
    content_start: int = -1
    content_end: int = -1


@dataclass(frozen=True)
class StructuredResponse:
    raw: str
    think_text: str | None
    zoom_payload: str | None
    zoom_boxes_raw: tuple[BoundingBox, ...]
    zoom_nested_in_think: bool
    rethink_text: str | None
    answer_text: str | None
    ordering_ok: dict[str, bool] = field(default_factory=dict)
    tags_present: dict[str, bool] = field(default_factory=dict)

    @property
    def zoom_triggered(self) -> bool:
        """True when the zoom block counts for format purposes: pair in
        order, nested inside the think block, and at least one parsed box."""
        return (
            self.ordering_ok.get("zoom", False)
            and self.zoom_nested_in_think
            and len(self.zoom_boxes_raw) > 0
        )


def _scan_family(raw: str, family: str) -> TagSpan:
    open_tag = f"<{family}>"
    close_tag = f"</{family}>"
    open_idx = raw.find(open_tag)
    close_idx = raw.find(close_tag)
    open_found = open_idx != -1
    close_found = close_idx != -1
    ordered = open_found and close_found and open_idx < close_idx
    if ordered:
        content_start = open_idx + len(open_tag)
        return TagSpan(
            open_found, close_found, True, open_idx, close_idx, content_start, close_idx
        )
    return TagSpan(open_found, close_found, False, open_idx, close_idx)


def parse_zoom_payload(payload: str) -> list[BoundingBox]:
    """Extract every 4-tuple of finite numerics from bracketed list syntax.

    Each innermost [..] group with exactly four finite numbers becomes one
    box, in order. Anything else (wrong arity, non-numerics, inf/nan) yields
    zero boxes for that group. An unparseable payload is an empty list, not
    an error.
    """
    boxes: list[BoundingBox] = []
    for group in _BRACKET_GROUP_RE.finditer(payload):
        fields_ = [f.strip() for f in group.group(1).split(",")]
        if len(fields_) != 4:
            continue
        try:
            values = [float(f) for f in fields_]
        except ValueError:
            continue
        if not all(math.isfinite(v) for v in values):
            continue
        boxes.append(BoundingBox(*values))
    return boxes


def parse_response(raw: str) -> StructuredResponse:
    """Parse raw model text into the structured two-round view.

    Total by design: every malformation is recorded as an absent field or a
    false flag, never an exception. Missing tags lower the reward; they are
    not errors.
    """
    spans = {family: _scan_family(raw, family) for family in FAMILIES}

    def text_of(family: str) -> str | None:
        span = spans[family]
        if not span.ordered:
            return None
        return raw[span.content_start : span.content_end]

    think = spans["think"]
    zoom = spans["zoom"]
    zoom_payload = text_of("zoom")
    zoom_nested = (
        think.ordered
        and zoom.ordered
        and zoom.open_idx >= think.content_start
        and zoom.close_idx + len("</zoom>") <= think.content_end
    )
    boxes = tuple(parse_zoom_payload(zoom_payload)) if zoom_payload is not None else ()

    return StructuredResponse(
        raw=raw,
        think_text=text_of("think"),
        zoom_payload=zoom_payload,
        zoom_boxes_raw=boxes,
        zoom_nested_in_think=zoom_nested,
        rethink_text=text_of("rethink"),
        answer_text=text_of("answer"),
        ordering_ok={f: spans[f].ordered for f in FAMILIES},
        tags_present={f: spans[f].open_found and spans[f].close_found for f in FAMILIES},
    )


def truncate_at_think_close(raw: str) -> tuple[str, bool]:
    """Enforce the round-1 stop rule: cut after the first </think>.

    Returns (text, violation). The violation flag is set when the stream ran
    past the close tag or never emitted one; the text is returned unchanged
    in the missing-tag case. Idempotent on its own output.
    """
    idx = raw.find("</think>")
    if idx == -1:
        return raw, True
    end = idx + len("</think>")
    return raw[:end], end != len(raw)
