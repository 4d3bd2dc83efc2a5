"""Axis-aligned box arithmetic: IoU, center/log-size delta coding, anchor grids.

Coordinates are continuous corner coordinates; area is (x2-x1)*(y2-y1) with no
pixel correction. Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# log(62.5); caps the size ratio decode() will apply so a corrupt delta cannot
# explode or vanish a box before the positivity check.
DELTA_CLAMP = 4.135


class DegenerateBoxError(ValueError):
    """An operation would produce a box without strictly positive area."""


@dataclass(frozen=True)
class Box:
    """Rectangle in pixel coordinates with x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate in {self!r}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise DegenerateBoxError(
                f"box must have positive width and height: {self!r}"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2)

    def to_list(self) -> list[float]:
        """JSON form: [x1, y1, x2, y2]."""
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_list(cls, coords: Sequence[float]) -> "Box":
        x1, y1, x2, y2 = coords
        return cls(float(x1), float(y1), float(x2), float(y2))


@dataclass(frozen=True)
class BoxDelta:
    """Offsets of a target box relative to an anchor: center shifts normalized
    by the anchor size and log-scale width/height ratios."""

    dx: float
    dy: float
    dw: float
    dh: float

    def __post_init__(self):
        for v in (self.dx, self.dy, self.dw, self.dh):
            if not math.isfinite(v):
                raise ValueError(f"non-finite delta component in {self!r}")

    def to_tuple(self) -> tuple[float, float, float, float]:
        return (self.dx, self.dy, self.dw, self.dh)

    def to_list(self) -> list[float]:
        return [self.dx, self.dy, self.dw, self.dh]

    @classmethod
    def from_list(cls, comps: Sequence[float]) -> "BoxDelta":
        dx, dy, dw, dh = comps
        return cls(float(dx), float(dy), float(dw), float(dh))


@dataclass(frozen=True)
class Anchor:
    """A grid anchor: its box plus where it came from in the (stride, cell,
    scale, ratio) lattice."""

    box: Box
    scale_index: int
    ratio_index: int
    stride: float
    row: int
    col: int


def iou(a: Box, b: Box) -> float:
    """Intersection over union in [0, 1]; boxes that only share an edge count
    as disjoint (open-interval intersection)."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def boxes_to_array(boxes: Sequence[Box]) -> np.ndarray:
    """(n, 4) float64 array of corner coordinates."""
    return np.array([b.to_list() for b in boxes], dtype=np.float64).reshape(-1, 4)


def iou_matrix(a_boxes: Sequence[Box], b_boxes: Sequence[Box]) -> np.ndarray:
    """Pairwise IoU, shape (len(a_boxes), len(b_boxes)).

    Uses the same arithmetic as iou() so scalar and vectorized paths agree
    bit for bit.
    """
    a = boxes_to_array(a_boxes)
    b = boxes_to_array(b_boxes)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0.0) & (ih > 0.0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def encode(anchor: Box, target: Box) -> BoxDelta:
    """Express target relative to anchor: dx, dy are center offsets divided by
    the anchor width/height; dw, dh are log size ratios."""
    ax, ay = anchor.center
    tx, ty = target.center
    return BoxDelta(
        dx=(tx - ax) / anchor.width,
        dy=(ty - ay) / anchor.height,
        dw=math.log(target.width / anchor.width),
        dh=math.log(target.height / anchor.height),
    )


def decode(anchor: Box, delta: BoxDelta, clamp: float = DELTA_CLAMP) -> Box:
    """Invert encode().

    dw and dh are clamped to +/-clamp before exponentiation; raises
    DegenerateBoxError if the resulting box still has no positive area
    (possible only for pathological anchors, e.g. subnormal sizes).
    """
    ax, ay = anchor.center
    cx = ax + delta.dx * anchor.width
    cy = ay + delta.dy * anchor.height
    w = anchor.width * math.exp(min(max(delta.dw, -clamp), clamp))
    h = anchor.height * math.exp(min(max(delta.dh, -clamp), clamp))
    if w <= 0.0 or h <= 0.0:
        raise DegenerateBoxError(
            f"decoded box has non-positive size {w}x{h} from {delta!r}"
        )
    return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def clip_box(box: Box, width: float, height: float, min_size: float = 1e-6) -> Box:
    """Clip a box to [0, width] x [0, height].

    A box lying entirely outside collapses onto the nearest edge with extent
    min_size so the result is always a valid Box.
    """
    if width < min_size or height < min_size:
        raise ValueError(f"image bounds {width}x{height} smaller than min_size")
    x1 = min(max(box.x1, 0.0), width - min_size)
    y1 = min(max(box.y1, 0.0), height - min_size)
    x2 = min(max(box.x2, x1 + min_size), width)
    y2 = min(max(box.y2, y1 + min_size), height)
    return Box(x1, y1, x2, y2)


def make_anchor_grid(
    width: float,
    height: float,
    strides: Sequence[float],
    scales: Sequence[float],
    ratios: Sequence[float],
) -> list[Anchor]:
    """One anchor per (cell, scale, ratio) for every stride level.

    A ratio r is width/height; with scale s the anchor is w = s*sqrt(r),
    h = s/sqrt(r), so the area is s^2 at every ratio. Anchors are centered on
    their cells and may extend beyond the image. The total count is
    sum over levels of ceil(width/stride) * ceil(height/stride)
    * len(scales) * len(ratios).
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    if not strides or not scales or not ratios:
        raise ValueError("strides, scales and ratios must all be non-empty")
    for name, vals in (("stride", strides), ("scale", scales), ("ratio", ratios)):
        for v in vals:
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} values must be positive, got {v}")

    anchors: list[Anchor] = []
    for stride in strides:
        n_rows = math.ceil(height / stride)
        n_cols = math.ceil(width / stride)
        for row in range(n_rows):
            for col in range(n_cols):
                cx = (col + 0.5) * stride
                cy = (row + 0.5) * stride
                for si, scale in enumerate(scales):
                    for ri, ratio in enumerate(ratios):
                        w = scale * math.sqrt(ratio)
                        h = scale / math.sqrt(ratio)
                        box = Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
                        anchors.append(Anchor(box, si, ri, float(stride), row, col))
    return anchors
