"""Greedy suppression over head/body pairs with a blended score, the classic
single-box baseline, and a deliberately naive reference implementation.

A pair is suppressed when EITHER part overlaps the kept pair's same part above
its threshold; overlaps exactly equal to a threshold survive (strict
inequality throughout).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite
from typing import Sequence

from .geom import Box, iou, iou_matrix


@dataclass(frozen=True)
class DetectionPair:
    """Final coupled detection: head and body boxes with their own scores."""

    head: Box
    body: Box
    head_score: float
    body_score: float

    def __post_init__(self):
        for name, s in (("head_score", self.head_score), ("body_score", self.body_score)):
            if not (isfinite(s) and 0.0 <= s <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {s}")

    def part_box(self, part: str) -> Box:
        return self.head if part == "head" else self.body

    def part_score(self, part: str) -> float:
        return self.head_score if part == "head" else self.body_score


@dataclass(frozen=True)
class NmsConfig:
    """Dual IoU thresholds plus the body-score weight of the blend."""

    omega_h: float
    omega_b: float
    lam: float

    def __post_init__(self):
        for name, v in (("omega_h", self.omega_h), ("omega_b", self.omega_b), ("lam", self.lam)):
            if not (isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def joint_score(pair: DetectionPair, lam: float) -> float:
    """Convex blend lam * body score + (1 - lam) * head score."""
    return lam * pair.body_score + (1.0 - lam) * pair.head_score


def joint_nms(pairs: Sequence[DetectionPair], config: NmsConfig) -> list[int]:
    """Greedy pair suppression.

    Repeatedly keeps the remaining pair with the highest blended score (ties to
    the lower input index) and removes every remaining pair whose head IoU with
    the kept head exceeds omega_h OR whose body IoU with the kept body exceeds
    omega_b. Returns surviving input indices in keep order, so blended scores
    are non-increasing along the result.
    """
    n = len(pairs)
    if n == 0:
        return []
    scores = [joint_score(p, config.lam) for p in pairs]
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    head_iou = iou_matrix([p.head for p in pairs], [p.head for p in pairs])
    body_iou = iou_matrix([p.body for p in pairs], [p.body for p in pairs])
    suppressed = [False] * n
    kept: list[int] = []
    # A kept pair can only suppress lower-ranked pairs, so one pass over the
    # score order is the greedy loop.
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order[pos + 1 :]:
            if suppressed[j]:
                continue
            if head_iou[i, j] > config.omega_h or body_iou[i, j] > config.omega_b:
                suppressed[j] = True
    return kept


def original_nms(boxes: Sequence[Box], scores: Sequence[float], omega: float) -> list[int]:
    """Classic greedy single-box NMS with strict-inequality suppression.

    Ties on score keep the lower input index first. Returns kept indices in
    descending score order.
    """
    if len(boxes) != len(scores):
        raise ValueError(f"{len(boxes)} boxes vs {len(scores)} scores")
    n = len(boxes)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    suppressed = [False] * n
    kept: list[int] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order[pos + 1 :]:
            if not suppressed[j] and iou(boxes[i], boxes[j]) > omega:
                suppressed[j] = True
    return kept


def joint_nms_oracle(pairs: Sequence[DetectionPair], config: NmsConfig) -> list[int]:
    """Brute-force reference for joint_nms.

    Rescans the whole remaining pool every round and recomputes blended scores
    inline; no sorting, no precomputed overlaps. Used to cross-check the fast
    path, so it must stay independent of it.
    """
    remaining = list(range(len(pairs)))
    result: list[int] = []
    while remaining:
        best = remaining[0]
        for i in remaining[1:]:
            s_i = config.lam * pairs[i].body_score + (1.0 - config.lam) * pairs[i].head_score
            s_b = config.lam * pairs[best].body_score + (1.0 - config.lam) * pairs[best].head_score
            if s_i > s_b:
                best = i
        result.append(best)
        survivors = []
        for i in remaining:
            if i == best:
                continue
            if iou(pairs[best].head, pairs[i].head) > config.omega_h:
                continue
            if iou(pairs[best].body, pairs[i].body) > config.omega_b:
                continue
            survivors.append(i)
        remaining = survivors
    return result
