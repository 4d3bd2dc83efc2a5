"""Detection-to-truth matching, FPPI/miss-rate curves, log-average miss rate,
interpolated AP at IoU 0.5, and the crowded-scene filter.

Matching is greedy in descending score: a detection claims the unmatched
ground truth it overlaps most, provided the overlap reaches the threshold.
Curves and AP are rank statistics of the scores, so any strictly monotone
rescaling of scores leaves them unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

from .geom import Box, iou, iou_matrix

if TYPE_CHECKING:
    from .fileio import Scene

# The nine reference FPPI values 10^(-2 + k/4), k = 0..8.
MR_REFERENCE_FPPI = tuple(10.0 ** (-2.0 + k / 4.0) for k in range(9))

# Keeps the geometric mean finite when a curve reaches miss rate 0.
MISS_RATE_FLOOR = 1e-10

DEFAULT_RECALL_TARGETS = (0.2, 0.4, 0.6, 0.8)

# (boxes, scores) of one image's detections for one part
ImageDetections = tuple[Sequence[Box], Sequence[float]]


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching of one image: per-detection match and per-gt coverage."""

    det_matched_gt: list[Optional[int]]
    det_is_tp: list[bool]
    gt_matched: list[bool]


@dataclass(frozen=True)
class EvalCurve:
    """Operating points swept over all distinct detection scores, ordered by
    descending threshold. fppi = false positives / images; miss = 1 - recall."""

    thresholds: list[float]
    tp: list[int]
    fp: list[int]
    fppi: list[float]
    miss_rate: list[float]
    recall: list[float]
    n_gt: int
    n_images: int


def match_detections(
    det_boxes: Sequence[Box],
    det_scores: Sequence[float],
    gt_boxes: Sequence[Box],
    iou_thresh: float = 0.5,
) -> MatchResult:
    """Match one image's detections to its ground truths, highest score first.

    Each detection takes the unmatched ground truth with the highest IoU when
    that IoU is at least iou_thresh, otherwise it is a false positive. Score
    ties are processed in input order; each ground truth is used at most once.
    """
    if len(det_boxes) != len(det_scores):
        raise ValueError(f"{len(det_boxes)} boxes vs {len(det_scores)} scores")
    n, m = len(det_boxes), len(gt_boxes)
    matched_gt: list[Optional[int]] = [None] * n
    is_tp = [False] * n
    gt_taken = [False] * m
    if n and m:
        ious = iou_matrix(det_boxes, gt_boxes)
        order = sorted(range(n), key=lambda i: (-det_scores[i], i))
        for i in order:
            best_j = -1
            best_v = 0.0
            for j in range(m):
                if not gt_taken[j] and ious[i, j] > best_v:
                    best_j, best_v = j, ious[i, j]
            if best_j >= 0 and best_v >= iou_thresh:
                gt_taken[best_j] = True
                matched_gt[i] = best_j
                is_tp[i] = True
    return MatchResult(matched_gt, is_tp, gt_taken)


def _scored_flags(
    image_detections: Sequence[ImageDetections],
    image_gts: Sequence[Sequence[Box]],
    iou_thresh: float,
) -> tuple[list[tuple[float, bool]], int]:
    """All (score, is_tp) over the image set plus the total ground-truth count."""
    if len(image_detections) != len(image_gts):
        raise ValueError(
            f"{len(image_detections)} detection images vs {len(image_gts)} gt images"
        )
    flags: list[tuple[float, bool]] = []
    n_gt = 0
    for (boxes, scores), gts in zip(image_detections, image_gts):
        n_gt += len(gts)
        res = match_detections(boxes, scores, gts, iou_thresh)
        flags.extend(zip(scores, res.det_is_tp))
    return flags, n_gt


def fppi_mr_curve(
    image_detections: Sequence[ImageDetections],
    image_gts: Sequence[Sequence[Box]],
    iou_thresh: float = 0.5,
) -> EvalCurve:
    """Aggregate TP/FP counts over the image set at every distinct score.

    Raises ValueError when there are no ground truths at all (miss rate would
    be undefined).
    """
    flags, n_gt = _scored_flags(image_detections, image_gts, iou_thresh)
    if n_gt == 0:
        raise ValueError("cannot build a miss-rate curve without ground truths")
    n_images = len(image_gts)
    flags.sort(key=lambda sf: -sf[0])
    thresholds: list[float] = []
    tps: list[int] = []
    fps: list[int] = []
    tp = fp = 0
    for k, (score, is_tp) in enumerate(flags):
        if is_tp:
            tp += 1
        else:
            fp += 1
        # emit one operating point per distinct score value
        if k + 1 == len(flags) or flags[k + 1][0] != score:
            thresholds.append(score)
            tps.append(tp)
            fps.append(fp)
    recall = [t / n_gt for t in tps]
    return EvalCurve(
        thresholds=thresholds,
        tp=tps,
        fp=fps,
        fppi=[f / n_images for f in fps],
        miss_rate=[1.0 - r for r in recall],
        recall=recall,
        n_gt=n_gt,
        n_images=n_images,
    )


def log_average_mr(curve: EvalCurve) -> float:
    """Geometric mean of the best miss rate reachable at or below each of the
    nine reference FPPI values; a reference with no reachable operating point
    counts as miss rate 1.0. Miss rates are floored at MISS_RATE_FLOOR."""
    logs = []
    for ref in MR_REFERENCE_FPPI:
        reachable = [
            mr for fppi, mr in zip(curve.fppi, curve.miss_rate) if fppi <= ref
        ]
        mr = min(reachable) if reachable else 1.0
        logs.append(math.log(max(mr, MISS_RATE_FLOOR)))
    return math.exp(sum(logs) / len(logs))


def ap50(
    image_detections: Sequence[ImageDetections],
    image_gts: Sequence[Sequence[Box]],
    iou_thresh: float = 0.5,
) -> float:
    """COCO-style interpolated average precision on the 101-point recall grid."""
    flags, n_gt = _scored_flags(image_detections, image_gts, iou_thresh)
    if n_gt == 0:
        raise ValueError("cannot compute average precision without ground truths")
    flags.sort(key=lambda sf: -sf[0])
    precisions: list[float] = []
    recalls: list[float] = []
    tp = fp = 0
    for score, is_tp in flags:
        if is_tp:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_gt)
    # best precision among operating points with recall >= r, scanned once
    # from the right (recalls are non-decreasing along the ranked list)
    suffix_max: list[float] = [0.0] * len(precisions)
    running = 0.0
    for k in range(len(precisions) - 1, -1, -1):
        running = max(running, precisions[k])
        suffix_max[k] = running
    total = 0.0
    for step in range(101):
        r = step / 100.0
        lo = _first_at_least(recalls, r)
        total += suffix_max[lo] if lo < len(recalls) else 0.0
    return total / 101.0


def _first_at_least(sorted_vals: Sequence[float], target: float) -> int:
    lo, hi = 0, len(sorted_vals)
    while lo < hi:
        mid = (lo + hi) // 2
        if sorted_vals[mid] >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def fppi_at_recall(
    curve: EvalCurve,
    recalls: Iterable[float] = DEFAULT_RECALL_TARGETS,
) -> dict[float, float]:
    """Minimum FPPI among operating points reaching each target recall;
    math.inf marks targets the detector never attains."""
    out: dict[float, float] = {}
    for target in recalls:
        reachable = [f for f, r in zip(curve.fppi, curve.recall) if r >= target]
        out[target] = min(reachable) if reachable else math.inf
    return out


def bodies_overlap(bodies: Sequence[Box]) -> bool:
    """True when some pair of distinct boxes has IoU strictly above 0.5."""
    for i in range(len(bodies)):
        for j in range(i + 1, len(bodies)):
            if iou(bodies[i], bodies[j]) > 0.5:
                return True
    return False


def crowded_subset(scenes: Sequence["Scene"]) -> list["Scene"]:
    """Scenes containing at least one pair of people whose ground-truth body
    boxes overlap with IoU strictly greater than 0.5. Idempotent."""
    return [s for s in scenes if bodies_overlap([p.body for p in s.persons])]


def curve_to_csv(curve: EvalCurve) -> str:
    """CSV text for a curve: header then threshold,fppi,miss_rate,recall rows.
    UTF-8, '.' decimal separator, every row newline-terminated."""
    lines = ["threshold,fppi,miss_rate,recall"]
    for t, f, m, r in zip(curve.thresholds, curve.fppi, curve.miss_rate, curve.recall):
        lines.append(f"{t!r},{f!r},{m!r},{r!r}")
    return "\n".join(lines) + "\n"


def summary_dict(
    curve: EvalCurve,
    ap: float,
    recalls: Iterable[float] = DEFAULT_RECALL_TARGETS,
) -> dict:
    """The summary emitted next to a curve: MR, AP and FPPI at target recalls.
    Unreachable recalls serialize as the string "unreachable"."""
    fppi = fppi_at_recall(curve, recalls)
    return {
        "mr2": log_average_mr(curve),
        "ap50": ap,
        "fppi_at_recall": {
            f"{target:g}": ("unreachable" if math.isinf(v) else v)
            for target, v in sorted(fppi.items())
        },
    }
