"""Paired-anchor label assignment, the coupled objectness/regression loss with
analytic gradients, and proposal emission.

One branch picks a principal part (head or body), matches anchors against that
part only, and regresses offsets for BOTH parts from the same anchor. The loss
is classification plus one smooth-L1 term per part, summed unweighted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .geom import Box, BoxDelta, clip_box, decode, encode, iou_matrix

Part = Literal["head", "body"]
Branch = Literal["head_body", "body_head"]
Label = Literal["positive", "negative", "ignore"]

SMOOTH_L1_BETA = 1.0


@dataclass(frozen=True)
class GtPair:
    """Ground-truth head and body boxes of one person."""

    head: Box
    body: Box
    person_id: int

    def part(self, part: Part) -> Box:
        return self.head if part == "head" else self.body


@dataclass(frozen=True)
class AnchorAssignment:
    """Label for one anchor; positives carry the matched person and regression
    targets for both parts, others carry neither."""

    anchor_index: int
    label: Label
    matched_gt: Optional[int] = None
    head_target: Optional[BoxDelta] = None
    body_target: Optional[BoxDelta] = None

    def __post_init__(self):
        has_all = (self.matched_gt is not None and self.head_target is not None
                   and self.body_target is not None)
        has_none = (self.matched_gt is None and self.head_target is None
                    and self.body_target is None)
        if (self.label == "positive" and not has_all) or (self.label != "positive" and not has_none):
            raise ValueError(f"inconsistent assignment: {self!r}")


@dataclass(frozen=True)
class RpnPrediction:
    """Per-anchor raw objectness logit plus predicted deltas for both parts."""

    logit: float
    head_delta: BoxDelta
    body_delta: BoxDelta


@dataclass(frozen=True)
class PairedProposal:
    """Coupled head/body boxes sharing one objectness score, emitted by a
    branch whose matching part is `principal`."""

    head: Box
    body: Box
    score: float
    principal: Part
    source_branch: Branch

    def part(self, part: Part) -> Box:
        return self.head if part == "head" else self.body


@dataclass(frozen=True)
class RpnLoss:
    total: float
    cls_term: float
    head_reg_term: float
    body_reg_term: float


@dataclass(frozen=True)
class RpnLossGrad:
    """Gradient of the total loss w.r.t. every logit and delta component.

    head_delta / body_delta columns are ordered (dx, dy, dw, dh).
    """

    logit: np.ndarray
    head_delta: np.ndarray
    body_delta: np.ndarray


def branch_for(principal: Part) -> Branch:
    return "head_body" if principal == "head" else "body_head"


def assign_principal(
    anchor_boxes: Sequence[Box],
    gts: Sequence[GtPair],
    principal: Part,
    pos_iou: float = 0.7,
    neg_iou: float = 0.3,
) -> list[AnchorAssignment]:
    """Label every anchor against the principal part of the ground truths.

    An anchor is positive when its best principal-part IoU strictly exceeds
    pos_iou, negative when strictly below neg_iou, otherwise ignored. On top of
    the threshold rule, each ground truth's single best-overlapping anchor is
    forced positive (when the overlap is non-zero) so sparse scenes cannot end
    up without positives. Every positive is matched to its own highest-IoU
    ground truth and gets encode() targets for BOTH parts from the same anchor.
    An empty ground-truth list labels everything negative.
    """
    if not (0.0 <= neg_iou <= pos_iou <= 1.0):
        raise ValueError(f"need 0 <= neg_iou <= pos_iou <= 1, got {neg_iou}, {pos_iou}")
    n = len(anchor_boxes)
    if not gts:
        return [AnchorAssignment(i, "negative") for i in range(n)]

    principal_boxes = [g.part(principal) for g in gts]
    ious = iou_matrix(anchor_boxes, principal_boxes)
    best_gt = ious.argmax(axis=1)  # first max wins: lower gt index on ties
    best_iou = ious[np.arange(n), best_gt]

    positive = best_iou > pos_iou
    # Best-anchor fallback: the top anchor of each gt is positive regardless of
    # the threshold, matched (like all positives) to its own best gt.
    for j in range(len(gts)):
        i = int(ious[:, j].argmax())
        if ious[i, j] > 0.0:
            positive[i] = True

    out: list[AnchorAssignment] = []
    for i in range(n):
        if positive[i]:
            gt = gts[int(best_gt[i])]
            out.append(
                AnchorAssignment(
                    anchor_index=i,
                    label="positive",
                    matched_gt=gt.person_id,
                    head_target=encode(anchor_boxes[i], gt.head),
                    body_target=encode(anchor_boxes[i], gt.body),
                )
            )
        elif best_iou[i] < neg_iou:
            out.append(AnchorAssignment(i, "negative"))
        else:
            out.append(AnchorAssignment(i, "ignore"))
    return out


def smooth_l1(x: float, beta: float = SMOOTH_L1_BETA) -> float:
    """0.5*x^2/beta inside |x| < beta, |x| - 0.5*beta outside."""
    ax = abs(x)
    if ax < beta:
        return 0.5 * x * x / beta
    return ax - 0.5 * beta


def smooth_l1_grad(x: float, beta: float = SMOOTH_L1_BETA) -> float:
    if abs(x) < beta:
        return x / beta
    return math.copysign(1.0, x)


def _bce_with_logits(z: float, y: float) -> float:
    # max(z,0) - z*y + log(1 + exp(-|z|)), the usual stable form
    return max(z, 0.0) - z * y + math.log1p(math.exp(-abs(z)))


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _check_aligned(predictions, assignments):
    if len(predictions) != len(assignments):
        raise ValueError(
            f"{len(predictions)} predictions vs {len(assignments)} assignments"
        )


def rpn_loss(
    predictions: Sequence[RpnPrediction],
    assignments: Sequence[AnchorAssignment],
) -> RpnLoss:
    """Classification plus per-part regression loss over one branch.

    cls is mean binary cross-entropy (with logits) over positive and negative
    anchors; ignored anchors contribute nothing. Each regression term is the
    mean smooth-L1 over the 4 delta components of the positive anchors, zero
    when there are no positives. total = cls + head reg + body reg, unweighted.
    Raises ValueError when every anchor is ignored (nothing to score).
    """
    _check_aligned(predictions, assignments)
    cls_sum = 0.0
    n_sampled = 0
    head_sum = 0.0
    body_sum = 0.0
    n_pos = 0
    for pred, asg in zip(predictions, assignments):
        if asg.label == "ignore":
            continue
        y = 1.0 if asg.label == "positive" else 0.0
        cls_sum += _bce_with_logits(pred.logit, y)
        n_sampled += 1
        if asg.label == "positive":
            n_pos += 1
            for p, t in zip(pred.head_delta.to_tuple(), asg.head_target.to_tuple()):
                head_sum += smooth_l1(p - t)
            for p, t in zip(pred.body_delta.to_tuple(), asg.body_target.to_tuple()):
                body_sum += smooth_l1(p - t)
    if n_sampled == 0:
        raise ValueError("no positive or negative anchors to score")
    cls_term = cls_sum / n_sampled
    head_reg = head_sum / (4 * n_pos) if n_pos else 0.0
    body_reg = body_sum / (4 * n_pos) if n_pos else 0.0
    return RpnLoss(cls_term + head_reg + body_reg, cls_term, head_reg, body_reg)


def rpn_loss_grad(
    predictions: Sequence[RpnPrediction],
    assignments: Sequence[AnchorAssignment],
) -> RpnLossGrad:
    """Analytic gradient of rpn_loss().total w.r.t. every prediction value."""
    _check_aligned(predictions, assignments)
    n = len(predictions)
    dlogit = np.zeros(n)
    dhead = np.zeros((n, 4))
    dbody = np.zeros((n, 4))
    n_sampled = sum(1 for a in assignments if a.label != "ignore")
    if n_sampled == 0:
        raise ValueError("no positive or negative anchors to score")
    n_pos = sum(1 for a in assignments if a.label == "positive")
    for i, (pred, asg) in enumerate(zip(predictions, assignments)):
        if asg.label == "ignore":
            continue
        y = 1.0 if asg.label == "positive" else 0.0
        dlogit[i] = (_sigmoid(pred.logit) - y) / n_sampled
        if asg.label == "positive":
            for c, (p, t) in enumerate(
                zip(pred.head_delta.to_tuple(), asg.head_target.to_tuple())
            ):
                dhead[i, c] = smooth_l1_grad(p - t) / (4 * n_pos)
            for c, (p, t) in enumerate(
                zip(pred.body_delta.to_tuple(), asg.body_target.to_tuple())
            ):
                dbody[i, c] = smooth_l1_grad(p - t) / (4 * n_pos)
    return RpnLossGrad(dlogit, dhead, dbody)


def emit_proposals(
    predictions: Sequence[RpnPrediction],
    anchor_boxes: Sequence[Box],
    top_k: int,
    principal: Part,
    image_width: float,
    image_height: float,
) -> list[PairedProposal]:
    """Decode the top_k anchors by objectness into paired proposals.

    Ranking is by raw logit (sigmoid is monotone), ties broken by lower anchor
    index. Both boxes are decoded from the same anchor and clipped to image
    bounds; the proposal score is the sigmoid of the logit.
    """
    _check_aligned(predictions, anchor_boxes)
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i].logit, i))
    out: list[PairedProposal] = []
    for i in order[:top_k]:
        pred = predictions[i]
        head = clip_box(decode(anchor_boxes[i], pred.head_delta), image_width, image_height)
        body = clip_box(decode(anchor_boxes[i], pred.body_delta), image_width, image_height)
        out.append(
            PairedProposal(
                head=head,
                body=body,
                score=_sigmoid(pred.logit),
                principal=principal,
                source_branch=branch_for(principal),
            )
        )
    return out
