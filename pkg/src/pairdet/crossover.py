"""Pair labeling against ground truth and the attached-part crossover swap.

A branch only checks its principal part when labeling, so the attached part of
a positive pair can be arbitrarily bad. Crossover repairs head-principal pairs
by borrowing the most-overlapping body from the body-principal branch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .geom import iou
from .rpn import GtPair, PairedProposal


@dataclass(frozen=True)
class PairLabel:
    """Match of one proposal pair against the ground truth, judged on the
    pair's principal part only."""

    proposal_index: int
    positive: bool
    matched_gt: Optional[int]
    head_iou: float
    body_iou: float


def label_pairs(
    pairs: Sequence[PairedProposal],
    gts: Sequence[GtPair],
    principal_iou: float = 0.5,
) -> list[PairLabel]:
    """Match each pair to the person its principal part overlaps most.

    A pair is positive when that overlap strictly exceeds principal_iou; the
    attached part is never consulted. Both per-part IoUs are recorded against
    the matched person. Pairs whose principal part overlaps nothing stay
    unmatched with zero IoUs.
    """
    out: list[PairLabel] = []
    for idx, pair in enumerate(pairs):
        best: Optional[GtPair] = None
        best_iou = 0.0
        for gt in gts:
            v = iou(pair.part(pair.principal), gt.part(pair.principal))
            if v > best_iou:
                best, best_iou = gt, v
        if best is None:
            out.append(PairLabel(idx, False, None, 0.0, 0.0))
        else:
            out.append(
                PairLabel(
                    proposal_index=idx,
                    positive=best_iou > principal_iou,
                    matched_gt=best.person_id,
                    head_iou=iou(pair.head, best.head),
                    body_iou=iou(pair.body, best.body),
                )
            )
    return out


def crossover(
    hb_pairs: Sequence[PairedProposal],
    bh_pairs: Sequence[PairedProposal],
    xover_iou: float = 0.5,
) -> list[PairedProposal]:
    """Swap noisy attached bodies for donor bodies from the other branch.

    For each head-principal pair, the donor is the body-principal pair whose
    body overlaps the pair's current body most (ties to the lower donor index,
    donors may be reused). The swap happens only when that overlap strictly
    exceeds xover_iou. Heads, scores and the number of pairs never change; an
    empty donor list returns the input unchanged.

    Both inputs are expected to be the positively labeled pairs of their own
    branch; this function does not re-check labels.
    """
    if not bh_pairs:
        return list(hb_pairs)
    out: list[PairedProposal] = []
    for pair in hb_pairs:
        best_j = -1
        best_v = 0.0
        for j, donor in enumerate(bh_pairs):
            v = iou(pair.body, donor.body)
            if v > best_v:
                best_j, best_v = j, v
        if best_v > xover_iou:
            out.append(replace(pair, body=bh_pairs[best_j].body))
        else:
            out.append(pair)
    return out


def count_qualified(
    pairs: Sequence[PairedProposal],
    gts: Sequence[GtPair],
    thresh: float = 0.5,
) -> int:
    """Pairs whose matched person is overlapped by BOTH parts at IoU >= thresh.

    Matching is the label_pairs() rule (best principal-part overlap). The
    bounds are inclusive so the endpoints are exact: thresh=0 counts every
    matched pair, thresh=1 only pairs reproducing both boxes exactly.
    """
    count = 0
    for lab in label_pairs(pairs, gts):
        if lab.matched_gt is not None and lab.head_iou >= thresh and lab.body_iou >= thresh:
            count += 1
    return count
