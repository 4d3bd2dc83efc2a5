"""Paired head/body detection toolkit.

Implements the algorithmic core of a crowd-robust detector built on coupled
head/body boxes: paired anchor assignment with a gradient-checked loss,
proposal crossover between branches, joint NMS over pairs, log-average
miss-rate evaluation, and a seeded synthetic crowd simulator. No learned
components anywhere.
"""

from .crossover import PairLabel, count_qualified, crossover, label_pairs
from .geom import (
    Anchor,
    Box,
    BoxDelta,
    DegenerateBoxError,
    clip_box,
    decode,
    encode,
    iou,
    iou_matrix,
    make_anchor_grid,
)
from .metrics import (
    EvalCurve,
    MatchResult,
    ap50,
    crowded_subset,
    fppi_at_recall,
    fppi_mr_curve,
    log_average_mr,
    match_detections,
)
from .nms import DetectionPair, NmsConfig, joint_nms, joint_nms_oracle, joint_score, original_nms
from .rpn import (
    AnchorAssignment,
    GtPair,
    PairedProposal,
    RpnLoss,
    RpnLossGrad,
    RpnPrediction,
    assign_principal,
    emit_proposals,
    rpn_loss,
    rpn_loss_grad,
)
from .simscene import (
    DetectorNoise,
    SceneConfig,
    SceneGenerationError,
    crowded_fraction,
    generate_scene,
    simulate_branch_proposals,
    simulate_detections,
)

__version__ = "0.1.0"
