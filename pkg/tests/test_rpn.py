import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pairdet.geom import Box, BoxDelta, decode
from pairdet.rpn import (
    AnchorAssignment,
    GtPair,
    RpnPrediction,
    assign_principal,
    emit_proposals,
    rpn_loss,
    rpn_loss_grad,
    smooth_l1,
    smooth_l1_grad,
)

from conftest import boxes


def gt(head, body, pid):
    return GtPair(head=head, body=body, person_id=pid)


def person_at(x, y, pid, w=20.0, h=40.0):
    body = Box(x, y, x + w, y + h)
    head = Box(x + w * 0.3, y, x + w * 0.7, y + h * 0.25)
    return gt(head, body, pid)


class TestAssignPrincipal:
    def test_exact_head_anchor_positive(self):
        p = person_at(10, 10, pid=7)
        anchors = [p.head, Box(200, 200, 220, 240)]
        out = assign_principal(anchors, [p], "head")
        assert out[0].label == "positive"
        assert out[0].matched_gt == 7
        assert out[1].label == "negative"

    def test_highest_iou_gt_wins(self):
        # anchor overlaps A's head at 0.75 and B's head at 0.6 by construction
        anchor = Box(0, 0, 10, 8)
        head_a = Box(0, 0, 10, 6)  # iou vs anchor = 60/80 = 0.75
        head_b = Box(0, 0, 8, 6)  # iou vs anchor = 48/80 = 0.6
        gts = [
            gt(head_a, Box(0, 0, 10, 40), 1),
            gt(head_b, Box(30, 0, 40, 40), 2),
        ]
        out = assign_principal([anchor], gts, "head")
        assert out[0].label == "positive"
        assert out[0].matched_gt == 1

    def test_low_iou_negative(self):
        p = person_at(0, 0, 1)
        anchor = Box(100, 100, 120, 140)
        out = assign_principal([anchor, p.head], [p], "head")
        assert out[0].label == "negative"

    def test_band_is_ignore(self):
        # iou = 32/48 = 2/3, inside [0.3, 0.7] and not the gt's best anchor
        head = Box(0, 0, 8, 4)
        anchor_mid = Box(0, 0, 8, 6)
        gts = [gt(head, Box(0, 0, 8, 40), 1)]
        out = assign_principal([head, anchor_mid], gts, "head")
        assert out[0].label == "positive"
        assert out[1].label == "ignore"

    def test_empty_gts_all_negative(self):
        out = assign_principal([Box(0, 0, 10, 10)], [], "head")
        assert [a.label for a in out] == ["negative"]
        assert out[0].matched_gt is None

    def test_best_anchor_fallback(self):
        # no anchor crosses 0.7, but the gt's best anchor is forced positive
        p = person_at(0, 0, 3)
        anchor = Box(0, 0, 20, 25)  # some middling overlap with the body
        out = assign_principal([anchor, Box(300, 300, 320, 340)], [p], "body")
        assert out[0].label == "positive"
        assert out[0].matched_gt == 3

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            assign_principal([], [], "head", pos_iou=0.3, neg_iou=0.5)

    def test_positive_targets_decode_to_gt(self):
        p = person_at(40, 40, 5)
        anchors = [Box(38, 36, 62, 82), p.head, Box(0, 0, 5, 5)]
        for principal in ("head", "body"):
            for a in assign_principal(anchors, [p], principal):
                if a.label != "positive":
                    continue
                anchor_box = anchors[a.anchor_index]
                decoded_head = decode(anchor_box, a.head_target)
                decoded_body = decode(anchor_box, a.body_target)
                assert decoded_head.to_list() == pytest.approx(p.head.to_list(), abs=1e-9)
                assert decoded_body.to_list() == pytest.approx(p.body.to_list(), abs=1e-9)

    def test_non_positive_carry_no_targets(self):
        p = person_at(0, 0, 1)
        out = assign_principal([Box(200, 200, 210, 210)], [p], "head")
        assert out[0].head_target is None and out[0].body_target is None

    @given(st.lists(boxes(max_pos=100, min_size=4, max_size=50), min_size=1, max_size=8))
    def test_head_body_symmetry_when_parts_equal(self, anchor_boxes):
        # when every head equals its body the principal choice cannot matter
        gts = [gt(Box(10, 10, 40, 40), Box(10, 10, 40, 40), 1),
               gt(Box(60, 60, 90, 95), Box(60, 60, 90, 95), 2)]
        a = assign_principal(anchor_boxes, gts, "head")
        b = assign_principal(anchor_boxes, gts, "body")
        assert a == b


def exact_prediction(assignment: AnchorAssignment) -> RpnPrediction:
    if assignment.label == "positive":
        return RpnPrediction(20.0, assignment.head_target, assignment.body_target)
    zero = BoxDelta(0, 0, 0, 0)
    return RpnPrediction(-20.0, zero, zero)


class TestSmoothL1:
    def test_values(self):
        assert smooth_l1(0.0) == 0.0
        assert smooth_l1(0.5) == 0.125
        assert smooth_l1(1.0) == 0.5
        assert smooth_l1(-2.0) == 1.5

    def test_grad_values(self):
        assert smooth_l1_grad(0.5) == 0.5
        assert smooth_l1_grad(2.0) == 1.0
        assert smooth_l1_grad(-2.0) == -1.0
        assert smooth_l1_grad(0.0) == 0.0


class TestRpnLoss:
    def setup_method(self):
        self.persons = [person_at(10, 10, 0), person_at(100, 60, 1)]
        anchors = [self.persons[0].head, self.persons[1].head,
                   Box(300, 300, 330, 340), Box(400, 100, 430, 140)]
        self.anchors = anchors
        self.assignments = assign_principal(anchors, self.persons, "head")
        assert [a.label for a in self.assignments] == ["positive", "positive", "negative", "negative"]

    def test_exact_fit(self):
        preds = [exact_prediction(a) for a in self.assignments]
        loss = rpn_loss(preds, self.assignments)
        assert loss.head_reg_term == 0.0
        assert loss.body_reg_term == 0.0
        assert loss.cls_term < 1e-8
        assert loss.total == loss.cls_term

    def test_single_component_error(self):
        preds = [exact_prediction(a) for a in self.assignments]
        a0 = self.assignments[0]
        bad_head = BoxDelta(a0.head_target.dx + 1.0, a0.head_target.dy,
                            a0.head_target.dw, a0.head_target.dh)
        preds[0] = RpnPrediction(20.0, bad_head, a0.body_target)
        # one positive among two: smoothL1(1) / (4 * 2) = 0.0625
        loss = rpn_loss(preds, self.assignments)
        assert loss.head_reg_term == pytest.approx(0.5 / 8)
        assert loss.body_reg_term == 0.0

    def test_single_positive_quarter(self):
        person = self.persons[0]
        assignments = assign_principal([person.head], [person], "head")
        a0 = assignments[0]
        bad_head = BoxDelta(a0.head_target.dx + 1.0, a0.head_target.dy,
                            a0.head_target.dw, a0.head_target.dh)
        preds = [RpnPrediction(20.0, bad_head, a0.body_target)]
        loss = rpn_loss(preds, assignments)
        assert loss.head_reg_term == pytest.approx(0.125)
        assert loss.body_reg_term == 0.0

    def test_total_is_plain_sum(self):
        rng = np.random.default_rng(5)
        preds = [
            RpnPrediction(rng.normal(), BoxDelta(*rng.normal(0, 0.7, 4)), BoxDelta(*rng.normal(0, 0.7, 4)))
            for _ in self.assignments
        ]
        loss = rpn_loss(preds, self.assignments)
        assert loss.total == loss.cls_term + loss.head_reg_term + loss.body_reg_term
        assert loss.total >= 0

    def test_no_positives_zero_reg(self):
        assignments = [AnchorAssignment(0, "negative"), AnchorAssignment(1, "negative")]
        zero = BoxDelta(0, 0, 0, 0)
        preds = [RpnPrediction(0.0, zero, zero)] * 2
        loss = rpn_loss(preds, assignments)
        assert loss.head_reg_term == 0.0 and loss.body_reg_term == 0.0
        assert loss.cls_term == pytest.approx(math.log(2), rel=1e-12)

    def test_all_ignore_raises(self):
        zero = BoxDelta(0, 0, 0, 0)
        with pytest.raises(ValueError):
            rpn_loss([RpnPrediction(0.0, zero, zero)], [AnchorAssignment(0, "ignore")])

    def test_misaligned_raises(self):
        with pytest.raises(ValueError):
            rpn_loss([], [AnchorAssignment(0, "negative")])


def random_predictions(assignments, rng) -> list[RpnPrediction]:
    """Predictions whose regression errors stay away from the smooth-L1 kink
    at |x| = 1 so central differences converge cleanly."""
    preds = []
    for a in assignments:
        logit = rng.normal(0, 2.0)
        deltas = []
        for target in (a.head_target, a.body_target):
            base = np.array(target.to_tuple()) if target else np.zeros(4)
            err = rng.normal(0, 0.8, size=4)
            err[np.abs(np.abs(err) - 1.0) < 1e-3] += 0.01
            deltas.append(BoxDelta(*(base + err)))
        preds.append(RpnPrediction(logit, deltas[0], deltas[1]))
    return preds


def numerical_gradient(preds, assignments, h=1e-4):
    """Central finite differences of rpn_loss().total in every coordinate."""
    n = len(preds)
    flat = np.zeros(n * 9)
    for i, p in enumerate(preds):
        flat[i * 9] = p.logit
        flat[i * 9 + 1 : i * 9 + 5] = p.head_delta.to_tuple()
        flat[i * 9 + 5 : i * 9 + 9] = p.body_delta.to_tuple()

    def loss_at(vec):
        rebuilt = [
            RpnPrediction(vec[i * 9], BoxDelta(*vec[i * 9 + 1 : i * 9 + 5]), BoxDelta(*vec[i * 9 + 5 : i * 9 + 9]))
            for i in range(n)
        ]
        return rpn_loss(rebuilt, assignments).total

    grad = np.zeros_like(flat)
    for k in range(len(flat)):
        up = flat.copy()
        dn = flat.copy()
        up[k] += h
        dn[k] -= h
        grad[k] = (loss_at(up) - loss_at(dn)) / (2 * h)
    return grad


def analytic_flat(preds, assignments):
    g = rpn_loss_grad(preds, assignments)
    n = len(preds)
    flat = np.zeros(n * 9)
    for i in range(n):
        flat[i * 9] = g.logit[i]
        flat[i * 9 + 1 : i * 9 + 5] = g.head_delta[i]
        flat[i * 9 + 5 : i * 9 + 9] = g.body_delta[i]
    return flat


def assert_grad_close(analytic, numeric, rel=1e-5, eps=1e-8):
    for a, f in zip(analytic, numeric):
        if min(abs(a), abs(f)) < eps:
            assert abs(a - f) < eps or abs(a - f) / max(abs(a), abs(f)) < rel
        else:
            assert abs(a - f) / max(abs(a), abs(f)) < rel


class TestRpnLossGrad:
    def make_assignments(self, rng, n_anchors=6):
        persons = [person_at(10, 10, 0), person_at(90, 50, 1)]
        anchor_boxes = [persons[0].head, persons[1].head,
                        Box(5, 5, 35, 60), Box(200, 200, 230, 260),
                        Box(300, 10, 330, 70), Box(420, 300, 450, 360)]
        return anchor_boxes, assign_principal(anchor_boxes[:n_anchors], persons, "head")

    def test_exact_fit_has_zero_reg_grad(self):
        rng = np.random.default_rng(0)
        _, assignments = self.make_assignments(rng)
        preds = [exact_prediction(a) for a in assignments]
        g = rpn_loss_grad(preds, assignments)
        assert np.all(g.head_delta == 0.0)
        assert np.all(g.body_delta == 0.0)

    def test_matches_finite_differences_100_sets(self):
        rng = np.random.default_rng(1234)
        _, assignments = self.make_assignments(rng)
        for _ in range(100):
            preds = random_predictions(assignments, rng)
            assert_grad_close(analytic_flat(preds, assignments),
                              numerical_gradient(preds, assignments))

    def test_ignore_anchor_has_zero_grad(self):
        zero = BoxDelta(0, 0, 0, 0)
        assignments = [
            AnchorAssignment(0, "negative"),
            AnchorAssignment(1, "ignore"),
        ]
        preds = [RpnPrediction(0.3, zero, zero), RpnPrediction(-0.7, zero, zero)]
        g = rpn_loss_grad(preds, assignments)
        assert g.logit[1] == 0.0


class TestEmitProposals:
    def make(self, logits):
        zero = BoxDelta(0, 0, 0, 0)
        anchors = [Box(10 * i, 5, 10 * i + 8, 13) for i in range(len(logits))]
        preds = [RpnPrediction(z, zero, zero) for z in logits]
        return preds, anchors

    def test_top_1(self):
        preds, anchors = self.make([0.1, 3.0, -1.0])
        out = emit_proposals(preds, anchors, 1, "head", 100, 100)
        assert len(out) == 1
        assert out[0].head == anchors[1]
        assert out[0].score == pytest.approx(1 / (1 + math.exp(-3.0)))
        assert out[0].principal == "head"
        assert out[0].source_branch == "head_body"

    def test_tie_breaks_to_lower_index(self):
        preds, anchors = self.make([2.0, 2.0, 2.0])
        out = emit_proposals(preds, anchors, 2, "body", 100, 100)
        assert [p.body for p in out] == [anchors[0], anchors[1]]
        assert out[0].source_branch == "body_head"

    def test_clipping(self):
        zero = BoxDelta(0, 0, 0, 0)
        anchor = Box(90, 90, 130, 140)  # sticks out of a 100x100 image
        out = emit_proposals([RpnPrediction(1.0, zero, zero)], [anchor], 1, "head", 100, 100)
        for box in (out[0].head, out[0].body):
            assert box.x2 <= 100 and box.y2 <= 100
            assert box == Box(90, 90, 100, 100)

    def test_top_k_larger_than_input(self):
        preds, anchors = self.make([1.0, 0.0])
        assert len(emit_proposals(preds, anchors, 10, "head", 100, 100)) == 2

    def test_invalid_top_k(self):
        preds, anchors = self.make([1.0])
        with pytest.raises(ValueError):
            emit_proposals(preds, anchors, 0, "head", 100, 100)
