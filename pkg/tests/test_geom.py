import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pairdet.geom import (
    DELTA_CLAMP,
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

from conftest import boxes


class TestBox:
    def test_valid(self):
        b = Box(0, 0, 10, 5)
        assert b.width == 10 and b.height == 5 and b.area == 50
        assert b.center == (5.0, 2.5)

    @pytest.mark.parametrize("coords", [(0, 0, 0, 10), (0, 0, 10, 0), (5, 0, 5, 5), (3, 2, 1, 4)])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(DegenerateBoxError):
            Box(*coords)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ValueError):
            Box(0, 0, bad, 10)

    def test_list_round_trip(self):
        b = Box(1.5, 2.5, 3.5, 4.5)
        assert Box.from_list(b.to_list()) == b


class TestIou:
    def test_identity(self):
        b = Box(0, 0, 10, 10)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0

    def test_half_overlap(self):
        # inter = 50, union = 150
        assert iou(Box(0, 0, 10, 10), Box(5, 0, 15, 10)) == pytest.approx(1 / 3, abs=1e-12)

    def test_shared_edge_is_zero(self):
        assert iou(Box(0, 0, 10, 10), Box(10, 0, 20, 10)) == 0.0

    def test_contained(self):
        assert iou(Box(0, 0, 10, 10), Box(2, 2, 4, 4)) == pytest.approx(4 / 100)

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0

    @given(boxes())
    def test_exact_one_only_for_self(self, a):
        assert iou(a, a) == 1.0
        shifted = Box(a.x1 + 1.0, a.y1, a.x2 + 1.0, a.y2)
        assert iou(a, shifted) < 1.0

    @given(st.lists(boxes(), max_size=6), st.lists(boxes(), max_size=6))
    def test_matrix_matches_scalar(self, aa, bb):
        m = iou_matrix(aa, bb)
        assert m.shape == (len(aa), len(bb))
        for i, a in enumerate(aa):
            for j, b in enumerate(bb):
                assert m[i, j] == iou(a, b)


class TestEncodeDecode:
    def test_self_is_zero(self):
        b = Box(3, 4, 13, 24)
        assert encode(b, b) == BoxDelta(0, 0, 0, 0)

    def test_known_shift(self):
        d = encode(Box(0, 0, 10, 10), Box(5, 5, 15, 15))
        assert d == BoxDelta(0.5, 0.5, 0.0, 0.0)

    def test_decode_known_shift(self):
        out = decode(Box(0, 0, 10, 10), BoxDelta(0.5, 0.5, 0.0, 0.0))
        assert out == Box(5, 5, 15, 15)

    def test_decode_zero_delta(self):
        b = Box(2, 3, 9, 11)
        out = decode(b, BoxDelta(0, 0, 0, 0))
        assert out.to_list() == pytest.approx(b.to_list(), abs=1e-12)

    def test_decode_clamps_huge_negative_size(self):
        out = decode(Box(0, 0, 10, 10), BoxDelta(0, 0, -50.0, 0))
        assert out.width == pytest.approx(10 * math.exp(-DELTA_CLAMP), rel=1e-12)
        assert out.height == pytest.approx(10.0)

    def test_decode_clamps_huge_positive_size(self):
        out = decode(Box(0, 0, 10, 10), BoxDelta(0, 0, 0, 80.0))
        assert out.height == pytest.approx(10 * math.exp(DELTA_CLAMP), rel=1e-12)

    def test_round_trip_seeded_campaign(self):
        # sizes in [2, 120]: worst ratio 60 stays inside the decode clamp
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            x1, y1 = rng.uniform(0, 800, size=2)
            w1, h1, w2, h2 = rng.uniform(2, 120, size=4)
            x2, y2 = rng.uniform(0, 800, size=2)
            anchor = Box(x1, y1, x1 + w1, y1 + h1)
            target = Box(x2, y2, x2 + w2, y2 + h2)
            out = decode(anchor, encode(anchor, target))
            assert out.to_list() == pytest.approx(target.to_list(), abs=1e-9)

    @given(boxes(max_pos=500, min_size=2, max_size=120), boxes(max_pos=500, min_size=2, max_size=120))
    def test_round_trip_property(self, anchor, target):
        out = decode(anchor, encode(anchor, target))
        assert out.to_list() == pytest.approx(target.to_list(), abs=1e-9)

    @given(
        boxes(max_pos=300, min_size=2, max_size=120),
        st.tuples(
            st.floats(-2, 2), st.floats(-2, 2), st.floats(-3.5, 3.5), st.floats(-3.5, 3.5)
        ),
    )
    def test_decode_encode_inverse(self, anchor, comps):
        delta = BoxDelta(*comps)
        box = decode(anchor, delta)
        back = encode(anchor, box)
        assert back.to_list() == pytest.approx(delta.to_list(), abs=1e-9)

    def test_delta_rejects_nan(self):
        with pytest.raises(ValueError):
            BoxDelta(math.nan, 0, 0, 0)


class TestClipBox:
    def test_inside_unchanged(self):
        b = Box(1, 2, 9, 8)
        assert clip_box(b, 10, 10) == b

    def test_truncates(self):
        assert clip_box(Box(-5, -5, 5, 5), 10, 10) == Box(0, 0, 5, 5)
        assert clip_box(Box(5, 5, 25, 25), 10, 10) == Box(5, 5, 10, 10)

    def test_fully_outside_collapses_to_edge_sliver(self):
        out = clip_box(Box(100, 100, 120, 120), 10, 10)
        assert out.x2 <= 10 and out.y2 <= 10
        assert out.width > 0 and out.height > 0


class TestAnchorGrid:
    def test_single_cell_count(self):
        grid = make_anchor_grid(8, 8, strides=[8], scales=[8], ratios=[0.5, 1.0, 2.0])
        assert len(grid) == 3

    def test_ratio_widths_at_area_64(self):
        grid = make_anchor_grid(8, 8, strides=[8], scales=[8], ratios=[0.5, 1.0, 2.0])
        widths = [a.box.width for a in grid]
        assert widths == pytest.approx([math.sqrt(32), 8.0, math.sqrt(128)], rel=1e-12)
        # every ratio preserves the area scale^2
        for a in grid:
            assert a.box.area == pytest.approx(64.0, rel=1e-12)

    def test_empty_config_rejected(self):
        with pytest.raises(ValueError):
            make_anchor_grid(8, 8, strides=[8], scales=[8], ratios=[])
        with pytest.raises(ValueError):
            make_anchor_grid(8, 8, strides=[], scales=[8], ratios=[1.0])
        with pytest.raises(ValueError):
            make_anchor_grid(8, 8, strides=[8], scales=[], ratios=[1.0])

    def test_centering(self):
        (a,) = make_anchor_grid(8, 8, strides=[8], scales=[4], ratios=[1.0])
        assert a.box.center == (4.0, 4.0)
        assert (a.row, a.col, a.stride) == (0, 0, 8.0)

    @given(
        st.integers(1, 50),
        st.integers(1, 50),
        st.lists(st.sampled_from([4, 8, 16, 32]), min_size=1, max_size=3, unique=True),
        st.integers(1, 3),
        st.integers(1, 3),
    )
    def test_count_formula(self, w, h, strides, n_scales, n_ratios):
        scales = [8.0 * (k + 1) for k in range(n_scales)]
        ratios = [0.5 * (k + 1) for k in range(n_ratios)]
        grid = make_anchor_grid(w, h, strides, scales, ratios)
        expected = sum(
            math.ceil(w / s) * math.ceil(h / s) * n_scales * n_ratios for s in strides
        )
        assert len(grid) == expected
