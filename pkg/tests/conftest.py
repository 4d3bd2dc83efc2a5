from pathlib import Path

import pytest
from hypothesis import strategies as st

from pairdet.geom import Box
from pairdet.nms import DetectionPair

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return CONFIG_DIR


def boxes(max_pos: float = 200.0, min_size: float = 1.0, max_size: float = 80.0):
    """Strategy for well-formed boxes with moderate coordinates."""
    pos = st.floats(0.0, max_pos, allow_nan=False, allow_infinity=False)
    size = st.floats(min_size, max_size, allow_nan=False, allow_infinity=False)
    return st.builds(lambda x, y, w, h: Box(x, y, x + w, y + h), pos, pos, size, size)


def scores():
    return st.floats(0.0, 1.0, allow_nan=False, allow_infinity=False)


def detection_pairs():
    return st.builds(
        lambda head, body, sh, sb: DetectionPair(head, body, sh, sb),
        boxes(max_pos=60.0, min_size=2.0, max_size=40.0),
        boxes(max_pos=60.0, min_size=2.0, max_size=40.0),
        scores(),
        scores(),
    )
