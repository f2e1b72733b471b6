import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from capseg import Frame


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_frame(rng, height=64, width=None):
    width = width or height
    return Frame(rng.integers(0, 256, (height, width, 3)).astype(np.uint8))
