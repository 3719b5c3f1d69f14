import numpy as np
import pytest

from plantnbv.geometry import WorkspaceBounds
from plantnbv.semantic_map import SemanticVoxelMap


def small_bounds(side=0.12, center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=np.float64)
    h = side / 2.0
    return WorkspaceBounds.from_corners(c - h, c + h, c)


def small_map(side=0.12, center=(0.0, 0.0, 0.0), resolution=0.003):
    return SemanticVoxelMap(small_bounds(side, center), resolution=resolution)


@pytest.fixture
def tiny_map():
    return small_map()
