import numpy as np
import pytest

from excaplan.geometry import CuboidRegion, HeightMap, HeightMapSpec, Point3
from excaplan.kinematics import ExcavatorModel

TRAY = CuboidRegion(Point3(0.0, 0.0, 0.0), np.array([0.19, 0.20, 0.15]))


@pytest.fixture
def tray():
    return TRAY


@pytest.fixture
def model():
    return ExcavatorModel()


def flat_height_map(z=0.0, floor_z=-0.15):
    """Height map over the default tray footprint with a constant surface."""
    spec = HeightMapSpec(dims=(38, 40), cell_size=0.01, origin=(-0.19, -0.2), floor_z=floor_z)
    heights = np.full(spec.dims, max(z, floor_z))
    return HeightMap(spec.dims, spec.cell_size, spec.origin, heights, spec.floor_z)


@pytest.fixture
def flat_hm():
    return flat_height_map(0.0)
