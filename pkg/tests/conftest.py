from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scenegrasp.fixtures import box_mesh, icosahedron_mesh  # noqa: E402
from scenegrasp.geometry import TriMesh  # noqa: E402


@pytest.fixture(scope="session")
def unit_cube() -> TriMesh:
    """Closed cube centered at the origin, side 1."""
    return box_mesh((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))


@pytest.fixture(scope="session")
def icosphere() -> TriMesh:
    return icosahedron_mesh((0.0, 0.0, 0.0), 1.0)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
