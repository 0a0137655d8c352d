from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import icosphere  # noqa: E402


@pytest.fixture(scope="session")
def sphere2():
    """Icosphere at subdivision 2 (162 vertices), shared across tests."""
    return icosphere(2)


@pytest.fixture(scope="session")
def sphere3():
    """Icosphere at subdivision 3 (642 vertices)."""
    return icosphere(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
