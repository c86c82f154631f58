from __future__ import annotations

import pytest

from multiblock.clock import VirtualClock
from multiblock.cluster import Cluster


@pytest.fixture
def cluster(tmp_path):
    c = Cluster(state_path=tmp_path / "state.json",
                clock=VirtualClock(1_000.0))
    yield c
    c.close()


@pytest.fixture
def bare_cluster(tmp_path):
    """Cluster without persistence, for tests that only need runtime parts."""
    c = Cluster(clock=VirtualClock(1_000.0))
    yield c
    c.close()
