import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rawtime import AH_SLOT_DURATIONS, DistributionCache, ah_params


@pytest.fixture(scope="session")
def ah_cache():
    """Session-wide chain-run cache for the 802.11ah reference parameters.

    Shared across planner and acceptance tests so the expensive per-population
    distributions are computed once.
    """
    return DistributionCache(ah_params(1), AH_SLOT_DURATIONS)
