import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _reference import reference_params  # noqa: E402

from offloadlab import SimConfig, run_monte_carlo  # noqa: E402


@pytest.fixture(scope="session")
def ref_params():
    return reference_params(60.0)


@pytest.fixture(scope="session")
def megarun(ref_params):
    """One million sessions of the reference scenario, shared across tests."""
    cfg = SimConfig(replications=1_000_000, seed=20260811, batch_count=100)
    return run_monte_carlo(ref_params, cfg)
