import os
import warnings

import pytest

from bubbletower.dynamics import tower_params
from bubbletower.linear import build_spectral_data
from bubbletower.soliton import Dimension

# spectral data takes ~30 s to build; share one cache across the session
CACHE = os.environ.get("BUBBLETOWER_CACHE", os.path.join(os.path.dirname(__file__), ".spectral_cache"))


@pytest.fixture(scope="session")
def spec7():
    return build_spectral_data(Dimension(7), cache_dir=CACHE)


@pytest.fixture(scope="session")
def tower7(spec7):
    return tower_params(7, 2, 100.0, c=spec7.c_interaction)


@pytest.fixture(autouse=True)
def _quiet_overflow():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield
