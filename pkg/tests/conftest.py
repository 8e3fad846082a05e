from datetime import datetime, timedelta

import numpy as np
import pytest

from mare_forge.conditional_fit import fit_conditional_models
from mare_forge.dataio import PairedSeries, SidSelection
from mare_forge.fixtures import make_fixture
from mare_forge.target_alloc import estimate_weights


def series_from_values(x, y, cap):
    start = datetime(2021, 1, 1)
    ts = tuple(start + timedelta(hours=i) for i in range(len(x)))
    return PairedSeries(timestamps=ts, x=np.asarray(x, float), y=np.asarray(y, float), cap=cap)


@pytest.fixture(scope="session")
def ar1_series():
    return make_fixture("ar1-error", 400, seed=11)


@pytest.fixture(scope="session")
def ar1_model(ar1_series):
    return fit_conditional_models(ar1_series, 0.05)


@pytest.fixture(scope="session")
def ar1_weights(ar1_model, ar1_series):
    return estimate_weights(ar1_model, ar1_series)


@pytest.fixture(scope="session")
def ar1_sid(ar1_series):
    return SidSelection.from_series(ar1_series)


@pytest.fixture(scope="session")
def het_series():
    return make_fixture("heteroscedastic", 600, seed=7)
