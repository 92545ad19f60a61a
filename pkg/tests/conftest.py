"""Shared fixtures. BLAS pools are pinned to one thread before numpy loads
anywhere, so reductions stay bit-reproducible across runs."""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from secs.datamodel import CellId, WeatherSeries, YieldSeries


@pytest.fixture
def cell():
    return CellId("c0000", 45.0, 8.0)


@pytest.fixture
def flat_weather(cell):
    """One year of constant, benign weather."""
    n = 365
    return WeatherSeries(
        cell=cell,
        start_year=2000,
        tmax=np.full(n, 25.0),
        tmin=np.full(n, 15.0),
        precip=np.full(n, 4.0),
    )


def make_weather(cell, tmax, tmin, precip, start_year=2000):
    return WeatherSeries(
        cell=cell, start_year=start_year, tmax=tmax, tmin=tmin, precip=precip
    )


def make_yield(cell, twso, start_year=2000):
    return YieldSeries(cell=cell, start_year=start_year, twso=twso)
