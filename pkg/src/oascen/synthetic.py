"""Synthetic zonal test system and load history.

Stand-in for a real zonal dataset: a three-zone meshed grid with a merit-order
fleet, and daily DA/RT net-load pairs whose forecast errors carry a
quarter-dependent bias and shape so that label conditioning is learnable.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

from .dataprep import DaySample, assign_label
from .grid import GeneratorSpec, GridModel, Line

ZONES = ("A", "B", "C")
PEAKS = np.array([300.0, 200.0, 150.0])


def three_zone_grid() -> GridModel:
    gens = (
        GeneratorSpec("A_base", "A", 500.0, 12.0, 0.004, 450.0),
        GeneratorSpec("A_mid", "A", 200.0, 30.0, 0.010, 250.0),
        GeneratorSpec("B_ccgt", "B", 300.0, 22.0, 0.008, 250.0),
        GeneratorSpec("B_peak", "B", 100.0, 55.0, 0.030, 200.0),
        GeneratorSpec("C_ccgt", "C", 250.0, 26.0, 0.012, 150.0),
        GeneratorSpec("C_peak", "C", 80.0, 70.0, 0.040, 200.0),
    )
    lines = (
        Line("A", "B", 8.0, 120.0),
        Line("B", "C", 6.0, 90.0),
        Line("A", "C", 5.0, 80.0),
    )
    return GridModel(nodes=ZONES, ref="A", lines=lines, generators=gens, base_mva=100.0)


def _daily_shape(hours: np.ndarray, quarter: int) -> np.ndarray:
    evening = 1.0 if quarter in (0, 3) else 0.6
    afternoon = 0.5 if quarter in (0, 3) else 1.0
    return (0.65 + 0.12 * np.exp(-((hours - 9) / 3.0) ** 2)
            + 0.23 * afternoon * np.exp(-((hours - 15) / 3.5) ** 2)
            + 0.25 * evening * np.exp(-((hours - 19) / 2.5) ** 2))


def synthetic_days(n_days: int, seed: int = 0, start: dt.date = dt.date(2018, 1, 1),
                   horizon: int = 24, stride: int = 9) -> list[DaySample]:
    """``n_days`` DA/RT day pairs spread over the calendar (``stride`` days apart)."""
    rng = np.random.default_rng(seed)
    hours = np.arange(1, horizon + 1, dtype=float)
    days = []
    for k in range(n_days):
        date = start + dt.timedelta(days=k * stride)
        label = assign_label(date)
        shape = _daily_shape(hours, label)
        level = PEAKS[:, None] * (0.85 + 0.15 * rng.random((len(ZONES), 1)))
        da = level * shape[None, :] * (1 + 0.02 * rng.standard_normal((len(ZONES), horizon)))
        # quarter-dependent forecast bias: summer under-forecast, winter over-forecast
        bias = (-0.03, 0.01, 0.04, -0.01)[label]
        drift = np.cumsum(0.008 * rng.standard_normal((len(ZONES), horizon)), axis=1)
        rt = da * (1 + bias * np.sin(np.pi * hours / horizon)[None, :] + drift
                   + 0.01 * rng.standard_normal((len(ZONES), horizon)))
        days.append(DaySample(date=date, da_real=da, rt_real=rt, label=label))
    return days
