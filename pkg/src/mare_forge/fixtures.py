"""Synthetic paired-series generators with known ground-truth error laws.

Stand-ins for proprietary operator data: each kind documents the error
process it was built from so pipeline behavior can be checked against it.
"""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np
from scipy.special import ndtr

from .dataio import PairedSeries

KINDS = ("iid-error", "ar1-error", "heteroscedastic")

AR1_COEFF = 0.8
ERROR_HALF_WIDTH = 8.0  # MW at cap=100, scaled proportionally


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _smooth_path(n: int, rng: np.random.Generator) -> np.ndarray:
    """Slowly-varying series in [0, 1]: two incommensurate seasonal waves
    plus heavily smoothed noise."""
    t = np.arange(n)
    phase = rng.uniform(0, 2 * np.pi, size=3)
    raw = (
        0.55 * np.sin(2 * np.pi * t / 48.0 + phase[0])
        + 0.35 * np.sin(2 * np.pi * t / 331.0 + phase[1])
        + 0.2 * np.sin(2 * np.pi * t / 17.0 + phase[2])
    )
    noise = rng.normal(0.0, 1.0, size=n)
    smooth = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = 0.95 * acc + 0.05 * noise[i]
        smooth[i] = acc
    raw = raw + 2.0 * smooth
    lo, hi = raw.min(), raw.max()
    return (raw - lo) / (hi - lo)


def _timestamps(n: int) -> tuple[datetime, ...]:
    start = datetime(2021, 1, 1)
    return tuple(start + timedelta(hours=i) for i in range(n))


def make_fixture(kind: str, n: int, seed: int, cap: float = 100.0) -> PairedSeries:
    """Synthetic forecast/actual pairs of the requested error process.

    - iid-error: errors drawn iid from a symmetric beta law on
      [-half_width, half_width], independent of the input level.
    - ar1-error: the same marginal driven through a Gaussian AR(1) with
      coefficient 0.8, so errors carry strong lag-1 autocorrelation.
    - heteroscedastic: error spread grows with distance from the range
      edges, and about 2% of inputs sit exactly at zero power.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if n < 100:
        raise ValueError(f"fixtures need n >= 100, got {n}")
    rng = _rng(seed)
    half = ERROR_HALF_WIDTH * cap / 100.0
    path = _smooth_path(n, rng)

    if kind in ("iid-error", "ar1-error"):
        x = (0.10 + 0.80 * path) * cap  # margins keep x +- half inside [0, cap]
        if kind == "iid-error":
            u = rng.beta(2.0, 2.0, size=n)
        else:
            eta = rng.normal(0.0, 1.0, size=n)
            z = np.empty(n)
            z[0] = eta[0]
            c = np.sqrt(1.0 - AR1_COEFF**2)
            for i in range(1, n):
                z[i] = AR1_COEFF * z[i - 1] + c * eta[i]
            u = ndtr(z)
        eps = half * (2.0 * u - 1.0)
    else:
        x = np.clip((-0.04 + 1.03 * path) * cap, 0.0, 0.95 * cap)
        if not (x == 0).any():
            x[np.argsort(x)[: max(1, n // 50)]] = 0.0
        spread = 0.01 * cap + 0.30 * np.minimum(x, cap - x)
        eps = np.clip(spread * (2.0 * rng.beta(2.0, 2.0, size=n) - 1.0), -x, cap - x)

    y = np.clip(x + eps, 0.0, cap)
    return PairedSeries(timestamps=_timestamps(n), x=x, y=y, cap=cap)
