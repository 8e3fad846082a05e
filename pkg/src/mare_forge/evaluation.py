"""Scores for scenario sets: target attainment, autocorrelation fidelity,
curvature fidelity, and their weighted combination.

All scores are root-mean-square deviations (normalized by the number of
scenarios so values are comparable across set sizes); the unnormalized
root-sum form is available behind a flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataio import mape


def _scenario_array(scenarios) -> np.ndarray:
    arr = getattr(scenarios, "scenarios", scenarios)
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def _root(total: float, m: int, normalized: bool) -> float:
    return float(np.sqrt(total / m if normalized else total))


def score_mare(scenarios, x, r_tilde: float, normalized: bool = True) -> float:
    """RMS deviation of per-scenario MAPE from the target, in points."""
    arr = _scenario_array(scenarios)
    x = np.asarray(x, dtype=float)
    devs = [100.0 * r_tilde - mape(x, row) for row in arr]
    return _root(float(np.sum(np.square(devs))), arr.shape[0], normalized)


def autocorrelation(errors, max_lag: int) -> np.ndarray:
    """rho(j) = sum_i e_{i+j} e_i / ((n - j) var), j = 1..max_lag, on the
    mean-centered series."""
    e = np.asarray(errors, dtype=float)
    n = len(e)
    if max_lag >= n:
        raise ValueError(f"max lag {max_lag} must be below series length {n}")
    e = e - e.mean()
    var = float(np.mean(e**2))
    if var <= 0:
        raise ValueError("zero-variance error series has no autocorrelation")
    return np.array([float(np.sum(e[j:] * e[:-j])) / ((n - j) * var) for j in range(1, max_lag + 1)])


def score_autocorrelation(
    scenarios, input_errors, max_lag: int, x=None, normalized: bool = True
) -> float:
    """RMS distance between input-error autocorrelations and each scenario's
    simulated-error autocorrelations over lags 1..max_lag.

    ``x`` (the simulation input the scenario errors are measured against) is
    taken from the scenario set when not given explicitly.
    """
    arr = _scenario_array(scenarios)
    if x is None:
        x = getattr(scenarios, "x", None)
        if x is None:
            raise ValueError("x must be given when scenarios is a bare array")
    x = np.asarray(x, dtype=float)
    rho_in = autocorrelation(input_errors, max_lag)
    total = 0.0
    for row in arr:
        rho_sim = autocorrelation(row - x, max_lag)
        total += float(np.sum((rho_in - rho_sim) ** 2))
    return _root(total, arr.shape[0], normalized)


def mean_abs_second_difference(y, signed: bool = False) -> float:
    y = np.asarray(y, dtype=float)
    d2 = y[2:] - 2.0 * y[1:-1] + y[:-2]
    return float(np.mean(d2 if signed else np.abs(d2)))


def score_second_difference(
    scenarios, reference, normalized: bool = True, signed: bool = False
) -> float:
    """RMS deviation of each scenario's mean |second difference| from the
    reference series' value. The signed mean (which telescopes to nearly
    zero) is kept as an option."""
    arr = _scenario_array(scenarios)
    if arr.shape[1] < 3:
        raise ValueError("need at least 3 time steps for second differences")
    d_ref = mean_abs_second_difference(reference, signed=signed)
    devs = [d_ref - mean_abs_second_difference(row, signed=signed) for row in arr]
    return _root(float(np.sum(np.square(devs))), arr.shape[0], normalized)


def composite_score(s_mare: float, s_autocorr: float, s_second_diff: float, weights) -> float:
    w_m, w_ac, w_sd = weights
    if w_m < 0 or w_ac < 0 or w_sd < 0:
        raise ValueError(f"weights must be nonnegative, got {weights}")
    return w_m * s_mare + w_ac * s_autocorr + w_sd * s_second_diff


@dataclass(frozen=True)
class ScoreReport:
    s_mare: float
    s_autocorr: float
    s_second_diff: float
    composite: float
    n_scenarios: int
    n_t: int
    mode: str
    p_lags: int
    weights: tuple[float, float, float]

    def to_json(self) -> str:
        return json.dumps(
            {
                "s_mare": self.s_mare,
                "s_autocorrelation": self.s_autocorr,
                "s_second_difference": self.s_second_diff,
                "composite": self.composite,
                "n_scenarios": self.n_scenarios,
                "n_t": self.n_t,
                "mode": self.mode,
                "p_lags": self.p_lags,
                "weights": list(self.weights),
            },
            indent=1,
        )

    def table(self) -> str:
        rows = [
            ("mare", self.s_mare),
            ("autocorrelation", self.s_autocorr),
            ("second_difference", self.s_second_diff),
            ("composite", self.composite),
        ]
        lines = [f"{'score':<20}{'value':>14}"]
        lines += [f"{name:<20}{value:>14.6f}" for name, value in rows]
        return "\n".join(lines)


def build_report(
    scenarios,
    x,
    r_tilde: float,
    input_errors,
    reference,
    mode: str,
    p_lags: int,
    weights=(1.0, 1.0, 1.0),
    normalized: bool = True,
) -> ScoreReport:
    arr = _scenario_array(scenarios)
    s_m = score_mare(arr, x, r_tilde, normalized=normalized)
    s_ac = score_autocorrelation(arr, input_errors, p_lags, x=x, normalized=normalized)
    s_sd = score_second_difference(arr, reference, normalized=normalized)
    return ScoreReport(
        s_mare=s_m,
        s_autocorr=s_ac,
        s_second_diff=s_sd,
        composite=composite_score(s_m, s_ac, s_sd, weights),
        n_scenarios=arr.shape[0],
        n_t=arr.shape[1],
        mode=mode,
        p_lags=p_lags,
        weights=tuple(weights),
    )
