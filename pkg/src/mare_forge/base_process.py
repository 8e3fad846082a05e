"""Latent Gaussian base process reproducing error autocorrelation.

Historical errors are mapped through their conditional CDFs and the normal
quantile function into an approximately N(0,1) series; an ARMA model fitted
on it (BIC-selected order, innovation variance calibrated for unit
stationary variance) then drives autocorrelated uniform draws at simulation
time.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov
from scipy.signal import lfilter
from scipy.special import ndtri
from scipy.stats import beta as beta_dist

from .conditional_fit import FittedModel
from .dataio import PairedSeries

DEFAULT_MAX_ORDER = (5, 5)


@dataclass(frozen=True)
class ArmaModel:
    """ARMA(p, q) with innovation std sigma_delta, unit stationary variance."""

    p: int
    q: int
    a: tuple[float, ...]  # AR coefficients
    b: tuple[float, ...]  # MA coefficients
    sigma_delta: float
    bic: float
    grid_bics: tuple[tuple[int, int, float], ...] | None = field(default=None, compare=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "q": self.q,
                "a": list(self.a),
                "b": list(self.b),
                "sigma_delta": self.sigma_delta,
                "bic": self.bic,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "ArmaModel":
        d = json.loads(text)
        return cls(
            p=int(d["p"]), q=int(d["q"]), a=tuple(d["a"]), b=tuple(d["b"]),
            sigma_delta=float(d["sigma_delta"]), bic=float(d["bic"]),
        )


def _conditional_cdf(series: PairedSeries, model: FittedModel) -> np.ndarray:
    idx = model.lookup_index(series.x)
    l = model.l[idx]
    s = model.s[idx]
    eps = series.errors()
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(s > 0, (eps - l) / np.where(s > 0, s, 1.0), np.where(eps >= l, 1.0, 0.0))
    return beta_dist.cdf(np.clip(t, 0.0, 1.0), model.alpha[idx], model.beta[idx])


def latent_gaussian_series(series: PairedSeries, model: FittedModel) -> np.ndarray:
    """Map each observed error through its conditional CDF and the normal
    quantile, in time order.

    CDF values are clamped to [1/(2n), 1 - 1/(2n)] so errors sitting on the
    fitted support boundary stay finite.
    """
    u = _conditional_cdf(series, model)
    eps = 1.0 / (2.0 * series.n)
    return ndtri(np.clip(u, eps, 1.0 - eps))


def _ar_roots_ok(a) -> bool:
    if len(a) == 0:
        return True
    coeffs = np.concatenate([[-c for c in a[::-1]], [1.0]])
    return bool(np.all(np.abs(np.roots(coeffs)) > 1.0))


def _ma_roots_ok(b) -> bool:
    if len(b) == 0:
        return True
    coeffs = np.concatenate([list(b[::-1]), [1.0]])
    return bool(np.all(np.abs(np.roots(coeffs)) > 1.0))


def stationary_variance(model: ArmaModel) -> float:
    """Exact stationary variance from the ARMA autocovariance equations.

    Uses the state-space form of the process and solves the discrete
    Lyapunov equation for the state covariance; no simulation involved.
    """
    if not _ar_roots_ok(model.a):
        raise ValueError(f"non-stationary AR coefficients: {model.a}")
    p, q = model.p, model.q
    if p == 0 and q == 0:
        return model.sigma_delta**2
    m = max(p, q + 1)
    phi = np.zeros(m)
    phi[:p] = model.a
    theta = np.zeros(m - 1)
    theta[:q] = model.b
    t_mat = np.zeros((m, m))
    t_mat[:, 0] = phi
    for i in range(m - 1):
        t_mat[i, i + 1] = 1.0
    r = np.concatenate([[1.0], theta])
    cov = solve_discrete_lyapunov(t_mat, model.sigma_delta**2 * np.outer(r, r))
    return float(cov[0, 0])


def fit_arma(z: np.ndarray, max_order: tuple[int, int] = DEFAULT_MAX_ORDER) -> ArmaModel:
    """Grid search over ARMA orders, keeping the BIC-minimizing fit.

    Every candidate is fit by Gaussian maximum likelihood with zero mean;
    candidates that fail to converge or violate stationarity/invertibility
    are skipped. The innovation std of the winner is rescaled so the
    stationary variance is exactly 1.
    """
    from statsmodels.tsa.arima.model import ARIMA

    z = np.asarray(z, dtype=float)
    n = len(z)
    p_max, q_max = max_order
    if n < 10 * (p_max + q_max + 1):
        raise ValueError(
            f"series too short for order bounds {max_order}: need >= {10 * (p_max + q_max + 1)}, got {n}"
        )

    grid: list[tuple[int, int, float]] = []
    best = None
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    res = ARIMA(
                        z, order=(p, 0, q), trend="n",
                        enforce_stationarity=True, enforce_invertibility=True,
                    ).fit()
            except Exception:
                continue
            llf = float(res.llf)
            params = dict(zip(res.param_names, np.asarray(res.params, dtype=float)))
            sigma2 = params.get("sigma2", np.nan)
            if not np.isfinite(llf) or not np.isfinite(sigma2) or sigma2 <= 0:
                continue
            a = tuple(float(v) for v in res.arparams)
            b = tuple(float(v) for v in res.maparams)
            if not (_ar_roots_ok(a) and _ma_roots_ok(b)):
                continue
            bic = (p + q + 1) * np.log(n) - 2.0 * llf
            grid.append((p, q, float(bic)))
            if best is None or bic < best[0]:
                best = (bic, p, q, a, b, float(np.sqrt(sigma2)))
    if best is None:
        raise RuntimeError("no ARMA candidate produced a valid stationary fit")

    bic, p, q, a, b, sigma = best
    raw = ArmaModel(p=p, q=q, a=a, b=b, sigma_delta=sigma, bic=float(bic))
    v = stationary_variance(raw)
    return ArmaModel(
        p=p, q=q, a=a, b=b,
        sigma_delta=sigma / np.sqrt(v),
        bic=float(bic),
        grid_bics=tuple(grid),
    )


def simulate_base_process(
    model: ArmaModel,
    length: int,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sample path of the ARMA recursion, burn-in discarded.

    Deterministic per seed; pass an explicit generator to draw from an
    existing stream instead.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    burn = 100 + 10 * (model.p + model.q)
    delta = rng.normal(0.0, model.sigma_delta, size=length + burn)
    num = np.concatenate([[1.0], model.b])
    den = np.concatenate([[1.0], [-c for c in model.a]])
    z = lfilter(num, den, delta)
    return z[burn:]
