"""Conditional beta error laws estimated on moving fraction-of-data windows.

For every input level x, the error y - x is modeled as a four-parameter beta
distribution on [l, l+s]. Parameters are fit from the errors whose inputs
fall inside a quantile window around x, so each level sees roughly the same
amount of data regardless of how inputs are distributed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataio import PairedSeries

DEFAULT_WINDOW_FRACTION = 0.05

# Guards keeping degenerate windows fittable; counted as "fallback" so the
# exact moment round-trip is only promised where they did not fire.
_MEAN_CLAMP = 1e-3
_VAR_SHRINK = 0.99


@dataclass(frozen=True)
class BetaParams:
    """One conditional error law: beta(alpha, beta) stretched onto [l, l+s]."""

    alpha: float
    beta: float
    l: float
    s: float

    def mean(self) -> float:
        return self.l + self.s * self.alpha / (self.alpha + self.beta)

    def variance(self) -> float:
        a, b = self.alpha, self.beta
        return self.s**2 * a * b / ((a + b) ** 2 * (a + b + 1))


def ecdf(sorted_x: np.ndarray, x) -> np.ndarray:
    """Empirical CDF G(x) = #{x_i <= x} / n over the sorted sample."""
    n = len(sorted_x)
    return np.searchsorted(sorted_x, x, side="right") / n


def ecdf_inverse(sorted_x: np.ndarray, u) -> np.ndarray:
    """Generalized inverse G^{-1}(u) = inf{x : G(x) >= u}.

    Implemented against the exact grid of attainable ECDF values so results
    agree with direct comparisons on G (no rounding drift from u*n).
    """
    n = len(sorted_x)
    grid = np.arange(1, n + 1) / n
    idx = np.clip(np.searchsorted(grid, u, side="left"), 0, n - 1)
    return sorted_x[idx]


def estimation_window(sorted_x: np.ndarray, x: float, a: float):
    """Quantile window of half-fraction a around x.

    Returns (interval, indices, center): the interval
    [G^{-1}(G(x)-a), G^{-1}(G(x)+a)], the indices into ``sorted_x`` whose
    values fall inside it, and the interval midpoint. Near the data
    boundaries the window truncates and may hold as little as a fraction a
    of the sample.
    """
    if not 0 < a <= 0.5:
        raise ValueError(f"window fraction must be in (0, 0.5], got {a}")
    sorted_x = np.asarray(sorted_x, dtype=float)
    if not sorted_x[0] <= x <= sorted_x[-1]:
        raise ValueError(f"x={x} outside data range [{sorted_x[0]}, {sorted_x[-1]}]")
    u = ecdf(sorted_x, x)
    lo = float(ecdf_inverse(sorted_x, u - a))
    hi = float(ecdf_inverse(sorted_x, u + a))
    i0 = int(np.searchsorted(sorted_x, lo, side="left"))
    i1 = int(np.searchsorted(sorted_x, hi, side="right"))
    if i1 <= i0:
        raise ValueError(f"empty estimation window at x={x}, a={a}")
    return (lo, hi), np.arange(i0, i1), 0.5 * (lo + hi)


def fit_location(sample_errors, x: float, cap: float) -> tuple[float, float]:
    """Support [l, l+s] from the sample range, clamped so x+l >= 0 and
    x+l+s <= cap (no simulated output can leave [0, cap])."""
    e = np.asarray(sample_errors, dtype=float)
    if e.size == 0:
        raise ValueError("empty error sample")
    l = max(float(e.min()), -x)
    l = min(l, cap - x)  # degenerate guard: whole sample above cap - x
    s = min(float(e.max()), cap - x) - l
    return l, max(s, 0.0)


def fit_shape_moments(sample_errors, l: float, s: float) -> tuple[float, float]:
    """Method-of-moments shape parameters on the support [l, l+s].

    Solves mean = s*alpha/(alpha+beta) + l and
    var = s^2 * alpha*beta / ((alpha+beta)^2 (alpha+beta+1)) in closed form.
    A sample variance too large for the support is shrunk to 0.99 of the
    attainable maximum instead of failing.
    """
    e = np.asarray(sample_errors, dtype=float)
    if s <= 0:
        raise ValueError(f"scale must be positive, got s={s}")
    mu = float(e.mean())
    var = float(e.var())
    if var <= 0:
        raise ValueError("zero variance sample: shape parameters undetermined")
    if not l < mu < l + s:
        raise ValueError(f"sample mean {mu} not strictly inside support [{l}, {l + s}]")
    return _shape_from_unit_moments((mu - l) / s, var / s**2)


def _shape_from_unit_moments(m: float, v: float) -> tuple[float, float]:
    if v >= m * (1.0 - m):
        v = _VAR_SHRINK * m * (1.0 - m)
    k = m * (1.0 - m) / v - 1.0
    return m * k, (1.0 - m) * k


@dataclass(frozen=True)
class FittedModel:
    """Conditional beta parameters per estimation level.

    One record per distinct input value (the anchor); the record's key is
    the window center. Lookups resolve to the nearest center, breaking
    center ties by nearest anchor, so a dataset containing zero-power rows
    always resolves x=0 to the parameters fitted for the zero level.
    """

    cap: float
    a: float
    anchors: np.ndarray  # distinct input values, sorted
    centers: np.ndarray  # window centers, nondecreasing, aligned with anchors
    alpha: np.ndarray
    beta: np.ndarray
    l: np.ndarray
    s: np.ndarray
    window_counts: np.ndarray | None = None
    moment_fallback: np.ndarray | None = None
    sorted_x: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_levels(self) -> int:
        return len(self.centers)

    @property
    def levels(self) -> np.ndarray:
        return self.centers

    def lookup_index(self, xq) -> np.ndarray:
        """Index of the level whose center is nearest each query point."""
        xq = np.atleast_1d(np.asarray(xq, dtype=float))
        c = self.centers
        k = len(c)
        j = np.searchsorted(c, xq)
        lo = np.clip(j - 1, 0, k - 1)
        hi = np.clip(j, 0, k - 1)
        d_lo = np.abs(xq - c[lo])
        d_hi = np.abs(xq - c[hi])
        pick = np.where(d_lo <= d_hi, lo, hi)
        # ties across a run of equal centers: nearest anchor wins
        tie = d_lo == d_hi
        if tie.any():
            pick_t = pick[tie]
            xq_t = xq[tie]
            best = pick_t.copy()
            for w, (xi, p) in enumerate(zip(xq_t, pick_t)):
                cv = c[p]
                r0 = int(np.searchsorted(c, cv, side="left"))
                r1 = int(np.searchsorted(c, cv, side="right"))
                run = slice(r0, r1)
                best[w] = r0 + int(np.argmin(np.abs(self.anchors[run] - xi)))
            pick[tie] = best
        return pick

    def params_at(self, x: float) -> BetaParams:
        i = int(self.lookup_index(x)[0])
        return BetaParams(
            alpha=float(self.alpha[i]), beta=float(self.beta[i]),
            l=float(self.l[i]), s=float(self.s[i]),
        )

    def to_json(self) -> str:
        levels = [
            {
                "x_bar": float(self.centers[i]),
                "x_anchor": float(self.anchors[i]),
                "alpha": float(self.alpha[i]),
                "beta": float(self.beta[i]),
                "l": float(self.l[i]),
                "s": float(self.s[i]),
            }
            for i in range(self.n_levels)
        ]
        return json.dumps({"cap": self.cap, "a": self.a, "levels": levels}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        doc = json.loads(text)
        lv = doc["levels"]
        return cls(
            cap=float(doc["cap"]),
            a=float(doc["a"]),
            anchors=np.array([r.get("x_anchor", r["x_bar"]) for r in lv], dtype=float),
            centers=np.array([r["x_bar"] for r in lv], dtype=float),
            alpha=np.array([r["alpha"] for r in lv], dtype=float),
            beta=np.array([r["beta"] for r in lv], dtype=float),
            l=np.array([r["l"] for r in lv], dtype=float),
            s=np.array([r["s"] for r in lv], dtype=float),
        )


def fit_conditional_models(series: PairedSeries, a: float = DEFAULT_WINDOW_FRACTION) -> FittedModel:
    """Fit a conditional beta law at every distinct input value.

    Windows are computed per distinct x (tied inputs share a window); the
    location clamp uses the anchor value itself and the result is keyed by
    the window center. Deterministic: same series and a give the same model.
    """
    n = series.n
    if not 2.0 / n <= a <= 0.5:
        raise ValueError(f"window fraction must be in [2/n, 0.5] = [{2.0 / n}, 0.5], got {a}")
    order = np.argsort(series.x, kind="stable")
    xs = series.x[order]
    es = series.errors()[order]
    anchors = np.unique(xs)

    u = ecdf(xs, anchors)
    lo_vals = ecdf_inverse(xs, u - a)
    hi_vals = ecdf_inverse(xs, u + a)
    i0 = np.searchsorted(xs, lo_vals, side="left")
    i1 = np.searchsorted(xs, hi_vals, side="right")

    k = len(anchors)
    alpha = np.empty(k)
    beta = np.empty(k)
    loc = np.empty(k)
    scale = np.empty(k)
    counts = np.empty(k, dtype=int)
    fallback = np.zeros(k, dtype=bool)
    for i in range(k):
        sample = es[i0[i]:i1[i]]
        counts[i] = sample.size
        x_i = anchors[i]
        l_i, s_i = fit_location(sample, x_i, series.cap)
        loc[i] = l_i
        scale[i] = s_i
        if s_i <= 0:
            alpha[i], beta[i] = 1.0, 1.0  # point mass at l
            fallback[i] = True
            continue
        mu = float(sample.mean())
        var = float(sample.var())
        m = (mu - l_i) / s_i
        v = var / s_i**2
        if not _MEAN_CLAMP <= m <= 1.0 - _MEAN_CLAMP:
            m = float(np.clip(m, _MEAN_CLAMP, 1.0 - _MEAN_CLAMP))
            fallback[i] = True
        if v <= 0:
            v = _MEAN_CLAMP * m * (1.0 - m)
            fallback[i] = True
        elif v >= m * (1.0 - m):
            fallback[i] = True
        try:
            alpha[i], beta[i] = _shape_from_unit_moments(m, v)
        except ValueError as e:
            raise ValueError(f"shape fit failed at level x={x_i}: {e}") from e

    centers = 0.5 * (lo_vals + hi_vals)
    return FittedModel(
        cap=series.cap,
        a=a,
        anchors=anchors,
        centers=centers,
        alpha=alpha,
        beta=beta,
        l=loc,
        s=scale,
        window_counts=counts,
        moment_fallback=fallback,
        sorted_x=xs,
    )


def _joint_density_deviation(series: PairedSeries, model: FittedModel) -> float:
    """Discretized squared deviation between the empirical joint density of
    (x, error) and the fitted one (marginal-of-x times conditional beta)."""
    from scipy.stats import beta as beta_dist

    x = series.x
    eps = series.errors()
    cap = series.cap
    nb = int(np.ceil(np.sqrt(series.n)))
    x_edges = np.linspace(0.0, cap, nb + 1)
    e_edges = np.linspace(-cap, cap, nb + 1)
    g, _, _ = np.histogram2d(x, eps, bins=[x_edges, e_edges], density=True)
    fx, _ = np.histogram(x, bins=x_edges, density=True)

    x_mid = 0.5 * (x_edges[:-1] + x_edges[1:])
    e_mid = 0.5 * (e_edges[:-1] + e_edges[1:])
    idx = model.lookup_index(x_mid)
    l = model.l[idx][:, None]
    s = model.s[idx][:, None]
    al = model.alpha[idx][:, None]
    be = model.beta[idx][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (e_mid[None, :] - l) / np.where(s > 0, s, np.nan)
        cond = np.where((t >= 0) & (t <= 1), beta_dist.pdf(np.clip(t, 0, 1), al, be) / s, 0.0)
    cond = np.nan_to_num(cond, nan=0.0, posinf=0.0)
    f_hat = fx[:, None] * cond
    dx = x_edges[1] - x_edges[0]
    de = e_edges[1] - e_edges[0]
    return float(np.sum((g - f_hat) ** 2) * dx * de)


def select_window_fraction(series: PairedSeries, candidate_as) -> tuple[float, list[tuple[float, float]]]:
    """Pick the window fraction minimizing the joint-density deviation.

    Returns the argmin candidate and the full (a, deviation) curve.
    """
    candidates = list(candidate_as)
    if not candidates:
        raise ValueError("no candidate window fractions given")
    curve = []
    for a in candidates:
        model = fit_conditional_models(series, a)
        curve.append((float(a), _joint_density_deviation(series, model)))
    best_a = min(curve, key=lambda t: t[1])[0]
    return best_a, curve
