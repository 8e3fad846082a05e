"""Second-difference smoothing as a mixed-integer quadratic program.

Trades fidelity to the simulated errors against a target curvature: the
objective penalizes both (|second difference| - d)^2 and deviations from the
simulated series, subject to the output staying in [0, cap]. The binary part
(one sign indicator per second difference) is handled by depth-first branch
and bound; each node relaxation is a smooth convex box-constrained problem.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


@dataclass(frozen=True)
class CurvatureSpec:
    """User inputs for the smoothing program.

    d is the target |second difference|; w_s and w_eps weight curvature and
    error fidelity; d_max is the big-M constant (at least 4*cap); gap is the
    relative optimality gap at which the search may stop.
    """

    d: float
    w_s: float = 1.0
    w_eps: float = 1.0
    d_max: float | None = None  # defaults to 4*cap at solve time
    gap: float = 0.05
    node_budget: int = 10_000

    def __post_init__(self):
        if self.d < 0:
            raise ValueError(f"target second difference must be >= 0, got {self.d}")
        if self.w_s < 0 or self.w_eps < 0 or self.w_s + self.w_eps <= 0:
            raise ValueError(f"weights must be nonnegative with positive sum, got ({self.w_s}, {self.w_eps})")
        if self.gap < 0:
            raise ValueError(f"gap must be >= 0, got {self.gap}")


@dataclass(frozen=True)
class CurvatureSolution:
    y: np.ndarray
    objective: float
    bound: float
    gap_achieved: float
    b: np.ndarray  # sign pattern of the second differences at the solution
    lam_plus: np.ndarray
    lam_minus: np.ndarray
    nodes: int
    solve_time: float


def second_difference(y) -> np.ndarray:
    """s_i = y_{i+2} - 2 y_{i+1} + y_i, one entry per interior position."""
    y = np.asarray(y, dtype=float)
    if len(y) < 3:
        raise ValueError(f"need at least 3 points, got {len(y)}")
    return y[2:] - 2.0 * y[1:-1] + y[:-2]


def _second_diff_adjoint(g: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[2:] += g
    out[1:-1] -= 2.0 * g
    out[:-2] += g
    return out


def _true_objective(y, c, d, w_s, w_eps) -> float:
    t = second_difference(y)
    return float(w_eps * np.sum((y - c) ** 2) + w_s * np.sum((np.abs(t) - d) ** 2))


def _node_value_and_grad(y, c, d, w_s, w_eps, pattern):
    """Objective/gradient with fixed signs where pattern is +-1 and the
    convex envelope max(|t|-d, 0)^2 where pattern is 0 (valid lower bound
    for every completion of the pattern)."""
    t = second_difference(y)
    fixed = pattern != 0
    sig = pattern.astype(float)
    r_fixed = sig * t - d
    pen_fixed = np.where(fixed, r_fixed**2, 0.0)
    g_fixed = np.where(fixed, 2.0 * r_fixed * sig, 0.0)
    excess = np.maximum(np.abs(t) - d, 0.0)
    pen_rel = np.where(fixed, 0.0, excess**2)
    g_rel = np.where(fixed, 0.0, 2.0 * excess * np.sign(t))
    val = w_eps * np.sum((y - c) ** 2) + w_s * np.sum(pen_fixed + pen_rel)
    grad = 2.0 * w_eps * (y - c) + w_s * _second_diff_adjoint(g_fixed + g_rel, len(y))
    return val, grad


_TIGHT = {"ftol": 1e-15, "gtol": 1e-12, "maxiter": 2000, "maxfun": 20000}
_FAST = {"ftol": 1e-12, "gtol": 1e-7, "maxiter": 300, "maxfun": 3000}


def _solve_node(c, d, w_s, w_eps, cap, pattern, x0, options):
    res = minimize(
        _node_value_and_grad,
        x0,
        args=(c, d, w_s, w_eps, pattern),
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, cap)] * len(c),
        options=options,
    )
    return float(res.fun), res.x


def smooth(y0, x, eps_tilde, spec: CurvatureSpec, cap: float) -> CurvatureSolution:
    """Minimize w_s*(|second difference| - d)^2 + w_eps*(y - x - eps)^2 over
    y in [0, cap]^n, stopping within spec.gap of the best lower bound.

    The unsmoothed point clamp(x + eps) is always feasible, so an incumbent
    exists from the start; its sign pattern seeds the search. If the node
    budget runs out first, the incumbent is returned with whatever gap was
    proven (gap_achieved may then exceed spec.gap).
    """
    y0 = np.asarray(y0, dtype=float)
    x = np.asarray(x, dtype=float)
    eps_tilde = np.asarray(eps_tilde, dtype=float)
    if not (len(y0) == len(x) == len(eps_tilde)):
        raise ValueError("y0, x and eps_tilde must have equal lengths")
    d_max = spec.d_max if spec.d_max is not None else 4.0 * cap
    if d_max < 4.0 * cap:
        raise ValueError(f"d_max must be at least 4*cap = {4.0 * cap}, got {d_max}")
    t_start = time.monotonic()
    n = len(x)
    c = x + eps_tilde
    w_s, w_eps, d = spec.w_s, spec.w_eps, spec.d

    def finish(y, objective, bound, nodes):
        t = second_difference(y) if n >= 3 else np.zeros(0)
        gap = (objective - bound) / max(abs(objective), 1e-12) if objective > bound else 0.0
        return CurvatureSolution(
            y=y,
            objective=objective,
            bound=bound,
            gap_achieved=float(gap),
            b=(t >= 0).astype(int),
            lam_plus=np.maximum(t, 0.0),
            lam_minus=np.maximum(-t, 0.0),
            nodes=nodes,
            solve_time=time.monotonic() - t_start,
        )

    clamped = np.clip(c, 0.0, cap)
    if n < 3 or w_s == 0.0:
        obj = _true_objective(clamped, c, d, w_s, w_eps) if n >= 3 else float(
            w_eps * np.sum((clamped - c) ** 2)
        )
        return finish(clamped, obj, obj, 0)

    m = n - 2
    eps_num = 1e-9
    options = _TIGHT if spec.gap == 0.0 else _FAST

    # incumbent from the sign pattern of the unsmoothed second differences
    sig0 = np.where(second_difference(y0) >= 0, 1, -1)
    _, y_inc = _solve_node(c, d, w_s, w_eps, cap, sig0, y0, options)
    best_obj = min(_true_objective(y_inc, c, d, w_s, w_eps),
                   _true_objective(clamped, c, d, w_s, w_eps))
    if _true_objective(clamped, c, d, w_s, w_eps) <= _true_objective(y_inc, c, d, w_s, w_eps):
        y_inc = clamped.copy()

    nodes = 0
    open_bounds: list[float] = []  # bounds of subtrees not explored further
    root = np.zeros(m, dtype=int)
    stack = [(root, y_inc.copy(), -np.inf)]  # (pattern, warm start, parent bound)
    while stack:
        if nodes >= spec.node_budget:
            # budget exhausted: the unexplored frontier keeps its inherited
            # (parent) bounds, which are valid for every completion below
            open_bounds.extend(b for _, _, b in stack)
            break
        pattern, warm, inherited = stack.pop()
        slack = max(spec.gap * abs(best_obj), eps_num * (1.0 + abs(best_obj)))
        if inherited >= best_obj - slack:
            open_bounds.append(inherited)
            continue
        nodes += 1
        bound, y_node = _solve_node(c, d, w_s, w_eps, cap, pattern, warm, options)
        if bound >= best_obj - slack:
            open_bounds.append(bound)
            continue
        obj_node = _true_objective(y_node, c, d, w_s, w_eps)
        if obj_node < best_obj:
            best_obj = obj_node
            y_inc = y_node.copy()
        t = second_difference(y_node)
        free = pattern == 0
        cheat = np.where(free, np.maximum(d - np.abs(t), 0.0) ** 2, 0.0)
        if not free.any() or cheat.max() <= eps_num * (1.0 + abs(best_obj)):
            # relaxation agrees with the best completion at this point
            continue
        j = int(np.argmax(cheat))
        preferred = 1 if t[j] >= 0 else -1
        for sgn in (-preferred, preferred):  # preferred child on top of the stack
            child = pattern.copy()
            child[j] = sgn
            stack.append((child, y_node.copy(), bound))

    lb = min(open_bounds) if open_bounds else best_obj
    lb = min(lb, best_obj)
    return finish(y_inc, best_obj, lb, nodes)
