"""Command-line entry point: fit, target, simulate, score, make fixtures.

Runs are reproducible from a flat JSON config file or flags (flags win).
Artifacts land in the output directory: fitted model, target function,
adjusted parameters, scenario CSV, scores, provenance, and a line-oriented
log with stable keys for scraping.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from . import evaluation
from .base_process import fit_arma, latent_gaussian_series
from .conditional_fit import DEFAULT_WINDOW_FRACTION, fit_conditional_models, select_window_fraction
from .curvature_opt import CurvatureSpec
from .dataio import (
    DataValidationError,
    SidSelection,
    atomic_write_text,
    load_csv,
    load_sid_csv,
    save_csv,
)
from .fixtures import KINDS, make_fixture
from .scenario_engine import SimulationRequest, simulate
from .target_alloc import InfeasibleTargetError, estimate_weights, max_feasible_mare

ROLES = ("forecasts-to-actuals", "actuals-to-forecasts")
MODE_ALIASES = {"iid": "iid", "arma": "arma", "curvature": "arma+curvature"}
SELECT_A_GRID = (0.02, 0.035, 0.05, 0.1, 0.2, 0.35, 0.5)


@dataclass
class RunConfig:
    input_csv: str
    output_dir: str
    target_mape: float
    roles: str = "forecasts-to-actuals"
    a: str | float = DEFAULT_WINDOW_FRACTION
    select_a: bool = False
    mode: str = "iid"
    scenarios: int = 5
    sid_start: str | None = None
    sid_end: str | None = None
    sid_csv: str | None = None
    seed: int = 0
    cap: float | None = None
    curvature_d: float | None = None
    ws: float = 1.0
    weps: float = 1.0
    gap: float = 0.05
    score_lags: int = 10
    score_weights: str = "1,1,1"

    def validate(self):
        if self.roles not in ROLES:
            raise ValueError(f"roles must be one of {ROLES}, got {self.roles!r}")
        if self.mode not in MODE_ALIASES:
            raise ValueError(f"mode must be one of {sorted(MODE_ALIASES)}, got {self.mode!r}")
        if self.target_mape < 0:
            raise ValueError(f"target MAPE must be >= 0, got {self.target_mape}")
        if self.scenarios < 1:
            raise ValueError("need at least one scenario")


class _Log:
    def __init__(self):
        self.lines: list[str] = []

    def put(self, key: str, value):
        if isinstance(value, float):
            value = f"{value:.9g}"
        line = f"{key}={value}"
        self.lines.append(line)
        print(line)

    def write(self, path):
        atomic_write_text(path, "\n".join(self.lines) + "\n")


def _parse_dt(text: str | None):
    return None if text is None else datetime.fromisoformat(text)


def run(config: RunConfig) -> int:
    """Execute the full pipeline for one configuration."""
    config.validate()
    log = _Log()
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    try:
        if config.roles == "forecasts-to-actuals":
            series = load_csv(config.input_csv, cap=config.cap)
        else:
            series = load_csv(config.input_csv, cap=config.cap, x_col="actuals", y_col="forecasts")
    except DataValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    log.put("input_rows", series.n)
    log.put("cap", series.cap)
    log.put("seed", config.seed)
    log.put("mode", config.mode)

    if config.select_a or config.a == "auto":
        grid = [a for a in SELECT_A_GRID if a >= 2.0 / series.n]
        a, curve = select_window_fraction(series, grid)
        for cand, dev in curve:
            log.put(f"a_curve_{cand:g}", dev)
    else:
        a = float(config.a)
    log.put("a", a)

    model = fit_conditional_models(series, a)
    atomic_write_text(os.path.join(out, "fitted_model.json"), model.to_json() + "\n")
    log.put("n_levels", model.n_levels)

    weights = estimate_weights(model, series)
    log.put("r_mhat", weights.r_mhat)

    if config.sid_csv:
        sid = load_sid_csv(config.sid_csv)
    else:
        sid = SidSelection.from_series(series, _parse_dt(config.sid_start), _parse_dt(config.sid_end))
    log.put("n_sid", sid.n_sid)

    r_max = max_feasible_mare(weights, sid, model)
    log.put("r_tilde_max", r_max)
    log.put("max_feasible_mape", 100.0 * r_max)

    arma = None
    mode = MODE_ALIASES[config.mode]
    if mode != "iid":
        z = latent_gaussian_series(series, model)
        arma = fit_arma(z)
        log.put("arma_p", arma.p)
        log.put("arma_q", arma.q)
        log.put("arma_sigma_delta", arma.sigma_delta)
        atomic_write_text(os.path.join(out, "arma_model.json"), arma.to_json() + "\n")

    curvature = None
    if mode == "arma+curvature":
        if config.curvature_d is not None:
            d = config.curvature_d
        else:
            from .curvature_opt import second_difference

            d = float(np.mean(np.abs(second_difference(sid.x_sid)))) if sid.n_sid >= 3 else 0.0
        curvature = CurvatureSpec(
            d=d, w_s=config.ws, w_eps=config.weps, d_max=4.0 * series.cap, gap=config.gap
        )
        log.put("curvature_d", d)

    req = SimulationRequest(
        sid=sid,
        r_tilde=config.target_mape / 100.0,
        n_scenarios=config.scenarios,
        mode=mode,
        seed=config.seed,
        curvature=curvature,
    )
    try:
        from .target_alloc import build_targets

        target = build_targets(weights, sid, req.r_tilde)
        log.put("p_sid", target.plausibility)
        atomic_write_text(os.path.join(out, "target_function.json"), target.to_json() + "\n")
        scen = simulate(model, weights, arma, req)
    except InfeasibleTargetError as e:
        log.put("error", "infeasible_target")
        log.put("requested_mape", config.target_mape)
        print(f"error: {e} (max feasible MAPE = {100.0 * e.r_max:.4f}%)", file=sys.stderr)
        log.write(os.path.join(out, "run.log"))
        return 2

    from .target_alloc import adjust_distributions

    adjusted = adjust_distributions(model, target)
    atomic_write_text(os.path.join(out, "adjusted_params.json"), adjusted.to_json() + "\n")

    scen.write_csv(os.path.join(out, "scenarios.csv"))
    scen.write_provenance(os.path.join(out, "provenance.json"))
    if scen.provenance.get("miqp_gaps"):
        gaps = scen.provenance["miqp_gaps"]
        log.put("miqp_gap_max", max(gaps))
        log.put("miqp_gap_mean", sum(gaps) / len(gaps))

    w_parts = tuple(float(v) for v in config.score_weights.split(","))
    if len(w_parts) != 3:
        raise ValueError(f"score weights must be three comma-separated numbers, got {config.score_weights!r}")
    p_lags = min(config.score_lags, sid.n_sid - 1)
    report = evaluation.build_report(
        scen,
        sid.x_sid,
        req.r_tilde,
        input_errors=series.errors(),
        reference=sid.x_sid,
        mode=config.mode,
        p_lags=p_lags,
        weights=w_parts,
    )
    atomic_write_text(os.path.join(out, "scores.json"), report.to_json() + "\n")
    log.put("s_mare", report.s_mare)
    log.put("s_autocorrelation", report.s_autocorr)
    log.put("s_second_difference", report.s_second_diff)
    log.put("composite_score", report.composite)
    print(report.table())
    log.write(os.path.join(out, "run.log"))
    return 0


_RUN_KEYS = [k for k in RunConfig.__dataclass_fields__]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mare-forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="fit, target, simulate and score")
    p_run.add_argument("--config", help="flat JSON config file; flags override its keys")
    p_run.add_argument("--input", dest="input_csv")
    p_run.add_argument("--output-dir", dest="output_dir")
    p_run.add_argument("--target-mape", dest="target_mape", type=float)
    p_run.add_argument("--roles", choices=ROLES)
    p_run.add_argument("--a", dest="a", help="window fraction or 'auto'")
    p_run.add_argument("--select-a", dest="select_a", action="store_true", default=None)
    p_run.add_argument("--mode", choices=sorted(MODE_ALIASES))
    p_run.add_argument("--scenarios", type=int)
    p_run.add_argument("--sid-start", dest="sid_start")
    p_run.add_argument("--sid-end", dest="sid_end")
    p_run.add_argument("--sid-csv", dest="sid_csv")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--cap", type=float)
    p_run.add_argument("--curvature-d", dest="curvature_d", type=float)
    p_run.add_argument("--ws", type=float)
    p_run.add_argument("--weps", type=float)
    p_run.add_argument("--gap", type=float)
    p_run.add_argument("--score-lags", dest="score_lags", type=int)
    p_run.add_argument("--score-weights", dest="score_weights")

    p_fix = sub.add_parser("make-fixture", help="generate a synthetic paired series CSV")
    p_fix.add_argument("--kind", choices=KINDS, required=True)
    p_fix.add_argument("--n", type=int, required=True)
    p_fix.add_argument("--seed", type=int, default=0)
    p_fix.add_argument("--cap", type=float, default=100.0)
    p_fix.add_argument("--out", required=True)
    return parser


def _merge_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        unknown = set(doc) - set(_RUN_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    for key in _RUN_KEYS:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            values[key] = flag_val
    missing = [k for k in ("input_csv", "output_dir", "target_mape") if k not in values]
    if missing:
        raise ValueError(f"missing required settings: {missing} (flag or config file)")
    return RunConfig(**values)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "make-fixture":
        series = make_fixture(args.kind, args.n, args.seed, cap=args.cap)
        save_csv(series, args.out)
        print(f"wrote {args.out} ({series.n} rows, cap={series.cap})")
        return 0
    try:
        config = _merge_config(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        return run(config)
    except (ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
