"""Experiment runners behind the CLI.

Each experiment expands its configuration into independent cells, computes
the cells (possibly on a thread pool) and returns rows in a fixed column
order.  Every row carries a ``status`` of ``ok``, ``diverged``,
``nonconverged`` or ``heavy-tail``.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ExperimentConfig
from .core import (
    ConditionedState,
    ConvergenceError,
    ModelParams,
    blow_up_time,
    classical_condition,
    conditional_field,
    fourth_order_symbols,
    lp_condition,
    second_order_symbols,
    split_conditions,
)
from .moments import divergence_time, expected_norm_p, time_integrated_moment
from .multipliers import empirical_mq_norm, marcinkiewicz_constant, theorem51_multipliers, zeta_symbol
from .paths import (
    SchemeKind,
    StabilityError,
    BrownianPath,
    PathSolution,
    brownian_increments,
    monte_carlo_moment,
    simulate_modes,
    strong_solution_residual,
    _norms_over_time,
)
from .spaces import NormSpec

__all__ = ["COLUMNS", "STATUSES", "ExperimentResult", "run_experiment"]

STATUSES = ("ok", "diverged", "nonconverged", "heavy-tail")

COLUMNS = {
    "PhaseDiagram": [
        "alpha", "beta", "p", "classical", "classical_margin", "lp", "lp_margin",
        "parabolicity", "integrability", "blow_up_time", "status",
    ],
    "BlowUpCurve": ["alpha", "beta", "p", "delta", "blow_up_time", "divergence_time", "rel_diff", "status"],
    "MomentVsTime": [
        "alpha", "beta", "p", "q", "s", "t", "moment", "norm", "method", "error_indicator",
        "divergence_time", "mc_estimate", "mc_ci95", "mc_excess_kurtosis", "status",
    ],
    "MultiplierReport": [
        "alpha", "beta", "p", "q", "t", "w", "eps", "shift", "floor_shift", "K_m3", "sup_m3",
        "variation_m3", "zeta_max_level", "zeta_bound", "mq_norm_m3", "status",
    ],
    "SchemeConvergence": [
        "alpha", "beta", "p", "T", "steps", "dt", "exact_error", "em_error", "em_order", "residual", "status",
    ],
    "FourthOrder": [
        "alpha", "beta", "p", "q", "s", "t", "moment", "method", "time_integrated", "divergence_time", "status",
    ],
}


@dataclass
class ExperimentResult:
    experiment: str
    columns: list
    rows: list  # list of dicts

    @property
    def nonconverged(self) -> int:
        return sum(r["status"] == "nonconverged" for r in self.rows)


def _delta(cfg: ExperimentConfig) -> float:
    return float(cfg.initial["delta"]) if cfg.initial["kind"] == "GaussianWidth" else 1.0


def _grid(cfg: ExperimentConfig, names):
    return list(itertools.product(*(cfg.params[n] for n in names)))


def _params(alpha, beta, p=2.0, q=2.0, s=0.0) -> ModelParams:
    return ModelParams(alpha, beta, p, q, s)


def _phase_cell(cfg, cell):
    alpha, beta, p = cell
    par = _params(alpha, beta, p)
    cl = classical_condition(par)
    lp = lp_condition(par)
    split = split_conditions(par)
    return {
        "alpha": alpha, "beta": beta, "p": p,
        "classical": cl.holds, "classical_margin": cl.margin,
        "lp": lp.holds, "lp_margin": lp.margin,
        "parabolicity": split.parabolicity, "integrability": split.integrability,
        "blow_up_time": blow_up_time(par, _delta(cfg)), "status": "ok",
    }


def _blowup_cell(cfg, cell):
    alpha, beta, p = cell
    par = _params(alpha, beta, p)
    symbols = second_order_symbols(par)
    delta = _delta(cfg)
    formula = blow_up_time(par, delta)
    found = divergence_time(par, symbols, cfg.make_initial(symbols))
    if math.isinf(formula) and math.isinf(found):
        rel = 0.0
    elif math.isinf(formula) or math.isinf(found):
        rel = math.inf
    else:
        rel = abs(found - formula) / formula
    return {
        "alpha": alpha, "beta": beta, "p": p, "delta": delta, "blow_up_time": formula,
        "divergence_time": found, "rel_diff": rel, "status": "ok",
    }


def _moment_cell(cfg, cell, fourth=False):
    alpha, beta, p, q, s, t = cell
    par = _params(alpha, beta, p, q, s)
    symbols = fourth_order_symbols(par) if fourth else second_order_symbols(par)
    initial = cfg.make_initial(symbols)
    spec = NormSpec.bessel(s, q, cfg.numerics["gridPoints"])
    row = {"alpha": alpha, "beta": beta, "p": p, "q": q, "s": s, "t": t}
    row["divergence_time"] = divergence_time(par, symbols, initial, spec)
    try:
        est = expected_norm_p(t, par, symbols, initial, spec)
    except ConvergenceError:
        row["status"] = "nonconverged"
        return row
    row.update(moment=est.value, method=est.method)
    status = "ok" if est.finite else "diverged"
    if fourth:
        if t > 0:
            try:
                row["time_integrated"] = time_integrated_moment(t, par, symbols, initial, spec, cfg.numerics["quadNodes"])
            except ConvergenceError:
                status = "nonconverged"
        row["status"] = status
        return row
    row.update(norm=est.norm, error_indicator=est.error_indicator)
    paths = cfg.numerics["paths"]
    if paths and est.finite and t > 0:
        mc = monte_carlo_moment(paths, t, par, symbols, initial, spec, cfg.numerics["seed"])
        row.update(mc_estimate=mc.estimate, mc_ci95=mc.ci95, mc_excess_kurtosis=mc.excess_kurtosis)
        if mc.heavy_tail:
            status = "heavy-tail"
    row["status"] = status
    return row


def _multiplier_cell(cfg, cell):
    alpha, beta, p, q, t = cell
    par = _params(alpha, beta, p, q)
    margin = lp_condition(par).margin
    eps = cfg.numerics["eps"]
    if eps is None:
        eps = min(margin / 4, 0.25)
    w = math.sqrt(t)  # one standard deviation of W(t)
    row = {"alpha": alpha, "beta": beta, "p": p, "q": q, "t": t, "w": w, "eps": eps}
    if t <= 0 or margin <= 2 * eps:
        # no admissible eps: the p-th moment is not controlled by the multipliers
        row["status"] = "diverged"
        return row
    mults = theorem51_multipliers(t, w, par, eps)
    rep = marcinkiewicz_constant(mults.m3)
    zeta = marcinkiewicz_constant(zeta_symbol(t, eps, alpha, beta))
    row.update(
        shift=mults.shift, floor_shift=mults.floor_shift, K_m3=rep.K, sup_m3=rep.sup_bound,
        variation_m3=rep.dyadic_variation, zeta_max_level=max(zeta.levels),
        zeta_bound=math.sqrt(1 + 64 * beta**2 * alpha**2 / eps**2),
    )
    if cfg.numerics["paths"]:
        row["mq_norm_m3"] = empirical_mq_norm(mults.m3, q, cfg.numerics["paths"], cfg.numerics["N"], cfg.numerics["seed"])
    row["status"] = "ok" if rep.saturated else "nonconverged"
    return row


def _scheme_cell(cfg, cell):
    alpha, beta, p = cell
    par = _params(alpha, beta, p)
    symbols = second_order_symbols(par)
    initial = cfg.make_initial(symbols)
    num = cfg.numerics
    T = max(cfg.times)
    levels = num["levels"]
    fine = num["steps"] << (levels - 1)
    spec = NormSpec.bessel(0.0, 2.0)
    exact_err = np.zeros(levels)
    em_err = np.zeros(levels)
    resid = np.zeros(levels)
    unstable = np.zeros(levels, dtype=bool)
    chunk = 8
    for start in range(0, num["paths"], chunk):
        count = min(chunk, num["paths"] - start)
        dW = brownian_increments(count, fine, T / fine, num["seed"], first_path=start)
        for lev in range(levels):
            factor = 1 << (levels - 1 - lev)
            steps = fine // factor
            dt = T / steps
            inc = dW.reshape(count, steps, factor).sum(axis=2)
            exact = simulate_modes(inc, dt, SchemeKind.EXACT_EXPONENTIAL, symbols, initial)
            for i in range(count):
                w = float(inc[i].sum())
                closed = conditional_field(ConditionedState(T, w, par, symbols, initial)).coeffs
                scale = max(float(np.max(np.abs(closed))), np.finfo(float).tiny)
                exact_err[lev] = max(exact_err[lev], float(np.max(np.abs(exact[i, -1] - closed))) / scale)
                path = BrownianPath(np.linspace(0.0, T, steps + 1), inc[i])
                sol_norm = float(np.max(_norms_over_time(exact[i], spec)))
                r = strong_solution_residual(path, PathSolution(path.time_grid, exact[i]), par, symbols, spec)
                resid[lev] += r / sol_norm if sol_norm > 0 else 0.0
            try:
                em = simulate_modes(inc, dt, SchemeKind.EULER_MARUYAMA, symbols, initial)
            except StabilityError:
                unstable[lev] = True
                continue
            em_err[lev] += float(np.sum(_norms_over_time(em[:, -1] - exact[:, -1], spec)))
    rows = []
    for lev in range(levels):
        steps = fine >> (levels - 1 - lev)
        row = {
            "alpha": alpha, "beta": beta, "p": p, "T": T, "steps": steps, "dt": T / steps,
            "exact_error": exact_err[lev], "residual": resid[lev] / num["paths"],
        }
        if unstable[lev]:
            row["status"] = "nonconverged"
        else:
            row["em_error"] = em_err[lev] / num["paths"]
            if lev > 0 and not unstable[lev - 1] and row["em_error"] > 0:
                row["em_order"] = math.log2(em_err[lev - 1] / em_err[lev])
            row["status"] = "ok"
        rows.append(row)
    return rows


def _cells(cfg: ExperimentConfig):
    exp = cfg.experiment
    if exp in ("PhaseDiagram", "BlowUpCurve", "SchemeConvergence"):
        if exp == "SchemeConvergence" and not cfg.numerics["paths"]:
            raise ConfigError("SchemeConvergence needs numerics/paths > 0")
        return _grid(cfg, ("alpha", "beta", "p"))
    if exp in ("MomentVsTime", "FourthOrder"):
        return [c + (t,) for c in _grid(cfg, ("alpha", "beta", "p", "q", "s")) for t in cfg.times]
    if exp == "MultiplierReport":
        return [c + (t,) for c in _grid(cfg, ("alpha", "beta", "p", "q")) for t in cfg.times]
    raise ConfigError(f"unknown experiment {exp!r}")


def _compute(cfg: ExperimentConfig, cell):
    exp = cfg.experiment
    if exp == "PhaseDiagram":
        return [_phase_cell(cfg, cell)]
    if exp == "BlowUpCurve":
        return [_blowup_cell(cfg, cell)]
    if exp == "MomentVsTime":
        return [_moment_cell(cfg, cell)]
    if exp == "FourthOrder":
        return [_moment_cell(cfg, cell, fourth=True)]
    if exp == "MultiplierReport":
        return [_multiplier_cell(cfg, cell)]
    return _scheme_cell(cfg, cell)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Compute every cell; row order follows the cell order, not completion order."""
    cells = _cells(cfg)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _compute(cfg, c), cells))
    else:
        parts = [_compute(cfg, c) for c in cells]
    rows = [r for part in parts for r in part]
    return ExperimentResult(cfg.experiment, COLUMNS[cfg.experiment], rows)
