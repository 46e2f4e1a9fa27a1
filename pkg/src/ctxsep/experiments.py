"""Drivers for the two synthetic experiments.

``recovery_trial`` / ``recovery_curves`` compare least-squares recovery
errors with the theoretical mean and 90% bound. ``disagg_models`` builds
the three increasingly specialized separation models for the sinusoid plus
square-wave task and ``table1`` scores them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .closedform import least_squares_theta, reconstruct_sources
from .core import FeatureBlock, SourceModelSpec, build_problem
from .solver import SolverConfig, separate
from .synth import DisaggConfig, RecoveryConfig, gen_disagg, gen_recovery
from .theory import theory_report

__all__ = [
    "recovery_trial",
    "recovery_curves",
    "recovery_columns",
    "DisaggModelWeights",
    "MODEL_NAMES",
    "disagg_models",
    "table1",
    "table1_summary",
    "TABLE1_COLUMNS",
]


def recovery_trial(config: RecoveryConfig, trial: int, delta: float = 0.1) -> dict:
    """One draw: empirical per-source MSE next to the theoretical mean and bound.

    All quantities are per time step, so ``mse_i = RMSE_i^2``,
    ``theory_mean_i = E||X_i(theta_hat_i - theta*_i)||^2 / T`` and
    ``theory_bound90_i`` is the squared RMSE bound at ``delta``.
    """
    data = gen_recovery(config, trial)
    design = data.design
    theta = least_squares_theta(design, data.aggregate)
    F = reconstruct_sources(design, theta)
    err = ((F - data.Y_star) ** 2).sum(axis=0)
    sigma_sq = float(config.k)  # unit noise on every source
    rep = theory_report(design, sigma_sq, delta)
    row = {"T": config.T, "trial": trial}
    for i in range(config.k):
        row[f"mse_{i + 1}"] = float(err[i] / config.T)
    for i in range(config.k):
        row[f"theory_mean_{i + 1}"] = rep.expected_sq_err[i] / config.T
    for i in range(config.k):
        row[f"theory_bound90_{i + 1}"] = rep.rmse_bound[i] ** 2
    for i in range(config.k):
        row[f"rho_{i + 1}"] = rep.rho[i]
    return row


def recovery_columns(k: int) -> list:
    cols = ["T", "trial"]
    for stem in ("mse", "theory_mean", "theory_bound90", "rho"):
        cols += [f"{stem}_{i + 1}" for i in range(k)]
    return cols


def _recovery_job(args):
    config, trial, delta = args
    return recovery_trial(config, trial, delta)


def recovery_curves(Ts, trials: int, base: RecoveryConfig, delta: float = 0.1, map_fn=map) -> list:
    """Rows of :func:`recovery_trial` for every ``T`` in ``Ts`` and every trial.

    Trial ``j`` at length ``T`` uses the derived stream ``(seed + T, j)`` so
    adding a new length never changes the rows of the others.
    """
    jobs = []
    for T in Ts:
        cfg = replace(base, T=int(T), seed=int(base.seed) + int(T))
        jobs += [(cfg, j, delta) for j in range(trials)]
    return list(map_fn(_recovery_job, jobs))


@dataclass(frozen=True)
class DisaggModelWeights:
    """Regularizer weights for the full model (not given by the source experiment)."""

    smooth_dy1: float = 10.0
    step_dy2: float = 0.3


MODEL_NAMES = ("l2", "l2+l1", "l2+l1+g")


def disagg_models(data, weights: DisaggModelWeights = DisaggModelWeights()) -> dict:
    """The three separation models, keyed by :data:`MODEL_NAMES`.

    * ``l2``: squared-l2 loss for both sources
    * ``l2+l1``: squared-l2 for the smooth source, l1 for the step source
    * ``l2+l1+g``: as above plus ``||D y_1||^2`` and ``||D y_2||_1``

    Every model constrains both estimates to be nonnegative.
    """
    b1 = FeatureBlock("smooth", data.X1)
    b2 = FeatureBlock("step", data.X2)
    agg = data.aggregate
    return {
        "l2": build_problem(
            agg, [(b1, SourceModelSpec("sq_l2", nonneg=True)), (b2, SourceModelSpec("sq_l2", nonneg=True))]
        ),
        "l2+l1": build_problem(
            agg, [(b1, SourceModelSpec("sq_l2", nonneg=True)), (b2, SourceModelSpec("l1", nonneg=True))]
        ),
        "l2+l1+g": build_problem(
            agg,
            [
                (b1, SourceModelSpec("sq_l2", reg_norm="sq_l2", reg_operator="diff",
                                     reg_weight=weights.smooth_dy1, nonneg=True)),
                (b2, SourceModelSpec("l1", reg_norm="l1", reg_operator="diff",
                                     reg_weight=weights.step_dy2, nonneg=True)),
            ],
        ),
    }


def _table1_job(args):
    config, weights, solver_config = args
    data = gen_disagg(config)
    rows = []
    for name, problem in disagg_models(data, weights).items():
        res = separate(problem, solver_config)
        err = res.Y_hat - data.Y_star
        rows.append({
            "model": name,
            "seed": config.seed,
            "rmse": float(np.sqrt(np.mean(err**2))),
            "rmse_y1": float(np.sqrt(np.mean(err[:, 0] ** 2))),
            "rmse_y2": float(np.sqrt(np.mean(err[:, 1] ** 2))),
            "iterations": res.iterations,
            "converged": res.converged,
        })
    return rows


TABLE1_COLUMNS = ["model", "seed", "rmse", "rmse_y1", "rmse_y2", "iterations", "converged"]


def table1(config: DisaggConfig, seeds=None, weights: DisaggModelWeights = DisaggModelWeights(),
           solver_config: SolverConfig | None = None, map_fn=map) -> list:
    """Recovery RMSE of every model on one dataset per seed.

    RMSE is taken over both sources against the noisy nonnegative sources.
    Rows are ordered by seed (as given), then model.
    """
    seeds = [config.seed] if seeds is None else list(seeds)
    jobs = [(replace(config, seed=int(s)), weights, solver_config) for s in seeds]
    out = []
    for rows in map_fn(_table1_job, jobs):
        out += rows
    return out


def table1_summary(rows) -> dict:
    """Median RMSE per model."""
    return {m: float(np.median([r["rmse"] for r in rows if r["model"] == m])) for m in MODEL_NAMES}
