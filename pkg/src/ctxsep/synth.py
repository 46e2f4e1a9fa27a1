"""Seeded synthetic data generators.

Random streams come from numpy's Philox generator, a counter-based 4x64-bit
bit generator. A run seeded with ``seed`` uses ``SeedSequence(seed)``; trial
``j`` of a multi-trial experiment uses ``SeedSequence(seed, spawn_key=(j,))``,
which is exactly what ``SeedSequence(seed).spawn(...)[j]`` would produce.
Trial streams are therefore independent and reproducible individually.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closedform import BlockDesign
from .core import AggregateSignal

__all__ = [
    "make_rng",
    "RecoveryConfig",
    "RecoveryData",
    "gen_recovery",
    "DisaggConfig",
    "DisaggData",
    "gen_disagg",
    "step_noise",
]


def make_rng(seed: int, trial: int | None = None) -> np.random.Generator:
    """Philox stream for ``seed`` (and optionally a trial index)."""
    if trial is None:
        ss = np.random.SeedSequence(int(seed))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class RecoveryConfig:
    T: int = 500
    k: int = 2
    n_i: int = 16
    mu: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.T < 2 or self.k < 1 or self.n_i < 1:
            raise ValueError("need T >= 2, k >= 1, n_i >= 1")
        if not 0 < self.mu <= 1:
            raise ValueError("mu must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class RecoveryData:
    design: BlockDesign
    theta_star: list
    aggregate: AggregateSignal
    Y_star: np.ndarray  # noiseless X_i theta*_i
    Y: np.ndarray  # noisy sources


def gen_recovery(config: RecoveryConfig, trial: int | None = None) -> RecoveryData:
    """Random design for the recovery-rate experiments.

    Rows of each block are i.i.d. ``N(0, I + (1 - mu) 11')``, drawn
    independently per block. Coefficients are uniform on ``[-1, 1]`` and each
    source gets unit-variance Gaussian noise.
    """
    rng = make_rng(config.seed, trial)
    T, k, n = config.T, config.k, config.n_i
    blocks, thetas = [], []
    for _ in range(k):
        # z + sqrt(1 - mu) * g * 1 has covariance I + (1 - mu) 11'
        Z = rng.standard_normal((T, n))
        g = rng.standard_normal((T, 1))
        blocks.append(Z + np.sqrt(1.0 - config.mu) * g)
    for _ in range(k):
        thetas.append(rng.uniform(-1.0, 1.0, n))
    W = rng.standard_normal((T, k))
    Y_star = np.column_stack([X @ th for X, th in zip(blocks, thetas)])
    Y = Y_star + W
    return RecoveryData(
        design=BlockDesign.from_blocks(blocks),
        theta_star=thetas,
        aggregate=AggregateSignal(Y.sum(axis=1)),
        Y_star=Y_star,
        Y=Y,
    )


@dataclass(frozen=True)
class DisaggConfig:
    T: int = 50000
    tau1: int = 200
    tau2: int = 100
    sigma: float = 0.25
    beta: int = 10
    p_zero: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.tau1 < 2 or self.tau2 < 2:
            raise ValueError("periods must be >= 2")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if not 0 <= self.p_zero < 1:
            raise ValueError("p_zero must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class DisaggData:
    X1: np.ndarray
    X2: np.ndarray
    noise: np.ndarray  # T x 2, before clamping
    Y_star: np.ndarray  # T x 2 noisy nonnegative sources
    aggregate: AggregateSignal


def step_noise(rng: np.random.Generator, T: int, beta: int, p_zero: float) -> np.ndarray:
    """Window-``beta`` moving sums of a zero-inflated symmetric uniform.

    Each draw is 0 with probability ``p_zero`` and otherwise uniform on
    ``[-1, 0) U (0, 1]``.
    """
    n = T + beta - 1
    mag = 1.0 - rng.random(n)  # (0, 1]
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    keep = rng.random(n) >= p_zero
    e = np.where(keep, sign * mag, 0.0)
    c = np.concatenate(([0.0], np.cumsum(e)))
    return c[beta:] - c[:-beta]


def gen_disagg(config: DisaggConfig, trial: int | None = None) -> DisaggData:
    """Smooth sinusoid plus square-wave sources with different noise models."""
    rng = make_rng(config.seed, trial)
    t = np.arange(config.T)
    X1 = np.sin(2 * np.pi * t / config.tau1) + 1.0
    X2 = ((t % config.tau2) < config.tau2 / 2).astype(float)
    w1 = config.sigma * rng.standard_normal(config.T)
    w2 = step_noise(rng, config.T, config.beta, config.p_zero)
    noise = np.column_stack([w1, w2])
    Y_star = np.maximum(np.column_stack([X1, X2]) + noise, 0.0)
    return DisaggData(
        X1=X1,
        X2=X2,
        noise=noise,
        Y_star=Y_star,
        aggregate=AggregateSignal(Y_star.sum(axis=1)),
    )
