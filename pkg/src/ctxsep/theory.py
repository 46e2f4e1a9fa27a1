"""Recovery guarantees for the least-squares estimator.

For sources ``y_i = X_i theta*_i + w_i`` with ``w_i ~ N(0, sigma_i^2 I)`` and
``sigma^2 = sum_i sigma_i^2``, the fitted signal ``X_i theta_hat_i`` has

    E ||X_i theta_hat_i - X_i theta*_i||^2 = sigma^2 tr(X_i'X_i (X'X)^{-1}_ii)
                                          <= sigma^2 n_i rho_i

with ``rho_i = lambda_max(X_i'X_i (X'X)^{-1}_ii)``, and for ``delta <= 0.1``
with probability at least ``1 - delta``

    RMSE_i <= sqrt(4 sigma^2 n_i rho_i log(1/delta) / T).

The sharper form replaces ``4 log(1/delta)`` by ``-W_{-1}(-delta^(2/n_i)/e)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .closedform import COND_LIMIT, BlockDesign
from .errors import DeltaOutOfRange, DomainError, SingularDesign

__all__ = [
    "gram_inverse_blocks",
    "rho",
    "expected_sq_error",
    "rmse_bound",
    "tight_rmse_bound",
    "lambert_w_m1",
    "lambert_factor",
    "tail_bound",
    "TheoryReport",
    "theory_report",
]

_INV_E = math.exp(-1.0)


def gram_inverse_blocks(design: BlockDesign) -> list:
    """Diagonal blocks ``(X'X)^{-1}_ii`` of the inverse Gram matrix."""
    X = design.X
    G = X.T @ X
    if design.n == 0:
        return [np.zeros((0, 0)) for _ in design.sizes]
    s = np.linalg.svd(X, compute_uv=False)
    cond = (s[0] / s[-1]) ** 2 if design.n <= design.T and s[-1] > 0 else np.inf
    if not cond < COND_LIMIT:
        _, _, Vt = np.linalg.svd(X)
        raise SingularDesign(f"X'X is singular to working precision (cond={cond:.3g})", Vt[-1], cond)
    Ginv = np.linalg.inv(G)
    Ginv = 0.5 * (Ginv + Ginv.T)
    return [Ginv[sl, sl] for sl in design.slices()]


def _sym_product(design, i, Hii):
    """Symmetric matrix similar to ``X_i'X_i H_ii``, via the Cholesky factor of ``X_i'X_i``."""
    Xi = design.block(i)
    L = np.linalg.cholesky(Xi.T @ Xi)
    S = L.T @ Hii @ L
    return 0.5 * (S + S.T)


def rho(design: BlockDesign, i: int, _blocks=None) -> float:
    """Largest eigenvalue of ``X_i'X_i (X'X)^{-1}_ii``.

    Equals 1 when block ``i`` is orthogonal to every other block and grows
    with cross-block correlation. Zero for a featureless block.
    """
    if design.sizes[i] == 0:
        return 0.0
    blocks = _blocks if _blocks is not None else gram_inverse_blocks(design)
    return float(np.linalg.eigvalsh(_sym_product(design, i, blocks[i]))[-1])


def expected_sq_error(design: BlockDesign, i: int, sigma_sq: float, _blocks=None) -> float:
    """Exact ``E ||X_i theta_hat_i - X_i theta*_i||^2`` for total noise variance ``sigma_sq``."""
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    if design.sizes[i] == 0:
        return 0.0
    blocks = _blocks if _blocks is not None else gram_inverse_blocks(design)
    Xi = design.block(i)
    return float(sigma_sq * np.sum((Xi.T @ Xi) * blocks[i].T))


def _check_delta(delta):
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")


def lambert_factor(delta: float, n: int) -> float:
    """``-W_{-1}(-delta^(2/n) / e)``, the sharp replacement for ``4 log(1/delta)``."""
    _check_delta(delta)
    if n < 1:
        raise ValueError("n must be >= 1")
    return -lambert_w_m1(-(delta ** (2.0 / n)) * _INV_E)


def tight_rmse_bound(design: BlockDesign, i: int, sigma_sq: float, delta: float, T: int | None = None, _rho=None) -> float:
    """RMSE bound at confidence ``1 - delta`` using the Lambert-W form."""
    T = design.T if T is None else T
    n = design.sizes[i]
    if n == 0:
        return 0.0
    r = rho(design, i) if _rho is None else _rho
    return math.sqrt(lambert_factor(delta, n) * n * r * sigma_sq / T)


def rmse_bound(design: BlockDesign, i: int, sigma_sq: float, delta: float, T: int | None = None, _rho=None) -> float:
    """``sqrt(4 sigma^2 n_i rho_i log(1/delta) / T)``.

    The closed form is only valid for ``delta <= 0.1``. Larger values emit
    :class:`~ctxsep.errors.DeltaOutOfRange` and return the Lambert-W bound,
    which holds for every ``delta``.
    """
    _check_delta(delta)
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    T = design.T if T is None else T
    n = design.sizes[i]
    r = rho(design, i) if _rho is None else _rho
    if delta > 0.1:
        warnings.warn(
            f"delta={delta} > 0.1: returning the Lambert-W bound instead", DeltaOutOfRange, stacklevel=2
        )
        return tight_rmse_bound(design, i, sigma_sq, delta, T, _rho=r)
    return math.sqrt(4.0 * sigma_sq * n * r * math.log(1.0 / delta) / T)


def _w_m1_scalar(x: float) -> float:
    if not (-_INV_E - 1e-17 <= x < 0.0):
        raise DomainError(f"W_-1 is real only on [-1/e, 0), got {x}")
    q = 1.0 + math.e * x
    if q <= 0.0:
        return -1.0
    if q < 0.25:
        # series about the branch point in p = -sqrt(2(1 + e x))
        p = -math.sqrt(2.0 * q)
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3 - 43.0 / 540.0 * p**4
        if q < 1e-12:
            return w
    else:
        l1 = math.log(-x)
        l2 = math.log(-l1)
        w = l1 - l2 + l2 / l1
    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-15 * abs(w):
            break
    return w


def lambert_w_m1(x):
    """Lower real branch ``W_{-1}`` of the Lambert W function.

    Returns ``w <= -1`` with ``w exp(w) = x`` for ``x`` in ``[-1/e, 0)``.
    Accepts scalars or arrays.
    """
    if np.ndim(x) == 0:
        return _w_m1_scalar(float(x))
    x = np.asarray(x, dtype=float)
    return np.vectorize(_w_m1_scalar, otypes=[float])(x)


def tail_bound(n: int, lam: float, t: float) -> float:
    """Chernoff bound on ``P(||x||^2 >= t)`` for ``x ~ N(0, Sigma)``.

    ``Sigma`` has rank ``n`` and largest eigenvalue ``lam``. The bound
    ``(t/(n lam))^(n/2) exp(-(t/lam - n)/2)`` exceeds 1 for ``t < n lam``;
    there the result is clamped to 1.
    """
    if n < 1 or not lam > 0:
        raise ValueError("need n >= 1 and lam > 0")
    if t <= n * lam:
        return 1.0
    a = t / (n * lam)
    return float(math.exp(0.5 * n * (math.log(a) - a + 1.0)))


@dataclass(frozen=True)
class TheoryReport:
    sigma_sq: float
    delta: float
    T: int
    sizes: tuple
    rho: tuple
    expected_sq_err: tuple
    rmse_bound: tuple
    tight_bound: tuple
    names: tuple = ()

    def to_dict(self) -> dict:
        names = self.names or tuple(f"source_{i + 1}" for i in range(len(self.sizes)))
        return {
            "sigma_sq": self.sigma_sq,
            "delta": self.delta,
            "T": self.T,
            "sources": [
                {
                    "name": names[i],
                    "n": self.sizes[i],
                    "rho": self.rho[i],
                    "expected_sq_err": self.expected_sq_err[i],
                    "expected_rmse": math.sqrt(self.expected_sq_err[i] / self.T),
                    "rmse_bound": self.rmse_bound[i],
                    "tight_bound": self.tight_bound[i],
                }
                for i in range(len(self.sizes))
            ],
        }


def theory_report(design: BlockDesign, sigma_sq: float, delta: float = 0.1, names=()) -> TheoryReport:
    """All per-source recovery quantities for one design."""
    blocks = gram_inverse_blocks(design)
    rhos, means, bounds, tight = [], [], [], []
    for i in range(design.k):
        r = rho(design, i, blocks)
        rhos.append(r)
        means.append(expected_sq_error(design, i, sigma_sq, blocks))
        if design.sizes[i]:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeltaOutOfRange)
                bounds.append(rmse_bound(design, i, sigma_sq, delta, _rho=r))
            tight.append(tight_rmse_bound(design, i, sigma_sq, delta, _rho=r))
        else:
            bounds.append(0.0)
            tight.append(0.0)
    return TheoryReport(
        sigma_sq=float(sigma_sq),
        delta=float(delta),
        T=design.T,
        sizes=design.sizes,
        rho=tuple(rhos),
        expected_sq_err=tuple(means),
        rmse_bound=tuple(bounds),
        tight_bound=tuple(tight),
        names=tuple(names),
    )
