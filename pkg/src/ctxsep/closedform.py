"""Least-squares path for the squared-l2 model.

With squared-l2 losses and no regularizers the joint problem reduces to an
ordinary least-squares fit of the aggregate on the concatenated features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, SingularDesign

__all__ = [
    "BlockDesign",
    "COND_LIMIT",
    "least_squares_theta",
    "reconstruct_sources",
    "ls_sources",
    "rmse",
]

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class BlockDesign:
    """Concatenated features ``X = [X_1 ... X_k]`` with block sizes."""

    X: np.ndarray
    sizes: tuple

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatch("X must be a matrix")
        sizes = tuple(int(n) for n in self.sizes)
        if any(n < 0 for n in sizes) or sum(sizes) != X.shape[1]:
            raise DimensionMismatch(f"block sizes {sizes} do not partition {X.shape[1]} columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_blocks(cls, blocks) -> "BlockDesign":
        blocks = [np.asarray(b, dtype=float) for b in blocks]
        blocks = [b[:, None] if b.ndim == 1 else b for b in blocks]
        return cls(np.hstack(blocks), tuple(b.shape[1] for b in blocks))

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def slices(self):
        edges = np.concatenate(([0], np.cumsum(self.sizes))).astype(int)
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]

    def block(self, i: int) -> np.ndarray:
        return self.X[:, self.slices()[i]]

    def split(self, theta) -> list:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if len(theta) != self.n:
            raise DimensionMismatch(f"theta has length {len(theta)}, design has {self.n} columns")
        return [theta[s].copy() for s in self.slices()]


def least_squares_theta(design: BlockDesign, aggregate, pinv: bool = False) -> list:
    """Least-squares coefficients, split into the design's blocks.

    Solves ``min ||ybar - X theta||`` through a QR factorization of ``X``.

    Parameters
    ----------
    design : BlockDesign
    aggregate : AggregateSignal or array_like
    pinv : bool
        Use the minimum-norm pseudo-inverse solution instead of failing on a
        rank-deficient design.

    Raises
    ------
    SingularDesign
        If ``cond(X'X) >= 1e12`` and ``pinv`` is False. The exception carries
        the right singular vector of the smallest singular value.
    """
    y = np.asarray(getattr(aggregate, "values", aggregate), dtype=float)
    X = design.X
    if y.shape != (design.T,):
        raise DimensionMismatch(f"aggregate has shape {y.shape}, design has T={design.T}")
    if design.n == 0:
        return design.split(np.zeros(0))
    if pinv:
        theta, *_ = np.linalg.lstsq(X, y, rcond=None)
        return design.split(theta)
    Q, R = np.linalg.qr(X, mode="reduced")
    cond = np.inf
    if design.n <= design.T:
        s = np.linalg.svd(R, compute_uv=False)
        if s[-1] > 0:
            cond = (s[0] / s[-1]) ** 2
    if not cond < COND_LIMIT:
        _, _, Vt = np.linalg.svd(X, full_matrices=True)
        raise SingularDesign(
            f"design is singular to working precision (cond={cond:.3g}); "
            "features are collinear, possibly across blocks",
            direction=Vt[-1],
            condition=cond,
        )
    theta = solve_triangular(R, Q.T @ y)
    return design.split(theta)


def reconstruct_sources(design: BlockDesign, theta) -> np.ndarray:
    """T x k matrix whose column ``i`` is ``X_i theta_i``."""
    if len(theta) != design.k:
        raise DimensionMismatch(f"expected {design.k} coefficient blocks, got {len(theta)}")
    cols = []
    for i, (s, th) in enumerate(zip(design.slices(), theta)):
        th = np.asarray(th, dtype=float).reshape(-1)
        if len(th) != design.sizes[i]:
            raise DimensionMismatch(f"block {i} expects {design.sizes[i]} coefficients, got {len(th)}")
        cols.append(design.X[:, s] @ th)
    return np.column_stack(cols)


def ls_sources(design: BlockDesign, aggregate, weights=None) -> np.ndarray:
    """Source estimates of the equality-constrained squared-l2 problem.

    The fits ``X_i theta_i`` come from least squares; the leftover residual
    ``ybar - X theta`` is shared among sources in proportion to ``1/w_i``,
    which is the minimizer of ``sum_i w_i ||y_i - X_i theta_i||^2`` for
    fixed ``theta``.
    """
    y = np.asarray(getattr(aggregate, "values", aggregate), dtype=float)
    theta = least_squares_theta(design, y)
    F = reconstruct_sources(design, theta)
    w = np.ones(design.k) if weights is None else np.asarray(weights, dtype=float)
    share = (1.0 / w) / np.sum(1.0 / w)
    return F + np.outer(y - F.sum(axis=1), share)


def rmse(a, b) -> float:
    """Root mean squared difference of two equal-length vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))
