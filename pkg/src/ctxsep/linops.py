"""Structured linear operators and context-feature generators.

The operators act on length-``T`` signals and are used to pre-compose the
loss and regularization norms of a source model:

* :class:`Identity`
* :class:`Diff` -- first differences, ``R^T -> R^(T-1)``
* :class:`SmoothingBand` -- ones on the diagonal and ``n`` superdiagonals,
  truncated at the end of the signal so the matrix stays ``T x T``
* :class:`BlockSum` -- sums over consecutive non-overlapping windows of
  width ``w`` (the Kronecker ``I (x) 1^T`` structure)

A sliding-window sum of width ``w`` is ``SmoothingBand(w - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, IndivisibleWindow, NonFinite, NonHourly

__all__ = [
    "LinearOperator",
    "Identity",
    "Diff",
    "SmoothingBand",
    "BlockSum",
    "apply",
    "apply_transpose",
    "parse_operator",
    "rbf_features",
    "hour_features",
    "COOLING_CENTERS",
    "HEATING_CENTERS",
    "RBF_BANDWIDTH",
]

COOLING_CENTERS = np.arange(72.5, 100.0, 5.0)
HEATING_CENTERS = np.arange(22.5, 50.0, 5.0)
RBF_BANDWIDTH = 5.0


class LinearOperator:
    """Base class; subclasses are immutable and hold only shape parameters."""

    name = "op"

    def out_dim(self, T: int) -> int:
        raise NotImplementedError

    def check(self, T: int) -> None:
        pass

    def matvec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rmatvec(self, v: np.ndarray, T: int) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, T: int) -> sp.csr_matrix:
        """Sparse ``out_dim(T) x T`` matrix of the operator."""
        raise NotImplementedError

    def spec(self) -> str:
        """Name used in problem JSON files."""
        return self.name


@dataclass(frozen=True)
class Identity(LinearOperator):
    name = "identity"

    def out_dim(self, T):
        return T

    def matvec(self, x):
        return np.array(x, dtype=float, copy=True)

    def rmatvec(self, v, T):
        return np.array(v, dtype=float, copy=True)

    def matrix(self, T):
        return sp.identity(T, format="csr")


@dataclass(frozen=True)
class Diff(LinearOperator):
    name = "diff"

    def out_dim(self, T):
        return T - 1

    def check(self, T):
        if T < 2:
            raise DimensionMismatch("Diff needs a signal of length >= 2")

    def matvec(self, x):
        return np.diff(x)

    def rmatvec(self, v, T):
        out = np.zeros(T)
        out[:-1] -= v
        out[1:] += v
        return out

    def matrix(self, T):
        return sp.diags([-np.ones(T - 1), np.ones(T - 1)], [0, 1], shape=(T - 1, T), format="csr")


@dataclass(frozen=True)
class SmoothingBand(LinearOperator):
    n: int = 1
    name = "smooth"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"band width must be a nonnegative integer, got {self.n}")

    def out_dim(self, T):
        return T

    def matvec(self, x):
        # shifted sums rather than cumsum differences: exact for n = 0 and
        # free of the rounding drift a long running sum accumulates
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for j in range(1, min(self.n, len(x) - 1) + 1):
            out[:-j] += x[j:]
        return out

    def rmatvec(self, v, T):
        # column t of S collects rows max(0, t-n)..t
        v = np.asarray(v, dtype=float)
        out = v.copy()
        for j in range(1, min(self.n, T - 1) + 1):
            out[j:] += v[:-j]
        return out

    def matrix(self, T):
        offsets = list(range(self.n + 1))
        diags = [np.ones(T - k) for k in offsets if k < T]
        return sp.diags(diags, offsets[: len(diags)], shape=(T, T), format="csr")

    def spec(self):
        return f"smooth:{self.n}"


@dataclass(frozen=True)
class BlockSum(LinearOperator):
    w: int = 1
    name = "blocksum"

    def __post_init__(self):
        if int(self.w) != self.w or self.w < 1:
            raise ValueError(f"window must be a positive integer, got {self.w}")

    def check(self, T):
        if T % self.w:
            raise IndivisibleWindow(f"window {self.w} does not divide T={T}")

    def out_dim(self, T):
        return T // self.w

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        self.check(len(x))
        return x.reshape(-1, self.w).sum(axis=1)

    def rmatvec(self, v, T):
        self.check(T)
        return np.repeat(np.asarray(v, dtype=float), self.w)

    def matrix(self, T):
        self.check(T)
        rows = np.repeat(np.arange(T // self.w), self.w)
        return sp.csr_matrix((np.ones(T), (rows, np.arange(T))), shape=(T // self.w, T))

    def spec(self):
        return f"blocksum:{self.w}"


def _as_vector(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {x.shape}")
    return x


def apply(op: LinearOperator, x) -> np.ndarray:
    """Apply ``op`` to the length-``T`` vector ``x``."""
    x = _as_vector(x)
    op.check(len(x))
    return op.matvec(x)


def apply_transpose(op: LinearOperator, v, T: int) -> np.ndarray:
    """Apply the adjoint of ``op`` (acting on length-``T`` inputs) to ``v``."""
    v = _as_vector(v, "v")
    op.check(T)
    if len(v) != op.out_dim(T):
        raise DimensionMismatch(
            f"{op.spec()} on T={T} has output dimension {op.out_dim(T)}, got {len(v)}"
        )
    return op.rmatvec(v, T)


def parse_operator(text) -> LinearOperator:
    """Parse ``"identity"``, ``"diff"``, ``"smooth:n"`` or ``"blocksum:w"``."""
    if isinstance(text, LinearOperator):
        return text
    if text is None:
        return Identity()
    name, _, arg = str(text).strip().lower().partition(":")
    if name == "identity" and not arg:
        return Identity()
    if name == "diff" and not arg:
        return Diff()
    try:
        if name == "smooth":
            return SmoothingBand(int(arg))
        if name == "blocksum":
            return BlockSum(int(arg))
    except ValueError:
        pass
    raise ValueError(f"unknown operator {text!r}")


def rbf_features(temps, side: str, threshold: float, centers=None, bandwidth: float = RBF_BANDWIDTH):
    """Gaussian radial basis features of temperature, gated by a threshold.

    Parameters
    ----------
    temps : array_like, shape (T,)
        Temperatures in degrees Fahrenheit.
    side : {"above", "below"}
        Features are active only where ``temps > threshold`` (``"above"``)
        or ``temps < threshold`` (``"below"``); inactive rows are zero.
    threshold : float
        Gating temperature.
    centers : array_like, optional
        RBF centers. Defaults to the cooling or heating grid for ``side``.
    bandwidth : float
        Standard deviation of each bump.

    Returns
    -------
    ndarray, shape (T, len(centers))
    """
    temps = _as_vector(temps, "temps")
    if not np.all(np.isfinite(temps)):
        raise NonFinite("temperatures contain NaN or Inf")
    if side not in ("above", "below"):
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")
    if centers is None:
        centers = COOLING_CENTERS if side == "above" else HEATING_CENTERS
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    if centers.size == 0:
        raise ValueError("centers must be nonempty")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    active = temps > threshold if side == "above" else temps < threshold
    F = np.exp(-((temps[:, None] - centers[None, :]) ** 2) / (2.0 * bandwidth**2))
    F[~active] = 0.0
    return F


def hour_features(timestamps, strict: bool = True) -> np.ndarray:
    """One-hot hour-of-day indicators, shape (T, 24).

    With ``strict`` the timestamps must form a gap-free hourly grid. With
    ``strict=False`` they need only be increasing whole hours, which is what
    the energy pipeline passes after dropping reported gaps.
    """
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    if ts.ndim != 1:
        raise DimensionMismatch("timestamps must be one-dimensional")
    secs = ts.astype(np.int64)
    if np.any(secs % 3600):
        raise NonHourly("timestamps must fall on whole hours")
    hours = secs // 3600
    step = np.diff(hours)
    if strict and np.any(step != 1):
        raise NonHourly("timestamps are not a contiguous hourly grid")
    if np.any(step <= 0):
        raise NonHourly("timestamps must be strictly increasing")
    F = np.zeros((len(ts), 24))
    F[np.arange(len(ts)), hours % 24] = 1.0
    return F
