"""Problem data model and objective evaluation.

A separation problem observes an aggregate signal ``ybar`` of length ``T``
and asks for ``k`` source signals ``y_i`` with ``sum_i y_i = ybar`` (always
enforced) that minimize

    sum_i  loss_weight_i * ||A_i (y_i - X_i theta_i)||
         + reg_weight_i  * ||B_i y_i||
         + theta_ridge_i * ||theta_i||_2^2

where each norm is either the l1 norm or the squared l2 norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, EmptyProblem, InfeasibleProblem, NonFinite
from .linops import Identity, LinearOperator, parse_operator

__all__ = [
    "Norm",
    "AggregateSignal",
    "FeatureBlock",
    "SourceModelSpec",
    "SeparationProblem",
    "SeparationResult",
    "build_problem",
    "objective_value",
    "norm_value",
]


class Norm(str, Enum):
    L1 = "l1"
    SQ_L2 = "sq_l2"
    NONE = "none"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if value is None:
            return cls.NONE
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"l2": cls.SQ_L2, "squared_l2": cls.SQ_L2, "sql2": cls.SQ_L2}
        if key in aliases:
            return aliases[key]
        return cls(key)


def norm_value(norm: Norm, x: np.ndarray) -> float:
    if norm is Norm.L1:
        return float(np.abs(x).sum())
    if norm is Norm.SQ_L2:
        return float(x @ x)
    return 0.0


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AggregateSignal:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise DimensionMismatch(f"aggregate must be a vector, got shape {v.shape}")
        if len(v) < 2:
            raise DimensionMismatch("aggregate needs at least 2 time steps")
        if not np.all(np.isfinite(v)):
            raise NonFinite("aggregate contains NaN or Inf")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def T(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class FeatureBlock:
    """Context features of one source; ``matrix`` may have zero columns."""

    name: str
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        if m.ndim != 2:
            raise DimensionMismatch(f"features of {self.name!r} must be a matrix")
        if not np.all(np.isfinite(m)):
            raise NonFinite(f"features of {self.name!r} contain NaN or Inf")
        object.__setattr__(self, "matrix", _readonly(m))

    @classmethod
    def empty(cls, name: str, T: int) -> "FeatureBlock":
        return cls(name, np.zeros((T, 0)))

    @property
    def n(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SourceModelSpec:
    """Declarative loss / regularizer description for one source."""

    loss_norm: Norm = Norm.SQ_L2
    loss_operator: LinearOperator = field(default_factory=Identity)
    loss_weight: float = 1.0
    reg_norm: Norm = Norm.NONE
    reg_operator: LinearOperator = field(default_factory=Identity)
    reg_weight: float = 1.0
    theta_ridge: float = 0.0
    nonneg: bool = False

    def __post_init__(self):
        object.__setattr__(self, "loss_norm", Norm.parse(self.loss_norm))
        object.__setattr__(self, "reg_norm", Norm.parse(self.reg_norm))
        object.__setattr__(self, "loss_operator", parse_operator(self.loss_operator))
        object.__setattr__(self, "reg_operator", parse_operator(self.reg_operator))
        if self.loss_norm is Norm.NONE:
            raise ValueError("loss norm must be l1 or sq_l2")
        for name in ("loss_weight", "reg_weight", "theta_ridge"):
            w = float(getattr(self, name))
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {w}")
            object.__setattr__(self, name, w)
        object.__setattr__(self, "nonneg", bool(self.nonneg))

    @property
    def has_reg(self) -> bool:
        return self.reg_norm is not Norm.NONE and self.reg_weight > 0

    def check(self, T: int) -> None:
        for op in (self.loss_operator, self.reg_operator):
            op.check(T)
            if op.out_dim(T) < 1:
                raise DimensionMismatch(f"operator {op.spec()} has empty output for T={T}")


@dataclass(frozen=True, eq=False)
class SeparationProblem:
    aggregate: AggregateSignal
    blocks: tuple
    specs: tuple

    @property
    def T(self) -> int:
        return self.aggregate.T

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def names(self) -> list:
        return [b.name for b in self.blocks]

    @property
    def sizes(self) -> list:
        return [b.n for b in self.blocks]

    @property
    def sources(self):
        return list(zip(self.blocks, self.specs))


@dataclass(frozen=True, eq=False)
class SeparationResult:
    Y_hat: np.ndarray
    theta_hat: list
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    history: np.ndarray = field(default=None, repr=False)
    names: list = field(default=None)

    def fitted(self, problem: SeparationProblem) -> np.ndarray:
        """The per-source feature fits ``X_i theta_i`` as a T x k matrix."""
        cols = [b.matrix @ th if b.n else np.zeros(problem.T) for b, th in zip(problem.blocks, self.theta_hat)]
        return np.column_stack(cols)


def build_problem(aggregate, sources) -> SeparationProblem:
    """Validate inputs and assemble a :class:`SeparationProblem`.

    Parameters
    ----------
    aggregate : AggregateSignal or array_like
        Observed sum of the sources.
    sources : sequence of (FeatureBlock, SourceModelSpec)
        One entry per source, in output column order.

    Raises
    ------
    EmptyProblem
        No sources were given.
    DimensionMismatch
        A feature block or operator does not fit the aggregate length.
    NonFinite
        NaN or Inf in any input.
    InfeasibleProblem
        Every source is nonnegative but the aggregate has negative entries.
    """
    if not isinstance(aggregate, AggregateSignal):
        aggregate = AggregateSignal(aggregate)
    sources = list(sources)
    if not sources:
        raise EmptyProblem("a separation problem needs at least one source")
    T = aggregate.T
    blocks, specs = [], []
    for block, spec in sources:
        if not isinstance(block, FeatureBlock):
            raise TypeError(f"expected FeatureBlock, got {type(block).__name__}")
        if block.matrix.shape[0] != T:
            raise DimensionMismatch(
                f"features of {block.name!r} have {block.matrix.shape[0]} rows, aggregate has T={T}"
            )
        spec = spec if spec is not None else SourceModelSpec()
        spec.check(T)
        blocks.append(block)
        specs.append(spec)
    names = [b.name for b in blocks]
    if len(set(names)) != len(names):
        raise ValueError(f"source names must be unique, got {names}")
    if all(s.nonneg for s in specs) and np.any(aggregate.values < 0):
        raise InfeasibleProblem("all sources are nonnegative but the aggregate has negative entries")
    return SeparationProblem(aggregate, tuple(blocks), tuple(specs))


def _check_point(problem, Y, theta):
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (problem.T, problem.k):
        raise DimensionMismatch(f"Y must have shape {(problem.T, problem.k)}, got {Y.shape}")
    theta = [np.asarray(t, dtype=float).reshape(-1) for t in theta]
    if len(theta) != problem.k:
        raise DimensionMismatch(f"expected {problem.k} coefficient blocks, got {len(theta)}")
    for b, t in zip(problem.blocks, theta):
        if len(t) != b.n:
            raise DimensionMismatch(f"theta for {b.name!r} must have length {b.n}, got {len(t)}")
    return Y, theta


def objective_value(problem: SeparationProblem, Y, theta) -> float:
    """Evaluate the separation objective at ``(Y, theta)``.

    Constraint violations are not penalized; this is a pure evaluation.
    """
    Y, theta = _check_point(problem, Y, theta)
    total = 0.0
    for i, (block, spec) in enumerate(problem.sources):
        y = Y[:, i]
        r = y - block.matrix @ theta[i] if block.n else y
        total += spec.loss_weight * norm_value(spec.loss_norm, spec.loss_operator.matvec(r))
        if spec.has_reg:
            total += spec.reg_weight * norm_value(spec.reg_norm, spec.reg_operator.matvec(y))
        if spec.theta_ridge:
            total += spec.theta_ridge * float(theta[i] @ theta[i])
    return total
