"""ADMM solver for separation problems.

The problem is rewritten over the stacked variable
``v = (y_1, ..., y_k, theta_1, ..., theta_k)`` as

    minimize   1/2 v'Pv + sum_j f_j(z_j)
    subject to z_j = M_j v,   C v = ybar

where ``P`` collects every squared-l2 term, each ``f_j`` is a weighted l1
norm or the indicator of the nonnegative orthant, and ``C v = sum_i y_i``.
The v-update solves the equality-constrained quadratic exactly through one
sparse KKT factorization, so every iterate meets the sum constraint to
machine precision. A small proximal term ``sigma/2 ||v - v_prev||^2`` keeps
the KKT matrix nonsingular when some coordinates appear in no term.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Norm, SeparationProblem, SeparationResult, objective_value
from .errors import InfeasibleProblem, NumericalBreakdown

__all__ = [
    "SolverConfig",
    "CanonicalTerm",
    "CanonicalForm",
    "canonicalize",
    "solve",
    "separate",
    "prox_l1",
    "project_nonneg",
    "project_sum_nonneg",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    eps_abs: float = 1e-5
    eps_rel: float = 1e-4
    max_iter: int = 5000
    rho_init: float = 1.0
    rho_adapt: bool = True
    adapt_factor: float = 2.0
    adapt_threshold: float = 10.0
    adapt_until: int = 100
    sigma: float = 1e-6
    alpha: float = 1.6
    polish: bool = True

    def __post_init__(self):
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rho_init > 0:
            raise ValueError("rho_init must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("relaxation alpha must lie in (0, 2)")

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        names = set(cls.__dataclass_fields__)
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def prox_l1(v, t: float) -> np.ndarray:
    """Soft thresholding, the prox of ``t * ||.||_1``."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def project_nonneg(v) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def project_sum_nonneg(Y, ybar, nonneg) -> np.ndarray:
    """Euclidean projection of each row of ``Y`` onto
    ``{y : sum(y) = ybar_t, y_i >= 0 for nonneg i}``.

    The projection is ``y_i = Y_i - tau`` on free columns and
    ``max(Y_i - tau, 0)`` on nonnegative ones, with ``tau`` chosen per row
    so the row sums to ``ybar_t``.
    """
    Y = np.asarray(Y, dtype=float)
    ybar = np.asarray(ybar, dtype=float)
    nonneg = np.asarray(nonneg, dtype=bool)
    T, k = Y.shape
    if not nonneg.any():
        return Y - ((Y.sum(axis=1) - ybar) / k)[:, None]
    if nonneg.all() and np.any(ybar < 0):
        raise InfeasibleProblem("negative aggregate with all sources nonnegative")

    def excess(tau):
        Z = Y - tau[:, None]
        Z[:, nonneg] = np.maximum(Z[:, nonneg], 0.0)
        return Z.sum(axis=1) - ybar

    # bracket: excess is nonincreasing in tau
    lo = np.min(Y, axis=1) - np.abs(ybar) - 1.0
    hi = np.max(Y, axis=1) + np.abs(ybar) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pos = excess(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 1e-15 * (1.0 + np.abs(hi))):
            break
    tau = 0.5 * (lo + hi)
    # exact tau on the identified active set
    active = ~nonneg[None, :] | (Y - tau[:, None] > 0)
    cnt = active.sum(axis=1)
    tau_exact = np.where(cnt > 0, ((Y * active).sum(axis=1) - ybar) / np.maximum(cnt, 1), tau)
    Z = Y - tau_exact[:, None]
    Z[:, nonneg] = np.maximum(Z[:, nonneg], 0.0)
    # fall back to the bisection value where the active set guess was off
    bad = np.abs(Z.sum(axis=1) - ybar) > 1e-12 * (1.0 + np.abs(ybar))
    if np.any(bad):
        Zb = Y[bad] - tau[bad][:, None]
        Zb[:, nonneg] = np.maximum(Zb[:, nonneg], 0.0)
        Z[bad] = Zb
    return Z


@dataclass(frozen=True, eq=False)
class CanonicalTerm:
    kind: str  # "l1" or "nonneg"
    weight: float
    matrix: sp.csr_matrix
    label: str


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    problem: SeparationProblem
    P: sp.csc_matrix
    terms: tuple
    C: sp.csr_matrix
    b: np.ndarray
    y_offsets: tuple
    theta_offsets: tuple
    dim: int = field(default=0)

    @property
    def n_splits(self) -> int:
        return len(self.terms)

    def unstack(self, v):
        p = self.problem
        T = p.T
        Y = np.column_stack([v[o:o + T] for o in self.y_offsets])
        theta = [v[o:o + n].copy() for o, n in zip(self.theta_offsets, p.sizes)]
        return Y, theta


def _embed(parts, rows, N):
    """Place ``{column offset: block}`` side by side in a ``rows x N`` matrix."""
    coo_r, coo_c, coo_v = [], [], []
    for off, block in parts.items():
        B = sp.coo_matrix(block)
        coo_r.append(B.row)
        coo_c.append(B.col + off)
        coo_v.append(B.data)
    if not coo_r:
        return sp.csr_matrix((rows, N))
    return sp.csr_matrix(
        (np.concatenate(coo_v), (np.concatenate(coo_r), np.concatenate(coo_c))), shape=(rows, N)
    )


def canonicalize(problem: SeparationProblem) -> CanonicalForm:
    """Split a problem into a smooth quadratic part and prox-friendly atoms.

    Squared-l2 terms (losses, regularizers and ridge penalties) enter ``P``.
    Every l1 term and every nonnegativity constraint becomes one split
    ``z_j = M_j v``. The sum constraint stays a hard equality.
    """
    T, k = problem.T, problem.k
    y_off = tuple(i * T for i in range(k))
    th_off = []
    pos = k * T
    for n in problem.sizes:
        th_off.append(pos)
        pos += n
    N = pos

    P = sp.csr_matrix((N, N))
    terms = []
    for i, (block, spec) in enumerate(problem.sources):
        name = block.name
        A = spec.loss_operator.matrix(T)
        parts = {y_off[i]: A}
        if block.n:
            parts[th_off[i]] = -(A @ block.matrix)
        M = _embed(parts, A.shape[0], N)
        if spec.loss_weight > 0:
            if spec.loss_norm is Norm.SQ_L2:
                P = P + 2.0 * spec.loss_weight * (M.T @ M)
            else:
                terms.append(CanonicalTerm("l1", spec.loss_weight, M, f"{name}:loss"))
        if spec.has_reg:
            B = spec.reg_operator.matrix(T)
            M = _embed({y_off[i]: B}, B.shape[0], N)
            if spec.reg_norm is Norm.SQ_L2:
                P = P + 2.0 * spec.reg_weight * (M.T @ M)
            else:
                terms.append(CanonicalTerm("l1", spec.reg_weight, M, f"{name}:reg"))
        if spec.theta_ridge and block.n:
            d = np.zeros(N)
            d[th_off[i]:th_off[i] + block.n] = 2.0 * spec.theta_ridge
            P = P + sp.diags(d)
        if spec.nonneg:
            M = _embed({y_off[i]: sp.identity(T)}, T, N)
            terms.append(CanonicalTerm("nonneg", 0.0, M, f"{name}:nonneg"))

    C = _embed({o: sp.identity(T) for o in y_off}, T, N)
    return CanonicalForm(
        problem=problem,
        P=sp.csc_matrix(P),
        terms=tuple(terms),
        C=C,
        b=np.array(problem.aggregate.values),
        y_offsets=y_off,
        theta_offsets=tuple(th_off),
        dim=N,
    )


class _KKT:
    """Factorization of ``[[P + sigma I + rho M'M, C'], [C, 0]]``.

    Rows are ordered time-major, ``(y_1[t], ..., y_k[t], nu[t])`` for each
    ``t`` with all coefficients last. Every operator in the package is
    banded, so this ordering keeps the factor banded apart from the few
    dense coefficient rows, and the multiplier of step ``t`` is eliminated
    after the sources it couples, so no pivoting is needed.
    """

    def __init__(self, canon, MtM, sigma):
        self.canon = canon
        self.MtM = MtM
        self.sigma = sigma
        self.lu = None
        self.K = None
        p = canon.problem
        T, k, N = p.T, p.k, canon.dim
        idx = np.empty((T, k + 1), dtype=int)
        for i, off in enumerate(canon.y_offsets):
            idx[:, i] = off + np.arange(T)
        idx[:, k] = N + np.arange(T)
        self.perm = np.concatenate([idx.ravel(), np.arange(k * T, N)])

    def factor(self, rho):
        c = self.canon
        N = c.dim
        H = c.P + self.sigma * sp.identity(N, format="csc")
        if self.MtM is not None:
            H = H + rho * self.MtM
        K = sp.bmat([[H, c.C.T], [c.C, None]], format="csc")
        Kp = sp.csc_matrix(K[self.perm][:, self.perm])
        try:
            self.lu = spla.splu(
                Kp, permc_spec="NATURAL", diag_pivot_thresh=0.0, options={"SymmetricMode": True}
            )
        except RuntimeError as exc:
            raise NumericalBreakdown(
                f"KKT factorization failed ({exc}); the design may be rank deficient, "
                "consider theta_ridge > 0"
            ) from exc
        self.K = sp.csr_matrix(K)

    def _raw(self, rhs):
        x = np.empty_like(rhs)
        x[self.perm] = self.lu.solve(rhs[self.perm])
        return x

    def solve(self, rhs):
        x = self._raw(rhs)
        N = self.canon.dim
        b = rhs[N:]
        viol = np.max(np.abs(self.canon.C @ x[:N] - b)) if len(b) else 0.0
        if viol > 1e-12 * (1.0 + np.max(np.abs(b))):
            # one step of iterative refinement; the factorization is unpivoted
            x += self._raw(rhs - self.K @ x)
        if not np.all(np.isfinite(x)):
            raise NumericalBreakdown("KKT solve produced non-finite values; consider theta_ridge > 0")
        return x


def solve(canon: CanonicalForm, config: SolverConfig | None = None) -> SeparationResult:
    """Run ADMM on a canonical form.

    Parameters
    ----------
    canon : CanonicalForm
        Output of :func:`canonicalize`.
    config : SolverConfig, optional
        Tolerances, iteration cap and penalty parameter schedule.

    Returns
    -------
    SeparationResult
        If the iteration cap is hit, ``converged`` is False and the iterate
        with the smallest normalized residual is returned.
    """
    config = config or SolverConfig()
    problem = canon.problem
    N = canon.dim
    T = problem.T
    terms = canon.terms
    sizes = [t.matrix.shape[0] for t in terms]
    bounds = np.concatenate(([0], np.cumsum(sizes))).astype(int)
    m = int(bounds[-1])
    if terms:
        M = sp.vstack([t.matrix for t in terms], format="csr")
        MT = sp.csr_matrix(M.T)
        MtM = sp.csc_matrix(MT @ M)
    else:
        M = MT = MtM = None
    P = canon.P
    b = canon.b

    rho = float(config.rho_init)
    sigma = float(config.sigma)
    alpha = float(config.alpha)
    kkt = _KKT(canon, MtM, sigma)
    kkt.factor(rho)

    v = np.zeros(N)
    z = np.zeros(m)
    u = np.zeros(m)
    rhs = np.zeros(N + T)
    rhs[N:] = b

    def prox(w):
        out = np.empty_like(w)
        for j, t in enumerate(terms):
            s = slice(bounds[j], bounds[j + 1])
            if t.kind == "l1":
                out[s] = prox_l1(w[s], t.weight / rho)
            else:
                out[s] = np.maximum(w[s], 0.0)
        return out

    def smooth_objective(v, Mv):
        f = 0.5 * float(v @ (P @ v))
        for j, t in enumerate(terms):
            if t.kind == "l1":
                f += t.weight * float(np.abs(Mv[bounds[j]:bounds[j + 1]]).sum())
        return f

    history = []
    best = (np.inf, None, 0.0, 0.0)
    r_norm = s_norm = s_prev = np.inf
    converged = False
    it = 0
    for it in range(1, int(config.max_iter) + 1):
        rhs[:N] = sigma * v
        if m:
            rhs[:N] += rho * (MT @ (z - u))
        v_new = kkt.solve(rhs)[:N]
        if m:
            Mv = M @ v_new
            Mv_hat = alpha * Mv + (1.0 - alpha) * z
            z_new = prox(Mv_hat + u)
            u += Mv_hat - z_new
            r_norm = float(np.linalg.norm(Mv - z_new))
            s_vec = sigma * (v_new - v) + rho * (MT @ (z_new - z))
            eps_pri = np.sqrt(m) * config.eps_abs + config.eps_rel * max(
                np.linalg.norm(Mv), np.linalg.norm(z_new)
            )
            dual_scale = np.linalg.norm(rho * (MT @ u))
        else:
            Mv = z_new = z
            r_norm = 0.0
            s_vec = sigma * (v_new - v)
            eps_pri = 1.0
            dual_scale = 0.0
        s_norm = float(np.linalg.norm(s_vec))
        eps_dual = np.sqrt(N) * config.eps_abs + config.eps_rel * max(
            dual_scale, np.linalg.norm(P @ v_new)
        )
        v, z = v_new, z_new
        history.append(smooth_objective(v, Mv))

        score = max(r_norm / eps_pri, s_norm / eps_dual)
        if score < best[0]:
            best = (score, v.copy(), r_norm, s_norm)
        if m:
            done = r_norm <= eps_pri and s_norm <= eps_dual
        else:
            # an equality-constrained QP: proximal steps are one back-solve
            # each, so keep going until the step stalls at working precision
            done = s_norm <= eps_dual and (
                s_norm <= 1e-13 * (1.0 + np.linalg.norm(P @ v)) or s_norm >= 0.5 * s_prev
            )
        s_prev = s_norm
        if done:
            converged = True
            break

        if m and config.rho_adapt and it <= config.adapt_until:
            mu, f = config.adapt_threshold, config.adapt_factor
            if r_norm > mu * s_norm:
                rho *= f
                u /= f
                kkt.factor(rho)
            elif s_norm > mu * r_norm:
                rho /= f
                u *= f
                kkt.factor(rho)

    if converged:
        v_out, r_out, s_out = v, r_norm, s_norm
    else:
        _, v_out, r_out, s_out = best
        log.warning("ADMM stopped at max_iter=%d without meeting tolerances", config.max_iter)

    Y, theta = canon.unstack(v_out)
    nonneg = np.array([s.nonneg for s in problem.specs])
    if config.polish and nonneg.any():
        Y = project_sum_nonneg(Y, b, nonneg)
    log.debug("ADMM finished: iterations=%d rho=%.3g r=%.3g s=%.3g", it, rho, r_out, s_out)
    Y.setflags(write=False)
    return SeparationResult(
        Y_hat=Y,
        theta_hat=theta,
        objective=objective_value(problem, Y, theta),
        iterations=it,
        primal_residual=r_out,
        dual_residual=s_out,
        converged=converged,
        history=np.asarray(history),
        names=problem.names,
    )


def separate(problem: SeparationProblem, config: SolverConfig | None = None) -> SeparationResult:
    """Canonicalize and solve in one call."""
    return solve(canonicalize(problem), config)
