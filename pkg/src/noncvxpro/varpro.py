"""Variable-projected objective: inner solves, gradients, Hessian, saddles.

The nonconvex reparametrization beta = v (x)_groups u turns the regularized
least squares problem into a smooth function of the outer variable v alone:

    f(v) = (1/2) h(v*v) + min_u (1/2)||u||^2 + (1/(2 lam)) ||X (v (x) u) - y||^2

The inner minimization is a ridge system in u, or equivalently an m-sized
system in a multiplier alpha; both are linear solves.  This module evaluates
f and its gradient through either route, assembles the exact Hessian for the
group family, and classifies stationary points (every one is either a global
minimum or a strict saddle).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse

from .linalg import DENSE_DIRECT_MAX, NotSpd, Side, cg_solve, cholesky_solve, solve_spd, woodbury_side
from .problems import MultiTaskProblem, Problem
from .regularizers import GroupL2, L1, Lq, h_outer_grad, h_value


class InconsistentSystem(ValueError):
    """The lam = 0 multiplier system has no solution (y not reachable)."""


SUPPORT_CUTOFF = 1e-10  # |v_g| > cutoff * max|v| puts group g in the support J


@dataclass
class VarProState:
    """Cached quantities at one outer point v.

    xi is the correlation vector X^T alpha; its per-group blocks drive both
    the gradient (grad_g = v_g (1 - ||xi_g||^2) for the group family) and
    the Hessian.  u and alpha satisfy their defining systems to solver
    tolerance and are linked by u_g = -v_g xi_g at every v.
    """

    v: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    xi: np.ndarray
    f: float
    grad: np.ndarray


@dataclass
class HessianBlocks:
    """Exact Hessian of f for the group family at lam > 0.

    The support block (groups g with v_g != 0) is
    diag(1 - ||xi_g||^2) + 4 U^T W U; off-support groups contribute the bare
    diagonal 1 - ||xi_g||^2.  W = I - lam * H_J^{-1} where H_J is the
    v-weighted Gram matrix plus lam I on the support coordinates, and U
    stacks the xi_g blocks diagonally.
    """

    k: int
    support: list
    diag: np.ndarray
    W: np.ndarray
    U: np.ndarray
    sigma_hat: float
    xi: np.ndarray

    def assemble(self) -> np.ndarray:
        """Dense symmetric k x k Hessian."""
        H = np.diag(self.diag.copy())
        if self.support:
            J = np.asarray(self.support, dtype=int)
            block = 4.0 * self.U.T @ self.W @ self.U
            H[np.ix_(J, J)] += block
        return 0.5 * (H + H.T)


def _expand(prob: Problem, v: np.ndarray) -> np.ndarray:
    return prob.groups.expand(v)


def _scale_rows(w: np.ndarray, M: np.ndarray) -> np.ndarray:
    """w (x) M with w per-row; M may be a vector or a matrix of columns."""
    return w * M if M.ndim == 1 else w[:, None] * M


def inner_solve_primal(prob: Problem, v: np.ndarray) -> np.ndarray:
    """Solve (diag(vbar) X^T X diag(vbar) + lam I) u = vbar (x) X^T y.

    Requires lam > 0 (the system matrix is otherwise only semidefinite).
    """
    if prob.lam <= 0:
        raise ValueError("primal inner solve needs lam > 0")
    vbar = _expand(prob, v)
    X = prob.X
    rhs = _scale_rows(vbar, np.asarray(X.T @ prob.y, dtype=float))
    n = prob.n
    if n <= DENSE_DIRECT_MAX:
        Xv = X.multiply(vbar) if scipy.sparse.issparse(X) else X * vbar
        G = Xv.T @ Xv
        if scipy.sparse.issparse(G):
            G = G.toarray()
        G = np.asarray(G) + prob.lam * np.eye(n)
        return solve_spd(G, rhs)

    def apply(w):
        return vbar * np.asarray(X.T @ (X @ (vbar * w))) + prob.lam * w

    return solve_spd(apply, rhs)


def _dual_matrix(prob: Problem, vbar2: np.ndarray) -> np.ndarray:
    X = prob.X
    if scipy.sparse.issparse(X):
        K = (X.multiply(vbar2) @ X.T).toarray()
    else:
        K = (X * vbar2) @ X.T
    return np.asarray(K)


def inner_solve_dual(prob: Problem, v: np.ndarray) -> np.ndarray:
    """Solve (X diag(vbar^2) X^T + lam I) alpha = -y.

    At lam = 0 the matrix can be singular; the solve falls back to an
    eigenvalue-cutoff pseudo-solve (or CG from zero for operators), and an
    unreachable right-hand side raises InconsistentSystem.
    """
    vbar = _expand(prob, v)
    vbar2 = vbar * vbar
    y = prob.y
    m = prob.m
    if m <= DENSE_DIRECT_MAX:
        K = _dual_matrix(prob, vbar2) + prob.lam * np.eye(m)
        if prob.lam > 0:
            return solve_spd(K, -y)
        try:
            return cholesky_solve(K, -y)
        except NotSpd:
            pass
        evals, V = np.linalg.eigh(K)
        cut = 1e-13 * max(evals.max(), np.finfo(float).tiny)
        inv = np.where(evals > cut, 1.0 / np.where(evals > cut, evals, 1.0), 0.0)
        coef = _scale_rows(inv, V.T @ (-y))
        alpha = V @ coef
        resid = np.linalg.norm(K @ alpha + y)
        if resid > 1e-7 * (1.0 + np.linalg.norm(y)):
            raise InconsistentSystem(
                "y is not reachable with the current support of v"
            )
        return alpha

    X = prob.X

    def apply(w):
        return np.asarray(X @ (vbar2 * np.asarray(X.T @ w))) + prob.lam * w

    if y.ndim == 1:
        rep = cg_solve(apply, -y)
        if not rep.converged and rep.relative_residual > 1e-7:
            raise InconsistentSystem("dual system did not reach a solution")
        return rep.x
    cols = []
    for j in range(y.shape[1]):
        rep = cg_solve(apply, -y[:, j])
        if not rep.converged and rep.relative_residual > 1e-7:
            raise InconsistentSystem("dual system did not reach a solution")
        cols.append(rep.x)
    return np.stack(cols, axis=1)


def recover_beta(
    prob: Problem,
    v: np.ndarray,
    u: Optional[np.ndarray] = None,
    alpha: Optional[np.ndarray] = None,
) -> np.ndarray:
    """beta = vbar (x) u, or equivalently -vbar^2 (x) X^T alpha."""
    vbar = _expand(prob, v)
    if u is not None:
        return _scale_rows(vbar, u)
    if alpha is not None:
        return _scale_rows(-vbar * vbar, np.asarray(prob.X.T @ alpha, dtype=float))
    raise ValueError("need u or alpha")


def _group_sumsq(groups, M: np.ndarray) -> np.ndarray:
    """Per-group squared norms of rows of M (vector or matrix)."""
    if M.ndim == 1:
        sq = M * M
    else:
        sq = np.sum(M * M, axis=1)
    return np.array([sq[g].sum() for g in groups.groups])


def eval_state(prob: Problem, v: np.ndarray, route: Side | None = None) -> VarProState:
    """Evaluate f, its gradient, and all cached inner quantities at v."""
    v = np.asarray(v, dtype=float)
    groups = prob.groups
    reg = prob.reg
    lam = prob.lam
    if route is None:
        route = woodbury_side(prob.m, prob.n, lam)
    elif not isinstance(route, Side):
        raise ValueError(f"route must be a Side value, got {route!r}")
    vbar = groups.expand(v)
    half_h = 0.5 * h_value(reg, v * v)
    outer = h_outer_grad(reg, v)

    if route is Side.DUAL_M or lam == 0:
        alpha = inner_solve_dual(prob, v)
        xi = np.asarray(prob.X.T @ alpha, dtype=float)
        u = _scale_rows(-vbar, xi)
        s = _group_sumsq(groups, xi)
        fit = float(np.sum(_scale_rows(vbar, xi) ** 2))
        f = half_h - float(np.sum(prob.y * alpha)) - 0.5 * lam * float(np.sum(alpha * alpha)) - 0.5 * fit
        grad = outer - v * s
    else:
        u = inner_solve_primal(prob, v)
        beta = _scale_rows(vbar, u)
        r = np.asarray(prob.X @ beta) - prob.y
        alpha = r / lam
        xi = np.asarray(prob.X.T @ alpha, dtype=float)
        f = half_h + 0.5 * float(np.sum(u * u)) + float(np.sum(r * r)) / (2.0 * lam)
        if u.ndim == 1:
            inner = u * xi
        else:
            inner = np.sum(u * xi, axis=1)
        corr = np.array([inner[g].sum() for g in groups.groups])
        grad = outer + corr
    return VarProState(v=v, u=u, alpha=alpha, xi=xi, f=float(f), grad=grad)


def f_and_grad(prob: Problem, v: np.ndarray, route: Side | None = None):
    """Value and gradient of the projected objective at v.

    The gradient is exact through either inner route: the dual form
    subtracts the per-group correlation energies, the primal form adds the
    residual correlations of the inner minimizer; both agree for lam > 0.
    """
    st = eval_state(prob, v, route)
    return st.f, st.grad


def f_and_grad_lq(prob: Problem, v: np.ndarray, q: float | None = None):
    """Projected objective for the lq family (q in (2/3, 2)), dual route.

    With q = 1 this reduces exactly to f_and_grad on the same inputs.  At
    lam = 0 it is the smooth basis-pursuit objective whose stationary
    points satisfy the lq optimality conditions.
    """
    if q is not None and not isinstance(prob.reg, Lq):
        prob = Problem(prob.X, prob.y, prob.lam, Lq(q))
    if not isinstance(prob.reg, Lq):
        raise ValueError("problem does not carry an lq regularizer")
    return f_and_grad(prob, v, Side.DUAL_M)


def f_and_grad_matrix(mt: MultiTaskProblem, V: np.ndarray, lam: float | None = None):
    """Trace-norm projected objective over the square factor V.

    One ridge system per task gives the inner coefficients u_t; the
    gradient is V plus the weighted sum of residual-correlation outer
    products.
    """
    V = np.asarray(V, dtype=float)
    lam = mt.lam if lam is None else lam
    if lam <= 0:
        raise ValueError("matrix route needs lam > 0")
    n = mt.n
    f = 0.5 * float(np.sum(V * V))
    grad = V.copy()
    for X, y in zip(mt.Xs, mt.ys):
        A = X @ V
        G = lam * np.eye(n) + A.T @ A
        u = solve_spd(G, A.T @ y)
        r = A @ u - y
        f += 0.5 * float(u @ u) + float(r @ r) / (2.0 * lam)
        grad += np.outer(X.T @ r, u) / lam
    return f, grad


def recover_b(mt: MultiTaskProblem, V: np.ndarray, lam: float | None = None) -> np.ndarray:
    """Coefficient matrix B = V U with per-task inner solutions as columns."""
    V = np.asarray(V, dtype=float)
    lam = mt.lam if lam is None else lam
    n = mt.n
    B = np.empty((n, mt.T))
    for t, (X, y) in enumerate(zip(mt.Xs, mt.ys)):
        A = X @ V
        G = lam * np.eye(n) + A.T @ A
        B[:, t] = V @ solve_spd(G, A.T @ y)
    return B


def hessian(prob: Problem, v: np.ndarray) -> HessianBlocks:
    """Exact Hessian blocks of f at v for the group family, lam > 0.

    Valid at every v, including points where groups sit exactly at zero
    (the blocks vary continuously as v_g -> 0).
    """
    if prob.lam <= 0:
        raise ValueError("hessian requires lam > 0")
    if not isinstance(prob.reg, (L1, GroupL2)):
        raise ValueError("hessian is defined for the group family only")
    v = np.asarray(v, dtype=float)
    groups = prob.groups
    st = eval_state(prob, v)
    xi = st.xi
    s = _group_sumsq(groups, xi)
    diag = 1.0 - s

    vmax = np.abs(v).max() if v.size else 0.0
    support = [g for g in range(groups.k) if abs(v[g]) > SUPPORT_CUTOFF * vmax] if vmax > 0 else []
    if not support:
        return HessianBlocks(
            k=groups.k, support=[], diag=diag, W=np.zeros((0, 0)),
            U=np.zeros((0, 0)), sigma_hat=0.0, xi=xi,
        )

    idx = np.concatenate([groups.groups[g] for g in support])
    vbar = groups.expand(v)
    X = prob.X
    XJ = X[:, idx].toarray() if scipy.sparse.issparse(X) else np.asarray(X)[:, idx]
    A = XJ * vbar[idx]
    M = A.T @ A
    nJ = idx.size
    HJ = M + prob.lam * np.eye(nJ)
    W = np.eye(nJ) - prob.lam * cholesky_solve(HJ, np.eye(nJ))
    W = 0.5 * (W + W.T)

    U = np.zeros((nJ, len(support)))
    pos = 0
    for col, g in enumerate(support):
        size = groups.groups[g].size
        U[pos : pos + size, col] = xi[groups.groups[g]]
        pos += size
    sigma_hat = float(np.linalg.eigvalsh(M).min())
    return HessianBlocks(
        k=groups.k, support=support, diag=diag, W=W, U=U,
        sigma_hat=sigma_hat, xi=xi,
    )


class StationaryKind(enum.Enum):
    GLOBAL_MIN = "global-min"
    STRICT_SADDLE = "strict-saddle"
    NOT_STATIONARY = "not-stationary"


def classify_stationary(prob: Problem, v: np.ndarray, tol: float = 1e-6) -> StationaryKind:
    """Classify v: every stationary point is a global min or strict saddle.

    NOT_STATIONARY when the gradient norm exceeds tol; otherwise a negative
    Hessian eigenvalue below -tol certifies a strict saddle, and its
    absence a global minimum.
    """
    _, grad = f_and_grad(prob, v)
    if np.linalg.norm(grad) > tol:
        return StationaryKind.NOT_STATIONARY
    H = hessian(prob, v).assemble()
    if np.linalg.eigvalsh(H).min() < -tol:
        return StationaryKind.STRICT_SADDLE
    return StationaryKind.GLOBAL_MIN
