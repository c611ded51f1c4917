"""Reference solvers: proximal, coordinate, IRLS, alternating, and splitting.

These provide the correctness oracles and the competitors raced by the
benchmark harness.  Every solver returns a SolverTrace of per-iteration
(wall time, primal objective) samples plus its final coefficients.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .lbfgs import LbfgsConfig, minimize_box
from .linalg import Side, cg_solve, cholesky_solve, operator_norm_estimate, solve_spd, woodbury_side
from .problems import BeckmannProblem, MultiTaskProblem, Problem, multitask_objective, primal_objective
from .regularizers import GroupL2, L1
from .varpro import inner_solve_primal


class StepConditionViolated(ValueError):
    """Primal-dual step sizes must satisfy tau * sigma * ||X||^2 < 1."""


@dataclass
class SolverTrace:
    """Per-iteration record of one solver run.

    times are seconds since the run started and are nondecreasing; each
    entry pairs with an iteration number and the primal objective of the
    iterate at that point.
    """

    name: str
    iterations: list = field(default_factory=list)
    times: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    beta: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)

    def record(self, it: int, t: float, obj: float):
        self.iterations.append(int(it))
        self.times.append(float(t))
        self.objectives.append(float(obj))


def _spectral_norm(X) -> float:
    if scipy.sparse.issparse(X):
        est = operator_norm_estimate(
            lambda w: np.asarray(X @ w), lambda w: np.asarray(X.T @ w), X.shape[1], iters=300
        )
        return est * 1.01  # power iteration underestimates; pad for safe steps
    return float(np.linalg.norm(np.asarray(X, float), 2))


def _over(t0: float, budget_s) -> bool:
    return budget_s is not None and time.perf_counter() - t0 > budget_s


def ista(prob: Problem, beta0=None, step=None, iters: int = 500, budget_s=None) -> SolverTrace:
    """Proximal gradient: beta <- prox_{step R}(beta - (step/lam) X^T (X beta - y)).

    The default step lam/||X||^2 is the largest that keeps the objective
    monotone.
    """
    if prob.lam <= 0:
        raise ValueError("ista needs lam > 0")
    X, y, lam = prob.X, prob.y, prob.lam
    beta = np.zeros(prob.n) if beta0 is None else np.asarray(beta0, float).copy()
    if step is None:
        step = lam / _spectral_norm(X) ** 2
    tr = SolverTrace("ista", config={"step": step, "iters": iters})
    t0 = time.perf_counter()
    tr.record(0, 0.0, primal_objective(prob, beta))
    for k in range(1, iters + 1):
        if _over(t0, budget_s):
            break
        grad = np.asarray(X.T @ (X @ beta - y)) / lam
        beta = prob.reg.prox(beta - step * grad, step)
        tr.record(k, time.perf_counter() - t0, primal_objective(prob, beta))
    tr.beta = beta
    return tr


def fista_bb_restart(prob: Problem, beta0=None, iters: int = 500, budget_s=None) -> SolverTrace:
    """FISTA with a Barzilai-Borwein spectral step and function-value restart.

    The BB step is clipped to [1e-8, 1e8] times the safe step lam/||X||^2;
    whenever the objective increases the momentum is reset and the sweep is
    redone with the safe step.
    """
    if prob.lam <= 0:
        raise ValueError("fista needs lam > 0")
    X, y, lam = prob.X, prob.y, prob.lam
    safe = lam / _spectral_norm(X) ** 2
    lo, hi = 1e-8 * safe, 1e8 * safe

    def smooth_grad(b):
        return np.asarray(X.T @ (X @ b - y)) / lam

    beta = np.zeros(prob.n) if beta0 is None else np.asarray(beta0, float).copy()
    z = beta.copy()
    prev_beta = beta.copy()
    prev_grad = None
    fcur = primal_objective(prob, beta)
    tr = SolverTrace("fista-bb", config={"safe_step": safe, "iters": iters})
    t0 = time.perf_counter()
    tr.record(0, 0.0, fcur)
    j = 0  # momentum age
    for k in range(1, iters + 1):
        if _over(t0, budget_s):
            break
        gz = smooth_grad(z)
        if prev_grad is not None:
            s = z - prev_z
            yg = gz - prev_grad
            sy = float(s @ yg)
            step = float(s @ s) / sy if sy > 0 else safe
            step = min(max(step, lo), hi)
        else:
            step = safe
        prev_z, prev_grad = z, gz
        cand = prob.reg.prox(z - step * gz, step)
        fc = primal_objective(prob, cand)
        if fc > fcur:
            # restart: plain safe proximal step from the last good point
            j = 0
            gb = smooth_grad(beta)
            cand = prob.reg.prox(beta - safe * gb, safe)
            fc = primal_objective(prob, cand)
            prev_grad = None
        j += 1
        prev_beta, beta, fcur = beta, cand, fc
        z = beta + ((j - 1.0) / (j + 2.0)) * (beta - prev_beta)
        tr.record(k, time.perf_counter() - t0, fcur)
    tr.beta = beta
    return tr


def _block_soft(z: np.ndarray, tau: float) -> np.ndarray:
    nrm = np.linalg.norm(z)
    return np.zeros_like(z) if nrm <= tau else (1.0 - tau / nrm) * z


def coordinate_descent_lasso(prob: Problem, iters: int = 1000, tol: float = 1e-10, budget_s=None) -> SolverTrace:
    """Cyclic block coordinate descent with a duality-gap certificate.

    Singleton groups get the exact coordinate update; larger groups take a
    majorized prox step with the block Lipschitz constant.  Terminates when
    the Lasso duality gap (in problem scale) drops below tol.
    """
    if prob.lam <= 0:
        raise ValueError("coordinate descent needs lam > 0")
    if not isinstance(prob.reg, (L1, GroupL2)):
        raise ValueError("coordinate descent covers the group family only")
    X, y, lam = prob.X, prob.y, prob.lam
    groups = prob.groups
    cols = []
    lips = []
    for g in groups.groups:
        Xg = X[:, g].toarray() if scipy.sparse.issparse(X) else np.asarray(X, float)[:, g]
        cols.append(Xg)
        lips.append(float(np.linalg.norm(Xg, 2) ** 2))
    shape = (prob.n,) if y.ndim == 1 else (prob.n, y.shape[1])
    beta = np.zeros(shape)
    r = y.copy()  # r = y - X beta
    tr = SolverTrace("cd", config={"iters": iters, "tol": tol})
    t0 = time.perf_counter()
    tr.record(0, 0.0, primal_objective(prob, beta))
    gap = np.inf
    for sweep in range(1, iters + 1):
        if _over(t0, budget_s):
            break
        for gid, g in enumerate(groups.groups):
            Lg = lips[gid]
            if Lg == 0.0:
                continue
            Xg = cols[gid]
            z = beta[g] + Xg.T @ r / Lg
            new = _block_soft(z, lam / Lg)
            delta = new - beta[g]
            if np.any(delta):
                r -= Xg @ delta
                beta[g] = new
        obj = primal_objective(prob, beta)
        tr.record(sweep, time.perf_counter() - t0, obj)
        corr = np.asarray(X.T @ r)
        cmax = groups.norms(corr).max()
        theta = r * min(1.0, lam / cmax) if cmax > 0 else r
        dual = 0.5 * float(np.sum(y * y)) - 0.5 * float(np.sum((theta - y) ** 2))
        gap = (lam * prob.reg.r_value(beta) + 0.5 * float(np.sum(r * r)) - dual) / lam
        if gap <= tol * max(1.0, abs(obj)):
            break
    tr.beta = beta
    tr.aux["gap"] = float(gap)
    return tr


def irls_vector(prob: Problem, eps: float, iters: int = 100, eta0=None, budget_s=None) -> SolverTrace:
    """Iteratively reweighted least squares with a fixed barrier eps.

    Alternates the reweighted ridge solve with the closed-form weight
    update eta_g = sqrt(||beta_g||^2 + eps).  The barrier biases the
    solution by O(eps); no decrease schedule is applied.
    """
    if prob.lam <= 0 or eps <= 0:
        raise ValueError("irls needs lam > 0 and eps > 0")
    X, y, lam = prob.X, prob.y, prob.lam
    groups = prob.groups
    eta = np.ones(groups.k) if eta0 is None else np.asarray(eta0, float).copy()
    tr = SolverTrace("irls", config={"eps": eps, "iters": iters})
    t0 = time.perf_counter()
    beta = np.zeros((prob.n,) if y.ndim == 1 else (prob.n, y.shape[1]))
    tr.record(0, 0.0, primal_objective(prob, beta))
    side = woodbury_side(prob.m, prob.n, lam)
    for k in range(1, iters + 1):
        if _over(t0, budget_s):
            break
        ebar = groups.expand(eta)
        if side is Side.DUAL_M:
            if scipy.sparse.issparse(X):
                K = (X.multiply(ebar) @ X.T).toarray() + lam * np.eye(prob.m)
            else:
                K = (X * ebar) @ X.T + lam * np.eye(prob.m)
            alpha = solve_spd(K, y)
            corr = np.asarray(X.T @ alpha)
            beta = ebar * corr if corr.ndim == 1 else ebar[:, None] * corr
        else:
            Xd = X.toarray() if scipy.sparse.issparse(X) else np.asarray(X, float)
            G = Xd.T @ Xd + lam * np.diag(1.0 / ebar)
            beta = solve_spd(G, np.asarray(X.T @ y))
        nrm2 = np.array([float(np.sum(beta[g] ** 2)) for g in groups.groups])
        eta = np.sqrt(nrm2 + eps)
        tr.record(k, time.perf_counter() - t0, primal_objective(prob, beta))
    tr.beta = beta
    tr.aux["eta"] = eta
    return tr


def irls_matrix(mt: MultiTaskProblem, lam: float | None = None, eps: float = 1e-8,
                iters: int = 100, budget_s=None) -> SolverTrace:
    """Trace-norm IRLS: per-task ridge systems, then Z <- (B B^T + eps I)^{1/2}.

    The matrix square root goes through a symmetric eigendecomposition, so
    Z stays symmetric PSD with smallest eigenvalue at least sqrt(eps).
    """
    lam = mt.lam if lam is None else lam
    if lam <= 0 or eps <= 0:
        raise ValueError("irls needs lam > 0 and eps > 0")
    n = mt.n
    Z = np.eye(n)
    B = np.zeros((n, mt.T))
    tr = SolverTrace("irls-matrix", config={"eps": eps, "iters": iters})
    t0 = time.perf_counter()
    tr.record(0, 0.0, multitask_objective(mt, B))
    for k in range(1, iters + 1):
        if _over(t0, budget_s):
            break
        Zinv = cholesky_solve(Z, np.eye(n))
        Zinv = 0.5 * (Zinv + Zinv.T)
        for t, (X, y) in enumerate(zip(mt.Xs, mt.ys)):
            B[:, t] = solve_spd(lam * Zinv + X.T @ X, X.T @ y)
        w, V = np.linalg.eigh(B @ B.T + eps * np.eye(n))
        Z = (V * np.sqrt(np.maximum(w, 0.0))) @ V.T
        Z = 0.5 * (Z + Z.T)
        tr.record(k, time.perf_counter() - t0, multitask_objective(mt, B))
    tr.beta = B
    tr.aux["z_min_eig"] = float(np.linalg.eigvalsh(Z).min())
    return tr


def altmin_noncvx(prob: Problem, iters: int = 200, v0=None, budget_s=None) -> SolverTrace:
    """Exact alternating minimization of the split objective in u and v.

    The u step is the ridge system at fixed v; the v step is a k x k ridge
    system in the per-group mixing weights.  The joint objective is
    monotone nonincreasing (recorded in aux["joint"]); starting at v = 0
    stays at the saddle.
    """
    if prob.lam <= 0:
        raise ValueError("alternating minimization needs lam > 0")
    groups = prob.groups
    k = groups.k
    v = np.ones(k) if v0 is None else np.asarray(v0, float).copy()
    lam, y = prob.lam, prob.y
    X = prob.X.toarray() if scipy.sparse.issparse(prob.X) else np.asarray(prob.X, float)
    tr = SolverTrace("altmin", config={"iters": iters})
    t0 = time.perf_counter()
    u = np.zeros((prob.n,) if y.ndim == 1 else (prob.n, y.shape[1]))
    joint = []
    tr.record(0, 0.0, primal_objective(prob, groups.expand(v) * u if u.ndim == 1 else groups.expand(v)[:, None] * u))
    for it in range(1, iters + 1):
        if _over(t0, budget_s):
            break
        u = inner_solve_primal(prob, v)
        # v step: residual is sum_g v_g (X_g u_g); ridge in v
        M = np.stack([(X[:, g] @ u[g]).ravel() for g in groups.groups], axis=1)
        rhs = M.T @ y.ravel()
        v = solve_spd(lam * np.eye(k) + M.T @ M, rhs)
        vbar = groups.expand(v)
        beta = vbar * u if u.ndim == 1 else vbar[:, None] * u
        resid = X @ beta - y
        joint.append(0.5 * float(v @ v) + 0.5 * float(np.sum(u * u))
                     + float(np.sum(resid * resid)) / (2.0 * lam))
        tr.record(it, time.perf_counter() - t0, primal_objective(prob, beta))
    vbar = groups.expand(v)
    tr.beta = vbar * u if u.ndim == 1 else vbar[:, None] * u
    tr.aux["joint"] = joint
    tr.aux["v"] = v
    tr.aux["u"] = u
    return tr


def quad_var_oracle(prob: Problem):
    """Value, gradient, and coefficients of the convex variational objective.

    g(eta) = (1/2) sum eta + (1/2) <alpha, y> with alpha solving
    (lam I + X diag(etabar) X^T) alpha = y; the gradient is
    1/2 - (1/2) ||X_g^T alpha||^2 per group, and beta = etabar (x) X^T alpha.
    """
    if prob.lam <= 0:
        raise ValueError("quad variational needs lam > 0")
    if not isinstance(prob.reg, (L1, GroupL2)):
        raise ValueError("quad variational covers the group family only")
    X, y, lam = prob.X, prob.y, prob.lam
    groups = prob.groups
    k = groups.k

    def eval_eta(eta):
        ebar = groups.expand(eta)
        if scipy.sparse.issparse(X):
            K = (X.multiply(ebar) @ X.T).toarray() + lam * np.eye(prob.m)
        else:
            K = (X * ebar) @ X.T + lam * np.eye(prob.m)
        alpha = solve_spd(K, y)
        corr = np.asarray(X.T @ alpha)
        s = np.array([float(np.sum(corr[g] ** 2)) for g in groups.groups])
        val = 0.5 * float(eta.sum()) + 0.5 * float(np.sum(alpha * y))
        grad = 0.5 * np.ones(k) - 0.5 * s
        beta = ebar * corr if corr.ndim == 1 else ebar[:, None] * corr
        return val, grad, beta

    return eval_eta


def quad_variational(prob: Problem, eta0=None, config: LbfgsConfig | None = None,
                     budget_s=None) -> SolverTrace:
    """Bound-constrained quasi-Newton on the convex variational objective.

    See quad_var_oracle for the objective; this drives minimize_box over
    eta >= 0 and reports the primal objective of the recovered beta.
    """
    eval_eta = quad_var_oracle(prob)
    k = prob.groups.k
    tr = SolverTrace("quad-var", config={"solver": "box-lbfgs"})
    t0 = time.perf_counter()
    last = {}

    def oracle(eta):
        val, grad, beta = eval_eta(eta)
        last["beta"] = beta
        return val, grad

    def cb(it, eta, fval, grad):
        tr.record(it, time.perf_counter() - t0, primal_objective(prob, last["beta"]))
        return _over(t0, budget_s)

    eta_start = np.ones(k) if eta0 is None else np.asarray(eta0, float).copy()
    res = minimize_box(oracle, eta_start, np.zeros(k), config or LbfgsConfig(max_iters=300), cb)
    _, _, beta = eval_eta(res.x)
    tr.beta = beta
    tr.aux["eta"] = res.x
    tr.aux["result"] = res
    return tr


def split_box_lasso(prob: Problem, config: LbfgsConfig | None = None, budget_s=None) -> SolverTrace:
    """Lasso via the positive split beta = p - q with p, q >= 0.

    The objective sum(p) + sum(q) + (1/(2 lam)) ||X (p - q) - y||^2 is
    smooth in (p, q), so the box-constrained quasi-Newton driver applies
    directly.
    """
    if prob.lam <= 0:
        raise ValueError("split formulation needs lam > 0")
    if not isinstance(prob.reg, L1):
        raise ValueError("split formulation is for the l1 family")
    X, y, lam = prob.X, prob.y, prob.lam
    n = prob.n

    def oracle(z):
        p, q = z[:n], z[n:]
        beta = p - q
        r = np.asarray(X @ beta) - y
        gr = np.asarray(X.T @ r) / lam
        val = float(p.sum() + q.sum()) + float(np.sum(r * r)) / (2.0 * lam)
        return val, np.concatenate([1.0 + gr, 1.0 - gr])

    tr = SolverTrace("lbfgsb-split", config={"solver": "box-lbfgs"})
    t0 = time.perf_counter()

    def cb(it, z, fval, grad):
        tr.record(it, time.perf_counter() - t0, primal_objective(prob, z[:n] - z[n:]))
        return _over(t0, budget_s)

    res = minimize_box(oracle, np.zeros(2 * n), np.zeros(2 * n),
                       config or LbfgsConfig(max_iters=500), cb)
    tr.beta = res.x[:n] - res.x[n:]
    tr.aux["result"] = res
    return tr


def _as_constrained(prob) -> Problem:
    if isinstance(prob, BeckmannProblem):
        return prob.to_problem()
    if prob.lam != 0:
        raise ValueError("this solver handles the constrained (lam = 0) problem")
    return prob


class _AffineProjector:
    """Projection onto {beta : X beta = y}; factor X X^T once, reuse.

    Graph divergence matrices give a singular Laplacian (constant kernel),
    where the Cholesky factorization fails and the solve falls back to CG,
    which stays on the range because the right-hand sides sum to zero.
    """

    def __init__(self, X, y):
        self.X = X
        self.y = y
        K = (X @ X.T).toarray() if scipy.sparse.issparse(X) else X @ X.T
        self.K = np.asarray(K, float)
        try:
            factor = scipy.linalg.cho_factor(self.K, lower=True, check_finite=False)
            d = np.diag(factor[0])
            # a tiny pivot means numerically singular; the huge kernel
            # component such a factor produces is unsafe, go iterative
            self._factor = factor if d.min() ** 2 > 1e-12 * d.max() ** 2 else None
        except scipy.linalg.LinAlgError:
            self._factor = None

    def _solve(self, rhs):
        if self._factor is not None:
            return scipy.linalg.cho_solve(self._factor, rhs, check_finite=False)
        return cg_solve(lambda w: self.K @ w, rhs, tol=1e-13).x

    def __call__(self, beta):
        resid = self.y - np.asarray(self.X @ beta)
        return beta + np.asarray(self.X.T @ self._solve(resid))


def douglas_rachford_bp(prob, mu: float = 1.0, gamma: float = 1.0, iters: int = 500,
                        budget_s=None) -> SolverTrace:
    """Douglas-Rachford splitting for the constrained sparse problem.

    beta_k is the affine projection of z_k onto X beta = y, hence always
    feasible; the reflected group soft-threshold then pulls toward small
    norm.  gamma in (0, 2) averages the reflections (1 recovers the classic
    scheme).
    """
    if not 0 < gamma < 2:
        raise ValueError("gamma must lie in (0, 2)")
    p = _as_constrained(prob)
    proj = _AffineProjector(p.X, p.y)
    z = np.zeros(p.n)
    tr = SolverTrace("dr", config={"mu": mu, "gamma": gamma, "iters": iters})
    t0 = time.perf_counter()
    beta = proj(z)
    tr.record(0, 0.0, p.reg.r_value(beta))
    for k in range(1, iters + 1):
        if _over(t0, budget_s):
            break
        beta = proj(z)
        refl_g = 2.0 * beta - z
        refl_f = 2.0 * p.reg.prox(refl_g, mu) - refl_g
        z = (1.0 - gamma / 2.0) * z + (gamma / 2.0) * refl_f
        tr.record(k, time.perf_counter() - t0, p.reg.r_value(beta))
    tr.beta = proj(z)
    return tr


def chambolle_pock_bp(prob, sigma: float | None = None, tau: float | None = None,
                      theta: float = 1.0, iters: int = 500, budget_s=None) -> SolverTrace:
    """Primal-dual iterations for the constrained sparse problem.

    Steps default to tau * sigma * ||X||^2 = 0.9 with tau = sigma; passing
    both with tau * sigma * ||X||^2 >= 1 is rejected up front.  Objectives
    are reported on the affine projection of the running iterate (the raw
    iterates are infeasible until convergence); the returned beta is the
    projected final iterate.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    p = _as_constrained(prob)
    L = _spectral_norm(p.X)
    L2 = L * L
    if sigma is None and tau is None:
        sigma = tau = np.sqrt(0.9 / L2) if L2 > 0 else 1.0
    elif sigma is None:
        sigma = 0.9 / (tau * L2)
    elif tau is None:
        tau = 0.9 / (sigma * L2)
    if tau * sigma * L2 >= 1.0:
        raise StepConditionViolated(
            f"tau*sigma*||X||^2 = {tau * sigma * L2:.3g} must be < 1"
        )
    proj = _AffineProjector(p.X, p.y)
    X, y = p.X, p.y
    beta = np.zeros(p.n)
    beta_bar = beta.copy()
    w = np.zeros(p.m)
    tr = SolverTrace("cp", config={"sigma": sigma, "tau": tau, "theta": theta})
    t0 = time.perf_counter()
    tr.record(0, 0.0, p.reg.r_value(proj(beta)))
    for k in range(1, iters + 1):
        if _over(t0, budget_s):
            break
        w = w + sigma * np.asarray(X @ beta_bar) - sigma * y
        beta_new = p.reg.prox(beta - tau * np.asarray(X.T @ w), tau)
        beta_bar = beta_new + theta * (beta_new - beta)
        beta = beta_new
        tr.record(k, time.perf_counter() - t0, p.reg.r_value(proj(beta)))
    tr.beta = proj(beta)
    return tr
