"""Baseline solver tests: proximal, coordinate, reweighting, alternating, splitting."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from noncvxpro.baselines import (
    StepConditionViolated,
    _AffineProjector,
    altmin_noncvx,
    chambolle_pock_bp,
    coordinate_descent_lasso,
    douglas_rachford_bp,
    fista_bb_restart,
    irls_matrix,
    irls_vector,
    ista,
    quad_var_oracle,
    quad_variational,
    split_box_lasso,
)
from noncvxpro.problems import (
    BeckmannProblem,
    MultiTaskProblem,
    Problem,
    primal_objective,
)
from noncvxpro.regularizers import GroupL2, GroupStructure, L1, lambda_max

from _oracles import fd_grad, min_l1_flow, random_group_problem


def scalar_problem():
    return Problem(np.array([[1.0]]), np.array([2.0]), 1.0, L1())


def dense(X):
    return np.asarray(X.toarray() if hasattr(X, "toarray") else X, float)


def path_flow_problem():
    edges = [(0, 1), (1, 2), (2, 3)]
    a = np.array([0.7, 0.3, 0.0, 0.0])
    b = np.array([0.0, 0.0, 0.2, 0.8])
    return BeckmannProblem(4, edges, a, b)


# ------------------------------------------------------------------ proximal

def test_ista_single_step_soft_thresholds_gradient_point():
    # from beta = 0 with unit step: gradient point is X^T y / lam = 2,
    # and soft-thresholding by 1 leaves 1
    tr = ista(scalar_problem(), step=1.0, iters=1)
    assert_allclose(tr.beta, [1.0], atol=1e-15)
    assert tr.objectives[-1] == pytest.approx(1.5, abs=1e-12)


def test_ista_zero_step_keeps_iterates_constant():
    tr = ista(scalar_problem(), step=0.0, iters=5)
    assert_allclose(tr.beta, [0.0])
    assert all(o == tr.objectives[0] for o in tr.objectives)


def test_ista_default_step_is_monotone():
    prob = random_group_problem(np.random.default_rng(0), m_max=15, n_max=12)
    tr = ista(prob, iters=200)
    for o0, o1 in zip(tr.objectives, tr.objectives[1:]):
        assert o1 <= o0 + 1e-12 * (1.0 + abs(o0))


def test_ista_requires_positive_lam():
    prob = Problem(np.eye(2), np.zeros(2), 0.0, L1())
    with pytest.raises(ValueError):
        ista(prob)


def test_fista_reaches_scalar_optimum():
    tr = fista_bb_restart(scalar_problem(), iters=100)
    assert tr.objectives[-1] == pytest.approx(1.5, abs=1e-10)
    assert_allclose(tr.beta, [1.0], atol=1e-8)


def test_fista_zero_data_stays_at_zero():
    prob = Problem(np.eye(3), np.zeros(3), 0.5, L1())
    tr = fista_bb_restart(prob, iters=20)
    assert_allclose(tr.beta, np.zeros(3))


def test_fista_above_lambda_max_returns_zero():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((8, 5))
    y = rng.standard_normal(8)
    lam = 1.5 * lambda_max(X, y, L1())
    tr = fista_bb_restart(Problem(X, y, lam, L1()), iters=200)
    assert_allclose(tr.beta, np.zeros(5), atol=1e-12)
    assert tr.objectives[-1] == pytest.approx(0.5 * float(y @ y) / lam, rel=1e-12)


# ---------------------------------------------------------------- coordinate

def test_cd_identity_design_is_exact_in_one_sweep():
    prob = Problem(np.eye(2), np.array([3.0, -1.0]), 1.0, L1())
    tr = coordinate_descent_lasso(prob, iters=1)
    assert_allclose(tr.beta, [2.0, 0.0], atol=1e-15)


def test_cd_scalar_anchor():
    tr = coordinate_descent_lasso(scalar_problem(), iters=50, tol=1e-14)
    assert_allclose(tr.beta, [1.0], atol=1e-12)
    assert tr.objectives[-1] == pytest.approx(1.5, abs=1e-12)


def test_cd_gap_certificate_at_exit():
    prob = random_group_problem(np.random.default_rng(2), m_max=20, n_max=15)
    tr = coordinate_descent_lasso(prob, iters=5000, tol=1e-10)
    assert tr.aux["gap"] <= 1e-10 * max(1.0, abs(tr.objectives[-1]))
    assert tr.aux["gap"] >= -1e-14


def test_cd_rejects_wrong_family():
    from noncvxpro.regularizers import Lq

    prob = Problem(np.eye(2), np.ones(2), 0.5, Lq(0.8))
    with pytest.raises(ValueError):
        coordinate_descent_lasso(prob)


# --------------------------------------------------------------- reweighting

def test_irls_weight_update_matches_group_norm():
    # with a nearly unregularized identity design beta converges to y, so
    # the group weight goes to sqrt(||y||^2 + eps) = 5 for y = (3, 4)
    gs = GroupStructure([[0, 1]], 2)
    prob = Problem(np.eye(2), np.array([3.0, 4.0]), 1e-10, GroupL2(gs))
    tr = irls_vector(prob, eps=1e-12, iters=60)
    assert tr.aux["eta"][0] == pytest.approx(5.0, abs=1e-6)
    assert_allclose(tr.beta, [3.0, 4.0], atol=1e-6)


def test_irls_weight_update_at_zero_beta_is_sqrt_eps_barrier():
    prob = Problem(np.eye(2), np.zeros(2), 1.0, L1())
    tr = irls_vector(prob, eps=1.0, iters=5)
    assert_allclose(tr.aux["eta"], [1.0, 1.0])
    assert_allclose(tr.beta, np.zeros(2))


def test_irls_scalar_anchor_within_barrier_bias():
    tr = irls_vector(scalar_problem(), eps=1e-8, iters=200)
    assert tr.beta[0] == pytest.approx(1.0, abs=1e-3)
    assert tr.objectives[-1] == pytest.approx(1.5, abs=1e-3)


def test_irls_validates_inputs():
    with pytest.raises(ValueError):
        irls_vector(scalar_problem(), eps=0.0)
    prob = Problem(np.eye(2), np.zeros(2), 0.0, L1())
    with pytest.raises(ValueError):
        irls_vector(prob, eps=1e-8)


def test_irls_matrix_zero_data_keeps_floor_eigenvalue():
    rng = np.random.default_rng(4)
    Xs = [rng.standard_normal((5, 3)) for _ in range(2)]
    ys = [np.zeros(5) for _ in range(2)]
    mt = MultiTaskProblem(Xs, ys, 1.0)
    tr = irls_matrix(mt, eps=1e-6, iters=3)
    assert_allclose(tr.beta, np.zeros((3, 2)))
    assert tr.aux["z_min_eig"] == pytest.approx(1e-3, rel=1e-10)


def test_irls_matrix_single_task_matches_vector_route():
    # one task: the spectral penalty of a single column equals its l2 norm,
    # so the matrix iteration solves the same problem as the one-group
    # vector iteration (both carry an O(sqrt(eps)) barrier plus a slower
    # rate on the matrix side)
    rng = np.random.default_rng(3)
    X = rng.standard_normal((6, 4))
    y = rng.standard_normal(6)
    mt = MultiTaskProblem([X], [y], 0.4)
    pg = Problem(X, y, 0.4, GroupL2(GroupStructure([list(range(4))], 4)))
    tm = irls_matrix(mt, eps=1e-10, iters=500)
    tv = irls_vector(pg, eps=1e-10, iters=500)
    assert tm.objectives[-1] == pytest.approx(tv.objectives[-1], abs=1e-3)


def test_irls_matrix_eigenvalue_floor_holds():
    rng = np.random.default_rng(9)
    Xs = [rng.standard_normal((6, 4)) for _ in range(3)]
    ys = [rng.standard_normal(6) for _ in range(3)]
    tr = irls_matrix(MultiTaskProblem(Xs, ys, 0.7), eps=1e-8, iters=30)
    assert tr.aux["z_min_eig"] >= 1e-4 * (1.0 - 1e-8)


# --------------------------------------------------------------- alternating

def test_altmin_scalar_anchor_finds_global_minimum():
    tr = altmin_noncvx(scalar_problem(), iters=300, v0=np.array([0.3]))
    assert_allclose(tr.beta, [1.0], atol=1e-8)
    assert tr.objectives[-1] == pytest.approx(1.5, abs=1e-10)
    assert_allclose(tr.aux["v"] * tr.aux["u"], tr.beta)


def test_altmin_zero_start_stays_at_saddle():
    tr = altmin_noncvx(scalar_problem(), iters=20, v0=np.array([0.0]))
    assert_allclose(tr.beta, [0.0])
    assert all(o == tr.objectives[0] for o in tr.objectives)


def test_altmin_joint_objective_monotone():
    prob = random_group_problem(np.random.default_rng(6), m_max=15, n_max=12)
    tr = altmin_noncvx(prob, iters=100)
    joint = tr.aux["joint"]
    for j0, j1 in zip(joint, joint[1:]):
        assert j1 <= j0 + 1e-10 * (1.0 + abs(j0))


# ----------------------------------------------------- convex reformulation

def test_quad_variational_scalar_anchor():
    tr = quad_variational(scalar_problem())
    assert tr.aux["eta"][0] == pytest.approx(1.0, abs=1e-6)
    assert_allclose(tr.beta, [1.0], atol=1e-6)
    assert tr.objectives[-1] == pytest.approx(1.5, abs=1e-10)


def test_quad_variational_above_lambda_max_returns_zero():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((8, 5))
    y = rng.standard_normal(8)
    lam = 1.2 * lambda_max(X, y, L1())
    tr = quad_variational(Problem(X, y, lam, L1()))
    assert np.abs(tr.beta).max() <= 1e-6
    assert tr.objectives[-1] == pytest.approx(0.5 * float(y @ y) / lam, rel=1e-8)


def test_quad_variational_oracle_gradient_matches_fd():
    prob = random_group_problem(np.random.default_rng(10), m_max=12, n_max=8)
    eval_eta = quad_var_oracle(prob)
    rng = np.random.default_rng(11)
    eta = 0.5 + rng.random(prob.groups.k)
    _, grad, _ = eval_eta(eta)
    ref = fd_grad(lambda e: eval_eta(e)[0], eta)
    assert_allclose(grad, ref, rtol=1e-6, atol=1e-8)


def test_quad_variational_rejects_wrong_inputs():
    from noncvxpro.regularizers import Lq

    with pytest.raises(ValueError):
        quad_var_oracle(Problem(np.eye(2), np.ones(2), 0.5, Lq(0.8)))
    with pytest.raises(ValueError):
        quad_var_oracle(Problem(np.eye(2), np.ones(2), 0.0, L1()))


# -------------------------------------------------------------- split lasso

def test_split_box_requires_l1_and_positive_lam():
    gs = GroupStructure([[0, 1]], 2)
    with pytest.raises(ValueError):
        split_box_lasso(Problem(np.eye(2), np.ones(2), 0.5, GroupL2(gs)))
    with pytest.raises(ValueError):
        split_box_lasso(Problem(np.eye(2), np.ones(2), 0.0, L1()))


def test_split_box_scalar_anchor():
    tr = split_box_lasso(scalar_problem())
    assert_allclose(tr.beta, [1.0], atol=1e-8)


# ------------------------------------------------------- agreement invariant

def test_convex_solvers_agree_with_certified_optimum():
    # one small instance, every lam > 0 route: everything lands within
    # 1e-5 of the gap-certified coordinate-descent value (the reweighting
    # route carries its eps bias, everything else is exact here)
    prob = random_group_problem(np.random.default_rng(5), m_max=14, n_max=10, reg_kind="l1")
    cd = coordinate_descent_lasso(prob, iters=3000, tol=1e-12)
    f_star = cd.objectives[-1]
    others = [
        fista_bb_restart(prob, iters=2000),
        irls_vector(prob, eps=1e-12, iters=300),
        altmin_noncvx(prob, iters=300),
        quad_variational(prob),
        split_box_lasso(prob),
        ista(prob, iters=3000),
    ]
    for tr in others:
        rel = abs(tr.objectives[-1] - f_star) / (1.0 + abs(f_star))
        assert rel <= 1e-5, f"{tr.name}: relative error {rel:.2e}"
        # trace values are true objectives, so none may undercut the optimum
        assert min(tr.objectives) >= f_star - 1e-9 * (1.0 + abs(f_star))


# ----------------------------------------------------------------- splitting

def test_affine_projector_symmetric_example():
    proj = _AffineProjector(np.array([[1.0, 1.0]]), np.array([1.0]))
    assert_allclose(proj(np.zeros(2)), [0.5, 0.5], atol=1e-14)


def test_affine_projector_idempotent_and_feasible():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((3, 7))
    y = rng.standard_normal(3)
    proj = _AffineProjector(X, y)
    z = rng.standard_normal(7)
    p1 = proj(z)
    assert np.linalg.norm(X @ p1 - y) <= 1e-12 * (1.0 + np.linalg.norm(y))
    assert_allclose(proj(p1), p1, atol=1e-12)


def test_dr_zero_data_stays_at_zero():
    prob = Problem(np.array([[1.0, 1.0]]), np.zeros(1), 0.0, L1())
    tr = douglas_rachford_bp(prob, iters=10)
    assert_allclose(tr.beta, np.zeros(2))
    assert all(o == 0.0 for o in tr.objectives)


def test_dr_matches_flow_enumeration_optimum():
    bp = path_flow_problem()
    p = bp.to_problem()
    opt = min_l1_flow(dense(p.X), p.y)
    tr = douglas_rachford_bp(bp, iters=500)
    assert np.linalg.norm(dense(p.X) @ tr.beta - p.y) <= 1e-10 * (1.0 + np.linalg.norm(p.y))
    assert p.reg.r_value(tr.beta) == pytest.approx(opt, abs=1e-5)


def test_dr_validates_gamma_and_lam():
    with pytest.raises(ValueError):
        douglas_rachford_bp(path_flow_problem(), gamma=2.0)
    with pytest.raises(ValueError):
        douglas_rachford_bp(scalar_problem())


def test_cp_zero_data_stays_at_zero():
    prob = Problem(np.array([[1.0, 1.0]]), np.zeros(1), 0.0, L1())
    tr = chambolle_pock_bp(prob, iters=10)
    assert_allclose(tr.beta, np.zeros(2))


def test_cp_matches_flow_enumeration_optimum():
    bp = path_flow_problem()
    p = bp.to_problem()
    opt = min_l1_flow(dense(p.X), p.y)
    tr = chambolle_pock_bp(bp, iters=2000)
    assert np.linalg.norm(dense(p.X) @ tr.beta - p.y) <= 1e-10 * (1.0 + np.linalg.norm(p.y))
    assert p.reg.r_value(tr.beta) == pytest.approx(opt, abs=1e-5)


def test_cp_rejects_oversized_steps():
    bp = path_flow_problem()
    from noncvxpro.baselines import _spectral_norm

    L2 = _spectral_norm(bp.to_problem().X) ** 2
    s = np.sqrt(1.5 / L2)
    with pytest.raises(StepConditionViolated):
        chambolle_pock_bp(bp, sigma=s, tau=s)
    with pytest.raises(ValueError):
        chambolle_pock_bp(bp, theta=0.0)


def test_dr_and_cp_agree_on_random_flow():
    rng = np.random.default_rng(13)
    edges = [(0, 1), (1, 2), (2, 3), (0, 2), (1, 3)]
    a = np.array([0.6, 0.4, 0.0, 0.0])
    b = np.array([0.0, 0.0, 0.5, 0.5])
    bp = BeckmannProblem(4, edges, a, b)
    p = bp.to_problem()
    opt = min_l1_flow(dense(p.X), p.y)
    dr = douglas_rachford_bp(bp, iters=800)
    cp = chambolle_pock_bp(bp, iters=3000)
    assert p.reg.r_value(dr.beta) == pytest.approx(opt, abs=1e-5)
    assert p.reg.r_value(cp.beta) == pytest.approx(opt, abs=1e-5)
