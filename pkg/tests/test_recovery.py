import math
from itertools import groupby

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import subspace_angles

from ridgelift import (ArgumentError, DegenerateError, NoiseModel, NonConvergence, NuclearProx,
                       RankProjected, RecoveryConfig, ShapeError, SparseLowRank, build_plan,
                       choose_lambda, extract_subspace, measure, operator_for, random_model,
                       random_row_orthonormal, recover, subspace_alignment, truncate_rank)
from ridgelift.model import gradient_matrix
from ridgelift.recovery import (LowRankEstimate, calibrate_c0, projection_residual,
                                rank_k_error_bound, svt)

# independent 40-digit evaluation of the Dantzig radius at
# sigma=0, C2=1, k=1, eps=1e-3, d=100, m_x=20, m_phi=300, kappa1=0.2
LAMBDA_EXAMPLE = 0.06324555320336758664
LAMBDA_EXAMPLE_NOISY = 7680.0632455532033676  # same with sigma=0.01, gamma=3.2


def planted(d, m_x, k, m_phi, seed, mode="dense", fill=0.9):
    rng = np.random.default_rng(seed)
    A = random_row_orthonormal(d, k, rng)
    G = rng.standard_normal((k, m_x))
    X = A.T @ G
    plan = build_plan(d, k, m_x, m_phi, 1e-3, mode=mode, seed=seed, fill=fill)
    op = operator_for(plan)
    return A, X, op, op.apply(X)


def rel_err(Xh, X):
    return np.linalg.norm(Xh - X) / np.linalg.norm(X)


# Dantzig radius

def _lambda_mp(m_x, m_phi, d, k, c2, eps, kappa, sigma=0, gamma=3.2):
    mpmath.mp.dps = 40
    eps, kappa, sigma, gamma = (mpmath.mpf(str(v)) for v in (eps, kappa, sigma, gamma))
    lam = c2 * eps * d * m_x * k ** 2 * mpmath.sqrt(1 + kappa) / (2 * mpmath.sqrt(m_phi))
    if sigma > 0:
        lam += 2 * gamma * sigma / eps * mpmath.sqrt(2 * max(m_phi, m_x) * (1 + kappa) * m_x)
    return lam


def test_lambda_matches_high_precision():
    lam = choose_lambda(20, 300, 100, 1, 1.0, 1e-3, 0.2)
    assert lam == pytest.approx(LAMBDA_EXAMPLE, rel=1e-14)
    assert lam == pytest.approx(float(_lambda_mp(20, 300, 100, 1, 1, 1e-3, 0.2)), rel=1e-14)
    noisy = choose_lambda(20, 300, 100, 1, 1.0, 1e-3, 0.2, sigma=0.01, gamma=3.2)
    assert noisy == pytest.approx(LAMBDA_EXAMPLE_NOISY, rel=1e-14)


@given(eps=st.floats(1e-6, 1.0), d=st.integers(2, 3000), m_x=st.integers(1, 100),
       m_phi=st.integers(1, 10**5), k=st.integers(1, 5), kappa=st.floats(0.01, 0.99))
def test_lambda_linear_in_epsilon_without_noise(eps, d, m_x, m_phi, k, kappa):
    a = choose_lambda(m_x, m_phi, d, k, 1.3, eps, kappa)
    b = choose_lambda(m_x, m_phi, d, k, 1.3, 2 * eps, kappa)
    assert b == pytest.approx(2 * a, rel=1e-13)


def test_gaussian_term_doubles_when_epsilon_halves():
    base = dict(m_x=20, m_phi=300, d=100, k=1, c2=1.0, kappa1=0.2)
    det = lambda e: choose_lambda(**base, epsilon=e)
    gauss = lambda e: choose_lambda(**base, epsilon=e, sigma=0.01) - det(e)
    assert gauss(0.5e-3) == pytest.approx(2 * gauss(1e-3), rel=1e-12)


@pytest.mark.parametrize("kw", [dict(kappa1=0.0), dict(kappa1=1.0),
                                dict(kappa1=0.2, sigma=0.1, gamma=2 * math.sqrt(math.log(12)))])
def test_lambda_argument_checks(kw):
    with pytest.raises(ArgumentError):
        choose_lambda(20, 300, 100, 1, 1.0, 1e-3, **kw)


# config

@pytest.mark.parametrize("kw", [dict(rank=0), dict(rank=1, lam=-1.0),
                                dict(rank=1, solver=RankProjected(max_iter=0)),
                                dict(rank=1, solver=NuclearProx(tol=0.0))])
def test_recovery_config_validation(kw):
    with pytest.raises(ArgumentError):
        RecoveryConfig(**kw)


# solvers

@pytest.mark.parametrize("solver", [NuclearProx(tol=1e-8), RankProjected(tol=1e-8)])
def test_noiseless_rank_one_recovery(solver):
    d, m_x = 30, 10
    for seed in range(3):
        _, X, op, y = planted(d, m_x, 1, 6 * (d + m_x), seed)
        lam = 1e-6 * np.linalg.norm(op.adjoint(y), 2)
        est = recover(y, op, RecoveryConfig(1, solver, lam=lam))
        assert rel_err(est.X, X) <= 1e-3


@pytest.mark.parametrize("solver", [NuclearProx(), RankProjected(), SparseLowRank()])
def test_zero_measurements_give_zero(solver):
    op = operator_for(build_plan(12, 1, 4, 20, 1e-3, seed=0))
    est = recover(np.zeros(20), op, RecoveryConfig(1, solver))
    assert np.array_equal(est.X, np.zeros((12, 4)))
    assert est.dantzig_feasible


def test_noiseless_planted_recovery_rate():
    d, m_x, k = 30, 10, 2
    good = 0
    for seed in range(20):
        _, X, op, y = planted(d, m_x, k, 6 * k * (d + m_x), seed)
        est = recover(y, op, RecoveryConfig(k, RankProjected(tol=1e-8)))
        good += rel_err(est.X, X) <= 1e-3
    assert good >= 19


def test_recover_shape_and_finiteness_checks():
    op = operator_for(build_plan(12, 1, 4, 20, 1e-3, seed=0))
    with pytest.raises(ShapeError):
        recover(np.zeros(19), op, RecoveryConfig(1))
    bad = np.zeros(20)
    bad[3] = np.nan
    with pytest.raises(ArgumentError):
        recover(bad, op, RecoveryConfig(1))


def test_nonconvergence_carries_last_iterate():
    _, _, op, y = planted(30, 10, 2, 200, 0)
    with pytest.raises(NonConvergence) as info:
        recover(y, op, RecoveryConfig(2, NuclearProx(max_iter=1), lam=0.0))
    exc = info.value
    assert exc.iterations == 1
    assert exc.estimate.X.shape == (30, 10)
    assert exc.residual > 0


def test_nuclear_objective_monotone_at_fixed_mu():
    _, _, op, y = planted(25, 8, 2, 150, 3)
    y = y + 1e-3 * np.random.default_rng(0).standard_normal(y.size)
    est = recover(y, op, RecoveryConfig(2, NuclearProx(max_iter=400), lam=1e-3))
    assert len(est.trace) > 10
    for _, group in groupby(est.trace, key=lambda t: t[1]):
        F = [t[2] for t in group]
        for a, b in zip(F, F[1:]):
            assert b <= a + 1e-12 * max(1.0, abs(a))


def test_estimate_invariants():
    _, _, op, y = planted(20, 8, 2, 120, 1)
    for solver in (NuclearProx(), RankProjected()):
        lam = 1e-4
        est = recover(y, op, RecoveryConfig(2, solver, lam=lam))
        s = np.linalg.svd(est.X, compute_uv=False)
        np.testing.assert_allclose(est.singular_values, s, atol=1e-10)
        resid = np.linalg.norm(op.adjoint(y - op.apply(est.X)), 2)
        assert est.residual == pytest.approx(resid, rel=1e-9, abs=1e-14)
        assert est.dantzig_feasible == (resid <= lam + solver.tol)


def _dantzig_error(seed, sigma=0.0, eps=1e-3):
    d, m_x, m_phi = 50, 10, 360
    model = random_model("logistic", d, 1, seed)
    plan = build_plan(d, 1, m_x, m_phi, eps, seed=seed)
    noise = NoiseModel(sigma, seed=seed) if sigma else None
    ms = measure(model, plan, noise)
    X = gradient_matrix(model, plan.centers)
    lam = choose_lambda(m_x, m_phi, d, 1, 1.0, eps, 0.2, sigma=sigma)
    op = operator_for(plan)
    est = recover(ms.y, op, RecoveryConfig(1, NuclearProx(tol=1e-8), lam=lam))
    return X, est, lam


def test_rank_k_bound_with_calibrated_constant():
    # calibrate C0_hat on noiseless trials, then check the rank-k bound on fresh ones
    cal = [_dantzig_error(s) for s in range(5)]
    c0_hat = calibrate_c0([np.sum((e.X - X) ** 2) for X, e, _ in cal], 1, [l for *_, l in cal])
    assert 0 < c0_hat < 16
    fresh = [_dantzig_error(s) for s in range(100, 105)]
    fresh += [_dantzig_error(s, sigma=1e-6, eps=1e-2) for s in range(200, 203)]
    for X, est, lam in fresh:
        Xk = truncate_rank(est, 1).X
        assert np.sum((X - Xk) ** 2) <= rank_k_error_bound(c0_hat, 1, lam)


# truncation

def test_truncate_diagonal():
    out = truncate_rank(np.diag([3.0, 1.0]), 1).X
    np.testing.assert_allclose(out, np.diag([3.0, 0.0]), atol=1e-15)


def test_truncate_idempotent_on_rank_k():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((9, 2)) @ rng.standard_normal((2, 7))
    np.testing.assert_allclose(truncate_rank(X, 2).X, X, atol=1e-12)


@given(seed=st.integers(0, 2**31), k=st.integers(1, 5))
def test_truncation_error_is_tail_energy(seed, k):
    X = np.random.default_rng(seed).standard_normal((8, 6))
    s = np.linalg.svd(X, compute_uv=False)
    err = np.linalg.norm(X - truncate_rank(X, k).X)
    assert err == pytest.approx(math.sqrt(np.sum(s[k:] ** 2)), rel=1e-10, abs=1e-12)
    # brute force best rank-k from the full SVD
    U, s_, Vt = np.linalg.svd(X)
    best = (U[:, :k] * s_[:k]) @ Vt[:k]
    assert err == pytest.approx(np.linalg.norm(X - best), rel=1e-10, abs=1e-12)


def test_truncate_rank_bounds_and_residual():
    X = np.ones((4, 3))
    with pytest.raises(ArgumentError):
        truncate_rank(X, 4)
    with pytest.raises(ArgumentError):
        truncate_rank(X, 0)
    _, Xp, op, y = planted(10, 4, 1, 30, 0)
    est = truncate_rank(LowRankEstimate(Xp), 1, y, op)
    assert est.residual == pytest.approx(0.0, abs=1e-10)


# subspace extraction

def test_rank_one_subspace():
    rng = np.random.default_rng(1)
    a = random_row_orthonormal(20, 1, rng)[0]
    X = np.outer(a, rng.standard_normal(7))
    sub = extract_subspace(X, 1)
    assert abs(sub.A_hat[0] @ a) == pytest.approx(1.0, abs=1e-12)


def test_planted_subspace_alignment_one():
    rng = np.random.default_rng(2)
    A = random_row_orthonormal(25, 3, rng)
    G = rng.standard_normal((3, 10)) + 3 * np.eye(3, 10)
    sub = extract_subspace(A.T @ G, 3)
    assert subspace_alignment(A, sub) == pytest.approx(1.0, abs=1e-8)
    assert np.linalg.norm(sub.A_hat @ sub.A_hat.T - np.eye(3)) <= 1e-10


@given(seed=st.integers(0, 2**31), delta=st.floats(1e-6, 1.0))
def test_weyl_inequality(seed, delta):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 8))
    Xh = X + delta * rng.standard_normal(X.shape)
    s, sh = (np.linalg.svd(M, compute_uv=False) for M in (X, Xh))
    assert np.all(np.abs(sh - s) <= np.linalg.norm(X - Xh, 2) + 1e-12)
    k = 3
    if sh[k - 1] > 1e-12:
        np.testing.assert_allclose(extract_subspace(Xh, k).singular_values, sh[:k], rtol=1e-12)


def test_degenerate_subspace():
    with pytest.raises(DegenerateError):
        extract_subspace(np.zeros((5, 4)), 1)
    rng = np.random.default_rng(0)
    with pytest.raises(DegenerateError):
        extract_subspace(np.outer(rng.standard_normal(5), rng.standard_normal(4)), 2)
    with pytest.raises(ArgumentError):
        extract_subspace(np.ones((5, 4)), 5)


def test_sign_convention_is_reproducible():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((10, 6))
    a, b = extract_subspace(X, 3).A_hat, extract_subspace(-X, 3).A_hat
    for row in a:
        assert row[np.flatnonzero(np.abs(row) > 1e-14)[0]] > 0
    np.testing.assert_allclose(a, b, atol=1e-12)


# alignment

def test_alignment_invariant_under_rotation():
    A = random_row_orthonormal(15, 3, seed=0)
    Q = np.linalg.qr(np.random.default_rng(1).standard_normal((3, 3)))[0]
    assert subspace_alignment(A, Q @ A) == pytest.approx(1.0, abs=1e-14)


def test_alignment_of_orthogonal_directions():
    a = np.zeros((1, 5))
    a[0, 0] = 1
    b = np.zeros((1, 5))
    b[0, 3] = 1
    assert subspace_alignment(a, b) == 0.0


def test_alignment_matches_principal_angles():
    for seed in range(10):
        A = random_row_orthonormal(6, 2, seed=seed)
        B = random_row_orthonormal(6, 2, seed=seed + 100)
        theta = subspace_angles(A.T, B.T)
        assert subspace_alignment(A, B) == pytest.approx(np.mean(np.cos(theta) ** 2), abs=1e-12)


def test_alignment_shape_error():
    with pytest.raises(ShapeError):
        subspace_alignment(random_row_orthonormal(6, 2, 0), random_row_orthonormal(6, 1, 0))


@given(seed=st.integers(0, 2**31), d=st.integers(2, 30), data=st.data())
def test_projection_identity(seed, d, data):
    k = data.draw(st.integers(1, d))
    A = random_row_orthonormal(d, k, seed=seed)
    B = random_row_orthonormal(d, k, seed=seed + 1)
    lhs = projection_residual(A, B)
    rhs = k - np.sum((A @ B.T) ** 2)
    assert abs(lhs - rhs) <= 1e-10


def test_projection_identity_100_pairs():
    rng = np.random.default_rng(9)
    for _ in range(100):
        d = int(rng.integers(2, 40))
        k = int(rng.integers(1, d + 1))
        A, B = random_row_orthonormal(d, k, rng), random_row_orthonormal(d, k, rng)
        assert abs(projection_residual(A, B) - (k - np.sum((A @ B.T) ** 2))) <= 1e-10


# singular value thresholding

def svt_oracle(Z, tau):
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    return (U * np.maximum(s - tau, 0)) @ Vt


def test_svt_matches_dense_shrinkage():
    rng = np.random.default_rng(4)
    for _ in range(50):
        Z = rng.standard_normal((10, 8))
        tau = float(rng.uniform(0, 3))
        out, s = svt(Z, tau)
        np.testing.assert_allclose(out, svt_oracle(Z, tau), atol=1e-12)
        s0 = np.linalg.svd(Z, compute_uv=False)
        np.testing.assert_allclose(s0 - s, np.minimum(s0, tau), atol=1e-12)


@given(seed=st.integers(0, 2**31), tau=st.floats(0, 5))
def test_svt_is_nuclear_prox(seed, tau):
    # the prox minimizes 0.5||M - Z||^2 + tau ||M||_*; random perturbations never beat it
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((6, 5))
    P, _ = svt(Z, tau)
    obj = lambda M: 0.5 * np.sum((M - Z) ** 2) + tau * np.linalg.svd(M, compute_uv=False).sum()
    base = obj(P)
    for _ in range(10):
        assert obj(P + 1e-3 * rng.standard_normal(P.shape)) >= base - 1e-12


# sparse plus low rank

def test_sparse_low_rank_under_corruption():
    d, m_x, k, m_phi = 30, 10, 2, 120
    aligned = []
    for seed in range(5):
        A, X, op, y = planted(d, m_x, k, m_phi, seed, mode="subset", fill=0.9)
        rng = np.random.default_rng(seed)
        hit = rng.random(y.size) < 0.01
        y = y + np.where(hit, 10.0 * rng.standard_normal(y.size), 0.0)
        est = recover(y, op, RecoveryConfig(k, SparseLowRank(sparsity=0.02)))
        aligned.append(subspace_alignment(A, extract_subspace(est, k)))
    assert min(aligned) >= 0.95


def test_rank_projected_plain_gradient_variant():
    _, X, op, y = planted(30, 10, 1, 240, 5)
    est = recover(y, op, RecoveryConfig(1, RankProjected(conjugate=False, tol=1e-8,
                                                         max_iter=2000)))
    assert rel_err(est.X, X) <= 1e-3
