"""Low-rank recovery of X = A^T G from linear measurements, and extraction of A.

Three solvers share one entry point, :func:`recover`:

``NuclearProx``
    Monotone accelerated proximal gradient (backtracking) on
    ``0.5 ||Phi(M) - y||^2 + mu ||M||_*`` with mu decreased geometrically
    until the Dantzig constraint ``||Phi^*(y - Phi(M))|| <= lam`` holds.
``RankProjected``
    Gradient steps followed by projection onto rank k. The default step is
    the exact line-search step restricted to the tangent space of the
    current iterate (normalized iterative hard thresholding).
``SparseLowRank``
    The same rank-k update alternated with hard thresholding of a sparse
    corruption vector in measurement space.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DegenerateError, NonConvergence, ShapeError

_TINY = 1e-300


def svt(Z, tau):
    """Singular value soft-thresholding, the prox of ``tau * ||.||_*``.

    Returns the thresholded matrix and its singular values.
    """
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vt[keep], s


def best_rank(Z, k):
    """Best rank-k approximation in Frobenius norm; returns (Zk, U, s, Vt)."""
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    U, s, Vt = U[:, :k], s[:k], Vt[:k]
    return (U * s) @ Vt, U, s, Vt


def spectral_norm(M):
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


@dataclass(frozen=True)
class NuclearProx:
    step: float = None
    mu_decay: float = 0.5
    mu_min_ratio: float = 1e-7
    stage_iter: int = 300
    max_iter: int = 3000
    tol: float = 1e-6


@dataclass(frozen=True)
class RankProjected:
    step: float = None
    conjugate: bool = True
    max_iter: int = 500
    tol: float = 1e-6


@dataclass(frozen=True)
class SparseLowRank:
    sparsity: float = 0.01
    max_iter: int = 500
    tol: float = 1e-6


@dataclass(frozen=True)
class RecoveryConfig:
    rank: int
    solver: object = field(default_factory=RankProjected)
    lam: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ArgumentError("target rank must be positive")
        if self.lam < 0:
            raise ArgumentError("lambda must be nonnegative")
        if self.solver.max_iter < 1 or not self.solver.tol > 0:
            raise ArgumentError("need max_iter >= 1 and tol > 0")


@dataclass(eq=False)
class LowRankEstimate:
    X: np.ndarray
    iterations: int = 0
    residual: float = float("nan")
    dantzig_feasible: bool = False
    lam: float = 0.0
    sparse: np.ndarray = None
    trace: list = field(default_factory=list)
    singular_values: np.ndarray = field(init=False)

    def __post_init__(self):
        self.singular_values = np.linalg.svd(self.X, compute_uv=False)


@dataclass(frozen=True, eq=False)
class SubspaceEstimate:
    A_hat: np.ndarray
    singular_values: np.ndarray

    @property
    def k(self):
        return self.A_hat.shape[0]


def _finish(op, y, X, AX, lam, tol, iterations, trace, sparse=None):
    r = y - AX if sparse is None else y - sparse - AX
    resid = spectral_norm(op.adjoint(r))
    return LowRankEstimate(X, iterations, resid, resid <= lam + tol, lam, sparse, trace)


def recover(y, op, config):
    """Estimate the low-rank matrix behind measurements ``y = Phi(X) + e``.

    Raises :class:`NonConvergence` (with the last iterate attached) when the
    iteration cap is hit while the iterates are still moving and the
    Dantzig constraint is not met.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size != op.n:
        raise ShapeError(f"{y.size} measurements for an operator with {op.n} rows")
    if not np.all(np.isfinite(y)):
        raise ArgumentError("measurements must be finite")
    solver = config.solver
    if isinstance(solver, NuclearProx):
        return _nuclear_prox(y, op, config.lam, solver)
    if isinstance(solver, RankProjected):
        return _rank_projected(y, op, config.rank, config.lam, solver)
    if isinstance(solver, SparseLowRank):
        return _sparse_low_rank(y, op, config.rank, config.lam, solver)
    raise ArgumentError(f"unknown solver {solver!r}")


def _nuclear_prox(y, op, lam, cfg):
    d, m_x = op.shape
    zero = np.zeros((d, m_x))
    mu0 = spectral_norm(op.adjoint(y))
    if mu0 <= lam:
        return LowRankEstimate(zero, 0, mu0, True, lam)
    X, AX, sX = zero, np.zeros_like(y), np.zeros(0)
    L = 1.0 / cfg.step if cfg.step else 1.0
    mu = mu0 * cfg.mu_decay
    total, trace = 0, []
    while True:
        Fx = 0.5 * np.sum((AX - y) ** 2) + mu * sX.sum()
        Z, AZ, t = X, AX, 1.0
        moving = True
        for _ in range(cfg.stage_iter):
            r = AZ - y
            g = op.adjoint(r)
            fz = 0.5 * (r @ r)
            while True:
                P, sP = svt(Z - g / L, mu / L)
                AP = op.apply(P)
                fp = 0.5 * np.sum((AP - y) ** 2)
                D = P - Z
                if cfg.step or fp <= fz + np.sum(g * D) + 0.5 * L * np.sum(D * D) + 1e-12 * max(fz, 1.0):
                    break
                L *= 2.0
            total += 1
            Fp = fp + mu * sP.sum()
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            if Fp <= Fx:
                Xn, AXn, sXn, Fn = P, AP, sP, Fp
            else:
                Xn, AXn, sXn, Fn = X, AX, sX, Fx
            # Z is affine in (P, Xn, X), so Phi(Z) follows without another apply
            c1, c2 = t / t_new, (t - 1.0) / t_new
            Z = Xn + c1 * (P - Xn) + c2 * (Xn - X)
            AZ = AXn + c1 * (AP - AXn) + c2 * (AXn - AX)
            change = np.linalg.norm(Xn - X) / max(np.linalg.norm(Xn), _TINY)
            X, AX, sX, Fx, t = Xn, AXn, sXn, Fn, t_new
            trace.append((total, mu, Fx))
            if not cfg.step:
                L = max(L / 1.5, 1e-3)
            if change <= cfg.tol:
                moving = False
                break
            if total >= cfg.max_iter:
                break
        est = _finish(op, y, X, AX, lam, cfg.tol, total, trace)
        if est.dantzig_feasible:
            return est
        if total >= cfg.max_iter:
            if moving:
                raise NonConvergence(total, est.residual, est)
            return est
        mu *= cfg.mu_decay
        if mu < mu0 * cfg.mu_min_ratio:
            return est


def _tangent(G, U, Vt):
    """Projection of G onto the tangent space of rank-k matrices at (U, V)."""
    UG = U @ (U.T @ G)
    return UG + (G - UG) @ Vt.T @ Vt


def _rank_step(op, X, AX, target, rank, U, Vt, step, prev=None):
    """One projected step toward ``target``; backtracks on residual growth.

    With ``step=None`` the step is the exact minimizer along the search
    direction inside the tangent space. ``prev`` is the previous search
    direction; when given, the new direction is the tangent gradient made
    Phi-conjugate to it (restarting whenever that loses descent).
    Returns the new iterate, its image, its factors and the direction used.
    """
    r = target - AX
    G = op.adjoint(r)
    if step is None:
        PG = _tangent(G, U, Vt)
        APG = op.apply(PG)
        P, AP = PG, APG
        if prev is not None:
            Q = _tangent(prev, U, Vt)
            AQ = op.apply(Q)
            qq = np.sum(AQ ** 2)
            if qq > _TINY:
                beta = -np.sum(APG * AQ) / qq
                cand, Acand = PG + beta * Q, APG + beta * AQ
                if np.sum(PG * cand) > 0:
                    P, AP = cand, Acand
        mu = np.sum(PG * P) / max(np.sum(AP ** 2), _TINY)
    else:
        P, mu = G, step
    r0 = r @ r
    for _ in range(30):
        Xn, Un, _, Vtn = best_rank(X + mu * P, rank)
        AXn = op.apply(Xn)
        if np.sum((target - AXn) ** 2) <= r0 * (1 + 1e-12) or step is not None:
            break
        mu *= 0.5
    return Xn, AXn, Un, Vtn, P


def _rank_projected(y, op, rank, lam, cfg):
    d, m_x = op.shape
    X, AX = np.zeros((d, m_x)), np.zeros_like(y)
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        return _finish(op, y, X, AX, lam, cfg.tol, 0, [])
    _, U, _, Vt = best_rank(op.adjoint(y), rank)
    trace, prev = [], None
    for it in range(1, cfg.max_iter + 1):
        Xn, AXn, U, Vt, P = _rank_step(op, X, AX, y, rank, U, Vt, cfg.step, prev)
        prev = P if cfg.conjugate else None
        change = np.linalg.norm(Xn - X) / max(np.linalg.norm(Xn), _TINY)
        X, AX = Xn, AXn
        res = np.linalg.norm(y - AX)
        trace.append((it, 0.0, 0.5 * res ** 2))
        if change <= cfg.tol or res <= cfg.tol * ynorm:
            return _finish(op, y, X, AX, lam, cfg.tol, it, trace)
    est = _finish(op, y, X, AX, lam, cfg.tol, cfg.max_iter, trace)
    if not est.dantzig_feasible:
        raise NonConvergence(cfg.max_iter, est.residual, est)
    return est


def hard_threshold(v, count):
    """Keep the ``count`` largest-magnitude entries of v."""
    out = np.zeros_like(v)
    if count > 0:
        idx = np.argpartition(np.abs(v), -count)[-count:]
        out[idx] = v[idx]
    return out


def _sparse_low_rank(y, op, rank, lam, cfg):
    d, m_x = op.shape
    budget = int(math.ceil(cfg.sparsity * y.size))
    X, AX, S = np.zeros((d, m_x)), np.zeros_like(y), np.zeros_like(y)
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        return _finish(op, y, X, AX, lam, cfg.tol, 0, [], S)
    _, U, _, Vt = best_rank(op.adjoint(y), rank)
    trace = []
    for it in range(1, cfg.max_iter + 1):
        Xn, AXn, U, Vt, _ = _rank_step(op, X, AX, y - S, rank, U, Vt, None)
        S = hard_threshold(y - AXn, budget)
        change = np.linalg.norm(Xn - X) / max(np.linalg.norm(Xn), _TINY)
        X, AX = Xn, AXn
        res = np.linalg.norm(y - S - AX)
        trace.append((it, 0.0, 0.5 * res ** 2))
        if change <= cfg.tol or res <= cfg.tol * ynorm:
            return _finish(op, y, X, AX, lam, cfg.tol, it, trace, S)
    est = _finish(op, y, X, AX, lam, cfg.tol, cfg.max_iter, trace, S)
    if not est.dantzig_feasible:
        raise NonConvergence(cfg.max_iter, est.residual, est)
    return est


def truncate_rank(estimate, k, y=None, op=None):
    """Best rank-k approximation of an estimate.

    The Dantzig residual is recomputed when ``y`` and ``op`` are given and
    left as NaN otherwise.
    """
    X = estimate.X if isinstance(estimate, LowRankEstimate) else np.asarray(estimate)
    if not 1 <= k <= min(X.shape):
        raise ArgumentError(f"rank {k} not in [1, {min(X.shape)}]")
    Xk = best_rank(X, k)[0]
    iters = getattr(estimate, "iterations", 0)
    lam = getattr(estimate, "lam", 0.0)
    if y is not None and op is not None:
        return _finish(op, np.asarray(y, float), Xk, op.apply(Xk), lam, 0.0, iters, [])
    return LowRankEstimate(Xk, iters, float("nan"), False, lam)


def extract_subspace(estimate, k):
    """Top-k left singular vectors of X_hat as the rows of A_hat.

    Each vector is signed so its first nonzero entry is positive.
    """
    X = estimate.X if isinstance(estimate, LowRankEstimate) else np.asarray(estimate)
    if not 1 <= k <= min(X.shape):
        raise ArgumentError(f"rank {k} not in [1, {min(X.shape)}]")
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if s[k - 1] < 1e-12:
        raise DegenerateError(f"sigma_{k} = {s[k - 1]:.3e}; estimate has rank < {k}")
    A_hat = U[:, :k].T.copy()
    for row in A_hat:
        nz = np.flatnonzero(np.abs(row) > 1e-14)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return SubspaceEstimate(A_hat, s[:k].copy())


def subspace_alignment(A, A_hat):
    """(1/k) ||A A_hat^T||_F^2 for row-orthonormal A and A_hat."""
    A = np.atleast_2d(A)
    A_hat = np.atleast_2d(getattr(A_hat, "A_hat", A_hat))
    if A.shape != A_hat.shape:
        raise ShapeError(f"shapes differ: {A.shape} vs {A_hat.shape}")
    return float(np.sum((A @ A_hat.T) ** 2) / A.shape[0])


def projection_residual(A, A_hat):
    """||A - A A_hat^T A_hat||_F^2, which equals k - ||A A_hat^T||_F^2."""
    return float(np.sum((A - A @ A_hat.T @ A_hat) ** 2))


def choose_lambda(m_x, m_phi, d, k, c2, epsilon, kappa1, sigma=0.0, gamma=3.2):
    """Dantzig radius covering the finite-difference and Gaussian noise.

    deterministic: c2 eps d m_x k^2 sqrt(1 + kappa1) / (2 sqrt(m_phi))
    gaussian:      (2 gamma sigma / eps) sqrt(2 m (1 + kappa1) m_x), m = max(m_phi, m_x)
    """
    if not 0 < kappa1 < 1:
        raise ArgumentError("kappa1 must lie in (0, 1)")
    lam = c2 * epsilon * d * m_x * k ** 2 * math.sqrt(1 + kappa1) / (2 * math.sqrt(m_phi))
    if sigma > 0:
        if not gamma > 2 * math.sqrt(math.log(12)):
            raise ArgumentError("gamma must exceed 2 sqrt(log 12)")
        m = max(m_phi, m_x)
        lam += 2 * gamma * sigma / epsilon * math.sqrt(2 * m * (1 + kappa1) * m_x)
    return lam


def rank_k_error_bound(c0, k, lam):
    """||X - X_hat^(k)||_F^2 <= 4 c0 k lam^2 (twice the Dantzig error, squared)."""
    return 4.0 * c0 * k * lam ** 2


def calibrate_c0(errors_sq, k, lams):
    """Smallest C0 consistent with observed ||X_hat - X||_F^2 <= C0 k lam^2."""
    errors_sq, lams = np.asarray(errors_sq, float), np.asarray(lams, float)
    return float(np.max(errors_sq / (k * lams ** 2)))
