"""Sampling centers, Rademacher directions and the measurement operator.

The unknown is the d x m_x matrix X whose j-th column is grad f(xi_j).
Dense measurements are y_i = sum_j <phi_ij, X[:, j]> = <Phi_i, X>;
subset-selection measurements keep one term <phi_ij, X[:, j]> per sampled
pair (i, j).

Directions are held as a packed sign bit-stream (1 bit per entry) and
expanded to floats on demand, optionally cached as a dense matrix.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, ConfigError, ShapeError
from .model import Oracle, uniform_sphere
from .textio import format_header, format_matrix, parse_header, parse_matrix, _chain

DENSE, SUBSET = "dense", "subset"
# entries per float block when streaming directions
_BLOCK = 1 << 21
# dense operators up to this many entries are cached as a float64 matrix
MATERIALIZE_LIMIT = 48_000_000


def vec(X):
    """Stack columns of X (column j occupies entries j*d .. (j+1)*d - 1)."""
    return np.asarray(X, dtype=float).ravel(order="F")


def unvec(v, d, m_x):
    return np.reshape(v, (d, m_x), order="F")


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    d: int
    k: int
    m_x: int
    m_phi: int
    epsilon: float
    seed: int
    mode: str
    fill: float
    centers: np.ndarray
    sign_bits: np.ndarray
    omega: np.ndarray = None

    @property
    def enlarged_radius(self):
        """eps_bar = eps * sqrt(d / m_phi); every query lies in B(1 + eps_bar)."""
        return self.epsilon * np.sqrt(self.d / self.m_phi)

    @property
    def n_measurements(self):
        return self.m_phi if self.mode == DENSE else len(self.omega)

    @property
    def budget(self):
        """Oracle calls needed to measure this plan (base values reused)."""
        return self.m_x + self.m_phi * self.m_x if self.mode == DENSE \
            else self.m_x + len(self.omega)

    def signs(self, i0=0, i1=None):
        """Rows i0:i1 of the direction matrix as +-1 floats, shape (rows, m_x*d)."""
        i1 = self.m_phi if i1 is None else i1
        bits = np.unpackbits(self.sign_bits[i0:i1], axis=1, count=self.m_x * self.d)
        return bits.astype(float) * 2.0 - 1.0

    def direction_rows(self, i0=0, i1=None):
        return self.signs(i0, i1) / np.sqrt(self.m_phi)

    def directions(self):
        """Full tensor, shape (m_phi, m_x, d); entry [i, j] is phi_ij."""
        return self.direction_rows().reshape(self.m_phi, self.m_x, self.d)

    def summary(self):
        return {"d": self.d, "k": self.k, "m_x": self.m_x, "m_phi": self.m_phi,
                "epsilon": float(self.epsilon), "seed": self.seed,
                "mode": self.mode, "fill": float(self.fill)}


def build_plan(d, k, m_x, m_phi, epsilon, mode=DENSE, seed=0, fill=0.9):
    """Random centers on the sphere and Rademacher directions, all from ``seed``."""
    for name, val in (("d", d), ("k", k), ("m_x", m_x), ("m_phi", m_phi)):
        if int(val) < 1:
            raise ArgumentError(f"{name} must be positive, got {val}")
    if not epsilon > 0:
        raise ArgumentError(f"epsilon must be positive, got {epsilon}")
    if mode not in (DENSE, SUBSET):
        raise ArgumentError(f"unknown sampling mode {mode!r}")
    d, k, m_x, m_phi = int(d), int(k), int(m_x), int(m_phi)
    c_seed, s_seed, o_seed = np.random.SeedSequence(seed).spawn(3)
    centers = uniform_sphere(m_x, d, np.random.default_rng(c_seed))
    nbytes = -(-(m_x * d) // 8)
    bits = np.random.default_rng(s_seed).integers(0, 256, size=(m_phi, nbytes),
                                                  dtype=np.uint8)
    omega = None
    if mode == SUBSET:
        if not 0.0 < fill <= 1.0:
            raise ArgumentError(f"fill fraction must lie in (0, 1], got {fill}")
        total = m_phi * m_x
        count = max(1, int(round(fill * total)))
        flat = np.sort(np.random.default_rng(o_seed).choice(total, size=count,
                                                            replace=False))
        omega = np.column_stack(np.divmod(flat, m_x))
    return SamplingPlan(d, k, m_x, m_phi, float(epsilon), seed, mode, float(fill),
                        centers, bits, omega)


class LinearOperator:
    """A linear map from d x m_x matrices to R^n, with its adjoint."""

    d = m_x = n = 0

    @property
    def shape(self):
        return (self.d, self.m_x)

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape != self.shape:
            raise ShapeError(f"expected matrix of shape {self.shape}, got {X.shape}")
        return X

    def _check_vec(self, v):
        v = np.asarray(v, dtype=float).ravel()
        if v.size != self.n:
            raise ShapeError(f"expected vector of length {self.n}, got {v.size}")
        return v

    def apply(self, X):
        raise NotImplementedError

    def adjoint(self, v):
        raise NotImplementedError

    def matrix(self):
        """Explicit n x (d*m_x) matrix acting on vec(X)."""
        raise NotImplementedError


class MatrixOperator(LinearOperator):
    """Operator given by an explicit n x (d*m_x) matrix."""

    def __init__(self, M, d, m_x):
        self.M = M
        self.d, self.m_x, self.n = int(d), int(m_x), M.shape[0]
        if M.shape[1] != self.d * self.m_x:
            raise ShapeError("matrix width must equal d * m_x")

    def apply(self, X):
        return self.M @ vec(self._check(X))

    def adjoint(self, v):
        return unvec(self.M.T @ self._check_vec(v), self.d, self.m_x)

    def matrix(self):
        return self.M.toarray() if sp.issparse(self.M) else np.array(self.M)


class DenseOperator(LinearOperator):
    """[Phi(X)]_i = <Phi_i, X> for a dense plan.

    With ``materialize`` the float matrix is built once; otherwise rows are
    expanded from the bit-stream block by block on every call.
    """

    def __init__(self, plan, materialize=None):
        if plan.mode != DENSE:
            raise ArgumentError("DenseOperator needs a dense plan")
        self.plan = plan
        self.d, self.m_x, self.n = plan.d, plan.m_x, plan.m_phi
        if materialize is None:
            materialize = plan.m_phi * plan.m_x * plan.d <= MATERIALIZE_LIMIT
        self._M = plan.direction_rows() if materialize else None
        self._rows = max(1, _BLOCK // (plan.m_x * plan.d))

    def _blocks(self):
        for i0 in range(0, self.n, self._rows):
            i1 = min(self.n, i0 + self._rows)
            yield i0, i1, self.plan.direction_rows(i0, i1)

    def apply(self, X):
        x = vec(self._check(X))
        if self._M is not None:
            return self._M @ x
        out = np.empty(self.n)
        for i0, i1, B in self._blocks():
            out[i0:i1] = B @ x
        return out

    def adjoint(self, v):
        v = self._check_vec(v)
        if self._M is not None:
            return unvec(self._M.T @ v, self.d, self.m_x)
        acc = np.zeros(self.d * self.m_x)
        for i0, i1, B in self._blocks():
            acc += B.T @ v[i0:i1]
        return unvec(acc, self.d, self.m_x)

    def matrix(self):
        return np.array(self._M) if self._M is not None else self.plan.direction_rows()


class SubsetOperator(MatrixOperator):
    """One measurement <phi_ij, X[:, j]> per sampled pair (i, j) in omega."""

    def __init__(self, plan):
        if plan.mode != SUBSET:
            raise ArgumentError("SubsetOperator needs a subset-selection plan")
        self.plan = plan
        d, m_x = plan.d, plan.m_x
        data = [phis for _, _, _, phis in _subset_directions(plan)]
        phis = np.concatenate(data) if data else np.empty((0, d))
        j = plan.omega[:, 1]
        n = len(plan.omega)
        indptr = np.arange(n + 1) * d
        indices = (j[:, None] * d + np.arange(d)).ravel()
        M = sp.csr_matrix((phis.ravel(), indices, indptr), shape=(n, d * m_x))
        super().__init__(M, d, m_x)


def _subset_directions(plan):
    """Yield phi_ij for the sampled pairs, grouped in blocks of direction rows."""
    rows_per = max(1, _BLOCK // (plan.m_x * plan.d))
    i_all = plan.omega[:, 0]
    for i0 in range(0, plan.m_phi, rows_per):
        i1 = min(plan.m_phi, i0 + rows_per)
        sel = np.nonzero((i_all >= i0) & (i_all < i1))[0]
        if sel.size == 0:
            continue
        block = plan.direction_rows(i0, i1).reshape(i1 - i0, plan.m_x, plan.d)
        yield i0, i1, sel, block[plan.omega[sel, 0] - i0, plan.omega[sel, 1]]


def operator_for(plan, materialize=None):
    return DenseOperator(plan, materialize) if plan.mode == DENSE else SubsetOperator(plan)


def apply_operator(op, X):
    return op.apply(X)


def adjoint_operator(op, v):
    return op.adjoint(v)


@dataclass(eq=False)
class MeasurementSet:
    """Finite-difference measurements y and the noise realized inside them.

    ``gaussian`` and ``sparse`` are the measurement-level contributions of
    oracle noise, so y - gaussian - sparse is the noiseless measurement.
    """

    y: np.ndarray
    plan: SamplingPlan
    oracle_calls: int
    gaussian: np.ndarray
    sparse: np.ndarray

    @property
    def noiseless(self):
        return self.y - self.gaussian - self.sparse


def measure(model, plan, noise=None, oracle=None):
    """Query the oracle at xi_j and xi_j + eps*phi_ij and form the measurements.

    Each base value f(xi_j) is queried once and reused for every direction.
    """
    if model.d != plan.d:
        raise ShapeError(f"model has d={model.d}, plan has d={plan.d}")
    if oracle is None:
        oracle = Oracle(model, noise, radius=1.0 + plan.enlarged_radius)
    start = oracle.calls
    eps, C = plan.epsilon, plan.centers
    base = oracle.batch(C)
    base_z, base_s = oracle.last_gaussian, oracle.last_sparse
    n = plan.n_measurements
    y, gz, gs = np.empty(n), np.empty(n), np.empty(n)
    if plan.mode == DENSE:
        rows = max(1, _BLOCK // (plan.m_x * plan.d))
        for i0 in range(0, plan.m_phi, rows):
            i1 = min(plan.m_phi, i0 + rows)
            phis = plan.direction_rows(i0, i1).reshape(i1 - i0, plan.m_x, plan.d)
            pts = (C[None] + eps * phis).reshape(-1, plan.d)
            vals = oracle.batch(pts).reshape(i1 - i0, plan.m_x)
            y[i0:i1] = ((vals - base) / eps).sum(axis=1)
            gz[i0:i1] = ((oracle.last_gaussian.reshape(vals.shape) - base_z) / eps).sum(axis=1)
            gs[i0:i1] = ((oracle.last_sparse.reshape(vals.shape) - base_s) / eps).sum(axis=1)
    else:
        for _, _, sel, phis in _subset_directions(plan):
            j = plan.omega[sel, 1]
            vals = oracle.batch(C[j] + eps * phis)
            y[sel] = (vals - base[j]) / eps
            gz[sel] = (oracle.last_gaussian - base_z[j]) / eps
            gs[sel] = (oracle.last_sparse - base_s[j]) / eps
    return MeasurementSet(y, plan, oracle.calls - start, gz, gs)


@dataclass(frozen=True, eq=False)
class RipDiagnostic:
    rank: int
    ratios: np.ndarray

    @property
    def kappa_hat(self):
        """Largest observed deviation |ratio - 1|."""
        return float(np.max(np.abs(self.ratios - 1.0)))

    def histogram(self, bins=10):
        return np.histogram(self.ratios, bins=bins)


def rip_diagnostic(op, rank, trials=200, seed=0):
    """Empirical ||Phi(X)||^2 / ||X||_F^2 over random rank-r matrices."""
    if rank < 1:
        raise ArgumentError("rank must be at least 1")
    if trials < 1:
        raise ArgumentError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    d, m_x = op.shape
    ratios = np.empty(trials)
    for t in range(trials):
        X = rng.standard_normal((d, rank)) @ rng.standard_normal((rank, m_x))
        ratios[t] = np.sum(op.apply(X) ** 2) / np.sum(X ** 2)
    return RipDiagnostic(int(rank), ratios)


def save_plan(path, plan):
    """Header block plus the centers matrix; directions are regenerated from the seed."""
    text = format_header(plan.summary()) + format_matrix(plan.centers)
    Path(path).write_text(text)


def load_plan(path):
    lines = iter(Path(path).read_text().splitlines())
    h, first = parse_header(lines)
    centers = parse_matrix(_chain(first, lines))
    plan = build_plan(int(h["d"]), int(h["k"]), int(h["m_x"]), int(h["m_phi"]),
                      float(h["epsilon"]), h["mode"], int(h["seed"]), float(h["fill"]))
    if not np.array_equal(plan.centers, centers):
        raise ConfigError("stored centers do not match the regenerated plan")
    return plan


def save_measurements(path, y):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "y"])
        for i, v in enumerate(np.ravel(y)):
            w.writerow([i, "%.17g" % v])


def load_measurements(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    y = np.empty(len(rows))
    for r in rows:
        y[int(r["index"])] = float(r["y"])
    return y
