"""Function estimate f_hat(x) = g_hat(A_hat x) from grid samples of f(A_hat^T y).

The profile g_hat is sampled on the tensor grid h * Z^k clipped to the
cube [-w, w]^k (one extra node per side so the cube is covered) and
interpolated multilinearly, which is exact on affine profiles and has
O(h^2) sup error on C^2 profiles.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ArgumentError, BudgetError, DomainError, ShapeError
from .model import DOMAIN_SLACK, uniform_ball
from .textio import _chain, format_header, format_matrix, parse_header, parse_matrix

GRID_CAP = 10_000_000
_QUERY_BLOCK = 1 << 16


def half_width(eps_bar=0.0, offset_bound=0.0):
    """Grid half-width: 1 + eps_bar, or 2 + eps_bar when an offset is present."""
    return (2.0 if offset_bound > 0 else 1.0) + eps_bar


def grid_nodes(h, w):
    """1-D node set {j h : |j| <= ceil(w / h)}."""
    n = math.ceil(w / h - 1e-12)
    return h * np.arange(-n, n + 1, dtype=float)


def grid_size(k, h, w):
    return len(grid_nodes(h, w)) ** k


def query_radius(k, h, w):
    """Largest norm of a grid node, i.e. the oracle domain the build needs."""
    return math.sqrt(k) * float(grid_nodes(h, w)[-1])


@dataclass(frozen=True, eq=False)
class FunctionEstimate:
    A_hat: np.ndarray
    h: float
    w: float
    samples: np.ndarray
    eps_bar: float = 0.0
    offset_bound: float = 0.0
    oracle_calls: int = 0

    def __post_init__(self):
        nodes = grid_nodes(self.h, self.w)
        axes = (nodes,) * self.k
        interp = RegularGridInterpolator(axes, self.samples, method="linear")
        object.__setattr__(self, "_interp", interp)

    @property
    def k(self):
        return self.A_hat.shape[0]

    @property
    def d(self):
        return self.A_hat.shape[1]

    @property
    def nodes(self):
        return grid_nodes(self.h, self.w)

    @property
    def domain_radius(self):
        return 1.0 + self.eps_bar

    def profile(self, Y):
        """g_hat_h at ridge coordinates Y, shape (n, k)."""
        return self._interp(np.atleast_2d(Y))

    def __call__(self, X):
        return evaluate(self, X)


def build_estimate(oracle, A_hat, h, offset_bound=0.0, eps_bar=0.0, cap=GRID_CAP):
    """Sample g_hat(y) = f(A_hat^T y) on the grid and wrap the interpolant.

    Exactly one oracle query per grid node; the count depends on (k, h, w)
    and not on d.
    """
    A_hat = np.atleast_2d(np.asarray(getattr(A_hat, "A_hat", A_hat), dtype=float))
    if not h > 0:
        raise ArgumentError("grid step h must be positive")
    if offset_bound < 0 or eps_bar < 0:
        raise ArgumentError("offset bound and eps_bar must be nonnegative")
    k = A_hat.shape[0]
    w = half_width(eps_bar, offset_bound)
    nodes = grid_nodes(h, w)
    total = len(nodes) ** k
    if total > cap:
        raise BudgetError(f"grid has {total} nodes, cap is {cap}")
    # C-order node enumeration matches samples.reshape((n,) * k)
    mesh = np.stack(np.meshgrid(*([nodes] * k), indexing="ij"), axis=-1).reshape(-1, k)
    values = np.empty(total)
    before = getattr(oracle, "calls", 0)
    for s in range(0, total, _QUERY_BLOCK):
        values[s:s + _QUERY_BLOCK] = oracle.batch(mesh[s:s + _QUERY_BLOCK] @ A_hat)
    calls = getattr(oracle, "calls", before + total) - before
    return FunctionEstimate(A_hat, float(h), w, values.reshape((len(nodes),) * k),
                            float(eps_bar), float(offset_bound), calls)


def evaluate(estimate, X):
    """f_hat at one point (float) or a batch of rows inside B(1 + eps_bar)."""
    single = np.ndim(X) == 1
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != estimate.d:
        raise ShapeError(f"point dimension {X.shape[1]} != d={estimate.d}")
    worst = np.linalg.norm(X, axis=1).max()
    if worst > estimate.domain_radius + DOMAIN_SLACK:
        raise DomainError(f"point norm {worst:.6g} exceeds {estimate.domain_radius:.6g}")
    Y = np.clip(X @ estimate.A_hat.T, -estimate.w, estimate.w)
    out = estimate.profile(Y)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class ErrorProbe:
    """Max |f - f_hat| over random probes; a lower bound on the sup norm."""

    sup_error: float
    argmax: np.ndarray
    n_probes: int


def uniform_error(estimate, model, n_probes, seed=0):
    """Probe |f(x) - f_hat(x)| at points uniform in the unit ball."""
    if n_probes < 1:
        raise ArgumentError("need at least one probe")
    rng = np.random.default_rng(seed)
    X = uniform_ball(n_probes, model.d, 1.0, rng)
    f_hat = estimate(X) if callable(estimate) else evaluate(estimate, X)
    err = np.abs(model.value(X) - f_hat)
    i = int(np.argmax(err))
    return ErrorProbe(float(err[i]), X[i].copy(), int(n_probes))


def subspace_error_bound(c2, k, alignment, eps_bar=0.0):
    """C2 sqrt(k) ||A - A A_hat^T A_hat||_F (1 + eps_bar).

    ``alignment`` is (1/k)||A A_hat^T||_F^2, so the Frobenius factor is
    sqrt(k - k * alignment).
    """
    return c2 * math.sqrt(k) * math.sqrt(max(k - k * alignment, 0.0)) * (1.0 + eps_bar)


def save_estimate(path, estimate):
    """Header (k, h, w, eps_bar, offset_bound), then A_hat, then the samples.

    Samples are stored as an (n, n^(k-1)) matrix in C order.
    """
    n = len(estimate.nodes)
    head = format_header({"k": estimate.k, "h": repr(estimate.h), "w": repr(estimate.w),
                          "eps_bar": repr(estimate.eps_bar),
                          "offset_bound": repr(estimate.offset_bound)})
    body = format_matrix(estimate.A_hat) + format_matrix(estimate.samples.reshape(n, -1))
    Path(path).write_text(head + body)


def load_estimate(path):
    lines = iter(Path(path).read_text().splitlines())
    header, first = parse_header(lines)
    lines = _chain(first, lines)
    A_hat = parse_matrix(lines)
    flat = parse_matrix(lines)
    k, h = int(header["k"]), float(header["h"])
    n = flat.shape[0]
    return FunctionEstimate(A_hat, h, float(header["w"]), flat.reshape((n,) * k),
                            float(header["eps_bar"]), float(header["offset_bound"]))
