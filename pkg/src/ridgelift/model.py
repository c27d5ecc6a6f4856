"""Ground-truth multi-ridge models f(x) = g(Ax + b) and their point oracles.

Link functions work on batches: ``value`` maps an (n, k) array of ridge
coordinates to (n,), ``gradient`` to (n, k) and ``hessian`` to (n, k, k).
"""

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ArgumentError, ConfigError, DomainError, ShapeError
from .textio import format_header, format_matrix, parse_header, parse_matrix, _chain

DOMAIN_SLACK = 1e-9


def _as_rows(Y, k):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(1, -1) if k > 1 or Y.size == 1 else Y.reshape(-1, 1)
    if Y.shape[1] != k:
        raise ShapeError(f"expected ridge coordinates of width {k}, got {Y.shape}")
    return Y


def uniform_ball(n, k, radius, rng):
    """``n`` points uniform in the k-dimensional ball of given radius."""
    U = rng.standard_normal((n, k))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / k)
    return U * r[:, None]


def uniform_sphere(n, d, rng):
    U = rng.standard_normal((n, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return U


class LinkFunction:
    """Base class for the low-dimensional profile g: R^k -> R."""

    kind = "custom"
    k = 1
    c2_is_estimate = False

    def value(self, Y):
        raise NotImplementedError

    def gradient(self, Y):
        raise NotImplementedError

    def hessian(self, Y):
        raise NotImplementedError

    def c2(self, radius=1.0):
        """Uniform bound on all partial derivatives of order <= 2 on B(radius)."""
        raise NotImplementedError

    def params(self):
        return {}


class Logistic(LinkFunction):
    """g(y) = 1 / (1 + exp(-y)), k = 1."""

    kind = "logistic"
    k = 1

    def value(self, Y):
        return expit(_as_rows(Y, 1)[:, 0])

    def gradient(self, Y):
        s = expit(_as_rows(Y, 1))
        return s * (1.0 - s)

    def hessian(self, Y):
        s = expit(_as_rows(Y, 1))
        return (s * (1.0 - s) * (1.0 - 2.0 * s))[:, :, None]

    def c2(self, radius=1.0):
        # |g| < 1, |g'| <= 1/4, |g''| <= 1/(6 sqrt 3)
        return 1.0


class SumOfGaussians(LinkFunction):
    """g(y) = sum_i N(y_i + b_i; 0, sigma_i^2), one Gaussian atom per ridge direction."""

    kind = "sum_gaussians"

    def __init__(self, sigmas, offsets=None):
        self.sigmas = np.asarray(sigmas, dtype=float).ravel()
        if np.any(self.sigmas <= 0):
            raise ArgumentError("Gaussian widths must be positive")
        self.k = self.sigmas.size
        self.offsets = (np.zeros(self.k) if offsets is None
                        else np.asarray(offsets, dtype=float).ravel())
        if self.offsets.size != self.k:
            raise ShapeError("need one offset per Gaussian atom")

    def _atoms(self, Y):
        T = _as_rows(Y, self.k) + self.offsets
        s2 = self.sigmas ** 2
        G = np.exp(-0.5 * T ** 2 / s2) / np.sqrt(2.0 * np.pi * s2)
        return T, s2, G

    def value(self, Y):
        return self._atoms(Y)[2].sum(axis=1)

    def gradient(self, Y):
        T, s2, G = self._atoms(Y)
        return -T / s2 * G

    def hessian(self, Y):
        T, s2, G = self._atoms(Y)
        diag = (T ** 2 / s2 ** 2 - 1.0 / s2) * G
        H = np.zeros(diag.shape + (self.k,))
        idx = np.arange(self.k)
        H[:, idx, idx] = diag
        return H

    def c2(self, radius=1.0):
        peak = 1.0 / np.sqrt(2.0 * np.pi * self.sigmas ** 2)
        d1 = peak * np.exp(-0.5) / self.sigmas
        d2 = peak / self.sigmas ** 2
        return float(max(peak.sum(), d1.max(), d2.max()))

    def params(self):
        return {"sigmas": self.sigmas, "offsets": self.offsets}


class QuadraticForm(LinkFunction):
    """g(y) = ||y - b||^2."""

    kind = "quadratic"

    def __init__(self, offset):
        self.offset = np.asarray(offset, dtype=float).ravel()
        self.k = self.offset.size

    def value(self, Y):
        return np.sum((_as_rows(Y, self.k) - self.offset) ** 2, axis=1)

    def gradient(self, Y):
        return 2.0 * (_as_rows(Y, self.k) - self.offset)

    def hessian(self, Y):
        n = _as_rows(Y, self.k).shape[0]
        return np.broadcast_to(2.0 * np.eye(self.k), (n, self.k, self.k)).copy()

    def c2(self, radius=1.0):
        reach = radius + np.linalg.norm(self.offset)
        return float(max(2.0, 2.0 * reach, reach ** 2))

    def params(self):
        return {"offset": self.offset}


class Linear(LinkFunction):
    """g(y) = c^T y; finite differences of it are exact."""

    kind = "linear"

    def __init__(self, coef):
        self.coef = np.asarray(coef, dtype=float).ravel()
        self.k = self.coef.size

    def value(self, Y):
        return _as_rows(Y, self.k) @ self.coef

    def gradient(self, Y):
        n = _as_rows(Y, self.k).shape[0]
        return np.broadcast_to(self.coef, (n, self.k)).copy()

    def hessian(self, Y):
        n = _as_rows(Y, self.k).shape[0]
        return np.zeros((n, self.k, self.k))

    def c2(self, radius=1.0):
        return float(max(np.abs(self.coef).max(), radius * np.linalg.norm(self.coef)))

    def params(self):
        return {"coef": self.coef}


class Custom(LinkFunction):
    """User-supplied link; all three callbacks take an (n, k) array.

    No derivatives are computed internally, so ``gradient`` and ``hessian``
    must be analytic. ``c2`` is estimated by random probing and flagged as
    such.
    """

    kind = "custom"
    c2_is_estimate = True

    def __init__(self, k, value, gradient, hessian, probes=4096, seed=0):
        self.k = int(k)
        self._value, self._gradient, self._hessian = value, gradient, hessian
        self._probes = probes
        self._seed = seed

    def value(self, Y):
        return np.asarray(self._value(_as_rows(Y, self.k)), dtype=float).reshape(-1)

    def gradient(self, Y):
        Y = _as_rows(Y, self.k)
        return np.asarray(self._gradient(Y), dtype=float).reshape(Y.shape[0], self.k)

    def hessian(self, Y):
        Y = _as_rows(Y, self.k)
        return np.asarray(self._hessian(Y), dtype=float).reshape(Y.shape[0], self.k, self.k)

    def c2(self, radius=1.0):
        rng = np.random.default_rng(self._seed)
        Y = uniform_ball(self._probes, self.k, radius, rng)
        peak = max(np.abs(self.value(Y)).max(), np.abs(self.gradient(Y)).max(),
                   np.abs(self.hessian(Y)).max())
        return float(1.1 * peak)


@dataclass(frozen=True)
class RidgeModel:
    """f(x) = g(Ax + b) with row-orthonormal A (k x d)."""

    A: np.ndarray
    link: LinkFunction
    b: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", A)
        k, d = A.shape
        if k > d:
            raise ArgumentError(f"need k <= d, got k={k}, d={d}")
        if self.link.k != k:
            raise ShapeError(f"link expects k={self.link.k}, A has {k} rows")
        if np.linalg.norm(A @ A.T - np.eye(k)) > 1e-10:
            raise ArgumentError("A must have orthonormal rows")
        if self.b is not None:
            b = np.asarray(self.b, dtype=float).ravel()
            if b.size != k:
                raise ShapeError("offset b must have length k")
            object.__setattr__(self, "b", b)

    @property
    def k(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    def ridge(self, X):
        Y = np.atleast_2d(X) @ self.A.T
        return Y if self.b is None else Y + self.b

    def value(self, X):
        """Noise-free f at one point (returns float) or a batch of rows."""
        single = np.ndim(X) == 1
        out = self.link.value(self.ridge(X))
        return float(out[0]) if single else out

    def gradient(self, X):
        single = np.ndim(X) == 1
        out = self.link.gradient(self.ridge(X)) @ self.A
        return out[0] if single else out

    def hessian(self, x):
        H = self.link.hessian(self.ridge(x))[0]
        return self.A.T @ H @ self.A

    def c2(self, radius=1.0):
        reach = radius + (0.0 if self.b is None else np.linalg.norm(self.b))
        return self.link.c2(reach)


def _check_domain(X, radius):
    if np.isfinite(radius):
        norms = np.linalg.norm(np.atleast_2d(X), axis=1)
        worst = norms.max() if norms.size else 0.0
        if worst > radius + DOMAIN_SLACK:
            raise DomainError(f"query norm {worst:.6g} exceeds domain radius {radius:.6g}")


def gradient(model, x, radius=np.inf):
    """Exact A^T grad g(Ax + b). Diagnostic path only; the learner never calls it."""
    _check_domain(x, radius)
    return model.gradient(x)


def gradient_matrix(model, centers):
    """The d x m_x matrix X whose column j is grad f(centers[j])."""
    return model.gradient(np.atleast_2d(centers)).T


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian noise plus sparse Gaussian corruption per oracle call."""

    gaussian_sigma: float = 0.0
    sparse_prob: float = 0.0
    sparse_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma < 0 or self.sparse_sigma < 0:
            raise ArgumentError("noise scales must be nonnegative")
        if not 0.0 <= self.sparse_prob < 1.0:
            raise ArgumentError("sparse_prob must lie in [0, 1)")

    @property
    def silent(self):
        return self.gaussian_sigma == 0 and self.sparse_prob == 0

    def for_worker(self, worker_id):
        """Independent stream for a concurrent worker."""
        return replace(self, seed=int(self.seed) ^ int(worker_id))


class Oracle:
    """Counted, possibly noisy point evaluations of a model on B(radius).

    Noise for a batch of n queries is drawn as n Gaussians, then (when
    corruption is on) n uniforms and n corruption Gaussians, so outputs are
    a pure function of the seed and the query sequence.
    """

    def __init__(self, model, noise=None, radius=np.inf):
        self.model = model
        self.noise = noise or NoiseModel()
        self.radius = float(radius)
        self.calls = 0
        self.corrupted = 0
        self._rng = np.random.default_rng(self.noise.seed)
        self.last_gaussian = None
        self.last_sparse = None

    def __call__(self, x):
        return float(self.batch(np.asarray(x, dtype=float).reshape(1, -1))[0])

    def batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.model.d:
            raise ShapeError(f"query dimension {X.shape[1]} != d={self.model.d}")
        _check_domain(X, self.radius)
        n = X.shape[0]
        vals = self.model.link.value(self.model.ridge(X))
        self.calls += n
        z = np.zeros(n)
        s = np.zeros(n)
        nz = self.noise
        if not nz.silent:
            if nz.gaussian_sigma > 0:
                z = nz.gaussian_sigma * self._rng.standard_normal(n)
            if nz.sparse_prob > 0:
                hit = self._rng.random(n) < nz.sparse_prob
                s = np.where(hit, nz.sparse_sigma * self._rng.standard_normal(n), 0.0)
                self.corrupted += int(hit.sum())
            vals = vals + z + s
        self.last_gaussian, self.last_sparse = z, s
        return vals


def evaluate_oracle(oracle, x):
    return oracle(x)


def random_row_orthonormal(d, k, seed=None):
    """Haar-distributed k x d matrix with orthonormal rows."""
    if k < 1 or k > d:
        raise ArgumentError(f"need 1 <= k <= d, got k={k}, d={d}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((d, k)))
    Q *= np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q.T.copy()


def random_link(kind, k, rng, **params):
    """Built-in link with the randomized parameters used by the experiments.

    sum_gaussians: widths uniform on [0.1, 0.5], offsets uniform on the
    sphere scaled by ``offset_scale`` (0.2). quadratic: offset uniform on
    the unit sphere.
    """
    if kind == "logistic":
        if k != 1:
            raise ArgumentError("logistic link needs k = 1")
        return Logistic()
    if kind == "sum_gaussians":
        lo, hi = params.get("sigma_range", (0.1, 0.5))
        sigmas = params.get("sigmas")
        if sigmas is None:
            sigmas = rng.uniform(lo, hi, size=k)
        offsets = params.get("offsets")
        if offsets is None:
            offsets = params.get("offset_scale", 0.2) * uniform_sphere(1, k, rng)[0]
        return SumOfGaussians(sigmas, offsets)
    if kind == "quadratic":
        offset = params.get("offset")
        if offset is None:
            offset = params.get("offset_scale", 1.0) * uniform_sphere(1, k, rng)[0]
        return QuadraticForm(offset)
    if kind == "linear":
        coef = params.get("coef")
        if coef is None:
            coef = uniform_sphere(1, k, rng)[0]
        return Linear(coef)
    raise ConfigError(f"unknown link kind {kind!r}")


def random_model(kind, d, k, seed, **params):
    """Haar A plus a randomized built-in link, all from one seed."""
    ss = np.random.SeedSequence(seed)
    a_seed, link_seed = ss.spawn(2)
    A = random_row_orthonormal(d, k, np.random.default_rng(a_seed))
    link = random_link(kind, k, np.random.default_rng(link_seed), **params)
    return RidgeModel(A, link)


def _vec(s):
    return np.array([float(v) for v in s.replace(",", " ").split()])


def _fmt_vec(v):
    return ", ".join("%.17g" % x for x in np.ravel(v))


def model_from_section(section):
    """Build a model from ``kind, d, k, seed`` plus optional link parameters."""
    try:
        kind = section["kind"]
        d, k = int(section["d"]), int(section["k"])
        seed = int(section.get("seed", 0))
    except KeyError as exc:
        raise ConfigError(f"model section missing {exc}") from None
    params = {}
    for key in ("sigmas", "offsets", "offset", "coef"):
        if key in section:
            params[key] = _vec(section[key])
    if "offset_scale" in section:
        params["offset_scale"] = float(section["offset_scale"])
    return random_model(kind, d, k, seed, **params)


def save_model(path, model, seed=None):
    header = {"kind": model.link.kind, "d": model.d, "k": model.k}
    if seed is not None:
        header["seed"] = seed
    for key, val in model.link.params().items():
        header[key] = _fmt_vec(val)
    if model.b is not None:
        header["b"] = _fmt_vec(model.b)
    Path(path).write_text(format_header(header) + format_matrix(model.A))


def load_model(path):
    lines = iter(Path(path).read_text().splitlines())
    header, first = parse_header(lines)
    A = parse_matrix(_chain(first, lines))
    kind = header["kind"]
    k = int(header["k"])
    if kind == "logistic":
        link = Logistic()
    elif kind == "sum_gaussians":
        link = SumOfGaussians(_vec(header["sigmas"]), _vec(header["offsets"]))
    elif kind == "quadratic":
        link = QuadraticForm(_vec(header["offset"]))
    elif kind == "linear":
        link = Linear(_vec(header["coef"]))
    else:
        raise ConfigError(f"cannot load link kind {kind!r}")
    if link.k != k:
        raise ConfigError("link parameters disagree with k")
    b = _vec(header["b"]) if "b" in header else None
    return RidgeModel(A, link, b)
