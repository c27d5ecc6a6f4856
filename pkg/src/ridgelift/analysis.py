"""Closed-form sampling and error bounds, conditioning estimates and a planner.

Everything here is a pure function of its inputs except the Monte Carlo
alpha estimate, which owns a seeded stream.
"""

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import integrate
from scipy.special import betainc, gammaln

from .errors import ArgumentError, DomainError, InfeasibleError
from .recovery import choose_lambda

KAPPA_MAX = math.sqrt(2.0) - 1.0
_EXP_MAX = 700.0


def q(kappa):
    """Concentration exponent (kappa^2 - kappa^3 / 9) / 144."""
    return (kappa ** 2 - kappa ** 3 / 9.0) / 144.0


def u(kappa):
    """Covering exponent log(36 sqrt(2) / kappa)."""
    return math.log(36.0 * math.sqrt(2.0) / kappa)


def _exp(x):
    return math.inf if x > _EXP_MAX else math.exp(x)


def _strict_int_above(x):
    """Smallest integer strictly greater than x."""
    return int(math.floor(x)) + 1


def noise_bound(c2, epsilon, k, m_x, m_phi, d):
    """Upper bound on ||y_noiseless - Phi(X)||_2 from the second-order Taylor term."""
    return c2 * epsilon * k ** 2 * m_x * d / (2.0 * math.sqrt(m_phi))


def tau_squared(c0, c2, k, epsilon, d, m_x, m_phi, kappa):
    """Squared error bound for the rank-k truncated estimate."""
    return c0 * c2 ** 2 * k ** 5 * epsilon ** 2 * d ** 2 * m_x ** 2 * (1 + kappa) / m_phi


def _ratio(rho, m_phi, alpha, kappa, c0, m_x, shrink=1.0):
    return math.sqrt((1 - rho) * m_phi * alpha * shrink / ((1 + kappa) * c0 * m_x))


def epsilon_ceiling(c2, k, d, m_x, m_phi, alpha, rho, kappa, c0, eta=None):
    """Largest step (exclusive) for which the subspace guarantee applies.

    With ``eta`` given, the ceiling that guarantees ||A A_hat^T||_F^2 >= k eta.
    """
    if eta is None:
        lead = math.sqrt(k) + math.sqrt(2.0)
        shrink = 1.0
    else:
        lead = math.sqrt(k * (1 - eta)) + math.sqrt(2.0)
        shrink = 1 - eta
    return _ratio(rho, m_phi, alpha, kappa, c0, m_x, shrink) / (c2 * k ** 2 * d * lead)


def epsilon_ceiling_uniform(delta, c2, k, d, m_x, m_phi, alpha, rho, kappa, c0):
    """Largest step (exclusive) for which ||f - f_hat||_inf <= delta is guaranteed."""
    lead = delta / (c2 * k ** 2.5 * d * (delta + 2 * c2 * math.sqrt(2 * k)))
    return lead * _ratio(rho, m_phi, alpha, kappa, c0, m_x)


def alignment_floor(k, tau_sq, m_x, alpha, rho):
    """Guaranteed lower bound on ||A A_hat^T||_F, or NaN when vacuous."""
    gap = math.sqrt((1 - rho) * m_x * alpha) - math.sqrt(tau_sq)
    if gap <= 0:
        return math.nan
    inner = k - 2 * tau_sq / gap ** 2
    return math.sqrt(inner) if inner > 0 else math.nan


def m_x_min(k, c2, alpha, rho, p1):
    """Smallest integer m_x above 2 k C2^2 log(k / p1) / (alpha rho^2)."""
    return _strict_int_above(2 * k * c2 ** 2 / (alpha * rho ** 2) * math.log(k / p1))


def m_phi_min(k, d, m_x, kappa, p2):
    """Smallest integer m_phi above (log(2/p2) + 4k(d + m_x + 1) u) / q."""
    return _strict_int_above((math.log(2 / p2) + 4 * k * (d + m_x + 1) * u(kappa)) / q(kappa))


def success_probability(k, d, m_x, m_phi, alpha, rho, c2, kappa):
    """Probability lower bound for the subspace and uniform-error guarantees (clipped at 0)."""
    fail = k * math.exp(-m_x * alpha * rho ** 2 / (2 * k * c2 ** 2))
    fail += 2 * _exp(-m_phi * q(kappa) + 4 * k * (d + m_x + 1) * u(kappa))
    return max(0.0, 1.0 - fail)


def _check_ranges(rho, kappa, eta=None, alpha=None, delta=None):
    if not 0 < rho < 1:
        raise ArgumentError(f"rho={rho} must lie in (0, 1)")
    if not 0 < kappa < KAPPA_MAX:
        raise ArgumentError(f"kappa={kappa} must lie in (0, sqrt(2) - 1)")
    if eta is not None and not 0 < eta < 1:
        raise ArgumentError(f"eta={eta} must lie in (0, 1)")
    if alpha is not None and not alpha > 0:
        raise ArgumentError("alpha must be positive")
    if delta is not None and not delta > 0:
        raise ArgumentError("delta must be positive")


@dataclass(frozen=True)
class BoundsInputs:
    d: int
    k: int
    m_x: int
    m_phi: int
    epsilon: float
    c2: float = 1.0
    alpha: float = 1.0 / 16
    rho: float = 0.5
    kappa: float = 0.2
    c0: float = 16.0
    eta: float = 0.99
    delta: float = None
    p1: float = 0.05
    p2: float = 0.05
    sigma: float = 0.0
    gamma: float = 3.2


@dataclass(frozen=True)
class BoundsReport:
    inputs: BoundsInputs
    q: float
    u: float
    noise_bound: float
    adjoint_bound: float
    tau_sq: float
    eps_ceiling: float
    eps_ceiling_eta: float
    eps_ceiling_delta: float
    alignment_floor: float
    alignment_floor_normalized: float
    m_x_min: int
    m_phi_min: int
    success_probability: float
    mphi_below_mxd: bool
    epsilon_admissible: bool

    def rows(self):
        """(name, value) pairs: inputs first, then derived quantities."""
        out = [(f.name, getattr(self.inputs, f.name)) for f in fields(self.inputs)]
        out += [(f.name, getattr(self, f.name)) for f in fields(self) if f.name != "inputs"]
        return out

    def format_text(self):
        rows = [(name, _fmt(val)) for name, val in self.rows()]
        width = max(len(n) for n, _ in rows)
        return "".join(f"{n:<{width}}  {v}\n" for n, v in rows)

    def format_csv(self):
        return "name,value\n" + "".join(f"{n},{_fmt(v)}\n" for n, v in self.rows())


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.15g" % v


def compute_bounds(inputs):
    """Evaluate every closed-form quantity for one parameter set."""
    p = inputs
    _check_ranges(p.rho, p.kappa, p.eta, p.alpha, p.delta)
    if min(p.d, p.k, p.m_x, p.m_phi) < 1 or not p.epsilon > 0:
        raise ArgumentError("sizes must be positive and epsilon > 0")
    if not (0 < p.p1 < 1 and 0 < p.p2 < 1):
        raise ArgumentError("p1, p2 must lie in (0, 1)")
    tau_sq = tau_squared(p.c0, p.c2, p.k, p.epsilon, p.d, p.m_x, p.m_phi, p.kappa)
    ceil = epsilon_ceiling(p.c2, p.k, p.d, p.m_x, p.m_phi, p.alpha, p.rho, p.kappa, p.c0)
    ceil_eta = epsilon_ceiling(p.c2, p.k, p.d, p.m_x, p.m_phi, p.alpha, p.rho, p.kappa,
                               p.c0, p.eta)
    ceil_delta = math.nan
    if p.delta is not None:
        ceil_delta = epsilon_ceiling_uniform(p.delta, p.c2, p.k, p.d, p.m_x, p.m_phi,
                                             p.alpha, p.rho, p.kappa, p.c0)
    floor = alignment_floor(p.k, tau_sq, p.m_x, p.alpha, p.rho)
    return BoundsReport(
        inputs=p,
        q=q(p.kappa),
        u=u(p.kappa),
        noise_bound=noise_bound(p.c2, p.epsilon, p.k, p.m_x, p.m_phi, p.d),
        adjoint_bound=choose_lambda(p.m_x, p.m_phi, p.d, p.k, p.c2, p.epsilon, p.kappa,
                                    p.sigma, p.gamma),
        tau_sq=tau_sq,
        eps_ceiling=ceil,
        eps_ceiling_eta=ceil_eta,
        eps_ceiling_delta=ceil_delta,
        alignment_floor=floor,
        alignment_floor_normalized=floor ** 2 / p.k,
        m_x_min=m_x_min(p.k, p.c2, p.alpha, p.rho, p.p1),
        m_phi_min=m_phi_min(p.k, p.d, p.m_x, p.kappa, p.p2),
        success_probability=success_probability(p.k, p.d, p.m_x, p.m_phi, p.alpha, p.rho,
                                                 p.c2, p.kappa),
        mphi_below_mxd=p.m_phi < p.m_x * p.d,
        epsilon_admissible=p.epsilon < ceil,
    )


@dataclass(frozen=True, eq=False)
class AlphaEstimate:
    alpha_hat: float
    method: str
    H_hat: np.ndarray = None
    n_samples: int = 0
    std_error: float = math.nan
    heuristic: bool = False

    @property
    def spectrum(self):
        if self.H_hat is None:
            return np.array([self.alpha_hat])
        return np.linalg.eigvalsh(self.H_hat)

    @property
    def rel_std_error(self):
        return self.std_error / self.alpha_hat if self.alpha_hat > 0 else math.inf


def ridge_coordinates(n, d, k, rng):
    """Samples of A xi for xi uniform on the unit sphere in R^d, any row-orthonormal A.

    By rotation invariance A xi has the law of the first k coordinates of a
    uniform point, i.e. z / sqrt(|z|^2 + chi2_{d-k}) with z ~ N(0, I_k).
    """
    z = rng.standard_normal((n, k))
    rest = rng.chisquare(d - k, n) if d > k else np.zeros(n)
    return z / np.sqrt(np.sum(z * z, axis=1) + rest)[:, None]


def estimate_alpha_mc(model, n_samples, seed=0, bootstrap=0):
    """alpha_hat = lambda_min of (1/n) sum grad g(A xi) grad g(A xi)^T.

    With ``bootstrap > 0`` the standard error of alpha_hat is estimated
    from that many resamples of the gradient sample.
    """
    k, d = model.k, model.d
    if n_samples < k:
        raise ArgumentError(f"need n_samples >= k = {k}")
    rng = np.random.default_rng(seed)
    Y = ridge_coordinates(n_samples, d, k, rng)
    if model.b is not None:
        Y = Y + model.b
    G = model.link.gradient(Y)
    H = G.T @ G / n_samples
    H = 0.5 * (H + H.T)
    alpha = float(max(np.linalg.eigvalsh(H)[0], 0.0))
    se = math.nan
    if bootstrap > 0:
        boots = np.empty(bootstrap)
        for b in range(bootstrap):
            Gb = G[rng.integers(0, n_samples, n_samples)]
            boots[b] = np.linalg.eigvalsh(Gb.T @ Gb / n_samples)[0]
        se = float(np.std(boots, ddof=1)) if bootstrap > 1 else 0.0
    return AlphaEstimate(alpha, "MonteCarloHf", H, int(n_samples), se)


def alpha_origin_approx(model):
    """Heuristic alpha from the link's behaviour at the origin.

    k = 1: |g'(0)|^2. k > 1: lambda_min(H H^T) / d with H the Hessian of g
    at 0, the scaling that holds when the Hessian there is full rank.
    """
    y0 = np.zeros((1, model.k)) if model.b is None else model.b.reshape(1, -1)
    if model.k == 1:
        g1 = float(model.link.gradient(y0)[0, 0])
        return AlphaEstimate(g1 * g1, "OriginApprox", np.array([[g1 * g1]]), heuristic=True)
    Hg = model.link.hessian(y0)[0]
    M = Hg @ Hg.T / model.d
    return AlphaEstimate(float(np.linalg.eigvalsh(M)[0]), "OriginApprox", M, heuristic=True)


def alpha_known(value):
    if not value > 0:
        raise ArgumentError("alpha must be positive")
    return AlphaEstimate(float(value), "Known")


def _log_norm(d, k):
    return gammaln(d / 2) - 0.5 * k * math.log(math.pi) - gammaln((d - k) / 2)


def pushforward_density(y, d, k):
    """Density of A xi on the k-ball, xi uniform on the sphere in R^d."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != k:
        raise ArgumentError(f"point has {y.size} coordinates, expected {k}")
    if not d > k:
        raise ArgumentError("need d > k")
    r2 = float(y @ y)
    if r2 >= 1.0:
        raise DomainError("density is supported on the open unit ball")
    return math.exp(_log_norm(d, k) + 0.5 * (d - k - 2) * math.log1p(-r2))


def pushforward_mass(theta, d, k):
    """Mass of the ball of radius theta; |A xi|^2 ~ Beta(k/2, (d-k)/2)."""
    if not d > k:
        raise ArgumentError("need d > k")
    return float(betainc(k / 2, (d - k) / 2, min(max(theta, 0.0), 1.0) ** 2))


def c_dk(d, k, theta):
    """Second-moment integral of the push-forward density over the theta-ball.

    Computed by radial quadrature; never exceeds k / d.
    """
    if not d > k:
        raise ArgumentError("need d > k")
    theta = min(max(theta, 0.0), 1.0)
    log_c = math.log(2.0) + gammaln(d / 2) - gammaln(k / 2) - gammaln((d - k) / 2)
    ex = 0.5 * (d - k - 2)

    def integrand(r):
        if r >= 1.0:
            return 0.0
        return math.exp(log_c + (k + 1) * math.log(r) + ex * math.log1p(-r * r)) if r > 0 else 0.0

    val, _ = integrate.quad(integrand, 0.0, theta, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _pow_d(e):
    return "d" if e == 1 else f"d^{e}"


def complexity_class(function_class, M=1):
    """Asymptotic (alpha, m_x, m_phi, budget) scalings for a function class.

    ``H1``: k = 1 with g'(0) != 0. ``H2``: k = 1 with the first M derivatives
    of g vanishing at 0. ``radial``: k > 1 with arbitrary A.
    """
    if M < 1:
        raise ArgumentError("M must be a positive integer")
    dm, d2m = _pow_d(M), _pow_d(2 * M)
    alpha = "Theta(1/d)" if M == 1 else f"Theta(d^-{M})"
    if function_class == "H1":
        rows = ("Theta(1)", "O(1)", "O(d)", "O(d)")
    elif function_class == "H2":
        rows = (alpha, f"O({dm})", f"O({dm})", f"O({d2m})")
    elif function_class == "radial":
        rows = (alpha, f"O(k {dm} log k)", f"O(k^2 {dm} log k)", f"O(k^3 {d2m} (log k)^2)")
    else:
        raise ArgumentError(f"unknown function class {function_class!r}")
    return dict(zip(("alpha", "m_x", "m_phi", "budget"), rows))


@dataclass(frozen=True)
class ExperimentPlan:
    m_x: int
    m_phi: int
    epsilon: float
    form: str
    target: float
    alpha: float
    alpha_provenance: str
    success_probability: float
    mphi_below_mxd: bool
    complexity: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def plan_experiment(d, k, c2, alpha, eta=None, delta=None, p1=0.05, p2=0.05, rho=0.5,
                    kappa=0.2, c0=16.0, function_class=None, M=1, strict=True):
    """Smallest (m_x, m_phi) meeting the sample-complexity thresholds plus the step ceiling.

    Exactly one of ``eta`` (alignment target) or ``delta`` (uniform error
    target) must be given. ``alpha`` may be a float or an AlphaEstimate; its
    provenance is recorded. The returned epsilon is the exclusive ceiling.
    With ``strict`` an InfeasibleError is raised when m_phi cannot stay
    below m_x d; otherwise the violation is reported in the plan.
    """
    if (eta is None) == (delta is None):
        raise ArgumentError("give exactly one of eta or delta")
    provenance = getattr(alpha, "method", "Known")
    alpha = float(getattr(alpha, "alpha_hat", alpha))
    _check_ranges(rho, kappa, eta, alpha, delta)
    if not (0 < p1 < 1 and 0 < p2 < 1):
        raise ArgumentError("p1, p2 must lie in (0, 1)")
    mx = m_x_min(k, c2, alpha, rho, p1)
    mphi = m_phi_min(k, d, mx, kappa, p2)
    ok = mphi < mx * d
    if strict and not ok:
        raise InfeasibleError(f"m_phi_min={mphi} is not below m_x d={mx * d}")
    if eta is not None:
        eps = epsilon_ceiling(c2, k, d, mx, mphi, alpha, rho, kappa, c0, eta)
        form, target = "eta", eta
    else:
        eps = epsilon_ceiling_uniform(delta, c2, k, d, mx, mphi, alpha, rho, kappa, c0)
        form, target = "delta", delta
    if function_class is None:
        function_class = "H1" if k == 1 else "radial"
    return ExperimentPlan(mx, mphi, eps, form, float(target), alpha, provenance,
                          success_probability(k, d, mx, mphi, alpha, rho, c2, kappa), ok,
                          complexity_class(function_class, M))
