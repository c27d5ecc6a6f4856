import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ridgelift import (ArgumentError, Custom, DomainError, Logistic, NoiseModel, Oracle,
                       QuadraticForm, RidgeModel, ShapeError, SumOfGaussians,
                       evaluate_oracle, gradient, random_model, random_row_orthonormal)
from ridgelift.model import load_model, save_model, uniform_ball

KINDS = [("logistic", 1), ("sum_gaussians", 1), ("sum_gaussians", 2), ("sum_gaussians", 3),
         ("quadratic", 1), ("quadratic", 2), ("linear", 2)]


def central_fd(f, x, h=1e-5):
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)])


def point_in_ball(rng, d, radius=1.0):
    return uniform_ball(1, d, radius, rng)[0]


# oracle evaluation

def test_logistic_at_origin_is_one_half():
    model = random_model("logistic", 7, 1, seed=3)
    assert evaluate_oracle(Oracle(model), np.zeros(7)) == 0.5


def test_quadratic_zero_offset_in_null_space():
    A = random_row_orthonormal(6, 2, seed=1)
    model = RidgeModel(A, QuadraticForm(np.zeros(2)))
    # component of a random vector orthogonal to the rows of A
    x = np.random.default_rng(0).standard_normal(6)
    x -= A.T @ (A @ x)
    x /= 2 * np.linalg.norm(x)
    assert abs(evaluate_oracle(Oracle(model, radius=1.0), x)) < 1e-30


def test_sum_of_gaussians_matches_scalar_atoms():
    model = random_model("sum_gaussians", 12, 2, seed=5)
    x = point_in_ball(np.random.default_rng(1), 12)
    link = model.link
    expected = 0.0
    for a, s, b in zip(model.A, link.sigmas, link.offsets):
        t = float(a @ x) + b
        expected += math.exp(-t * t / (2 * s * s)) / math.sqrt(2 * math.pi * s * s)
    assert evaluate_oracle(Oracle(model), x) == pytest.approx(expected, rel=1e-14)


def test_oracle_rejects_points_outside_domain():
    model = random_model("logistic", 4, 1, seed=0)
    oracle = Oracle(model, radius=1.1)
    oracle(np.r_[1.1 + 5e-10, 0, 0, 0])
    with pytest.raises(DomainError):
        oracle(np.r_[1.1 + 1e-8, 0, 0, 0])
    with pytest.raises(ShapeError):
        oracle(np.zeros(5))


def test_oracle_counts_calls():
    model = random_model("logistic", 4, 1, seed=0)
    oracle = Oracle(model)
    oracle.batch(np.zeros((7, 4)))
    oracle(np.zeros(4))
    assert oracle.calls == 8


# gradients

def test_logistic_gradient_at_origin():
    model = random_model("logistic", 9, 1, seed=2)
    np.testing.assert_allclose(gradient(model, np.zeros(9)), 0.25 * model.A[0], rtol=1e-15)


def test_quadratic_gradient_closed_form():
    model = random_model("quadratic", 8, 3, seed=4)
    x = point_in_ball(np.random.default_rng(2), 8)
    b = model.link.offset
    expected = 2 * model.A.T @ (model.A @ x - b)
    np.testing.assert_allclose(gradient(model, x), expected, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("kind,k", KINDS)
def test_gradient_matches_finite_differences_tightly(kind, k):
    for seed in range(5):
        model = random_model(kind, 15, k, seed)
        x = point_in_ball(np.random.default_rng(seed), 15)
        g = gradient(model, x)
        fd = central_fd(model.value, x)
        assert np.linalg.norm(fd - g) <= 1e-8 * np.linalg.norm(g)


def test_gradient_domain_check():
    model = random_model("logistic", 3, 1, seed=0)
    with pytest.raises(DomainError):
        gradient(model, np.r_[2.0, 0, 0], radius=1.5)


@given(kind_k=st.sampled_from(KINDS), seed=st.integers(0, 2**31), d=st.integers(3, 25))
def test_gradient_consistency_property(kind_k, seed, d):
    kind, k = kind_k
    if k > d:
        return
    model = random_model(kind, d, k, seed)
    x = point_in_ball(np.random.default_rng(seed), d)
    g = model.gradient(x)
    fd = central_fd(model.value, x)
    assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1e-12)


# links

def _links(seed):
    rng = np.random.default_rng(seed)
    return [Logistic(),
            SumOfGaussians(rng.uniform(0.1, 0.5, 2), rng.uniform(-0.2, 0.2, 2)),
            QuadraticForm(rng.standard_normal(3))]


@given(seed=st.integers(0, 2**31), which=st.integers(0, 2))
def test_link_derivatives_consistent(seed, which):
    link = _links(seed)[which]
    k = link.k
    rng = np.random.default_rng(seed)
    Y = uniform_ball(20, k, 1.01, rng)
    E = np.eye(k)
    errs = []
    for h in (1e-3, 5e-4):
        gfd = np.stack([(link.value(Y + h * e) - link.value(Y - h * e)) / (2 * h) for e in E], 1)
        hfd = np.stack([(link.gradient(Y + h * e) - link.gradient(Y - h * e)) / (2 * h)
                        for e in E], 2)
        errs.append((np.abs(gfd - link.gradient(Y)).max(),
                     np.abs(hfd - link.hessian(Y)).max()))
    scale = max(1.0, link.c2(1.01 + 1e-3))
    # O(h^2): errors small, and shrink when h halves (unless already at roundoff)
    (g1, h1), (g2, h2) = errs
    assert g1 <= 1e-4 * scale ** 2 and h1 <= 1e-3 * scale ** 2
    assert g2 <= max(g1 / 3, 1e-9 * scale) and h2 <= max(h1 / 3, 1e-8 * scale)


@given(seed=st.integers(0, 2**31), which=st.integers(0, 2))
def test_c2_dominates_probed_partials(seed, which):
    link = _links(seed)[which]
    radius = 1.05
    Y = uniform_ball(1000, link.k, radius, np.random.default_rng(seed))
    peak = max(np.abs(link.value(Y)).max(), np.abs(link.gradient(Y)).max(),
               np.abs(link.hessian(Y)).max())
    assert link.c2(radius) >= peak


def test_logistic_c2_is_one():
    assert Logistic().c2() == 1.0


def test_custom_link_c2_is_flagged_estimate():
    link = Custom(1, lambda Y: np.sin(Y[:, 0]), lambda Y: np.cos(Y),
                  lambda Y: -np.sin(Y)[:, :, None])
    assert link.c2_is_estimate
    assert 0.8 < link.c2(1.0) <= 1.1 * 1.0 + 1e-12


# row-orthonormal generator

def test_square_orthonormal():
    A = random_row_orthonormal(5, 5, seed=0)
    assert np.linalg.norm(A @ A.T - np.eye(5)) <= 1e-12


def test_single_row_unit_norm():
    a = random_row_orthonormal(3, 1, seed=9)
    assert a.shape == (1, 3)
    assert abs(np.linalg.norm(a) - 1) < 1e-15


def test_two_seeds_give_distinct_orthonormal_matrices():
    A1 = random_row_orthonormal(50, 3, seed=1)
    A2 = random_row_orthonormal(50, 3, seed=2)
    assert not np.allclose(A1, A2)
    for A in (A1, A2):
        assert np.linalg.norm(A @ A.T - np.eye(3)) <= 1e-12


def test_k_above_d_rejected():
    with pytest.raises(ArgumentError):
        random_row_orthonormal(3, 4, seed=0)


def test_haar_first_coordinate_moments():
    # Haar rows: each entry has mean 0 and variance 1/d
    d = 10
    vals = np.array([random_row_orthonormal(d, 2, seed=s)[:, 0] for s in range(4000)]).ravel()
    assert abs(vals.mean()) < 4 * math.sqrt(1 / d / vals.size)
    assert vals.var() == pytest.approx(1 / d, rel=0.06)


def test_haar_invariant_under_right_rotation():
    # distribution of A Q matches A for a fixed orthogonal Q: compare a test statistic
    d = 6
    Q = np.linalg.qr(np.random.default_rng(0).standard_normal((d, d)))[0]
    stat = lambda M: M[0, 0] ** 2 + M[1, 1] ** 2
    plain = [stat(random_row_orthonormal(d, 2, seed=s)) for s in range(3000)]
    rotated = [stat(random_row_orthonormal(d, 2, seed=s) @ Q) for s in range(3000, 6000)]
    from scipy.stats import ks_2samp
    assert ks_2samp(plain, rotated).pvalue > 1e-3


# model construction

def test_model_requires_orthonormal_rows():
    with pytest.raises(ArgumentError):
        RidgeModel(np.array([[1.0, 1.0, 0.0]]), Logistic())
    with pytest.raises(ShapeError):
        RidgeModel(random_row_orthonormal(5, 2, 0), Logistic())


@given(seed=st.integers(0, 2**31), kind_k=st.sampled_from(KINDS))
def test_generated_models_are_row_orthonormal(seed, kind_k):
    kind, k = kind_k
    model = random_model(kind, 20, k, seed)
    assert np.linalg.norm(model.A @ model.A.T - np.eye(k)) <= 1e-10


@given(seed=st.integers(0, 2**31), k=st.integers(1, 3))
def test_rotation_identity(seed, k):
    model = random_model("sum_gaussians", 10, k, seed)
    Q = np.linalg.qr(np.random.default_rng(seed).standard_normal((k, k)))[0]
    inner = model.link
    rotated_link = Custom(k, lambda Y: inner.value(Y @ Q),
                          lambda Y: inner.gradient(Y @ Q) @ Q.T,
                          lambda Y: Q @ inner.hessian(Y @ Q) @ Q.T)
    rotated = RidgeModel(Q @ model.A, rotated_link)
    X = uniform_ball(100, 10, 1.0, np.random.default_rng(seed + 1))
    np.testing.assert_allclose(rotated.value(X), model.value(X), rtol=1e-12, atol=1e-14)


# noise

def test_silent_noise_is_bit_exact():
    model = random_model("logistic", 5, 1, seed=0)
    X = uniform_ball(50, 5, 1.0, np.random.default_rng(0))
    out = Oracle(model, NoiseModel(0.0, 0.0, 0.0, seed=7)).batch(X)
    assert np.array_equal(out, model.value(X))


def test_oracle_determinism_with_noise():
    model = random_model("quadratic", 5, 2, seed=0)
    X = uniform_ball(40, 5, 1.0, np.random.default_rng(0))
    noise = NoiseModel(0.1, 0.2, 1.0, seed=11)
    runs = []
    for _ in range(2):
        o = Oracle(model, noise)
        runs.append(np.concatenate([o.batch(X[:10]), o.batch(X[10:]), [o(X[0])]]))
    assert np.array_equal(runs[0], runs[1])


@pytest.mark.parametrize("prob", [0.01, 0.1, 0.5])
def test_corruption_fraction(prob):
    model = random_model("logistic", 3, 1, seed=0)
    n = 20000
    o = Oracle(model, NoiseModel(0.0, prob, 1.0, seed=3))
    o.batch(np.zeros((n, 3)))
    assert abs(o.corrupted / n - prob) <= 3 * math.sqrt(prob * (1 - prob) / n)


def test_gaussian_noise_scale():
    model = random_model("logistic", 3, 1, seed=0)
    out = Oracle(model, NoiseModel(0.2, seed=1)).batch(np.zeros((20000, 3)))
    assert np.std(out - 0.5) == pytest.approx(0.2, rel=0.03)


def test_noise_model_validation_and_worker_streams():
    with pytest.raises(ArgumentError):
        NoiseModel(-1.0)
    with pytest.raises(ArgumentError):
        NoiseModel(0.0, 1.0)
    base = NoiseModel(0.1, seed=40)
    assert base.for_worker(3).seed == 40 ^ 3


# persistence

@pytest.mark.parametrize("kind,k", KINDS)
def test_model_round_trip(tmp_path, kind, k):
    model = random_model(kind, 9, k, seed=6)
    path = tmp_path / "model.txt"
    save_model(path, model, seed=6)
    back = load_model(path)
    assert np.array_equal(back.A, model.A)
    X = uniform_ball(10, 9, 1.0, np.random.default_rng(0))
    assert np.array_equal(back.value(X), model.value(X))
