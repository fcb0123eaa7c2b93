import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinlab.models import (
    BoxKernel,
    GaussianKernel,
    GaussianLikelihoodPosterior,
    GaussianMixture,
    InverseMultiquadric,
    LogisticPosterior,
    Quadratic,
    Quartic,
    SmoothAbs,
    TriangleKernel,
    check_condition_B3,
    check_growth,
    check_positive_definite,
    make_kernel,
    make_potential,
)

H = 1e-5


def fd_grad(f, x):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = H
        g[k] = (f(x + e) - f(x - e)) / (2 * H)
    return g


def _rng_data():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((15, 2))
    y = (rng.random(15) < 0.5).astype(float)
    return X, y


POTENTIALS_2D = [
    Quadratic(dim=2, center=[0.5, -1.0], scale=1.3),
    SmoothAbs(dim=2, slope=2.0, eps=0.5),
    Quartic(dim=2),
    GaussianMixture([[-1.0, 0.0], [1.5, 0.5]], weights=[0.3, 0.7], sigma=0.9),
    LogisticPosterior(*_rng_data(), prior_scale=2.0),
    GaussianLikelihoodPosterior(np.array([[0.1, 0.2], [1.0, -0.4]]), 0.7, [0.0, 1.0], 1.5),
]

KERNELS_1D = [GaussianKernel(0.8), InverseMultiquadric(1.2, beta=-0.5), InverseMultiquadric(0.7, beta=-1.5),
              BoxKernel(1.0, edge=0.2)]


@pytest.mark.parametrize("pot", POTENTIALS_2D, ids=lambda p: p.family)
@given(st.lists(st.floats(-2.5, 2.5), min_size=2, max_size=2))
@settings(max_examples=25, deadline=None)
def test_potential_derivatives_match_finite_differences(pot, x):
    x = np.array(x)
    assert np.allclose(pot.grad(x), fd_grad(lambda z: float(pot.value(z)), x), rtol=1e-5, atol=1e-5)
    hess_fd = np.array([fd_grad(lambda z: float(pot.grad(z)[k]), x) for k in range(2)])
    assert np.allclose(pot.hess(x), hess_fd, rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("pot", POTENTIALS_2D, ids=lambda p: p.family)
def test_potential_minimum_is_zero_at_argmin(pot):
    m = pot.argmin
    assert np.linalg.norm(pot.grad(m)) < 1e-6
    if not isinstance(pot, Quartic):
        assert abs(float(pot.value(m))) < 1e-9


@pytest.mark.parametrize("k", KERNELS_1D, ids=lambda k: k.name)
@given(st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3))
@settings(max_examples=25, deadline=None)
def test_kernel_derivatives_match_finite_differences(k, x):
    x = np.array([x])
    assert np.allclose(k.grad(x), fd_grad(lambda z: float(k.value(z)), x), rtol=1e-5, atol=1e-6)
    assert np.allclose(k.hess(x)[0], fd_grad(lambda z: float(k.grad(z)[0]), x), rtol=1e-5, atol=1e-5)
    assert np.allclose(k.grad_laplacian(x), fd_grad(lambda z: float(k.laplacian(z)), x), rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize("k", [GaussianKernel(1.1, dim=2), InverseMultiquadric(0.9, dim=2, beta=-0.7)],
                         ids=lambda k: k.name)
def test_kernel_derivatives_2d(k):
    rng = np.random.default_rng(3)
    for x in rng.uniform(-2, 2, (10, 2)):
        assert np.allclose(k.grad(x), fd_grad(lambda z: float(k.value(z)), x), atol=1e-6)
        assert np.allclose(k.laplacian(x), np.trace(k.hess(x)), atol=1e-12)
        assert np.allclose(k.grad_laplacian(x), fd_grad(lambda z: float(k.laplacian(z)), x), atol=1e-5)


@given(st.floats(-5, 5))
def test_kernels_are_even(x):
    for k in KERNELS_1D + [TriangleKernel(1.0)]:
        assert float(k.value(np.array([x]))) == pytest.approx(float(k.value(np.array([-x]))), abs=1e-15)


def test_vectorised_shapes():
    v = Quadratic(dim=2)
    x = np.zeros((4, 3, 2))
    assert v.value(x).shape == (4, 3)
    assert v.grad(x).shape == (4, 3, 2)
    assert v.hess(x).shape == (4, 3, 2, 2)
    k = GaussianKernel(dim=1)
    assert k.value(np.linspace(-1, 1, 7)).shape == (7,)


def test_factories_reject_unknown_names():
    with pytest.raises(ValueError, match="unknown potential"):
        make_potential("cubic")
    with pytest.raises(ValueError, match="unknown kernel"):
        make_kernel("matern")
    with pytest.raises(ValueError):
        make_kernel("gaussian", bandwidth=0.0)


def test_gaussian_likelihood_closed_form():
    obs = np.array([0.3, 1.1, -0.2, 0.9])
    post = GaussianLikelihoodPosterior(obs, noise_scale=0.5, prior_mean=1.0, prior_scale=2.0)
    prec = 4 / 0.25 + 1 / 4.0
    mean = (obs.sum() / 0.25 + 1.0 / 4.0) / prec
    assert post.precision == pytest.approx(prec)
    assert post.argmin[0] == pytest.approx(mean)


def test_logistic_posterior_with_no_rows_is_the_prior():
    post = LogisticPosterior(np.zeros((0, 2)), np.zeros(0), prior_scale=1.5, dim=2)
    x = np.array([0.4, -0.7])
    assert float(post.value(x)) == pytest.approx(np.dot(x, x) / (2 * 1.5**2))
    with pytest.raises(ValueError):
        LogisticPosterior(np.ones((2, 1)), [0.0, 2.0])


def test_growth_check_examples():
    radii = np.linspace(0.25, 20, 80)
    rep = check_growth(Quadratic(), radii)
    assert rep.passed and rep.details["slopes"][0] == pytest.approx(2.0, abs=1e-9)
    rep = check_growth(Quartic(), radii, declared_p=2)
    assert not rep.passed and rep.details["slopes"][0] == pytest.approx(4.0, abs=1e-9)
    assert any(w.quantity == "fitted slope" for w in rep.witnesses)
    rep2 = check_growth(Quadratic(dim=2), radii, directions=[[1, 0], [0, 1]])
    assert rep2.details["slopes"][0] == rep2.details["slopes"][1]
    assert check_growth(SmoothAbs(), radii).passed


def test_growth_check_reports_overflow():
    class Exploding(Quadratic):
        def value(self, x):
            return np.exp(np.exp(super().value(x)))

    rep = check_growth(Exploding(), np.linspace(1, 20, 20))
    assert not rep.passed and rep.witnesses[0].note == "probe overflow"


def test_growth_check_needs_far_probes():
    with pytest.raises(ValueError):
        check_growth(Quadratic(), np.linspace(0.1, 5, 10))


def test_condition_b3_dichotomy():
    k = GaussianKernel()
    assert check_condition_B3(SmoothAbs(), k).passed
    assert check_condition_B3(Quadratic(), k).passed
    rep = check_condition_B3(Quartic(), k)
    assert not rep.passed
    big = rep.witnesses[0]
    assert big.value > 1e3 and abs(big.probe["x"][0]) == pytest.approx(20.0)


def _min_gram_eigen(kernel, points):
    gram = kernel.value(points[:, None] - points[None, :])
    return float(np.linalg.eigvalsh(gram).min())


def test_positive_definiteness_against_gram_matrices():
    pts = np.linspace(-3, 3, 61)
    assert check_positive_definite(GaussianKernel()).passed
    assert _min_gram_eigen(GaussianKernel(), pts) > -1e-10
    assert check_positive_definite(TriangleKernel()).passed
    assert _min_gram_eigen(TriangleKernel(), pts) > -1e-10
    rep = check_positive_definite(BoxKernel())
    assert not rep.passed
    assert rep.witnesses[0].value < 0
    # an explicit Gram matrix confirms the indefiniteness
    assert _min_gram_eigen(BoxKernel(), pts) < -1e-3
