import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steinlab._grid import convolve, derivative
from steinlab.errors import NumericalError
from steinlab.meanfield1d import (
    GridField1D,
    cancellation_residual,
    cancellation_terms,
    cfl_limit,
    dissipation_mismatch,
    face_velocity,
    kl_linearization_residual,
    pde_step,
    q_functional,
    run_pde,
    target_grid,
)
from steinlab.measures import GridDensity1D, TargetDensity
from steinlab.models import GaussianKernel, InverseMultiquadric, Quadratic, SmoothAbs

TARGET = TargetDensity.from_potential(Quadratic(), domain=(-12, 12))


def gauss(mean, std=1.0, n=256, left=-12.0, right=12.0):
    return GridDensity1D.from_function(lambda x: np.exp(-(x - mean) ** 2 / (2 * std**2)), left, right, n)


@given(arrays(np.float64, st.integers(3, 80), elements=st.floats(-2, 2)), st.floats(-0.5, 0.5))
@settings(max_examples=40, deadline=None)
def test_direct_and_fft_convolution_agree(f, shift):
    kfun = lambda z: np.exp(-z * z / 2)  # noqa: E731
    a = convolve(f, 0.1, kfun, shift, method="direct")
    b = convolve(f, 0.1, kfun, shift, method="fft")
    assert np.allclose(a, b, atol=1e-12)


def test_convolution_matches_double_loop():
    rng = np.random.default_rng(0)
    f = rng.standard_normal(17)
    dx = 0.3
    x = dx * np.arange(17)
    kfun = lambda z: 1 / (1 + z * z)  # noqa: E731
    ref = np.array([sum(kfun(x[i] + 0.15 - x[j]) * f[j] * dx for j in range(17)) for i in range(17)])
    assert np.allclose(convolve(f, dx, kfun, 0.15), ref, rtol=1e-13)


def test_derivative_is_exact_on_quadratics():
    x = np.linspace(0, 1, 11)
    assert np.allclose(derivative(3 * x**2 - x, 0.1), 6 * x - 1, atol=1e-12)


def test_face_velocity_matches_direct_sum():
    rho = gauss(0.7, 1.2, n=40, left=-6, right=6)
    pot, k = SmoothAbs(), InverseMultiquadric(1.1)
    u = face_velocity(rho.values, rho.left, rho.dx, pot, k)
    x, dx = rho.centers, rho.dx
    vp = pot.grad(x[:, None])[:, 0]
    assert u[0] == 0.0 and u[-1] == 0.0
    for i in range(1, 40):
        face = rho.faces[i]
        d = face - x
        ref = -np.sum((k.grad(d[:, None])[:, 0] + k.value(d[:, None]) * vp) * rho.values) * dx
        assert u[i] == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_target_is_numerically_stationary():
    ref = target_grid(Quadratic(), -12, 12, 512)
    after = pde_step(ref, Quadratic(), GaussianKernel(), 0.01)
    assert np.max(np.abs(after.values - ref.values)) < 1e-6


@given(arrays(np.float64, 64, elements=st.floats(0, 1)), st.sampled_from(["upwind", "muscl"]),
       st.sampled_from(["euler", "ssprk2"]))
@settings(max_examples=30, deadline=None)
def test_step_conserves_mass_and_positivity(v, scheme, time_scheme):
    v = v + 1e-3
    rho = GridDensity1D(-8.0, 8.0, v / (v.sum() * 0.25))
    dt = 0.8 * cfl_limit(rho, Quadratic(), GaussianKernel())
    out = pde_step(rho, Quadratic(), GaussianKernel(), dt, scheme, time_scheme)
    assert np.all(out.values >= 0)
    assert abs(out.mass() - rho.mass()) < 1e-12


def test_cfl_violation_is_reported():
    rho = gauss(2.0, 0.5, n=512)
    dt = 3 * cfl_limit(rho, Quadratic(), GaussianKernel())
    with pytest.raises(ValueError, match="CFL"):
        pde_step(rho, Quadratic(), GaussianKernel(), dt)
    with pytest.raises(ValueError):
        pde_step(rho, Quadratic(), GaussianKernel(), 0.01, scheme="weno")


def test_run_pde_decreases_kl_and_keeps_mass():
    traj = run_pde(gauss(1.0, n=256), Quadratic(), GaussianKernel(), 2.0, 0.05, record_every=4)
    kl = traj.diagnostics["kl"]
    assert np.all(np.diff(kl) < 0)
    assert np.max(np.abs(traj.diagnostics["mass"] - 1.0)) < 1e-12
    assert np.all(traj.diagnostics["dissipation"] > 0)
    assert traj.times[-1] == pytest.approx(2.0)
    with pytest.raises(ValueError, match="whole number"):
        run_pde(gauss(1.0, n=64), Quadratic(), GaussianKernel(), 1.0, 0.3)


def test_dissipation_mismatch_shrinks_with_refinement():
    def worst(n, dt):
        rho = gauss(1.0, n=n)
        return float(np.max(dissipation_mismatch(run_pde(rho, Quadratic(), GaussianKernel(), 1.0, dt))))

    coarse, fine = worst(128, 0.04), worst(256, 0.02)
    assert coarse / fine > 2.0


def test_pde_csv_output(tmp_path):
    traj = run_pde(gauss(1.0, n=32), Quadratic(), GaussianKernel(), 0.2, 0.1)
    traj.to_csv(tmp_path / "d.csv", tmp_path / "diag.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].startswith("# left=-12.0 right=12.0 n_cells=32")
    assert len(lines) == 2 + 3 * 32
    assert (tmp_path / "diag.csv").read_text().splitlines()[0] == "t,dissipation,kl,mass,second_moment"


def test_q_functional_moments():
    one = GridField1D.from_function(lambda x: np.ones_like(x), -12, 12, 2048)
    ex = GridField1D.from_function(lambda x: x, -12, 12, 2048)
    assert q_functional(one, TARGET) == pytest.approx(1.0, abs=1e-10)
    assert q_functional(ex, TARGET) == pytest.approx(1.0, abs=1e-10)


def _gl_double_sum(phi, dphi, n=600):
    """lhs and rhs by a Gauss-Legendre tensor rule, independent of the grid code."""
    t, w = np.polynomial.legendre.leggauss(n)
    x, w = 12 * t, 12 * w
    r = np.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    vp = x
    dr = -x * r
    d = x[:, None] - x[None, :]
    K = np.exp(-d * d / 2)
    K1 = -d * K
    K2 = (d * d - 1) * K
    a, b = dr * phi(x), r * phi(x)
    f = (K1 @ (w * a)) - (K @ (w * a)) * vp - (K2 @ (w * b)) + (K1 @ (w * b)) * vp
    lhs = np.sum(w * f * phi(x) * r)
    g = dphi(x) * r
    rhs = np.sum(w * (K @ (w * g)) * g)
    return lhs, rhs


@pytest.mark.parametrize("phi,dphi", [
    (np.sin, np.cos),
    (lambda x: x * np.exp(-x * x / 4), lambda x: (1 - x * x / 2) * np.exp(-x * x / 4)),
], ids=["sin", "xgauss"])
def test_cancellation_terms_match_gauss_legendre(phi, dphi):
    lhs_ref, rhs_ref = _gl_double_sum(phi, dphi)
    assert lhs_ref == pytest.approx(rhs_ref, rel=1e-10)
    field = GridField1D.from_function(phi, -12, 12, 2048)
    lhs, rhs = cancellation_terms(field, TARGET, GaussianKernel())
    assert lhs == pytest.approx(lhs_ref, rel=1e-9)
    assert rhs == pytest.approx(rhs_ref, rel=1e-8)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=4))
@settings(max_examples=20, deadline=None)
def test_cancellation_rhs_is_nonnegative(coefs):
    def phi(x):
        return sum(c * np.sin((k + 1) * x / 2) for k, c in enumerate(coefs))

    field = GridField1D.from_function(phi, -12, 12, 1024)
    lhs, rhs, res = cancellation_residual(field, TARGET, GaussianKernel())
    assert rhs >= -1e-12
    assert res <= 1e-4 * max(abs(rhs), 1e-12) + 1e-10


def test_second_order_stencil_converges_more_slowly():
    field = lambda n: GridField1D.from_function(np.sin, -12, 12, n)  # noqa: E731
    r2 = [cancellation_residual(field(n), TARGET, GaussianKernel(), fd_order=2)[2] for n in (512, 1024)]
    r4 = [cancellation_residual(field(n), TARGET, GaussianKernel(), fd_order=4)[2] for n in (512, 1024)]
    assert 3.5 < r2[0] / r2[1] < 4.5
    assert r4[0] / r4[1] > 12
    with pytest.raises(ValueError):
        cancellation_residual(field(64), TARGET, GaussianKernel(), fd_order=3)


def test_kl_expansion_odd_perturbation_has_order_four():
    h = GridField1D.from_function(lambda x: x * np.exp(-x * x / 2) / math.sqrt(2 * math.pi), -8, 8, 2048)
    rep = kl_linearization_residual(h, TARGET, [0.1, 0.05, 0.025])
    assert rep.order == pytest.approx(4.0, abs=0.2)


def test_kl_expansion_even_perturbation_has_order_three():
    # next term is -eps^3/6 E[(X^2 - 1)^3] = -(4/3) eps^3
    h = GridField1D.from_function(lambda x: (x * x - 1) * np.exp(-x * x / 2) / math.sqrt(2 * math.pi),
                                  -10, 10, 4096)
    eps = [0.02, 0.01, 0.005]
    rep = kl_linearization_residual(h, TARGET, eps)
    assert rep.order == pytest.approx(3.0, abs=0.3)
    assert rep.residual[-1] / rep.eps[-1] ** 3 == pytest.approx(4 / 3, rel=0.02)


def test_kl_expansion_input_checks():
    bump = GridField1D.from_function(lambda x: np.exp(-x * x), -8, 8, 512)
    with pytest.raises(ValueError, match="zero integral"):
        kl_linearization_residual(bump, TARGET, [0.1])
    steep = GridField1D.from_function(lambda x: x * np.exp(-x * x / 8), -8, 8, 512)
    with pytest.raises(ValueError, match="negative"):
        kl_linearization_residual(steep, TARGET, [0.5])


def test_pde_step_rejects_negative_blow_up():
    rho = gauss(0.0, n=64)
    with pytest.raises(ValueError):
        pde_step(rho, Quadratic(), GaussianKernel(), -0.1)
    assert issubclass(NumericalError, RuntimeError)
