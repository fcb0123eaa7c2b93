import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steinlab.dynamics import (
    MeasurePath,
    TrajectoryRecord,
    euler_step,
    flow_map,
    flow_quotients,
    integrate,
    measure_field,
    particle_field,
    svgd_velocity,
    vector_field_bounds,
    weak_form_residual,
)
from steinlab.errors import BlowUpError, NumericalError
from steinlab.measures import ParticleEnsemble, SignedDiscreteMeasure
from steinlab.models import (
    BoxKernel,
    GaussianKernel,
    GaussianMixture,
    InverseMultiquadric,
    Potential,
    Quadratic,
    SmoothAbs,
    TriangleKernel,
    Zero,
)


def brute_field(q, x, w, potential, kernel):
    out = np.zeros_like(q)
    for i in range(q.shape[0]):
        acc = np.zeros(q.shape[1])
        for j in range(x.shape[0]):
            d = q[i] - x[j]
            gk = np.reshape(kernel.grad(d), -1)
            gv = np.reshape(potential.grad(x[j]), -1)
            acc += w[j] * (gk + float(kernel.value(d)) * gv)
        out[i] = -acc
    return out


particles_1d = arrays(np.float64, st.integers(1, 12), elements=st.floats(-4, 4))


@pytest.mark.parametrize("kernel", [GaussianKernel(0.7), InverseMultiquadric(1.3, beta=-0.8),
                                    TriangleKernel(1.0), BoxKernel(1.0, edge=0.3)], ids=lambda k: k.name)
@given(x=particles_1d)
@settings(max_examples=20, deadline=None)
def test_particle_field_matches_double_loop(kernel, x):
    pot = SmoothAbs()
    x = x[:, None]
    n = x.shape[0]
    got = particle_field(x, pot, kernel)
    ref = brute_field(x, x, np.full(n, 1 / n), pot, kernel)
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-13)


def test_particle_field_2d_against_double_loop():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((9, 2))
    q = rng.standard_normal((4, 2))
    pot = GaussianMixture([[0, 0], [1, 1]], sigma=1.2)
    k = GaussianKernel(0.9, dim=2)
    ref = brute_field(q, x, np.full(9, 1 / 9), pot, k)
    assert np.allclose(particle_field(x, pot, k, queries=q), ref, rtol=1e-12, atol=1e-14)


@given(x=particles_1d)
@settings(max_examples=30, deadline=None)
def test_zero_potential_conserves_the_mean(x):
    # grad K is odd, so the interaction forces cancel in pairs
    v = particle_field(x[:, None], Zero(), GaussianKernel())
    assert abs(v.sum()) < 1e-12 * max(1, len(x))


@given(x=particles_1d, seed=st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_velocity_is_permutation_equivariant(x, seed):
    perm = np.random.default_rng(seed).permutation(len(x))
    pot, k = Quadratic(), GaussianKernel()
    v = particle_field(x[:, None], pot, k)
    vp = particle_field(x[perm, None], pot, k)
    assert np.allclose(vp, v[perm], rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("threads", [2, 3, 4, 7])
def test_velocity_bit_identical_across_threads(threads):
    x = np.random.default_rng(1).standard_normal((103, 2))
    pot, k = Quadratic(dim=2), GaussianKernel(dim=2)
    a = particle_field(x, pot, k, threads=1)
    b = particle_field(x, pot, k, threads=threads)
    assert np.array_equal(a, b)


def test_single_particle_velocity_and_euler_step():
    e = ParticleEnsemble([[1.0]])
    pot, k = Quadratic(), GaussianKernel()
    assert svgd_velocity(e, pot, k)[0, 0] == pytest.approx(-1.0)
    assert euler_step(e, pot, k, 0.1).positions[0, 0] == pytest.approx(0.9)
    assert euler_step(e, pot, k, 0.0).positions[0, 0] == 1.0
    assert svgd_velocity(e, pot, k, query=2.0).shape == (1,)
    with pytest.raises(ValueError):
        euler_step(e, pot, k, -0.1)


def test_two_particles_closed_form():
    # V = x^2/2, K Gaussian (h=1), particles at +-a:
    # v(a) = -(1/2)[V'(a) + grad K(2a) + K(2a) V'(-a)] = -(a - 3a e^{-2a^2})/2
    a = 0.7
    v = svgd_velocity(ParticleEnsemble([[a], [-a]]), Quadratic(), GaussianKernel())
    e = math.exp(-2 * a * a)
    expected = -0.5 * (a - 3 * a * e)
    assert v[0, 0] == pytest.approx(expected, rel=1e-14)
    assert v[1, 0] == pytest.approx(-expected, rel=1e-14)


class _Broken(Potential):
    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x):
        g = np.zeros_like(np.asarray(x, dtype=float))
        g[np.asarray(x)[..., 0] > 0.5] = np.nan
        return g


def test_non_finite_velocity_names_the_particle():
    with pytest.raises(NumericalError, match="index"):
        svgd_velocity(ParticleEnsemble([[0.0], [1.0]]), _Broken(), GaussianKernel())


def test_rk4_single_particle_matches_exponential_decay():
    traj = integrate(ParticleEnsemble([[1.5]]), Quadratic(), GaussianKernel(), 0.0, 1.0, 0.01, "rk4")
    assert abs(traj.positions[-1, 0, 0] - 1.5 * math.exp(-1)) < 1e-8


def _error(method, dt):
    traj = integrate(ParticleEnsemble([[1.0]]), Quadratic(), GaussianKernel(), 0.0, 1.0, dt, method)
    return abs(traj.positions[-1, 0, 0] - math.exp(-1))


@pytest.mark.parametrize("method,order", [("euler", 1), ("rk4", 4)])
def test_convergence_order(method, order):
    dts = [0.1, 0.05, 0.025, 0.0125]
    errs = [_error(method, dt) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - order) < 0.3


def test_integrate_snapshots_and_short_final_step():
    traj = integrate(ParticleEnsemble([[0.3], [1.0]]), Quadratic(), GaussianKernel(), 0.0, 1.05, 0.1,
                     record_every=0.5)
    assert np.allclose(traj.times, [0.0, 0.5, 1.0, 1.05])
    with pytest.raises(ValueError):
        integrate(ParticleEnsemble([[0.3]]), Quadratic(), GaussianKernel(), 0.0, 1.0, 0.1, record_every=0.15)
    zero = integrate(ParticleEnsemble([[0.3]]), Quadratic(), GaussianKernel(), 0.0, 0.0, 0.1)
    assert len(zero) == 1


def test_blow_up_reports_partial_trajectory():
    repel = Quadratic(scale=0.1)
    repel.grad = lambda x: -100 * np.asarray(x, dtype=float)
    with pytest.raises(BlowUpError) as info:
        integrate(ParticleEnsemble([[1.0]]), repel, GaussianKernel(), 0.0, 1.0, 0.01, "euler")
    assert "blow-up" in str(info.value)
    assert info.value.partial is not None and len(info.value.partial) >= 1


def test_trajectory_csv_round_trip(tmp_path):
    x0 = np.random.default_rng(2).standard_normal((5, 2))
    traj = integrate(ParticleEnsemble(x0), Quadratic(dim=2), GaussianKernel(dim=2), 0, 0.3, 0.1)
    traj.meta = {"seed": 4}
    traj.to_csv(tmp_path / "t.csv", tmp_path / "t.jsonl")
    back = TrajectoryRecord.from_csv(tmp_path / "t.csv", tmp_path / "t.jsonl")
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.positions, traj.positions)
    assert back.dt == 0.1 and back.method == "rk4" and back.meta == {"seed": 4}


def test_measure_field_agrees_with_particle_field_for_empirical_measures():
    x = np.random.default_rng(3).standard_normal((7, 1))
    pot, k = Quadratic(), GaussianKernel()
    q = np.linspace(-2, 2, 5)[:, None]
    mu = ParticleEnsemble(x).as_signed()
    assert np.allclose(measure_field(mu, pot, k, q), particle_field(x, pot, k, queries=q), atol=1e-15)
    assert np.all(measure_field(SignedDiscreteMeasure.empty(), pot, k, q) == 0)


def test_flow_map_zero_background_is_identity():
    path = MeasurePath.zero(dim=1, t0=0.0, t1=2.0)
    x = np.linspace(-3, 3, 7)
    assert np.array_equal(flow_map(path, Quadratic(), GaussianKernel(), x, 0.0, 2.0, 0.1)[:, 0], x)


def _background():
    x0 = np.random.default_rng(4).normal(1.0, 0.5, (12, 1))
    traj = integrate(ParticleEnsemble(x0), Quadratic(), GaussianKernel(), 0.0, 1.0, 0.01, keep_velocities=True)
    return MeasurePath.from_trajectory(traj, interpolation="hermite"), traj


def test_flow_map_forward_then_backward_returns():
    path, _ = _background()
    x = np.array([-1.0, 0.2, 2.5])
    fwd = flow_map(path, Quadratic(), GaussianKernel(), x, 0.0, 1.0, 0.01)
    back = flow_map(path, Quadratic(), GaussianKernel(), fwd, 1.0, 0.0, 0.01)
    assert np.allclose(back[:, 0], x, atol=1e-9)


def test_flow_map_transports_the_particles():
    # the particles themselves follow the flow generated by their own empirical measure
    path, traj = _background()
    end = flow_map(path, Quadratic(), GaussianKernel(), traj.positions[0], 0.0, 1.0, 0.01)
    assert np.allclose(end, traj.positions[-1], atol=1e-6)


def test_flow_map_rejects_uncovered_times():
    path, _ = _background()
    with pytest.raises(ValueError):
        flow_map(path, Quadratic(), GaussianKernel(), 0.0, 0.0, 2.0, 0.01)


def test_flow_quotients_for_trivial_background_are_exact():
    path = MeasurePath.zero(dim=1)
    q = flow_quotients(path, Quadratic(), GaussianKernel(), np.array([0.0, 2.0]), 1.0, 0.1)
    assert np.allclose(q["grad_flow"], 1.0)
    assert np.allclose(q["V"], [0.0, 2.0 / 3.0])


def test_vector_field_bounds_against_dense_probe_evaluation():
    mu = SignedDiscreteMeasure([[-1.0], [0.5], [2.0]], [0.5, -0.2, 0.7])
    pot, k = Quadratic(), GaussianKernel()
    probes = np.linspace(-4, 4, 801)[:, None]
    a, b, c = vector_field_bounds(mu, pot, k, probes)
    f = -measure_field(mu, pot, k, probes)[:, 0]
    assert a == pytest.approx(np.max(np.abs(f)), rel=1e-12)
    assert c == pytest.approx(np.max(np.abs(probes[:, 0] * f)), rel=1e-12)
    slope = np.max(np.abs(np.gradient(f, probes[:, 0])))
    assert b == pytest.approx(slope, rel=1e-3)


def test_weak_form_residual_vanishes_along_a_trajectory():
    x0 = np.random.default_rng(6).normal(0.5, 1.0, (10, 1))
    T = 1.0
    traj = integrate(ParticleEnsemble(x0), Quadratic(), GaussianKernel(), 0.0, T, 0.005)

    def phi(t, x):
        return (1 - t / T) ** 2 * np.sin(x[:, 0])

    def dphi(t, x):
        return ((1 - t / T) ** 2 * np.cos(x[:, 0]))[:, None]

    def tphi(t, x):
        return -2 * (1 - t / T) / T * np.sin(x[:, 0])

    res = weak_form_residual(traj, Quadratic(), GaussianKernel(), phi, dphi, tphi)
    assert abs(res) < 1e-4
    # the opposite sign convention leaves an O(1) residual
    flipped = weak_form_residual(traj, Quadratic(), GaussianKernel(), phi, lambda t, x: -dphi(t, x), tphi)
    assert abs(flipped) > 1e-2
