"""1-D finite-volume solver for the nonlocal mean-field equation, plus the
Q-functional, the cancellation identity and the KL expansion checks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._grid import convolve, derivative
from .errors import NumericalError
from .measures import GridDensity1D, TargetDensity
from .metrics import kl_divergence, stein_dissipation

NEG_TOL = 1e-12


@dataclass(frozen=True)
class GridField1D:
    """Signed values on the cell centres of a uniform grid (test functions, perturbations)."""

    left: float
    right: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not self.right > self.left or v.size < 2:
            raise ValueError("need right > left and at least two cells")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, fn, left, right, n_cells):
        dx = (right - left) / n_cells
        x = left + dx * (np.arange(n_cells) + 0.5)
        return cls(left, right, np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape))

    @property
    def n_cells(self):
        return self.values.size

    @property
    def dx(self):
        return (self.right - self.left) / self.n_cells

    @property
    def centers(self):
        return self.left + self.dx * (np.arange(self.n_cells) + 0.5)

    def same_grid(self, other):
        return (self.n_cells == other.n_cells and math.isclose(self.left, other.left)
                and math.isclose(self.right, other.right))


def _kfuns(kernel):
    k0 = lambda z: kernel.value(z[..., None])  # noqa: E731
    k1 = lambda z: kernel.grad(z[..., None])[..., 0]  # noqa: E731
    k2 = lambda z: kernel.hess(z[..., None])[..., 0, 0]  # noqa: E731
    return k0, k1, k2


def _vprime(potential, x):
    return potential.grad(np.asarray(x)[:, None])[:, 0]


def target_grid(target_or_potential, left, right, n_cells) -> GridDensity1D:
    """exp(-V) at cell centres, normalised to unit mass on the grid."""
    pot = getattr(target_or_potential, "potential", target_or_potential)
    dx = (right - left) / n_cells
    x = left + dx * (np.arange(n_cells) + 0.5)
    v = pot.value(x[:, None])
    w = np.exp(-(v - v.min()))
    return GridDensity1D(left, right, w / (math.fsum(w) * dx))


def face_velocity(values, left, dx, potential, kernel) -> np.ndarray:
    """u = -[K' * rho + K * (rho V')] at the n + 1 faces; zero at both walls."""
    n = values.size
    x = left + dx * (np.arange(n) + 0.5)
    k0, k1, _ = _kfuns(kernel)
    rv = values * _vprime(potential, x)
    inner = -(convolve(values, dx, k1, shift=dx / 2) + convolve(rv, dx, k0, shift=dx / 2))
    u = np.zeros(n + 1)
    u[1:n] = inner[:-1]
    return u


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _fluxes(r, u, scheme):
    n = r.size
    if scheme == "upwind":
        left_state, right_state = r[:-1], r[1:]
    elif scheme == "muscl":
        d = np.diff(r)
        slope = np.zeros(n)
        slope[1:-1] = _minmod(d[:-1], d[1:])
        left_state = r[:-1] + 0.5 * slope[:-1]
        right_state = r[1:] - 0.5 * slope[1:]
    else:
        raise ValueError("scheme must be 'upwind' or 'muscl'")
    ui = u[1:n]
    f = np.zeros(n + 1)
    f[1:n] = np.maximum(ui, 0.0) * left_state + np.minimum(ui, 0.0) * right_state
    return f


def _rhs(r, left, dx, potential, kernel, scheme, dt):
    u = face_velocity(r, left, dx, potential, kernel)
    umax = float(np.max(np.abs(u)))
    if dt * umax > 0.5 * dx:
        need = 0.5 * dx / umax
        raise ValueError(f"CFL violation: dt={dt:.6g} exceeds the limit {need:.6g}")
    f = _fluxes(r, u, scheme)
    return -(f[1:] - f[:-1]) / dx


def cfl_limit(rho: GridDensity1D, potential, kernel) -> float:
    u = face_velocity(rho.values, rho.left, rho.dx, potential, kernel)
    umax = float(np.max(np.abs(u)))
    return math.inf if umax == 0 else 0.5 * rho.dx / umax


def pde_step(rho: GridDensity1D, potential, kernel, dt: float, scheme: str = "muscl",
             time_scheme: str = "ssprk2") -> GridDensity1D:
    """One explicit finite-volume step of d_t rho = d_x(rho K*(rho' + rho V')).

    Face velocities come from the convolution with the derivative on K, the
    flux is upwinded from minmod-limited reconstructions (``scheme="muscl"``,
    second order) or cell averages (``"upwind"``, first order) and vanishes
    at the walls.  The default ``time_scheme="ssprk2"`` is the two-stage
    strong-stability-preserving Runge-Kutta step, a convex combination of
    Euler steps, so positivity under the CFL bound carries over.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    r0 = rho.values
    dx, left = rho.dx, rho.left
    if time_scheme == "euler":
        r = r0 + dt * _rhs(r0, left, dx, potential, kernel, scheme, dt)
    elif time_scheme == "ssprk2":
        r1 = r0 + dt * _rhs(r0, left, dx, potential, kernel, scheme, dt)
        r1c = np.maximum(r1, 0.0)
        r = 0.5 * r0 + 0.5 * (r1c + dt * _rhs(r1c, left, dx, potential, kernel, scheme, dt))
    else:
        raise ValueError("time_scheme must be 'euler' or 'ssprk2'")
    if not np.all(np.isfinite(r)):
        raise NumericalError("non-finite density after step")
    low = float(r.min())
    if low < -NEG_TOL:
        raise NumericalError(f"density went negative ({low:.3g}) despite the CFL bound")
    mass0 = math.fsum(r0)
    if low < 0:
        r = np.maximum(r, 0.0)
        r = r * (mass0 / math.fsum(r))
    return rho.with_values(r)


@dataclass
class PDETrajectory:
    times: np.ndarray
    densities: np.ndarray  # (T, n)
    left: float
    right: float
    diagnostics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def density(self, k) -> GridDensity1D:
        return GridDensity1D(self.left, self.right, self.densities[k], None)

    def to_csv(self, path, diag_path=None) -> None:
        n = self.densities.shape[1]
        with open(path, "w", newline="") as fh:
            meta = " ".join(f"{k}={v!r}" for k, v in sorted(self.meta.items()))
            fh.write(f"# left={self.left!r} right={self.right!r} n_cells={n} {meta}\n")
            wr = csv.writer(fh)
            wr.writerow(["t", "cell", "value"])
            for t, row in zip(self.times, self.densities):
                ts = repr(float(t))
                for i, v in enumerate(row):
                    wr.writerow([ts, i, repr(float(v))])
        if diag_path is not None:
            keys = sorted(self.diagnostics)
            with open(diag_path, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["t"] + keys)
                for k, t in enumerate(self.times):
                    wr.writerow([repr(float(t))] + [repr(float(self.diagnostics[key][k])) for key in keys])


def run_pde(rho0: GridDensity1D, potential, kernel, t_end: float, dt: float, *, scheme="muscl",
            time_scheme="ssprk2", record_every: int = 1, diagnostics: bool = True) -> PDETrajectory:
    """March pde_step to t_end (a whole number of steps), recording every ``record_every`` steps.

    Diagnostics per recorded time: KL to the grid target, the dissipation
    integral, mass and second moment.
    """
    n_steps = int(round(t_end / dt))
    if n_steps < 0 or abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a whole number of steps")
    ref = target_grid(potential, rho0.left, rho0.right, rho0.n_cells)
    rho = rho0
    times, dens = [0.0], [rho0.values.copy()]
    for k in range(1, n_steps + 1):
        rho = pde_step(rho, potential, kernel, dt, scheme, time_scheme)
        if k % record_every == 0 or k == n_steps:
            times.append(k * dt)
            dens.append(rho.values.copy())
    traj = PDETrajectory(np.array(times), np.array(dens), rho0.left, rho0.right,
                         meta={"dt": dt, "scheme": scheme, "time_scheme": time_scheme})
    if diagnostics:
        kl, diss, mass, m2 = [], [], [], []
        x = rho0.centers
        for row in traj.densities:
            g = GridDensity1D(rho0.left, rho0.right, row, None)
            kl.append(kl_divergence(g, ref))
            diss.append(stein_dissipation(g, potential, kernel))
            mass.append(g.mass())
            m2.append(float(np.sum(row * x**2) * rho0.dx))
        traj.diagnostics = {"kl": np.array(kl), "dissipation": np.array(diss),
                            "mass": np.array(mass), "second_moment": np.array(m2)}
    return traj


def dissipation_mismatch(traj: PDETrajectory) -> np.ndarray:
    """|(KL_{k+1} - KL_k)/dt + (D_k + D_{k+1})/2| between consecutive records."""
    kl = traj.diagnostics["kl"]
    d = traj.diagnostics["dissipation"]
    dt = np.diff(traj.times)
    return np.abs(np.diff(kl) / dt + 0.5 * (d[1:] + d[:-1]))


# ---------------------------------------------------------------------------
# Q-functional and the cancellation identity


def _target_on(phi: GridField1D, target: TargetDensity):
    x = phi.centers
    return x, target.density(x[:, None])


def q_functional(phi: GridField1D, target: TargetDensity) -> float:
    """(int rho_inf phi^2 dx)^(1/2), midpoint rule on the cell centres."""
    _, r = _target_on(phi, target)
    return math.sqrt(math.fsum(r * phi.values**2) * phi.dx)


def _fd(values, dx, order):
    if order == 2:
        return derivative(values, dx)
    if order == 4:
        f = values
        out = derivative(f, dx)
        out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dx)
        return out
    raise ValueError("order must be 2 or 4")


def cancellation_terms(phi: GridField1D, target: TargetDensity, kernel, fd_order: int = 4):
    """Return (lhs, rhs) of the cancellation identity on the grid.

    lhs = int f(phi) phi rho_inf with
        f = (rho_inf' phi) * K' - ((rho_inf' phi) * K) V' - (rho_inf phi) * K'' + ((rho_inf phi) * K') V'
    rhs = int ((phi' rho_inf) * K) (phi' rho_inf).
    rho_inf' is exact; phi' uses central differences.
    """
    x, r = _target_on(phi, target)
    dx = phi.dx
    vp = _vprime(target.potential, x)
    dr = -r * vp
    p = phi.values
    k0, k1, k2 = _kfuns(kernel)
    a = dr * p
    b = r * p
    f = convolve(a, dx, k1) - convolve(a, dx, k0) * vp - convolve(b, dx, k2) + convolve(b, dx, k1) * vp
    lhs = math.fsum(f * p * r) * dx
    g = _fd(p, dx, fd_order) * r
    rhs = math.fsum(convolve(g, dx, k0) * g) * dx
    return lhs, rhs


def cancellation_residual(phi: GridField1D, target: TargetDensity, kernel, fd_order: int = 4):
    """(lhs, rhs, |lhs - rhs|) of the cancellation identity."""
    lhs, rhs = cancellation_terms(phi, target, kernel, fd_order)
    return lhs, rhs, abs(lhs - rhs)


# ---------------------------------------------------------------------------
# KL expansion around the target


@dataclass
class ScalingReport:
    eps: np.ndarray
    kl: np.ndarray
    quadratic: np.ndarray
    residual: np.ndarray
    order: float


def _fit_order(eps, res):
    ok = res > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(eps[ok]), np.log(res[ok]), 1)[0])


def kl_linearization_residual(h: GridField1D, target: TargetDensity, eps_list) -> ScalingReport:
    """r(eps) = |KL(rho_inf + eps h | rho_inf) - eps^2 int h^2 / (2 rho_inf)| and its fitted order."""
    x, r = _target_on(h, target)
    dx = h.dx
    hv = h.values
    scale = math.fsum(np.abs(hv)) * dx
    if abs(math.fsum(hv) * dx) > 1e-10 * max(1.0, scale):
        raise ValueError("perturbation must have zero integral")
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    bad = [e for e in eps if np.any(r + e * hv < 0)]
    if bad:
        raise ValueError(f"rho_inf + eps h is negative for eps up to {max(bad, key=abs):g}")
    quad_coef = math.fsum(np.where(r > 0, hv**2 / np.where(r > 0, 2 * r, 1.0), 0.0)) * dx
    sigma = GridDensity1D(h.left, h.right, r, None)
    kls, quads = [], []
    for e in eps:
        rho = GridDensity1D(h.left, h.right, r + e * hv, None)
        kls.append(kl_divergence(rho, sigma))
        quads.append(e * e * quad_coef)
    kls, quads = np.array(kls), np.array(quads)
    res = np.abs(kls - quads)
    return ScalingReport(eps, kls, quads, res, _fit_order(eps, res))
