"""Distances between measures: Wasserstein-p, (weighted) bounded-Lipschitz norms, KL, Stein dissipation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from ._grid import convolve, derivative
from .measures import GridDensity1D, ParticleEnsemble, SignedDiscreteMeasure, as_signed

KL_TOL = 1e-300
FEAS_TOL = 1e-9


def _ensemble_points(a):
    if isinstance(a, ParticleEnsemble):
        return a.positions
    x = np.asarray(a, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def wasserstein_1d(p: float, a, b) -> float:
    """W_p between equal-size 1-D ensembles through the monotone (sorted) coupling."""
    if p < 1:
        raise ValueError("p must be >= 1")
    x, y = _ensemble_points(a), _ensemble_points(b)
    if x.shape[1] != 1 or y.shape[1] != 1:
        raise ValueError("wasserstein_1d needs one-dimensional ensembles")
    if x.shape[0] != y.shape[0]:
        raise ValueError("unequal ensemble sizes")
    diff = np.abs(np.sort(x[:, 0]) - np.sort(y[:, 0]))
    return float(np.mean(diff**p) ** (1.0 / p))


def wasserstein_assignment(p: float, a, b) -> float:
    """W_p between equal-size ensembles in any dimension via an exact assignment solve."""
    if p < 1:
        raise ValueError("p must be >= 1")
    x, y = _ensemble_points(a), _ensemble_points(b)
    if x.shape[0] != y.shape[0]:
        raise ValueError("unequal ensemble sizes")
    if x.shape[1] != y.shape[1]:
        raise ValueError("dimension mismatch")
    if x.shape[0] > 4096:
        raise ValueError("assignment solver limited to N <= 4096")
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2) ** p
    rows, cols = optimize.linear_sum_assignment(cost)
    total = math.fsum(cost[rows, cols])
    return float((total / x.shape[0]) ** (1.0 / p))


def wasserstein_permutations(p: float, a, b) -> float:
    """Exhaustive minimum over all couplings by permutation; for tiny N only."""
    x, y = _ensemble_points(a), _ensemble_points(b)
    n = x.shape[0]
    if n != y.shape[0]:
        raise ValueError("unequal ensemble sizes")
    if n > 8:
        raise ValueError("permutation search limited to N <= 8")
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2) ** p
    best = min(math.fsum(cost[i, s] for i, s in enumerate(perm)) for perm in itertools.permutations(range(n)))
    return float((best / n) ** (1.0 / p))


def wasserstein_1d_weighted(p: float, x, wx, y, wy) -> float:
    """W_p between two weighted 1-D discrete probability measures (quantile coupling)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    wx = np.asarray(wx, dtype=float).reshape(-1)
    wy = np.asarray(wy, dtype=float).reshape(-1)
    if np.any(wx < 0) or np.any(wy < 0):
        raise ValueError("weights must be nonnegative")
    ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, wx, y, wy = x[ix], wx[ix] / wx.sum(), y[iy], wy[iy] / wy.sum()
    cx, cy = np.cumsum(wx), np.cumsum(wy)
    cx[-1] = cy[-1] = 1.0
    levels = np.union1d(cx, cy)
    widths = np.diff(np.concatenate([[0.0], levels]))
    qx = x[np.minimum(np.searchsorted(cx, levels, side="left"), x.size - 1)]
    qy = y[np.minimum(np.searchsorted(cy, levels, side="left"), y.size - 1)]
    return float(np.sum(widths * np.abs(qx - qy) ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# bounded-Lipschitz norms


@dataclass
class LPResult:
    value: float
    phi: np.ndarray
    status: str
    iterations: int
    n_atoms: int = 0

    def feasible(self, positions, tol: float = FEAS_TOL) -> bool:
        phi = self.phi
        if phi.size == 0:
            return True
        if np.any(np.abs(phi) > 1 + tol):
            return False
        x = np.asarray(positions, dtype=float)
        if phi.size > 3000:
            return _feasible_blocked(x, phi, tol)
        dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
        return bool(np.all(phi[:, None] - phi[None, :] <= dist + tol))


def _feasible_blocked(x, phi, tol):
    for lo in range(0, phi.size, 512):
        d = np.linalg.norm(x[lo:lo + 512, None, :] - x[None, :, :], axis=2)
        if np.any(phi[lo:lo + 512, None] - phi[None, :] > d + tol):
            return False
    return True


def _objective_coefficients(mu: SignedDiscreteMeasure, potential):
    if potential is None:
        return mu.weights.copy()
    return mu.weights * (1.0 + potential.value(mu.positions))


def _lipschitz_pairs(x):
    """Constraint pairs (i, j) with distance; only adjacent pairs in 1-D."""
    n, d = x.shape
    if d == 1:
        order = np.argsort(x[:, 0], kind="stable")
        i, j = order[:-1], order[1:]
        dist = x[j, 0] - x[i, 0]
        keep = dist < 2.0
        return i[keep], j[keep], dist[keep]
    ii, jj, dd = [], [], []
    for lo in range(0, n, 256):
        dist = np.linalg.norm(x[lo:lo + 256, None, :] - x[None, :, :], axis=2)
        a, b = np.nonzero(dist < 2.0)
        a = a + lo
        keep = a < b
        ii.append(a[keep])
        jj.append(b[keep])
        dd.append(dist[a[keep] - lo, b[keep]])
    return np.concatenate(ii), np.concatenate(jj), np.concatenate(dd)


def lipschitz_repair(x, phi):
    """Largest function below phi that is 1-Lipschitz on the atoms, clipped to [-1, 1].

    Equal to phi whenever phi is already feasible.
    """
    x = np.asarray(x, dtype=float)
    phi = np.asarray(phi, dtype=float).copy()
    if x.shape[1] == 1:
        order = np.argsort(x[:, 0], kind="stable")
        xs, ps = x[order, 0], phi[order]
        for k in range(1, ps.size):
            ps[k] = min(ps[k], ps[k - 1] + (xs[k] - xs[k - 1]))
        for k in range(ps.size - 2, -1, -1):
            ps[k] = min(ps[k], ps[k + 1] + (xs[k + 1] - xs[k]))
        phi[order] = ps
    else:
        for lo in range(0, phi.size, 512):
            d = np.linalg.norm(x[lo:lo + 512, None, :] - x[None, :, :], axis=2)
            phi[lo:lo + 512] = np.min(phi[None, :] + d, axis=1)
    return np.clip(phi, -1.0, 1.0)


def bl_weighted_norm(mu, potential=None, max_atoms: int = 4000) -> LPResult:
    """Weighted bounded-Lipschitz norm sup { sum_i c_i phi_i : |phi| <= 1, Lip(phi) <= 1 }.

    c_i = w_i (1 + V(x_i)), or c_i = w_i without a potential.  The LP is
    solved over the atom values; any feasible vector extends to a global
    test function.  The optimiser is repaired to exact feasibility and the
    value recomputed from it, so the value is always attained.
    """
    mu = as_signed(mu).canonicalize()
    n = mu.n_atoms
    if n == 0:
        return LPResult(0.0, np.zeros(0), "optimal", 0, 0)
    if n > max_atoms:
        raise ValueError(f"{n} atoms exceeds the LP limit {max_atoms}")
    c = _objective_coefficients(mu, potential)
    x = mu.positions
    i, j, dist = _lipschitz_pairs(x)
    if i.size == 0:
        phi = np.sign(c)
        return LPResult(float(np.sum(np.abs(c))), phi, "optimal", 0, n)
    m = i.size
    rows = np.repeat(np.arange(m), 2)
    cols = np.stack([i, j], axis=1).ravel()
    vals = np.tile([1.0, -1.0], m)
    a1 = sparse.csr_matrix((vals, (rows, cols)), shape=(m, n))
    a_ub = sparse.vstack([a1, -a1]).tocsr()
    b_ub = np.concatenate([dist, dist])
    scale = float(np.max(np.abs(c)))
    res = optimize.linprog(
        -c / scale, A_ub=a_ub, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.x is None:
        return LPResult(0.0, np.zeros(n), "iteration limit", int(getattr(res, "nit", 0)), n)
    phi = lipschitz_repair(x, res.x)
    value = math.fsum(c * phi)
    status = "optimal" if res.status == 0 else "iteration limit"
    return LPResult(float(value), phi, status, int(res.nit), n)


def bl_bruteforce_oracle(mu, potential=None, grid_resolution: int = 41) -> float:
    """Exhaustive grid search over phi in [-1, 1]^k (k <= 4 atoms).

    Only Lipschitz-feasible tuples count; the result is within
    sum|c_i| * (grid spacing) of the true optimum.
    """
    mu = as_signed(mu).canonicalize()
    k = mu.n_atoms
    if k > 4:
        raise ValueError("brute-force oracle limited to 4 atoms")
    if k == 0:
        return 0.0
    c = _objective_coefficients(mu, potential)
    grid = np.linspace(-1.0, 1.0, grid_resolution)
    dist = np.linalg.norm(mu.positions[:, None, :] - mu.positions[None, :, :], axis=2)
    best = -math.inf
    # outer loop over the first coordinate keeps the tuple block small
    rest = np.stack(np.meshgrid(*([grid] * (k - 1)), indexing="ij"), axis=-1).reshape(-1, k - 1) \
        if k > 1 else np.zeros((1, 0))
    for g0 in grid:
        phi = np.concatenate([np.full((rest.shape[0], 1), g0), rest], axis=1)
        ok = np.ones(phi.shape[0], dtype=bool)
        for a in range(k):
            for b in range(a + 1, k):
                ok &= np.abs(phi[:, a] - phi[:, b]) <= dist[a, b] + 1e-12
        if ok.any():
            best = max(best, float(np.max(phi[ok] @ c)))
    return best


def bl_grid_spacing(grid_resolution: int) -> float:
    return 2.0 / (grid_resolution - 1)


# ---------------------------------------------------------------------------
# grid functionals


def kl_divergence(rho: GridDensity1D, sigma: GridDensity1D) -> float:
    """sum rho log(rho/sigma) dx with 0 log 0 = 0; +inf without absolute continuity."""
    if not rho.same_grid(sigma):
        raise ValueError("grid mismatch")
    r, s = rho.values, sigma.values
    live = r > KL_TOL
    if np.any(live & (s <= KL_TOL)):
        return math.inf
    terms = r[live] * np.log(r[live] / s[live])
    return float(math.fsum(terms) * rho.dx)


def stein_score(rho: GridDensity1D, potential) -> np.ndarray:
    """s = rho' + rho V' at cell centres, derivative by central differences."""
    x = rho.centers
    return derivative(rho.values, rho.dx) + rho.values * potential.grad(x[:, None])[:, 0]


def stein_dissipation(rho: GridDensity1D, potential, kernel, method: str = "weak") -> float:
    """Dissipation integral int s (K*s) dx with s = rho' + rho V'.

    ``method="fd"`` differentiates rho by central differences.  ``"weak"``
    moves the derivative onto the kernel: with w = K*(rho V') + K'*rho,
    K*s = w and int s w = int rho (V' w - w'), where w' uses K'' and K'
    exactly.  Both are quadratures of the same integral; "weak" does not
    differentiate the data.
    """
    x = rho.centers
    dx = rho.dx
    r = rho.values
    if method == "fd":
        s = stein_score(rho, potential)
        ks = convolve(s, dx, kernel.value)
        return float(math.fsum(s * ks) * dx)
    if method != "weak":
        raise ValueError("method must be 'weak' or 'fd'")
    vp = potential.grad(x[:, None])[:, 0]
    k1 = lambda z: kernel.grad(z[..., None])[..., 0]  # noqa: E731
    k2 = lambda z: kernel.hess(z[..., None])[..., 0, 0]  # noqa: E731
    w = convolve(r * vp, dx, kernel.value) + convolve(r, dx, k1)
    dw = convolve(r * vp, dx, k1) + convolve(r, dx, k2)
    return float(math.fsum(r * (vp * w - dw)) * dx)


def stein_dissipation_spectral(rho: GridDensity1D, potential, kernel, pad: int = 2) -> float:
    """Fourier-side evaluation: int s (K*s) ~ sum |s_hat|^2 K_hat on a zero-padded grid."""
    s = stein_score(rho, potential)
    n = s.size
    m = pad * n
    dx = rho.dx
    z = (np.arange(m) - m // 2) * dx
    kh = np.fft.fft(np.fft.ifftshift(kernel.value(z[:, None]))).real * dx
    sh = np.fft.fft(s, m)
    return float(np.sum(np.abs(sh) ** 2 * kh).real * dx / m)
