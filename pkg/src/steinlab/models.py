"""Potentials V, interaction kernels K and probe-based assumption checkers.

All evaluators are vectorised over leading axes: a point set has shape
``(..., d)``; ``value`` returns ``(...)``, ``grad`` returns ``(..., d)`` and
``hess`` returns ``(..., d, d)``.  For ``d = 1`` a bare scalar or a flat
array of points is accepted as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import expit, log_expit, logsumexp


def as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != dim:
        if dim == 1:
            x = x[..., None]
        else:
            raise ValueError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


def _sqnorm(x):
    return np.einsum("...i,...i->...", x, x)


def _eye_like(x):
    d = x.shape[-1]
    return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d))


# ---------------------------------------------------------------------------
# potentials


class Potential:
    """Smooth confining potential V with target density exp(-V)/Z."""

    family = "other"
    declared_p: float = 2.0

    def __init__(self, dim: int = 1):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    @property
    def argmin(self) -> np.ndarray:
        return np.zeros(self.dim)

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dim, "declared_p": self.declared_p}


class Quadratic(Potential):
    """V(x) = |x - center|^2 / (2 scale^2): a Gaussian target."""

    family = "quadratic"
    declared_p = 2.0

    def __init__(self, dim=1, center=0.0, scale=1.0):
        super().__init__(dim)
        self.center = np.broadcast_to(np.asarray(center, dtype=float), (self.dim,)).copy()
        self.scale = float(scale)
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def value(self, x):
        x = as_points(x, self.dim)
        return _sqnorm(x - self.center) / (2 * self.scale**2)

    def grad(self, x):
        x = as_points(x, self.dim)
        return (x - self.center) / self.scale**2

    def hess(self, x):
        x = as_points(x, self.dim)
        return _eye_like(x) / self.scale**2

    @property
    def argmin(self):
        return self.center.copy()

    def describe(self):
        return {**super().describe(), "center": self.center.tolist(), "scale": self.scale}


class SmoothAbs(Potential):
    """V(x) = a (sqrt(eps^2 + |x|^2) - eps), linear growth (p = 1)."""

    family = "smooth-abs"
    declared_p = 1.0

    def __init__(self, dim=1, slope=1.0, eps=1.0):
        super().__init__(dim)
        self.slope = float(slope)
        self.eps = float(eps)

    def value(self, x):
        x = as_points(x, self.dim)
        return self.slope * (np.sqrt(self.eps**2 + _sqnorm(x)) - self.eps)

    def grad(self, x):
        x = as_points(x, self.dim)
        s = np.sqrt(self.eps**2 + _sqnorm(x))
        return self.slope * x / s[..., None]

    def hess(self, x):
        x = as_points(x, self.dim)
        s = np.sqrt(self.eps**2 + _sqnorm(x))[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return self.slope * (_eye_like(x) / s - outer / s**3)

    def describe(self):
        return {**super().describe(), "slope": self.slope, "eps": self.eps}


class Quartic(Potential):
    """V(x) = |x|^4.  Violates the at-most-quadratic growth condition."""

    family = "quartic"
    declared_p = 4.0

    def value(self, x):
        x = as_points(x, self.dim)
        return _sqnorm(x) ** 2

    def grad(self, x):
        x = as_points(x, self.dim)
        return 4 * _sqnorm(x)[..., None] * x

    def hess(self, x):
        x = as_points(x, self.dim)
        r2 = _sqnorm(x)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return 4 * r2 * _eye_like(x) + 8 * outer


class Zero(Potential):
    """V = 0.  Only meaningful on bounded domains."""

    family = "zero"
    declared_p = 0.0

    def value(self, x):
        x = as_points(x, self.dim)
        return np.zeros(x.shape[:-1])

    def grad(self, x):
        return np.zeros_like(as_points(x, self.dim))

    def hess(self, x):
        x = as_points(x, self.dim)
        return np.zeros(x.shape[:-1] + (self.dim, self.dim))


def _minimise(fun, jac, starts):
    best = None
    for x0 in starts:
        res = optimize.minimize(fun, x0, jac=jac, method="BFGS", options={"gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    return np.atleast_1d(best.x), float(best.fun)


class GaussianMixture(Potential):
    """Negative log-density of an isotropic Gaussian mixture, shifted to min 0."""

    family = "gaussian-mixture-logdensity"
    declared_p = 2.0

    def __init__(self, means, weights=None, sigma=1.0):
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        super().__init__(means.shape[1])
        k = means.shape[0]
        w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (k,) or np.any(w <= 0):
            raise ValueError("mixture weights must be positive, one per component")
        self.means = means
        self.weights = w / w.sum()
        self.sigma = float(sigma)
        self._shift = 0.0
        self._argmin, vmin = _minimise(
            lambda z: float(self.value(z)), lambda z: self.grad(z), list(self.means)
        )
        self._shift = vmin

    def _log_terms(self, x):
        diff = x[..., None, :] - self.means
        return np.log(self.weights) - _sqnorm(diff) / (2 * self.sigma**2), diff

    def value(self, x):
        x = as_points(x, self.dim)
        lt, _ = self._log_terms(x)
        return -logsumexp(lt, axis=-1) - self._shift

    def grad(self, x):
        x = as_points(x, self.dim)
        lt, diff = self._log_terms(x)
        r = np.exp(lt - logsumexp(lt, axis=-1, keepdims=True))
        return np.einsum("...k,...ki->...i", r, diff) / self.sigma**2

    def hess(self, x):
        x = as_points(x, self.dim)
        lt, diff = self._log_terms(x)
        r = np.exp(lt - logsumexp(lt, axis=-1, keepdims=True))
        a = diff / self.sigma**2
        mean_a = np.einsum("...k,...ki->...i", r, a)
        second = np.einsum("...k,...ki,...kj->...ij", r, a, a)
        cov = second - mean_a[..., :, None] * mean_a[..., None, :]
        return _eye_like(x) / self.sigma**2 - cov

    @property
    def argmin(self):
        return self._argmin.copy()

    def describe(self):
        return {**super().describe(), "means": self.means.tolist(),
                "weights": self.weights.tolist(), "sigma": self.sigma}


class LogisticPosterior(Potential):
    """Bayesian logistic regression: negative log-posterior with Gaussian prior.

    ``V(theta) = sum_i [log(1 + e^{x_i.theta}) - y_i x_i.theta] + |theta|^2/(2 s^2)``
    shifted by its minimum.  The evidence (normalising constant) never enters.
    """

    family = "logistic-posterior"
    declared_p = 2.0

    def __init__(self, features, labels, prior_scale=1.0, dim=None):
        X = np.asarray(features, dtype=float)
        X = np.zeros((0, dim or 1)) if X.size == 0 else np.atleast_2d(X)
        y = np.asarray(labels, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0] and y.size:
            raise ValueError("features and labels disagree in length")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        super().__init__(X.shape[1])
        self.features = X
        self.labels = y
        self.prior_scale = float(prior_scale)
        self._shift = 0.0
        self._argmin, self._shift = _minimise(
            lambda z: float(self.value(z)), lambda z: self.grad(z), [np.zeros(self.dim)]
        )

    def value(self, x):
        x = as_points(x, self.dim)
        z = x @ self.features.T
        nll = np.sum(-log_expit(-z) - self.labels * z, axis=-1)
        return nll + _sqnorm(x) / (2 * self.prior_scale**2) - self._shift

    def grad(self, x):
        x = as_points(x, self.dim)
        z = x @ self.features.T
        return (expit(z) - self.labels) @ self.features + x / self.prior_scale**2

    def hess(self, x):
        x = as_points(x, self.dim)
        s = expit(x @ self.features.T)
        w = s * (1 - s)
        h = np.einsum("...n,ni,nj->...ij", w, self.features, self.features)
        return h + _eye_like(x) / self.prior_scale**2

    @property
    def argmin(self):
        return self._argmin.copy()

    def describe(self):
        return {**super().describe(), "n_rows": int(self.labels.size), "prior_scale": self.prior_scale}


class GaussianLikelihoodPosterior(Potential):
    """Posterior of a location parameter under Gaussian noise and a Gaussian prior."""

    family = "gaussian-likelihood"
    declared_p = 2.0

    def __init__(self, observations, noise_scale=1.0, prior_mean=0.0, prior_scale=1.0, dim=None):
        obs = np.asarray(observations, dtype=float)
        if dim is None:
            dim = obs.shape[1] if obs.ndim == 2 else 1
        obs = obs.reshape(-1, dim)
        super().__init__(dim)
        self.observations = obs
        self.noise_scale = float(noise_scale)
        self.prior_mean = np.broadcast_to(np.asarray(prior_mean, dtype=float), (dim,)).copy()
        self.prior_scale = float(prior_scale)
        self._shift = 0.0
        self._shift = float(self.value(self.argmin))

    @property
    def precision(self) -> float:
        return self.observations.shape[0] / self.noise_scale**2 + 1 / self.prior_scale**2

    @property
    def argmin(self):
        s = self.observations.sum(axis=0) / self.noise_scale**2 + self.prior_mean / self.prior_scale**2
        return s / self.precision

    def value(self, x):
        x = as_points(x, self.dim)
        diff = x[..., None, :] - self.observations
        lik = np.sum(_sqnorm(diff), axis=-1) / (2 * self.noise_scale**2)
        return lik + _sqnorm(x - self.prior_mean) / (2 * self.prior_scale**2) - self._shift

    def grad(self, x):
        x = as_points(x, self.dim)
        n = self.observations.shape[0]
        lik = (n * x - self.observations.sum(axis=0)) / self.noise_scale**2
        return lik + (x - self.prior_mean) / self.prior_scale**2

    def hess(self, x):
        return _eye_like(as_points(x, self.dim)) * self.precision


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Translation-invariant interaction kernel K(x) with derivatives to order 3."""

    name = "kernel"
    smooth = True
    # (kind id, bandwidth, extra parameter) for the compiled pairwise path
    fused = None

    def __init__(self, bandwidth=1.0, dim=1):
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        self.bandwidth = float(bandwidth)
        self.dim = int(dim)

    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def laplacian(self, x):
        return np.trace(self.hess(x), axis1=-2, axis2=-1)

    def grad_laplacian(self, x):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kernel": self.name, "bandwidth": self.bandwidth, "dim": self.dim}


class GaussianKernel(Kernel):
    """K(x) = exp(-|x|^2 / (2 h^2))."""

    name = "gaussian"

    @property
    def fused(self):
        return (0, self.bandwidth, 0.0)

    def value(self, x):
        x = as_points(x, self.dim)
        return np.exp(-_sqnorm(x) / (2 * self.bandwidth**2))

    def grad(self, x):
        x = as_points(x, self.dim)
        h2 = self.bandwidth**2
        return -x / h2 * self.value(x)[..., None]

    def hess(self, x):
        x = as_points(x, self.dim)
        h2 = self.bandwidth**2
        outer = x[..., :, None] * x[..., None, :]
        return self.value(x)[..., None, None] * (outer / h2**2 - _eye_like(x) / h2)

    def laplacian(self, x):
        x = as_points(x, self.dim)
        h2 = self.bandwidth**2
        return self.value(x) * (_sqnorm(x) / h2**2 - self.dim / h2)

    def grad_laplacian(self, x):
        x = as_points(x, self.dim)
        h2 = self.bandwidth**2
        k = self.value(x)[..., None]
        r2 = _sqnorm(x)[..., None]
        return k * x * ((2 + self.dim) / h2**2 - r2 / h2**3)


class InverseMultiquadric(Kernel):
    """K(x) = (1 + |x|^2/h^2)^beta with beta < 0 (default -1/2)."""

    name = "imq"

    def __init__(self, bandwidth=1.0, dim=1, beta=-0.5):
        super().__init__(bandwidth, dim)
        if beta >= 0:
            raise ValueError("beta must be negative")
        self.beta = float(beta)

    @property
    def fused(self):
        return (1, self.bandwidth, self.beta)

    def _u(self, x):
        return 1 + _sqnorm(x) / self.bandwidth**2

    def value(self, x):
        x = as_points(x, self.dim)
        return self._u(x) ** self.beta

    def grad(self, x):
        x = as_points(x, self.dim)
        b, h2 = self.beta, self.bandwidth**2
        return (2 * b / h2) * (self._u(x) ** (b - 1))[..., None] * x

    def hess(self, x):
        x = as_points(x, self.dim)
        b, h2 = self.beta, self.bandwidth**2
        u = self._u(x)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return (2 * b / h2) * (u ** (b - 1) * _eye_like(x) + (b - 1) * (2 / h2) * u ** (b - 2) * outer)

    def laplacian(self, x):
        x = as_points(x, self.dim)
        b, h2, d = self.beta, self.bandwidth**2, self.dim
        u = self._u(x)
        r2 = _sqnorm(x)
        return (2 * b / h2) * (d * u ** (b - 1) + (b - 1) * (2 * r2 / h2) * u ** (b - 2))

    def grad_laplacian(self, x):
        x = as_points(x, self.dim)
        b, h2, d = self.beta, self.bandwidth**2, self.dim
        u = self._u(x)[..., None]
        r2 = _sqnorm(x)[..., None]
        first = d * (b - 1) * u ** (b - 2) * (2 * x / h2)
        second = (b - 1) * (2 / h2) * (2 * x * u ** (b - 2) + r2 * (b - 2) * u ** (b - 3) * (2 * x / h2))
        return (2 * b / h2) * (first + second)

    def describe(self):
        return {**super().describe(), "beta": self.beta}


class TriangleKernel(Kernel):
    """Fejer-type kernel max(0, 1 - |x|/h) in one dimension.  Not smooth."""

    name = "triangle"
    smooth = False

    def __init__(self, bandwidth=1.0, dim=1):
        if dim != 1:
            raise ValueError("triangle kernel is one-dimensional")
        super().__init__(bandwidth, 1)

    def value(self, x):
        x = as_points(x, 1)[..., 0]
        return np.maximum(0.0, 1 - np.abs(x) / self.bandwidth)

    def grad(self, x):
        x = as_points(x, 1)
        inside = np.abs(x) < self.bandwidth
        return np.where(inside, -np.sign(x) / self.bandwidth, 0.0)

    def hess(self, x):
        x = as_points(x, 1)
        return np.zeros(x.shape[:-1] + (1, 1))

    def grad_laplacian(self, x):
        return np.zeros_like(as_points(x, 1))


class BoxKernel(Kernel):
    """Smoothed indicator of |x| <= h (logistic edges of width w).  Not positive definite."""

    name = "box"

    def __init__(self, bandwidth=1.0, dim=1, edge=0.02):
        if dim != 1:
            raise ValueError("box kernel is one-dimensional")
        super().__init__(bandwidth, 1)
        self.edge = float(edge) * self.bandwidth

    def _k(self, r):
        return expit(-(r - self.bandwidth) / self.edge)

    def value(self, x):
        return self._k(np.abs(as_points(x, 1)[..., 0]))

    def grad(self, x):
        x = as_points(x, 1)
        k = self._k(np.abs(x))
        return -np.sign(x) * k * (1 - k) / self.edge

    def hess(self, x):
        x = as_points(x, 1)
        k = self._k(np.abs(x))
        return (k * (1 - k) * (1 - 2 * k) / self.edge**2)[..., None]

    def grad_laplacian(self, x):
        x = as_points(x, 1)
        k = self._k(np.abs(x))
        return -np.sign(x) * k * (1 - k) * (1 - 6 * k + 6 * k**2) / self.edge**3


POTENTIALS = {
    "quadratic": Quadratic,
    "smooth-abs": SmoothAbs,
    "quartic": Quartic,
    "zero": Zero,
    "gaussian-mixture": GaussianMixture,
    "logistic-posterior": LogisticPosterior,
    "gaussian-likelihood": GaussianLikelihoodPosterior,
}

KERNELS = {
    "gaussian": GaussianKernel,
    "imq": InverseMultiquadric,
    "triangle": TriangleKernel,
    "box": BoxKernel,
}


def make_potential(name: str, **params) -> Potential:
    try:
        cls = POTENTIALS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(POTENTIALS)}") from None
    return cls(**params)


def make_kernel(name: str, **params) -> Kernel:
    try:
        cls = KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None
    return cls(**params)


# ---------------------------------------------------------------------------
# assumption checkers


@dataclass
class Witness:
    probe: object
    quantity: str
    value: float
    note: str = ""


@dataclass
class AssumptionReport:
    """Outcome of a numeric probe of one assumption.  Probe-based, not a proof."""

    name: str
    passed: bool
    witnesses: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    grid: str = ""
    probe_based: bool = True

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "probe_based": self.probe_based,
            "grid": self.grid,
            "witnesses": [w.__dict__ for w in self.witnesses],
            "details": self.details,
        }


def _directions(dim):
    dirs = [np.eye(dim)[k] for k in range(dim)]
    dirs += [-e for e in dirs]
    if dim > 1:
        dirs.append(np.ones(dim) / np.sqrt(dim))
    return dirs


def _loglog_slope(r, q):
    return float(np.polyfit(np.log(r), np.log(q), 1)[0])


def check_growth(potential: Potential, probe_radii, *, declared_p=None, c_max=1e6, slope_tol=0.2,
                 inner_radius=1.0, directions=None) -> AssumptionReport:
    """Probe the power-law growth of V along rays.

    Fits the slope of log V against log |x| over the outer half of the radii
    on each ray (growth is a property at infinity) and finds the smallest
    sandwich constant C with (|x|^p - 1)/C <= V <= C(|x|^p + 1) beyond
    ``inner_radius``.  Passes when every slope is within ``slope_tol`` of the
    declared exponent and C <= ``c_max``.
    """
    r = np.asarray(probe_radii, dtype=float)
    if r.ndim != 1 or np.any(np.diff(r) <= 0):
        raise ValueError("probe radii must be strictly increasing")
    if r[-1] < 10:
        raise ValueError("largest probe radius must be at least 10")
    p = potential.declared_p if declared_p is None else float(declared_p)
    dirs = _directions(potential.dim) if directions is None else [np.asarray(e, float) for e in directions]
    slopes, witnesses, c_needed = [], [], 1.0
    grid = f"radii {r[0]:g}..{r[-1]:g} ({r.size}) on {len(dirs)} rays"
    for e in dirs:
        e = e / np.linalg.norm(e)
        with np.errstate(over="ignore", invalid="ignore"):
            v = potential.value(r[:, None] * e)
        bad = ~np.isfinite(v)
        if bad.any():
            k = int(np.argmax(bad))
            w = Witness(probe=float(r[k]), quantity="V", value=float("inf"), note="probe overflow")
            return AssumptionReport("growth", False, [w], {"direction": e.tolist()}, grid)
        ok = v > 0
        tail = ok & (r >= np.median(r))
        if tail.sum() < 2:
            slope = 0.0
        else:
            slope = _loglog_slope(r[tail], v[tail])
        slopes.append(slope)
        outer = (r > inner_radius) & ok
        rp = r[outer] ** p
        upper = v[outer] / (rp + 1)
        lower = np.where(rp > 1, (rp - 1) / v[outer], 0.0)
        c_here = float(max(upper.max(initial=0), lower.max(initial=0)))
        c_needed = max(c_needed, c_here)
        if abs(slope - p) > slope_tol:
            witnesses.append(Witness(probe=e.tolist(), quantity="fitted slope", value=slope,
                                     note=f"declared p={p:g}"))
    if c_needed > c_max:
        witnesses.append(Witness(probe=None, quantity="sandwich constant", value=c_needed,
                                 note=f"exceeds {c_max:g}"))
    passed = not witnesses
    if passed:
        witnesses.append(Witness(probe=None, quantity="sandwich constant", value=c_needed))
    return AssumptionReport(
        "growth", passed, witnesses,
        {"slopes": slopes, "declared_p": p, "sandwich_C": c_needed, "c_max": c_max},
        grid,
    )


def _bl_along_line(f, tau):
    sup = float(np.max(np.abs(f)))
    lip = float(np.max(np.abs(np.diff(f)) / np.diff(tau))) if f.size > 1 else 0.0
    return sup + lip


def check_condition_B3(potential: Potential, kernel: Kernel, probe_radii=None, *, spacing=0.02,
                       trend_tol=0.2) -> AssumptionReport:
    """Probe the joint growth condition on (V, K) along rays.

    For each probe x the two functions of y

        h_x(y) = grad V(x) . grad K(x - y) / (1 + V(y))
        g_x(y) = grad V(x) . grad V(y) K(x - y) / (1 + V(y))

    are sampled on the line through the origin containing x and their BL
    norm is estimated as sup + largest difference quotient.  The verdict is
    "pass" when every estimate is finite and the envelope q(r) shows no growth
    (log-log slope <= ``trend_tol``) over the outer half of the radii.
    """
    if probe_radii is None:
        probe_radii = np.linspace(0.0, 20.0, 81)
    r = np.asarray(probe_radii, dtype=float)
    if r.max() < 20:
        raise ValueError("probe radii must reach at least 20")
    h = kernel.bandwidth
    reach = r.max() + 8 * h
    tau = np.arange(-reach, reach + spacing / 2, spacing)
    grid = f"x radii 0..{r.max():g} ({r.size}); y spacing {spacing:g} on |y| <= {reach:g}"
    q = np.zeros(r.size)
    best = (0.0, None)
    dirs = _directions(potential.dim)
    for e in dirs:
        e = e / np.linalg.norm(e)
        y = tau[:, None] * e
        with np.errstate(over="ignore", invalid="ignore"):
            vy = potential.value(y)
            gy = potential.grad(y)
        for k, rad in enumerate(r):
            x = rad * e
            with np.errstate(over="ignore", invalid="ignore"):
                gx = potential.grad(x)
                hfun = (kernel.grad(x - y) @ gx) / (1 + vy)
                gfun = (gy @ gx) * kernel.value(x - y) / (1 + vy)
                bl_h = _bl_along_line(hfun, tau)
                bl_g = _bl_along_line(gfun, tau)
            val = max(bl_h, bl_g)
            if not np.isfinite(val):
                w = Witness(probe=x.tolist(), quantity="BL estimate", value=float("inf"), note="overflow")
                return AssumptionReport("condition_B3", False, [w], {}, grid)
            q[k] = max(q[k], val)
            if bl_g >= best[0] and bl_g >= bl_h:
                j = int(np.argmax(np.abs(gfun)))
                best = (bl_g, (x.tolist(), y[j].tolist(), "g"))
            elif bl_h >= best[0]:
                j = int(np.argmax(np.abs(hfun)))
                best = (bl_h, (x.tolist(), y[j].tolist(), "h"))
    outer = r >= np.median(r)
    if q.max() == 0.0:
        slope = 0.0
    else:
        pos = outer & (q > 0) & (r > 0)
        slope = _loglog_slope(r[pos], q[pos]) if pos.sum() >= 2 else 0.0
    passed = slope <= trend_tol
    x_w, y_w, which = best[1] if best[1] is not None else (None, None, "")
    witnesses = [
        Witness(probe={"x": x_w, "y": y_w}, quantity=f"BL estimate of {which}", value=float(best[0]),
                note="largest probed value"),
        Witness(probe="outer half of radii", quantity="log-log growth slope", value=slope,
                note=f"threshold {trend_tol:g}"),
    ]
    return AssumptionReport(
        "condition_B3", bool(passed), witnesses,
        {"radii": r.tolist(), "envelope": q.tolist(), "growth_slope": slope}, grid,
    )


def check_positive_definite(kernel: Kernel, n: int = 1024, half_width=None, rtol=1e-8) -> AssumptionReport:
    """Bochner check in 1-D: the DFT of the sampled kernel must be real and >= 0."""
    if n < 256 or n & (n - 1):
        raise ValueError("n must be a power of two >= 256")
    L = 16 * kernel.bandwidth if half_width is None else float(half_width)
    dx = 2 * L / n
    x = (np.arange(n) - n // 2) * dx
    samples = np.asarray(kernel.value(x[:, None]), dtype=float).reshape(n)
    spectrum = np.fft.fft(np.fft.ifftshift(samples)) * dx
    scale = float(np.max(np.abs(spectrum)))
    re_min = float(spectrum.real.min())
    im_max = float(np.abs(spectrum.imag).max())
    passed = re_min >= -rtol * scale and im_max <= rtol * scale
    k = int(np.argmin(spectrum.real))
    freq = float(np.fft.fftfreq(n, d=dx)[k])
    witnesses = [
        Witness(probe=freq, quantity="min real part of transform", value=re_min),
        Witness(probe=None, quantity="max imaginary part", value=im_max),
    ]
    return AssumptionReport(
        "positive_definite", bool(passed), witnesses,
        {"scale": scale, "n": n, "half_width": L},
        f"{n} nodes on [-{L:g}, {L:g})",
    )
