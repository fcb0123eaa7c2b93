"""Discrete and gridded measures, the target density and basic functionals."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

MERGE_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ParticleEnsemble:
    """N equally weighted particles; the empirical measure (1/N) sum delta_{x_i}."""

    positions: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("positions must be a non-empty (N, d) array")
        if not np.all(np.isfinite(x)):
            raise ValueError("particle positions must be finite")
        object.__setattr__(self, "positions", _frozen(x))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def mass(self) -> float:
        return 1.0

    def as_signed(self) -> "SignedDiscreteMeasure":
        return SignedDiscreteMeasure(self.positions, self.weights)


@dataclass(frozen=True)
class SignedDiscreteMeasure:
    """Finite sum of weighted Dirac atoms; weights may have either sign."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if x.ndim == 1:
            x = x[:, None] if w.size != 1 or x.size == 1 else x[None, :]
        if x.ndim != 2 or x.shape[0] != w.size:
            raise ValueError("need one weight per atom")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise ValueError("atoms and weights must be finite")
        object.__setattr__(self, "positions", _frozen(x))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def empty(cls, dim=1):
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.weights.size

    def mass(self) -> float:
        return float(np.sum(self.weights))

    def scaled(self, factor: float) -> "SignedDiscreteMeasure":
        return SignedDiscreteMeasure(self.positions, factor * self.weights)

    def positive_part(self) -> "SignedDiscreteMeasure":
        keep = self.weights > 0
        return SignedDiscreteMeasure(self.positions[keep], self.weights[keep])

    def negative_part(self) -> "SignedDiscreteMeasure":
        keep = self.weights < 0
        return SignedDiscreteMeasure(self.positions[keep], -self.weights[keep])

    def total_variation(self) -> "SignedDiscreteMeasure":
        return SignedDiscreteMeasure(self.positions, np.abs(self.weights))

    def canonicalize(self, tol: float = MERGE_TOL) -> "SignedDiscreteMeasure":
        """Merge atoms closer than ``tol`` in sup-distance and drop zero weights.

        Atoms come out sorted lexicographically.
        """
        if self.n_atoms == 0:
            return self
        x, w = self.positions, self.weights
        order = np.lexsort(x.T[::-1])
        x, w = x[order], w[order]
        groups = np.zeros(len(w), dtype=int)
        g = 0
        anchor = x[0]
        for i in range(1, len(w)):
            if np.max(np.abs(x[i] - anchor)) > tol:
                g += 1
                anchor = x[i]
            groups[i] = g
        merged_w = np.zeros(g + 1)
        np.add.at(merged_w, groups, w)
        first = np.concatenate([[0], np.flatnonzero(np.diff(groups)) + 1])
        merged_x = x[first]
        keep = merged_w != 0.0
        return SignedDiscreteMeasure(merged_x[keep], merged_w[keep])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x_{k + 1}" for k in range(self.dim)] + ["weight"])
            for xi, wi in zip(self.positions, self.weights):
                wr.writerow([repr(float(v)) for v in xi] + [repr(float(wi))])

    @classmethod
    def from_csv(cls, path) -> "SignedDiscreteMeasure":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        d = len(header) - 1
        arr = np.array(body, dtype=float).reshape(-1, d + 1)
        return cls(arr[:, :d], arr[:, d])


def as_signed(m) -> SignedDiscreteMeasure:
    if isinstance(m, SignedDiscreteMeasure):
        return m
    if isinstance(m, ParticleEnsemble):
        return m.as_signed()
    raise TypeError(f"not a discrete measure: {type(m).__name__}")


def subtract(a, b) -> SignedDiscreteMeasure:
    """a - b as a canonicalised signed measure."""
    a, b = as_signed(a), as_signed(b)
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    x = np.concatenate([a.positions, b.positions])
    w = np.concatenate([a.weights, -b.weights])
    return SignedDiscreteMeasure(x, w).canonicalize()


@dataclass(frozen=True)
class GridDensity1D:
    """Cell-averaged density on a uniform 1-D grid of ``n_cells`` cells."""

    left: float
    right: float
    values: np.ndarray
    target_mass: float | None = 1.0
    mass_tol: float = 1e-8

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not self.right > self.left:
            raise ValueError("need right > left")
        if v.size < 2:
            raise ValueError("need at least two cells")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("density values must be finite and nonnegative")
        object.__setattr__(self, "values", _frozen(v))
        if self.target_mass is not None and abs(self.mass() - self.target_mass) > self.mass_tol:
            raise ValueError(f"grid mass {self.mass():.12g} differs from {self.target_mass}")

    @classmethod
    def from_function(cls, fn, left, right, n_cells, normalize=True):
        dx = (right - left) / n_cells
        centers = left + dx * (np.arange(n_cells) + 0.5)
        v = np.asarray(fn(centers), dtype=float)
        if normalize:
            v = v / (v.sum() * dx)
        return cls(left, right, v)

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return (self.right - self.left) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.left + self.dx * (np.arange(self.n_cells) + 0.5)

    @property
    def faces(self) -> np.ndarray:
        return self.left + self.dx * np.arange(self.n_cells + 1)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.dx)

    def same_grid(self, other) -> bool:
        return (self.n_cells == other.n_cells and math.isclose(self.left, other.left)
                and math.isclose(self.right, other.right))

    def with_values(self, values, target_mass="keep") -> "GridDensity1D":
        tm = self.target_mass if target_mass == "keep" else target_mass
        return GridDensity1D(self.left, self.right, values, tm, self.mass_tol)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# left={self.left!r} right={self.right!r} n_cells={self.n_cells}\n")
            wr = csv.writer(fh)
            wr.writerow(["cell", "value"])
            for i, v in enumerate(self.values):
                wr.writerow([i, repr(float(v))])

    @classmethod
    def from_csv(cls, path, target_mass=None) -> "GridDensity1D":
        with open(path) as fh:
            head = fh.readline().lstrip("#").split()
            meta = dict(kv.split("=") for kv in head)
            rows = list(csv.reader(fh))[1:]
        vals = np.array([float(r[1]) for r in rows])
        if int(meta["n_cells"]) != vals.size:
            raise ValueError("n_cells header does not match the data")
        return cls(float(meta["left"]), float(meta["right"]), vals, target_mass)


# ---------------------------------------------------------------------------
# the target density exp(-V)/Z


def _box(domain, dim):
    lo, hi = (np.asarray(b, dtype=float) for b in domain)
    lo = np.broadcast_to(lo, (dim,)).copy()
    hi = np.broadcast_to(hi, (dim,)).copy()
    if np.any(hi <= lo):
        raise ValueError("empty domain")
    return lo, hi


def _trapezoid_integral(potential, lo, hi, res):
    d = lo.size
    axes = [np.linspace(lo[k], hi[k], res) for k in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.exp(-potential.value(mesh))
    if not np.all(np.isfinite(f)):
        raise FloatingPointError("potential overflow")
    for k in reversed(range(d)):
        f = np.trapezoid(f, axes[k], axis=k)
    return float(f)


def compute_Z(potential, domain, resolution: int = 64, rtol: float = 1e-6, max_resolution=None) -> float:
    """Trapezoid approximation of the integral of exp(-V) over a box.

    The resolution is doubled until successive values agree to ``rtol``.
    """
    if potential.dim > 2:
        raise ValueError("unsupported dimension for quadrature")
    if resolution < 64:
        raise ValueError("resolution must be at least 64 per axis")
    lo, hi = _box(domain, potential.dim)
    if max_resolution is None:
        max_resolution = 2**20 if potential.dim == 1 else 4096
    res = int(resolution)
    z = _trapezoid_integral(potential, lo, hi, res)
    while True:
        res2 = 2 * res - 1
        z2 = _trapezoid_integral(potential, lo, hi, res2)
        if abs(z2 - z) <= rtol * abs(z2):
            return z2
        if res2 > max_resolution:
            raise FloatingPointError(f"normalisation did not converge (resolution {res2})")
        res, z = res2, z2


def truncation_box(potential, threshold: float = 24.0, step: float = 0.5, max_radius: float = 1e3):
    """Smallest centred box around the minimiser whose boundary has V >= threshold."""
    c = potential.argmin
    d = potential.dim
    r = step
    while r <= max_radius:
        if d == 1:
            pts = np.array([[c[0] - r], [c[0] + r]])
        else:
            s = np.linspace(-r, r, 65)
            edges = []
            for k in range(d):
                for sign in (-1, 1):
                    p = np.tile(c, (s.size, 1)) + 0.0
                    p[:, (k + 1) % d] += s
                    p[:, k] = c[k] + sign * r
                    edges.append(p)
            pts = np.concatenate(edges)
        with np.errstate(over="ignore"):
            v = potential.value(pts)
        if np.all(v >= threshold):
            return c - r, c + r
        r += step
    raise ValueError("no truncation box found: potential does not grow")


@dataclass(frozen=True)
class TargetDensity:
    """rho_inf = exp(-V)/Z together with its truncation box and normalisation."""

    potential: object
    Z: float
    lo: np.ndarray
    hi: np.ndarray
    resolution: int = 0
    tail_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_potential(cls, potential, domain=None, resolution=256, threshold=24.0):
        if domain is None:
            domain = truncation_box(potential, threshold)
        lo, hi = _box(domain, potential.dim)
        z = compute_Z(potential, (lo, hi), resolution)
        tail = _tail_estimate(potential, lo, hi) / z
        return cls(potential, z, lo, hi, resolution, tail)

    @property
    def dim(self) -> int:
        return self.potential.dim

    def density(self, x):
        return np.exp(-self.potential.value(x)) / self.Z

    def grad_density(self, x):
        return -self.density(x)[..., None] * self.potential.grad(x)

    def score(self, x):
        """grad log rho_inf = -grad V; independent of Z."""
        return -self.potential.grad(x)


def _tail_estimate(potential, lo, hi):
    """Laplace-type estimate of the mass of exp(-V) outside the box (1-D exact rate)."""
    if potential.dim == 1:
        ends = np.array([[lo[0]], [hi[0]]])
        v = potential.value(ends)
        g = np.abs(potential.grad(ends)[:, 0])
        g = np.where(g > 0, g, np.inf)
        return float(np.sum(np.exp(-v) / g)) if np.all(np.isfinite(g)) else float(np.sum(np.exp(-v)))
    r = float(np.min(hi - lo)) / 2
    c = (hi + lo) / 2
    u = np.eye(potential.dim)
    pts = np.concatenate([c + r * u, c - r * u])
    v = potential.value(pts)
    return float(np.max(np.exp(-v)) * (2 * r) ** (potential.dim - 1) * 2 * potential.dim)


def quadrature_measure(target: TargetDensity, n_atoms: int) -> SignedDiscreteMeasure:
    """Deterministic discrete stand-in for rho_inf on uniform nodes.

    Nodes span the truncation box (``n_atoms`` per axis) with weights
    exp(-V(x_i)) dx / Z.
    """
    if n_atoms < 2:
        raise ValueError("need at least two atoms per axis")
    d = target.dim
    if d > 2:
        raise ValueError("unsupported dimension for quadrature")
    axes = [np.linspace(target.lo[k], target.hi[k], n_atoms) for k in range(d)]
    cell = np.prod([(target.hi[k] - target.lo[k]) / (n_atoms - 1) for k in range(d)])
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    w = np.exp(-target.potential.value(pts)) * cell / target.Z
    return SignedDiscreteMeasure(pts, w)


def sample_target(target_or_potential, n: int, rng: np.random.Generator, inflation: float = 1.5,
                  probe=None) -> np.ndarray:
    """I.i.d. draws from exp(-V)/Z by rejection against a Gaussian envelope.

    In 1-D/2-D the envelope is centred at the mean of exp(-V) on a grid over
    the truncation box, with standard deviation ``inflation`` times the largest
    axis of its covariance; this keeps multimodal targets cheap.  In higher
    dimension it is centred at the minimiser with the inflated inverse Hessian
    scale.  The acceptance bound is the largest density ratio seen on probe
    points (the grid, or envelope draws) with a 5% margin.
    """
    pot = getattr(target_or_potential, "potential", target_or_potential)
    d = pot.dim
    grid = None
    if d <= 2:
        if hasattr(target_or_potential, "lo"):
            lo, hi = target_or_potential.lo, target_or_potential.hi
        else:
            lo, hi = truncation_box(pot)
        axes = [np.linspace(lo[k], hi[k], 2001 if d == 1 else 201) for k in range(d)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        v = pot.value(grid)
        w = np.exp(-(v - v.min()))
        w /= w.sum()
        m = w @ grid
        cov = (grid - m).T @ ((grid - m) * w[:, None])
        s = inflation * math.sqrt(float(np.linalg.eigvalsh(np.atleast_2d(cov)).max()))
    else:
        m = pot.argmin
        hmin = float(np.linalg.eigvalsh(np.atleast_2d(pot.hess(m)).reshape(d, d)).min())
        s = inflation / math.sqrt(hmin) if hmin > 0 else inflation

    def log_ratio(x):
        return -pot.value(x) + np.sum((x - m) ** 2, axis=-1) / (2 * s * s)

    if probe is None:
        probe = grid if grid is not None else m + s * np.random.default_rng(0).standard_normal((20000, d))
    log_m = float(np.max(log_ratio(probe))) + math.log(1.05)
    out = np.empty((0, d))
    while out.shape[0] < n:
        k = max(2 * (n - out.shape[0]), 64)
        cand = m + s * rng.standard_normal((k, d))
        u = rng.random(k)
        acc = np.log(u) <= log_ratio(cand) - log_m
        out = np.concatenate([out, cand[acc]])
    return out[:n]


def moment(measure, p: float) -> float:
    """sum |w_i| |x_i|^p for discrete measures; quadrature for grid densities."""
    if p < 0:
        raise ValueError("p must be nonnegative")
    if isinstance(measure, GridDensity1D):
        return float(np.sum(measure.values * np.abs(measure.centers) ** p) * measure.dx)
    m = as_signed(measure)
    r = np.linalg.norm(m.positions, axis=1)
    return float(np.sum(np.abs(m.weights) * r**p))
