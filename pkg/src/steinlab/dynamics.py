"""The SVGD particle system: vector field, Euler update, RK4 trajectories, flow maps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._pairwise import weighted_field
from .errors import BlowUpError, NumericalError
from .measures import ParticleEnsemble, SignedDiscreteMeasure, as_signed

BLOWUP_RADIUS = 1e6


def _points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if dim == 1 else x[None, :]
    return x


def _is_single(x, dim):
    return np.ndim(x) == 0 or (np.ndim(x) == 1 and np.size(x) == dim)


def _check_finite(v, label="particle"):
    bad = ~np.all(np.isfinite(v), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise NumericalError(f"non-finite velocity at {label} index {i}")
    return v


def particle_field(positions, potential, kernel, queries=None, threads=None) -> np.ndarray:
    """Velocities -(1/N) sum_j [grad K(q - x_j) + K(q - x_j) grad V(x_j)] on raw arrays."""
    x = np.asarray(positions, dtype=float)
    q = x if queries is None else queries
    n = x.shape[0]
    gv = potential.grad(x)
    return weighted_field(q, x, np.full(n, 1.0 / n), gv, kernel, threads)


def svgd_velocity(ensemble: ParticleEnsemble, potential, kernel, query=None, threads=None) -> np.ndarray:
    """SVGD vector field of the ensemble.

    With ``query=None`` the field is evaluated at the particles themselves
    (shape ``(N, d)``); a single d-vector query returns a d-vector.
    """
    single = query is not None and _is_single(query, ensemble.dim)
    q = None if query is None else _points(query, ensemble.dim)
    v = particle_field(ensemble.positions, potential, kernel, q, threads)
    _check_finite(v, "particle" if query is None else "query")
    return v[0] if single else v


def euler_step(ensemble: ParticleEnsemble, potential, kernel, eps: float, threads=None) -> ParticleEnsemble:
    """One explicit step x_i + eps * v_i of the discrete SVGD update."""
    if eps < 0:
        raise ValueError("step size must be nonnegative")
    if eps == 0:
        return ensemble
    v = svgd_velocity(ensemble, potential, kernel, threads=threads)
    return ParticleEnsemble(ensemble.positions + eps * v)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    positions: np.ndarray  # (T, N, d)
    dt: float
    method: str
    velocities: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 3 or self.positions.shape[0] != self.times.size:
            raise ValueError("positions must be (T, N, d) with one slice per time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    def snapshot(self, k: int) -> ParticleEnsemble:
        return ParticleEnsemble(self.positions[k])

    @property
    def snapshots(self):
        return [self.snapshot(k) for k in range(len(self))]

    def final(self) -> ParticleEnsemble:
        return self.snapshot(-1)

    def metadata(self) -> dict:
        out = {"N": self.n, "d": self.dim, "dt": self.dt, "method": self.method,
               "n_snapshots": len(self), "t0": float(self.times[0]), "t1": float(self.times[-1])}
        out.update(self.meta)
        return out

    def to_csv(self, path, meta_path=None) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "particle"] + [f"x_{k + 1}" for k in range(self.dim)])
            for t, snap in zip(self.times, self.positions):
                ts = repr(float(t))
                for i, row in enumerate(snap):
                    wr.writerow([ts, i] + [repr(float(v)) for v in row])
        if meta_path is not None:
            with open(meta_path, "w") as fh:
                fh.write(json.dumps(self.metadata(), sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path, meta_path=None) -> "TrajectoryRecord":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        d = len(rows[0]) - 2
        arr = np.array(rows[1:], dtype=float)
        times, first = np.unique(arr[:, 0], return_index=True)
        n = int(arr[:, 1].max()) + 1
        pos = arr[:, 2:].reshape(times.size, n, d)
        meta = {}
        if meta_path is not None:
            with open(meta_path) as fh:
                meta = json.loads(fh.readline())
        dt = float(meta.pop("dt", np.nan))
        method = meta.pop("method", "unknown")
        for key in ("N", "d", "n_snapshots", "t0", "t1"):
            meta.pop(key, None)
        return cls(times, pos, dt, method, meta=meta)


def _rk4(f, x, t, h):
    k1 = f(t, x)
    k2 = f(t + h / 2, x + (h / 2) * k1)
    k3 = f(t + h / 2, x + (h / 2) * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _time_grid(t0, t1, dt):
    n_full = int(math.floor((t1 - t0) / dt * (1 + 1e-12)))
    ts = t0 + dt * np.arange(n_full + 1)
    if t1 - ts[-1] > 1e-12 * max(1.0, abs(t1)):
        ts = np.append(ts, t1)
    else:
        ts[-1] = t1 if n_full > 0 else ts[-1]
    return ts


def integrate(ensemble: ParticleEnsemble, potential, kernel, t0: float, t1: float, dt: float,
              method: str = "rk4", record_every: float | None = None, threads=None,
              keep_velocities: bool = False) -> TrajectoryRecord:
    """March the particle ODE from t0 to t1.

    Snapshots are kept at every step, or only at multiples of
    ``record_every`` (which must be a whole number of steps) plus the end
    time.  The last step is shortened to land exactly on t1.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t1 < t0:
        raise ValueError("need t1 >= t0")
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    stride = 1
    if record_every is not None:
        stride = int(round(record_every / dt))
        if stride < 1 or abs(stride * dt - record_every) > 1e-9 * record_every:
            raise ValueError("record_every must be a positive multiple of dt")
    ts = _time_grid(t0, t1, dt) if t1 > t0 else np.array([t0])

    def field_at(_t, x):
        return _check_finite(particle_field(x, potential, kernel, threads=threads))

    x = np.array(ensemble.positions)
    times, snaps, vels = [t0], [x.copy()], []
    if keep_velocities:
        vels.append(field_at(t0, x))
    for k in range(1, ts.size):
        h = ts[k] - ts[k - 1]
        if method == "euler":
            x = x + h * field_at(ts[k - 1], x)
        else:
            x = _rk4(field_at, x, ts[k - 1], h)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_RADIUS:
            partial = TrajectoryRecord(np.array(times), np.array(snaps), dt, method)
            raise BlowUpError(f"trajectory blow-up at t={ts[k]:.6g}", partial)
        if k % stride == 0 or k == ts.size - 1:
            times.append(ts[k])
            snaps.append(x.copy())
            if keep_velocities:
                vels.append(field_at(ts[k], x))
    return TrajectoryRecord(np.array(times), np.array(snaps), dt, method,
                            np.array(vels) if keep_velocities else None)


# ---------------------------------------------------------------------------
# time-dependent signed measures and the flow map


@dataclass
class MeasurePath:
    """mu_s = (moving atoms with fixed weights at time s) + static part.

    Between stored times the moving atoms are held at the left snapshot
    ("constant") or follow the cubic Hermite interpolant built from stored
    velocities ("hermite").
    """

    times: np.ndarray
    positions: np.ndarray  # (T, M, d)
    weights: np.ndarray  # (M,)
    static: SignedDiscreteMeasure | None = None
    velocities: np.ndarray | None = None
    interpolation: str = "constant"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.interpolation not in ("constant", "hermite"):
            raise ValueError("interpolation must be 'constant' or 'hermite'")
        if self.interpolation == "hermite" and self.velocities is None:
            raise ValueError("hermite interpolation needs velocities")

    @classmethod
    def zero(cls, dim=1, t0=0.0, t1=1.0):
        return cls(np.array([t0, t1]), np.zeros((2, 0, dim)), np.zeros(0))

    @classmethod
    def from_trajectory(cls, traj: TrajectoryRecord, reference=None, interpolation="constant"):
        """Path of rho^N_s minus an optional static reference measure."""
        n = traj.n
        static = None if reference is None else as_signed(reference).scaled(-1.0)
        return cls(traj.times, traj.positions, np.full(n, 1.0 / n), static, traj.velocities, interpolation)

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def moving_at(self, s: float) -> np.ndarray:
        t = self.times
        if s < t[0] - 1e-12 or s > t[-1] + 1e-12:
            raise ValueError(f"time {s} outside the stored range [{t[0]}, {t[-1]}]")
        k = int(np.clip(np.searchsorted(t, s, side="right") - 1, 0, t.size - 1))
        if self.interpolation == "constant" or k == t.size - 1 or s == t[k]:
            return self.positions[k]
        h = t[k + 1] - t[k]
        u = (s - t[k]) / h
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        p0, p1 = self.positions[k], self.positions[k + 1]
        m0, m1 = self.velocities[k], self.velocities[k + 1]
        return h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1

    def at(self, s: float) -> SignedDiscreteMeasure:
        x = self.moving_at(s)
        if self.static is None:
            return SignedDiscreteMeasure(x, self.weights)
        return SignedDiscreteMeasure(np.concatenate([x, self.static.positions]),
                                     np.concatenate([self.weights, self.static.weights]))


def measure_field(mu: SignedDiscreteMeasure, potential, kernel, queries, threads=None) -> np.ndarray:
    """-K*(grad mu + mu grad V) at the queries, with the derivative moved onto K."""
    q = _points(queries, mu.dim)
    if mu.n_atoms == 0:
        return np.zeros_like(q)
    return weighted_field(q, mu.positions, mu.weights, potential.grad(mu.positions), kernel, threads)


def flow_map(background: MeasurePath, potential, kernel, x, t: float, s: float, dt: float,
             threads=None) -> np.ndarray:
    """X_{t,s}(x): solve d/ds X = -K*(grad mu_s + mu_s grad V)(X), X_{t,t} = x, by RK4 in s.

    ``s`` may be earlier than ``t`` (backward flow).  Accepts one point or a
    stack of points.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    dim = background.positions.shape[2]
    single = _is_single(x, dim)
    X = np.array(_points(x, dim), dtype=float)
    if s == t:
        return X[0] if single else X
    lo, hi = background.span
    if min(s, t) < lo - 1e-12 or max(s, t) > hi + 1e-12:
        raise ValueError("background does not cover the requested time interval")
    sign = 1.0 if s > t else -1.0
    grid = t + sign * _time_grid(0.0, abs(s - t), dt)

    def f(u, y):
        return _check_finite(measure_field(background.at(u), potential, kernel, y, threads), "flow point")

    for k in range(1, grid.size):
        X = _rk4(f, X, grid[k - 1], grid[k] - grid[k - 1])
        if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > BLOWUP_RADIUS:
            raise BlowUpError(f"flow blow-up at s={grid[k]:.6g}")
    return X[0] if single else X


def flow_quotients(background: MeasurePath, potential, kernel, x, s: float, dt: float,
                   fd_step: float = 1e-5) -> dict:
    """Growth quotients of the forward flow X_{0,s} at the points x.

    Returns |grad X|, |grad V(X)|/(1+V(x)), V(X)/(1+V(x)) and
    |hess V(X)|/(1+V(x)) (spectral norms), the Jacobian by central
    differences in x.
    """
    t0 = background.times[0]
    dim = background.positions.shape[2]
    x = _points(x, dim)
    X = flow_map(background, potential, kernel, x, t0, t0 + s, dt)
    jac = np.empty((x.shape[0], dim, dim))
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = fd_step
        plus = flow_map(background, potential, kernel, x + e, t0, t0 + s, dt)
        minus = flow_map(background, potential, kernel, x - e, t0, t0 + s, dt)
        jac[:, :, k] = (plus - minus) / (2 * fd_step)
    denom = 1.0 + potential.value(x)
    return {
        "grad_flow": np.linalg.norm(jac, ord=2, axis=(1, 2)),
        "grad_V": np.linalg.norm(potential.grad(X), axis=1) / denom,
        "V": potential.value(X) / denom,
        "hess_V": np.linalg.norm(potential.hess(X), ord=2, axis=(1, 2)) / denom,
    }


def vector_field_bounds(mu, potential, kernel, probes) -> tuple:
    """Sup over probes of |K*(grad mu + mu grad V)|, its Jacobian (spectral norm)
    and |grad V . K*(grad mu + mu grad V)|; the convolutions are exact sums."""
    mu = as_signed(mu)
    q = _points(probes, mu.dim)
    if mu.n_atoms == 0 or q.shape[0] == 0:
        return 0.0, 0.0, 0.0
    gv = potential.grad(mu.positions)
    a = b = c = 0.0
    block = max(1, 200_000 // mu.n_atoms)
    for lo in range(0, q.shape[0], block):
        qq = q[lo:lo + block]
        diff = qq[:, None, :] - mu.positions[None, :, :]
        w = mu.weights[None, :, None]
        field_ = np.sum(w * (kernel.grad(diff) + kernel.value(diff)[..., None] * gv[None]), axis=1)
        jac = np.sum(w[..., None] * (kernel.hess(diff) + kernel.grad(diff)[..., :, None] * gv[None, :, None, :]),
                     axis=1)
        a = max(a, float(np.max(np.linalg.norm(field_, axis=1))))
        b = max(b, float(np.max(np.linalg.norm(jac, ord=2, axis=(1, 2)))))
        c = max(c, float(np.max(np.abs(np.sum(potential.grad(qq) * field_, axis=1)))))
    return a, b, c


def weak_form_residual(traj: TrajectoryRecord, potential, kernel, test_fn, test_grad, test_dt) -> float:
    """Residual of the weak formulation of the mean-field equation for the empirical path.

    For a test function phi(t, x) with compact support in time the identity
        int_0^T int (d_t phi - grad phi . K*(grad rho + rho grad V)) d rho_t dt
            + int phi(0, .) d rho_0 = 0
    holds for rho^N_t; the time integral uses the trapezoid rule on the
    stored snapshots.  ``test_fn(t, x)``, ``test_grad(t, x)`` and
    ``test_dt(t, x)`` evaluate phi, its x-gradient and its t-derivative.
    """
    vals = np.empty(len(traj))
    for k, t in enumerate(traj.times):
        x = traj.positions[k]
        u = particle_field(x, potential, kernel)  # = -K*(grad rho + rho grad V)
        integrand = np.asarray(test_dt(t, x)) + np.sum(np.asarray(test_grad(t, x)) * u, axis=1)
        vals[k] = float(np.mean(integrand))
    phi0 = float(np.mean(np.asarray(test_fn(traj.times[0], traj.positions[0]))))
    return float(np.trapezoid(vals, traj.times)) + phi0
