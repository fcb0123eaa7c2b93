"""Experiment runners behind the CLI.

Every runner writes deterministic CSV/JSONL files into an output directory;
wall-clock timings go to a separate ``timings.jsonl`` so that the remaining
files are byte-identical across reruns and thread counts.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..analysis import (
    NormSeries,
    calibrate_stability_constant,
    calibrate_wasserstein_constant,
    censored_median,
    fit_departure_time,
    lipschitz_ratios,
    schedule_pairs,
    stability_certificate,
    trend_test,
)
from ..dynamics import TrajectoryRecord, integrate
from ..errors import ConfigError, NumericalError
from ..meanfield1d import cfl_limit, dissipation_mismatch, run_pde
from ..measures import (
    GridDensity1D,
    ParticleEnsemble,
    SignedDiscreteMeasure,
    TargetDensity,
    quadrature_measure,
    sample_target,
    subtract,
)
from ..metrics import (
    bl_weighted_norm,
    wasserstein_1d,
    wasserstein_1d_weighted,
    wasserstein_assignment,
)
from ..models import (
    GaussianLikelihoodPosterior,
    LogisticPosterior,
    check_condition_B3,
    check_growth,
    check_positive_definite,
    make_kernel,
    make_potential,
)
from .config import ExperimentConfig
from .io import append_jsonl, read_jsonl, write_csv, write_jsonl


@dataclass
class RunRecord:
    config_hash: str
    kind: str
    N: int
    replicate: int
    seed: int
    model: dict
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    status: str = "ok"
    extra: dict = field(default_factory=dict)
    code_version: str = __version__

    def as_dict(self):
        return asdict(self)


class Timer:
    def __init__(self, out_dir):
        self.path = Path(out_dir) / "timings.jsonl"
        self.path.write_text("")

    def log(self, label, seconds, **info):
        append_jsonl(self.path, {"label": label, "seconds": round(seconds, 4), **info})


def build_models(cfg: ExperimentConfig):
    m = cfg.model
    try:
        potential = make_potential(m.potential, **m.potential_params)
        kparams = {"dim": potential.dim, **m.kernel_params}
        kernel = make_kernel(m.kernel, **kparams)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model settings: {exc}") from None
    if kernel.dim != potential.dim:
        raise ConfigError("kernel and potential dimensions differ")
    return potential, kernel


def model_ids(cfg):
    return {"potential": cfg.model.potential, "kernel": cfg.model.kernel,
            "potential_params": cfg.model.potential_params, "kernel_params": cfg.model.kernel_params}


def rng_for(seed: int, n: int, replicate: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, N, replicate[, stream])."""
    key = [seed, n, replicate] + ([stream] if stream else [])
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def initial_positions(cfg, target, n, rng):
    if cfg.init.kind == "target":
        return sample_target(target, n, rng)
    return cfg.init.mean + cfg.init.std * rng.standard_normal((n, target.dim))


class Reference:
    """Deterministic discrete stand-in for rho_inf and its discretisation error."""

    def __init__(self, target: TargetDensity, n_atoms: int):
        per_axis = n_atoms if target.dim == 1 else max(2, int(round(math.sqrt(n_atoms))))
        self.measure = quadrature_measure(target, per_axis)
        fine = quadrature_measure(target, 2 * per_axis - 1)
        self.error = bl_weighted_norm(subtract(self.measure, fine), target.potential).value \
            if self.measure.n_atoms + fine.n_atoms <= 4000 else math.nan
        self.target = target

    def distance(self, positions):
        res = bl_weighted_norm(subtract(ParticleEnsemble(positions), self.measure), self.target.potential)
        return res.value, res.status


def _series_for(traj: TrajectoryRecord, ref: Reference):
    vals, stats = [], []
    for k in range(len(traj)):
        v, s = ref.distance(traj.positions[k])
        vals.append(v)
        stats.append(s)
    return vals, stats


def _save_traj(traj, out_dir, stem, meta):
    tdir = Path(out_dir) / "trajectories"
    tdir.mkdir(exist_ok=True)
    traj.meta = meta
    traj.to_csv(tdir / f"{stem}.csv", tdir / f"{stem}.meta.jsonl")


def _particle_run(cfg, potential, kernel, target, ref, n, rep, t_max, threads, out_dir=None, save=True):
    rng = rng_for(cfg.seed, n, rep)
    x0 = initial_positions(cfg, target, n, rng)
    rec = RunRecord(cfg.config_hash(), cfg.kind, n, rep, cfg.seed, model_ids(cfg))
    try:
        traj = integrate(ParticleEnsemble(x0), potential, kernel, 0.0, t_max, cfg.run.dt, cfg.run.method,
                         record_every=cfg.run.snapshot_every if t_max > 0 else None, threads=threads)
    except NumericalError as exc:
        rec.status = f"failed: {exc}"
        traj = getattr(exc, "partial", None)
        if traj is None:
            return rec, None
    if save and out_dir is not None:
        _save_traj(traj, out_dir, f"traj_N{n}_r{rep}",
                   {"seed": cfg.seed, "replicate": rep, "config_hash": rec.config_hash, **model_ids(cfg)})
    if ref is not None:
        vals, stats = _series_for(traj, ref)
        rec.times = traj.times.tolist()
        rec.values = vals
        rec.statuses = stats
    return rec, traj


# ---------------------------------------------------------------------------


def run_simulate(cfg: ExperimentConfig, out_dir, threads=None) -> dict:
    out_dir = Path(out_dir)
    timer = Timer(out_dir)
    potential, kernel = build_models(cfg)
    target = TargetDensity.from_potential(potential)
    ref = Reference(target, cfg.run.reference_atoms) if potential.dim <= 2 else None
    n = cfg.run.N[0]
    t0 = time.perf_counter()
    rec, traj = _particle_run(cfg, potential, kernel, target, ref, n, 0, cfg.run.t_max, threads, out_dir)
    timer.log("simulate", time.perf_counter() - t0, N=n)
    if ref is not None:
        rec.extra["reference_error"] = ref.error
        write_csv(out_dir / "series.csv", ["t", "bl_weighted"], zip(rec.times, rec.values))
    write_jsonl(out_dir / "runs.jsonl", [rec.as_dict()])
    return {"status": rec.status, "N": n}


def _certificate_rows(records, C, factor):
    rows, bounds = [], []
    for rec in records:
        if not rec.values:
            rows.append([rec.N, rec.replicate, None, None, None, 0, rec.status])
            continue
        series = NormSeries(rec.times, rec.values)
        verdict = stability_certificate(series, C, N=rec.N)
        dep = fit_departure_time(series, factor)
        rec.extra.update({"departure_time": dep, "certificate": verdict.as_dict()})
        rows.append([rec.N, rec.replicate, series.values[0], dep, verdict.passed, int(verdict.in_regime.sum()),
                     rec.status])
        for t, v, b, r in zip(series.times, series.values, verdict.bound, verdict.in_regime):
            bounds.append([rec.N, rec.replicate, t, v, b, bool(r)])
    return rows, bounds


def run_stability_sweep(cfg: ExperimentConfig, out_dir, threads=None) -> dict:
    """Distance-to-target series over time for each (N, replicate) and the stability certificate."""
    ns = cfg.run.N
    if len(set(ns)) < 3 or max(ns) < 8 * min(ns):
        raise ConfigError("stability sweep needs at least 3 distinct N spanning an 8x range")
    out_dir = Path(out_dir)
    timer = Timer(out_dir)
    potential, kernel = build_models(cfg)
    target = TargetDensity.from_potential(potential)
    ref = Reference(target, cfg.run.reference_atoms)
    records = []
    for n in cfg.run.N:
        for rep in range(cfg.run.replicates):
            t0 = time.perf_counter()
            rec, _ = _particle_run(cfg, potential, kernel, target, ref, n, rep, cfg.run.t_max, threads, out_dir)
            rec.extra["reference_error"] = ref.error
            records.append(rec)
            timer.log("run", time.perf_counter() - t0, N=n, replicate=rep)

    cal_n = cfg.run.calibration_N or min(cfg.run.N)
    if cfg.run.calibration_C == "fit":
        pilot = [NormSeries(r.times, r.values) for r in records if r.N == cal_n and r.values]
        if not pilot:
            raise ConfigError(f"no successful runs at calibration N={cal_n}")
        C = calibrate_stability_constant(pilot)
        method = f"fit on N={cal_n}"
    else:
        C = float(cfg.run.calibration_C)
        method = "given"
    rows, bounds = _certificate_rows(records, C, cfg.run.departure_factor)

    by_n = []
    for n in cfg.run.N:
        mine = [r for r in rows if r[0] == n]
        ok = [r for r in mine if r[2] is not None]
        deps = [r[3] for r in ok]
        by_n.append([n, len(mine), float(np.median([r[2] for r in ok])) if ok else None,
                     censored_median(deps) if ok else None,
                     sum(1 for r in ok if r[3] is None),
                     sum(1 for r in ok if r[4]) / len(ok) if ok else None])
    held_out = [r for r in rows if r[0] != cal_n and r[2] is not None]
    pass_frac = sum(1 for r in held_out if r[4]) / len(held_out) if held_out else None
    medians = [row[3] for row in by_n]
    nondecreasing = all(b >= a for a, b in zip(medians, medians[1:]) if a is not None and b is not None)

    write_jsonl(out_dir / "runs.jsonl", [r.as_dict() for r in records])
    write_csv(out_dir / "series.csv", ["N", "replicate", "t", "bl_weighted"],
              ([r.N, r.replicate, t, v] for r in records for t, v in zip(r.times, r.values)))
    write_csv(out_dir / "summary.csv",
              ["N", "replicate", "m0", "departure_time", "certificate_passed", "n_in_regime", "status"], rows)
    write_csv(out_dir / "summary_by_N.csv",
              ["N", "runs", "median_m0", "median_departure_time", "runs_without_departure",
               "certificate_pass_fraction"], by_n)
    write_csv(out_dir / "bounds.csv", ["N", "replicate", "t", "value", "bound", "in_regime"], bounds)
    summary = {"C": C, "calibration": method, "reference_error": ref.error,
               "held_out_pass_fraction": pass_frac, "median_departure_nondecreasing": nondecreasing,
               "departure_factor": cfg.run.departure_factor}
    write_jsonl(out_dir / "calibration.jsonl", [summary])
    return summary


def _w_to_reference(positions, ref_measure, q, rng=None, target=None):
    x = np.asarray(positions)
    if x.shape[1] == 1:
        return wasserstein_1d_weighted(q, x[:, 0], np.ones(x.shape[0]), ref_measure.positions[:, 0],
                                       ref_measure.weights)
    y = sample_target(target, x.shape[0], rng)
    return wasserstein_assignment(q, x, y)


def calibrate_schedule_constant(cfg, potential, kernel, target, threads=None):
    """Smallest C with W1(mu_t, nu_t) <= C exp(C exp(Ct)) W1(mu_0, nu_0) over pilot pairs."""
    c = cfg.convergence
    times_all, ratios_all = [], []
    for rep in range(c.pilot_replicates):
        rng = rng_for(cfg.seed, c.pilot_N, rep, stream=1)
        x0 = initial_positions(cfg, target, c.pilot_N, rng)
        y0 = x0 + c.pilot_perturbation * rng.standard_normal(x0.shape)
        a = integrate(ParticleEnsemble(x0), potential, kernel, 0.0, c.pilot_t, cfg.run.dt, cfg.run.method,
                      record_every=cfg.run.snapshot_every, threads=threads)
        b = integrate(ParticleEnsemble(y0), potential, kernel, 0.0, c.pilot_t, cfg.run.dt, cfg.run.method,
                      record_every=cfg.run.snapshot_every, threads=threads)
        w = [wasserstein_assignment(1, a.positions[k], b.positions[k]) for k in range(len(a))]
        times_all.extend(a.times.tolist())
        ratios_all.extend((np.array(w) / w[0]).tolist())
    return calibrate_wasserstein_constant(times_all, ratios_all), times_all, ratios_all


def run_convergence_sweep(cfg: ExperimentConfig, out_dir, threads=None) -> dict:
    """W_q(rho^N_t, rho_inf) along (t, N) pairs of the double-exponential schedule."""
    out_dir = Path(out_dir)
    timer = Timer(out_dir)
    potential, kernel = build_models(cfg)
    target = TargetDensity.from_potential(potential)
    c = cfg.convergence
    ref = quadrature_measure(target, cfg.run.reference_atoms) if target.dim == 1 else None
    notes = []
    cal = {}
    if c.pairs:
        pairs = [(float(t), int(n)) for t, n in c.pairs]
        cal = {"C": None, "calibration": "explicit pairs"}
    else:
        t0 = time.perf_counter()
        if c.schedule_C == "fit":
            C, ts, rs = calibrate_schedule_constant(cfg, potential, kernel, target, threads)
            cal = {"C": C, "calibration": f"fit on {c.pilot_replicates} pilot pairs at N={c.pilot_N}",
                   "max_ratio": max(rs)}
        else:
            C = float(c.schedule_C)
            cal = {"C": C, "calibration": "given"}
        timer.log("calibration", time.perf_counter() - t0)
        pairs = schedule_pairs(C, c.N_values)
        skipped = sorted(set(int(v) for v in c.N_values) - {n for _, n in pairs})
        if skipped:
            notes.append({"note": "below schedule start exp(2C)", "N": skipped})
    capped = [(t, n) for t, n in pairs if n > c.max_N]
    if capped:
        notes.append({"note": "above max_N (saturation cap)", "pairs": capped})
    pairs = [(t, n) for t, n in pairs if n <= c.max_N]
    if not pairs:
        notes.append({"note": "empty schedule after saturation"})

    records, rows = [], []
    for t_pair, n in pairs:
        for rep in range(cfg.run.replicates):
            t0 = time.perf_counter()
            rng = rng_for(cfg.seed, n, rep)
            x0 = initial_positions(cfg, target, n, rng)
            rec = RunRecord(cfg.config_hash(), cfg.kind, n, rep, cfg.seed, model_ids(cfg))
            try:
                if t_pair > 0:
                    traj = integrate(ParticleEnsemble(x0), potential, kernel, 0.0, t_pair, cfg.run.dt,
                                     cfg.run.method, threads=threads, record_every=None)
                    x = traj.positions[-1]
                else:
                    x = x0
                wrng = rng_for(cfg.seed, n, rep, stream=2)
                vals = [_w_to_reference(x, ref, q, wrng, target) for q in c.q]
            except NumericalError as exc:
                rec.status = f"failed: {exc}"
                vals = []
            rec.times = [t_pair]
            rec.values = vals
            rec.extra["q"] = list(c.q)
            records.append(rec)
            for q, v in zip(c.q, vals):
                rows.append([t_pair, n, rep, q, v])
            timer.log("run", time.perf_counter() - t0, N=n, replicate=rep)

    summary_rows = []
    for t_pair, n in pairs:
        for q in c.q:
            vals = [r[4] for r in rows if r[1] == n and r[3] == q]
            if vals:
                summary_rows.append([t_pair, n, q, float(np.median(vals)), len(vals)])
    decreasing = {}
    for q in c.q:
        med = [r[3] for r in summary_rows if r[2] == q]
        decreasing[str(q)] = bool(len(med) >= 2 and all(b < a for a, b in zip(med, med[1:])))

    write_jsonl(out_dir / "runs.jsonl", [r.as_dict() for r in records])
    write_csv(out_dir / "series.csv", ["t", "N", "replicate", "q", "wasserstein"], rows)
    write_csv(out_dir / "summary.csv", ["t", "N", "q", "median_wasserstein", "replicates"], summary_rows)
    write_jsonl(out_dir / "notes.jsonl", notes)
    summary = {**cal, "pairs": pairs, "strictly_decreasing": decreasing}
    write_jsonl(out_dir / "calibration.jsonl", [summary])
    return summary


def run_pde1d(cfg: ExperimentConfig, out_dir, threads=None) -> dict:
    out_dir = Path(out_dir)
    timer = Timer(out_dir)
    potential, kernel = build_models(cfg)
    if potential.dim != 1:
        raise ConfigError("pde1d needs a one-dimensional potential")
    p = cfg.pde
    rho0 = GridDensity1D.from_function(lambda x: np.exp(-(x - p.init_mean) ** 2 / (2 * p.init_std**2)),
                                       p.left, p.right, p.n_cells)
    if p.dt is None:
        limit = cfl_limit(rho0, potential, kernel) * 2 * p.cfl  # cfl_limit is at Courant number 1/2
        steps = max(1, math.ceil(p.t_end / limit))
        dt = p.t_end / steps if p.t_end > 0 else limit
    else:
        dt = p.dt
    t0 = time.perf_counter()
    traj = run_pde(rho0, potential, kernel, p.t_end, dt, scheme=p.scheme, time_scheme=p.time_scheme,
                   record_every=p.record_every)
    timer.log("pde", time.perf_counter() - t0, n_cells=p.n_cells)
    d = traj.diagnostics
    mismatch = dissipation_mismatch(traj)
    summary = {
        "dt": dt, "n_cells": p.n_cells, "steps": int(round(p.t_end / dt)),
        "max_kl_increase": float(np.max(np.diff(d["kl"]), initial=-math.inf)),
        "max_mass_drift": float(np.max(np.abs(d["mass"] - d["mass"][0]))),
        "kl_start": float(d["kl"][0]), "kl_end": float(d["kl"][-1]),
        "max_dissipation_mismatch": float(np.max(mismatch, initial=0.0)),
        "min_dissipation": float(np.min(d["dissipation"])),
        "second_moment_max_over_initial": float(np.max(d["second_moment"]) / d["second_moment"][0]),
    }
    traj.meta.update({"config_hash": cfg.config_hash()})
    traj.to_csv(out_dir / "density.csv", out_dir / "diagnostics.csv")
    write_jsonl(out_dir / "summary.jsonl", [summary])
    return summary


def run_check_assumptions(cfg: ExperimentConfig, out_dir, threads=None) -> dict:
    out_dir = Path(out_dir)
    potential, kernel = build_models(cfg)
    a = cfg.assumptions
    radii = np.linspace(0.0, a.probe_radius, a.n_radii)
    reports = [
        check_growth(potential, radii[radii > 0]).as_dict(),
        check_condition_B3(potential, kernel, radii).as_dict(),
    ]
    names = a.kernels or [cfg.model.kernel]
    for name in names:
        k = make_kernel(name, **({} if name != cfg.model.kernel else cfg.model.kernel_params))
        rep = check_positive_definite(k, a.pd_points).as_dict()
        rep["kernel"] = name
        reports.append(rep)
    write_jsonl(out_dir / "assumptions.jsonl", reports)
    return {r["name"] + (":" + r.get("kernel", "") if "kernel" in r else ""): r["passed"] for r in reports}


def _read_measure(path):
    return SignedDiscreteMeasure.from_csv(path)


def run_metric(cfg: ExperimentConfig, out_dir, threads=None) -> dict:
    out_dir = Path(out_dir)
    m = cfg.metric
    if not m.measure:
        raise ConfigError("metric.measure must name a CSV file")
    try:
        mu = _read_measure(cfg.resolve(m.measure))
        other = _read_measure(cfg.resolve(m.other)) if m.other else None
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read measure: {exc}") from None
    t0 = time.perf_counter()
    if m.name == "wasserstein":
        if other is None:
            raise ConfigError("wasserstein needs metric.other")
        if mu.n_atoms != other.n_atoms:
            raise ConfigError("wasserstein needs equal atom counts")
        fn = wasserstein_1d if mu.dim == 1 else wasserstein_assignment
        value, status, n_atoms = fn(m.p, mu.positions, other.positions), "optimal", mu.n_atoms
    else:
        target = subtract(mu, other) if other is not None else mu.canonicalize()
        potential = build_models(cfg)[0] if m.name == "bl-weighted" else None
        res = bl_weighted_norm(target, potential)
        value, status, n_atoms = res.value, res.status, res.n_atoms
    record = {"metric": m.name, "value": value, "n_atoms": n_atoms, "solver_status": status,
              "runtime_ms": round(1000 * (time.perf_counter() - t0), 3)}
    write_jsonl(out_dir / "metric.jsonl", [record])
    return record


def run_audit(cfg: ExperimentConfig, out_dir, threads=None) -> dict:
    """Recompute every stored distance series from the persisted trajectories and compare."""
    out_dir = Path(out_dir)
    runs_path = out_dir / "runs.jsonl"
    if not runs_path.exists():
        raise ConfigError(f"no runs.jsonl in {out_dir}")
    potential, kernel = build_models(cfg)
    target = TargetDensity.from_potential(potential)
    ref = Reference(target, cfg.run.reference_atoms)
    results = []
    for rec in read_jsonl(runs_path):
        if not rec["values"]:
            continue
        stem = out_dir / "trajectories" / f"traj_N{rec['N']}_r{rec['replicate']}"
        traj = TrajectoryRecord.from_csv(f"{stem}.csv", f"{stem}.meta.jsonl")
        vals, _ = _series_for(traj, ref)
        diff = float(np.max(np.abs(np.array(vals) - np.array(rec["values"]))))
        times_ok = bool(np.array_equal(traj.times, np.array(rec["times"])))
        results.append({"N": rec["N"], "replicate": rec["replicate"], "max_abs_difference": diff,
                        "times_match": times_ok, "match": diff == 0.0 and times_ok})
    write_jsonl(out_dir / "audit.jsonl", results)
    bad = [r for r in results if not r["match"]]
    if bad:
        raise NumericalError(f"{len(bad)} run(s) do not reproduce from their trajectories")
    return {"audited": len(results), "mismatches": 0}


def read_design_file(path):
    """Rows of numbers separated by whitespace or commas; '#' starts a comment."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].replace(",", " ").strip()
            if line:
                rows.append([float(v) for v in line.split()])
    if rows and len({len(r) for r in rows}) != 1:
        raise ValueError("rows have different lengths")
    return np.array(rows, dtype=float)


def _grid_posterior(potential, half_width, points):
    c = potential.argmin
    d = potential.dim
    axes = [np.linspace(c[k] - half_width[k], c[k] + half_width[k], points) for k in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    w = np.exp(-potential.value(mesh))
    w /= w.sum()
    mean = w @ mesh
    cov = (mesh - mean).T @ ((mesh - mean) * w[:, None])
    return mean, cov


def run_bayes_demo(cfg: ExperimentConfig, out_dir, threads=None, data_file=None) -> dict:
    out_dir = Path(out_dir)
    timer = Timer(out_dir)
    b = cfg.bayes
    path = cfg.resolve(data_file or b.data_file)
    try:
        data = read_design_file(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"malformed data file {path}: {exc}") from None
    dim = int(cfg.model.potential_params.get("dim", 1))
    if b.likelihood == "logistic":
        if data.size and data.shape[1] < 2:
            raise ConfigError("logistic rows need a label and at least one feature")
        labels = data[:, 0] if data.size else np.zeros(0)
        feats = data[:, 1:] if data.size else np.zeros((0, dim))
        try:
            potential = LogisticPosterior(feats, labels, b.prior_scale, dim=dim)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        obs = data if data.size else np.zeros((0, dim))
        potential = GaussianLikelihoodPosterior(obs, b.noise_scale, b.prior_mean, b.prior_scale,
                                                dim=obs.shape[1] if obs.ndim == 2 and obs.size else dim)
    if potential.dim > 2:
        raise ConfigError("bayes-demo supports 1-D or 2-D parameters")
    kernel = make_kernel(cfg.model.kernel, dim=potential.dim, **cfg.model.kernel_params)
    n = cfg.run.N[0]
    rng = rng_for(cfg.seed, n, 0)
    x0 = b.prior_mean + b.prior_scale * rng.standard_normal((n, potential.dim))
    t0 = time.perf_counter()
    traj = integrate(ParticleEnsemble(x0), potential, kernel, 0.0, cfg.run.t_max, cfg.run.dt, cfg.run.method,
                     record_every=cfg.run.snapshot_every, threads=threads)
    timer.log("bayes", time.perf_counter() - t0, N=n)
    x = traj.positions[-1]
    ens_mean = x.mean(axis=0)
    ens_cov = np.atleast_2d(np.cov(x.T))
    hess = np.atleast_2d(potential.hess(potential.argmin)).reshape(potential.dim, potential.dim)
    half = 8.0 / np.sqrt(np.linalg.eigvalsh(hess).min()) * np.ones(potential.dim)
    grid_mean, grid_cov = _grid_posterior(potential, half, b.grid_points)
    result = {
        "likelihood": b.likelihood, "rows": int(data.shape[0]) if data.size else 0, "N": n,
        "t_max": cfg.run.t_max, "ensemble_mean": ens_mean, "ensemble_cov": ens_cov,
        "grid_mean": grid_mean, "grid_cov": grid_cov,
        "mean_error": float(np.linalg.norm(ens_mean - grid_mean)),
    }
    if b.likelihood == "gaussian":
        result["analytic_mean"] = potential.argmin
        result["analytic_var"] = 1.0 / potential.precision
    _save_traj(traj, out_dir, f"traj_N{n}_r0", {"seed": cfg.seed, "config_hash": cfg.config_hash()})
    write_jsonl(out_dir / "posterior.jsonl", [result])
    return result


RUNNERS = {
    "simulate": run_simulate,
    "stability-sweep": run_stability_sweep,
    "convergence-sweep": run_convergence_sweep,
    "pde1d": run_pde1d,
    "check-assumptions": run_check_assumptions,
    "metric": run_metric,
    "audit": run_audit,
    "bayes-demo": run_bayes_demo,
}


def lipschitz_profile(traj: TrajectoryRecord, potential, max_gap: float = 0.5):
    """BL*_V distance between adjacent snapshots divided by their time gap."""
    dists, mids = [], []
    for k in range(len(traj) - 1):
        gap = traj.times[k + 1] - traj.times[k]
        if gap > max_gap:
            continue
        mu = subtract(traj.snapshot(k + 1), traj.snapshot(k))
        dists.append(bl_weighted_norm(mu, potential).value / gap)
        mids.append(0.5 * (traj.times[k] + traj.times[k + 1]))
    ratios = np.array(dists)
    rho, p = trend_test(mids, ratios) if ratios.size > 2 else (math.nan, math.nan)
    return np.array(mids), ratios, rho, p
