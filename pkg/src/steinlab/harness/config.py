"""Experiment configuration: TOML file -> validated dataclasses, plus a stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..errors import ConfigError

KINDS = ("simulate", "stability-sweep", "convergence-sweep", "pde1d", "check-assumptions", "metric",
         "bayes-demo")


@dataclass
class ModelConfig:
    potential: str = "quadratic"
    kernel: str = "gaussian"
    potential_params: dict = field(default_factory=dict)
    kernel_params: dict = field(default_factory=dict)


@dataclass
class InitConfig:
    # "target": i.i.d. draws from exp(-V)/Z; "gaussian": N(mean, std^2) per coordinate
    kind: str = "target"
    mean: float = 0.0
    std: float = 1.0


@dataclass
class RunConfig:
    N: list = field(default_factory=lambda: [100])
    replicates: int = 1
    dt: float = 0.01
    t_max: float = 10.0
    snapshot_every: float = 0.1
    method: str = "rk4"
    reference_atoms: int = 401
    departure_factor: float = 2.0
    calibration_C: object = "fit"
    calibration_N: int | None = None


@dataclass
class ConvergenceConfig:
    q: list = field(default_factory=lambda: [1.0])
    N_values: list = field(default_factory=lambda: [16, 64, 256, 1024])
    pairs: list = field(default_factory=list)
    max_N: int = 1024
    schedule_C: object = "fit"
    pilot_N: int = 64
    pilot_replicates: int = 4
    pilot_t: float = 3.0
    pilot_perturbation: float = 1e-3


@dataclass
class PDEConfig:
    left: float = -12.0
    right: float = 12.0
    n_cells: int = 512
    t_end: float = 5.0
    dt: float | None = None
    cfl: float = 0.4
    init_mean: float = 1.0
    init_std: float = 1.0
    scheme: str = "muscl"
    time_scheme: str = "ssprk2"
    record_every: int = 10


@dataclass
class AssumptionConfig:
    probe_radius: float = 20.0
    n_radii: int = 81
    pd_points: int = 1024
    kernels: list = field(default_factory=list)


@dataclass
class MetricConfig:
    name: str = "bl-weighted"
    measure: str = ""
    other: str = ""
    p: float = 1.0


@dataclass
class BayesConfig:
    data_file: str = ""
    likelihood: str = "logistic"
    prior_scale: float = 1.0
    prior_mean: float = 0.0
    noise_scale: float = 1.0
    grid_points: int = 201


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    init: InitConfig = field(default_factory=InitConfig)
    run: RunConfig = field(default_factory=RunConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    pde: PDEConfig = field(default_factory=PDEConfig)
    assumptions: AssumptionConfig = field(default_factory=AssumptionConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    bayes: BayesConfig = field(default_factory=BayesConfig)
    out: str = "runs"
    base_dir: str = "."

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("base_dir")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


_SECTIONS = {
    "model": ModelConfig, "init": InitConfig, "run": RunConfig, "convergence": ConvergenceConfig,
    "pde": PDEConfig, "assumptions": AssumptionConfig, "metric": MetricConfig, "bayes": BayesConfig,
}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return cls(**data)


def _positive(value, name, allow_zero=False):
    try:
        ok = value >= 0 if allow_zero else value > 0
    except TypeError:
        ok = False
    if not ok:
        raise ConfigError(f"{name} must be {'nonnegative' if allow_zero else 'positive'}, got {value!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    r = cfg.run
    if not isinstance(r.N, list) or not r.N or any(not isinstance(n, int) or n < 1 for n in r.N):
        raise ConfigError("run.N must be a nonempty list of positive integers")
    _positive(r.replicates, "run.replicates")
    _positive(r.dt, "run.dt")
    _positive(r.t_max, "run.t_max", allow_zero=True)
    _positive(r.snapshot_every, "run.snapshot_every")
    _positive(r.reference_atoms - 1, "run.reference_atoms - 1")
    if r.method not in ("rk4", "euler"):
        raise ConfigError("run.method must be 'rk4' or 'euler'")
    if r.departure_factor <= 1:
        raise ConfigError("run.departure_factor must exceed 1")
    if r.calibration_C != "fit":
        _positive(r.calibration_C, "run.calibration_C")
    stride = r.snapshot_every / r.dt
    if abs(stride - round(stride)) > 1e-9 * stride:
        raise ConfigError("run.snapshot_every must be a whole multiple of run.dt")
    if cfg.init.kind not in ("target", "gaussian"):
        raise ConfigError("init.kind must be 'target' or 'gaussian'")
    _positive(cfg.init.std, "init.std")
    c = cfg.convergence
    if c.schedule_C != "fit":
        _positive(c.schedule_C, "convergence.schedule_C")
    for q in c.q:
        if q < 1:
            raise ConfigError("convergence.q entries must be >= 1")
    for pair in c.pairs:
        if len(pair) != 2 or pair[0] < 0 or int(pair[1]) < 1:
            raise ConfigError("convergence.pairs entries must be [t, N]")
    p = cfg.pde
    if not p.right > p.left or p.n_cells < 2:
        raise ConfigError("pde grid needs right > left and n_cells >= 2")
    _positive(p.t_end, "pde.t_end", allow_zero=True)
    if p.dt is not None:
        _positive(p.dt, "pde.dt")
    if not 0 < p.cfl <= 1:
        raise ConfigError("pde.cfl must lie in (0, 1]")
    if cfg.metric.name not in ("bl-weighted", "bl-flat", "wasserstein"):
        raise ConfigError("metric.name must be bl-weighted, bl-flat or wasserstein")
    if cfg.bayes.likelihood not in ("logistic", "gaussian"):
        raise ConfigError("bayes.likelihood must be 'logistic' or 'gaussian'")
    return cfg


def from_dict(data: dict, base_dir=".") -> ExperimentConfig:
    data = dict(data)
    if "kind" not in data:
        raise ConfigError("missing top-level key 'kind'")
    kw = {"kind": data.pop("kind"), "base_dir": str(base_dir)}
    for key in ("seed", "out"):
        if key in data:
            kw[key] = data.pop(key)
    for name, cls in _SECTIONS.items():
        if name in data:
            kw[name] = _build(cls, data.pop(name), name)
    if data:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(data))}")
    try:
        cfg = ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return validate(cfg)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return from_dict(data, base_dir=path.parent)
