"""Experiment configuration: defaults, YAML/JSON loading, validation, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data import PARTITION_RULES, DatasetSpec
from .geometry import MODES
from .losses import KINDS
from .params import NetworkParams, db_to_linear, parse_policy
from .training import REFERENCE_UPDATES


class ConfigError(ValueError):
    pass


@dataclass
class NetworkConfig:
    ap_density: float = 1e-4
    K: int = 100
    N: int = 10
    tx_power: float = 0.2
    noise_power: float = 1e-13
    alpha: float = 3.8
    theta_db: float = 0.0

    def params(self, **over) -> NetworkParams:
        kw = dict(ap_density=self.ap_density, ues_per_cell=self.K, subchannels=self.N,
                  tx_power=self.tx_power, noise_power=self.noise_power,
                  path_loss_exp=self.alpha, sinr_threshold=db_to_linear(self.theta_db))
        if "theta_db" in over:
            over["sinr_threshold"] = db_to_linear(over.pop("theta_db"))
        kw.update(over)
        return NetworkParams(**kw)


@dataclass
class RatesConfig:
    beta: float = 0.25
    eps: float = 1e-2
    n: int = 1000
    policies: list = field(default_factory=lambda: ["RS", "RR", "PF", "NS"])
    # G sweep at fixed N, one sweep per threshold
    g_grid: list = field(default_factory=lambda: list(range(2, 21)))
    g_sweep_theta_db: list = field(default_factory=lambda: [15.0, -25.0])
    # threshold sweep at fixed G
    theta_db_grid: list = field(default_factory=lambda: [float(x) for x in range(-30, 21)])
    theta_sweep_g: int = 20


@dataclass
class TradeoffConfig:
    theta_ref_db: float = 0.0
    n_ref: int = 10
    n_grid: list = field(default_factory=lambda: list(range(1, 51)))
    policies: list = field(default_factory=lambda: ["RS", "RR", "PF"])


@dataclass
class McConfig:
    trials: int = 200_000
    theta_db: list = field(default_factory=lambda: [-10.0, 0.0, 10.0])
    policies: list = field(default_factory=lambda: ["RS", "PF", "NS"])
    mode: str = "standard_exclusion"


@dataclass
class TrainingConfig:
    policies: list = field(default_factory=lambda: ["RS", "RR", "PF"])
    rounds: int = 200
    H: int = 1
    loss: str = "logistic"
    xi: float = 0.1
    channel: str = "bernoulli"
    seeds: int = 10
    reference_update: str = "delivered"
    eps: float = 1e-3
    # algorithm 1 baseline
    tau: int = 5
    step: float = 0.05
    # rounds-bound check: measure beta, then compare the gap at the bound
    bound_check: bool = False
    # bound targets as multiples of n
    bound_eps_factors: list = field(default_factory=lambda: [1e-2])
    beta_seeds: int = 3
    beta_rounds: int = 30
    target_accuracy: float | None = None


@dataclass
class ExperimentConfig:
    seed: int = 0
    threads: int = 1
    out: str = "results"
    network: NetworkConfig = field(default_factory=NetworkConfig)
    rates: RatesConfig = field(default_factory=RatesConfig)
    tradeoff: TradeoffConfig = field(default_factory=TradeoffConfig)
    mc: McConfig = field(default_factory=McConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["dataset"].get("sizes") is not None:
            d["dataset"]["sizes"] = list(d["dataset"]["sizes"])
        return d

    def result_dict(self):
        """Fields that can change results (excludes threads and output path)."""
        d = self.to_dict()
        d.pop("threads")
        d.pop("out")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.result_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "seed": self.seed}


_SECTIONS = {
    "network": NetworkConfig,
    "rates": RatesConfig,
    "tradeoff": TradeoffConfig,
    "mc": McConfig,
    "training": TrainingConfig,
    "dataset": DatasetSpec,
}


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kw = dict(data)
    if cls is DatasetSpec and kw.get("sizes") is not None:
        kw["sizes"] = tuple(kw["sizes"])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    kw = {k: data[k] for k in ("seed", "threads", "out") if k in data}
    for name, cls in _SECTIONS.items():
        kw[name] = _build(cls, data.get(name), name)
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: parse error: {e}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data or {})


def _grid(name, values, integer=False):
    if not values:
        raise ConfigError(f"{name}: grid is empty")
    for v in values:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ConfigError(f"{name}: non-finite or non-numeric value {v!r}")
        if integer and int(v) != v:
            raise ConfigError(f"{name}: expected integers, got {v!r}")


def _policies(name, pols, allowed=None):
    if not pols:
        raise ConfigError(f"{name}: policy list is empty")
    for p in pols:
        try:
            pol, _ = parse_policy(p)
        except ValueError as e:
            raise ConfigError(f"{name}: {e}") from None
        if allowed is not None and pol.value not in allowed:
            raise ConfigError(f"{name}: policy {p!r} not supported here")


def validate(cfg: ExperimentConfig):
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(cfg.threads, int) or cfg.threads < 1:
        raise ConfigError("threads must be a positive integer")
    net = cfg.network
    try:
        net.params()
    except ValueError as e:
        raise ConfigError(f"network: {e}") from None
    r = cfg.rates
    if not 0 < r.beta < 1:
        raise ConfigError("rates.beta must lie in (0, 1)")
    if not 0 < r.eps < r.n:
        raise ConfigError("rates: need 0 < eps < n")
    _policies("rates.policies", r.policies)
    _grid("rates.g_grid", r.g_grid, integer=True)
    _grid("rates.g_sweep_theta_db", r.g_sweep_theta_db)
    _grid("rates.theta_db_grid", r.theta_db_grid)
    t = cfg.tradeoff
    _grid("tradeoff.n_grid", t.n_grid, integer=True)
    _policies("tradeoff.policies", t.policies)
    m = cfg.mc
    if m.trials < 1:
        raise ConfigError("mc.trials must be >= 1")
    if m.mode not in MODES:
        raise ConfigError(f"mc.mode must be one of {MODES}")
    _grid("mc.theta_db", m.theta_db)
    _policies("mc.policies", m.policies, {"RS", "RR", "PF", "NS", "OneShot"})
    tr = cfg.training
    _policies("training.policies", tr.policies)
    if tr.loss not in KINDS:
        raise ConfigError(f"training.loss must be one of {KINDS}")
    if tr.channel not in ("bernoulli", "ideal", "physical"):
        raise ConfigError("training.channel must be bernoulli, ideal or physical")
    if tr.reference_update not in REFERENCE_UPDATES:
        raise ConfigError(f"training.reference_update must be one of {REFERENCE_UPDATES}")
    if tr.rounds < 1 or tr.H < 1 or tr.seeds < 1 or tr.tau < 1:
        raise ConfigError("training: rounds, H, seeds and tau must be >= 1")
    _grid("training.bound_eps_factors", tr.bound_eps_factors)
    if any(f <= 0 or f >= 1 for f in tr.bound_eps_factors):
        raise ConfigError("training.bound_eps_factors must lie in (0, 1)")
    if not tr.xi > 0 or not tr.step > 0:
        raise ConfigError("training: xi and step must be positive")
    ds = cfg.dataset
    if ds.partition not in PARTITION_RULES:
        raise ConfigError(f"dataset.partition must be one of {PARTITION_RULES}")
    if ds.source not in ("synthetic_gaussian", "file"):
        raise ConfigError("dataset.source must be synthetic_gaussian or file")
    if ds.source == "synthetic_gaussian" and ds.n < net.K:
        raise ConfigError(f"dataset.n={ds.n} must be >= K={net.K}")
    return cfg


def dump_config(cfg: ExperimentConfig, path, full: bool = False):
    """Write the config as YAML; by default only the result-affecting fields."""
    d = cfg.to_dict() if full else cfg.result_dict()
    Path(path).write_text(yaml.safe_dump(d, sort_keys=False))
