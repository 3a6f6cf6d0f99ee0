"""Device, grid and datacenter profiles plus experiment-config ingestion.

Power draws and epoch times for the built-in hardware entries are bench
measurements of Jetson TX2 / Xavier NX boards and a V100 server under the
three reference workloads (image classification small/large, keyword
spotting).  Grid intensities are national yearly averages in kg CO2e per
kWh.  Registry names are namespaced: ``hw:``, ``grid:``, ``net:`` and
``pue:``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

__all__ = [
    "ConfigError",
    "HardwareProfile",
    "GridIntensity",
    "NetworkProfile",
    "DatacenterProfile",
    "FlSetup",
    "SimSetup",
    "ExperimentConfig",
    "builtin_registry",
    "active_registry",
    "load_config",
    "config_from_dict",
    "config_to_dict",
    "config_digest",
    "REGISTRY_ENV_VAR",
]

# Environment variable holding a path to a JSON file whose entries are
# merged over the built-in registry (same key/value schema).
REGISTRY_ENV_VAR = "FEDCARBON_REGISTRY"

EDGE = "edge"
DATACENTER = "datacenter"


class ConfigError(ValueError):
    """A config file or profile failed to parse or validate."""


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _finite(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class HardwareProfile:
    """Electrical behaviour of one device class under one workload.

    active_power_w is the draw during local training, idle_power_w the draw
    while the device waits (used to price the receiving end of a model
    transfer).  time_per_local_epoch_s is the measured wall time of one
    local epoch of the profiled workload.
    """

    name: str
    active_power_w: float
    idle_power_w: float
    time_per_local_epoch_s: float
    kind: str = EDGE

    def __post_init__(self) -> None:
        _check(self.kind in (EDGE, DATACENTER),
               f"hardware {self.name!r}: kind must be {EDGE!r} or {DATACENTER!r}")
        _check(_finite(self.active_power_w) and self.active_power_w > 0,
               f"hardware {self.name!r}: active_power_w must be finite and > 0")
        _check(_finite(self.idle_power_w) and self.idle_power_w >= 0,
               f"hardware {self.name!r}: idle_power_w must be finite and >= 0")
        _check(self.idle_power_w < self.active_power_w,
               f"hardware {self.name!r}: idle_power_w must be < active_power_w")
        _check(_finite(self.time_per_local_epoch_s) and self.time_per_local_epoch_s > 0,
               f"hardware {self.name!r}: time_per_local_epoch_s must be finite and > 0")


@dataclass(frozen=True)
class GridIntensity:
    """Average carbon intensity of one electricity grid, kg CO2e per kWh."""

    region: str
    c_rate_kg_per_kwh: float

    def __post_init__(self) -> None:
        _check(_finite(self.c_rate_kg_per_kwh) and self.c_rate_kg_per_kwh > 0,
               f"grid {self.region!r}: c_rate_kg_per_kwh must be finite and > 0")


@dataclass(frozen=True)
class NetworkProfile:
    """WAN link seen by participating clients plus the router draw in watts."""

    download_mbps: float
    upload_mbps: float
    router_power_w: float
    region: str = "custom"

    def __post_init__(self) -> None:
        _check(_finite(self.download_mbps) and self.download_mbps > 0,
               f"network {self.region!r}: download_mbps must be finite and > 0")
        _check(_finite(self.upload_mbps) and self.upload_mbps > 0,
               f"network {self.region!r}: upload_mbps must be finite and > 0")
        _check(_finite(self.router_power_w) and self.router_power_w >= 0,
               f"network {self.region!r}: router_power_w must be finite and >= 0")


@dataclass(frozen=True)
class DatacenterProfile:
    """Datacenter hardware wrapped with its power usage effectiveness."""

    hardware: HardwareProfile
    pue: float

    def __post_init__(self) -> None:
        _check(self.hardware.kind == DATACENTER,
               f"datacenter profile requires hardware of kind {DATACENTER!r}, "
               f"got {self.hardware.kind!r}")
        _check(_finite(self.pue) and self.pue >= 1.0,
               f"pue must be >= 1.0, got {self.pue!r}")


STRATEGIES = ("fedavg", "fedadam")
WAN_MODELS = ("router", "legacy-5kwh-per-gb")


@dataclass(frozen=True)
class FlSetup:
    """Federated round structure: fleet size, sampling rate and transfers.

    rounds is the maximum number of rounds a run may execute; model_size_mb
    is the payload exchanged per participation, in megabits.
    """

    pool_size: int
    clients_per_round: int
    rounds: int
    local_epochs: int
    model_size_mb: float = 0.0
    strategy: str = "fedavg"
    wan_model: str = "router"

    def __post_init__(self) -> None:
        _check(isinstance(self.pool_size, int) and self.pool_size >= 1,
               "fl.pool_size must be an integer >= 1")
        _check(isinstance(self.clients_per_round, int) and self.clients_per_round >= 1,
               "fl.clients_per_round must be an integer >= 1")
        _check(self.clients_per_round <= self.pool_size,
               "fl.clients_per_round must be <= fl.pool_size")
        _check(isinstance(self.rounds, int) and self.rounds >= 0,
               "fl.rounds must be an integer >= 0")
        _check(isinstance(self.local_epochs, int) and self.local_epochs >= 1,
               "fl.local_epochs must be an integer >= 1")
        _check(_finite(self.model_size_mb) and self.model_size_mb >= 0,
               "fl.model_size_mb must be finite and >= 0")
        _check(self.strategy in STRATEGIES,
               f"fl.strategy must be one of {STRATEGIES}")
        _check(self.wan_model in WAN_MODELS,
               f"fl.wan_model must be one of {WAN_MODELS}")


# Default client step size; the server-side Adam variant keeps the same
# local rate and applies its own server_lr on top.
DEFAULT_CLIENT_LR = 10.0 ** -1.5


@dataclass(frozen=True)
class SimSetup:
    """Knobs for the synthetic classification task and local training."""

    classes: int = 10
    features: int = 32
    n_samples: int = 5000
    separation: float = 3.0
    samples_per_client: int | None = None
    batch_size: int = 32
    target_accuracy: float = 0.5
    client_lr: float = DEFAULT_CLIENT_LR
    server_lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 0.001
    hidden_units: int = 0
    prior: str | tuple[float, ...] = "uniform"
    alpha: float = 1000.0

    def __post_init__(self) -> None:
        _check(isinstance(self.classes, int) and self.classes >= 2,
               "sim.classes must be an integer >= 2")
        _check(isinstance(self.features, int) and self.features >= 1,
               "sim.features must be an integer >= 1")
        _check(isinstance(self.n_samples, int) and self.n_samples >= 10,
               "sim.n_samples must be an integer >= 10")
        _check(_finite(self.separation) and self.separation > 0,
               "sim.separation must be finite and > 0")
        if self.samples_per_client is not None:
            _check(isinstance(self.samples_per_client, int) and self.samples_per_client >= 1,
                   "sim.samples_per_client must be an integer >= 1")
        _check(isinstance(self.batch_size, int) and self.batch_size >= 1,
               "sim.batch_size must be an integer >= 1")
        _check(_finite(self.target_accuracy) and 0.0 <= self.target_accuracy <= 1.0,
               "sim.target_accuracy must lie in [0, 1]")
        _check(_finite(self.client_lr) and self.client_lr > 0,
               "sim.client_lr must be finite and > 0")
        _check(_finite(self.server_lr) and self.server_lr > 0,
               "sim.server_lr must be finite and > 0")
        _check(_finite(self.beta1) and 0.0 <= self.beta1 < 1.0,
               "sim.beta1 must lie in [0, 1)")
        _check(_finite(self.beta2) and 0.0 <= self.beta2 < 1.0,
               "sim.beta2 must lie in [0, 1)")
        _check(_finite(self.tau) and self.tau > 0,
               "sim.tau must be finite and > 0")
        _check(isinstance(self.hidden_units, int) and self.hidden_units >= 0,
               "sim.hidden_units must be an integer >= 0")
        if isinstance(self.prior, str):
            _check(self.prior in ("uniform", "empirical"),
                   "sim.prior must be 'uniform', 'empirical' or a list of proportions")
        else:
            _check(len(self.prior) == self.classes,
                   "sim.prior list must have one entry per class")
        _check(_finite(self.alpha) and self.alpha > 0,
               "sim.alpha must be finite and > 0")


MODES = ("fl", "centralized")


@dataclass(frozen=True)
class ExperimentConfig:
    """One fully resolved experiment: what ran where, on which grid."""

    mode: str
    hardware: HardwareProfile
    grids: tuple[GridIntensity, ...]
    seed: int = 0
    network: NetworkProfile | None = None
    pue: float | None = None
    epochs: int | None = None
    fl: FlSetup | None = None
    sim: SimSetup | None = None

    def __post_init__(self) -> None:
        _check(self.mode in MODES, f"mode must be one of {MODES}")
        _check(len(self.grids) >= 1, "at least one grid region is required")
        _check(isinstance(self.seed, int), "seed must be an integer")
        if self.mode == "fl":
            _check(self.fl is not None, "fl mode requires an 'fl' object")
            assert self.fl is not None
            if self.fl.wan_model == "router" and self.fl.model_size_mb > 0:
                _check(self.network is not None,
                       "router wan model with a non-zero model size requires a 'network' object")
        else:
            _check(self.pue is not None, "centralized mode requires 'pue'")
            assert self.pue is not None
            _check(_finite(self.pue) and self.pue >= 1.0,
                   f"pue must be >= 1.0, got {self.pue!r}")
            _check(self.epochs is not None and isinstance(self.epochs, int)
                   and self.epochs >= 0,
                   "centralized mode requires integer 'epochs' >= 0")

    @property
    def grid(self) -> GridIntensity:
        """Primary grid region (first entry); reports are priced against it."""
        return self.grids[0]

    def datacenter_profile(self) -> DatacenterProfile:
        _check(self.mode == "centralized", "datacenter profile only exists in centralized mode")
        assert self.pue is not None
        return DatacenterProfile(hardware=self.hardware, pue=self.pue)


# --- built-in registry -------------------------------------------------

def _edge(name: str, active: float, idle: float, epoch_s: float) -> HardwareProfile:
    return HardwareProfile(name, active, idle, epoch_s, kind=EDGE)


def _dc(name: str, active: float, epoch_s: float) -> HardwareProfile:
    return HardwareProfile(name, active, 0.0, epoch_s, kind=DATACENTER)


_BUILTIN: Mapping[str, Any] = MappingProxyType({
    # Jetson boards: (active W under the workload, idle W, s per local epoch)
    "hw:tx2-cifar10": _edge("tx2-cifar10", 4.7, 1.35, 0.8),
    "hw:nx-cifar10": _edge("nx-cifar10", 6.3, 2.25, 0.6),
    "hw:tx2-imagenet": _edge("tx2-imagenet", 6.5, 1.35, 474.0),
    "hw:nx-imagenet": _edge("nx-imagenet", 9.7, 2.25, 273.0),
    "hw:tx2-speechcommands": _edge("tx2-speechcommands", 5.7, 1.35, 1.6),
    "hw:nx-speechcommands": _edge("nx-speechcommands", 7.9, 2.25, 0.9),
    # TX2 running flat out at its nominal 10 W budget; round time of the
    # small-image workload at that draw.
    "hw:tx2-nominal": _edge("tx2-nominal", 10.0, 1.35, 51.4),
    # V100 server (GPU + rest-of-node), per-epoch training times.
    "hw:v100-cifar10": _dc("v100-cifar10", 202.0, 24.0),
    "hw:v100-imagenet": _dc("v100-imagenet", 304.0, 1440.0),
    "hw:v100-speechcommands": _dc("v100-speechcommands", 124.0, 52.0),
    # National grid averages, kg CO2e per kWh.
    "grid:france": GridIntensity("france", 0.0790),
    "grid:usa": GridIntensity("usa", 0.5741),
    "grid:china": GridIntensity("china", 0.9746),
    # Power usage effectiveness ratios.
    "pue:world-2019": 1.67,
    "pue:google": 1.11,
    # No "net:" defaults ship: WAN bandwidth and router draw vary too much
    # across deployments to publish a representative value, so configs must
    # state them inline.
})


def builtin_registry() -> Mapping[str, Any]:
    """Immutable name -> profile map with the built-in measured values."""
    return _BUILTIN


def _registry_entry_from_json(name: str, value: Any) -> Any:
    if name.startswith("hw:"):
        _check(isinstance(value, dict), f"registry entry {name!r} must be an object")
        return _hardware_from_value(dict(value), default_name=name[3:], default_kind=None)
    if name.startswith("grid:"):
        _check(isinstance(value, dict), f"registry entry {name!r} must be an object")
        return GridIntensity(region=value.get("region", name[5:]),
                             c_rate_kg_per_kwh=value.get("c_rate_kg_per_kwh"))
    if name.startswith("net:"):
        _check(isinstance(value, dict), f"registry entry {name!r} must be an object")
        return _network_from_value(dict(value))
    if name.startswith("pue:"):
        _check(_finite(value) and value >= 1.0, f"registry entry {name!r} must be a number >= 1.0")
        return float(value)
    raise ConfigError(f"registry name {name!r} must start with hw:, grid:, net: or pue:")


def active_registry() -> dict[str, Any]:
    """Built-in registry merged with the optional override file.

    The override path comes from the FEDCARBON_REGISTRY environment
    variable and must point at a JSON object keyed by namespaced names.
    """
    merged: dict[str, Any] = dict(_BUILTIN)
    override = os.environ.get(REGISTRY_ENV_VAR)
    if override:
        path = Path(override)
        if not path.exists():
            raise ConfigError(f"{REGISTRY_ENV_VAR} points at a missing file: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"registry override {path} is not valid JSON: {exc}") from exc
        _check(isinstance(raw, dict), f"registry override {path} must be a JSON object")
        for name, value in raw.items():
            merged[name] = _registry_entry_from_json(name, value)
    return merged


# --- config parsing -----------------------------------------------------

def _hardware_from_value(value: Any, default_name: str = "inline",
                         default_kind: str | None = EDGE,
                         registry: Mapping[str, Any] | None = None) -> HardwareProfile:
    if isinstance(value, str):
        key = value if value.startswith("hw:") else f"hw:{value}"
        reg = registry if registry is not None else active_registry()
        if key not in reg:
            raise ConfigError(f"unknown hardware profile {value!r}")
        return reg[key]
    _check(isinstance(value, dict), "hardware must be a registry name or an inline object")
    known = {"name", "active_power_w", "idle_power_w", "time_per_local_epoch_s", "kind"}
    extra = set(value) - known
    _check(not extra, f"hardware object has unknown keys: {sorted(extra)}")
    for req in ("active_power_w", "idle_power_w", "time_per_local_epoch_s"):
        _check(req in value, f"inline hardware is missing {req!r}")
    kind = value.get("kind", default_kind)
    _check(kind is not None, "inline hardware requires 'kind'")
    return HardwareProfile(
        name=value.get("name", default_name),
        active_power_w=value["active_power_w"],
        idle_power_w=value["idle_power_w"],
        time_per_local_epoch_s=value["time_per_local_epoch_s"],
        kind=kind,
    )


def _grid_from_value(value: Any, registry: Mapping[str, Any]) -> GridIntensity:
    if isinstance(value, str):
        key = value if value.startswith("grid:") else f"grid:{value}"
        if key not in registry:
            raise ConfigError(f"unknown grid region {value!r}")
        return registry[key]
    _check(isinstance(value, dict), "grid must be a registry name or an inline object")
    _check("region" in value and "c_rate_kg_per_kwh" in value,
           "inline grid requires 'region' and 'c_rate_kg_per_kwh'")
    return GridIntensity(region=value["region"], c_rate_kg_per_kwh=value["c_rate_kg_per_kwh"])


def _network_from_value(value: Any, registry: Mapping[str, Any] | None = None) -> NetworkProfile:
    if isinstance(value, str):
        key = value if value.startswith("net:") else f"net:{value}"
        reg = registry if registry is not None else active_registry()
        if key not in reg:
            raise ConfigError(f"unknown network profile {value!r}")
        return reg[key]
    _check(isinstance(value, dict), "network must be an inline object or a registry name")
    for req in ("download_mbps", "upload_mbps", "router_power_w"):
        _check(req in value, f"network object is missing {req!r}")
    return NetworkProfile(
        download_mbps=value["download_mbps"],
        upload_mbps=value["upload_mbps"],
        router_power_w=value["router_power_w"],
        region=value.get("region", "custom"),
    )


def _pue_from_value(value: Any, registry: Mapping[str, Any]) -> float:
    if isinstance(value, str):
        key = value if value.startswith("pue:") else f"pue:{value}"
        if key not in registry:
            raise ConfigError(f"unknown pue entry {value!r}")
        return float(registry[key])
    _check(_finite(value), "pue must be a number or a registry name")
    return float(value)


def _fl_from_dict(value: Any) -> FlSetup:
    _check(isinstance(value, dict), "'fl' must be an object")
    known = {"pool_size", "clients_per_round", "rounds", "local_epochs",
             "model_size_mb", "strategy", "wan_model"}
    extra = set(value) - known
    _check(not extra, f"fl object has unknown keys: {sorted(extra)}")
    for req in ("pool_size", "clients_per_round", "rounds", "local_epochs"):
        _check(req in value, f"fl object is missing {req!r}")
    return FlSetup(**value)


def _sim_from_dict(value: Any) -> SimSetup:
    _check(isinstance(value, dict), "'sim' must be an object")
    known = {"classes", "features", "n_samples", "separation", "samples_per_client",
             "batch_size", "target_accuracy", "client_lr", "server_lr",
             "beta1", "beta2", "tau", "hidden_units", "prior", "alpha"}
    extra = set(value) - known
    _check(not extra, f"sim object has unknown keys: {sorted(extra)}")
    fields = dict(value)
    if isinstance(fields.get("prior"), list):
        fields["prior"] = tuple(float(p) for p in fields["prior"])
    return SimSetup(**fields)


def config_from_dict(raw: Any, registry: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from parsed JSON."""
    reg = registry if registry is not None else active_registry()
    _check(isinstance(raw, dict), "config root must be a JSON object")
    known = {"mode", "hardware", "grid", "network", "pue", "epochs", "fl", "sim", "seed"}
    extra = set(raw) - known
    _check(not extra, f"config has unknown top-level keys: {sorted(extra)}")
    for req in ("mode", "hardware", "grid"):
        _check(req in raw, f"config is missing {req!r}")
    mode = raw["mode"]
    _check(mode in MODES, f"mode must be one of {MODES}")

    default_kind = EDGE if mode == "fl" else DATACENTER
    hardware = _hardware_from_value(raw["hardware"], default_kind=default_kind, registry=reg)

    grid_raw = raw["grid"]
    grid_values = grid_raw if isinstance(grid_raw, list) else [grid_raw]
    _check(len(grid_values) >= 1, "'grid' must name at least one region")
    grids = tuple(_grid_from_value(v, reg) for v in grid_values)

    network = _network_from_value(raw["network"], reg) if "network" in raw else None
    pue = _pue_from_value(raw["pue"], reg) if "pue" in raw else None
    fl = _fl_from_dict(raw["fl"]) if "fl" in raw else None
    sim = _sim_from_dict(raw["sim"]) if "sim" in raw else None

    seed = raw.get("seed", 0)
    _check(isinstance(seed, int) and not isinstance(seed, bool), "seed must be an integer")

    epochs = raw.get("epochs")
    if epochs is not None:
        _check(isinstance(epochs, int) and not isinstance(epochs, bool),
               "'epochs' must be an integer")

    return ExperimentConfig(mode=mode, hardware=hardware, grids=grids, seed=seed,
                            network=network, pue=pue, epochs=epochs, fl=fl, sim=sim)


def load_config(path: str | Path, registry: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Read a JSON experiment config from disk, resolve names, validate."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError:
        raise
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON: {exc}") from exc
    return config_from_dict(raw, registry=registry)


def _hardware_to_dict(hw: HardwareProfile) -> dict[str, Any]:
    return {
        "name": hw.name,
        "active_power_w": hw.active_power_w,
        "idle_power_w": hw.idle_power_w,
        "time_per_local_epoch_s": hw.time_per_local_epoch_s,
        "kind": hw.kind,
    }


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Canonical fully resolved dict form; parsing it back compares equal."""
    out: dict[str, Any] = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "hardware": _hardware_to_dict(cfg.hardware),
        "grid": [{"region": g.region, "c_rate_kg_per_kwh": g.c_rate_kg_per_kwh}
                 for g in cfg.grids],
    }
    if cfg.network is not None:
        out["network"] = {
            "region": cfg.network.region,
            "download_mbps": cfg.network.download_mbps,
            "upload_mbps": cfg.network.upload_mbps,
            "router_power_w": cfg.network.router_power_w,
        }
    if cfg.pue is not None:
        out["pue"] = cfg.pue
    if cfg.epochs is not None:
        out["epochs"] = cfg.epochs
    if cfg.fl is not None:
        out["fl"] = {
            "pool_size": cfg.fl.pool_size,
            "clients_per_round": cfg.fl.clients_per_round,
            "rounds": cfg.fl.rounds,
            "local_epochs": cfg.fl.local_epochs,
            "model_size_mb": cfg.fl.model_size_mb,
            "strategy": cfg.fl.strategy,
            "wan_model": cfg.fl.wan_model,
        }
    if cfg.sim is not None:
        sim = cfg.sim
        out["sim"] = {
            "classes": sim.classes,
            "features": sim.features,
            "n_samples": sim.n_samples,
            "separation": sim.separation,
            "batch_size": sim.batch_size,
            "target_accuracy": sim.target_accuracy,
            "client_lr": sim.client_lr,
            "server_lr": sim.server_lr,
            "beta1": sim.beta1,
            "beta2": sim.beta2,
            "tau": sim.tau,
            "hidden_units": sim.hidden_units,
            "prior": list(sim.prior) if not isinstance(sim.prior, str) else sim.prior,
            "alpha": sim.alpha,
        }
        if sim.samples_per_client is not None:
            out["sim"]["samples_per_client"] = sim.samples_per_client
    return out


def config_digest(cfg: ExperimentConfig) -> str:
    """First 12 hex chars of the sha256 of the canonical config JSON."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
