"""Energy and CO2e arithmetic for federated and centralized training runs.

The accounting is deliberately simple and auditable:

* device training energy is watts times seconds, summed over every
  (round, client) participation entry,
* centralized energy is the device draw times the run duration, scaled by
  the datacenter PUE,
* WAN transfer energy prices the time a full model exchange keeps the
  link busy (download plus upload) at router power plus the idle draw of
  the receiving device,
* a legacy flat-rate transfer model (5 kWh per GB per transfer) is kept
  for comparison with older estimates,
* grams of CO2e are energy times the grid intensity; kg per kWh equals
  g per Wh, so Wh values convert directly.

All public functions are pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable

from .profiles import (
    ConfigError,
    ExperimentConfig,
    GridIntensity,
    HardwareProfile,
    NetworkProfile,
    config_digest,
    _hardware_from_value,
)

__all__ = [
    "ScheduleEntry",
    "RoundSchedule",
    "EnergyBreakdown",
    "EmissionReport",
    "training_energy_fl",
    "training_energy_centralized",
    "communication_energy",
    "legacy_transfer_energy",
    "to_co2e",
    "estimate_fl",
    "estimate_centralized",
    "schedule_prefix",
    "schedule_to_dict",
    "schedule_from_dict",
]

SECONDS_PER_HOUR = 3600.0

# Flat-rate WAN model: kWh consumed by moving one GB once.
LEGACY_KWH_PER_GB = 5.0

MEGABITS_PER_GB = 8000.0


@dataclass(frozen=True)
class ScheduleEntry:
    """One client's participation in one round."""

    round_index: int
    client_id: int
    wall_time_s: float
    hardware: HardwareProfile

    def __post_init__(self) -> None:
        if not (isinstance(self.round_index, int) and self.round_index >= 0):
            raise ValueError("round_index must be an integer >= 0")
        if not (isinstance(self.client_id, int) and self.client_id >= 0):
            raise ValueError("client_id must be an integer >= 0")
        if not (math.isfinite(self.wall_time_s) and self.wall_time_s > 0):
            raise ValueError("wall_time_s must be finite and > 0")


@dataclass(frozen=True)
class RoundSchedule:
    """Who trained when, for how long, on what device.

    rounds is the number of executed rounds; every entry's round index must
    lie in [0, rounds) and no (round, client) pair may repeat.
    """

    rounds: int
    participation: tuple[ScheduleEntry, ...]

    def __post_init__(self) -> None:
        if not (isinstance(self.rounds, int) and self.rounds >= 0):
            raise ValueError("rounds must be an integer >= 0")
        seen: set[tuple[int, int]] = set()
        for e in self.participation:
            if e.round_index >= self.rounds:
                raise ValueError(
                    f"entry round {e.round_index} outside executed range [0, {self.rounds})")
            key = (e.round_index, e.client_id)
            if key in seen:
                raise ValueError(f"duplicate participation entry for {key}")
            seen.add(key)

    @classmethod
    def uniform(cls, rounds: int, clients_per_round: int, wall_time_s: float,
                hardware: HardwareProfile) -> "RoundSchedule":
        """Same clients, same wall time, every round (a uniform fleet)."""
        entries = tuple(
            ScheduleEntry(r, c, wall_time_s, hardware)
            for r in range(rounds) for c in range(clients_per_round)
        )
        return cls(rounds=rounds, participation=entries)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Training and communication energy in Wh plus derived totals."""

    training_wh: float
    communication_wh: float
    total_wh: float
    comm_fraction: float

    @classmethod
    def from_parts(cls, training_wh: float, communication_wh: float) -> "EnergyBreakdown":
        if training_wh < 0 or communication_wh < 0:
            raise ValueError("energy components must be >= 0")
        total = training_wh + communication_wh
        fraction = communication_wh / total if total > 0 else 0.0
        return cls(training_wh, communication_wh, total, fraction)


@dataclass(frozen=True)
class EmissionReport:
    """Energy breakdown priced on one grid region."""

    energy: EnergyBreakdown
    co2e_g: float
    grid: GridIntensity
    mode: str
    config_digest: str

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "training_wh": self.energy.training_wh,
            "communication_wh": self.energy.communication_wh,
            "total_wh": self.energy.total_wh,
            "comm_fraction": self.energy.comm_fraction,
            "co2e_g": self.co2e_g,
            "grid_region": self.grid.region,
            "c_rate": self.grid.c_rate_kg_per_kwh,
            "mode": self.mode,
            "config_digest": self.config_digest,
        }


def training_energy_fl(schedule: RoundSchedule) -> float:
    """Sum of wall_time_s * active_power_w over all entries, in Wh."""
    joules = sum(e.wall_time_s * e.hardware.active_power_w for e in schedule.participation)
    return joules / SECONDS_PER_HOUR


def training_energy_centralized(power_w: float, duration_s: float, pue: float) -> float:
    """PUE-scaled device energy of one centralized run, in Wh."""
    if not (math.isfinite(power_w) and power_w > 0):
        raise ValueError("power_w must be finite and > 0")
    if not (math.isfinite(duration_s) and duration_s >= 0):
        raise ValueError("duration_s must be finite and >= 0")
    if not (math.isfinite(pue) and pue >= 1.0):
        raise ValueError("pue must be >= 1.0")
    return pue * power_w * duration_s / SECONDS_PER_HOUR


def communication_energy(schedule: RoundSchedule, model_size_mb: float,
                         network: NetworkProfile) -> float:
    """WAN energy of exchanging the model each participation entry, in Wh.

    One exchange keeps the link busy for S * (1/D + 1/U) seconds, where S
    is the model size in megabits and D, U the link rates in Mbps.  That
    window is priced at router power plus the idle draw of the entry's
    device (the device waits while the payload moves).
    """
    if not (math.isfinite(model_size_mb) and model_size_mb >= 0):
        raise ValueError("model_size_mb must be finite and >= 0")
    transfer_s = model_size_mb * (1.0 / network.download_mbps + 1.0 / network.upload_mbps)
    joules = sum(
        transfer_s * (network.router_power_w + e.hardware.idle_power_w)
        for e in schedule.participation
    )
    return joules / SECONDS_PER_HOUR


def legacy_transfer_energy(model_size_gb: float, transfers: int) -> float:
    """Flat-rate WAN model: 5 kWh per GB per transfer.  Returns kWh."""
    if not (math.isfinite(model_size_gb) and model_size_gb >= 0):
        raise ValueError("model_size_gb must be finite and >= 0")
    if not (isinstance(transfers, int) and transfers >= 0):
        raise ValueError("transfers must be an integer >= 0")
    return LEGACY_KWH_PER_GB * model_size_gb * transfers


def to_co2e(energy_wh: float, grid: GridIntensity) -> float:
    """Grams of CO2e for energy_wh on the given grid.

    The grid rate is kg per kWh, which is numerically g per Wh, so the
    conversion is a single multiply.
    """
    if not (math.isfinite(energy_wh) and energy_wh >= 0):
        raise ValueError("energy_wh must be finite and >= 0")
    return energy_wh * grid.c_rate_kg_per_kwh


def _check_schedule_matches(cfg: ExperimentConfig, schedule: RoundSchedule) -> None:
    assert cfg.fl is not None
    if schedule.rounds != cfg.fl.rounds:
        raise ValueError(
            f"schedule has {schedule.rounds} rounds but config declares {cfg.fl.rounds}")
    per_round: dict[int, int] = {}
    for e in schedule.participation:
        per_round[e.round_index] = per_round.get(e.round_index, 0) + 1
        if e.client_id >= cfg.fl.pool_size:
            raise ValueError(
                f"schedule client {e.client_id} outside pool of {cfg.fl.pool_size}")
    for r in range(schedule.rounds):
        n = per_round.get(r, 0)
        if n != cfg.fl.clients_per_round:
            raise ValueError(
                f"round {r} has {n} participants, config declares "
                f"{cfg.fl.clients_per_round} per round")


def estimate_fl(cfg: ExperimentConfig, schedule: RoundSchedule) -> EmissionReport:
    """Price a federated schedule under the config's WAN model and grid."""
    if cfg.mode != "fl":
        raise ValueError(f"estimate_fl requires mode 'fl', got {cfg.mode!r}")
    assert cfg.fl is not None
    _check_schedule_matches(cfg, schedule)
    training = training_energy_fl(schedule)
    size_mb = cfg.fl.model_size_mb
    if size_mb <= 0:
        comm = 0.0
    elif cfg.fl.wan_model == "router":
        if cfg.network is None:
            raise ValueError("router wan model requires a network profile")
        comm = communication_energy(schedule, size_mb, cfg.network)
    else:
        kwh = legacy_transfer_energy(size_mb / MEGABITS_PER_GB, len(schedule.participation))
        comm = kwh * 1000.0
    energy = EnergyBreakdown.from_parts(training, comm)
    return EmissionReport(
        energy=energy,
        co2e_g=to_co2e(energy.total_wh, cfg.grid),
        grid=cfg.grid,
        mode="fl",
        config_digest=config_digest(cfg),
    )


def estimate_centralized(cfg: ExperimentConfig) -> EmissionReport:
    """Price a centralized run: epochs times epoch time at PUE-scaled power."""
    if cfg.mode != "centralized":
        raise ValueError(f"estimate_centralized requires mode 'centralized', got {cfg.mode!r}")
    dc = cfg.datacenter_profile()
    assert cfg.epochs is not None
    duration_s = cfg.epochs * dc.hardware.time_per_local_epoch_s
    training = training_energy_centralized(dc.hardware.active_power_w, duration_s, dc.pue)
    energy = EnergyBreakdown.from_parts(training, 0.0)
    return EmissionReport(
        energy=energy,
        co2e_g=to_co2e(energy.total_wh, cfg.grid),
        grid=cfg.grid,
        mode="centralized",
        config_digest=config_digest(cfg),
    )


def schedule_prefix(schedule: RoundSchedule, rounds: int) -> RoundSchedule:
    """Restrict a schedule to its first `rounds` rounds."""
    if not (isinstance(rounds, int) and 0 <= rounds <= schedule.rounds):
        raise ValueError(f"rounds must lie in [0, {schedule.rounds}]")
    entries = tuple(e for e in schedule.participation if e.round_index < rounds)
    return RoundSchedule(rounds=rounds, participation=entries)


# --- JSON round-trip ----------------------------------------------------

def _hw_dict(hw: HardwareProfile) -> dict[str, Any]:
    return {
        "name": hw.name,
        "active_power_w": hw.active_power_w,
        "idle_power_w": hw.idle_power_w,
        "time_per_local_epoch_s": hw.time_per_local_epoch_s,
        "kind": hw.kind,
    }


def schedule_to_dict(schedule: RoundSchedule) -> dict[str, Any]:
    return {
        "rounds": schedule.rounds,
        "participation": [
            {
                "round": e.round_index,
                "client": e.client_id,
                "wall_time_s": e.wall_time_s,
                "hardware": _hw_dict(e.hardware),
            }
            for e in schedule.participation
        ],
    }


def schedule_from_dict(raw: Any) -> RoundSchedule:
    """Parse a schedule JSON object.

    Two forms are accepted: an explicit "participation" entry list, or the
    compact {"rounds": R, "uniform": {"clients_per_round", "wall_time_s",
    "hardware"}} form that expands to the same clients every round.
    """
    if not isinstance(raw, dict) or "rounds" not in raw:
        raise ConfigError("schedule must be an object with a 'rounds' key")
    rounds = raw["rounds"]
    if "uniform" in raw:
        u = raw["uniform"]
        hw = _hardware_from_value(u["hardware"])
        return RoundSchedule.uniform(rounds, u["clients_per_round"], u["wall_time_s"], hw)
    if "participation" not in raw:
        raise ConfigError("schedule needs either 'participation' or 'uniform'")
    entries = []
    for item in raw["participation"]:
        hw = _hardware_from_value(item["hardware"])
        entries.append(ScheduleEntry(
            round_index=item["round"],
            client_id=item["client"],
            wall_time_s=item["wall_time_s"],
            hardware=hw,
        ))
    return RoundSchedule(rounds=rounds, participation=tuple(entries))
