"""Carbon-aware ranking of federated design points.

The objective prices one run of r rounds with n clients per round at

    F = r * c * n * (t * e / 3600 + 5000 * s)   [grams CO2e]

where c is the grid intensity (kg per kWh, numerically g per Wh), t the
per-round wall time in seconds, e the client draw in watts and s the model
size in GB under the flat 5 kWh per GB transfer rate.  Design points are
compared by carbon cost F / G, grams per unit of reached accuracy G.

grid_search treats the evaluation of one cell as a black box, so measured
result tables can stand in for live simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

from .carbon import estimate_fl, schedule_prefix
from .profiles import ExperimentConfig, GridIntensity

__all__ = [
    "CostPoint",
    "CellOutcome",
    "CellResult",
    "objective_F",
    "carbon_cost",
    "pareto_front",
    "grid_search",
    "default_grid",
    "make_simulation_runner",
    "make_table_runner",
]

# Wh moved onto the grid per GB per transfer under the flat-rate model.
FLAT_RATE_WH_PER_GB = 5000.0

_REL_TOL = 1e-9


def objective_F(rounds: int, clients_per_round: int, round_time_s: float,
                grid: GridIntensity, client_power_w: float,
                model_size_gb: float = 0.0) -> float:
    """Grams of CO2e for a run of `rounds` federated rounds."""
    if not (isinstance(rounds, int) and rounds >= 0):
        raise ValueError("rounds must be an integer >= 0")
    if not (isinstance(clients_per_round, int) and clients_per_round >= 1):
        raise ValueError("clients_per_round must be an integer >= 1")
    if not (math.isfinite(round_time_s) and round_time_s >= 0):
        raise ValueError("round_time_s must be finite and >= 0")
    if not (math.isfinite(client_power_w) and client_power_w > 0):
        raise ValueError("client_power_w must be finite and > 0")
    if not (math.isfinite(model_size_gb) and model_size_gb >= 0):
        raise ValueError("model_size_gb must be finite and >= 0")
    per_client_wh = round_time_s * client_power_w / 3600.0 + FLAT_RATE_WH_PER_GB * model_size_gb
    return rounds * grid.c_rate_kg_per_kwh * clients_per_round * per_client_wh


def carbon_cost(co2e_g: float, accuracy: float) -> float:
    """Grams per unit accuracy; accuracy must lie in (0, 1]."""
    if not (math.isfinite(co2e_g) and co2e_g >= 0):
        raise ValueError("co2e_g must be finite and >= 0")
    if not (0.0 < accuracy <= 1.0):
        raise ValueError("accuracy must lie in (0, 1]")
    return co2e_g / accuracy


@dataclass(frozen=True)
class CostPoint:
    """One evaluated design point: emissions, accuracy and their ratio."""

    clients_per_round: int
    local_epochs: int
    partition_alpha: float
    rounds: int
    co2e_g: float
    accuracy: float
    carbon_cost: float

    def __post_init__(self) -> None:
        if not (0.0 < self.accuracy <= 1.0):
            raise ValueError("accuracy must lie in (0, 1]")
        if self.co2e_g < 0 or self.rounds < 0:
            raise ValueError("co2e_g and rounds must be >= 0")
        expect = self.carbon_cost * self.accuracy
        if not math.isclose(expect, self.co2e_g, rel_tol=_REL_TOL, abs_tol=1e-12):
            raise ValueError("carbon_cost * accuracy must equal co2e_g")


@dataclass(frozen=True)
class CellOutcome:
    """What a runner reports for one grid cell.

    target_* describe the first round whose accuracy reached the fixed
    target (None when it never did); stable_* describe the best accuracy
    seen over the whole round budget.
    """

    target_rounds: int | None
    target_co2e_g: float | None
    stable_rounds: int
    stable_accuracy: float
    stable_co2e_g: float


@dataclass(frozen=True)
class CellResult:
    """A grid cell with its two priced points (fixed target and stable)."""

    clients_per_round: int
    local_epochs: int
    partition_alpha: float
    at_target: CostPoint | None
    stable: CostPoint

    @property
    def reached_target(self) -> bool:
        return self.at_target is not None


def pareto_front(points: Sequence[CostPoint]) -> list[CostPoint]:
    """Non-dominated points under (lower co2e_g, higher accuracy).

    A point is dropped only if some other point is at least as good on
    both axes and strictly better on one; exact duplicates all survive.
    Input order is preserved.
    """
    out = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if j == i:
                continue
            if (q.co2e_g <= p.co2e_g and q.accuracy >= p.accuracy
                    and (q.co2e_g < p.co2e_g or q.accuracy > p.accuracy)):
                dominated = True
                break
        if not dominated:
            out.append(p)
    return out


def default_grid(max_clients: int = 10, epochs: tuple[int, ...] = (1, 5),
                 alphas: tuple[float, ...] = (1000.0, 0.1)) -> list[tuple[int, int, float]]:
    """The standard search space: n in 1..max, few/many local epochs,
    near-IID and concentrated partitions."""
    return [(n, e, a) for a in alphas for e in epochs for n in range(1, max_clients + 1)]


Runner = Callable[[int, int, float], CellOutcome]


def grid_search(cells: Iterable[tuple[int, int, float]], runner: Runner,
                target_accuracy: float) -> list[CellResult]:
    """Evaluate every cell and rank ascending by carbon cost at the target.

    Cells that never reach the target sort after all that do.  Ties break
    deterministically: fewer clients, then fewer local epochs, then lower
    alpha.
    """
    if not (0.0 < target_accuracy <= 1.0):
        raise ValueError("target_accuracy must lie in (0, 1]")
    results: list[CellResult] = []
    for n, local_epochs, alpha in cells:
        outcome = runner(n, local_epochs, alpha)
        at_target = None
        if outcome.target_rounds is not None:
            if outcome.target_co2e_g is None:
                raise ValueError("a reached target needs its co2e value")
            at_target = CostPoint(
                clients_per_round=n,
                local_epochs=local_epochs,
                partition_alpha=alpha,
                rounds=outcome.target_rounds,
                co2e_g=outcome.target_co2e_g,
                accuracy=target_accuracy,
                carbon_cost=carbon_cost(outcome.target_co2e_g, target_accuracy),
            )
        stable = CostPoint(
            clients_per_round=n,
            local_epochs=local_epochs,
            partition_alpha=alpha,
            rounds=outcome.stable_rounds,
            co2e_g=outcome.stable_co2e_g,
            accuracy=outcome.stable_accuracy,
            carbon_cost=carbon_cost(outcome.stable_co2e_g, outcome.stable_accuracy),
        )
        results.append(CellResult(n, local_epochs, alpha, at_target, stable))

    def key(cell: CellResult) -> tuple:
        if cell.at_target is None:
            return (1, math.inf, cell.clients_per_round, cell.local_epochs,
                    cell.partition_alpha)
        return (0, cell.at_target.carbon_cost, cell.clients_per_round,
                cell.local_epochs, cell.partition_alpha)

    return sorted(results, key=key)


def make_simulation_runner(base: ExperimentConfig) -> Runner:
    """Runner that simulates each cell from a federated base config.

    The run always uses the full round budget (no early stop), then reads
    the fixed-target crossing and the best-accuracy round off the trace.
    Emissions come from pricing the schedule prefix up to each round.
    """
    from .sim import rounds_to_target, run_experiment

    if base.mode != "fl" or base.fl is None or base.sim is None:
        raise ValueError("simulation runner needs a federated config with 'sim'")
    rule_target = base.sim.target_accuracy

    def run(n: int, local_epochs: int, alpha: float) -> CellOutcome:
        cfg = replace(
            base,
            fl=replace(base.fl, clients_per_round=n, local_epochs=local_epochs),
            sim=replace(base.sim, alpha=alpha, target_accuracy=1.0),
        )
        trace, schedule, _ = run_experiment(cfg)
        if trace.rounds == 0:
            raise ValueError("cell produced an empty run; increase fl.rounds")

        def co2_through(rounds: int) -> float:
            prefix = schedule_prefix(schedule, rounds)
            priced = replace(cfg, fl=replace(cfg.fl, rounds=rounds))
            return estimate_fl(priced, prefix).co2e_g

        hit = rounds_to_target(trace, rule_target)
        target_co2 = co2_through(hit) if hit is not None else None
        best = max(trace.accuracies)
        stable_rounds = trace.accuracies.index(best) + 1
        return CellOutcome(
            target_rounds=hit,
            target_co2e_g=target_co2,
            stable_rounds=stable_rounds,
            stable_accuracy=best,
            stable_co2e_g=co2_through(stable_rounds),
        )

    return run


def make_table_runner(table: dict) -> Runner:
    """Runner backed by a measured results table (see fixtures/).

    The table maps (alpha, local_epochs, clients) to the recorded rounds,
    emissions and accuracies; cells absent from the table raise KeyError.
    """
    index: dict[tuple[float, int, int], CellOutcome] = {}
    for block in table["blocks"]:
        alpha = float(block["alpha"])
        local_epochs = int(block["local_epochs"])
        for row in block["rows"]:
            n = int(row["clients"])
            target = row.get("target")
            stable = row["stable"]
            index[(alpha, local_epochs, n)] = CellOutcome(
                target_rounds=None if target is None else int(target["rounds"]),
                target_co2e_g=None if target is None else float(target["co2_g"]),
                stable_rounds=int(stable["rounds"]),
                stable_accuracy=float(stable["accuracy"]),
                stable_co2e_g=float(stable["co2_g"]),
            )

    def run(n: int, local_epochs: int, alpha: float) -> CellOutcome:
        return index[(float(alpha), int(local_epochs), int(n))]

    return run
