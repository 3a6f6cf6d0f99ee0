"""Desk-scale federated training on a synthetic classification task.

The task is a Gaussian mixture (one spherical cluster per class) and the
model is multinomial logistic regression, optionally with one hidden tanh
layer.  Clients run mini-batch SGD locally; the server combines client
deltas either by sample-weighted averaging or by an Adam-style server
update on the averaged delta.

Every stochastic choice (client selection, batch order, parameter init,
shard assignment) draws from a generator derived from (seed, stream tag,
round, client), so runs are bit-reproducible and a one-client
full-participation run follows the exact same batch order as plain
centralized SGD with the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .carbon import RoundSchedule, ScheduleEntry
from .partition import (
    Assignment,
    ClassPrior,
    Partition,
    assign_samples,
    empirical_prior,
    lda_partition,
    uniform_prior,
)
from .profiles import (
    DEFAULT_CLIENT_LR,
    ExperimentConfig,
    HardwareProfile,
)

__all__ = [
    "derived_rng",
    "SimDataset",
    "ModelSpec",
    "SimConfig",
    "AccuracyTrace",
    "AdamState",
    "make_task",
    "sgd_epochs",
    "train_local",
    "select_clients",
    "fedavg_aggregate",
    "fedadam_aggregate",
    "weighted_delta",
    "simulate",
    "centralized_sgd",
    "rounds_to_target",
    "run_experiment",
]

# Stream tags keeping the derived generators of each stochastic choice
# disjoint.  (seed, tag, ...context) feeds a SeedSequence.
_STREAM_PARTITION = 11
_STREAM_ASSIGN = 12
_STREAM_INIT = 13
_STREAM_SELECT = 14
_STREAM_TRAIN = 15

TRAIN_FRACTION = 0.8


def derived_rng(*keys: int) -> np.random.Generator:
    """Deterministic generator for a tuple of integer keys."""
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


@dataclass(frozen=True)
class SimDataset:
    """Synthetic labelled pool with a fixed train/test split."""

    features: np.ndarray  # (n, f) float64
    labels: np.ndarray    # (n,) int64
    num_classes: int
    train_idx: np.ndarray  # sorted positions into features/labels
    test_idx: np.ndarray

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_idx]


def make_task(num_classes: int, num_features: int, n_samples: int, seed: int,
              separation: float = 3.0) -> SimDataset:
    """Gaussian mixture task: one unit-covariance cluster per class.

    With num_features >= num_classes the class means sit on scaled
    coordinate axes so every pair of means is exactly `separation` apart;
    with fewer features the means are random directions of the same radius
    and pairwise distances only approximate it.  Labels are balanced and
    the 80/20 train/test split is disjoint.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if num_features < 1:
        raise ValueError("num_features must be >= 1")
    if n_samples < 10:
        raise ValueError("n_samples must be >= 10")
    if not (math.isfinite(separation) and separation > 0):
        raise ValueError("separation must be finite and > 0")

    rng = np.random.default_rng(seed)
    radius = separation / math.sqrt(2.0)
    if num_features >= num_classes:
        means = np.zeros((num_classes, num_features))
        means[np.arange(num_classes), np.arange(num_classes)] = radius
    else:
        directions = rng.standard_normal((num_classes, num_features))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        means = radius * directions

    # Balanced labels: class c gets ceil or floor of n/m.
    labels = np.arange(n_samples) % num_classes
    rng.shuffle(labels)
    features = means[labels] + rng.standard_normal((n_samples, num_features))

    perm = rng.permutation(n_samples)
    n_train = int(TRAIN_FRACTION * n_samples)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    for arr in (features, labels, train_idx, test_idx):
        arr.setflags(write=False)
    return SimDataset(features=features, labels=labels.astype(np.int64),
                      num_classes=num_classes, train_idx=train_idx, test_idx=test_idx)


@dataclass(frozen=True)
class ModelSpec:
    """Shape of the classifier: softmax head, optional hidden tanh layer."""

    num_classes: int
    num_features: int
    hidden_units: int = 0

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if self.hidden_units < 0:
            raise ValueError("hidden_units must be >= 0")

    @property
    def dim(self) -> int:
        f, m, h = self.num_features, self.num_classes, self.hidden_units
        if h == 0:
            return m * (f + 1)
        return h * (f + 1) + m * (h + 1)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Zeros for the plain softmax model; scaled normals with a hidden
        layer (zero init would freeze all hidden units identically)."""
        if self.hidden_units == 0:
            return np.zeros(self.dim)
        f, m, h = self.num_features, self.num_classes, self.hidden_units
        w1 = rng.standard_normal(h * (f + 1)) / math.sqrt(f + 1)
        w2 = rng.standard_normal(m * (h + 1)) / math.sqrt(h + 1)
        return np.concatenate([w1, w2])

    def _unpack(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        f, m, h = self.num_features, self.num_classes, self.hidden_units
        if w.shape != (self.dim,):
            raise ValueError(f"parameter vector must have shape ({self.dim},)")
        if h == 0:
            return w.reshape(m, f + 1), None
        w1 = w[: h * (f + 1)].reshape(h, f + 1)
        w2 = w[h * (f + 1):].reshape(m, h + 1)
        return w1, w2

    def _logits(self, w: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        first, second = self._unpack(w)
        xb = np.hstack([x, np.ones((x.shape[0], 1))])
        if second is None:
            return xb @ first.T, None
        hidden = np.tanh(xb @ first.T)
        hb = np.hstack([hidden, np.ones((hidden.shape[0], 1))])
        return hb @ second.T, hidden

    def loss_and_grad(self, w: np.ndarray, x: np.ndarray,
                      y: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean cross-entropy over the batch and its gradient in w."""
        b = x.shape[0]
        if b == 0:
            raise ValueError("batch must be non-empty")
        logits, hidden = self._logits(w, x)
        logits = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / exp.sum(axis=1, keepdims=True)
        loss = float(-np.mean(np.log(probs[np.arange(b), y] + 1e-300)))

        dz = probs.copy()
        dz[np.arange(b), y] -= 1.0
        dz /= b
        xb = np.hstack([x, np.ones((b, 1))])
        if hidden is None:
            grad = (dz.T @ xb).ravel()
            return loss, grad
        _, second = self._unpack(w)
        assert second is not None
        hb = np.hstack([hidden, np.ones((b, 1))])
        g2 = dz.T @ hb
        dh = (dz @ second[:, :-1]) * (1.0 - hidden ** 2)
        g1 = dh.T @ xb
        return loss, np.concatenate([g1.ravel(), g2.ravel()])

    def predict(self, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        logits, _ = self._logits(w, x)
        return logits.argmax(axis=1)

    def accuracy(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(w, x) == y))


def sgd_epochs(w: np.ndarray, x: np.ndarray, y: np.ndarray, spec: ModelSpec,
               epochs: int, lr: float, batch_size: int,
               rng: np.random.Generator) -> np.ndarray:
    """Mini-batch SGD: full shuffled passes, last short batch included."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if not (math.isfinite(lr) and lr > 0):
        raise ValueError("lr must be finite and > 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty shard")
    out = w.copy()
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            _, grad = spec.loss_and_grad(out, x[batch], y[batch])
            out -= lr * grad
    return out


def train_local(w: np.ndarray, dataset: SimDataset, shard: np.ndarray,
                spec: ModelSpec, epochs: int, lr: float, batch_size: int,
                rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """One client's local pass; returns (delta, shard size)."""
    if len(shard) == 0:
        raise ValueError("cannot train on an empty shard")
    xs = dataset.features[shard]
    ys = dataset.labels[shard]
    trained = sgd_epochs(w, xs, ys, spec, epochs, lr, batch_size, rng)
    return trained - w, int(len(shard))


def select_clients(pool_size: int, clients_per_round: int, round_index: int,
                   seed: int) -> np.ndarray:
    """Sampling without replacement, deterministic per (seed, round)."""
    if clients_per_round > pool_size:
        raise ValueError("clients_per_round must be <= pool_size")
    if clients_per_round < 1:
        raise ValueError("clients_per_round must be >= 1")
    rng = derived_rng(seed, _STREAM_SELECT, round_index)
    chosen = rng.choice(pool_size, size=clients_per_round, replace=False)
    return np.sort(chosen)


def weighted_delta(updates: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    """Sample-weighted mean of client deltas, accumulated in list order."""
    if not updates:
        raise ValueError("need at least one update")
    dim = updates[0][0].shape
    total = 0
    for delta, n_k in updates:
        if delta.shape != dim:
            raise ValueError("all deltas must share one shape")
        if not (isinstance(n_k, (int, np.integer)) and n_k >= 1):
            raise ValueError("every update needs a sample count >= 1")
        total += int(n_k)
    acc = np.zeros(dim)
    for delta, n_k in updates:
        acc += (n_k / total) * delta
    return acc


def fedavg_aggregate(w: np.ndarray,
                     updates: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    """w plus the sample-weighted mean delta."""
    avg = weighted_delta(updates)
    if avg.shape != w.shape:
        raise ValueError("delta shape must match the parameter vector")
    return w + avg


@dataclass(frozen=True)
class AdamState:
    """Server-side first and second moment accumulators."""

    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim))


def fedadam_aggregate(state: AdamState, w: np.ndarray, delta: np.ndarray,
                      server_lr: float, beta1: float, beta2: float,
                      tau: float) -> tuple[np.ndarray, AdamState]:
    """Adam-style server step on the averaged client delta.

    m <- b1 m + (1-b1) d;  v <- b2 v + (1-b2) d^2;
    w' = w + lr * m / (sqrt(v) + tau).  No bias correction.
    """
    if delta.shape != w.shape or state.m.shape != w.shape or state.v.shape != w.shape:
        raise ValueError("state, weights and delta must share one shape")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ValueError("beta coefficients must lie in [0, 1)")
    if not (math.isfinite(tau) and tau > 0):
        raise ValueError("tau must be finite and > 0")
    if not (math.isfinite(server_lr) and server_lr > 0):
        raise ValueError("server_lr must be finite and > 0")
    m = beta1 * state.m + (1.0 - beta1) * delta
    v = beta2 * state.v + (1.0 - beta2) * delta ** 2
    new_w = w + server_lr * m / (np.sqrt(v) + tau)
    return new_w, AdamState(m=m, v=v)


@dataclass(frozen=True)
class SimConfig:
    """Everything one federated run needs besides data and hardware."""

    pool_size: int
    clients_per_round: int
    max_rounds: int
    local_epochs: int
    strategy: str = "fedavg"
    client_lr: float = DEFAULT_CLIENT_LR
    server_lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 0.001
    batch_size: int = 32
    target_accuracy: float = 0.5
    seed: int = 0
    hidden_units: int = 0

    def __post_init__(self) -> None:
        if not (self.pool_size >= 1 and self.clients_per_round >= 1):
            raise ValueError("pool_size and clients_per_round must be >= 1")
        if self.clients_per_round > self.pool_size:
            raise ValueError("clients_per_round must be <= pool_size")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.strategy not in ("fedavg", "fedadam"):
            raise ValueError("strategy must be 'fedavg' or 'fedadam'")
        if not (0.0 <= self.target_accuracy <= 1.0):
            raise ValueError("target_accuracy must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class AccuracyTrace:
    """Per-round test accuracy plus the uniform per-round wall time."""

    accuracies: tuple[float, ...]
    round_time_s: float

    @property
    def rounds(self) -> int:
        return len(self.accuracies)


def simulate(config: SimConfig, dataset: SimDataset, partition: Partition,
             hardware: HardwareProfile) -> tuple[AccuracyTrace, RoundSchedule, np.ndarray]:
    """Run federated rounds until the accuracy target or the round cap.

    Wall time per round is local_epochs times the profiled epoch time.
    The returned schedule lists exactly the clients that trained, so it
    can be priced directly; the third element is the final parameter
    vector, so degenerate runs can be compared against plain SGD.
    """
    if partition.num_clients != config.pool_size:
        raise ValueError(
            f"partition covers {partition.num_clients} clients, "
            f"config declares {config.pool_size}")
    if partition.num_classes != dataset.num_classes:
        raise ValueError("partition and dataset disagree on the class count")

    assignment = assign_samples(dataset.train_labels(), partition,
                                np.random.SeedSequence([config.seed, _STREAM_ASSIGN]))
    shards = [dataset.train_idx[pos] for pos in assignment.per_client]

    spec = ModelSpec(dataset.num_classes, dataset.num_features, config.hidden_units)
    w = spec.init_params(derived_rng(config.seed, _STREAM_INIT))
    adam = AdamState.zeros(spec.dim)

    x_test = dataset.features[dataset.test_idx]
    y_test = dataset.labels[dataset.test_idx]
    round_time = config.local_epochs * hardware.time_per_local_epoch_s

    accuracies: list[float] = []
    entries: list[ScheduleEntry] = []
    for r in range(config.max_rounds):
        chosen = select_clients(config.pool_size, config.clients_per_round,
                                r, config.seed)
        updates: list[tuple[np.ndarray, int]] = []
        for cid in chosen:
            cid = int(cid)
            rng = derived_rng(config.seed, _STREAM_TRAIN, r, cid)
            delta, n_k = train_local(w, dataset, shards[cid], spec,
                                     config.local_epochs, config.client_lr,
                                     config.batch_size, rng)
            updates.append((delta, n_k))
            entries.append(ScheduleEntry(r, cid, round_time, hardware))
        if config.strategy == "fedavg":
            w = fedavg_aggregate(w, updates)
        else:
            w, adam = fedadam_aggregate(adam, w, weighted_delta(updates),
                                        config.server_lr, config.beta1,
                                        config.beta2, config.tau)
        accuracies.append(spec.accuracy(w, x_test, y_test))
        if accuracies[-1] >= config.target_accuracy:
            break

    executed = len(accuracies)
    schedule = RoundSchedule(rounds=executed, participation=tuple(entries))
    return AccuracyTrace(tuple(accuracies), round_time), schedule, w


def centralized_sgd(dataset: SimDataset, periods: int, epochs_per_period: int,
                    lr: float, batch_size: int, seed: int,
                    hidden_units: int = 0) -> tuple[np.ndarray, tuple[float, ...]]:
    """Plain SGD on the full train split, evaluated every few epochs.

    Batch shuffles derive from (seed, period, client 0), so a one-client
    full-participation federated run with the same seed consumes the
    identical batch sequence.
    """
    spec = ModelSpec(dataset.num_classes, dataset.num_features, hidden_units)
    w = spec.init_params(derived_rng(seed, _STREAM_INIT))
    x_train = dataset.features[dataset.train_idx]
    y_train = dataset.labels[dataset.train_idx]
    x_test = dataset.features[dataset.test_idx]
    y_test = dataset.labels[dataset.test_idx]
    accuracies: list[float] = []
    for p in range(periods):
        rng = derived_rng(seed, _STREAM_TRAIN, p, 0)
        w = sgd_epochs(w, x_train, y_train, spec, epochs_per_period, lr,
                       batch_size, rng)
        accuracies.append(spec.accuracy(w, x_test, y_test))
    return w, tuple(accuracies)


def rounds_to_target(trace: AccuracyTrace, target: float) -> int | None:
    """1-based first round whose accuracy reaches target, None if never."""
    if not (0.0 <= target <= 1.0):
        raise ValueError("target must lie in [0, 1]")
    for i, acc in enumerate(trace.accuracies):
        if acc >= target:
            return i + 1
    return None


def _resolve_prior(setting: str | tuple[float, ...], dataset: SimDataset) -> ClassPrior:
    if setting == "uniform":
        return uniform_prior(dataset.num_classes)
    if setting == "empirical":
        counts = np.bincount(dataset.train_labels(), minlength=dataset.num_classes)
        return empirical_prior([int(c) for c in counts])
    return ClassPrior(tuple(setting))


def run_experiment(cfg: ExperimentConfig) -> tuple[AccuracyTrace, RoundSchedule, SimDataset]:
    """Wire a federated config end to end: task, partition, simulation."""
    if cfg.mode != "fl":
        raise ValueError("run_experiment requires a federated config")
    if cfg.fl is None or cfg.sim is None:
        raise ValueError("simulation needs both 'fl' and 'sim' objects")
    fl, sim = cfg.fl, cfg.sim

    dataset = make_task(sim.classes, sim.features, sim.n_samples,
                        seed=cfg.seed, separation=sim.separation)
    prior = _resolve_prior(sim.prior, dataset)
    n_train = len(dataset.train_idx)
    spc = sim.samples_per_client
    if spc is None:
        spc = n_train // fl.pool_size
        if spc < 1:
            raise ValueError("pool is larger than the training split")
    partition = lda_partition(prior, sim.alpha, fl.pool_size, spc,
                              np.random.SeedSequence([cfg.seed, _STREAM_PARTITION]))
    sim_config = SimConfig(
        pool_size=fl.pool_size,
        clients_per_round=fl.clients_per_round,
        max_rounds=fl.rounds,
        local_epochs=fl.local_epochs,
        strategy=fl.strategy,
        client_lr=sim.client_lr,
        server_lr=sim.server_lr,
        beta1=sim.beta1,
        beta2=sim.beta2,
        tau=sim.tau,
        batch_size=sim.batch_size,
        target_accuracy=sim.target_accuracy,
        seed=cfg.seed,
        hidden_units=sim.hidden_units,
    )
    trace, schedule, _ = simulate(sim_config, dataset, partition, cfg.hardware)
    return trace, schedule, dataset
