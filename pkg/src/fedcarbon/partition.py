"""Dirichlet class-proportion partitioning of labelled data across clients.

Each client k receives an equal number of samples whose class mix follows
q_k ~ Dir(alpha * p), where p is a prior over classes.  Large alpha pushes
every q_k toward p (near IID shards), small alpha concentrates each q_k on
few classes.  The Dirichlet mean is p and the per-component variance is
p_i (1 - p_i) / (alpha + 1) when p sums to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ClassPrior",
    "Partition",
    "Assignment",
    "uniform_prior",
    "empirical_prior",
    "sample_dirichlet",
    "lda_partition",
    "assign_samples",
]

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ClassPrior:
    """Reference distribution over class labels."""

    proportions: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.proportions) < 2:
            raise ValueError("a class prior needs at least two classes")
        if any(not math.isfinite(p) or p < 0 for p in self.proportions):
            raise ValueError("prior proportions must be finite and >= 0")
        total = sum(self.proportions)
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"prior proportions must sum to 1, got {total!r}")

    @property
    def num_classes(self) -> int:
        return len(self.proportions)


def uniform_prior(num_classes: int) -> ClassPrior:
    """Equal mass 1/m on each of m classes."""
    if not (isinstance(num_classes, int) and num_classes >= 2):
        raise ValueError("num_classes must be an integer >= 2")
    return ClassPrior(tuple(1.0 / num_classes for _ in range(num_classes)))


def empirical_prior(class_counts: Sequence[int]) -> ClassPrior:
    """Class frequencies of an observed label pool, N_i / N."""
    counts = list(class_counts)
    if len(counts) < 2:
        raise ValueError("need counts for at least two classes")
    if any((not isinstance(c, (int, np.integer))) or c < 0 for c in counts):
        raise ValueError("class counts must be integers >= 0")
    total = sum(counts)
    if total <= 0 or sum(1 for c in counts if c > 0) < 2:
        raise ValueError("at least two classes must have positive counts")
    return ClassPrior(tuple(c / total for c in counts))


def sample_dirichlet(alpha_vec: Sequence[float] | np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """One draw from Dir(alpha_vec); every concentration must be > 0."""
    alpha = np.asarray(alpha_vec, dtype=float)
    if alpha.ndim != 1 or alpha.size < 2:
        raise ValueError("alpha_vec must be a 1-d vector of length >= 2")
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise ValueError("every Dirichlet concentration must be finite and > 0")
    return rng.dirichlet(alpha)


@dataclass(frozen=True)
class Partition:
    """Per-client class proportions drawn for one partitioning run."""

    alpha: float
    per_client: np.ndarray  # shape (num_clients, num_classes), rows on the simplex
    samples_per_client: int

    @property
    def num_clients(self) -> int:
        return int(self.per_client.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.per_client.shape[1])


def lda_partition(prior: ClassPrior, alpha: float, num_clients: int,
                  samples_per_client: int,
                  seed: int | np.random.SeedSequence) -> Partition:
    """Draw q_k ~ Dir(alpha * prior) for each of num_clients clients."""
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValueError("alpha must be finite and > 0")
    if not (isinstance(num_clients, int) and num_clients >= 1):
        raise ValueError("num_clients must be an integer >= 1")
    if not (isinstance(samples_per_client, int) and samples_per_client >= 1):
        raise ValueError("samples_per_client must be an integer >= 1")
    rng = np.random.default_rng(seed)
    concentration = alpha * np.asarray(prior.proportions, dtype=float)
    if np.any(concentration <= 0):
        raise ValueError("every Dirichlet concentration must be finite and > 0")
    rows = np.stack([sample_dirichlet(concentration, rng) for _ in range(num_clients)])
    rows.setflags(write=False)
    return Partition(alpha=float(alpha), per_client=rows,
                     samples_per_client=samples_per_client)


@dataclass(frozen=True)
class Assignment:
    """Concrete, disjoint per-client index sets drawn for a partition.

    exhaustion_warnings counts the times a client's draw had to be
    re-spread over the classes that still had samples left.
    """

    per_client: tuple[np.ndarray, ...]
    exhaustion_warnings: int


def assign_samples(labels: Sequence[int] | np.ndarray, partition: Partition,
                   seed: int | np.random.SeedSequence) -> Assignment:
    """Map a label pool to disjoint per-client sample index sets.

    Each client draws samples_per_client labels from its q_k (as one
    multinomial) and takes that many unused samples of each class.  When a
    class runs dry the unmet remainder is redrawn from q_k renormalized
    over the classes that still have stock; each such event bumps the
    warning counter.  Raises when the whole pool cannot cover the request.
    """
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError("labels must be a 1-d sequence")
    m = partition.num_classes
    if y.size and (y.min() < 0 or y.max() >= m):
        raise ValueError(f"labels must lie in [0, {m})")
    needed = partition.num_clients * partition.samples_per_client
    if needed > y.size:
        raise ValueError(
            f"label pool exhausted: {needed} samples requested, {y.size} available")

    rng = np.random.default_rng(seed)
    # Shuffled per-class stacks; popping from the end is draw order.
    pools: list[list[int]] = []
    for c in range(m):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        pools.append(list(idx))
    avail = np.array([len(p) for p in pools])

    shards: list[np.ndarray] = []
    warnings = 0
    for k in range(partition.num_clients):
        q = np.array(partition.per_client[k], dtype=float)
        alloc = np.zeros(m, dtype=int)
        need = partition.samples_per_client
        while need > 0:
            open_mask = avail > 0
            if not open_mask.any():
                raise ValueError("label pool exhausted while assigning samples")
            weights = np.where(open_mask, q, 0.0)
            total = weights.sum()
            if total <= 0:
                # q's mass sits entirely on empty classes; fall back to
                # uniform over whatever is left.  The realized mix then
                # has nothing to do with q, which is worth a warning even
                # when the draw itself succeeds in one pass.
                weights = open_mask.astype(float)
                total = weights.sum()
                warnings += 1
            draw = rng.multinomial(need, weights / total)
            grant = np.minimum(draw, avail)
            alloc += grant
            avail -= grant
            need -= int(grant.sum())
            if need > 0:
                # Some requested class ran dry; the remainder is redrawn
                # over the classes that still have stock.
                warnings += 1
        taken = [pools[c].pop() for c in range(m) for _ in range(alloc[c])]
        shard = np.sort(np.array(taken, dtype=int))
        shard.setflags(write=False)
        shards.append(shard)
    return Assignment(per_client=tuple(shards), exhaustion_warnings=warnings)
