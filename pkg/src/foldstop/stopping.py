"""The incumbent store and the early-stopping decision functions.

A configuration is cross-validated fold by fold; after each non-final fold a
policy may call the evaluation off.  Policies compare the running mean of the
candidate's fold scores against a threshold derived from what has already
been fully evaluated:

* ``aggressive`` stops when the running mean is at or below the incumbent's
  full-CV mean.
* ``forgiving`` stops when the running mean is at or below the incumbent's
  worst single fold score.
* ``robust-M`` keeps a population of the top M fully evaluated configurations
  and stops unless swapping the candidate in would raise the population's
  mean-minus-deviation statistic.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

POLICY_NAMES = ("none", "aggressive", "forgiving", "robust-3", "robust-5")


@dataclass(frozen=True)
class PartialEvaluation:
    """Fold scores of a configuration evaluated on n of k folds so far."""

    config_id: str
    fold_scores: tuple[float, ...]
    k: int

    def __post_init__(self):
        if not 1 <= len(self.fold_scores) <= self.k:
            raise ValueError("need between 1 and k fold scores")

    @property
    def n(self) -> int:
        return len(self.fold_scores)

    @property
    def mean(self) -> float:
        return sum(self.fold_scores) / len(self.fold_scores)


@dataclass(frozen=True)
class IncumbentSnapshot:
    """Best fully evaluated configuration at some point in time."""

    config_id: str | None
    mean_score: float | None
    worst_score: float | None
    k: int
    seq: int = 0

    @property
    def empty(self) -> bool:
        return self.config_id is None


@dataclass(frozen=True)
class StoppingDecision:
    stop: bool
    threshold: float | None
    policy: str


class IncumbentStore:
    """Linearizable register holding the best fully evaluated configuration.

    Submissions replace the incumbent only on a strictly better full-CV mean,
    so ties keep the earlier configuration.  Readers get immutable snapshots;
    a reader acting on a slightly stale snapshot is acceptable by design.
    """

    def __init__(self, k: int):
        self.k = k
        self._lock = threading.Lock()
        self._snapshot = IncumbentSnapshot(
            config_id=None, mean_score=None, worst_score=None, k=k, seq=0
        )

    def snapshot(self) -> IncumbentSnapshot:
        with self._lock:
            return self._snapshot

    def submit(self, config_id: str, fold_scores: Sequence[float]) -> IncumbentSnapshot:
        """Offer a fully evaluated configuration; returns the current snapshot."""
        if len(fold_scores) != self.k:
            raise ValueError(f"expected {self.k} fold scores, got {len(fold_scores)}")
        if not all(math.isfinite(s) for s in fold_scores):
            raise ValueError("fold scores must be finite")
        mean = sum(fold_scores) / self.k
        with self._lock:
            current = self._snapshot
            if current.mean_score is None or mean > current.mean_score:
                self._snapshot = IncumbentSnapshot(
                    config_id=config_id,
                    mean_score=mean,
                    worst_score=min(fold_scores),
                    k=self.k,
                    seq=current.seq + 1,
                )
            return self._snapshot


def decide_aggressive(snapshot: IncumbentSnapshot, partial: PartialEvaluation) -> StoppingDecision:
    """Stop when the running mean cannot beat the incumbent's full-CV mean."""
    if snapshot.empty:
        return StoppingDecision(stop=False, threshold=None, policy="aggressive")
    return StoppingDecision(
        stop=partial.mean <= snapshot.mean_score,
        threshold=snapshot.mean_score,
        policy="aggressive",
    )


def decide_forgiving(snapshot: IncumbentSnapshot, partial: PartialEvaluation) -> StoppingDecision:
    """Stop when the running mean is at or below the incumbent's worst fold."""
    if snapshot.empty:
        return StoppingDecision(stop=False, threshold=None, policy="forgiving")
    return StoppingDecision(
        stop=partial.mean <= snapshot.worst_score,
        threshold=snapshot.worst_score,
        policy="forgiving",
    )


# ---------------------------------------------------------------------------
# Robust-M: population of the top M fully evaluated configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobustPopulation:
    """Up to M fully evaluated members, scored by mean minus deviation."""

    m: int
    members: tuple[tuple[str, tuple[float, ...]], ...] = ()

    @property
    def full(self) -> bool:
        return len(self.members) >= self.m

    def member_means(self) -> tuple[float, ...]:
        return tuple(sum(s) / len(s) for _, s in self.members)

    @property
    def statistic(self) -> float | None:
        if not self.full:
            return None
        return _mean_minus_std(self.member_means())


def _mean_minus_std(values: Sequence[float]) -> float:
    # population convention: divide by len(values)
    mu = sum(values) / len(values)
    var = sum((v - mu) ** 2 for v in values) / len(values)
    return mu - math.sqrt(var)


def decide_robust(population: RobustPopulation, partial: PartialEvaluation) -> StoppingDecision:
    """Stop unless swapping the candidate in would improve the statistic.

    The what-if replaces the member with the lowest mean score by the
    candidate's running mean; with fewer than M members every candidate may
    continue (warm-up).
    """
    name = f"robust-{population.m}"
    if not population.full:
        return StoppingDecision(stop=False, threshold=None, policy=name)
    current = population.statistic
    means = list(population.member_means())
    means[means.index(min(means))] = partial.mean
    candidate = _mean_minus_std(means)
    return StoppingDecision(stop=not candidate > current, threshold=current, policy=name)


def robust_commit(
    population: RobustPopulation, config_id: str, fold_scores: Sequence[float]
) -> RobustPopulation:
    """Admit a fully evaluated configuration, evicting the lowest-mean member."""
    entry = (config_id, tuple(float(s) for s in fold_scores))
    members = list(population.members)
    if len(members) < population.m:
        members.append(entry)
    else:
        means = [sum(s) / len(s) for _, s in members]
        members[means.index(min(means))] = entry
    return RobustPopulation(m=population.m, members=tuple(members))


# ---------------------------------------------------------------------------
# Engine-facing policy objects
# ---------------------------------------------------------------------------

class StoppingPolicy:
    """Uniform interface the scheduler drives: decide between folds, commit
    on completion.  The plain incumbent store is maintained by the scheduler
    for every policy, so subclasses only carry extra state they need."""

    name = "none"

    def decide(self, snapshot: IncumbentSnapshot, partial: PartialEvaluation) -> StoppingDecision:
        return StoppingDecision(stop=False, threshold=None, policy=self.name)

    def on_complete(self, config_id: str, fold_scores: Sequence[float]) -> None:
        pass


class AggressivePolicy(StoppingPolicy):
    name = "aggressive"

    def decide(self, snapshot, partial):
        return decide_aggressive(snapshot, partial)


class ForgivingPolicy(StoppingPolicy):
    name = "forgiving"

    def decide(self, snapshot, partial):
        return decide_forgiving(snapshot, partial)


class RobustPolicy(StoppingPolicy):
    def __init__(self, m: int):
        self.name = f"robust-{m}"
        self._lock = threading.Lock()
        self._population = RobustPopulation(m=m)

    @property
    def population(self) -> RobustPopulation:
        with self._lock:
            return self._population

    def decide(self, snapshot, partial):
        return decide_robust(self.population, partial)

    def on_complete(self, config_id, fold_scores):
        with self._lock:
            self._population = robust_commit(self._population, config_id, fold_scores)


def make_policy(name: str) -> StoppingPolicy:
    if name == "none":
        return StoppingPolicy()
    if name == "aggressive":
        return AggressivePolicy()
    if name == "forgiving":
        return ForgivingPolicy()
    if name in ("robust-3", "robust-5"):
        return RobustPolicy(m=int(name.split("-")[1]))
    raise ValueError(f"unknown stopping policy {name!r}; expected one of {POLICY_NAMES}")
