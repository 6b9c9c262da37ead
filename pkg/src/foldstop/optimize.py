"""Configuration proposers: random search and a surrogate-based optimizer.

The surrogate optimizer samples an initial design at random, then fits a
regression forest on the encoded configurations observed so far and proposes
the best of Q random candidates under expected improvement.  Early-stopped
trials feed back either as failures (worst possible score) or as the mean of
their evaluated folds, which is the design choice under study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .learners.forest import ForestParams, ForestRegressor
from .searchspace import Configuration, SearchSpace, is_active, sample

INACTIVE = -1.0  # reserved encoding for conditional parameters that are off

OUTCOME_STATUSES = ("completed", "early_stopped", "failed")


@dataclass(frozen=True)
class TrialOutcome:
    """What the scheduler reports back about one evaluated configuration."""

    status: str
    fold_scores: tuple[float, ...] = ()
    k: int = 0

    def __post_init__(self):
        if self.status not in OUTCOME_STATUSES:
            raise ValueError(f"unknown outcome status {self.status!r}")
        if self.status == "completed" and len(self.fold_scores) != self.k:
            raise ValueError("completed outcome must carry all fold scores")
        if self.status == "early_stopped" and not 1 <= len(self.fold_scores) < self.k:
            raise ValueError("early_stopped outcome must carry a strict prefix of folds")

    @property
    def mean(self) -> float:
        return sum(self.fold_scores) / len(self.fold_scores)


@dataclass(frozen=True)
class FeedbackPolicy:
    """How early-stopped trials enter the optimizer's observation list."""

    mode: str  # "report_failed" | "report_mean"

    def __post_init__(self):
        if self.mode not in ("report_failed", "report_mean"):
            raise ValueError(f"unknown feedback mode {self.mode!r}")


def observation_value(
    outcome: TrialOutcome, feedback: FeedbackPolicy, worst_score: float = 0.0
) -> float:
    """Score reported to the optimizer for one terminated trial."""
    if outcome.status == "completed":
        return outcome.mean
    if outcome.status == "failed":
        return worst_score
    if feedback.mode == "report_mean":
        return outcome.mean
    return worst_score


# ---------------------------------------------------------------------------
# Configuration <-> vector encoding for the surrogate
# ---------------------------------------------------------------------------

def encode(space: SearchSpace, config: Configuration) -> np.ndarray:
    """Encode the searched parameters into [0, 1]; inactive ones become -1."""
    out = []
    for spec in space.searched_params:
        if not is_active(spec, config.assignments):
            out.append(INACTIVE)
            continue
        value = config.assignments[spec.name]
        if spec.kind in ("float", "integer"):
            lo, hi = spec.low, spec.high
            if spec.log:
                u = (math.log(value) - math.log(lo)) / (math.log(hi) - math.log(lo))
            else:
                u = (value - lo) / (hi - lo)
            out.append(float(u))
        else:
            idx = next(i for i, v in enumerate(spec.values) if _same(v, value))
            out.append(idx / (len(spec.values) - 1) if len(spec.values) > 1 else 0.0)
    return np.asarray(out, dtype=np.float64)


def decode(space: SearchSpace, vector: np.ndarray) -> Configuration:
    """Nearest legal configuration for a vector (activity re-derived in order)."""
    assignments: dict[str, Any] = {}
    searched = space.searched_params
    pos = {spec.name: i for i, spec in enumerate(searched)}
    for spec in space.params:
        if not is_active(spec, assignments):
            continue
        if spec.kind == "constant":
            assignments[spec.name] = spec.value
            continue
        u = float(np.clip(vector[pos[spec.name]], 0.0, 1.0))
        if spec.kind in ("float", "integer"):
            lo, hi = spec.low, spec.high
            if spec.log:
                value = math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo)))
            else:
                value = lo + u * (hi - lo)
            assignments[spec.name] = int(min(max(round(value), lo), hi)) \
                if spec.kind == "integer" else float(min(max(value, lo), hi))
        else:
            idx = int(round(u * (len(spec.values) - 1)))
            assignments[spec.name] = spec.values[idx]
    return Configuration(space=space.name, assignments=assignments)


def _same(a: Any, b: Any) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    return a == b


# ---------------------------------------------------------------------------
# Proposers
# ---------------------------------------------------------------------------

_erf = np.vectorize(math.erf)


def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    """EI for maximization; zero wherever no improvement is predicted."""
    diff = mean - best
    ei = np.maximum(diff, 0.0)
    active = std > 0
    z = np.zeros_like(mean)
    z[active] = diff[active] / std[active]
    cdf = 0.5 * (1.0 + _erf(z / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei[active] = diff[active] * cdf[active] + std[active] * pdf[active]
    return ei


class RandomProposer:
    """Streams seeded uniform samples; observations are ignored."""

    kind = "random"

    def __init__(self, space: SearchSpace, seed: int):
        self.space = space
        self.rng = np.random.default_rng(seed)

    def propose(self) -> Configuration:
        return sample(self.space, self.rng)

    def observe(self, config: Configuration, outcome: TrialOutcome,
                feedback: FeedbackPolicy) -> None:
        pass


class BayesianProposer:
    """Initial random design, then EI over random candidates under a forest."""

    kind = "bayesian"

    def __init__(
        self,
        space: SearchSpace,
        seed: int,
        initial_design: int = 10,
        candidates: int = 500,
        surrogate_trees: int = 50,
        worst_score: float = 0.0,
    ):
        self.space = space
        self.rng = np.random.default_rng(seed)
        self.initial_design = initial_design
        self.candidates = candidates
        self.surrogate_trees = surrogate_trees
        self.worst_score = worst_score
        self._observed: dict[str, float] = {}
        self._vectors: list[np.ndarray] = []
        self._values: list[float] = []

    def propose(self) -> Configuration:
        if len(self._values) < self.initial_design:
            return self._fresh_random()
        X = np.vstack(self._vectors)
        y = np.asarray(self._values)
        surrogate = ForestRegressor(
            ForestParams(
                n_estimators=self.surrogate_trees,
                criterion="squared_error",
                min_samples_leaf=1,
                bootstrap=True,
            ),
            seed=int(self.rng.integers(0, 2**63 - 1)),
        ).fit(X, y)

        pool = [sample(self.space, self.rng) for _ in range(self.candidates)]
        pool = [c for c in pool if c.id not in self._observed] or [self._fresh_random()]
        vectors = np.vstack([encode(self.space, c) for c in pool])
        mean, std = surrogate.predict_dist(vectors)
        ei = expected_improvement(mean, std, float(y.max()))
        return pool[int(np.argmax(ei))]

    def _fresh_random(self) -> Configuration:
        for _ in range(100):
            config = sample(self.space, self.rng)
            if config.id not in self._observed:
                return config
        return config  # space is effectively exhausted; let observe() flag it

    def observe(self, config: Configuration, outcome: TrialOutcome,
                feedback: FeedbackPolicy) -> None:
        if config.id in self._observed:
            raise ValueError(f"duplicate observation for configuration {config.id}")
        value = observation_value(outcome, feedback, self.worst_score)
        self._observed[config.id] = value
        self._vectors.append(encode(self.space, config))
        self._values.append(value)


def make_proposer(
    space: SearchSpace,
    seed: int,
    kind: str = "random",
    **bo_options,
) -> RandomProposer | BayesianProposer:
    if kind == "random":
        return RandomProposer(space, seed)
    if kind == "bo":
        return BayesianProposer(space, seed, **bo_options)
    raise ValueError(f"unknown optimizer kind {kind!r}; expected 'random' or 'bo'")
