"""ROC AUC scoring, soft-voting, and score-trace normalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class Score:
    """A validation score; ``value`` is None when scoring was impossible."""

    value: float | None
    higher_is_better: bool = True

    @property
    def failed(self) -> bool:
        return self.value is None


def _binary_auc(positive: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC: P(random positive outranks random negative), ties 0.5."""
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # average ranks for tied score groups (1-based)
    ranks = np.empty(positive.size, dtype=np.float64)
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [positive.size]])
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + 1 + e)
    rank_sum = ranks[positive].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc(y_true: np.ndarray, prob_matrix: np.ndarray) -> Score:
    """ROC AUC; macro one-vs-rest average for more than two classes.

    ``prob_matrix`` has one column per class.  A single-class ``y_true``
    cannot be scored and yields a failed Score.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    prob_matrix = np.asarray(prob_matrix, dtype=np.float64)
    if prob_matrix.ndim != 2 or prob_matrix.shape[0] != y_true.shape[0]:
        raise ValueError("probability matrix rows must align with y_true")
    if y_true.size and (y_true.min() < 0 or y_true.max() >= prob_matrix.shape[1]):
        raise ValueError("labels outside [0, n_classes)")
    present = np.unique(y_true)
    if present.size < 2:
        return Score(value=None)

    if prob_matrix.shape[1] == 2:
        return Score(value=_binary_auc(y_true == 1, prob_matrix[:, 1]))

    per_class = []
    for cls in range(prob_matrix.shape[1]):
        positive = y_true == cls
        if positive.any() and not positive.all():
            per_class.append(_binary_auc(positive, prob_matrix[:, cls]))
    if not per_class:
        return Score(value=None)
    return Score(value=float(np.mean(per_class)))


def soft_vote(prob_matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise mean of probability matrices (the bagged-ensemble vote)."""
    if not prob_matrices:
        raise ValueError("soft_vote needs at least one probability matrix")
    first = np.asarray(prob_matrices[0], dtype=np.float64)
    for m in prob_matrices[1:]:
        if np.shape(m) != first.shape:
            raise ValueError(f"shape mismatch: {np.shape(m)} vs {first.shape}")
    return np.mean([np.asarray(m, dtype=np.float64) for m in prob_matrices], axis=0)


def minmax_normalize_traces(
    traces: Mapping[str, np.ndarray], grid: np.ndarray
) -> dict[str, np.ndarray]:
    """Map one dataset's per-method mean traces to regrets in [0, 1].

    The min and max are taken over every method's values on the shared grid;
    a value v becomes (max - v) / (max - min), so the best score seen anywhere
    has regret 0.  A degenerate dataset (max == min) maps to all-zero regret.
    """
    if not traces:
        raise ValueError("no traces to normalize")
    grid = np.asarray(grid, dtype=np.float64)
    arrays = {}
    for method, values in traces.items():
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError(f"trace for {method!r} does not match the grid length")
        arrays[method] = values
    lo = min(float(v.min()) for v in arrays.values())
    hi = max(float(v.max()) for v in arrays.values())
    if hi == lo:
        return {m: np.zeros_like(v) for m, v in arrays.items()}
    return {m: (hi - v) / (hi - lo) for m, v in arrays.items()}
