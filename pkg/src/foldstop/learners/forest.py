"""Decision trees and forests, for classification and regression.

Classification trees carry a class distribution per leaf (so forests can
soft-vote probabilities); regression trees carry leaf means and the forest
reports the spread across trees, which the surrogate optimizer uses as an
uncertainty estimate.  Split search is exhaustive over sorted feature values
with the usual knobs: per-node feature subsampling, minimum leaf/split sizes,
and a minimum weighted impurity decrease.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int
    criterion: str = "gini"          # "gini" | "entropy" | "squared_error"
    max_features: float = 1.0        # fraction of features searched per split
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    min_impurity_decrease: float = 0.0
    bootstrap: bool = True
    class_weight: str | None = None  # None | "balanced" | "balanced_subsample"


class Tree:
    """Array-of-nodes binary tree; ``value`` rows hold leaf statistics."""

    def __init__(self, feature, threshold, left, right, value, n_node_samples):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.n_node_samples = n_node_samples

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            rows = np.flatnonzero(feat >= 0)
            if rows.size == 0:
                return node
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def leaf_sizes(self) -> np.ndarray:
        return self.n_node_samples[self.feature < 0]


def _impurity_from_counts(counts: np.ndarray, weight: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity per row of weighted class counts; ``weight`` is the row sum."""
    p = counts / weight[..., None]
    if criterion == "gini":
        return 1.0 - (p * p).sum(axis=-1)
    logp = np.zeros_like(p)
    np.log2(p, out=logp, where=p > 0)
    return -(p * logp).sum(axis=-1)


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray,
    n_classes: int,
    params: ForestParams,
    rng: np.random.Generator,
) -> Tree:
    n_total, d = X.shape
    total_weight = float(sample_weight.sum())
    regression = params.criterion == "squared_error"
    m = max(1, int(params.max_features * d))

    feature, threshold, left, right, values, sizes = [], [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        values.append(None)
        sizes.append(0)
        return len(feature) - 1

    def node_stats(rows: np.ndarray):
        w = sample_weight[rows]
        node_w = float(w.sum())
        if regression:
            mean = float(np.average(y[rows], weights=w))
            imp = float(np.average((y[rows] - mean) ** 2, weights=w))
            return node_w, imp, np.array([mean])
        counts = np.bincount(y[rows], weights=w, minlength=n_classes)
        imp = float(_impurity_from_counts(counts[None, :], np.array([node_w]), params.criterion)[0])
        return node_w, imp, counts / node_w

    def best_split(rows: np.ndarray, node_w: float, node_imp: float):
        """Best (gain, feature, threshold, left_rows, right_rows) or None.

        Features are scanned in a seeded random order; the scan keeps going
        past the max_features quota until at least one valid split was seen,
        so constant features never silence a splittable node.
        """
        best = None
        seen_nonconstant = 0
        n = rows.size
        ml = params.min_samples_leaf
        y_rows = y[rows]
        w_rows = sample_weight[rows]
        for f in rng.permutation(d):
            if seen_nonconstant >= m and best is not None:
                break
            col = X[rows, f]
            order = np.argsort(col, kind="stable")
            v = col[order]
            if v[0] == v[-1]:
                continue
            seen_nonconstant += 1
            cut = np.flatnonzero(v[1:] != v[:-1]) + 1  # left side gets v[:cut]
            cut = cut[(cut >= ml) & (cut <= n - ml)]
            if cut.size == 0:
                continue
            w_sorted = w_rows[order]
            cum_w = np.cumsum(w_sorted)
            wl = cum_w[cut - 1]
            wr = node_w - wl
            if regression:
                wy = np.cumsum(w_sorted * y_rows[order])
                wy2 = np.cumsum(w_sorted * y_rows[order] ** 2)
                il = wy2[cut - 1] / wl - (wy[cut - 1] / wl) ** 2
                total_wy, total_wy2 = wy[-1], wy2[-1]
                ir = (total_wy2 - wy2[cut - 1]) / wr - ((total_wy - wy[cut - 1]) / wr) ** 2
            else:
                onehot = np.zeros((n, n_classes))
                onehot[np.arange(n), y_rows[order]] = w_sorted
                cum_c = np.cumsum(onehot, axis=0)
                cl = cum_c[cut - 1]
                cr = cum_c[-1] - cl
                il = _impurity_from_counts(cl, wl, params.criterion)
                ir = _impurity_from_counts(cr, wr, params.criterion)
            gain = (node_w / total_weight) * (node_imp - (wl * il + wr * ir) / node_w)
            k = int(np.argmax(gain))
            if best is None or gain[k] > best[0]:
                pos = cut[k]
                thr = 0.5 * (v[pos - 1] + v[pos])
                best = (float(gain[k]), int(f), thr, rows[order[:pos]], rows[order[pos:]])
        return best

    stack = [(new_node(), np.arange(n_total, dtype=np.intp))]
    while stack:
        node, rows = stack.pop()
        node_w, node_imp, value = node_stats(rows)
        values[node] = value
        sizes[node] = rows.size
        if rows.size < params.min_samples_split or node_imp <= 0.0:
            continue
        split = best_split(rows, node_w, node_imp)
        # tolerance keeps zero-gain splits viable when the threshold is zero
        if split is None or split[0] < params.min_impurity_decrease - 1e-12:
            continue
        _, f, thr, rows_l, rows_r = split
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node()
        right[node] = new_node()
        stack.append((right[node], rows_r))
        stack.append((left[node], rows_l))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.vstack(values),
        n_node_samples=np.asarray(sizes, dtype=np.int64),
    )


def _balanced_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    weights = np.zeros(n_classes)
    present = counts > 0
    weights[present] = len(y) / (present.sum() * counts[present])
    return weights[y]


class ForestClassifier:
    def __init__(self, params: ForestParams, n_classes: int, seed: int):
        self.params = params
        self.n_classes = n_classes
        self.seed = seed
        self.trees: list[Tree] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ForestClassifier":
        p = self.params
        rng = np.random.default_rng(self.seed)
        tree_seeds = rng.integers(0, 2**63 - 1, size=p.n_estimators)
        base_weight = (
            _balanced_weights(y, self.n_classes)
            if p.class_weight == "balanced"
            else np.ones(len(y))
        )
        self.trees = []
        for s in tree_seeds:
            tree_rng = np.random.default_rng(int(s))
            if p.bootstrap:
                rows = tree_rng.integers(0, len(y), size=len(y))
            else:
                rows = np.arange(len(y))
            Xb, yb = X[rows], y[rows]
            if p.class_weight == "balanced_subsample":
                wb = _balanced_weights(yb, self.n_classes)
            else:
                wb = base_weight[rows]
            self.trees.append(_grow_tree(Xb, yb, wb, self.n_classes, p, tree_rng))
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            acc += tree.value[tree.apply(X)]
        return acc / len(self.trees)


class ForestRegressor:
    def __init__(self, params: ForestParams, seed: int):
        self.params = params
        self.seed = seed
        self.trees: list[Tree] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ForestRegressor":
        p = self.params
        rng = np.random.default_rng(self.seed)
        tree_seeds = rng.integers(0, 2**63 - 1, size=p.n_estimators)
        weight = np.ones(len(y))
        self.trees = []
        for s in tree_seeds:
            tree_rng = np.random.default_rng(int(s))
            rows = tree_rng.integers(0, len(y), size=len(y)) if p.bootstrap \
                else np.arange(len(y))
            self.trees.append(
                _grow_tree(X[rows], y[rows], weight[rows], 0, p, tree_rng)
            )
        return self

    def predict_dist(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-row mean and standard deviation across the trees' predictions."""
        preds = np.stack([tree.value[tree.apply(X), 0] for tree in self.trees])
        return preds.mean(axis=0), preds.std(axis=0)
