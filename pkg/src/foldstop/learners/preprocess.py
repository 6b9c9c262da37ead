"""Feature preprocessing fitted on training rows only.

Numeric columns are imputed (mean or median).  Categorical columns go through
an ordinal encoder: frequent categories get dense codes, categories below the
optional min-frequency threshold collapse into one infrequent code, unknown
categories become -1 and missing cells -2.  When one-hot encoding is chosen
the ordinal codes are expanded to indicator columns, capped at max_categories
(the least frequent codes share an overflow column, which also absorbs
unknowns).  The assembled matrix can be standardized for scale-sensitive
models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import MISSING_CODE, FeatureMatrix

UNKNOWN_ORDINAL = -1
MISSING_ORDINAL = -2


@dataclass(frozen=True)
class PreprocessPlan:
    imputer_strategy: str                 # "mean" | "median"
    ordinal_min_frequency: float | None   # None: no infrequent collapsing
    encoding: str                         # "onehot" | "passthrough"
    onehot_max_categories: int | None
    standardize: bool


@dataclass(frozen=True)
class _ColumnEncoder:
    to_ordinal: dict            # original dictionary code -> ordinal code
    onehot_codes: tuple[int, ...] | None   # ordinal codes with their own column
    onehot_overflow: tuple[int, ...] | None  # ordinal codes folded into the overflow column

    def ordinal(self, codes: np.ndarray) -> np.ndarray:
        out = np.full(codes.shape[0], UNKNOWN_ORDINAL, dtype=np.float64)
        out[codes == MISSING_CODE] = MISSING_ORDINAL
        for orig, ordv in self.to_ordinal.items():
            out[codes == orig] = ordv
        return out

    def expand(self, codes: np.ndarray) -> np.ndarray:
        ords = self.ordinal(codes)
        cols = [ords == c for c in self.onehot_codes]
        if self.onehot_overflow:
            # unknowns land here too ("infrequent if exists"), else they stay all-zero
            cols.append(np.isin(ords, self.onehot_overflow) | (ords == UNKNOWN_ORDINAL))
        return np.column_stack(cols).astype(np.float64)


@dataclass(frozen=True)
class FittedPreprocessor:
    plan: PreprocessPlan
    schema: tuple[tuple[str, ...], tuple[str, ...]]
    fill_values: np.ndarray
    encoders: tuple[_ColumnEncoder, ...]
    center: np.ndarray | None
    scale: np.ndarray | None

    def transform(self, fm: FeatureMatrix) -> np.ndarray:
        if fm.schema() != self.schema:
            raise ValueError("feature schema does not match fit-time schema")
        numeric = fm.numeric.copy()
        for j in range(numeric.shape[1]):
            mask = np.isnan(numeric[:, j])
            if mask.any():
                numeric[mask, j] = self.fill_values[j]
        blocks = [numeric]
        for j, enc in enumerate(self.encoders):
            codes = fm.categorical[:, j]
            if self.plan.encoding == "onehot":
                blocks.append(enc.expand(codes))
            else:
                blocks.append(enc.ordinal(codes)[:, None])
        X = np.hstack(blocks) if blocks else np.zeros((fm.n_rows, 0))
        if self.center is not None:
            X = (X - self.center) / self.scale
        return X


def _fit_column_encoder(
    codes: np.ndarray, plan: PreprocessPlan, n_rows: int
) -> _ColumnEncoder:
    seen = codes[codes != MISSING_CODE]
    uniq, counts = np.unique(seen, return_counts=True)
    if plan.ordinal_min_frequency is not None:
        frequent = uniq[counts / n_rows >= plan.ordinal_min_frequency]
        infrequent = uniq[counts / n_rows < plan.ordinal_min_frequency]
    else:
        frequent, infrequent = uniq, uniq[:0]
    to_ordinal = {int(c): i for i, c in enumerate(frequent)}
    bucket = len(frequent)
    for c in infrequent:
        to_ordinal[int(c)] = bucket

    onehot_codes = onehot_overflow = None
    if plan.encoding == "onehot":
        # distinct ordinal codes observable in training data, by train frequency
        ord_counts: dict[int, int] = {}
        for c, n in zip(uniq, counts):
            ord_counts[to_ordinal[int(c)]] = ord_counts.get(to_ordinal[int(c)], 0) + int(n)
        n_missing = int((codes == MISSING_CODE).sum())
        if n_missing:
            ord_counts[MISSING_ORDINAL] = n_missing
        cap = plan.onehot_max_categories or len(ord_counts)
        # stable order: most frequent first, ties by code
        ranked = sorted(ord_counts, key=lambda c: (-ord_counts[c], c))
        if len(ranked) > cap:
            onehot_codes = tuple(sorted(ranked[: cap - 1]))
            onehot_overflow = tuple(sorted(ranked[cap - 1:]))
        else:
            onehot_codes = tuple(sorted(ranked))
            onehot_overflow = ()
    return _ColumnEncoder(
        to_ordinal=to_ordinal, onehot_codes=onehot_codes, onehot_overflow=onehot_overflow
    )


def fit_preprocessor(plan: PreprocessPlan, fm: FeatureMatrix) -> FittedPreprocessor:
    n = fm.n_rows
    fill = np.zeros(fm.numeric.shape[1], dtype=np.float64)
    for j in range(fm.numeric.shape[1]):
        col = fm.numeric[:, j]
        known = col[~np.isnan(col)]
        if known.size:
            fill[j] = np.mean(known) if plan.imputer_strategy == "mean" else np.median(known)

    encoders = tuple(
        _fit_column_encoder(fm.categorical[:, j], plan, n)
        for j in range(fm.categorical.shape[1])
    )

    fitted = FittedPreprocessor(
        plan=plan, schema=fm.schema(), fill_values=fill,
        encoders=encoders, center=None, scale=None,
    )
    if plan.standardize:
        X = fitted.transform(fm)
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        fitted = FittedPreprocessor(
            plan=plan, schema=fm.schema(), fill_values=fill,
            encoders=encoders, center=center, scale=scale,
        )
    return fitted
