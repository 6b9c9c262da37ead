"""Deterministic synthetic classification datasets in CSV form.

Three small tabular datasets with different character (a nonlinear binary
problem, an overlapping 3-class problem with a categorical column and missing
cells, and an imbalanced interaction problem).  They are sized so that a
5-fold random-forest evaluation takes a few seconds, which makes budgeted
desk-scale studies meaningful.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

DEMO_NAMES = ("rings", "clusters", "bands")


def _write_csv(path: Path, header: list[str], columns: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow(row)


def make_rings(path: Path, n: int = 700, seed: int = 7) -> Path:
    """Two concentric noisy rings plus four distractor features."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    radius = np.where(y == 0, 1.0, 2.2) + rng.normal(scale=0.35, size=n)
    angle = rng.uniform(0, 2 * np.pi, size=n)
    x1, x2 = radius * np.cos(angle), radius * np.sin(angle)
    noise = rng.normal(size=(n, 4))
    cols = [list(np.round(x1, 6)), list(np.round(x2, 6))] + [
        list(np.round(noise[:, j], 6)) for j in range(4)
    ]
    cols.append(["inner" if v == 0 else "outer" for v in y])
    _write_csv(path, ["x1", "x2", "n1", "n2", "n3", "n4", "label"], cols)
    return path


def make_clusters(path: Path, n: int = 750, seed: int = 11) -> Path:
    """Three overlapping Gaussian clusters, a categorical region column, and
    a sprinkle of missing numeric cells."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, size=n)
    centers = np.array([[0.0, 0.0, 0.0], [2.0, 1.0, -1.0], [-1.5, 2.5, 1.0]])
    X = centers[y] + rng.normal(scale=1.1, size=(n, 3))
    extra = rng.normal(size=(n, 3)) + 0.4 * X[:, :1]
    regions = np.array(["north", "south", "east", "west"])
    region_idx = (y + rng.integers(0, 3, size=n)) % 4  # weakly informative
    numeric = np.hstack([X, extra])
    cells = [[f"{v:.6f}" for v in numeric[:, j]] for j in range(numeric.shape[1])]
    missing = rng.random(size=(n, numeric.shape[1])) < 0.03
    for j in range(numeric.shape[1]):
        for i in np.flatnonzero(missing[:, j]):
            cells[j][i] = ""
    cols = cells + [list(regions[region_idx]), [f"c{v}" for v in y]]
    _write_csv(path, ["a1", "a2", "a3", "b1", "b2", "b3", "region", "label"], cols)
    return path


def make_bands(path: Path, n: int = 800, seed: int = 23) -> Path:
    """Imbalanced binary target driven by a feature interaction."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 8))
    logit = 1.6 * X[:, 0] * X[:, 1] + 0.8 * np.sin(2.0 * X[:, 2]) - 0.9
    p = 1.0 / (1.0 + np.exp(-logit))
    y = (rng.random(n) < p).astype(int)
    cols = [list(np.round(X[:, j], 6)) for j in range(8)]
    cols.append(["pos" if v else "neg" for v in y])
    _write_csv(path, [f"f{j}" for j in range(8)] + ["label"], cols)
    return path


def make_demo_datasets(out_dir: str | Path) -> dict[str, dict]:
    """Write all demo CSVs; returns per-dataset load_csv keyword arguments."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    make_rings(out / "rings.csv")
    make_clusters(out / "clusters.csv")
    make_bands(out / "bands.csv")
    return {
        "rings": {"path": str(out / "rings.csv"), "target_column": "label",
                  "categorical_columns": ()},
        "clusters": {"path": str(out / "clusters.csv"), "target_column": "label",
                     "categorical_columns": ("region",)},
        "bands": {"path": str(out / "bands.csv"), "target_column": "label",
                  "categorical_columns": ()},
    }
