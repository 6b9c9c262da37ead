"""Post-hoc analysis of trial logs: speedups, counts, traces, rank curves.

Run directories (written by the engine's live or replay modes) are the input
everywhere.  The incumbent trace of a run is the cumulative maximum of the
full-CV validation means of its completed trials over wall-clock time; the
speedup of a method against the no-stopping baseline compares how quickly each
reaches the baseline's final best score.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import SUMMARY_NAME, TRIAL_LOG_NAME, EngineError, read_trial_log
from .metrics import minmax_normalize_traces


@dataclass(frozen=True)
class IncumbentTrace:
    times: np.ndarray   # trial end times, one point per completed trial
    values: np.ndarray  # running best full-CV mean validation score
    method: str = ""
    dataset: str = ""
    outer_fold: int = 0

    @property
    def degenerate(self) -> bool:
        return self.times.size == 0

    @property
    def final_best(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class SpeedupResult:
    baseline_best: float
    t_base: float
    t_match: float | None
    failed: bool

    @property
    def speedup_pct(self) -> float | None:
        if self.failed:
            return None
        return 100.0 * self.t_base / self.t_match


def incumbent_trace(trial_log: str | Path, method: str = "", dataset: str = "",
                    outer_fold: int = 0) -> IncumbentTrace:
    """Cumulative-max validation trace; early-stopped trials never advance it."""
    records = read_trial_log(trial_log)
    times, values = [], []
    best = -np.inf
    for rec in sorted(records, key=lambda r: r["folds"][-1]["t_end"] if r["folds"] else 0.0):
        if rec["status"] != "completed":
            continue
        mean = float(np.mean([f["score"] for f in rec["folds"]]))
        best = max(best, mean)
        times.append(rec["folds"][-1]["t_end"])
        values.append(best)
    return IncumbentTrace(
        times=np.asarray(times, dtype=np.float64),
        values=np.asarray(values, dtype=np.float64),
        method=method, dataset=dataset, outer_fold=outer_fold,
    )


def speedup(baseline: IncumbentTrace, method: IncumbentTrace) -> SpeedupResult:
    """How much earlier ``method`` reaches the baseline's own final best."""
    if baseline.degenerate or method.degenerate:
        raise ValueError("speedup needs non-empty traces on both sides")
    best = baseline.final_best
    t_base = float(baseline.times[np.argmax(baseline.values >= best)])
    reached = method.values >= best
    if not reached.any():
        return SpeedupResult(baseline_best=best, t_base=t_base, t_match=None, failed=True)
    t_match = float(method.times[np.argmax(reached)])
    return SpeedupResult(baseline_best=best, t_base=t_base, t_match=t_match, failed=False)


def evaluated_counts(trial_log: str | Path) -> dict[str, int]:
    """Status counts; ``started`` means at least one fold was evaluated."""
    records = read_trial_log(trial_log)
    counts = {
        "total": len(records),
        "started": 0,
        "completed": 0,
        "early_stopped": 0,
        "failed": 0,
        "budget_cut": 0,
    }
    for rec in records:
        counts[rec["status"]] += 1
        if rec["folds"]:
            counts["started"] += 1
    return counts


# ---------------------------------------------------------------------------
# Spearman rank-correlation curves
# ---------------------------------------------------------------------------

def average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; tied values share the average of their ranks."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [values.size]])
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + 1 + e)
    return ranks


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman correlation with average ranks for ties."""
    ra, rb = average_ranks(a), average_ranks(b)
    if np.array_equal(ra, rb):
        return 1.0
    if ra.std() == 0.0 or rb.std() == 0.0:
        return 0.0
    return float(np.corrcoef(ra, rb)[0, 1])


def rank_correlation_curve(fold_score_table: np.ndarray) -> np.ndarray:
    """Correlation between partial-mean rankings and the full-CV ranking.

    Entry n-1 compares rankings by the mean over the first n folds with
    rankings by the mean over all k folds; the last entry is exactly 1.
    """
    table = np.asarray(fold_score_table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 3:
        raise ValueError("need a 2-D table with at least 3 fully evaluated configurations")
    k = table.shape[1]
    full = table.mean(axis=1)
    return np.asarray(
        [spearman(table[:, : n + 1].mean(axis=1), full) for n in range(k)]
    )


def fold_score_table(trial_log: str | Path) -> np.ndarray:
    """Completed trials' per-fold scores as a configs-by-folds table."""
    records = read_trial_log(trial_log)
    rows = [
        [f["score"] for f in rec["folds"]]
        for rec in records
        if rec["status"] == "completed"
    ]
    if not rows:
        raise EngineError(f"{trial_log}: no completed trials")
    return np.asarray(rows, dtype=np.float64)


# ---------------------------------------------------------------------------
# Aggregation across run directories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunInfo:
    path: Path
    method: str
    dataset: str
    outer_fold: int
    budget: float
    counts: dict
    trace: IncumbentTrace
    test_history: tuple[tuple[float, float], ...]  # (time, test score) points


def load_run(path: str | Path) -> RunInfo:
    path = Path(path)
    summary_path = path / SUMMARY_NAME
    log_path = path / TRIAL_LOG_NAME
    if not summary_path.exists() or not log_path.exists():
        raise EngineError(f"{path}: not a run directory (missing summary or trial log)")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    method = summary.get("method", summary.get("policy", "unknown"))
    dataset = summary.get("dataset", "unknown")
    fold = int(summary.get("outer_fold", 0))
    trace = incumbent_trace(log_path, method=method, dataset=dataset, outer_fold=fold)
    history = tuple(
        (float(h["t"]), float(h["test_score"]))
        for h in summary.get("incumbent_history", [])
        if h.get("test_score") is not None
    )
    return RunInfo(
        path=path, method=method, dataset=dataset, outer_fold=fold,
        budget=float(summary.get("budget_seconds", 0.0)),
        counts=summary.get("counts", {}), trace=trace, test_history=history,
    )


def _step_interpolate(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Last-value-carried-forward onto the grid (traces are step functions)."""
    idx = np.searchsorted(times, grid, side="right") - 1
    idx = np.clip(idx, 0, len(values) - 1)
    return values[idx]


def _speedup_rows(runs: list[RunInfo], baseline_method: str = "none"):
    """Per (method, dataset, fold) speedup rows plus per-method aggregates.

    A dataset counts as failed for a method when more than half of its outer
    folds failed to match the baseline's best; a matched dataset's speedup is
    the mean over its matched folds.
    """
    baselines = {
        (r.dataset, r.outer_fold): r.trace
        for r in runs if r.method == baseline_method
    }
    rows = []
    per_method_dataset: dict[tuple[str, str], list[SpeedupResult]] = defaultdict(list)
    for r in runs:
        if r.method == baseline_method:
            continue
        base = baselines.get((r.dataset, r.outer_fold))
        if base is None or base.degenerate or r.trace.degenerate:
            continue
        result = speedup(base, r.trace)
        per_method_dataset[(r.method, r.dataset)].append(result)
        rows.append({
            "method": r.method, "dataset": r.dataset, "outer_fold": r.outer_fold,
            "baseline_best": result.baseline_best, "t_base": result.t_base,
            "t_match": result.t_match if not result.failed else "",
            "speedup_pct": result.speedup_pct if not result.failed else "",
            "failed": int(result.failed),
        })

    aggregates = []
    methods = sorted({m for m, _ in per_method_dataset})
    for method in methods:
        dataset_speedups = []
        failed_datasets = 0
        n_datasets = 0
        for (m, dataset), results in sorted(per_method_dataset.items()):
            if m != method:
                continue
            n_datasets += 1
            matched = [res.speedup_pct for res in results if not res.failed]
            if len(matched) * 2 <= len(results):
                failed_datasets += 1
            else:
                dataset_speedups.append(float(np.mean(matched)))
        aggregates.append({
            "method": method,
            "mean_speedup_pct": float(np.mean(dataset_speedups)) if dataset_speedups else "",
            "std_speedup_pct": float(np.std(dataset_speedups)) if dataset_speedups else "",
            "datasets_matched": len(dataset_speedups),
            "datasets_failed": failed_datasets,
            "datasets_total": n_datasets,
        })
    return rows, aggregates


def _trace_tables(runs: list[RunInfo], use_test: bool):
    """Normalized regret per method: mean and standard error across datasets."""
    by_dataset: dict[str, list[RunInfo]] = defaultdict(list)
    for r in runs:
        by_dataset[r.dataset].append(r)

    per_dataset_regret: dict[str, dict[str, np.ndarray]] = {}
    grids: dict[str, np.ndarray] = {}
    for dataset, dataset_runs in sorted(by_dataset.items()):
        series: dict[str, list[tuple[np.ndarray, np.ndarray]]] = defaultdict(list)
        for r in dataset_runs:
            if use_test:
                if not r.test_history:
                    continue
                # test scores follow the incumbent and may drop; no cumulative max
                t = np.asarray([p[0] for p in r.test_history])
                v = np.asarray([p[1] for p in r.test_history])
            else:
                if r.trace.degenerate:
                    continue
                t, v = r.trace.times, r.trace.values
            series[r.method].append((t, np.asarray(v, dtype=np.float64)))
        if not series:
            continue
        # the grid starts at the first time every method (and fold) has a point
        t0 = max(t[0] for traces in series.values() for t, _ in traces)
        t_end = max(max(r.budget for r in dataset_runs),
                    max(t[-1] for traces in series.values() for t, _ in traces))
        points = sorted({t0, t_end}.union(
            float(x) for traces in series.values() for t, _ in traces for x in t
            if t0 <= x <= t_end
        ))
        grid = np.asarray(points)
        mean_traces = {
            method: np.mean([_step_interpolate(t, v, grid) for t, v in traces], axis=0)
            for method, traces in series.items()
        }
        per_dataset_regret[dataset] = minmax_normalize_traces(mean_traces, grid)
        grids[dataset] = grid

    if not per_dataset_regret:
        return None, None, None

    methods = sorted({m for regs in per_dataset_regret.values() for m in regs})
    global_start = max(float(g[0]) for g in grids.values())
    global_points = sorted({
        float(x) for g in grids.values() for x in g if x >= global_start
    })
    grid = np.asarray(global_points)
    mean: dict[str, np.ndarray] = {}
    sem: dict[str, np.ndarray] = {}
    for method in methods:
        stack = []
        for dataset, regrets in per_dataset_regret.items():
            if method in regrets:
                stack.append(_step_interpolate(grids[dataset], regrets[method], grid))
        stack = np.vstack(stack)
        mean[method] = stack.mean(axis=0)
        sem[method] = stack.std(axis=0) / np.sqrt(stack.shape[0])
    return grid, mean, sem


def aggregate_report(
    run_dirs: list[str | Path],
    out_dir: str | Path,
    baseline_method: str = "none",
    sections: tuple[str, ...] = ("speedup", "counts", "traces"),
) -> dict[str, Path]:
    """Emit the speedup/count tables and normalized regret traces (CSV + SVG)."""
    runs = [load_run(p) for p in run_dirs]
    if not runs:
        raise ValueError("no run directories given")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    if "speedup" in sections:
        rows, aggregates = _speedup_rows(runs, baseline_method=baseline_method)
        written["speedup"] = _write_csv(
            out / "speedup.csv",
            ["method", "dataset", "outer_fold", "baseline_best", "t_base",
             "t_match", "speedup_pct", "failed"],
            rows,
        )
        written["speedup_summary"] = _write_csv(
            out / "speedup_summary.csv",
            ["method", "mean_speedup_pct", "std_speedup_pct",
             "datasets_matched", "datasets_failed", "datasets_total"],
            aggregates,
            comment="speedup_pct = 100 * t_base / t_match; dataset failed when more "
                    "than half of its outer folds missed the baseline best",
        )

    if "counts" in sections:
        count_rows = []
        for r in sorted(runs, key=lambda r: (r.method, r.dataset, r.outer_fold)):
            counts = evaluated_counts(r.path / TRIAL_LOG_NAME)
            count_rows.append({"method": r.method, "dataset": r.dataset,
                               "outer_fold": r.outer_fold, **counts})
        per_method: dict[str, list[int]] = defaultdict(list)
        for row in count_rows:
            per_method[row["method"]].append(row["started"])
        count_aggregates = [
            {"method": m, "mean_started": float(np.mean(v)), "runs": len(v)}
            for m, v in sorted(per_method.items())
        ]
        written["counts"] = _write_csv(
            out / "counts.csv",
            ["method", "dataset", "outer_fold", "total", "started", "completed",
             "early_stopped", "failed", "budget_cut"],
            count_rows,
        )
        written["counts_summary"] = _write_csv(
            out / "counts_summary.csv", ["method", "mean_started", "runs"], count_aggregates
        )

    if "traces" in sections:
        # validation and test traces go to separate files and separate scales
        for label, use_test in (("val", False), ("test", True)):
            grid, mean, sem = _trace_tables(runs, use_test=use_test)
            if grid is None:
                continue
            trace_rows = []
            for i, t in enumerate(grid):
                row = {"time": float(t)}
                for method in mean:
                    row[f"{method}_mean_regret"] = float(mean[method][i])
                    row[f"{method}_sem"] = float(sem[method][i])
                trace_rows.append(row)
            header = ["time"] + [
                c for m in sorted(mean) for c in (f"{m}_mean_regret", f"{m}_sem")
            ]
            written[f"traces_{label}"] = _write_csv(
                out / f"traces_{label}.csv", header, trace_rows
            )
            svg = _svg_line_chart(
                title=f"Normalized regret over time ({label})",
                x_label="time [s]", y_label="mean regret",
                grid=grid,
                series={m: mean[m] for m in sorted(mean)},
                bands={m: (mean[m] - sem[m], mean[m] + sem[m]) for m in sorted(mean)},
            )
            svg_path = out / f"traces_{label}.svg"
            svg_path.write_text(svg, encoding="utf-8")
            written[f"traces_{label}_svg"] = svg_path

    return written


def rankcorr_report(run_dirs: list[str | Path], out_dir: str | Path) -> dict[str, Path]:
    """Rank-correlation curves for fully evaluated (no-stopping) run logs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    curves: dict[str, np.ndarray] = {}
    for p in run_dirs:
        info = load_run(p)
        table = fold_score_table(info.path / TRIAL_LOG_NAME)
        curve = rank_correlation_curve(table)
        label = f"{info.dataset}/fold{info.outer_fold}/{info.method}"
        curves[label] = curve
        for n, value in enumerate(curve, start=1):
            rows.append({"run": label, "folds": n, "spearman": float(value)})
    written = {
        "rankcorr": _write_csv(out / "rankcorr.csv", ["run", "folds", "spearman"], rows)
    }
    if curves:
        k = max(len(c) for c in curves.values())
        grid = np.arange(1, k + 1, dtype=np.float64)
        svg = _svg_line_chart(
            title="Rank correlation of partial vs full cross-validation",
            x_label="folds evaluated", y_label="Spearman correlation",
            grid=grid,
            series={label: np.pad(c, (0, k - len(c)), constant_values=np.nan)
                    for label, c in curves.items()},
        )
        (out / "rankcorr.svg").write_text(svg, encoding="utf-8")
        written["rankcorr_svg"] = out / "rankcorr.svg"
    return written


def _write_csv(path: Path, header: list[str], rows: list[dict], comment: str | None = None) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)
    return path


# ---------------------------------------------------------------------------
# Minimal standalone SVG line charts
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")


def _svg_line_chart(
    title: str,
    x_label: str,
    y_label: str,
    grid: np.ndarray,
    series: dict[str, np.ndarray],
    bands: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> str:
    width, height = 780, 440
    left, right, top, bottom = 70, 20, 40, 50
    plot_w, plot_h = width - left - right, height - top - bottom

    finite = [v[np.isfinite(v)] for v in series.values()]
    if bands:
        finite += [b[np.isfinite(b)] for pair in bands.values() for b in pair]
    y_min = min((float(v.min()) for v in finite if v.size), default=0.0)
    y_max = max((float(v.max()) for v in finite if v.size), default=1.0)
    if y_max == y_min:
        y_max = y_min + 1.0
    x_min, x_max = float(grid[0]), float(grid[-1])
    if x_max == x_min:
        x_max = x_min + 1.0

    def px(x: float) -> float:
        return left + (x - x_min) / (x_max - x_min) * plot_w

    def py(y: float) -> float:
        return top + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    if bands:
        for i, (label, (lo, hi)) in enumerate(sorted(bands.items())):
            color = _PALETTE[i % len(_PALETTE)]
            pts = [f"{px(x):.1f},{py(y):.1f}" for x, y in zip(grid, hi) if np.isfinite(y)]
            pts += [f"{px(x):.1f},{py(y):.1f}" for x, y in zip(grid[::-1], lo[::-1]) if np.isfinite(y)]
            if pts:
                parts.append(f'<polygon points="{" ".join(pts)}" fill="{color}" opacity="0.15"/>')
    for i, (label, values) in enumerate(sorted(series.items())):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(
            f"{px(x):.1f},{py(y):.1f}" for x, y in zip(grid, values) if np.isfinite(y)
        )
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        parts.append(
            f'<text x="{width - right - 6}" y="{top + 16 + 16 * i}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12" fill="{color}">{label}</text>'
        )
    # axes and a handful of tick labels
    parts.append(
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
        f'stroke="black"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        xv = x_min + frac * (x_max - x_min)
        yv = y_min + frac * (y_max - y_min)
        parts.append(
            f'<text x="{px(xv):.1f}" y="{top + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{xv:.4g}</text>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{py(yv) + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{yv:.4g}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>'
    )
    parts.append(
        f'<text x="18" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {top + plot_h / 2:.1f})">{y_label}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)
