"""Budgeted model-selection scheduler with per-fold stop checks.

Workers repeatedly fetch a proposal and evaluate its folds in ascending
order; after every non-final fold the stopping policy is consulted against
the current incumbent snapshot.  Completions feed the incumbent store and
the optimizer, early stops feed the optimizer per the feedback policy, and
whatever is in flight when the wall-clock budget expires is recorded as
budget_cut.  The same bookkeeping drives two execution modes: live (threads,
real learners, monotonic clock) and replay (deterministic discrete-event
simulation over a precomputed fold-score matrix).
"""

from __future__ import annotations

import csv
import heapq
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import learners
from .data import Dataset, FoldPlan, load_csv, load_outer_splits, make_fold_plan, make_outer_splits
from .metrics import Score, roc_auc, soft_vote
from .optimize import FeedbackPolicy, TrialOutcome, make_proposer, observation_value
from .searchspace import Configuration, build_space
from .stopping import IncumbentStore, PartialEvaluation, StoppingPolicy, make_policy

TRIAL_LOG_NAME = "trials.jsonl"
SUMMARY_NAME = "summary.json"
MANIFEST_NAME = "manifest.json"
MODELS_NAME = "incumbent_models.pkl"

STATUSES = ("completed", "early_stopped", "failed", "budget_cut")


class EngineError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

_MANIFEST_KEYS = {
    "dataset", "outer", "cv", "space", "optimizer", "policy",
    "budget_seconds", "workers", "root_seed", "output_dir",
    "learner_overrides", "max_trials",
}
_DATASET_KEYS = {"path", "target", "categorical_columns", "name"}
_OUTER_KEYS = {"splits_file", "n_folds", "fold"}
_CV_KEYS = {"k", "repeats"}
_OPTIMIZER_KEYS = {"kind", "feedback", "initial_design", "candidates",
                   "surrogate_trees", "worst_score"}


@dataclass(frozen=True)
class RunManifest:
    dataset_path: str
    target: str
    categorical_columns: tuple[str, ...]
    dataset_name: str | None
    outer_splits_file: str | None
    outer_n_folds: int
    outer_fold: int
    k: int
    repeats: int
    space: str
    optimizer: dict[str, Any]
    policy: str
    budget_seconds: float
    workers: int
    root_seed: int
    output_dir: str
    learner_overrides: dict[str, Any] = field(default_factory=dict)
    max_trials: int | None = None

    def __post_init__(self):
        if self.k < 2:
            raise EngineError("cv.k must be at least 2")
        if self.repeats < 1:
            raise EngineError("cv.repeats must be at least 1")
        if self.budget_seconds <= 0:
            raise EngineError("budget_seconds must be positive")
        if self.workers < 1:
            raise EngineError("workers must be at least 1")

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunManifest":
        _check_keys(doc, _MANIFEST_KEYS, "manifest")
        dataset = doc.get("dataset") or {}
        _check_keys(dataset, _DATASET_KEYS, "manifest.dataset")
        outer = doc.get("outer") or {}
        _check_keys(outer, _OUTER_KEYS, "manifest.outer")
        cv = doc.get("cv") or {}
        _check_keys(cv, _CV_KEYS, "manifest.cv")
        optimizer = dict(doc.get("optimizer") or {"kind": "random"})
        _check_keys(optimizer, _OPTIMIZER_KEYS, "manifest.optimizer")
        return cls(
            dataset_path=dataset["path"],
            target=dataset["target"],
            categorical_columns=tuple(dataset.get("categorical_columns", ())),
            dataset_name=dataset.get("name"),
            outer_splits_file=outer.get("splits_file"),
            outer_n_folds=int(outer.get("n_folds", 10)),
            outer_fold=int(outer.get("fold", 0)),
            k=int(cv.get("k", 5)),
            repeats=int(cv.get("repeats", 1)),
            space=doc.get("space", "rf"),
            optimizer=optimizer,
            policy=doc.get("policy", "none"),
            budget_seconds=float(doc["budget_seconds"]),
            workers=int(doc.get("workers", 1)),
            root_seed=int(doc.get("root_seed", 42)),
            output_dir=doc["output_dir"],
            learner_overrides=dict(doc.get("learner_overrides", {})),
            max_trials=None if doc.get("max_trials") is None else int(doc["max_trials"]),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "RunManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": {
                "path": self.dataset_path,
                "target": self.target,
                "categorical_columns": list(self.categorical_columns),
                "name": self.dataset_name,
            },
            "outer": {
                "splits_file": self.outer_splits_file,
                "n_folds": self.outer_n_folds,
                "fold": self.outer_fold,
            },
            "cv": {"k": self.k, "repeats": self.repeats},
            "space": self.space,
            "optimizer": self.optimizer,
            "policy": self.policy,
            "budget_seconds": self.budget_seconds,
            "workers": self.workers,
            "root_seed": self.root_seed,
            "output_dir": self.output_dir,
            "learner_overrides": self.learner_overrides,
            "max_trials": self.max_trials,
        }


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise EngineError(f"unknown keys in {where}: {sorted(unknown)}")


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedPlan:
    root_seed: int
    outer_fold: int

    @property
    def fold_root(self) -> int:
        return self.root_seed + self.outer_fold

    @property
    def cv_seed(self) -> int:
        return self.fold_root

    @property
    def optimizer_seed(self) -> int:
        return self.fold_root

    def model_seeds(self, trial_index: int, n_folds: int) -> tuple[int, ...]:
        """Per-fold model seeds; a pure function of (root, outer fold, trial)."""
        ss = np.random.SeedSequence(entropy=self.fold_root, spawn_key=(trial_index,))
        return tuple(int(s) for s in ss.generate_state(n_folds))


def derive_seeds(root_seed: int, outer_fold_index: int) -> SeedPlan:
    return SeedPlan(root_seed=root_seed, outer_fold=outer_fold_index)


# ---------------------------------------------------------------------------
# Trial records and the JSONL log
# ---------------------------------------------------------------------------

@dataclass
class FoldEntry:
    fold: int
    score: float
    t_start: float
    t_end: float


@dataclass
class TrialRecord:
    trial_index: int
    config_id: str
    assignments: dict[str, Any]
    folds: list[FoldEntry]
    status: str
    after_fold: int | None
    reported_score: float | None
    seed_info: dict[str, Any]
    # in-memory only; the log's wire format pins its fields exactly
    failure_reason: str | None = None
    decision_seqs: list[int] = field(default_factory=list)

    def to_json_line(self) -> str:
        doc: dict[str, Any] = {
            "trial_index": self.trial_index,
            "config_id": self.config_id,
            "assignments": self.assignments,
            "folds": [
                {"fold": f.fold, "score": f.score, "t_start": f.t_start, "t_end": f.t_end}
                for f in self.folds
            ],
            "status": self.status,
        }
        if self.status == "early_stopped":
            doc["after_fold"] = self.after_fold
        doc["reported_score"] = self.reported_score
        doc["seed_info"] = self.seed_info
        return json.dumps(doc)


def parse_trial_line(line: str, line_number: int) -> dict[str, Any]:
    try:
        doc = json.loads(line)
        if doc["status"] not in STATUSES:
            raise ValueError(f"unknown status {doc['status']!r}")
        doc["folds"] = list(doc["folds"])
        return doc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise EngineError(f"malformed trial log line {line_number}: {exc}") from exc


def read_trial_log(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if line.strip():
                records.append(parse_trial_line(line, i))
    return records


# ---------------------------------------------------------------------------
# Replay matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldScoreMatrix:
    scores: np.ndarray  # (configs, folds)
    costs: np.ndarray   # same shape, seconds per fold evaluation

    def __post_init__(self):
        if self.scores.ndim != 2 or self.scores.shape != self.costs.shape:
            raise EngineError("scores and costs must be equal-shape 2-D arrays")
        if not np.isfinite(self.scores).all():
            raise EngineError("fold scores must be finite")
        if not (np.isfinite(self.costs).all() and (self.costs > 0).all()):
            raise EngineError("fold costs must be finite and positive")

    @property
    def n_configs(self) -> int:
        return self.scores.shape[0]

    @property
    def n_folds(self) -> int:
        return self.scores.shape[1]

    @classmethod
    def from_csv(cls, scores_path: str | Path, costs_path: str | Path | None = None,
                 default_cost: float = 1.0) -> "FoldScoreMatrix":
        scores = _read_matrix_csv(scores_path)
        if costs_path is not None:
            costs = _read_matrix_csv(costs_path)
        else:
            costs = np.full_like(scores, default_cost)
        return cls(scores=scores, costs=costs)


def _read_matrix_csv(path: str | Path) -> np.ndarray:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append([float(cell) for cell in row])
    if not rows:
        raise EngineError(f"{path}: empty matrix")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise EngineError(f"{path}: ragged rows (widths {sorted(widths)})")
    return np.asarray(rows, dtype=np.float64)


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(matrix):
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# Shared scheduling core
# ---------------------------------------------------------------------------

class _Coordinator:
    """Bookkeeping shared by the live and replay schedulers.

    Proposals and terminations are serialized behind locks; stop checks read
    an immutable incumbent snapshot, so a worker may act on a slightly stale
    incumbent by design.
    """

    def __init__(
        self,
        propose: Callable[[], Configuration],
        observe: Callable[[Configuration, TrialOutcome], None],
        policy: StoppingPolicy,
        n_folds: int,
        feedback: FeedbackPolicy,
        worst_score: float = 0.0,
        max_trials: int | None = None,
        on_new_incumbent: Callable[[TrialRecord], None] | None = None,
    ):
        self._propose = propose
        self._observe = observe
        self.policy = policy
        self.n_folds = n_folds
        self.feedback = feedback
        self.worst_score = worst_score
        self.max_trials = max_trials
        self.on_new_incumbent = on_new_incumbent
        self.store = IncumbentStore(k=n_folds)
        self.records: list[TrialRecord] = []
        self.log_stream = None  # optional file handle for as-it-happens appends
        self._next_index = 0
        # one lock serializes proposals, observations, and log writes, so the
        # optimizer never sees a half-updated observation list
        self._lock = threading.Lock()

    def next_trial(self) -> tuple[int, Configuration] | None:
        with self._lock:
            if self.max_trials is not None and self._next_index >= self.max_trials:
                return None
            index = self._next_index
            self._next_index += 1
            return index, self._propose()

    def stop_check(self, record: TrialRecord) -> bool:
        snapshot = self.store.snapshot()
        partial = PartialEvaluation(
            config_id=record.config_id,
            fold_scores=tuple(f.score for f in record.folds),
            k=self.n_folds,
        )
        decision = self.policy.decide(snapshot, partial)
        record.decision_seqs.append(snapshot.seq)
        return decision.stop

    def finish(self, record: TrialRecord, config: Configuration) -> None:
        """Terminal bookkeeping: incumbent store, policy state, optimizer, log."""
        with self._lock:
            scores = tuple(f.score for f in record.folds)
            if record.status == "completed":
                outcome = TrialOutcome("completed", scores, self.n_folds)
                before = self.store.snapshot().seq
                snapshot = self.store.submit(record.config_id, scores)
                self.policy.on_complete(record.config_id, scores)
                record.reported_score = observation_value(outcome, self.feedback, self.worst_score)
                self._observe(config, outcome)
                if snapshot.seq != before and self.on_new_incumbent is not None:
                    self.on_new_incumbent(record)
            elif record.status == "early_stopped":
                outcome = TrialOutcome("early_stopped", scores, self.n_folds)
                record.reported_score = observation_value(outcome, self.feedback, self.worst_score)
                self._observe(config, outcome)
            elif record.status == "failed":
                outcome = TrialOutcome("failed", (), self.n_folds)
                record.reported_score = observation_value(outcome, self.feedback, self.worst_score)
                self._observe(config, outcome)
            else:  # budget_cut: the run is over, nothing is reported
                record.reported_score = None
            self.records.append(record)
            if self.log_stream is not None:
                self.log_stream.write(record.to_json_line() + "\n")
                self.log_stream.flush()

    def status_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in STATUSES}
        for r in self.records:
            counts[r.status] += 1
        return counts


def _run_live_worker(
    coordinator: _Coordinator,
    evaluate: Callable[[int, Configuration, int], tuple[float | None, str | None, Any]],
    seed_plan: SeedPlan,
    budget_end: float,
    clock: Callable[[], float],
    keep_models: bool,
) -> None:
    """One worker thread: propose, evaluate folds in order, terminate, repeat.

    ``evaluate(trial_index, config, fold_index)`` returns (score, failure
    reason, fitted model or None).
    """
    n_folds = coordinator.n_folds
    while clock() < budget_end:
        nxt = coordinator.next_trial()
        if nxt is None:
            return
        index, config = nxt
        record = TrialRecord(
            trial_index=index,
            config_id=config.id,
            assignments=dict(config.assignments),
            folds=[],
            status="budget_cut",
            after_fold=None,
            reported_score=None,
            seed_info={
                "root_seed": seed_plan.root_seed,
                "outer_fold": seed_plan.outer_fold,
                "cv_seed": seed_plan.cv_seed,
                "optimizer_seed": seed_plan.optimizer_seed,
                "model_fold_seeds": list(seed_plan.model_seeds(index, n_folds)),
            },
        )
        models = [] if keep_models else None
        for fold_index in range(n_folds):
            if clock() >= budget_end:
                record.status = "budget_cut"
                break
            t_start = clock()
            score, reason, model = evaluate(index, config, fold_index)
            t_end = clock()
            if score is None:
                record.status = "failed"
                record.failure_reason = reason
                break
            record.folds.append(FoldEntry(fold=fold_index, score=score,
                                          t_start=t_start, t_end=t_end))
            if models is not None:
                models.append(model)
            if clock() > budget_end:
                record.status = "budget_cut"
                break
            if fold_index < n_folds - 1:
                if coordinator.stop_check(record):
                    record.status = "early_stopped"
                    record.after_fold = fold_index + 1
                    break
            else:
                record.status = "completed"
        if models is not None:
            record.fitted_models = models  # type: ignore[attr-defined]
        coordinator.finish(record, config)
        if models is not None:
            record.fitted_models = None  # free the fold models once handled


# ---------------------------------------------------------------------------
# Replay: deterministic discrete-event simulation
# ---------------------------------------------------------------------------

def replay(
    matrix: FoldScoreMatrix,
    policy: str | StoppingPolicy,
    budget: float,
    workers: int = 1,
    feedback: FeedbackPolicy | None = None,
) -> list[TrialRecord]:
    """Simulate the live scheduler over a precomputed fold-score matrix.

    Proposals walk the matrix rows in order; per-fold costs advance a
    simulated clock.  Fold completions are processed in global time order
    (ties by worker id), which serializes the parallel semantics
    deterministically.
    """
    if isinstance(policy, str):
        policy = make_policy(policy)
    feedback = feedback or FeedbackPolicy("report_failed")
    n_folds = matrix.n_folds

    row_iter = iter(range(matrix.n_configs))

    def propose() -> Configuration:
        row = next(row_iter)
        return Configuration(space="replay", assignments={"row": row}, id=f"row-{row}")

    coordinator = _Coordinator(
        propose=propose,
        observe=lambda config, outcome: None,
        policy=policy,
        n_folds=n_folds,
        feedback=feedback,
    )

    @dataclass
    class _Job:
        index: int
        config: Configuration
        record: TrialRecord

    def start_trial(now: float) -> tuple[float, _Job] | None:
        # a fold may start only strictly before the budget point
        if now >= budget:
            return None
        try:
            nxt = coordinator.next_trial()
        except StopIteration:
            return None
        if nxt is None:
            return None
        index, config = nxt
        record = TrialRecord(
            trial_index=index, config_id=config.id,
            assignments=dict(config.assignments), folds=[],
            status="budget_cut", after_fold=None,
            reported_score=None, seed_info={},
        )
        job = _Job(index=index, config=config, record=record)
        return now + float(matrix.costs[index, 0]), job

    heap: list[tuple[float, int, _Job]] = []
    for worker in range(workers):
        started = start_trial(0.0)
        if started is None:
            break
        end, job = started
        job.record.folds.append(FoldEntry(0, float(matrix.scores[job.index, 0]), 0.0, end))
        heapq.heappush(heap, (end, worker, job))

    while heap:
        now, worker, job = heapq.heappop(heap)
        record = job.record
        fold_done = len(record.folds) - 1
        terminated = False
        if now > budget:
            record.status = "budget_cut"
            terminated = True
        elif fold_done < n_folds - 1:
            if coordinator.stop_check(record):
                record.status = "early_stopped"
                record.after_fold = fold_done + 1
                terminated = True
        else:
            record.status = "completed"
            terminated = True

        if not terminated:
            if now >= budget:
                record.status = "budget_cut"
                terminated = True
            else:
                nxt_fold = fold_done + 1
                end = now + float(matrix.costs[job.index, nxt_fold])
                record.folds.append(
                    FoldEntry(nxt_fold, float(matrix.scores[job.index, nxt_fold]), now, end)
                )
                heapq.heappush(heap, (end, worker, job))
                continue

        coordinator.finish(record, job.config)
        started = start_trial(now)
        if started is not None:
            end, new_job = started
            new_job.record.folds.append(
                FoldEntry(0, float(matrix.scores[new_job.index, 0]), now, end)
            )
            heapq.heappush(heap, (end, worker, new_job))

    return coordinator.records


# ---------------------------------------------------------------------------
# Run directories
# ---------------------------------------------------------------------------

def _write_run_dir(
    out_dir: Path,
    manifest_doc: dict[str, Any] | None,
    records: list[TrialRecord],
    summary: dict[str, Any],
) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    if manifest_doc is not None:
        (out_dir / MANIFEST_NAME).write_text(
            json.dumps(manifest_doc, indent=2, sort_keys=True), encoding="utf-8"
        )
    # canonical order: by trial index (appended live in termination order)
    lines = [r.to_json_line() for r in sorted(records, key=lambda r: r.trial_index)]
    (out_dir / TRIAL_LOG_NAME).write_text("\n".join(lines) + ("\n" if lines else ""),
                                          encoding="utf-8")
    (out_dir / SUMMARY_NAME).write_text(json.dumps(summary, indent=2, sort_keys=True),
                                        encoding="utf-8")
    return out_dir


def replay_to_dir(
    matrix: FoldScoreMatrix,
    policy: str,
    budget: float,
    workers: int,
    out_dir: str | Path,
    feedback: FeedbackPolicy | None = None,
) -> Path:
    records = replay(matrix, policy, budget, workers, feedback)
    counts = {s: 0 for s in STATUSES}
    for r in records:
        counts[r.status] += 1
    completed = [r for r in records if r.status == "completed"]
    best = None
    if completed:
        best_rec = max(completed, key=lambda r: (np.mean([f.score for f in r.folds]), -r.trial_index))
        best = {
            "trial_index": best_rec.trial_index,
            "config_id": best_rec.config_id,
            "mean_score": float(np.mean([f.score for f in best_rec.folds])),
            "worst_score": float(min(f.score for f in best_rec.folds)),
        }
    summary = {
        "mode": "replay",
        "method": policy,
        "policy": policy,
        "optimizer": {"kind": "replay"},
        "dataset": "replay-matrix",
        "outer_fold": 0,
        "k": matrix.n_folds,
        "repeats": 1,
        "budget_seconds": budget,
        "workers": workers,
        "counts": counts,
        "degenerate": counts["completed"] == 0,
        "incumbent": best,
        "metadata": _metadata_notes(),
    }
    return _write_run_dir(Path(out_dir), None, records, summary)


def _metadata_notes() -> dict[str, str]:
    return {
        "auc_averaging": "macro one-vs-rest",
        "robust_sigma": "population convention (divide by M)",
        "augmented_duplicates": "resampled rows are dealt like any row; a duplicate "
                                "may land in both train and validation of one fold",
    }


# ---------------------------------------------------------------------------
# Live runs
# ---------------------------------------------------------------------------

def run(manifest: RunManifest) -> Path:
    """Execute a budgeted live model-selection run; returns the run directory."""
    dataset = load_csv(
        manifest.dataset_path,
        target_column=manifest.target,
        categorical_columns=manifest.categorical_columns,
        name=manifest.dataset_name,
    )
    if manifest.outer_splits_file:
        splits = load_outer_splits(manifest.outer_splits_file)
    else:
        splits = make_outer_splits(dataset, manifest.outer_n_folds, seed=manifest.root_seed)
    if not 0 <= manifest.outer_fold < len(splits):
        raise EngineError(
            f"outer fold {manifest.outer_fold} out of range (have {len(splits)} splits)"
        )
    split = splits[manifest.outer_fold]
    train_rows = np.asarray(split["train"], dtype=np.intp)
    test_rows = np.asarray(split["test"], dtype=np.intp)

    seed_plan = derive_seeds(manifest.root_seed, manifest.outer_fold)
    inner = dataset.subset(train_rows)
    cv_rng = np.random.default_rng(seed_plan.cv_seed)
    inner_aug, plan = make_fold_plan(inner, manifest.k, manifest.repeats, cv_rng)
    n_folds = plan.n_total

    space = build_space(manifest.space, manifest.learner_overrides)
    optimizer_cfg = dict(manifest.optimizer)
    kind = optimizer_cfg.pop("kind", "random")
    feedback_name = optimizer_cfg.pop("feedback", "failed")
    feedback = FeedbackPolicy(
        "report_mean" if feedback_name == "mean" else "report_failed"
    )
    worst_score = float(optimizer_cfg.pop("worst_score", 0.0))
    if kind == "bo":
        optimizer_cfg["worst_score"] = worst_score
    proposer = make_proposer(space, seed_plan.optimizer_seed, kind=kind, **optimizer_cfg)
    policy = make_policy(manifest.policy)

    out_dir = Path(manifest.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    test_features = dataset.features.take(test_rows)
    test_labels = dataset.labels[test_rows]
    incumbent_history: list[dict[str, Any]] = []
    fold_assignments = plan.folds

    def evaluate(trial_index: int, config: Configuration, fold_index: int):
        fa = fold_assignments[fold_index]
        model_seed = seed_plan.model_seeds(trial_index, n_folds)[fold_index]
        try:
            pipeline = learners.instantiate(manifest.space, config, model_seed)
            fitted = learners.fit(
                pipeline,
                inner_aug.features.take(fa.train),
                inner_aug.labels[fa.train],
                n_classes=inner_aug.n_classes,
            )
            proba = fitted.predict_proba(inner_aug.features.take(fa.validation))
            score = roc_auc(inner_aug.labels[fa.validation], proba)
        except Exception as exc:  # any learner crash marks the trial failed
            return None, f"{type(exc).__name__}: {exc}", None
        if score.failed:
            return None, "validation fold could not be scored", None
        return score.value, None, fitted

    start = time.monotonic()
    clock = lambda: time.monotonic() - start
    budget_end = manifest.budget_seconds

    def on_new_incumbent(record: TrialRecord) -> None:
        models = getattr(record, "fitted_models", None)
        entry = {
            "t": record.folds[-1].t_end,
            "trial_index": record.trial_index,
            "config_id": record.config_id,
            "val_mean": float(np.mean([f.score for f in record.folds])),
            "test_score": None,
        }
        if models:
            learners.save_models(models, out_dir / MODELS_NAME)
            if len(test_rows):
                votes = soft_vote([m.predict_proba(test_features) for m in models])
                test = roc_auc(test_labels, votes)
                entry["test_score"] = test.value
        incumbent_history.append(entry)

    coordinator = _Coordinator(
        propose=proposer.propose,
        observe=lambda config, outcome: proposer.observe(config, outcome, feedback),
        policy=policy,
        n_folds=n_folds,
        feedback=feedback,
        worst_score=worst_score,
        max_trials=manifest.max_trials,
        on_new_incumbent=on_new_incumbent,
    )

    threads = [
        threading.Thread(
            target=_run_live_worker,
            args=(coordinator, evaluate, seed_plan, budget_end, clock, True),
            name=f"worker-{i}",
        )
        for i in range(manifest.workers)
    ]
    # append each trial as it terminates; the file is rewritten in canonical
    # trial-index order once the run is over
    with (out_dir / TRIAL_LOG_NAME).open("w", encoding="utf-8") as log_stream:
        coordinator.log_stream = log_stream
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        coordinator.log_stream = None

    counts = coordinator.status_counts()
    final = coordinator.store.snapshot()
    summary = {
        "mode": "live",
        "method": _method_label(manifest),
        "policy": manifest.policy,
        "optimizer": manifest.optimizer,
        "dataset": dataset.name,
        "space": manifest.space,
        "outer_fold": manifest.outer_fold,
        "k": manifest.k,
        "repeats": manifest.repeats,
        "budget_seconds": manifest.budget_seconds,
        "workers": manifest.workers,
        "root_seed": manifest.root_seed,
        "counts": counts,
        "degenerate": counts["completed"] == 0,
        "incumbent": None if final.empty else {
            "config_id": final.config_id,
            "mean_score": final.mean_score,
            "worst_score": final.worst_score,
            "snapshot_seq": final.seq,
        },
        "incumbent_history": incumbent_history,
        "augmented_rows": list(plan.augmented_rows),
        "metadata": _metadata_notes(),
    }
    return _write_run_dir(out_dir, manifest.to_dict(), coordinator.records, summary)


def _method_label(manifest: RunManifest) -> str:
    kind = manifest.optimizer.get("kind", "random")
    if kind == "random":
        return manifest.policy
    feedback = manifest.optimizer.get("feedback", "failed")
    return f"{manifest.policy}+bo-{feedback}"


def ensemble_test_score(run_dir: str | Path, features, labels) -> Score:
    """Soft-vote the persisted incumbent fold models and score ROC AUC."""
    path = Path(run_dir) / MODELS_NAME
    if not path.exists():
        raise EngineError(
            f"{run_dir}: no persisted incumbent models "
            f"(live runs persist them only for the final incumbent)"
        )
    models = learners.load_models(path)
    votes = soft_vote([m.predict_proba(features) for m in models])
    return roc_auc(labels, votes)
