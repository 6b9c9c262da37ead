"""Trainable pipelines: preprocessing plus a small MLP or random forest.

``instantiate`` resolves a sampled configuration into a concrete Pipeline,
``fit`` trains it on a training partition, and ``predict_proba`` scores new
rows.  Everything is deterministic given the model seed.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import FeatureMatrix
from ..searchspace import Configuration, SpaceError
from .forest import ForestClassifier, ForestParams, ForestRegressor, Tree
from .mlp import FitFailure, MlpNet, MlpParams, train_mlp
from .preprocess import FittedPreprocessor, PreprocessPlan, fit_preprocessor

__all__ = [
    "FitFailure", "FittedModel", "ForestClassifier", "ForestParams",
    "ForestRegressor", "MlpNet", "MlpParams", "Pipeline", "PreprocessPlan",
    "Tree", "fit", "instantiate", "load_models", "predict_proba", "save_models",
]


@dataclass(frozen=True)
class Pipeline:
    space: str
    preprocess: PreprocessPlan
    model: MlpParams | ForestParams
    model_seed: int


def instantiate(space_name: str, config: Configuration, model_seed: int) -> Pipeline:
    """Resolve a configuration from the named space into a Pipeline."""
    if config.space != space_name:
        raise SpaceError(
            f"configuration belongs to space {config.space!r}, not {space_name!r}"
        )
    a = config.assignments
    if space_name == "mlp":
        plan = PreprocessPlan(
            imputer_strategy=a["imputer_strategy"],
            ordinal_min_frequency=a["ordinal_min_frequency"],
            encoding=a["encoding"],
            onehot_max_categories=a.get("onehot_max_categories"),
            standardize=True,
        )
        model = MlpParams(
            activation=a["activation"],
            alpha=a["alpha"],
            early_stopping=a["early_stopping"],
            hidden_layer_depth=a["hidden_layer_depth"],
            learning_rate_schedule=a["learning_rate"],
            learning_rate_init=a["learning_rate_init"],
            momentum=a["momentum"],
            num_nodes_per_layer=a["num_nodes_per_layer"],
            max_epochs=a["max_iter"],
            patience=a["n_iter_no_change"],
            validation_fraction=a["validation_fraction"],
            tol=a["tol"],
            batch_size=a["batch_size"],
            shuffle=a["shuffle"],
            beta_1=a["beta_1"],
            beta_2=a["beta_2"],
            epsilon=a["epsilon"],
        )
    elif space_name == "rf":
        plan = PreprocessPlan(
            imputer_strategy=a["imputer_strategy"],
            ordinal_min_frequency=None,
            encoding=a["encoding"],
            onehot_max_categories=a.get("onehot_max_categories"),
            standardize=False,
        )
        model = ForestParams(
            n_estimators=a["n_estimators"],
            criterion=a["criterion"],
            max_features=a["max_features"],
            min_samples_leaf=a["min_samples_leaf"],
            min_samples_split=a["min_samples_split"],
            min_impurity_decrease=a["min_impurity_decrease"],
            bootstrap=a["bootstrap"],
            class_weight=a["class_weight"],
        )
    else:
        raise SpaceError(f"unknown space {space_name!r}")
    return Pipeline(space=space_name, preprocess=plan, model=model, model_seed=model_seed)


@dataclass
class FittedModel:
    preprocessor: FittedPreprocessor
    model: MlpNet | ForestClassifier
    n_classes: int

    def predict_proba(self, features: FeatureMatrix) -> np.ndarray:
        X = self.preprocessor.transform(features)
        return self.model.predict_proba(X)


def fit(
    pipeline: Pipeline,
    X_train: FeatureMatrix,
    y_train: np.ndarray,
    n_classes: int | None = None,
) -> FittedModel:
    """Fit preprocessing (on the training rows only) and then the model."""
    y_train = np.asarray(y_train, dtype=np.int64)
    present = np.unique(y_train)
    if present.size < 2:
        raise FitFailure("single-class training partition")
    n_classes = int(n_classes) if n_classes is not None else int(y_train.max()) + 1

    preprocessor = fit_preprocessor(pipeline.preprocess, X_train)
    X = preprocessor.transform(X_train)
    if isinstance(pipeline.model, MlpParams):
        model = train_mlp(pipeline.model, X, y_train, n_classes, pipeline.model_seed)
    else:
        model = ForestClassifier(pipeline.model, n_classes, pipeline.model_seed).fit(X, y_train)
    return FittedModel(preprocessor=preprocessor, model=model, n_classes=n_classes)


def predict_proba(model: FittedModel, features: FeatureMatrix) -> np.ndarray:
    return model.predict_proba(features)


def save_models(models: list[FittedModel], path: str | Path) -> None:
    tmp = Path(path).with_suffix(".tmp")
    with tmp.open("wb") as fh:
        pickle.dump(models, fh)
    tmp.replace(path)


def load_models(path: str | Path) -> list[FittedModel]:
    with Path(path).open("rb") as fh:
        return pickle.load(fh)
