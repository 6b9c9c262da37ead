"""Conditional hyperparameter spaces and seeded sampling.

A space is an ordered list of parameter specs.  A parameter may be guarded by
a condition on an earlier parameter (e.g. the one-hot category cap only exists
when the encoding choice is "onehot"), so a sampled configuration contains a
value for every *active* parameter and nothing else.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

KINDS = ("float", "integer", "ordinal", "categorical", "constant")


class SpaceError(ValueError):
    """Raised for malformed parameter specs, spaces, or configurations."""


@dataclass(frozen=True)
class Condition:
    """Activates a parameter only when ``parent`` has value ``value``."""

    parent: str
    value: Any


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    values: tuple = ()
    value: Any = None
    log: bool = False
    condition: Condition | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpaceError(f"unknown parameter kind {self.kind!r} for {self.name!r}")
        if self.kind in ("float", "integer"):
            if self.low is None or self.high is None or not self.low < self.high:
                raise SpaceError(f"{self.name!r}: range requires low < high")
            if self.log and self.low <= 0:
                raise SpaceError(f"{self.name!r}: log scale requires low > 0")
        elif self.kind in ("ordinal", "categorical"):
            if not self.values:
                raise SpaceError(f"{self.name!r}: empty value set")
            if self.kind == "categorical" and len(set(map(_tag, self.values))) != len(self.values):
                raise SpaceError(f"{self.name!r}: duplicate categorical values")

    @property
    def searched(self) -> bool:
        return self.kind != "constant"


@dataclass(frozen=True)
class SearchSpace:
    name: str
    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        seen: set[str] = set()
        for spec in self.params:
            if spec.name in seen:
                raise SpaceError(f"duplicate parameter name {spec.name!r}")
            if spec.condition is not None and spec.condition.parent not in seen:
                raise SpaceError(
                    f"{spec.name!r}: condition references {spec.condition.parent!r}, "
                    "which is not declared earlier in the space"
                )
            seen.add(spec.name)

    def __getitem__(self, name: str) -> ParamSpec:
        for spec in self.params:
            if spec.name == name:
                return spec
        raise KeyError(name)

    @property
    def searched_params(self) -> tuple[ParamSpec, ...]:
        return tuple(s for s in self.params if s.searched)


def _tag(value: Any) -> str:
    """Type-tagged canonical rendering, so True, 1 and "True" stay distinct."""
    if value is None:
        return "n:"
    if isinstance(value, bool):
        return f"b:{value}"
    if isinstance(value, (int, np.integer)):
        return f"i:{int(value)}"
    if isinstance(value, (float, np.floating)):
        return f"f:{float(value):.17g}"
    return f"s:{value}"


def config_id(assignments: Mapping[str, Any]) -> str:
    """Stable 64-bit hash of the canonicalized assignments, as 16 hex chars."""
    canon = "\x1f".join(f"{k}\x1e{_tag(v)}" for k, v in sorted(assignments.items()))
    return hashlib.blake2b(canon.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True)
class Configuration:
    space: str
    assignments: dict[str, Any]
    id: str = field(default="")

    def __post_init__(self):
        if not self.id:
            object.__setattr__(self, "id", config_id(self.assignments))

    def __getitem__(self, name: str) -> Any:
        return self.assignments[name]

    def to_json(self) -> str:
        return json.dumps(
            {"space": self.space, "assignments": self.assignments}, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        doc = json.loads(text)
        return cls(space=doc["space"], assignments=dict(doc["assignments"]))


def is_active(spec: ParamSpec, assignments: Mapping[str, Any]) -> bool:
    if spec.condition is None:
        return True
    return assignments.get(spec.condition.parent) == spec.condition.value


def validate_configuration(space: SearchSpace, config: Configuration) -> None:
    """Check the activity closure and that every value lies in its domain."""
    if config.space != space.name:
        raise SpaceError(f"configuration for {config.space!r} used with space {space.name!r}")
    expected: set[str] = set()
    for spec in space.params:
        if not is_active(spec, config.assignments):
            if spec.name in config.assignments:
                raise SpaceError(f"inactive parameter {spec.name!r} present")
            continue
        expected.add(spec.name)
        if spec.name not in config.assignments:
            raise SpaceError(f"active parameter {spec.name!r} missing")
        value = config.assignments[spec.name]
        if spec.kind == "float" and not (spec.low <= value <= spec.high):
            raise SpaceError(f"{spec.name!r}={value!r} outside [{spec.low}, {spec.high}]")
        if spec.kind == "integer" and not (
            float(value).is_integer() and spec.low <= value <= spec.high
        ):
            raise SpaceError(f"{spec.name!r}={value!r} not an integer in range")
        if spec.kind in ("ordinal", "categorical") and all(
            _tag(value) != _tag(v) for v in spec.values
        ):
            raise SpaceError(f"{spec.name!r}={value!r} not in value set")
        if spec.kind == "constant" and _tag(value) != _tag(spec.value):
            raise SpaceError(f"constant {spec.name!r} altered to {value!r}")
    extra = set(config.assignments) - expected
    if extra:
        raise SpaceError(f"unknown parameters {sorted(extra)!r}")


def sample(space: SearchSpace, rng: np.random.Generator) -> Configuration:
    """Draw one configuration, uniform per parameter (log-domain when scaled).

    Conditional children are only drawn when their condition holds, constants
    are copied verbatim, and the draw sequence is a pure function of the
    generator state.
    """
    assignments: dict[str, Any] = {}
    for spec in space.params:
        if not is_active(spec, assignments):
            continue
        if spec.kind == "constant":
            assignments[spec.name] = spec.value
        elif spec.kind == "float":
            assignments[spec.name] = _draw_float(spec, rng)
        elif spec.kind == "integer":
            assignments[spec.name] = _draw_integer(spec, rng)
        else:  # ordinal and categorical: uniform over index positions
            idx = int(rng.integers(len(spec.values)))
            assignments[spec.name] = spec.values[idx]
    return Configuration(space=space.name, assignments=assignments)


def _draw_float(spec: ParamSpec, rng: np.random.Generator) -> float:
    if spec.log:
        return float(math.exp(rng.uniform(math.log(spec.low), math.log(spec.high))))
    return float(rng.uniform(spec.low, spec.high))


def _draw_integer(spec: ParamSpec, rng: np.random.Generator) -> int:
    # Continuous (log-)uniform draw, rounded and clamped to the range.
    raw = _draw_float(spec, rng)
    return int(min(max(round(raw), spec.low), spec.high))


# ---------------------------------------------------------------------------
# The two built-in pipeline spaces
# ---------------------------------------------------------------------------

_ENCODER_CONSTANTS = (
    ParamSpec("ordinal_unknown_value", "constant", value=-1),
    ParamSpec("ordinal_missing_value", "constant", value=-2),
    ParamSpec("onehot_drop", "constant", value=None),
    ParamSpec("onehot_handle_unknown", "constant", value="infrequent_if_exists"),
)


def build_mlp_space(max_iter: int = 512) -> SearchSpace:
    """Multilayer-perceptron pipeline space (preprocessing included)."""
    params = (
        ParamSpec("activation", "categorical", values=("relu", "tanh")),
        ParamSpec("alpha", "float", low=1e-7, high=0.1, log=True),
        ParamSpec("early_stopping", "categorical", values=(True, False)),
        ParamSpec("hidden_layer_depth", "integer", low=1, high=3, log=True),
        ParamSpec("learning_rate", "categorical", values=("constant", "invscaling", "adaptive")),
        ParamSpec("learning_rate_init", "float", low=1e-4, high=0.5, log=True),
        ParamSpec("momentum", "float", low=0.8, high=1.0, log=True),
        ParamSpec("num_nodes_per_layer", "integer", low=16, high=264, log=True),
        ParamSpec("imputer_strategy", "categorical", values=("mean", "median")),
        ParamSpec("ordinal_min_frequency", "float", low=0.01, high=0.5, log=True),
        ParamSpec("encoding", "categorical", values=("onehot", "passthrough")),
        ParamSpec(
            "onehot_max_categories",
            "integer",
            low=2,
            high=20,
            log=True,
            condition=Condition("encoding", "onehot"),
        ),
        ParamSpec("max_iter", "constant", value=int(max_iter)),
        ParamSpec("n_iter_no_change", "constant", value=32),
        ParamSpec("validation_fraction", "constant", value=0.1),
        ParamSpec("tol", "constant", value=1e-3),
        ParamSpec("solver", "constant", value="adam"),
        ParamSpec("batch_size", "constant", value="auto"),
        ParamSpec("shuffle", "constant", value=True),
        ParamSpec("beta_1", "constant", value=0.9),
        ParamSpec("beta_2", "constant", value=0.999),
        ParamSpec("epsilon", "constant", value=1e-8),
    ) + _ENCODER_CONSTANTS
    return SearchSpace(name="mlp", params=params)


def max_features_grid() -> tuple[float, ...]:
    """Ten feature fractions, log-spaced, ending at 1.0."""
    return tuple(float(v) for v in np.logspace(0.1, 1.0, num=10) / 10.0)


def build_rf_space(n_estimators: int = 512) -> SearchSpace:
    """Random-forest pipeline space (preprocessing included)."""
    params = (
        ParamSpec("bootstrap", "categorical", values=(True, False)),
        ParamSpec("class_weight", "categorical", values=("balanced", "balanced_subsample", None)),
        ParamSpec("criterion", "categorical", values=("gini", "entropy")),
        ParamSpec("max_features", "ordinal", values=max_features_grid()),
        ParamSpec("min_impurity_decrease", "float", low=1e-9, high=0.1, log=True),
        ParamSpec("min_samples_leaf", "integer", low=1, high=20, log=True),
        ParamSpec("min_samples_split", "integer", low=2, high=20, log=True),
        ParamSpec("imputer_strategy", "categorical", values=("mean", "median")),
        ParamSpec("encoding", "categorical", values=("onehot", "passthrough")),
        ParamSpec(
            "onehot_max_categories",
            "integer",
            low=2,
            high=20,
            log=True,
            condition=Condition("encoding", "onehot"),
        ),
        ParamSpec("n_estimators", "constant", value=int(n_estimators)),
        ParamSpec("max_depth", "constant", value=None),
        ParamSpec("min_weight_fraction_leaf", "constant", value=0.0),
        ParamSpec("max_leaf_nodes", "constant", value=None),
    ) + _ENCODER_CONSTANTS
    return SearchSpace(name="rf", params=params)


def build_space(name: str, overrides: Mapping[str, Any] | None = None) -> SearchSpace:
    """Build a named space, applying constant overrides (e.g. n_estimators)."""
    overrides = dict(overrides or {})
    if name == "mlp":
        space = build_mlp_space(max_iter=int(overrides.pop("max_iter", 512)))
    elif name == "rf":
        space = build_rf_space(n_estimators=int(overrides.pop("n_estimators", 512)))
    else:
        raise SpaceError(f"unknown space {name!r} (expected 'mlp' or 'rf')")
    if overrides:
        raise SpaceError(f"space {name!r} does not accept overrides {sorted(overrides)!r}")
    return space


# ---------------------------------------------------------------------------
# JSON space documents, for custom spaces
# ---------------------------------------------------------------------------

def space_to_json(space: SearchSpace) -> str:
    docs = []
    for spec in space.params:
        doc: dict[str, Any] = {"name": spec.name, "kind": spec.kind}
        if spec.kind in ("float", "integer"):
            doc["low"], doc["high"], doc["log"] = spec.low, spec.high, spec.log
        elif spec.kind in ("ordinal", "categorical"):
            doc["values"] = list(spec.values)
        else:
            doc["value"] = spec.value
        if spec.condition is not None:
            doc["condition"] = {"parent": spec.condition.parent, "value": spec.condition.value}
        docs.append(doc)
    return json.dumps({"name": space.name, "params": docs}, indent=2)


def space_from_json(text: str) -> SearchSpace:
    doc = json.loads(text)
    params = []
    for p in doc["params"]:
        cond = p.get("condition")
        params.append(
            ParamSpec(
                name=p["name"],
                kind=p["kind"],
                low=p.get("low"),
                high=p.get("high"),
                values=tuple(p.get("values", ())),
                value=p.get("value"),
                log=bool(p.get("log", False)),
                condition=Condition(cond["parent"], cond["value"]) if cond else None,
            )
        )
    return SearchSpace(name=doc["name"], params=tuple(params))


def load_space(path: str | Path) -> SearchSpace:
    return space_from_json(Path(path).read_text(encoding="utf-8"))
