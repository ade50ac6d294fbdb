"""Deterministic reference predictors.

Small models with analytically predictable behavior, used as black boxes
in tests, examples, and the CLI: ordinary least squares, k-nearest
neighbours, and a single split stump.  No regularization and no stochastic
training anywhere; every tie breaks toward the lowest index so a fit is a
pure function of its data.  All models satisfy the batch-predictor
contract and can be saved to (and restored from) a self-describing text
format.
"""

from __future__ import annotations

import json
from typing import Any, Sequence

import numpy as np

from .core import PredictorHandle
from .data import CATEGORICAL, CONTINUOUS, Dataset
from .errors import (
    DataFormatError,
    InvalidArgumentError,
    MissingTargetError,
    SingularFitError,
)

MODEL_FORMAT = "boxprobe-model"
MODEL_VERSION = 1

# Feature schema entries: (name, kind, levels-or-None).
Schema = tuple[tuple[str, str, tuple[str, ...] | None], ...]


def _schema_from(data: Dataset) -> Schema:
    return tuple(
        (m.name, m.kind, m.levels if m.kind == CATEGORICAL else None)
        for m in data.meta
    )


def _numeric_target(data: Dataset) -> np.ndarray:
    if data.target is None:
        raise MissingTargetError("fitting a reference model needs a target")
    if data.target.dtype == object:
        raise InvalidArgumentError("reference models need a numeric target")
    return np.asarray(data.target, dtype=float)


def _continuous_column(X: np.ndarray, j: int) -> np.ndarray:
    return X[:, j].astype(float)


class ReferenceModel(PredictorHandle):
    """Base for fitted reference predictors; adds a serializable schema."""

    kind = "reference"

    def __init__(self, schema: Schema):
        self.schema = schema
        super().__init__(self._predict, len(schema), name=self.kind)

    def _predict(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "features": [
                {"name": n, "kind": k, "levels": list(lv) if lv else None}
                for n, k, lv in self.schema
            ],
            "parameters": self._parameters(),
        }

    def _parameters(self) -> dict[str, Any]:  # pragma: no cover - abstract
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Linear model
# ---------------------------------------------------------------------------


def _design_matrix(X: np.ndarray, schema: Schema) -> np.ndarray:
    """Continuous columns as-is; categoricals one-hot with the first level dropped."""
    cols = []
    for j, (_, kind, levels) in enumerate(schema):
        if kind == CONTINUOUS:
            cols.append(_continuous_column(X, j))
        else:
            raw = X[:, j]
            for level in levels[1:]:
                cols.append((raw == level).astype(float))
    if not cols:
        return np.zeros((X.shape[0], 0))
    return np.column_stack(cols)


class LinearModel(ReferenceModel):
    kind = "linear"

    def __init__(self, schema: Schema, intercept: float, coefficients: Sequence[float]):
        self.intercept = float(intercept)
        self.coefficients = np.asarray(coefficients, dtype=float)
        super().__init__(schema)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        design = _design_matrix(np.asarray(X), self.schema)
        return design @ self.coefficients + self.intercept

    def _parameters(self) -> dict[str, Any]:
        return {
            "intercept": self.intercept,
            "coefficients": [float(c) for c in self.coefficients],
        }


def fit_linear(data: Dataset) -> LinearModel:
    """Least squares with intercept, solved by SVD; exact on noiseless affine data."""
    y = _numeric_target(data)
    n, p = data.n_rows, data.n_features
    if n <= p:
        raise SingularFitError(f"need more observations than features (n={n}, p={p})")
    schema = _schema_from(data)
    design = np.column_stack(
        (np.ones(n), _design_matrix(data.matrix(), schema))
    )
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise SingularFitError("design matrix is rank deficient")
    return LinearModel(schema, coef[0], coef[1:])


# ---------------------------------------------------------------------------
# k-nearest neighbours
# ---------------------------------------------------------------------------


class KNNModel(ReferenceModel):
    kind = "knn"

    def __init__(self, schema: Schema, k: int, train: np.ndarray, target: Sequence[float]):
        self.k = int(k)
        self.train = np.asarray(train)
        self.target = np.asarray(target, dtype=float)
        super().__init__(schema)

    def _distances(self, row: np.ndarray) -> np.ndarray:
        total = np.zeros(len(self.train))
        for j, (_, kind, _) in enumerate(self.schema):
            col = self.train[:, j]
            if kind == CONTINUOUS:
                total += (col.astype(float) - float(row[j])) ** 2
            else:
                total += (col != row[j]).astype(float)  # match/no-match distance
        return total

    def _predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        out = np.empty(X.shape[0])
        for i in range(X.shape[0]):
            dists = self._distances(X[i])
            # Stable sort: equal distances resolve to the lower training index.
            neighbours = np.argsort(dists, kind="stable")[: self.k]
            out[i] = np.mean(self.target[neighbours])
        return out

    def _parameters(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "train": [list(row) for row in self.train.tolist()],
            "target": [float(v) for v in self.target],
        }


def fit_knn(data: Dataset, k: int) -> KNNModel:
    """Store the sample; predict the mean target of the k nearest rows."""
    y = _numeric_target(data)
    k = int(k)
    if not 1 <= k <= data.n_rows:
        raise InvalidArgumentError(
            f"k must be between 1 and n={data.n_rows}, got {k}"
        )
    return KNNModel(_schema_from(data), k, np.array(data.matrix()), y)


# ---------------------------------------------------------------------------
# Decision stump
# ---------------------------------------------------------------------------


class StumpModel(ReferenceModel):
    kind = "stump"

    def __init__(
        self,
        schema: Schema,
        feature: int | None,
        split_kind: str | None,
        threshold: Any,
        left_value: float,
        right_value: float,
    ):
        self.feature = feature
        self.split_kind = split_kind  # "le" (x <= t) or "eq" (x == level)
        self.threshold = threshold
        self.left_value = float(left_value)
        self.right_value = float(right_value)
        super().__init__(schema)

    def _mask(self, X: np.ndarray) -> np.ndarray:
        col = X[:, self.feature]
        if self.split_kind == "le":
            return col.astype(float) <= float(self.threshold)
        return col == self.threshold

    def _predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if self.feature is None:
            return np.full(X.shape[0], self.left_value)
        return np.where(self._mask(X), self.left_value, self.right_value)

    def _parameters(self) -> dict[str, Any]:
        return {
            "feature": self.feature,
            "split_kind": self.split_kind,
            "threshold": self.threshold,
            "left_value": self.left_value,
            "right_value": self.right_value,
        }


def _split_candidates(data: Dataset, j: int):
    meta = data.meta[j]
    if meta.kind == CONTINUOUS:
        unique = np.unique(data.column(j))
        for a, b in zip(unique, unique[1:]):
            yield "le", float((a + b) / 2.0)
    else:
        for level in meta.levels:
            yield "eq", level


def fit_stump(data: Dataset) -> StumpModel:
    """Single split minimizing squared error.

    Continuous features are scanned at midpoints of their sorted unique
    values, categorical features at each level (match vs no-match).  Ties
    break toward the lower feature index, then the lower threshold.  Equal
    targets (or no feature with two observed sides) give a constant stump.
    """
    y = _numeric_target(data)
    schema = _schema_from(data)
    constant = StumpModel(schema, None, None, None, float(np.mean(y)), float(np.mean(y)))
    if np.max(y) == np.min(y):
        return constant

    best = None  # (sse, feature, split_kind, threshold, left, right)
    for j in range(data.n_features):
        column = data.column(j)
        for split_kind, threshold in _split_candidates(data, j):
            if split_kind == "le":
                mask = column.astype(float) <= threshold
            else:
                mask = column == threshold
            n_left = int(np.sum(mask))
            if n_left == 0 or n_left == len(column):
                continue
            left, right = y[mask], y[~mask]
            sse = float(np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2))
            if best is None or sse < best[0]:
                best = (sse, j, split_kind, threshold, float(left.mean()), float(right.mean()))
    if best is None:
        return constant
    _, j, split_kind, threshold, left, right = best
    return StumpModel(schema, j, split_kind, threshold, left, right)


# ---------------------------------------------------------------------------
# Save / load
# ---------------------------------------------------------------------------


def save_model(model: ReferenceModel, path: str) -> None:
    """Write a model as self-describing JSON text (floats round-trip exactly)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model.to_json_obj(), fh, indent=2)
        fh.write("\n")


def _schema_from_json(features: Any) -> Schema:
    schema = []
    for entry in features:
        levels = entry.get("levels")
        schema.append(
            (
                str(entry["name"]),
                str(entry["kind"]),
                tuple(str(v) for v in levels) if levels else None,
            )
        )
    return tuple(schema)


def load_model(path: str) -> ReferenceModel:
    """Restore a model written by :func:`save_model`."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"model file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise DataFormatError(f"model file {path!r} is not a {MODEL_FORMAT} document")
    if obj.get("version") != MODEL_VERSION:
        raise DataFormatError(f"unsupported model version {obj.get('version')!r}")
    try:
        schema = _schema_from_json(obj["features"])
        params = obj["parameters"]
        kind = obj["kind"]
        if kind == "linear":
            return LinearModel(schema, params["intercept"], params["coefficients"])
        if kind == "knn":
            train = np.array(
                [
                    [
                        float(v) if schema[j][1] == CONTINUOUS else str(v)
                        for j, v in enumerate(row)
                    ]
                    for row in params["train"]
                ],
                dtype=(float if all(k == CONTINUOUS for _, k, _ in schema) else object),
            )
            return KNNModel(schema, params["k"], train, params["target"])
        if kind == "stump":
            return StumpModel(
                schema,
                params["feature"],
                params["split_kind"],
                params["threshold"],
                params["left_value"],
                params["right_value"],
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"model file {path!r} is malformed: {exc}") from exc
    raise DataFormatError(f"unknown model kind {obj.get('kind')!r}")
