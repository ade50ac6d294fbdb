"""Black-box predictor boundary and the four stage primitives.

Everything in this package composes four primitives over immutable data:
draw a subset of observations (sampling), manipulate feature columns
(intervention), run the black box (prediction), and reduce predictions to
effect or importance estimates (aggregation).

Reproducibility contract
------------------------
All randomness flows through :func:`make_rng`, a PCG64 generator seeded
explicitly; identical (input, seed) pairs give bit-identical results on any
platform.  Batch prediction may be split across worker threads, but chunks
are concatenated in row order and every aggregation runs over the fully
assembled vector, so thread count never changes a result.
"""

from __future__ import annotations

import hashlib
import pickle
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from numbers import Real
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .data import CONTINUOUS, Dataset
from .errors import (
    InvalidArgumentError,
    MissingTargetError,
    ShapeError,
    UnsupportedKindError,
)
from .trace import INTERVENTION, PREDICTION, SAMPLING, StageRecord

DEFAULT_STEP_FRACTION = 1e-4


def make_rng(seed: int) -> np.random.Generator:
    """The package-wide random generator: PCG64 under an explicit seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Derive ``count`` independent child seeds from one master seed."""
    state = np.random.SeedSequence(int(seed)).generate_state(count, dtype=np.uint32)
    return [int(s) for s in state]


# ---------------------------------------------------------------------------
# Predictor boundary
# ---------------------------------------------------------------------------


class PredictorHandle:
    """Opaque deterministic batch predictor.

    Wraps a callable mapping an (m x p) feature matrix to a length-m vector
    of real predictions.  The callable must be deterministic and row-wise
    (each output depends only on its own input row); both properties are
    what make caching and chunked evaluation transparent.
    """

    def __init__(self, fn: Callable[[np.ndarray], Any], n_features: int, name: str = "predictor"):
        self._fn = fn
        self.n_features = int(n_features)
        self.name = str(name)
        if self.n_features < 1:
            raise InvalidArgumentError("a predictor needs at least one feature")

    def _predict(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(self._fn(matrix), dtype=float)

    def __call__(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise ShapeError(f"expected a 2-D feature matrix, got ndim={matrix.ndim}")
        if matrix.shape[1] != self.n_features:
            raise ShapeError(
                f"predictor {self.name!r} expects {self.n_features} features, "
                f"got {matrix.shape[1]}"
            )
        out = self._predict(matrix)
        out = np.asarray(out, dtype=float).reshape(-1)
        if out.shape[0] != matrix.shape[0]:
            raise ShapeError(
                f"predictor {self.name!r} returned {out.shape[0]} predictions "
                f"for {matrix.shape[0]} rows"
            )
        if not np.all(np.isfinite(out)):
            raise InvalidArgumentError(
                f"predictor {self.name!r} returned non-finite predictions"
            )
        return out


def _matrix_key(matrix: np.ndarray) -> bytes:
    if matrix.dtype == object:
        payload = pickle.dumps(matrix.tolist(), protocol=4)
    else:
        payload = np.ascontiguousarray(matrix).tobytes()
    digest = hashlib.blake2b(payload, digest_size=16)
    digest.update(repr(matrix.shape).encode())
    digest.update(matrix.dtype.str.encode())
    return digest.digest()


class PredictionCache:
    """Memoizes batch predictions within one method run.

    Keyed by a hash of the intervened matrix; valid because predictors are
    pure.  Also tracks how many logical batches/rows were requested, which
    feeds the prediction stage record (cache hits still count: they stand
    for evaluations the method semantically performed).
    """

    def __init__(self, threads: int = 1):
        if threads < 1:
            raise InvalidArgumentError("threads must be at least 1")
        self.threads = int(threads)
        self._store: dict[bytes, np.ndarray] = {}
        self.batches = 0
        self.rows = 0

    def predict(self, predictor: PredictorHandle, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix)
        self.batches += 1
        self.rows += matrix.shape[0]
        key = _matrix_key(matrix)
        hit = self._store.get(key)
        if hit is None:
            hit = _run_predictor(predictor, matrix, self.threads)
            hit.flags.writeable = False
            self._store[key] = hit
        return hit

    def prediction_record(self, predictor: PredictorHandle) -> StageRecord:
        return StageRecord(
            PREDICTION,
            "batch predictions from the black-box model",
            {"predictor": predictor.name, "batches": self.batches, "rows": self.rows},
        )


def _run_predictor(predictor: PredictorHandle, matrix: np.ndarray, threads: int) -> np.ndarray:
    m = matrix.shape[0]
    if threads <= 1 or m < 2 * threads:
        return predictor(matrix)
    # Contiguous chunks, concatenated in order: identical to one full call
    # for row-wise predictors, regardless of thread count.
    bounds = np.linspace(0, m, threads + 1).astype(int)
    chunks = [matrix[a:b] for a, b in zip(bounds, bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(predictor, chunks))
    return np.concatenate(parts)


def predict_batch(
    predictor: PredictorHandle,
    data: Dataset,
    cache: PredictionCache | None = None,
) -> np.ndarray:
    """Predict on a dataset; pure pass-through to the black box."""
    matrix = data.matrix()
    if matrix.shape[1] != predictor.n_features:
        raise ShapeError(
            f"dataset has {matrix.shape[1]} features but predictor "
            f"{predictor.name!r} expects {predictor.n_features}"
        )
    if cache is not None:
        return cache.predict(predictor, matrix)
    return _run_predictor(predictor, matrix, 1)


# ---------------------------------------------------------------------------
# Loss functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossFunction:
    """Pointwise loss with a stable tag; vectorized over prediction/target pairs."""

    tag: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
        out = np.asarray(self.fn(np.asarray(predictions, dtype=float), targets), dtype=float)
        if np.any(out < 0):
            raise InvalidArgumentError(f"loss {self.tag!r} produced negative values")
        return out


def squared_loss() -> LossFunction:
    return LossFunction("squared", lambda p, y: (p - np.asarray(y, dtype=float)) ** 2)


def absolute_loss() -> LossFunction:
    return LossFunction("absolute", lambda p, y: np.abs(p - np.asarray(y, dtype=float)))


def zero_one_loss(threshold: float = 0.5) -> LossFunction:
    """Misclassification loss: predictions above ``threshold`` mean class 1.

    Targets must be numeric 0/1 values.
    """

    def fn(p: np.ndarray, y: np.ndarray) -> np.ndarray:
        labels = (p > threshold).astype(float)
        return (labels != np.asarray(y, dtype=float)).astype(float)

    return LossFunction("zero_one", fn)


_LOSSES = {
    "squared": squared_loss,
    "absolute": absolute_loss,
    "zero_one": zero_one_loss,
}


def loss_by_name(name: str, threshold: float = 0.5) -> LossFunction:
    if name not in _LOSSES:
        raise InvalidArgumentError(
            f"unknown loss {name!r}; expected one of {sorted(_LOSSES)}"
        )
    if name == "zero_one":
        return zero_one_loss(threshold)
    return _LOSSES[name]()


# ---------------------------------------------------------------------------
# Sampling stage
# ---------------------------------------------------------------------------


def sample_observations(data: Dataset, m: int, seed: int) -> Dataset:
    """Draw ``m`` observations uniformly without replacement."""
    m = int(m)
    n = data.n_rows
    if m < 1:
        raise InvalidArgumentError(f"m must be at least 1, got {m}")
    if m > n:
        raise InvalidArgumentError(f"m exceeds n: requested {m} of {n} observations")
    idx = make_rng(seed).choice(n, size=m, replace=False)
    record = StageRecord(
        SAMPLING,
        "uniform subsample without replacement",
        {"m": m, "n": n, "seed": int(seed)},
    )
    return data.replace_columns({}, record=record, row_subset=idx)


# ---------------------------------------------------------------------------
# Intervention stage
# ---------------------------------------------------------------------------


def intervene_replace(data: Dataset, values: Mapping[int | str, Any]) -> Dataset:
    """Set the given feature columns to constant values.

    ``values`` maps feature index or name to the replacement value.  An
    empty mapping is the identity and returns the dataset unchanged.
    """
    if not values:
        return data
    resolved: dict[int, Any] = {}
    for feature, value in values.items():
        j = data.feature_index(feature)
        if j in resolved:
            raise InvalidArgumentError(f"feature {feature!r} replaced twice")
        resolved[j] = data.check_value(j, value)
    n = data.n_rows
    new_cols = {
        j: np.full(n, v, dtype=(float if isinstance(v, float) else object))
        for j, v in resolved.items()
    }
    record = StageRecord(
        INTERVENTION,
        "replace feature columns with fixed values",
        {
            "features": [data.meta[j].name for j in sorted(resolved)],
            "values": [resolved[j] for j in sorted(resolved)],
        },
    )
    return data.replace_columns(new_cols, record=record)


def intervene_permute(data: Dataset, feature: int | str, seed: int) -> Dataset:
    """Permute one feature column uniformly at random (other columns untouched)."""
    j = data.feature_index(feature)
    perm = make_rng(seed).permutation(data.n_rows)
    record = StageRecord(
        INTERVENTION,
        "permute feature column",
        {"feature": data.meta[j].name, "seed": int(seed)},
    )
    return data.replace_columns({j: data.column(j)[perm]}, record=record)


def intervene_shift(data: Dataset, feature: int | str, delta: float) -> Dataset:
    """Shift a continuous feature column by ``delta``.

    Shifted values may leave the observed range; that extrapolation is
    exactly what finite-difference methods require.
    """
    j = data.feature_index(feature)
    meta = data.meta[j]
    if meta.kind != CONTINUOUS:
        raise UnsupportedKindError(
            f"cannot shift categorical feature {meta.name!r}"
        )
    delta = float(delta)
    if not np.isfinite(delta):
        raise InvalidArgumentError("shift delta must be finite")
    record = StageRecord(
        INTERVENTION,
        "shift feature column",
        {"feature": meta.name, "delta": delta},
    )
    return data.replace_columns({j: data.column(j) + delta}, record=record)


# ---------------------------------------------------------------------------
# Finite differences and the error estimate
# ---------------------------------------------------------------------------


def default_step(data: Dataset, feature: int | str, fraction: float = DEFAULT_STEP_FRACTION) -> float:
    """Default finite-difference step: ``fraction`` of the observed range.

    Scale-invariant and far from float64 cancellation at tabular-data
    ranges.  A zero range (constant column) falls back to the larger of
    the column magnitude and 1.
    """
    j = data.feature_index(feature)
    meta = data.meta[j]
    if meta.kind != CONTINUOUS:
        raise UnsupportedKindError(
            f"feature {meta.name!r} is categorical; finite differences need a continuous feature"
        )
    lo, hi = meta.observed_range  # always present for continuous columns
    span = hi - lo
    scale = span if span > 0 else max(abs(hi), 1.0)
    return fraction * scale


def finite_difference(
    predictor: PredictorHandle,
    x: Sequence[Any],
    feature: int,
    h: float,
    cache: PredictionCache | None = None,
) -> tuple[float, float]:
    """Symmetric finite difference of predictions at ``x`` along one feature.

    Returns ``(fd, quotient)`` where ``fd = f(x_j + h, rest) - f(x_j - h, rest)``
    and ``quotient = fd / (2 h)`` approximates the partial derivative.
    """
    h = float(h)
    if not (h > 0) or not np.isfinite(h):
        raise InvalidArgumentError(f"step h must be positive and finite, got {h}")
    x = list(x)
    if predictor.n_features != len(x):
        raise ShapeError(
            f"feature vector has {len(x)} entries, predictor expects {predictor.n_features}"
        )
    j = int(feature)
    if not 0 <= j < len(x):
        raise InvalidArgumentError(f"feature index {j} out of range")
    center = x[j]
    if not isinstance(center, (Real, np.floating, np.integer)) or isinstance(center, bool):
        raise UnsupportedKindError(
            f"finite differences need a continuous feature; got {center!r} at index {j}"
        )
    numeric = all(isinstance(v, (Real, np.floating, np.integer)) and not isinstance(v, bool) for v in x)
    matrix = np.array([x, x], dtype=(float if numeric else object))
    matrix[0, j] = float(center) + h
    matrix[1, j] = float(center) - h
    if cache is not None:
        preds = cache.predict(predictor, matrix)
    else:
        preds = predictor(matrix)
    fd = float(preds[0] - preds[1])
    return fd, fd / (2.0 * h)


def estimate_generalization_error(
    predictor: PredictorHandle,
    data: Dataset,
    loss: LossFunction,
    cache: PredictionCache | None = None,
) -> float:
    """Average loss of the predictor on the dataset's observed targets."""
    if data.target is None:
        raise MissingTargetError("generalization error needs a dataset with targets")
    preds = predict_batch(predictor, data, cache=cache)
    return float(np.mean(loss(preds, data.target)))
