"""Feature-effect estimators.

Individual conditional expectation (ICE) and partial dependence (PD)
curves, first-order accumulated local effects (ALE), marginal effects,
and local surrogate (LIME-style) explanations.  Every estimator here is a
composition of the stage primitives in :mod:`boxprobe.core` and returns a
result carrying its stage trace.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .core import (
    PredictionCache,
    PredictorHandle,
    default_step,
    finite_difference,
    intervene_replace,
    intervene_shift,
    make_rng,
    predict_batch,
)
from .data import CATEGORICAL, CONTINUOUS, Dataset
from .errors import (
    DegenerateBinningError,
    InvalidArgumentError,
    SingularFitError,
    UnsupportedKindError,
)
from .trace import AGGREGATION, INTERVENTION, StageRecord, StageTrace, assemble_trace

OBSERVED_VALUES = "observed_values"
EQUIDISTANT = "equidistant"
CUSTOM = "custom"


@dataclass(frozen=True)
class Grid:
    """Evaluation points for one feature: sorted reals or categorical levels."""

    feature: int
    points: tuple[Any, ...]
    kind: str
    source: str

    def __post_init__(self) -> None:
        if len(self.points) == 0:
            raise InvalidArgumentError("a grid needs at least one point")
        if self.kind == CONTINUOUS:
            values = [float(v) for v in self.points]
            if not all(np.isfinite(values)):
                raise InvalidArgumentError("grid points must be finite")
            if any(a > b for a, b in zip(values, values[1:])):
                raise InvalidArgumentError("continuous grid points must be sorted ascending")
            object.__setattr__(self, "points", tuple(values))
        else:
            object.__setattr__(self, "points", tuple(str(v) for v in self.points))

    def __len__(self) -> int:
        return len(self.points)


def observed_grid(data: Dataset, feature: int | str) -> Grid:
    """Default grid: sorted unique observed values, or all registered levels."""
    j = data.feature_index(feature)
    meta = data.meta[j]
    if meta.kind == CONTINUOUS:
        return Grid(j, tuple(np.unique(data.column(j))), CONTINUOUS, OBSERVED_VALUES)
    return Grid(j, meta.levels, CATEGORICAL, OBSERVED_VALUES)


def equidistant_grid(data: Dataset, feature: int | str, k: int) -> Grid:
    """``k`` equally spaced points spanning the observed range (continuous only)."""
    j = data.feature_index(feature)
    meta = data.meta[j]
    if meta.kind != CONTINUOUS:
        raise UnsupportedKindError(
            f"equidistant grids need a continuous feature, {meta.name!r} is categorical"
        )
    if k < 2:
        raise InvalidArgumentError(f"equidistant grids need k >= 2 points, got {k}")
    lo, hi = meta.observed_range
    return Grid(j, tuple(np.linspace(lo, hi, int(k))), CONTINUOUS, EQUIDISTANT)


def custom_grid(data: Dataset, feature: int | str, values: Sequence[Any]) -> Grid:
    j = data.feature_index(feature)
    meta = data.meta[j]
    points = tuple(data.check_value(j, v) for v in values)
    return Grid(j, points, meta.kind, CUSTOM)


@dataclass(frozen=True)
class EffectCurve:
    """Ordered (grid value, effect value) pairs with a method tag and trace.

    Grid values are strictly increasing for curves built on deduplicated
    grids (ICE/PD/ALE/CES) and non-decreasing for curves indexed by the raw
    observation multiset (ICI/PI keep duplicate observed values so their
    averages match the estimator definitions bit-exactly).
    """

    method: str
    feature: int | tuple[int, ...]
    xs: tuple[Any, ...]
    ys: tuple[float, ...]
    trace: StageTrace
    observation: int | None = None

    def __post_init__(self) -> None:
        if len(self.xs) != len(self.ys):
            raise InvalidArgumentError("curve needs one effect value per grid point")
        if len(self.xs) == 0:
            raise InvalidArgumentError("curve needs at least one point")
        ys = tuple(float(v) for v in self.ys)
        if not all(np.isfinite(ys)):
            raise InvalidArgumentError("effect values must be finite")
        object.__setattr__(self, "ys", ys)
        if isinstance(self.feature, int) and all(
            isinstance(v, (int, float)) for v in self.xs
        ):
            xs = tuple(float(v) for v in self.xs)
            if any(a > b for a, b in zip(xs, xs[1:])):
                raise InvalidArgumentError("grid values must be non-decreasing")
            object.__setattr__(self, "xs", xs)

    @property
    def points(self) -> list[tuple[Any, float]]:
        return list(zip(self.xs, self.ys))

    def values(self) -> np.ndarray:
        return np.asarray(self.ys, dtype=float)


# ---------------------------------------------------------------------------
# ICE and PD
# ---------------------------------------------------------------------------


def _grid_prediction_matrix(
    predictor: PredictorHandle,
    data: Dataset,
    grids: Sequence[Grid],
    cache: PredictionCache,
) -> tuple[list[tuple[Any, ...]], np.ndarray]:
    """Predictions for every grid point: one row per point, one column per observation."""
    points = list(itertools.product(*(g.points for g in grids)))
    features = [g.feature for g in grids]
    rows = []
    for combo in points:
        intervened = intervene_replace(data, dict(zip(features, combo)))
        rows.append(predict_batch(predictor, intervened, cache=cache))
    return points, np.vstack(rows)


def _replace_record(data: Dataset, grids: Sequence[Grid], n_points: int) -> StageRecord:
    return StageRecord(
        INTERVENTION,
        "replace feature columns with each grid value",
        {
            "features": [data.meta[g.feature].name for g in grids],
            "grid_points": n_points,
            "grid_source": [g.source for g in grids],
        },
    )


def _resolve_feature_set(
    data: Dataset,
    features: int | str | Sequence[int | str],
    grid: Grid | Sequence[Grid] | None,
) -> tuple[list[int], list[Grid]]:
    """Normalize a feature-or-set spec plus the matching grids."""
    if isinstance(features, (int, str)):
        feature_list = [data.feature_index(features)]
    else:
        feature_list = [data.feature_index(f) for f in features]
        if len(set(feature_list)) != len(feature_list):
            raise InvalidArgumentError("duplicate features in set")
        if not feature_list:
            raise InvalidArgumentError("feature set must not be empty")
    if grid is None:
        grids = [observed_grid(data, j) for j in feature_list]
    elif isinstance(grid, Grid):
        grids = [grid]
    else:
        grids = list(grid)
    if len(grids) != len(feature_list) or any(
        g.feature != j for g, j in zip(grids, feature_list)
    ):
        raise InvalidArgumentError("need one grid per feature, in order")
    return feature_list, grids


def ice_curves(
    predictor: PredictorHandle,
    data: Dataset,
    features: int | str | Sequence[int | str],
    grid: Grid | Sequence[Grid] | None = None,
    threads: int = 1,
) -> list[EffectCurve]:
    """One individual conditional expectation curve per observation.

    Curve ``i`` holds the prediction for observation ``i`` with the chosen
    feature forced to each grid value in turn; all remaining features stay
    at their observed values.  A feature set evaluates over the Cartesian
    product of the per-feature grids (grid values become tuples).
    """
    feature_list, grids = _resolve_feature_set(data, features, grid)
    cache = PredictionCache(threads)
    points, preds = _grid_prediction_matrix(predictor, data, grids, cache)
    trace = assemble_trace(
        data.provenance,
        (_replace_record(data, grids, len(points)), cache.prediction_record(predictor)),
    )
    if len(feature_list) == 1:
        feature: int | tuple[int, ...] = feature_list[0]
        xs = tuple(p[0] for p in points)
    else:
        feature = tuple(feature_list)
        xs = tuple(points)
    return [
        EffectCurve("ice", feature, xs, tuple(preds[:, i]), trace, observation=i)
        for i in range(data.n_rows)
    ]


def pd_curve(
    predictor: PredictorHandle,
    data: Dataset,
    features: int | str | Sequence[int | str],
    grid: Grid | Sequence[Grid] | None = None,
    threads: int = 1,
    method_tag: str = "pd",
) -> EffectCurve:
    """Partial dependence of the prediction on one feature (or a feature set).

    At each grid point the remaining features are marginalized out by
    averaging predictions over all observed background rows.  With a single
    feature this is the pointwise mean of the ICE curves.  With a feature
    set the curve runs over the Cartesian product of the per-feature grids
    (grid values become tuples); if the set covers every feature there is
    nothing to marginalize and the curve is the prediction itself.
    """
    feature_list, grids = _resolve_feature_set(data, features, grid)
    cache = PredictionCache(threads)
    points, preds = _grid_prediction_matrix(predictor, data, grids, cache)
    ys = preds.mean(axis=1)
    trace = assemble_trace(
        data.provenance,
        (
            _replace_record(data, grids, len(points)),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "mean prediction over background rows at each grid point",
                {"background_rows": data.n_rows},
            ),
        ),
    )
    if len(feature_list) == 1:
        xs = tuple(p[0] for p in points)
        return EffectCurve(method_tag, feature_list[0], xs, tuple(ys), trace)
    return EffectCurve(method_tag, tuple(feature_list), tuple(points), tuple(ys), trace)


# ---------------------------------------------------------------------------
# Accumulated local effects
# ---------------------------------------------------------------------------


def _ale_bins(column: np.ndarray, num_intervals: int) -> tuple[np.ndarray, np.ndarray]:
    """Quantile interval edges plus per-observation interval assignment.

    Duplicate quantile edges collapse; an interval left empty by the
    interpolated quantiles is merged with its left neighbour (the leftmost
    merges right) until every interval holds at least one observation.
    """
    edges = np.unique(np.quantile(column, np.linspace(0.0, 1.0, num_intervals + 1)))
    if len(edges) < 2:
        raise DegenerateBinningError(
            "feature has a single distinct value; no intervals can be formed"
        )

    def assign(e: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(e, column, side="left") - 1, 0, len(e) - 2)

    idx = assign(edges)
    for _ in range(len(edges)):
        counts = np.bincount(idx, minlength=len(edges) - 1)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return edges, idx
        k = int(empty[0])
        edges = np.delete(edges, k if k > 0 else 1)
        if len(edges) < 2:
            raise DegenerateBinningError("interval merging collapsed to a single edge")
        idx = assign(edges)
    raise DegenerateBinningError("interval still empty after merging")


def ale_first_order(
    predictor: PredictorHandle,
    data: Dataset,
    feature: int | str,
    num_intervals: int,
    threads: int = 1,
) -> EffectCurve:
    """First-order accumulated local effects curve.

    The observed range of the feature is split into quantile intervals.
    For each observation the feature is substituted by its interval's right
    and left boundary and the prediction difference taken; these finite
    differences are averaged per interval (local effects), accumulated
    across intervals, and centered by the data-weighted mean of the
    accumulated curve (each observation contributing the accumulated value
    at its interval's right boundary).  Returns one point per interval
    boundary, so ``num_intervals`` intervals yield ``num_intervals + 1``
    curve points (fewer if degenerate intervals were merged).
    """
    j = data.feature_index(feature)
    meta = data.meta[j]
    if meta.kind != CONTINUOUS:
        raise UnsupportedKindError(f"ALE needs a continuous feature, {meta.name!r} is categorical")
    if int(num_intervals) < 1:
        raise InvalidArgumentError(f"num_intervals must be at least 1, got {num_intervals}")
    column = data.column(j)
    edges, idx = _ale_bins(column, int(num_intervals))
    n_int = len(edges) - 1

    cache = PredictionCache(threads)
    local_effects = np.empty(n_int)
    counts = np.empty(n_int, dtype=int)
    for k in range(n_int):
        members = np.flatnonzero(idx == k)
        counts[k] = members.size
        subset = data.replace_columns({}, row_subset=members)
        upper = predict_batch(predictor, intervene_replace(subset, {j: edges[k + 1]}), cache=cache)
        lower = predict_batch(predictor, intervene_replace(subset, {j: edges[k]}), cache=cache)
        local_effects[k] = np.mean(upper - lower)

    accumulated = np.cumsum(local_effects)
    center = float(np.sum(accumulated * counts) / data.n_rows)
    ys = np.concatenate(([0.0], accumulated)) - center

    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                INTERVENTION,
                "substitute interval boundaries for each observation's feature value",
                {"feature": meta.name, "intervals": n_int, "edges": [float(e) for e in edges]},
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "average finite differences per interval, accumulate, center by data-weighted mean",
                {"interval_counts": [int(c) for c in counts]},
            ),
        ),
    )
    return EffectCurve("ale", j, tuple(float(e) for e in edges), tuple(ys), trace)


# ---------------------------------------------------------------------------
# Marginal effects
# ---------------------------------------------------------------------------


def marginal_effect(
    predictor: PredictorHandle,
    x: Sequence[Any],
    feature: int,
    h: float,
    cache: PredictionCache | None = None,
) -> float:
    """Symmetric difference quotient of the prediction at one point."""
    _, quotient = finite_difference(predictor, x, feature, h, cache=cache)
    return quotient


def average_marginal_effect(
    predictor: PredictorHandle,
    data: Dataset,
    feature: int | str,
    h: float | None = None,
    threads: int = 1,
) -> float:
    """Mean symmetric difference quotient over all observed rows."""
    j = data.feature_index(feature)
    if data.meta[j].kind != CONTINUOUS:
        raise UnsupportedKindError(
            f"marginal effects need a continuous feature, {data.meta[j].name!r} is categorical"
        )
    if h is None:
        h = default_step(data, j)
    h = float(h)
    if not (h > 0) or not np.isfinite(h):
        raise InvalidArgumentError(f"step h must be positive and finite, got {h}")
    cache = PredictionCache(threads)
    upper = predict_batch(predictor, intervene_shift(data, j, h), cache=cache)
    lower = predict_batch(predictor, intervene_shift(data, j, -h), cache=cache)
    return float(np.mean((upper - lower) / (2.0 * h)))


# ---------------------------------------------------------------------------
# Local surrogate (LIME)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimeExplanation:
    """Weighted linear surrogate fitted around one explained point."""

    x: tuple[Any, ...]
    feature: int
    intercept: float
    slope: float
    kernel_width: float
    perturbation_sd: float
    num_samples: int
    seed: int
    trace: StageTrace

    def __post_init__(self) -> None:
        if not np.isfinite(self.slope) or not np.isfinite(self.intercept):
            raise SingularFitError("surrogate fit produced non-finite coefficients")


def lime_explain(
    predictor: PredictorHandle,
    data: Dataset,
    x: Sequence[Any],
    feature: int | str,
    num_samples: int = 100,
    kernel_width: float | None = None,
    seed: int = 0,
    threads: int = 1,
) -> LimeExplanation:
    """Fit a proximity-weighted line to predictions around ``x``.

    The explained feature is perturbed with Gaussian noise (sd = sample sd
    of the feature column) while all other features stay fixed at their
    values in ``x``; predictions are weighted by ``exp(-d^2 / width^2)`` in
    the distance ``d`` to the original value and a weighted least-squares
    line is fitted through them.  The default kernel width is 0.75 times
    the column's sample sd.  Exact for affine predictors under any
    positive weights.
    """
    j = data.feature_index(feature)
    meta = data.meta[j]
    if meta.kind != CONTINUOUS:
        raise UnsupportedKindError(
            f"the linear surrogate needs a continuous feature, {meta.name!r} is categorical"
        )
    num_samples = int(num_samples)
    if num_samples < 3:
        raise InvalidArgumentError(f"num_samples must be at least 3, got {num_samples}")
    x = data.check_vector(x)
    center = float(x[j])

    column = data.column(j)
    sd = float(np.std(column, ddof=1)) if len(column) > 1 else 0.0
    if sd == 0.0:
        raise SingularFitError(
            f"feature {meta.name!r} has zero sample sd; perturbed values would all coincide"
        )
    if kernel_width is None:
        kernel_width = 0.75 * sd
    kernel_width = float(kernel_width)
    if not (kernel_width > 0):
        raise InvalidArgumentError(f"kernel width must be positive, got {kernel_width}")

    rng = make_rng(seed)
    perturbed = center + sd * rng.standard_normal(num_samples)
    numeric = all(isinstance(v, float) for v in x)
    matrix = np.array([list(x)] * num_samples, dtype=(float if numeric else object))
    matrix[:, j] = perturbed

    cache = PredictionCache(threads)
    preds = cache.predict(predictor, matrix)
    weights = np.exp(-((perturbed - center) ** 2) / kernel_width**2)

    if np.unique(perturbed).size < 2:
        raise SingularFitError("all perturbed values coincide; surrogate line is undetermined")
    sw = np.sqrt(weights)
    design = np.column_stack((np.ones(num_samples), perturbed)) * sw[:, None]
    coef, _, rank, _ = np.linalg.lstsq(design, preds * sw, rcond=None)
    if rank < 2:
        raise SingularFitError("weighted design is rank deficient")

    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                INTERVENTION,
                "perturb the explained feature with Gaussian noise around its value",
                {
                    "feature": meta.name,
                    "num_samples": num_samples,
                    "perturbation_sd": sd,
                    "seed": int(seed),
                },
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "proximity-weighted least-squares line through the predictions",
                {"kernel_width": kernel_width},
            ),
        ),
    )
    return LimeExplanation(
        x=x,
        feature=j,
        intercept=float(coef[0]),
        slope=float(coef[1]),
        kernel_width=kernel_width,
        perturbation_sd=sd,
        num_samples=num_samples,
        seed=int(seed),
        trace=trace,
    )
