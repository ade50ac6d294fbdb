"""Shapley values for single predictions.

The payout of a feature coalition is the partial-dependence value of the
explained point at the coalition's features, shifted by the mean prediction
so the empty coalition pays exactly zero.  Feature contributions are the
factorially weighted average payout gains over all coalitions (exact mode)
or a permutation-sampling estimate (Monte Carlo mode).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .core import (
    PredictionCache,
    PredictorHandle,
    intervene_replace,
    make_rng,
    predict_batch,
)
from .data import Dataset
from .errors import CapacityError, InvalidArgumentError
from .trace import AGGREGATION, INTERVENTION, SAMPLING, StageRecord, StageTrace, assemble_trace

EXACT_FEATURE_CAP = 12


@dataclass(frozen=True)
class ShapleyExplanation:
    """Contribution of one feature to the prediction at one explained point."""

    x: tuple[Any, ...]
    feature: int
    value: float
    full_coalition_payout: float
    mode: str
    trace: StageTrace
    iterations: int | None = None
    seed: int | None = None
    standard_error: float | None = None


def coalition_weight(coalition_size: int, n_features: int) -> float:
    """Weight of one coalition in the exact value: |K|! (p - |K| - 1)! / p!."""
    return (
        math.factorial(coalition_size)
        * math.factorial(n_features - coalition_size - 1)
        / math.factorial(n_features)
    )


def exact_shapley_value(
    payout: Callable[[frozenset[int]], float], n_features: int, feature: int
) -> float:
    """Exact value of ``feature`` under an arbitrary coalition payout function.

    Enumerates every coalition not containing the feature and sums the
    factorially weighted marginal payout gains.  Shared by the effect-based
    and the performance-based (loss payout) Shapley computations.
    """
    others = [k for k in range(n_features) if k != feature]
    total = 0.0
    for size in range(n_features):
        weight = coalition_weight(size, n_features)
        for combo in itertools.combinations(others, size):
            coalition = frozenset(combo)
            total += weight * (payout(coalition | {feature}) - payout(coalition))
    return total


def _memoized(payout: Callable[[frozenset[int]], float]) -> Callable[[frozenset[int]], float]:
    store: dict[frozenset[int], float] = {}

    def wrapped(coalition: frozenset[int]) -> float:
        if coalition not in store:
            store[coalition] = payout(coalition)
        return store[coalition]

    return wrapped


def pd_payout(
    predictor: PredictorHandle,
    data: Dataset,
    x: Sequence[Any],
    coalition: Iterable[int],
    cache: PredictionCache | None = None,
) -> float:
    """Coalition payout: partial dependence at ``x_K`` minus the mean prediction.

    The empty coalition pays exactly zero by construction.
    """
    x = data.check_vector(x)
    members = sorted({data.feature_index(k) for k in coalition})
    if not members:
        return 0.0
    cache = cache if cache is not None else PredictionCache()
    intervened = intervene_replace(data, {j: x[j] for j in members})
    pd_value = float(np.mean(predict_batch(predictor, intervened, cache=cache)))
    baseline = float(np.mean(predict_batch(predictor, data, cache=cache)))
    return pd_value - baseline


def shapley_exact(
    predictor: PredictorHandle,
    data: Dataset,
    x: Sequence[Any],
    feature: int | str,
    cap: int = EXACT_FEATURE_CAP,
    threads: int = 1,
) -> ShapleyExplanation:
    """Exact Shapley value of one feature at the explained point ``x``.

    Enumerates all 2^(p-1) coalitions of the remaining features, so the
    feature count is capped (default 12); beyond the cap use
    :func:`shapley_mc`.
    """
    p = data.n_features
    if p > cap:
        raise CapacityError(
            f"exact enumeration over {p} features exceeds the cap of {cap}; "
            "use the Monte Carlo estimator instead"
        )
    j = data.feature_index(feature)
    x = data.check_vector(x)
    cache = PredictionCache(threads)
    payout = _memoized(lambda k: pd_payout(predictor, data, x, k, cache=cache))
    value = exact_shapley_value(payout, p, j)
    full = payout(frozenset(range(p)))
    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                INTERVENTION,
                "replace coalition columns with the explained point's values, all coalitions",
                {"feature": data.meta[j].name, "coalitions": 2 ** (p - 1)},
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "factorially weighted average of marginal payout gains",
                {"payout": "mean-shifted partial dependence"},
            ),
        ),
    )
    return ShapleyExplanation(
        x=x,
        feature=j,
        value=value,
        full_coalition_payout=full,
        mode="exact",
        trace=trace,
    )


def shapley_mc(
    predictor: PredictorHandle,
    data: Dataset,
    x: Sequence[Any],
    feature: int | str,
    iterations: int,
    seed: int,
    threads: int = 1,
) -> ShapleyExplanation:
    """Monte Carlo Shapley value via permutation sampling.

    Each iteration draws a uniformly random feature ordering and one
    background observation ``z``; features up to and including the explained
    feature (in that ordering) take their values from ``x``, the rest from
    ``z``, and the contribution is the prediction difference between the
    composition with and without the explained feature.  The estimate is
    the mean contribution over all iterations; with at least two iterations
    its sampling standard error is reported alongside.
    """
    iterations = int(iterations)
    if iterations < 1:
        raise InvalidArgumentError(f"iterations must be at least 1, got {iterations}")
    j = data.feature_index(feature)
    x = data.check_vector(x)
    p = data.n_features
    n = data.n_rows
    matrix = data.matrix()

    rng = make_rng(seed)
    numeric = matrix.dtype != object
    rows = np.empty((2 * iterations, p), dtype=(float if numeric else object))
    for it in range(iterations):
        order = rng.permutation(p)
        z = matrix[int(rng.integers(n))]
        position = int(np.flatnonzero(order == j)[0])
        from_x = set(int(k) for k in order[: position + 1])
        plus = [x[k] if k in from_x else z[k] for k in range(p)]
        minus = [x[k] if (k in from_x and k != j) else z[k] for k in range(p)]
        rows[2 * it] = plus
        rows[2 * it + 1] = minus

    cache = PredictionCache(threads)
    preds = cache.predict(predictor, rows)
    contributions = preds[0::2] - preds[1::2]
    value = float(np.mean(contributions))
    se = (
        float(np.std(contributions, ddof=1) / math.sqrt(iterations))
        if iterations > 1
        else None
    )
    full = pd_payout(predictor, data, x, range(p), cache=cache)

    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                SAMPLING,
                "draw a feature ordering and one background observation per iteration",
                {"iterations": iterations, "seed": int(seed)},
            ),
            StageRecord(
                INTERVENTION,
                "compose coalition rows from the explained point and the background draw",
                {"feature": data.meta[j].name},
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "mean marginal contribution over iterations",
                {"iterations": iterations},
            ),
        ),
    )
    return ShapleyExplanation(
        x=x,
        feature=j,
        value=value,
        full_coalition_payout=full,
        mode="monte_carlo",
        trace=trace,
        iterations=iterations,
        seed=int(seed),
        standard_error=se,
    )
