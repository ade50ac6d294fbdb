"""Feature-importance estimators.

Variance-based scores (standard deviation of the partial dependence, and
its conditional-expected-score restatement) and performance-based scores
(permutation importance, per-observation and averaged loss-change curves,
their exhaustive double average, and the Shapley importance with a
loss-based payout).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    LossFunction,
    PredictionCache,
    PredictorHandle,
    estimate_generalization_error,
    intervene_permute,
    intervene_replace,
    make_rng,
    predict_batch,
    spawn_seeds,
)
from .data import CONTINUOUS, Dataset
from .effects import EffectCurve, _grid_prediction_matrix, _replace_record, observed_grid, pd_curve
from .errors import (
    BoxprobeError,
    CapacityError,
    InvalidArgumentError,
    MissingTargetError,
    UndefinedVarianceError,
)
from .shapley import EXACT_FEATURE_CAP, _memoized, exact_shapley_value
from .trace import AGGREGATION, INTERVENTION, StageRecord, StageTrace, assemble_trace

PERTURB_EXHAUSTIVE = "exhaustive"
PERTURB_PERMUTATION = "permutation"


@dataclass(frozen=True)
class ImportanceScore:
    """Scalar importance of one feature, with method/loss tags and seeds."""

    method: str
    feature: int
    value: float
    trace: StageTrace
    loss: str | None = None
    repeats: int | None = None
    seed: int | None = None
    mode: str | None = None

    def __post_init__(self) -> None:
        if self.method in ("pd_sd", "firm") and self.value < 0:
            raise InvalidArgumentError("variance-based importance cannot be negative")


def _sample_sd(values: np.ndarray) -> float:
    """Sample standard deviation; exactly zero for a constant multiset."""
    if len(values) < 2:
        raise UndefinedVarianceError(
            "standard deviation needs at least two values (n = 1 dataset)"
        )
    if np.max(values) == np.min(values):
        return 0.0
    return float(np.std(values, ddof=1))


def _expand_to_observations(xs: tuple, ys: np.ndarray, column: np.ndarray) -> np.ndarray:
    """Map per-grid-point values back onto the n observations (duplicates kept)."""
    if column.dtype == object:
        lookup = {x: y for x, y in zip(xs, ys)}
        return np.array([lookup[v] for v in column], dtype=float)
    idx = np.searchsorted(np.asarray(xs, dtype=float), column)
    return ys[idx]


def _require_numeric_target(data: Dataset) -> np.ndarray:
    if data.target is None:
        raise MissingTargetError("this importance method needs a dataset with targets")
    if data.target.dtype == object:
        raise InvalidArgumentError("loss-based methods need a numeric target")
    return data.target


# ---------------------------------------------------------------------------
# Variance-based importance
# ---------------------------------------------------------------------------


def _pd_spread(curve_xs: tuple, curve_ys: np.ndarray, data: Dataset, j: int) -> float:
    """Importance from a PD-style curve: per-observation sd, or level range / 4."""
    if data.meta[j].kind == CONTINUOUS:
        per_obs = _expand_to_observations(curve_xs, curve_ys, data.column(j))
        return _sample_sd(per_obs)
    return float((np.max(curve_ys) - np.min(curve_ys)) / 4.0)


def pd_importance(
    predictor: PredictorHandle, data: Dataset, feature: int | str, threads: int = 1
) -> ImportanceScore:
    """Spread of the feature's partial dependence.

    Continuous features score the sample standard deviation (n - 1
    denominator) of the PD evaluated at each of the n observed values;
    categorical features score the PD range over all levels divided by 4,
    the usual small-sample stand-in for the standard deviation.
    """
    j = data.feature_index(feature)
    grid = observed_grid(data, j)
    cache = PredictionCache(threads)
    points, preds = _grid_prediction_matrix(predictor, data, [grid], cache)
    pd_values = preds.mean(axis=1)
    xs = tuple(p[0] for p in points)
    value = _pd_spread(xs, pd_values, data, j)
    trace = assemble_trace(
        data.provenance,
        (
            _replace_record(data, [grid], len(points)),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "partial dependence per grid value, then spread across observed values",
                {
                    "spread": "sample sd"
                    if data.meta[j].kind == CONTINUOUS
                    else "range / 4"
                },
            ),
        ),
    )
    return ImportanceScore("pd_sd", j, value, trace)


def ces_curve(
    predictor: PredictorHandle, data: Dataset, feature: int | str, threads: int = 1
) -> EffectCurve:
    """Conditional expected score at each observed value of the feature.

    Identical to the partial dependence over the observed-values grid; the
    output is retagged so downstream consumers see which estimator asked.
    """
    return pd_curve(predictor, data, feature, threads=threads, method_tag="ces")


def firm(
    predictor: PredictorHandle, data: Dataset, feature: int | str, threads: int = 1
) -> ImportanceScore:
    """Importance as the spread of the conditional expected score.

    Must coincide bit-exactly with :func:`pd_importance`; the equality is
    asserted on every call.
    """
    j = data.feature_index(feature)
    curve = ces_curve(predictor, data, j, threads=threads)
    value = _pd_spread(curve.xs, curve.values(), data, j)
    reference = pd_importance(predictor, data, j, threads=threads)
    if value != reference.value:
        raise BoxprobeError(
            "internal error: FIRM diverged from the PD standard deviation"
        )
    trace = StageTrace(
        curve.trace.records
        + (
            StageRecord(
                AGGREGATION,
                "spread of the conditional expected score across observed values",
                {
                    "spread": "sample sd"
                    if data.meta[j].kind == CONTINUOUS
                    else "range / 4"
                },
            ),
        )
    )
    return ImportanceScore("firm", j, value, trace)


# ---------------------------------------------------------------------------
# Loss-change curves and permutation importance
# ---------------------------------------------------------------------------


def _sorted_observed(data: Dataset, j: int) -> np.ndarray:
    # Full observation multiset, duplicates kept: the averages below must
    # weight repeated values by their multiplicity.
    return np.sort(data.column(j), kind="stable")


def ici_curve(
    predictor: PredictorHandle,
    data: Dataset,
    observation: int,
    feature: int | str,
    loss: LossFunction,
    threads: int = 1,
) -> EffectCurve:
    """Loss change for one observation as its feature value is substituted.

    At each observed value ``v`` of the feature (across the whole dataset),
    the curve holds the loss of predicting observation ``i`` with its
    feature replaced by ``v``, minus the loss at its original value.
    """
    target = _require_numeric_target(data)
    j = data.feature_index(feature)
    i = int(observation)
    if not 0 <= i < data.n_rows:
        raise InvalidArgumentError(
            f"observation index {i} out of range for {data.n_rows} rows"
        )
    values = _sorted_observed(data, j)
    cache = PredictionCache(threads)
    single = data.replace_columns({}, row_subset=np.array([i]))
    y_i = target[i : i + 1]
    base = float(loss(predict_batch(predictor, single, cache=cache), y_i)[0])
    ys = []
    for v in values:
        pred = predict_batch(predictor, intervene_replace(single, {j: v}), cache=cache)
        ys.append(float(loss(pred, y_i)[0]) - base)
    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                INTERVENTION,
                "substitute each observed feature value into one observation",
                {"feature": data.meta[j].name, "observation": i, "values": len(values)},
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "loss change against the observation's original prediction",
                {"loss": loss.tag},
            ),
        ),
    )
    return EffectCurve("ici", j, tuple(values), tuple(ys), trace, observation=i)


def _pi_values(
    predictor: PredictorHandle,
    data: Dataset,
    j: int,
    loss: LossFunction,
    cache: PredictionCache,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-substituted-value mean loss change over all observations."""
    target = _require_numeric_target(data)
    values = _sorted_observed(data, j)
    base_losses = loss(predict_batch(predictor, data, cache=cache), target)
    means = np.empty(len(values))
    for l, v in enumerate(values):
        preds = predict_batch(predictor, intervene_replace(data, {j: v}), cache=cache)
        means[l] = np.mean(loss(preds, target) - base_losses)
    return values, means


def pi_curve(
    predictor: PredictorHandle,
    data: Dataset,
    feature: int | str,
    loss: LossFunction,
    threads: int = 1,
) -> EffectCurve:
    """Pointwise mean of all per-observation loss-change curves."""
    j = data.feature_index(feature)
    cache = PredictionCache(threads)
    values, means = _pi_values(predictor, data, j, loss, cache)
    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                INTERVENTION,
                "substitute each observed feature value into every observation",
                {"feature": data.meta[j].name, "values": len(values)},
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "mean loss change over observations at each substituted value",
                {"loss": loss.tag},
            ),
        ),
    )
    return EffectCurve("pi", j, tuple(values), tuple(means), trace)


def pfi_exhaustive(
    predictor: PredictorHandle,
    data: Dataset,
    feature: int | str,
    loss: LossFunction,
    threads: int = 1,
) -> ImportanceScore:
    """Permutation importance by exhaustive substitution (no randomness).

    Double average of the loss change over every (observation, substituted
    value) pair; identical to the mean of the averaged loss-change curve.
    """
    j = data.feature_index(feature)
    cache = PredictionCache(threads)
    values, means = _pi_values(predictor, data, j, loss, cache)
    value = float(np.mean(means))
    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                INTERVENTION,
                "substitute each observed feature value into every observation",
                {"feature": data.meta[j].name, "values": len(values)},
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "double average of loss changes over all value/observation pairs",
                {"loss": loss.tag, "pairs": len(values) * data.n_rows},
            ),
        ),
    )
    return ImportanceScore("pfi_exhaustive", j, value, trace, loss=loss.tag)


def pfi_permutation(
    predictor: PredictorHandle,
    data: Dataset,
    feature: int | str,
    loss: LossFunction,
    repeats: int = 5,
    seed: int = 0,
    threads: int = 1,
) -> ImportanceScore:
    """Permutation importance: loss increase after shuffling the feature.

    Each repeat permutes the column with an independent child seed and
    scores the generalization-error difference against the intact data;
    the result is the mean over repeats (one permutation has high
    variance, hence the default of five).
    """
    _require_numeric_target(data)
    j = data.feature_index(feature)
    repeats = int(repeats)
    if repeats < 1:
        raise InvalidArgumentError(f"repeats must be at least 1, got {repeats}")
    cache = PredictionCache(threads)
    base = estimate_generalization_error(predictor, data, loss, cache=cache)
    child_seeds = spawn_seeds(seed, repeats)
    diffs = np.empty(repeats)
    for r, child in enumerate(child_seeds):
        permuted = intervene_permute(data, j, child)
        diffs[r] = estimate_generalization_error(predictor, permuted, loss, cache=cache) - base
    value = float(np.mean(diffs))
    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                INTERVENTION,
                "permute the feature column once per repeat",
                {"feature": data.meta[j].name, "seed": int(seed), "child_seeds": child_seeds},
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "mean generalization-error increase over repeats",
                {"loss": loss.tag, "repeats": repeats},
            ),
        ),
    )
    return ImportanceScore(
        "pfi_permutation", j, value, trace, loss=loss.tag, repeats=repeats, seed=int(seed)
    )


# ---------------------------------------------------------------------------
# Shapley importance with a loss payout
# ---------------------------------------------------------------------------


def _coalition_seed(seed: int, perturbed: frozenset[int]) -> int:
    entropy = [int(seed)] + sorted(int(t) for t in perturbed)
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])


def _permute_block(data: Dataset, perturbed: Iterable[int], seed: int) -> Dataset:
    """Permute a block of columns jointly with one shared permutation."""
    perm = make_rng(seed).permutation(data.n_rows)
    new_cols = {t: data.column(t)[perm] for t in perturbed}
    record = StageRecord(
        INTERVENTION,
        "permute a feature block jointly",
        {"features": [data.meta[t].name for t in sorted(perturbed)], "seed": int(seed)},
    )
    return data.replace_columns(new_cols, record=record)


def _perturbed_ge(
    predictor: PredictorHandle,
    data: Dataset,
    perturbed: frozenset[int],
    loss: LossFunction,
    mode: str,
    seed: int | None,
    cache: PredictionCache,
) -> float:
    """Generalization error with a feature block decoupled from the rest.

    Exhaustive mode substitutes the block's values from every observation
    in turn and averages over all n^2 (donor, receiver) pairs; permutation
    mode applies one seeded joint permutation of the block.
    """
    target = _require_numeric_target(data)
    if not perturbed:
        return estimate_generalization_error(predictor, data, loss, cache=cache)
    if mode == PERTURB_PERMUTATION:
        shuffled = _permute_block(data, perturbed, _coalition_seed(seed, perturbed))
        return estimate_generalization_error(predictor, shuffled, loss, cache=cache)
    columns = {t: data.column(t) for t in perturbed}
    per_donor = np.empty(data.n_rows)
    for l in range(data.n_rows):
        substituted = intervene_replace(data, {t: columns[t][l] for t in perturbed})
        preds = predict_batch(predictor, substituted, cache=cache)
        per_donor[l] = np.mean(loss(preds, target))
    return float(np.mean(per_donor))


def pfi_payout(
    predictor: PredictorHandle,
    data: Dataset,
    coalition: Iterable[int],
    loss: LossFunction,
    mode: str = PERTURB_EXHAUSTIVE,
    seed: int | None = None,
    cache: PredictionCache | None = None,
) -> float:
    """Loss-based coalition payout for the Shapley importance.

    Knowing a coalition means its features stay intact while everything
    outside is perturbed; the payout is that generalization error minus
    the all-perturbed baseline, so the empty coalition pays exactly zero
    and fully informative coalitions pay negatively (loss saved).
    """
    if mode not in (PERTURB_EXHAUSTIVE, PERTURB_PERMUTATION):
        raise InvalidArgumentError(f"unknown perturbation mode {mode!r}")
    if mode == PERTURB_PERMUTATION and seed is None:
        raise InvalidArgumentError("permutation mode needs a seed")
    _require_numeric_target(data)
    members = frozenset(data.feature_index(k) for k in coalition)
    if not members:
        return 0.0
    cache = cache if cache is not None else PredictionCache()
    everything = frozenset(range(data.n_features))
    kept_out = everything - members
    ge_known = _perturbed_ge(predictor, data, kept_out, loss, mode, seed, cache)
    ge_nothing = _perturbed_ge(predictor, data, everything, loss, mode, seed, cache)
    return ge_known - ge_nothing


def sfimp(
    predictor: PredictorHandle,
    data: Dataset,
    feature: int | str,
    loss: LossFunction,
    mode: str = PERTURB_EXHAUSTIVE,
    seed: int | None = None,
    cap: int = EXACT_FEATURE_CAP,
    threads: int = 1,
) -> ImportanceScore:
    """Shapley importance: exact coalition formula under the loss payout.

    Uses the same factorially weighted enumeration as the effect Shapley
    value, with :func:`pfi_payout` as the characteristic function; the
    per-feature values therefore sum to the full-coalition payout.
    """
    p = data.n_features
    if p > cap:
        raise CapacityError(
            f"exact enumeration over {p} features exceeds the cap of {cap}"
        )
    if mode not in (PERTURB_EXHAUSTIVE, PERTURB_PERMUTATION):
        raise InvalidArgumentError(f"unknown perturbation mode {mode!r}")
    if mode == PERTURB_PERMUTATION and seed is None:
        raise InvalidArgumentError("permutation mode needs a seed")
    _require_numeric_target(data)
    j = data.feature_index(feature)
    cache = PredictionCache(threads)
    everything = frozenset(range(p))
    ge_memo: dict[frozenset[int], float] = {}

    def perturbed_ge(block: frozenset[int]) -> float:
        if block not in ge_memo:
            ge_memo[block] = _perturbed_ge(predictor, data, block, loss, mode, seed, cache)
        return ge_memo[block]

    def payout(coalition: frozenset[int]) -> float:
        if not coalition:
            return 0.0
        return perturbed_ge(everything - coalition) - perturbed_ge(everything)

    value = exact_shapley_value(_memoized(payout), p, j)
    trace = assemble_trace(
        data.provenance,
        (
            StageRecord(
                INTERVENTION,
                "perturb the feature block outside each coalition",
                {"feature": data.meta[j].name, "mode": mode, "coalitions": 2 ** (p - 1)},
            ),
            cache.prediction_record(predictor),
            StageRecord(
                AGGREGATION,
                "factorially weighted average of loss-payout gains "
                "(payout: error with the coalition intact minus error with everything perturbed)",
                {"loss": loss.tag},
            ),
        ),
    )
    return ImportanceScore(
        "sfimp", j, value, trace, loss=loss.tag, seed=seed, mode=mode
    )
