"""Shapley values: payout construction, exact enumeration, Monte Carlo."""

import itertools
import math

import numpy as np
import pytest

from boxprobe import pd_payout, shapley_exact, shapley_mc
from boxprobe.errors import CapacityError, InvalidArgumentError

from conftest import columns_dataset, constant_predictor, handle


def payout_oracle(scalar_fn, matrix, x, coalition):
    """Mean-shifted partial dependence computed with plain loops."""
    if not coalition:
        return 0.0
    pd_total, base_total = 0.0, 0.0
    for row in matrix:
        r = list(row)
        for k in coalition:
            r[k] = x[k]
        pd_total += scalar_fn(r)
        base_total += scalar_fn(list(row))
    return (pd_total - base_total) / len(matrix)


def orderings_oracle(scalar_fn, matrix, x, j, p):
    """Average marginal payout gain over all p! feature orderings."""
    memo = {}

    def payout(coalition):
        key = frozenset(coalition)
        if key not in memo:
            memo[key] = payout_oracle(scalar_fn, matrix, x, key)
        return memo[key]

    total = 0.0
    for order in itertools.permutations(range(p)):
        pos = order.index(j)
        before = frozenset(order[:pos])
        total += payout(before | {j}) - payout(before)
    return total / math.factorial(p)


# -- payout ---------------------------------------------------------------------


def test_payout_empty_coalition_pays_exactly_zero(two_feature_data, sum_predictor):
    assert pd_payout(sum_predictor, two_feature_data, (1.0, 2.0), []) == 0.0


def test_payout_full_coalition_hand_example(sum_predictor):
    data = columns_dataset(x1=[0.0, 2.0], x2=[0.0, 4.0])
    value = pd_payout(sum_predictor, data, (2.0, 4.0), [0, 1])
    assert value == 6.0 - 3.0
    assert value == payout_oracle(lambda r: r[0] + r[1], data.matrix().tolist(), (2.0, 4.0), {0, 1})


def test_payout_constant_predictor_zero(two_feature_data):
    predictor = constant_predictor(7.0, 2)
    for coalition in ([], [0], [1], [0, 1]):
        assert pd_payout(predictor, two_feature_data, (1.0, 2.0), coalition) == 0.0


# -- exact ------------------------------------------------------------------------


def test_exact_constant_predictor_zero(two_feature_data):
    predictor = constant_predictor(3.0, 2)
    for j in (0, 1):
        assert shapley_exact(predictor, two_feature_data, (1.0, 2.0), j).value == 0.0


def test_exact_hand_example(sum_predictor):
    data = columns_dataset(x1=[0.0, 2.0], x2=[0.0, 4.0])
    phi1 = shapley_exact(sum_predictor, data, (2.0, 4.0), 0)
    phi2 = shapley_exact(sum_predictor, data, (2.0, 4.0), 1)
    assert abs(phi1.value - 1.0) < 1e-12
    assert abs(phi2.value - 2.0) < 1e-12
    assert abs(phi1.value + phi2.value - phi1.full_coalition_payout) < 1e-12
    assert phi1.full_coalition_payout == 3.0
    assert phi1.mode == "exact"


def test_exact_dummy_feature_is_exactly_zero():
    data = columns_dataset(x1=[0.0, 1.0, 2.0], x2=[5.0, 6.0, 7.0])
    only_x1 = handle(lambda X: 3.0 * np.asarray(X, dtype=float)[:, 0], 2)
    assert shapley_exact(only_x1, data, (1.5, 6.0), 1).value == 0.0


def test_exact_symmetry():
    data = columns_dataset(x1=[0.0, 1.0, 3.0], x2=[0.0, 1.0, 3.0])
    product = handle(
        lambda X: np.asarray(X, dtype=float)[:, 0] * np.asarray(X, dtype=float)[:, 1], 2
    )
    a = shapley_exact(product, data, (2.0, 2.0), 0).value
    b = shapley_exact(product, data, (2.0, 2.0), 1).value
    assert abs(a - b) < 1e-10


def test_exact_additive_closed_form():
    rng = np.random.default_rng(13)
    cols = {f"x{j}": rng.normal(size=10) for j in (1, 2, 3)}
    data = columns_dataset(**cols)
    parts = [lambda v: v**2, lambda v: np.sin(v), lambda v: 3.0 * v]

    def fn(X):
        X = np.asarray(X, dtype=float)
        return parts[0](X[:, 0]) + parts[1](X[:, 1]) + parts[2](X[:, 2])

    predictor = handle(fn, 3)
    x = tuple(float(data.column(j)[0]) for j in range(3))
    for j in range(3):
        expected = parts[j](x[j]) - np.mean(parts[j](data.column(j)))
        assert abs(shapley_exact(predictor, data, x, j).value - expected) < 1e-10


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_exact_equals_all_orderings_brute_force(p):
    rng = np.random.default_rng(100 + p)
    cols = {f"x{j}": rng.normal(size=7) for j in range(p)}
    data = columns_dataset(**cols)

    def scalar_fn(r):
        value = r[0] * r[1 % p] + sum((k + 1) * r[k] ** 2 for k in range(p))
        return float(value)

    predictor = handle(
        lambda X: np.array([scalar_fn(list(row)) for row in np.asarray(X, dtype=float)]), p
    )
    x = tuple(float(v) for v in rng.normal(size=p))
    matrix = data.matrix().tolist()
    for j in range(p):
        oracle = orderings_oracle(scalar_fn, matrix, x, j, p)
        assert abs(shapley_exact(predictor, data, x, j).value - oracle) < 1e-10


def test_exact_capacity_error_points_to_monte_carlo(two_feature_data, sum_predictor):
    with pytest.raises(CapacityError, match="Monte Carlo"):
        shapley_exact(sum_predictor, two_feature_data, (1.0, 2.0), 0, cap=1)


# -- Monte Carlo -------------------------------------------------------------------


def test_mc_constant_predictor_zero(two_feature_data):
    predictor = constant_predictor(2.0, 2)
    result = shapley_mc(predictor, two_feature_data, (1.0, 2.0), 0, iterations=50, seed=4)
    assert result.value == 0.0
    assert result.mode == "monte_carlo"
    assert result.iterations == 50 and result.seed == 4


def test_mc_within_three_standard_errors_of_exact(sum_predictor):
    data = columns_dataset(x1=[0.0, 2.0], x2=[0.0, 4.0])
    exact = shapley_exact(sum_predictor, data, (2.0, 4.0), 0).value
    result = shapley_mc(sum_predictor, data, (2.0, 4.0), 0, iterations=2000, seed=8)
    assert result.standard_error is not None and result.standard_error > 0
    assert abs(result.value - exact) < 3 * result.standard_error


def test_mc_deterministic_given_seed(two_feature_data, sum_predictor):
    a = shapley_mc(sum_predictor, two_feature_data, (1.0, 2.0), 0, iterations=200, seed=6)
    b = shapley_mc(sum_predictor, two_feature_data, (1.0, 2.0), 0, iterations=200, seed=6)
    assert a.value == b.value
    assert a.standard_error == b.standard_error


def test_mc_rejects_zero_iterations(two_feature_data, sum_predictor):
    with pytest.raises(InvalidArgumentError):
        shapley_mc(sum_predictor, two_feature_data, (1.0, 2.0), 0, iterations=0, seed=1)


def test_mc_trace_records_sampling_seed(two_feature_data, sum_predictor):
    result = shapley_mc(sum_predictor, two_feature_data, (1.0, 2.0), 0, iterations=10, seed=3)
    assert result.trace.stages() == ("sampling", "intervention", "prediction", "aggregation")
    assert result.trace.records[0].parameters["seed"] == 3
