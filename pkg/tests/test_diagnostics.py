import math

import numpy as np
import pytest

from conftest import constant_feature_regressor
from tr_ope.exceptions import RejectedInputError
from tr_ope.models.datasets import LoggedDataset
from tr_ope.services.diagnostics import (
    BoundInputs,
    bias_bound,
    measure_bound_inputs,
    minimax_lower_bound,
    variance_bound,
)
from tr_ope.services.policies import TablePolicy, uniform_policy

HAND_CASES = [
    dict(W=2.0, B=10.0, sigma0_sq=1.0, eta1=0.1, eta2=0.2, l=0.5, n=100, delta=0.05, epsilon=0.01, E_p_wr=0.3),
    dict(W=1.0, B=1.0, sigma0_sq=0.5, eta1=0.0, eta2=0.0, l=1.0, n=10, delta=0.1, epsilon=0.0, E_p_wr=0.0),
    dict(W=5.0, B=1000.0, sigma0_sq=2.0, eta1=1e-3, eta2=1e-3, l=0.2, n=5000, delta=0.01, epsilon=0.05,
         E_p_wr=0.6, C=2.0),
    dict(W=0.5, B=0.0, sigma0_sq=1.0, eta1=0.3, eta2=0.1, l=2.0, n=1, delta=0.5, epsilon=0.2, E_p_wr=-0.1),
    dict(W=10.0, B=3.0, sigma0_sq=4.0, eta1=2.0, eta2=0.5, l=0.1, n=200, delta=0.05, epsilon=0.0, E_p_wr=1.5),
]


@pytest.mark.parametrize("case", HAND_CASES)
def test_bounds_by_substitution(case):
    inputs = BoundInputs(**case)
    W, B, s2, e1, e2, l, n = (case[key] for key in ("W", "B", "sigma0_sq", "eta1", "eta2", "l", "n"))
    delta, eps, E, C = case["delta"], case["epsilon"], case["E_p_wr"], case.get("C", 1.0)
    log_term = math.log(1 / delta)

    expected_bias = W * e1 / l + eps + C * math.sqrt(W * log_term / n)
    expected_variance = (2 * W ** 2 * e2 + 2 * W ** 2 / (2 * W * B + 1 / s2)
                         + C * W ** 2 * math.sqrt(log_term / n) + 2 * eps ** 2)
    first = W ** 2 * e2 ** 2 / (64 * math.e * l ** 2)
    second = (-4 * E + math.sqrt(16 * E ** 2 + 8 * W ** 2 * (n + 2) * e1)) ** 2 / (128 * math.e * (n + 2) ** 2)

    assert bias_bound(inputs) == pytest.approx(expected_bias, rel=1e-12)
    assert variance_bound(inputs) == pytest.approx(expected_variance, rel=1e-12)
    assert minimax_lower_bound(inputs) == pytest.approx(min(first, second), rel=1e-12, abs=1e-300)


def test_bias_vanishes_with_data():
    inputs = BoundInputs(W=2.0, B=1.0, sigma0_sq=1.0, eta1=0.0, eta2=0.0, l=1.0, n=1e12, epsilon=0.0)
    assert bias_bound(inputs) < 1e-5


def test_bias_grows_with_the_weight_range():
    small = BoundInputs(W=1.0, B=1.0, sigma0_sq=1.0, eta1=0.1, eta2=0.1, l=1.0, n=100)
    large = BoundInputs(W=4.0, B=1.0, sigma0_sq=1.0, eta1=0.1, eta2=0.1, l=1.0, n=100)
    assert bias_bound(large) > bias_bound(small)


def test_zero_weight_range_has_no_variance():
    inputs = BoundInputs(W=0.0, B=float("inf"), sigma0_sq=1.0, eta1=0.1, eta2=0.1, l=1.0, n=10)
    assert variance_bound(inputs) == 0.0


def test_zero_feature_bound_rejected_where_it_divides():
    inputs = BoundInputs(W=1.0, B=1.0, sigma0_sq=1.0, eta1=0.1, eta2=0.1, l=0.0, n=10)
    with pytest.raises(RejectedInputError):
        bias_bound(inputs)
    with pytest.raises(RejectedInputError):
        minimax_lower_bound(inputs)
    assert variance_bound(inputs) > 0.0


@pytest.mark.parametrize("field, value", [("W", -1.0), ("delta", 1.0), ("sigma0_sq", 0.0), ("n", 0)])
def test_invalid_inputs(field, value):
    values = dict(W=1.0, B=1.0, sigma0_sq=1.0, eta1=0.1, eta2=0.1, l=1.0, n=10)
    values[field] = value
    with pytest.raises(RejectedInputError):
        BoundInputs(**values)


def test_measured_inputs():
    contexts = np.array([[0.0], [1.0]])
    logged = LoggedDataset(contexts=contexts, actions=[0, 1], rewards=[1.0, 0.0], n_actions=2,
                           propensities=[0.5, 0.5])
    target = TablePolicy(contexts, [[0.9, 0.1], [0.3, 0.7]])
    regressor = constant_feature_regressor([3.0, 4.0], eta=0.01, rho_cap=50.0)
    inputs = measure_bound_inputs(logged, target, uniform_policy(2), regressor, eta2=0.2)
    assert inputs.W == pytest.approx(1.8)
    assert inputs.l == pytest.approx(5.0)
    assert inputs.B == 50.0
    assert inputs.eta1 == 0.01 and inputs.eta2 == 0.2
    assert inputs.E_p_wr == pytest.approx(0.9)
    assert inputs.n == 2
