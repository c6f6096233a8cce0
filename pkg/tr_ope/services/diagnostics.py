"""
Numeric values of the bias, variance and minimax-risk bounds of the triply
robust estimator.

The bounds are asymptotic; the unspecified constant in front of the
concentration terms is exposed as `C` (default 1). Values are therefore
meaningful up to that constant only.
"""
import logging
import math
import numbers
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..exceptions import RejectedInputError
from ..models.datasets import LoggedDataset
from ..utils import check_scalar
from .core_math import forward
from .estimators import DEFAULT_WEIGHT_CLIP, importance_weights
from .policies import Policy
from .robust_regression import RobustRegressor, encode_inputs

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundInputs:
    """
    W: max of pi/p over the data; B: cap of rho_r; l: lower bound of |f(x, a)|;
    E_p_wr: mean of w * r on the logged data; C: constant of the O() terms.
    """

    W: float
    B: float
    sigma0_sq: float
    eta1: float
    eta2: float
    l: float
    n: int
    delta: float = 0.05
    epsilon: float = 0.0
    E_p_wr: float = 0.0
    C: float = 1.0

    def __post_init__(self):
        check_scalar(self.W, "W", numbers.Real, min_val=0.0)
        check_scalar(self.B, "B", numbers.Real, min_val=0.0)
        check_scalar(self.sigma0_sq, "sigma0_sq", numbers.Real, min_val=0.0, include_boundaries="neither")
        check_scalar(self.eta1, "eta1", numbers.Real, min_val=0.0)
        check_scalar(self.eta2, "eta2", numbers.Real, min_val=0.0)
        check_scalar(self.l, "l", numbers.Real)
        check_scalar(self.n, "n", numbers.Real, min_val=1)
        check_scalar(self.delta, "delta", numbers.Real, min_val=0.0, max_val=1.0, include_boundaries="neither")
        check_scalar(self.epsilon, "epsilon", numbers.Real, min_val=0.0)
        check_scalar(self.E_p_wr, "E_p_wr", numbers.Real)
        check_scalar(self.C, "C", numbers.Real, min_val=0.0)


def _require_positive_l(inputs):
    if not inputs.l > 0.0:
        raise RejectedInputError(f"the feature lower bound l must be positive, got {inputs.l}")


def bias_bound(inputs: BoundInputs) -> float:
    """W eta1 / l + epsilon + C sqrt(W log(1/delta) / n)."""
    _require_positive_l(inputs)
    return (inputs.W * inputs.eta1 / inputs.l
            + inputs.epsilon
            + inputs.C * math.sqrt(inputs.W * math.log(1.0 / inputs.delta) / inputs.n))


def variance_bound(inputs: BoundInputs) -> float:
    """2 W^2 eta2 + 2 W^2 / (2 W B + 1/sigma0_sq) + C W^2 sqrt(log(1/delta) / n) + 2 epsilon^2."""
    w_sq = inputs.W ** 2
    # W = 0 makes the term 0 even for B = inf
    shrink = 0.0 if w_sq == 0.0 else 2.0 * w_sq / (2.0 * inputs.W * inputs.B + 1.0 / inputs.sigma0_sq)
    return (2.0 * w_sq * inputs.eta2
            + shrink
            + inputs.C * w_sq * math.sqrt(math.log(1.0 / inputs.delta) / inputs.n)
            + 2.0 * inputs.epsilon ** 2)


def minimax_lower_bound(inputs: BoundInputs) -> float:
    """
    min(W^2 eta2^2 / (64 e l^2),
        (-4 E + sqrt(16 E^2 + 8 W^2 (n + 2) eta1))^2 / (128 e (n + 2)^2))
    with E = E_p_wr and the measured max ratio W standing in for w.
    """
    _require_positive_l(inputs)
    w_sq, m = inputs.W ** 2, inputs.n + 2.0
    first = w_sq * inputs.eta2 ** 2 / (64.0 * math.e * inputs.l ** 2)
    root = math.sqrt(16.0 * inputs.E_p_wr ** 2 + 8.0 * w_sq * m * inputs.eta1)
    second = (-4.0 * inputs.E_p_wr + root) ** 2 / (128.0 * math.e * m ** 2)
    return min(first, second)


def measure_bound_inputs(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy],
                         regressor: RobustRegressor, eta1=None, eta2=None, delta=0.05, epsilon=0.0,
                         C=1.0, weight_clip=DEFAULT_WEIGHT_CLIP) -> BoundInputs:
    """
    Empirical W, l and E_p_wr on `logged`; B and sigma0_sq from the regressor.
    The slacks default to the regressor's eta.
    """
    weights = importance_weights(logged, target, logging_policy, weight_clip)
    features = forward(regressor.net, encode_inputs(logged.contexts, logged.actions, logged.n_actions))
    inputs = BoundInputs(
        W=float(weights.max()),
        B=float(regressor.rho_cap),
        sigma0_sq=float(regressor.base.sigma0_sq),
        eta1=float(regressor.eta if eta1 is None else eta1),
        eta2=float(regressor.eta if eta2 is None else eta2),
        l=float(np.linalg.norm(features, axis=1).min()),
        n=len(logged),
        delta=delta,
        epsilon=epsilon,
        E_p_wr=float(np.mean(weights * logged.rewards)),
        C=C,
    )
    _logger.debug("Bound inputs W=%.4g l=%.4g E_p_wr=%.4g n=%s", inputs.W, inputs.l, inputs.E_p_wr, inputs.n)
    return inputs
