"""
Reward models r_hat(x, a) consumed by the model-based estimators.

Every model predicts a (n, K) matrix of rewards for all actions at once,
clipped to the reward range.
"""
import logging
import numbers
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..exceptions import RejectedInputError
from ..models.datasets import LoggedDataset
from ..utils import check_array, check_scalar
from .core_math import FeedForwardNet, NetShape, SgdConfig, forward, init_net, iterate_minibatches, train_step
from .policies import Policy
from .robust_regression import RobustRegressor, density_ratio, encode_inputs, predict_clipped_batch

_logger = logging.getLogger(__name__)

DIRECT = "direct"
ROBUST = "robust"
ROBUST_IID = "robust_iid"
REWARD_MODEL_TAGS = (DIRECT, ROBUST, ROBUST_IID)


class RewardModel(metaclass=ABCMeta):
    """Base class of every reward model."""

    tag: str
    n_actions: int
    reward_range: Tuple[float, float]

    @abstractmethod
    def _predict(self, contexts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, contexts) -> np.ndarray:
        """Predicted rewards for every action, shape (n, K)."""
        contexts = np.asarray(contexts, dtype=np.float64)
        if contexts.ndim != 2:
            raise RejectedInputError("contexts must be a 2D matrix")
        return np.clip(self._predict(contexts), *self.reward_range)

    def predict_actions(self, contexts, actions) -> np.ndarray:
        """Predicted reward of `actions[i]` at `contexts[i]`."""
        actions = np.asarray(actions, dtype=np.int64)
        predictions = self.predict(contexts)
        return predictions[np.arange(actions.shape[0]), actions]


@dataclass(frozen=True, eq=False)
class ConstantRewardModel(RewardModel):
    value: float
    n_actions: int
    reward_range: Tuple[float, float] = (0.0, 1.0)
    tag: str = DIRECT

    def __post_init__(self):
        check_scalar(self.value, "value", numbers.Real)
        check_scalar(self.n_actions, "n_actions", numbers.Integral, min_val=1)

    def _predict(self, contexts):
        return np.full((contexts.shape[0], self.n_actions), float(self.value))


@dataclass(frozen=True, eq=False)
class TableRewardModel(RewardModel):
    """Explicit reward rows over a finite context set, looked up by exact match."""

    contexts: np.ndarray
    table: np.ndarray
    reward_range: Tuple[float, float] = (0.0, 1.0)
    tag: str = DIRECT

    def __post_init__(self):
        contexts = check_array(self.contexts, "contexts", 2)
        table = check_array(self.table, "table", 2)
        if table.shape[0] != contexts.shape[0]:
            raise RejectedInputError("one reward row per context is required")
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "_index", {row.tobytes(): i for i, row in enumerate(contexts)})

    @property
    def n_actions(self):
        return self.table.shape[1]

    def _predict(self, contexts):
        try:
            rows = [self._index[np.ascontiguousarray(row).tobytes()] for row in contexts]
        except KeyError as error:
            raise RejectedInputError("context not present in the reward table") from error
        return self.table[rows]


def _all_action_inputs(contexts, n_actions):
    """(n * K, d + K) rows, action-major within each context."""
    n_rows = contexts.shape[0]
    repeated = np.repeat(contexts, n_actions, axis=0)
    actions = np.tile(np.arange(n_actions), n_rows)
    return repeated, actions


@dataclass(frozen=True, eq=False)
class DirectRewardModel(RewardModel):
    """Squared-loss regression net on context ⊕ one-hot(action)."""

    net: FeedForwardNet
    n_actions: int
    reward_range: Tuple[float, float] = (0.0, 1.0)
    tag: str = DIRECT

    def _predict(self, contexts):
        repeated, actions = _all_action_inputs(contexts, self.n_actions)
        outputs = forward(self.net, encode_inputs(repeated, actions, self.n_actions))
        return outputs[:, 0].reshape(contexts.shape[0], self.n_actions)


def train_direct(logged: LoggedDataset, net_shape: NetShape = NetShape(),
                 config: SgdConfig = SgdConfig(), reward_range=None) -> DirectRewardModel:
    """Minimize mean (r_hat(x, a) - r)^2 over the logged records."""
    if len(logged) == 0:
        raise RejectedInputError("cannot train a reward model on an empty log")
    inputs = encode_inputs(logged.contexts, logged.actions, logged.n_actions)
    net = init_net(net_shape.layer_sizes(inputs.shape[1], 1), seed=config.seed)
    rng = np.random.default_rng(config.seed)
    rewards = logged.rewards
    for epoch in range(config.epochs):
        for batch in iterate_minibatches(len(logged), config.batch_size, rng):
            residual = forward(net, inputs[batch])[:, 0] - rewards[batch]
            net = train_step(net, inputs[batch], 2.0 * residual[:, None] / len(batch), config)
        if _logger.isEnabledFor(logging.DEBUG):
            mse = np.mean((forward(net, inputs)[:, 0] - rewards) ** 2)
            _logger.debug("Direct model epoch %s mse %.6f", epoch, mse)
    _logger.info("Trained direct reward model on %s records", len(logged))
    return DirectRewardModel(net=net, n_actions=logged.n_actions,
                             reward_range=reward_range or logged.reward_range)


@dataclass(frozen=True, eq=False)
class RobustRewardModel(RewardModel):
    """
    Clipped robust mean mu(x, a) at density ratio p(a|x)/pi(a|x), or at
    ratio 1 everywhere when `iid` is set.
    """

    regressor: RobustRegressor
    target: Policy
    logging_policy: Optional[Policy] = None
    iid: bool = False

    def __post_init__(self):
        if self.target.n_actions != self.regressor.n_actions:
            raise RejectedInputError("target policy and regressor disagree on the action count")
        if not self.iid and self.logging_policy is None:
            raise RejectedInputError("the shift-aware model needs a logging policy for its density ratios")

    @property
    def tag(self):
        return ROBUST_IID if self.iid else ROBUST

    @property
    def n_actions(self):
        return self.regressor.n_actions

    @property
    def reward_range(self):
        return self.regressor.reward_range

    def ratios(self, contexts) -> np.ndarray:
        """Density ratio of every (context, action), shape (n, K)."""
        if self.iid:
            return np.ones((contexts.shape[0], self.n_actions))
        return density_ratio(self.logging_policy.predict_proba(contexts),
                             self.target.predict_proba(contexts),
                             self.regressor.ratio_clip)

    def _predict(self, contexts):
        repeated, actions = _all_action_inputs(contexts, self.n_actions)
        ratios = self.ratios(contexts).reshape(-1)
        means = predict_clipped_batch(self.regressor, repeated, actions, ratios)
        return means.reshape(contexts.shape[0], self.n_actions)
