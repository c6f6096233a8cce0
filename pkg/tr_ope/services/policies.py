"""
Conditional action distributions p(a|x) / pi(a|x).

Every policy maps a (n, d) context matrix to a (n, K) row-stochastic matrix
and is immutable once built.
"""
import logging
import numbers
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from ..exceptions import RejectedInputError
from ..models.datasets import LabeledDataset, LoggedDataset
from ..utils import check_array, check_scalar
from .core_math import (
    FeedForwardNet,
    NetShape,
    SgdConfig,
    forward,
    init_net,
    iterate_minibatches,
    train_step,
)

_logger = logging.getLogger(__name__)

DEFAULT_PROBABILITY_FLOOR = 1e-4


class Policy(metaclass=ABCMeta):
    """Base class of every policy."""

    n_actions: int

    @abstractmethod
    def _probabilities(self, contexts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, contexts) -> np.ndarray:
        """Action probabilities, shape (n, K) for a (n, d) input or (K,) for one context."""
        contexts = np.asarray(contexts, dtype=np.float64)
        single = contexts.ndim == 1
        batch = contexts[None, :] if single else contexts
        if batch.ndim != 2:
            raise RejectedInputError("contexts must be a vector or a 2D matrix")
        probabilities = self._probabilities(batch)
        return probabilities[0] if single else probabilities

    def __call__(self, context):
        return self.predict_proba(context)


def apply_floor(probabilities, floor):
    """Clamp to >= floor, then renormalize rows."""
    if floor <= 0.0:
        return probabilities
    clamped = np.maximum(probabilities, floor)
    return clamped / clamped.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class UniformPolicy(Policy):
    n_actions: int

    def _probabilities(self, contexts):
        return np.full((contexts.shape[0], self.n_actions), 1.0 / self.n_actions)


def uniform_policy(n_actions) -> UniformPolicy:
    """pi(a|x) = 1/K for every context."""
    check_scalar(n_actions, "n_actions", numbers.Integral, min_val=2)
    return UniformPolicy(int(n_actions))


@dataclass(frozen=True, eq=False)
class SoftmaxClassifierPolicy(Policy):
    """
    softmax(logits / temperature) of a net with K outputs, optionally floored.
    """

    net: FeedForwardNet
    temperature: float = 1.0
    floor: float = 0.0

    def __post_init__(self):
        check_scalar(self.temperature, "temperature", numbers.Real, min_val=0.0,
                     include_boundaries="neither")
        check_scalar(self.floor, "floor", numbers.Real, min_val=0.0, max_val=1.0 / self.net.output_dim)

    @property
    def n_actions(self):
        return self.net.output_dim

    def logits(self, contexts):
        return forward(self.net, contexts)

    def _probabilities(self, contexts):
        if contexts.shape[1] != self.net.input_dim:
            raise RejectedInputError(
                f"context dimension {contexts.shape[1]} does not match policy input {self.net.input_dim}"
            )
        probabilities = softmax(self.logits(contexts) / self.temperature, axis=1)
        return apply_floor(probabilities, self.floor)


@dataclass(frozen=True, eq=False)
class TablePolicy(Policy):
    """
    Explicit probability table over a finite set of contexts.

    Rows are looked up by exact equality of the context vector.
    """

    contexts: np.ndarray
    table: np.ndarray

    def __post_init__(self):
        contexts = check_array(self.contexts, "contexts", 2)
        table = check_array(self.table, "table", 2)
        if table.shape[0] != contexts.shape[0]:
            raise RejectedInputError("one probability row per context is required")
        if np.any(table < 0.0) or not np.allclose(table.sum(axis=1), 1.0, atol=1e-9):
            raise RejectedInputError("every table row must be a probability vector")
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "_index", {row.tobytes(): i for i, row in enumerate(contexts)})

    @property
    def n_actions(self):
        return self.table.shape[1]

    def _probabilities(self, contexts):
        try:
            rows = [self._index[np.ascontiguousarray(row, dtype=np.float64).tobytes()] for row in contexts]
        except KeyError as error:
            raise RejectedInputError("context not present in the policy table") from error
        return self.table[rows]


def deterministic_policy(contexts, actions, n_actions) -> TablePolicy:
    """TablePolicy putting all mass on `actions[i]` for `contexts[i]`."""
    actions = np.asarray(actions, dtype=np.int64)
    table = np.zeros((len(actions), n_actions))
    table[np.arange(len(actions)), actions] = 1.0
    return TablePolicy(contexts, table)


def _fit_softmax_net(contexts, targets, n_actions, net_shape, config, temperature):
    """Minimize multinomial log-loss of softmax(net(x)/temperature) with SGD."""
    n_rows, n_features = contexts.shape
    net = init_net(net_shape.layer_sizes(n_features, n_actions), seed=config.seed)
    rng = np.random.default_rng(config.seed)
    one_hot = np.eye(n_actions)[targets]
    for epoch in range(config.epochs):
        for batch in iterate_minibatches(n_rows, config.batch_size, rng):
            logits = forward(net, contexts[batch]) / temperature
            grad = (softmax(logits, axis=1) - one_hot[batch]) / (temperature * len(batch))
            net = train_step(net, contexts[batch], grad, config)
        if _logger.isEnabledFor(logging.DEBUG):
            log_probs = log_softmax(forward(net, contexts) / temperature, axis=1)
            _logger.debug("Classifier epoch %s log-loss %.6f", epoch,
                          -log_probs[np.arange(n_rows), targets].mean())
    return net


def train_classifier_policy(data: LabeledDataset, net_shape: NetShape = NetShape(),
                            config: SgdConfig = SgdConfig(epochs=5), temperature=1.0,
                            floor=0.0) -> SoftmaxClassifierPolicy:
    """
    Softmax classifier on fully observed labels; used as the evaluation policy.
    """
    if data is None or data.n_rows == 0:
        raise RejectedInputError("cannot train a classifier on an empty dataset")
    check_scalar(temperature, "temperature", numbers.Real, min_val=0.0, include_boundaries="neither")
    net = _fit_softmax_net(data.contexts, data.labels, data.n_actions, net_shape, config, temperature)
    _logger.info("Trained classifier policy on %s rows, %s classes", data.n_rows, data.n_actions)
    return SoftmaxClassifierPolicy(net=net, temperature=temperature, floor=floor)


def estimate_logging_policy(logged: LoggedDataset, net_shape: NetShape = NetShape(),
                            config: SgdConfig = SgdConfig(),
                            floor=DEFAULT_PROBABILITY_FLOOR) -> SoftmaxClassifierPolicy:
    """
    Fit p_hat(a|x) by log-loss on the logged (context -> action) pairs.

    Probabilities are floored so importance weights stay finite.
    """
    if len(logged) == 0:
        raise RejectedInputError("cannot estimate a logging policy from an empty log")
    if logged.actions.min() < 0 or logged.actions.max() >= logged.n_actions:
        raise RejectedInputError(f"logged action out of range for {logged.n_actions} actions")
    net = _fit_softmax_net(logged.contexts, logged.actions, logged.n_actions, net_shape, config, 1.0)
    _logger.info("Estimated logging policy from %s logged records", len(logged))
    return SoftmaxClassifierPolicy(net=net, temperature=1.0, floor=floor)


def biased_subsample(data: LabeledDataset, fraction=0.1, seed=0) -> LabeledDataset:
    """
    Keep `fraction` of the rows of a random half of the classes and every row
    of the other classes.
    """
    check_scalar(fraction, "fraction", numbers.Real, min_val=0.0, max_val=1.0)
    rng = np.random.default_rng(seed)
    skewed = rng.permutation(data.n_actions)[: data.n_actions // 2]
    in_skewed = np.isin(data.labels, skewed)
    keep = ~in_skewed | (rng.random(data.n_rows) < fraction)
    if not np.any(keep):
        raise RejectedInputError("biased subsample is empty; raise the fraction")
    if np.any(in_skewed) and not np.any(keep & in_skewed):
        _logger.warning("Biased subsample dropped every row of classes %s", sorted(skewed.tolist()))
    return data.subset(np.flatnonzero(keep))


def train_biased_logging_policy(data: LabeledDataset, fraction=0.1, net_shape: NetShape = NetShape(),
                                config: SgdConfig = SgdConfig(epochs=5), temperature=1.0,
                                floor=DEFAULT_PROBABILITY_FLOOR, seed=0) -> SoftmaxClassifierPolicy:
    """
    The "sample model": a classifier trained on a class-skewed subsample.

    Smaller `fraction` and smaller `temperature` give more extreme propensities.
    """
    subsample = biased_subsample(data, fraction, seed)
    _logger.info("Biased subsample keeps %s of %s rows (fraction %s)", subsample.n_rows, data.n_rows, fraction)
    return train_classifier_policy(subsample, net_shape, config, temperature=temperature, floor=floor)


def sample_actions(policy: Policy, contexts, rng) -> np.ndarray:
    """Draw one action per context row by inverse-CDF sampling."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    probabilities = np.atleast_2d(policy.predict_proba(contexts))
    cumulative = np.cumsum(probabilities, axis=1)
    draws = rng.random(probabilities.shape[0])
    actions = (cumulative < draws[:, None]).sum(axis=1)
    # guards against cumulative sums ending slightly below 1
    return np.minimum(actions, probabilities.shape[1] - 1)


def sample_action(policy: Policy, context, seed) -> int:
    """Draw a single action for one context; reproducible for a given seed."""
    context = np.asarray(context, dtype=np.float64)
    if context.ndim != 1:
        raise RejectedInputError("sample_action expects a single context vector")
    return int(sample_actions(policy, context[None, :], seed)[0])


def action_probabilities(policy: Policy, contexts, actions) -> np.ndarray:
    """policy(actions[i] | contexts[i]) for every row."""
    actions = np.asarray(actions, dtype=np.int64)
    probabilities = np.atleast_2d(policy.predict_proba(contexts))
    if probabilities.shape[0] != actions.shape[0]:
        raise RejectedInputError("one action per context row is required")
    if actions.size and (actions.min() < 0 or actions.max() >= probabilities.shape[1]):
        raise RejectedInputError(f"action index out of range for {probabilities.shape[1]} actions")
    return probabilities[np.arange(actions.shape[0]), actions]


def logged_propensities(logged: LoggedDataset, logging_policy=None) -> np.ndarray:
    """
    p(a|x) of every logged record.

    Recorded propensities take precedence; otherwise `logging_policy` is
    evaluated on the logged contexts.
    """
    if logged.propensities is not None:
        return logged.propensities
    if logging_policy is None:
        raise RejectedInputError("no logged propensities and no logging policy to evaluate")
    if logging_policy.n_actions != logged.n_actions:
        raise RejectedInputError(
            f"logging policy has {logging_policy.n_actions} actions, log has {logged.n_actions}"
        )
    return action_probabilities(logging_policy, logged.contexts, logged.actions)
