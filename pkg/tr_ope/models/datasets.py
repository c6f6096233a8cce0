"""
Dataset containers.

Both containers hold plain numpy arrays and validate themselves on
construction; services never mutate them in place.
"""
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from ..exceptions import RejectedInputError
from ..utils import check_array, check_finite


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    Fully observed multiclass data: one context row and one label per example.
    """

    contexts: np.ndarray
    labels: np.ndarray
    n_actions: int
    feature_names: Optional[Tuple[str, ...]] = None
    label_values: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        contexts = check_finite(check_array(self.contexts, "contexts", 2), "contexts")
        labels = check_array(self.labels, "labels", 1, dtype=np.int64)
        if contexts.shape[0] < 1:
            raise RejectedInputError("a labeled dataset needs at least one row")
        if labels.shape[0] != contexts.shape[0]:
            raise RejectedInputError(
                f"{labels.shape[0]} labels for {contexts.shape[0]} contexts"
            )
        if self.n_actions < 1 or labels.min() < 0 or labels.max() >= self.n_actions:
            raise RejectedInputError(f"labels must lie in [0, {self.n_actions})")
        if self.feature_names is not None and len(self.feature_names) != contexts.shape[1]:
            raise RejectedInputError("feature_names does not match the context width")
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self):
        return self.contexts.shape[0]

    @property
    def n_features(self):
        return self.contexts.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, contexts=self.contexts[indices], labels=self.labels[indices])


@dataclass(frozen=True, eq=False)
class LoggedDataset:
    """
    Bandit feedback: (context, chosen action, observed reward, optional propensity).

    `propensities` is None when the logging policy is unknown.
    """

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    n_actions: int
    propensities: Optional[np.ndarray] = None
    reward_range: Tuple[float, float] = field(default=(0.0, 1.0))

    def __post_init__(self):
        contexts = check_finite(check_array(self.contexts, "contexts", 2), "contexts")
        actions = check_array(self.actions, "actions", 1, dtype=np.int64)
        rewards = check_finite(check_array(self.rewards, "rewards", 1), "rewards")
        n = contexts.shape[0]
        if actions.shape[0] != n or rewards.shape[0] != n:
            raise RejectedInputError("contexts, actions and rewards must have equal length")
        if self.n_actions < 1:
            raise RejectedInputError("n_actions must be positive")
        if n and (actions.min() < 0 or actions.max() >= self.n_actions):
            raise RejectedInputError(
                f"action index out of range for {self.n_actions} actions"
            )
        r_min, r_max = self.reward_range
        if not r_min < r_max:
            raise RejectedInputError("reward_range must satisfy r_min < r_max")
        if n and (rewards.min() < r_min or rewards.max() > r_max):
            raise RejectedInputError(f"rewards must lie in [{r_min}, {r_max}]")
        propensities = self.propensities
        if propensities is not None:
            propensities = check_array(propensities, "propensities", 1)
            if propensities.shape[0] != n:
                raise RejectedInputError("one propensity per record is required")
            if n and (np.any(propensities <= 0.0) or np.any(propensities > 1.0)):
                raise RejectedInputError("propensities must lie in (0, 1]")
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "propensities", propensities)
        object.__setattr__(self, "reward_range", (float(r_min), float(r_max)))

    def __len__(self):
        return self.contexts.shape[0]

    @property
    def n_features(self):
        return self.contexts.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            contexts=self.contexts[indices],
            actions=self.actions[indices],
            rewards=self.rewards[indices],
            propensities=None if self.propensities is None else self.propensities[indices],
        )
