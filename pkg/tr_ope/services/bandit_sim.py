"""
Supervised multiclass data turned into logged bandit feedback.

A context is shown to the logging policy, which picks a class as its action;
the reward is 1 when the action is the true label and 0 otherwise. Because
the reward is known for every action, the value of any policy on the same
contexts can be computed exactly.
"""
import logging
import numbers
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..exceptions import DatasetParseError, RejectedInputError
from ..models.datasets import LabeledDataset, LoggedDataset
from ..utils import check_array, check_finite, check_scalar
from .policies import Policy, action_probabilities, sample_actions

_logger = logging.getLogger(__name__)

MAX_SYNTHETIC_CONTEXTS = 50
MAX_SYNTHETIC_ACTIONS = 5

_PANDAS_LINE = re.compile(r"line (\d+)")


def _label_order(values):
    """Numeric order when every label parses as a number, else lexicographic."""
    numeric = pd.to_numeric(pd.Series(values), errors="coerce")
    if not numeric.isna().any():
        return [value for _, value in sorted(zip(numeric.tolist(), values))]
    return sorted(values)


def load_csv(path, label_column="label", feature_columns: Optional[Sequence[str]] = None) -> LabeledDataset:
    """
    Read a comma separated file with a header row.

    Every column other than `label_column` (or exactly `feature_columns`) is a
    numeric feature. Label values are re-indexed densely to 0..K-1.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as error:
        raise DatasetParseError("the file is empty", line=1) from error
    except pd.errors.ParserError as error:
        match = _PANDAS_LINE.search(str(error))
        raise DatasetParseError(f"malformed row: {error}",
                                line=int(match.group(1)) if match else None) from error
    except UnicodeDecodeError as error:
        raise DatasetParseError(f"the file is not UTF-8: {error}") from error
    except OSError as error:
        _logger.error("Cannot read dataset %s: %s", path, error)
        raise DatasetParseError(f"cannot read dataset {path}: {error}") from error
    if label_column not in frame.columns:
        raise DatasetParseError(f"label column {label_column!r} not in header", line=1)
    if frame.empty:
        raise DatasetParseError("the file has a header but no rows", line=2)
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        # header is line 1
        raise DatasetParseError(
            f"expected {len(frame.columns)} fields", line=int(np.flatnonzero(missing)[0]) + 2
        )
    columns = list(feature_columns) if feature_columns is not None else [
        column for column in frame.columns if column != label_column
    ]
    unknown = [column for column in columns if column not in frame.columns]
    if unknown:
        raise DatasetParseError(f"feature columns {unknown} not in header", line=1)
    if not columns:
        raise DatasetParseError("no feature columns", line=1)
    features = frame[columns].apply(pd.to_numeric, errors="coerce")
    bad = features.isna() | ~np.isfinite(features.fillna(0.0))
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DatasetParseError(
            f"non-numeric value {frame[columns[col]].iloc[row]!r} in column {columns[col]!r}",
            line=int(row) + 2,
        )
    raw_labels = frame[label_column].str.strip().tolist()
    order = _label_order(sorted(set(raw_labels)))
    index = {value: i for i, value in enumerate(order)}
    dataset = LabeledDataset(
        contexts=features.to_numpy(dtype=np.float64),
        labels=np.array([index[value] for value in raw_labels], dtype=np.int64),
        n_actions=len(order),
        feature_names=tuple(columns),
        label_values=tuple(order),
    )
    _logger.info("Loaded %s: %s rows, %s features, %s classes",
                 path, dataset.n_rows, dataset.n_features, dataset.n_actions)
    return dataset


def standardize(train: LabeledDataset, test: LabeledDataset):
    """Zero mean / unit variance with training statistics; constant columns are only centred."""
    mean = train.contexts.mean(axis=0)
    std = train.contexts.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return (
        replace(train, contexts=(train.contexts - mean) / std),
        replace(test, contexts=(test.contexts - mean) / std),
    )


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.6
    seed: int = 0

    def __post_init__(self):
        check_scalar(self.train_fraction, "train_fraction", numbers.Real, min_val=0.0, max_val=1.0,
                     include_boundaries="neither")
        check_scalar(self.seed, "seed", numbers.Integral, min_val=0)


def split(dataset: LabeledDataset, config: SplitConfig = SplitConfig()):
    """Shuffled, disjoint (train, test) split with |train| = round(fraction * n)."""
    n_rows = dataset.n_rows
    if n_rows < 2:
        raise RejectedInputError("splitting needs at least two rows")
    n_train = min(max(int(round(config.train_fraction * n_rows)), 1), n_rows - 1)
    order = np.random.default_rng(config.seed).permutation(n_rows)
    return dataset.subset(np.sort(order[:n_train])), dataset.subset(np.sort(order[n_train:]))


def log_bandit_feedback(dataset: LabeledDataset, logging_policy: Policy, seed=0,
                        record_propensities=True) -> LoggedDataset:
    """One logged record per row: a ~ logging(x), r = 1{a == label}."""
    if logging_policy.n_actions != dataset.n_actions:
        raise RejectedInputError(
            f"logging policy has {logging_policy.n_actions} actions, dataset has {dataset.n_actions} classes"
        )
    actions = sample_actions(logging_policy, dataset.contexts, np.random.default_rng(seed))
    propensities = action_probabilities(logging_policy, dataset.contexts, actions) if record_propensities else None
    return LoggedDataset(
        contexts=dataset.contexts,
        actions=actions,
        rewards=(actions == dataset.labels).astype(np.float64),
        n_actions=dataset.n_actions,
        propensities=propensities,
    )


def drop_propensities(logged: LoggedDataset) -> LoggedDataset:
    """The same log with the propensities forgotten, as when the logging policy is unknown."""
    return replace(logged, propensities=None)


def true_value(dataset: LabeledDataset, target: Policy) -> float:
    """Mean over rows of pi(label | x): the exact expected 0/1 reward of the target."""
    if target.n_actions != dataset.n_actions:
        raise RejectedInputError(
            f"target policy has {target.n_actions} actions, dataset has {dataset.n_actions} classes"
        )
    return float(action_probabilities(target, dataset.contexts, dataset.labels).mean())


@dataclass(frozen=True, eq=False)
class SyntheticBandit:
    """
    Finite bandit with an explicit context distribution and reward table, so
    every policy value is an exact enumeration.
    """

    contexts: np.ndarray
    context_probabilities: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        contexts = check_finite(check_array(self.contexts, "contexts", 2), "contexts")
        weights = check_array(self.context_probabilities, "context_probabilities", 1)
        rewards = check_finite(check_array(self.rewards, "rewards", 2), "rewards")
        if not (contexts.shape[0] == weights.shape[0] == rewards.shape[0]):
            raise RejectedInputError("contexts, context_probabilities and rewards must have equal length")
        if np.any(weights < 0.0) or not np.isclose(weights.sum(), 1.0, atol=1e-9):
            raise RejectedInputError("context_probabilities must be a probability vector")
        if np.unique(contexts, axis=0).shape[0] != contexts.shape[0]:
            raise RejectedInputError("synthetic contexts must be distinct")
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "context_probabilities", weights)
        object.__setattr__(self, "rewards", rewards)

    @property
    def n_contexts(self):
        return self.contexts.shape[0]

    @property
    def n_actions(self):
        return self.rewards.shape[1]

    @property
    def is_one_hot(self):
        return bool(np.all(np.isin(self.rewards, (0.0, 1.0))) and np.all(self.rewards.sum(axis=1) == 1.0))

    def true_value(self, policy: Policy) -> float:
        """sum_x P(x) sum_a pi(a|x) r(x, a)."""
        probabilities = policy.predict_proba(self.contexts)
        return float(self.context_probabilities @ np.sum(probabilities * self.rewards, axis=1))

    def _draw_contexts(self, n_rows, rng):
        return rng.choice(self.n_contexts, size=n_rows, p=self.context_probabilities)

    def sample_logged(self, logging_policy: Policy, n_rows, seed=0, record_propensities=True) -> LoggedDataset:
        check_scalar(n_rows, "n_rows", numbers.Integral, min_val=0)
        rng = np.random.default_rng(seed)
        rows = self._draw_contexts(n_rows, rng)
        contexts = self.contexts[rows]
        actions = sample_actions(logging_policy, contexts, rng) if n_rows else np.zeros(0, dtype=np.int64)
        propensities = None
        if record_propensities and n_rows:
            propensities = action_probabilities(logging_policy, contexts, actions)
        r_min, r_max = float(self.rewards.min()), float(self.rewards.max())
        return LoggedDataset(
            contexts=contexts.reshape(n_rows, self.contexts.shape[1]),
            actions=actions,
            rewards=self.rewards[rows, actions],
            n_actions=self.n_actions,
            propensities=propensities,
            reward_range=(min(r_min, 0.0), max(r_max, 1.0)),
        )

    def to_labeled(self, n_rows, seed=0) -> LabeledDataset:
        """Draw `n_rows` contexts; the label is the single rewarded action."""
        if not self.is_one_hot:
            raise RejectedInputError("only one-hot reward tables convert to labeled data")
        check_scalar(n_rows, "n_rows", numbers.Integral, min_val=1)
        rows = self._draw_contexts(n_rows, np.random.default_rng(seed))
        return LabeledDataset(
            contexts=self.contexts[rows],
            labels=np.argmax(self.rewards[rows], axis=1),
            n_actions=self.n_actions,
        )


def make_synthetic(n_contexts, n_features, n_actions, seed=0, one_hot=False) -> SyntheticBandit:
    """
    Random small bandit: gaussian contexts, uniform P(x) and a reward table
    that is either uniform in [0, 1] or one-hot (a hidden label per context).
    """
    check_scalar(n_contexts, "n_contexts", numbers.Integral, min_val=1, max_val=MAX_SYNTHETIC_CONTEXTS)
    check_scalar(n_features, "n_features", numbers.Integral, min_val=1)
    check_scalar(n_actions, "n_actions", numbers.Integral, min_val=2, max_val=MAX_SYNTHETIC_ACTIONS)
    rng = np.random.default_rng(seed)
    contexts = rng.standard_normal((n_contexts, n_features))
    if one_hot:
        rewards = np.eye(n_actions)[rng.integers(n_actions, size=n_contexts)]
    else:
        rewards = rng.random((n_contexts, n_actions))
    return SyntheticBandit(
        contexts=contexts,
        context_probabilities=np.full(n_contexts, 1.0 / n_contexts),
        rewards=rewards,
    )
