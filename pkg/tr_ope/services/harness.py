"""
Repeated-trial experiment loop.

One trial: split the labeled data, train the evaluation policy on the
training part, build the logging policy, log bandit feedback on both parts,
fit reward models on the logged training part and score every estimator on
the logged test part against the exact value of the evaluation policy.
"""
import logging
import math
import time
from dataclasses import replace

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from ..exceptions import ExperimentAborted, RejectedInputError, TrialError
from ..models.datasets import LabeledDataset
from ..models.estimator_spec import ROBUST_KINDS
from ..models.experiment_report import DIAGNOSTIC_COLUMNS, ExperimentReport, TrialResult, summarize_trials
from .bandit_sim import (
    drop_propensities,
    load_csv,
    log_bandit_feedback,
    make_synthetic,
    split,
    standardize,
    true_value,
)
from .diagnostics import bias_bound, measure_bound_inputs, minimax_lower_bound, variance_bound
from .estimators import estimate
from .experiment_config import ExperimentConfig
from .policies import (
    estimate_logging_policy,
    train_biased_logging_policy,
    train_classifier_policy,
    uniform_policy,
)
from .reward_models import DIRECT, ROBUST, ROBUST_IID, RobustRewardModel, train_direct
from .robust_regression import train_iid, train_robust

_logger = logging.getLogger(__name__)

SEED_STREAMS = ("split", "target", "logging", "log_train", "log_test", "policy", "reward")


def trial_seed(master_seed, trial_index) -> int:
    """Seed of trial `trial_index`, derived from (master seed, index) only."""
    return int(np.random.SeedSequence([master_seed, trial_index]).generate_state(1)[0])


def _stream_seeds(seed):
    children = np.random.SeedSequence(seed).spawn(len(SEED_STREAMS))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(SEED_STREAMS, children)}


def load_dataset(config: ExperimentConfig) -> LabeledDataset:
    """The CSV named by the config, or a one-hot synthetic bandit turned into labeled rows."""
    if config.dataset_path:
        return load_csv(config.dataset_path, config.label_column)
    bandit = make_synthetic(config.synthetic_contexts, config.synthetic_features, config.synthetic_actions,
                            seed=config.synthetic_seed, one_hot=True)
    return bandit.to_labeled(config.synthetic_rows, seed=config.synthetic_seed)


def _logging_policy(config, train, seed):
    if config.logging_mode == "uniform":
        return uniform_policy(train.n_actions)
    return train_biased_logging_policy(
        train,
        fraction=config.bias_fraction,
        net_shape=config.net_shape(),
        config=config.logging_sgd(seed),
        temperature=config.logging_temperature,
        floor=config.probability_floor,
        seed=seed,
    )


def _reward_models(config, specs, logged, target, logging_policy, seed):
    tags = {spec.reward_model_tag for spec in specs}
    sgd = config.reward_sgd(seed)
    models, regressor = {}, None
    if DIRECT in tags:
        models[DIRECT] = train_direct(logged, config.net_shape(), sgd)
    if ROBUST_IID in tags:
        regressor = train_iid(logged, config.net_shape(), sgd, eta=config.eta, base=config.base(),
                              ratio_clip=config.ratio_clip, rho_cap=config.rho_cap)
        models[ROBUST_IID] = RobustRewardModel(regressor=regressor, target=target, iid=True)
    if ROBUST in tags:
        regressor = train_robust(logged, target, logging_policy, config.net_shape(), sgd, eta=config.eta,
                                 base=config.base(), ratio_clip=config.ratio_clip, rho_cap=config.rho_cap)
        models[ROBUST] = RobustRewardModel(regressor=regressor, target=target, logging_policy=logging_policy)
    return models, regressor


def _diagnostics(config, specs, logged, target, logging_policy, regressor):
    """Bound values keyed `<estimator>.<bound>` for the DM-R/TR rows."""
    robust_specs = [spec for spec in specs if spec.kind in ROBUST_KINDS]
    if not config.diagnostics or regressor is None or not robust_specs:
        return {}
    inputs = measure_bound_inputs(logged, target, logging_policy, regressor, eta1=config.eta1, eta2=config.eta2,
                                  delta=config.delta, epsilon=config.epsilon, C=config.bound_constant,
                                  weight_clip=config.weight_clip)
    values = {}
    for column, bound in zip(DIAGNOSTIC_COLUMNS, (bias_bound, variance_bound, minimax_lower_bound)):
        try:
            values[column] = bound(inputs)
        except RejectedInputError as error:
            _logger.warning("%s not available: %s", column, error)
            values[column] = math.nan
    return {f"{spec.name}.{column}": value for spec in robust_specs for column, value in values.items()}


def _run_trial(config, seed, trial_index, dataset):
    started = time.perf_counter()
    dataset = dataset if dataset is not None else load_dataset(config)
    seeds = _stream_seeds(seed)
    train, test = standardize(*split(dataset, config.split_config(seeds["split"])))
    target = train_classifier_policy(train, config.net_shape(), config.classifier_sgd(seeds["target"]),
                                     temperature=config.evaluation_temperature)
    logging_policy = _logging_policy(config, train, seeds["logging"])
    logged_train = log_bandit_feedback(train, logging_policy, seeds["log_train"])
    logged_test = log_bandit_feedback(test, logging_policy, seeds["log_test"])
    if config.logging_mode == "estimated":
        logged_train, logged_test = drop_propensities(logged_train), drop_propensities(logged_test)
        logging_policy = estimate_logging_policy(logged_train, config.net_shape(), config.policy_sgd(seeds["policy"]),
                                                 floor=config.probability_floor)
    specs = config.estimator_specs()
    models, regressor = _reward_models(config, specs, logged_train, target, logging_policy, seeds["reward"])
    truth = true_value(test, target)
    estimates = {
        spec.name: estimate(spec, logged_test, target, logging_policy, models, config.weight_clip).value
        for spec in specs
    }
    result = TrialResult(
        trial_index=trial_index,
        seed=seed,
        true_value=truth,
        estimates=estimates,
        diagnostics=_diagnostics(config, specs, logged_test, target, logging_policy, regressor),
    )
    return replace(result, wall_clock=time.perf_counter() - started)


def run_trial(config: ExperimentConfig, seed, trial_index=0, dataset=None) -> TrialResult:
    """
    One reproducible trial. Any failure is re-raised as TrialError carrying
    the trial index and seed.
    """
    _logger.info("Trial %s started (seed %s)", trial_index, seed)
    try:
        result = _run_trial(config, seed, trial_index, dataset)
    except Exception as error:
        _logger.error("Trial %s (seed %s) failed: %s", trial_index, seed, error)
        raise TrialError(trial_index, seed, error) from error
    _logger.info("Trial %s finished in %.2fs, true value %.4f", trial_index, result.wall_clock, result.true_value)
    return result


def _trial_job(config, seed, trial_index, dataset):
    try:
        return run_trial(config, seed, trial_index, dataset)
    except TrialError as error:
        return error


def run_experiment(config: ExperimentConfig, dataset=None, progress=False) -> ExperimentReport:
    """
    Run `config.n_trials` trials on `config.jobs` workers and summarize them.

    The first failing trial aborts the run with ExperimentAborted holding the
    trials finished before it.
    """
    dataset = dataset if dataset is not None else load_dataset(config)
    seeds = [trial_seed(config.seed, index) for index in range(config.n_trials)]
    _logger.info("Running %s trials with %s jobs, logging mode %s", config.n_trials, config.jobs, config.logging_mode)
    outcomes = Parallel(n_jobs=config.jobs, return_as="generator")(
        delayed(_trial_job)(config, seed, index, dataset) for index, seed in enumerate(seeds)
    )
    finished = []
    with tqdm(total=config.n_trials, desc="trials", disable=not progress) as bar:
        for outcome in outcomes:
            if isinstance(outcome, TrialError):
                raise ExperimentAborted(f"aborted after {len(finished)} trials: {outcome}",
                                        partial=tuple(finished)) from outcome
            finished.append(outcome)
            bar.update(1)
    return summarize_trials(finished, config.estimator_specs(), config.as_dict())
