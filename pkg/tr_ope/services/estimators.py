"""
Policy value estimators.

All estimators are pure functions of a LoggedDataset, the target policy,
the logging policy (or the logged propensities) and, for the model-based
ones, a reward model. The DR family takes a direct reward model; the TR
family takes the robust regressor's clipped mean in its place.
"""
import logging
from typing import Mapping, Optional

import numpy as np

from ..exceptions import RejectedInputError, UndefinedEstimateError
from ..models.datasets import LoggedDataset
from ..models.estimator_spec import EstimatorKind, EstimatorResult, EstimatorSpec
from .policies import Policy, action_probabilities, logged_propensities
from .reward_models import RewardModel, RobustRewardModel
from .robust_regression import RobustRegressor

_logger = logging.getLogger(__name__)

DEFAULT_WEIGHT_CLIP = 1e4


def _check_log(logged: LoggedDataset, target: Policy):
    if logged is None or len(logged) == 0:
        raise RejectedInputError("cannot estimate a policy value from an empty log")
    if target.n_actions != logged.n_actions:
        raise RejectedInputError(f"target policy has {target.n_actions} actions, log has {logged.n_actions}")


def importance_weights(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy] = None,
                       weight_clip=DEFAULT_WEIGHT_CLIP) -> np.ndarray:
    """
    w = pi(a|x) / p(a|x) for every logged record, clipped to [0, weight_clip].

    A zero propensity is only tolerated when the target never takes the
    action either (w = 0) or when a finite clip is set (w = weight_clip).
    """
    _check_log(logged, target)
    if not weight_clip > 0.0:
        raise RejectedInputError(f"weight_clip must be positive, got {weight_clip}")
    propensities = logged_propensities(logged, logging_policy)
    target_probabilities = action_probabilities(target, logged.contexts, logged.actions)
    unsupported = (propensities <= 0.0) & (target_probabilities > 0.0)
    if np.any(unsupported) and np.isinf(weight_clip):
        raise RejectedInputError(
            f"{int(unsupported.sum())} logged actions have zero propensity but positive target probability"
        )
    positive = propensities > 0.0
    weights = np.where(positive, target_probabilities / np.where(positive, propensities, 1.0), 0.0)
    weights = np.where(unsupported, weight_clip, weights)
    clipped = weights > weight_clip
    if np.any(clipped):
        _logger.warning("%s of %s importance weights clipped at %s", int(clipped.sum()), len(weights), weight_clip)
    return np.minimum(weights, weight_clip)


def _model_terms(logged, target, model: RewardModel):
    """(r_hat_pi(x_i), r_hat(x_i, a_i)) per logged record."""
    if model.n_actions != logged.n_actions:
        raise RejectedInputError(f"reward model has {model.n_actions} actions, log has {logged.n_actions}")
    predictions = model.predict(logged.contexts)
    probabilities = target.predict_proba(logged.contexts)
    on_policy = np.sum(probabilities * predictions, axis=1)
    logged_action = predictions[np.arange(len(logged)), logged.actions]
    return on_policy, logged_action


def _normalizer(weights):
    total = weights.sum()
    if total <= 0.0:
        raise UndefinedEstimateError("every importance weight is zero; the self-normalized estimate is undefined")
    return total


def v_dm(logged: LoggedDataset, target: Policy, model: RewardModel) -> float:
    """Mean over logged contexts of sum_a pi(a|x) r_hat(x, a)."""
    _check_log(logged, target)
    on_policy, _ = _model_terms(logged, target, model)
    return float(on_policy.mean())


def v_ips(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy] = None,
          weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """Mean of w * r over the log."""
    weights = importance_weights(logged, target, logging_policy, weight_clip)
    return float(np.mean(weights * logged.rewards))


def v_snips(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy] = None,
            weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """IPS divided by the mean importance weight."""
    weights = importance_weights(logged, target, logging_policy, weight_clip)
    return float(np.sum(weights * logged.rewards) / _normalizer(weights))


def v_dr(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy], model: RewardModel,
         weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """DM plus the importance weighted residual of the logged action."""
    weights = importance_weights(logged, target, logging_policy, weight_clip)
    on_policy, logged_action = _model_terms(logged, target, model)
    return float(on_policy.mean() + np.mean(weights * (logged.rewards - logged_action)))


def v_sndr(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy], model: RewardModel,
           weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """DR with the residual correction self-normalized by the weights."""
    weights = importance_weights(logged, target, logging_policy, weight_clip)
    on_policy, logged_action = _model_terms(logged, target, model)
    correction = np.sum(weights * (logged.rewards - logged_action)) / _normalizer(weights)
    return float(on_policy.mean() + correction)


def v_dr_switch(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy], model: RewardModel,
                tau, weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """
    Per record: the DR term while w <= tau, the model's on-policy value
    otherwise.
    """
    if not tau >= 0.0:
        raise RejectedInputError(f"tau must be nonnegative, got {tau}")
    weights = importance_weights(logged, target, logging_policy, weight_clip)
    on_policy, logged_action = _model_terms(logged, target, model)
    corrected = weights * (logged.rewards - logged_action) + on_policy
    return float(np.mean(np.where(weights <= tau, corrected, on_policy)))


def v_dr_shrink(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy], model: RewardModel,
                shrink_cap, weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """DR with every importance weight capped at `shrink_cap`."""
    if not shrink_cap >= 0.0:
        raise RejectedInputError(f"shrink_cap must be nonnegative, got {shrink_cap}")
    weights = np.minimum(importance_weights(logged, target, logging_policy, weight_clip), shrink_cap)
    on_policy, logged_action = _model_terms(logged, target, model)
    return float(on_policy.mean() + np.mean(weights * (logged.rewards - logged_action)))


def _robust_model(robust, target, logging_policy, iid=False) -> RewardModel:
    if isinstance(robust, RobustRegressor):
        return RobustRewardModel(regressor=robust, target=target,
                                 logging_policy=None if iid else logging_policy, iid=iid)
    if isinstance(robust, RewardModel):
        return robust
    raise RejectedInputError(f"expected a robust regressor or reward model, got {type(robust).__name__}")


def v_dm_r(logged: LoggedDataset, target: Policy, robust, logging_policy: Optional[Policy] = None) -> float:
    """
    DM with the robust mean; `robust` is a RobustRewardModel or a bare
    RobustRegressor (then `logging_policy` supplies the density ratios).
    """
    return v_dm(logged, target, _robust_model(robust, target, logging_policy))


def v_dm_i(logged: LoggedDataset, target: Policy, robust_iid) -> float:
    """DM with the regressor trained and evaluated at density ratio 1."""
    return v_dm(logged, target, _robust_model(robust_iid, target, None, iid=True))


def v_tr(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy], robust,
         weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """DR with the robust mean as the reward model."""
    return v_dr(logged, target, logging_policy, _robust_model(robust, target, logging_policy), weight_clip)


def v_sntr(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy], robust,
           weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """SnDR with the robust mean as the reward model."""
    return v_sndr(logged, target, logging_policy, _robust_model(robust, target, logging_policy), weight_clip)


def v_tr_switch(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy], robust, tau,
                weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """DR-SWITCH with the robust mean as the reward model."""
    return v_dr_switch(logged, target, logging_policy, _robust_model(robust, target, logging_policy),
                       tau, weight_clip)


def v_tr_shrink(logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy], robust, shrink_cap,
                weight_clip=DEFAULT_WEIGHT_CLIP) -> float:
    """DR-Shrink with the robust mean as the reward model."""
    return v_dr_shrink(logged, target, logging_policy, _robust_model(robust, target, logging_policy),
                       shrink_cap, weight_clip)


def _model_for(spec, models):
    tag = spec.reward_model_tag
    try:
        return models[tag]
    except KeyError as error:
        raise RejectedInputError(f"{spec.name} needs a {tag!r} reward model") from error


def estimate(spec: EstimatorSpec, logged: LoggedDataset, target: Policy, logging_policy: Optional[Policy] = None,
             models: Optional[Mapping[str, RewardModel]] = None,
             weight_clip=DEFAULT_WEIGHT_CLIP) -> EstimatorResult:
    """
    Run one estimator. `models` maps reward model tags (direct, robust,
    robust_iid) to trained models; IPS and SnIPS need none.
    """
    models = models or {}
    kind = spec.kind
    if kind is EstimatorKind.IPS:
        value = v_ips(logged, target, logging_policy, weight_clip)
    elif kind is EstimatorKind.SnIPS:
        value = v_snips(logged, target, logging_policy, weight_clip)
    else:
        model = _model_for(spec, models)
        if kind in (EstimatorKind.DM, EstimatorKind.DM_R, EstimatorKind.DM_I):
            value = v_dm(logged, target, model)
        elif kind in (EstimatorKind.DR, EstimatorKind.TR):
            value = v_dr(logged, target, logging_policy, model, weight_clip)
        elif kind in (EstimatorKind.SnDR, EstimatorKind.SnTR):
            value = v_sndr(logged, target, logging_policy, model, weight_clip)
        elif kind in (EstimatorKind.DR_SWITCH, EstimatorKind.TR_SWITCH):
            value = v_dr_switch(logged, target, logging_policy, model, spec.tau, weight_clip)
        else:
            value = v_dr_shrink(logged, target, logging_policy, model, spec.shrink_cap, weight_clip)
    _logger.debug("%s estimate %.6f", spec.name, value)
    return EstimatorResult(spec=spec, value=value)
