"""
Robust regression of rewards under the covariate shift from p(a|x) to pi(a|x).

The reward of (x, a) is a conditional Gaussian whose natural parameters mix a
base Gaussian N(mu0, sigma0_sq) with features f(x, a) of a small net, scaled
by the density ratio s = p(a|x) / pi(a|x):

    1 / sigma_sq      = 1 / sigma0_sq + 2 s rho_r
    mu / sigma_sq     = mu0 / sigma0_sq - 2 s <rho_xr, f(x, a)>

Where the logging policy seldom takes an action the target takes (s -> 0)
the prediction falls back to the base distribution.

Training minimizes the importance weighted (pi/p = 1/s) log-loss of the
Gaussian relative to the base distribution. Its gradients are

    d/d rho_r  = r^2 - mu^2 - sigma_sq
    d/d rho_xr = 2 (r - mu) f
    d/d f      = 2 (r - mu) rho_xr

averaged over the minibatch; rho takes a plain descent step with L2 shrinkage
eta and the feature net a backpropagated SGD step.
"""
import logging
import numbers
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np
from itsdangerous import BadSignature, URLSafeSerializer

from ..exceptions import ModelFormatError, RejectedInputError, TrainingFaultError
from ..models.datasets import LoggedDataset
from ..utils import check_array, check_finite, check_scalar
from .core_math import (
    FeedForwardNet,
    Layer,
    NetShape,
    SgdConfig,
    backward,
    forward,
    init_net,
    iterate_minibatches,
    sgd_step,
    spectral_normalize_net,
)
from .policies import Policy, action_probabilities, logged_propensities

_logger = logging.getLogger(__name__)

FORMAT_TAG = "tr-ope-robust-v1"
DEFAULT_SECRET_KEY = "tr-ope"
DEFAULT_RATIO_CLIP = 100.0
DEFAULT_RHO_CAP = 1e3


@dataclass(frozen=True, eq=False)
class RhoParams:
    rho_r: float
    rho_xr: np.ndarray

    def __post_init__(self):
        check_scalar(self.rho_r, "rho_r", numbers.Real, min_val=0.0)
        rho_xr = check_finite(check_array(self.rho_xr, "rho_xr", 1), "rho_xr")
        object.__setattr__(self, "rho_r", float(self.rho_r))
        object.__setattr__(self, "rho_xr", rho_xr)

    @classmethod
    def zeros(cls, feature_dim):
        return cls(rho_r=0.0, rho_xr=np.zeros(feature_dim))


@dataclass(frozen=True)
class BaseGaussian:
    """Prior N(mu0, sigma0_sq); N(0.5, 1) suits rewards in [0, 1]."""

    mu0: float = 0.5
    sigma0_sq: float = 1.0

    def __post_init__(self):
        check_scalar(self.mu0, "mu0", numbers.Real)
        check_scalar(self.sigma0_sq, "sigma0_sq", numbers.Real, min_val=0.0,
                     include_boundaries="neither")
        if not (np.isfinite(self.mu0) and np.isfinite(self.sigma0_sq)):
            raise RejectedInputError("the base Gaussian needs finite parameters")


@dataclass(frozen=True, eq=False)
class RobustRegressor:
    """
    Feature net over context ⊕ one-hot(action), robustness parameters and
    base distribution. `history` holds the training objective per epoch.
    """

    net: FeedForwardNet
    rho: RhoParams
    n_actions: int
    base: BaseGaussian = field(default_factory=BaseGaussian)
    eta: float = 0.0
    reward_range: Tuple[float, float] = (0.0, 1.0)
    ratio_clip: float = DEFAULT_RATIO_CLIP
    rho_cap: float = DEFAULT_RHO_CAP
    history: Tuple[float, ...] = ()

    def __post_init__(self):
        check_scalar(self.n_actions, "n_actions", numbers.Integral, min_val=1)
        check_scalar(self.eta, "eta", numbers.Real, min_val=0.0)
        check_scalar(self.ratio_clip, "ratio_clip", numbers.Real, min_val=0.0,
                     include_boundaries="neither")
        check_scalar(self.rho_cap, "rho_cap", numbers.Real, min_val=0.0)
        if not (np.isfinite(self.ratio_clip) and np.isfinite(self.rho_cap)):
            raise RejectedInputError("ratio_clip and rho_cap must be finite")
        if self.net.input_dim <= self.n_actions:
            raise RejectedInputError("the feature net input must hold a context and an action encoding")
        if self.rho.rho_xr.shape != (self.net.output_dim,):
            raise RejectedInputError(
                f"rho_xr has length {self.rho.rho_xr.shape[0]}, features have {self.net.output_dim}"
            )
        if self.rho.rho_r > self.rho_cap:
            raise RejectedInputError(f"rho_r {self.rho.rho_r} exceeds its cap {self.rho_cap}")
        r_min, r_max = self.reward_range
        if not r_min < r_max:
            raise RejectedInputError("reward_range must satisfy r_min < r_max")
        object.__setattr__(self, "reward_range", (float(r_min), float(r_max)))
        object.__setattr__(self, "history", tuple(float(value) for value in self.history))

    @property
    def context_dim(self):
        return self.net.input_dim - self.n_actions

    @property
    def feature_dim(self):
        return self.net.output_dim


def action_encoding(action, n_actions) -> np.ndarray:
    """One-hot vector of length `n_actions`."""
    check_scalar(n_actions, "n_actions", numbers.Integral, min_val=1)
    check_scalar(action, "action", numbers.Integral, min_val=0, max_val=n_actions - 1)
    encoding = np.zeros(int(n_actions))
    encoding[int(action)] = 1.0
    return encoding


def encode_inputs(contexts, actions, n_actions) -> np.ndarray:
    """Rows of context ⊕ one-hot(action)."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
    if contexts.ndim != 2 or actions.ndim != 1 or contexts.shape[0] != actions.shape[0]:
        raise RejectedInputError("one action per context row is required")
    if actions.size and (actions.min() < 0 or actions.max() >= n_actions):
        raise RejectedInputError(f"action index out of range for {n_actions} actions")
    return np.hstack([contexts, np.eye(n_actions)[actions]])


def density_ratio(logging_probabilities, target_probabilities, clip=DEFAULT_RATIO_CLIP):
    """
    p(a|x) / pi(a|x) clipped to [0, clip]; an action the target never takes
    gets the clip value.
    """
    p = np.asarray(logging_probabilities, dtype=np.float64)
    pi = np.asarray(target_probabilities, dtype=np.float64)
    if p.shape != pi.shape:
        raise RejectedInputError("logging and target probabilities must have the same shape")
    if np.any(~(p >= 0.0)) or np.any(~(pi >= 0.0)):
        raise RejectedInputError("probabilities must be nonnegative")
    positive = pi > 0.0
    ratio = np.where(positive, p / np.where(positive, pi, 1.0), clip)
    ratio = np.clip(ratio, 0.0, clip)
    return float(ratio) if ratio.ndim == 0 else ratio


def _clip_ratios(regressor, ratios, n_rows):
    ratios = np.broadcast_to(np.asarray(ratios, dtype=np.float64), (n_rows,))
    if np.any(~(ratios >= 0.0)):
        raise RejectedInputError("density ratios must be nonnegative numbers")
    return np.minimum(ratios, regressor.ratio_clip)


def _gaussian(regressor, features, ratios):
    mu0, sigma0_sq = regressor.base.mu0, regressor.base.sigma0_sq
    scale = 1.0 + 2.0 * ratios * regressor.rho.rho_r * sigma0_sq
    sigma_sq = sigma0_sq / scale
    mu = (mu0 - 2.0 * ratios * sigma0_sq * (features @ regressor.rho.rho_xr)) / scale
    return mu, sigma_sq


def _state(regressor, inputs, ratios):
    features = forward(regressor.net, inputs)
    mu, sigma_sq = _gaussian(regressor, features, ratios)
    return features, mu, sigma_sq


def _encoded(regressor, contexts, actions, ratios):
    inputs = encode_inputs(contexts, actions, regressor.n_actions)
    if inputs.shape[1] != regressor.net.input_dim:
        raise RejectedInputError(
            f"context dimension {inputs.shape[1] - regressor.n_actions} does not match "
            f"regressor context dimension {regressor.context_dim}"
        )
    return inputs, _clip_ratios(regressor, ratios, inputs.shape[0])


def predict_batch(regressor: RobustRegressor, contexts, actions, ratios):
    """Vectorized predict: (mu, sigma_sq) arrays, one entry per row."""
    inputs, ratios = _encoded(regressor, contexts, actions, ratios)
    _, mu, sigma_sq = _state(regressor, inputs, ratios)
    return mu, sigma_sq


def predict(regressor: RobustRegressor, context, action, ratio) -> Tuple[float, float]:
    """(mu, sigma_sq) for one (context, action) at density ratio `ratio`."""
    context = np.asarray(context, dtype=np.float64)
    if context.ndim != 1:
        raise RejectedInputError("predict expects a single context vector")
    mu, sigma_sq = predict_batch(regressor, context[None, :], [action], ratio)
    return float(mu[0]), float(sigma_sq[0])


def predict_clipped_batch(regressor: RobustRegressor, contexts, actions, ratios) -> np.ndarray:
    """Vectorized predict_clipped."""
    mu, _ = predict_batch(regressor, contexts, actions, ratios)
    return np.clip(mu, *regressor.reward_range)


def predict_clipped(regressor: RobustRegressor, context, action, ratio) -> float:
    """Mean prediction rounded into the reward range."""
    mu, _ = predict(regressor, context, action, ratio)
    r_min, r_max = regressor.reward_range
    return min(r_max, max(r_min, mu))


def _check_batch(inputs, rewards):
    rewards = check_array(rewards, "rewards", 1)
    if rewards.shape[0] == 0:
        raise RejectedInputError("the minibatch is empty")
    if rewards.shape[0] != inputs.shape[0]:
        raise RejectedInputError("one reward per row is required")
    return rewards


def rho_gradients(regressor: RobustRegressor, contexts, actions, rewards, ratios):
    """
    (mean(r^2) - mean(mu^2 + sigma_sq), mean((r - mu) f)) over a minibatch.
    """
    inputs, ratios = _encoded(regressor, contexts, actions, ratios)
    rewards = _check_batch(inputs, rewards)
    features, mu, sigma_sq = _state(regressor, inputs, ratios)
    grad_rho_r = float(np.mean(rewards ** 2) - np.mean(mu ** 2 + sigma_sq))
    grad_rho_xr = ((rewards - mu)[:, None] * features).mean(axis=0)
    if not (np.isfinite(grad_rho_r) and np.all(np.isfinite(grad_rho_xr))):
        raise TrainingFaultError("non-finite rho gradient")
    return grad_rho_r, grad_rho_xr


def _relative_loss(regressor, inputs, rewards, ratios):
    features, mu, sigma_sq = _state(regressor, inputs, ratios)
    mu0, sigma0_sq = regressor.base.mu0, regressor.base.sigma0_sq
    target_nll = (rewards - mu) ** 2 / (2.0 * sigma_sq) + 0.5 * np.log(sigma_sq)
    base_nll = (rewards - mu0) ** 2 / (2.0 * sigma0_sq) + 0.5 * np.log(sigma0_sq)
    # exact value of the weighted difference as the ratio goes to 0
    limit = (regressor.rho.rho_r * (rewards ** 2 - mu0 ** 2 - sigma0_sq)
             + 2.0 * (features @ regressor.rho.rho_xr) * (rewards - mu0))
    positive = ratios > 0.0
    losses = np.where(positive, (target_nll - base_nll) / np.where(positive, ratios, 1.0), limit)
    return float(losses.mean())


def relative_loss(regressor: RobustRegressor, contexts, actions, rewards, ratios) -> float:
    """
    Mean over rows of (pi/p) * [NLL of N(mu, sigma_sq) - NLL of the base].

    Its negative is the importance weighted target log-likelihood gain that
    training maximizes.
    """
    inputs, ratios = _encoded(regressor, contexts, actions, ratios)
    rewards = _check_batch(inputs, rewards)
    return _relative_loss(regressor, inputs, rewards, ratios)


def feature_gradient(regressor: RobustRegressor, contexts, actions, rewards, ratios) -> np.ndarray:
    """d relative_loss / d f, one row per sample."""
    inputs, ratios = _encoded(regressor, contexts, actions, ratios)
    rewards = _check_batch(inputs, rewards)
    _, mu, _ = _state(regressor, inputs, ratios)
    return 2.0 * (rewards - mu)[:, None] * regressor.rho.rho_xr[None, :] / rewards.shape[0]


def theta_gradients(regressor: RobustRegressor, contexts, actions, rewards, ratios):
    """relative_loss gradient for every (weight, bias) of the feature net."""
    inputs, _ = _encoded(regressor, contexts, actions, ratios)
    gradients, _ = backward(regressor.net, inputs,
                            feature_gradient(regressor, contexts, actions, rewards, ratios))
    return gradients


def _step(regressor, inputs, rewards, ratios, config, epoch):
    features, mu, sigma_sq = _state(regressor, inputs, ratios)
    rho_r, rho_xr = regressor.rho.rho_r, regressor.rho.rho_xr
    residual = rewards - mu
    grad_rho_r = np.mean(rewards ** 2 - mu ** 2 - sigma_sq) + regressor.eta * rho_r
    grad_rho_xr = 2.0 * (residual[:, None] * features).mean(axis=0) + regressor.eta * rho_xr
    if not (np.isfinite(grad_rho_r) and np.all(np.isfinite(grad_rho_xr))):
        _logger.error("Non-finite rho gradient in epoch %s", epoch)
        raise TrainingFaultError(f"non-finite rho gradient in epoch {epoch}", epoch=epoch)
    output_gradient = 2.0 * residual[:, None] * rho_xr[None, :] / rewards.shape[0]
    gradients, _ = backward(regressor.net, inputs, output_gradient)
    try:
        net = sgd_step(regressor.net, gradients, config)
    except TrainingFaultError as error:
        _logger.error("Feature net diverged in epoch %s", epoch)
        raise TrainingFaultError(f"{error} in epoch {epoch}", epoch=epoch) from error
    if config.spectral_norm:
        net = spectral_normalize_net(net)
    new_rho_xr = rho_xr - config.learning_rate * grad_rho_xr
    if not np.all(np.isfinite(new_rho_xr)):
        _logger.error("rho_xr overflowed in epoch %s", epoch)
        raise TrainingFaultError(f"rho_xr overflowed in epoch {epoch}", epoch=epoch)
    rho = RhoParams(
        rho_r=float(np.clip(rho_r - config.learning_rate * grad_rho_r, 0.0, regressor.rho_cap)),
        rho_xr=new_rho_xr,
    )
    return replace(regressor, net=net, rho=rho)


def _fit(logged, ratios, net_shape, config, eta, base, ratio_clip, rho_cap, label):
    if len(logged) == 0:
        raise RejectedInputError("cannot train a reward model on an empty log")
    inputs = encode_inputs(logged.contexts, logged.actions, logged.n_actions)
    net = init_net(net_shape.layer_sizes(inputs.shape[1], net_shape.hidden_width), seed=config.seed)
    regressor = RobustRegressor(
        net=net,
        rho=RhoParams.zeros(net.output_dim),
        n_actions=logged.n_actions,
        base=base,
        eta=eta,
        reward_range=logged.reward_range,
        ratio_clip=ratio_clip,
        rho_cap=rho_cap,
    )
    ratios = _clip_ratios(regressor, ratios, len(logged))
    rewards = logged.rewards
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        for batch in iterate_minibatches(len(logged), config.batch_size, rng):
            regressor = _step(regressor, inputs[batch], rewards[batch], ratios[batch], config, epoch)
        objective = -_relative_loss(regressor, inputs, rewards, ratios)
        if not np.isfinite(objective):
            _logger.error("%s training objective is not finite in epoch %s", label, epoch)
            raise TrainingFaultError(f"training objective diverged in epoch {epoch}", epoch=epoch)
        history.append(objective)
        _logger.debug("%s epoch %s objective %.6f rho_r %.4f", label, epoch, objective,
                      regressor.rho.rho_r)
    _logger.info("Trained %s regressor on %s records for %s epochs", label, len(logged), config.epochs)
    return replace(regressor, history=tuple(history))


def train_robust(logged: LoggedDataset, target: Policy, logging_policy: Policy = None,
                 net_shape: NetShape = NetShape(), config: SgdConfig = SgdConfig(), eta=0.0,
                 base: BaseGaussian = BaseGaussian(), ratio_clip=DEFAULT_RATIO_CLIP,
                 rho_cap=DEFAULT_RHO_CAP) -> RobustRegressor:
    """
    Fit the shift-aware regressor on logged data.

    Each record is weighted by its density ratio p(a|x)/pi(a|x); p comes from
    the logged propensities when present, else from `logging_policy`.
    """
    if len(logged) == 0:
        raise RejectedInputError("cannot train a reward model on an empty log")
    if target.n_actions != logged.n_actions:
        raise RejectedInputError(f"target policy has {target.n_actions} actions, log has {logged.n_actions}")
    ratios = density_ratio(
        logged_propensities(logged, logging_policy),
        action_probabilities(target, logged.contexts, logged.actions),
        ratio_clip,
    )
    _logger.info("Density ratios on the log: mean %.4f, max %.4f", ratios.mean(), ratios.max())
    return _fit(logged, ratios, net_shape, config, eta, base, ratio_clip, rho_cap, "robust")


def train_iid(logged: LoggedDataset, net_shape: NetShape = NetShape(), config: SgdConfig = SgdConfig(),
              eta=0.0, base: BaseGaussian = BaseGaussian(), ratio_clip=DEFAULT_RATIO_CLIP,
              rho_cap=DEFAULT_RHO_CAP) -> RobustRegressor:
    """
    The same regressor with every density ratio fixed to 1, i.e. ignoring the
    shift. Callers should predict with ratio 1 as well.
    """
    ratios = np.ones(len(logged))
    return _fit(logged, ratios, net_shape, config, eta, base, ratio_clip, rho_cap, "iid")


def dump_regressor(regressor: RobustRegressor, secret_key=DEFAULT_SECRET_KEY) -> str:
    """Signed, URL-safe text dump; floats survive the round trip exactly."""
    payload = {
        "format": FORMAT_TAG,
        "layer_sizes": [regressor.net.input_dim] + [layer.output_dim for layer in regressor.net.layers],
        "layers": [
            {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
                "power_vector": None if layer.power_vector is None else layer.power_vector.tolist(),
            }
            for layer in regressor.net.layers
        ],
        "rho_r": regressor.rho.rho_r,
        "rho_xr": regressor.rho.rho_xr.tolist(),
        "mu0": float(regressor.base.mu0),
        "sigma0_sq": float(regressor.base.sigma0_sq),
        "n_actions": int(regressor.n_actions),
        "eta": float(regressor.eta),
        "reward_range": list(regressor.reward_range),
        "ratio_clip": float(regressor.ratio_clip),
        "rho_cap": float(regressor.rho_cap),
        "history": list(regressor.history),
    }
    return URLSafeSerializer(secret_key, salt=FORMAT_TAG).dumps(payload)


def load_regressor(text, secret_key=DEFAULT_SECRET_KEY) -> RobustRegressor:
    serializer = URLSafeSerializer(secret_key, salt=FORMAT_TAG)
    try:
        payload = serializer.loads(text)
    except BadSignature as error:
        raise ModelFormatError("model dump is not signed with this key or is corrupt") from error
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_TAG:
        raise ModelFormatError(f"expected a {FORMAT_TAG} model dump")
    try:
        layers = tuple(
            Layer(
                weight=np.array(layer["weight"], dtype=np.float64),
                bias=np.array(layer["bias"], dtype=np.float64),
                activation=layer["activation"],
                power_vector=None if layer["power_vector"] is None
                else np.array(layer["power_vector"], dtype=np.float64),
            )
            for layer in payload["layers"]
        )
        net = FeedForwardNet(layers)
        if payload["layer_sizes"] != [net.input_dim] + [layer.output_dim for layer in net.layers]:
            raise ModelFormatError("layer sizes do not match the stored weights")
        return RobustRegressor(
            net=net,
            rho=RhoParams(rho_r=payload["rho_r"], rho_xr=np.array(payload["rho_xr"], dtype=np.float64)),
            n_actions=payload["n_actions"],
            base=BaseGaussian(mu0=payload["mu0"], sigma0_sq=payload["sigma0_sq"]),
            eta=payload["eta"],
            reward_range=tuple(payload["reward_range"]),
            ratio_clip=payload["ratio_clip"],
            rho_cap=payload["rho_cap"],
            history=tuple(payload["history"]),
        )
    except (KeyError, TypeError, ValueError) as error:
        if isinstance(error, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model dump: {error}") from error


def save_regressor(regressor: RobustRegressor, path, secret_key=DEFAULT_SECRET_KEY):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dump_regressor(regressor, secret_key))
    _logger.info("Saved robust regressor to %s", path)


def read_regressor(path, secret_key=DEFAULT_SECRET_KEY) -> RobustRegressor:
    with open(path, encoding="utf-8") as handle:
        return load_regressor(handle.read().strip(), secret_key)
