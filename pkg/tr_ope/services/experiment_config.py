"""
Experiment configuration and its INI file form.

Every field of ExperimentConfig is addressable as `[section] key`; see
CONFIG_LAYOUT. Unknown sections or keys are rejected.
"""
import configparser
import dataclasses
import logging
import math
import numbers
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from ..exceptions import RejectedInputError, ValidationError
from ..models.estimator_spec import EstimatorKind, default_estimator_specs
from ..utils import check_scalar
from .bandit_sim import MAX_SYNTHETIC_ACTIONS, MAX_SYNTHETIC_CONTEXTS, SplitConfig
from .core_math import NetShape, SgdConfig
from .robust_regression import BaseGaussian

_logger = logging.getLogger(__name__)

LOGGING_MODES = ("uniform", "biased_known", "estimated")

CONFIG_LAYOUT: Dict[str, Dict[str, str]] = {
    "dataset": {
        "path": "dataset_path",
        "label_column": "label_column",
        "train_fraction": "train_fraction",
        "synthetic_contexts": "synthetic_contexts",
        "synthetic_features": "synthetic_features",
        "synthetic_actions": "synthetic_actions",
        "synthetic_rows": "synthetic_rows",
        "synthetic_seed": "synthetic_seed",
    },
    "logging_policy": {
        "mode": "logging_mode",
        "bias_fraction": "bias_fraction",
        "temperature": "logging_temperature",
        "floor": "probability_floor",
        "epochs": "logging_epochs",
        "policy_epochs": "policy_epochs",
    },
    "experiment": {
        "trials": "n_trials",
        "seed": "seed",
        "jobs": "jobs",
        "classifier_epochs": "classifier_epochs",
        "evaluation_temperature": "evaluation_temperature",
        "weight_clip": "weight_clip",
    },
    "estimators": {
        "kinds": "estimators",
        "tau": "tau",
        "shrink_cap": "shrink_cap",
    },
    "network": {
        "layers": "n_layers",
        "hidden_width": "hidden_width",
    },
    "sgd": {
        "learning_rate": "learning_rate",
        "batch_size": "batch_size",
        "spectral_norm": "spectral_norm",
    },
    "reward": {
        "epochs": "reward_epochs",
    },
    "robust": {
        "mu0": "mu0",
        "sigma0_sq": "sigma0_sq",
        "eta": "eta",
        "ratio_clip": "ratio_clip",
        "rho_cap": "rho_cap",
    },
    "diagnostics": {
        "enabled": "diagnostics",
        "eta1": "eta1",
        "eta2": "eta2",
        "delta": "delta",
        "epsilon": "epsilon",
        "constant": "bound_constant",
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: data source, logging regime, estimators and training
    hyperparameters. Without `dataset_path` a one-hot synthetic bandit is used.
    """

    dataset_path: Optional[str] = None
    label_column: str = "label"
    train_fraction: float = 0.6
    synthetic_contexts: int = 20
    synthetic_features: int = 4
    synthetic_actions: int = 4
    synthetic_rows: int = 1000
    synthetic_seed: int = 0

    logging_mode: str = "uniform"
    bias_fraction: float = 0.1
    logging_temperature: float = 1.0
    probability_floor: float = 1e-4
    logging_epochs: int = 5
    policy_epochs: int = 20

    n_trials: int = 20
    seed: int = 0
    jobs: int = 1
    classifier_epochs: int = 5
    evaluation_temperature: float = 1.0
    weight_clip: float = 1e4

    estimators: Tuple[str, ...] = tuple(kind.value for kind in EstimatorKind)
    tau: float = 0.5
    shrink_cap: float = 0.5

    n_layers: int = 4
    hidden_width: int = 64

    learning_rate: float = 1e-4
    batch_size: int = 1
    spectral_norm: bool = True

    reward_epochs: int = 20

    mu0: float = 0.5
    sigma0_sq: float = 1.0
    eta: float = 1e-3
    ratio_clip: float = 100.0
    rho_cap: float = 1e3

    diagnostics: bool = True
    eta1: Optional[float] = None
    eta2: Optional[float] = None
    delta: float = 0.05
    epsilon: float = 0.0
    bound_constant: float = 1.0

    def __post_init__(self):
        if self.logging_mode not in LOGGING_MODES:
            raise ValidationError(f"logging mode must be one of {LOGGING_MODES}, got {self.logging_mode!r}")
        kinds = tuple(EstimatorKind.parse(name).value for name in self.estimators)
        if not kinds:
            raise ValidationError("at least one estimator is required")
        if len(set(kinds)) != len(kinds):
            raise ValidationError(f"estimator list has duplicates: {', '.join(kinds)}")
        object.__setattr__(self, "estimators", kinds)
        try:
            check_scalar(self.n_trials, "trials", numbers.Integral, min_val=1)
            check_scalar(self.seed, "seed", numbers.Integral, min_val=0)
            check_scalar(self.jobs, "jobs", numbers.Integral, min_val=-1)
            if self.jobs == 0:
                raise RejectedInputError("jobs must be positive or -1 (all cores)")
            check_scalar(self.bias_fraction, "bias_fraction", numbers.Real, min_val=0.0, max_val=1.0)
            for name in ("logging_temperature", "evaluation_temperature", "weight_clip", "ratio_clip"):
                check_scalar(getattr(self, name), name, numbers.Real, min_val=0.0, include_boundaries="neither")
            check_scalar(self.probability_floor, "probability_floor", numbers.Real, min_val=0.0,
                         max_val=1.0 / 2)
            for name in ("logging_epochs", "policy_epochs", "classifier_epochs", "reward_epochs"):
                check_scalar(getattr(self, name), name, numbers.Integral, min_val=0)
            for name in ("tau", "shrink_cap", "eta", "epsilon", "bound_constant"):
                check_scalar(getattr(self, name), name, numbers.Real, min_val=0.0)
            for name in ("eta1", "eta2"):
                if getattr(self, name) is not None:
                    check_scalar(getattr(self, name), name, numbers.Real, min_val=0.0)
            check_scalar(self.delta, "delta", numbers.Real, min_val=0.0, max_val=1.0, include_boundaries="neither")
            if not math.isfinite(self.ratio_clip) or not math.isfinite(self.rho_cap):
                raise RejectedInputError("ratio_clip and rho_cap must be finite")
            if self.dataset_path is None:
                check_scalar(self.synthetic_contexts, "synthetic_contexts", numbers.Integral, min_val=2,
                             max_val=MAX_SYNTHETIC_CONTEXTS)
                check_scalar(self.synthetic_actions, "synthetic_actions", numbers.Integral, min_val=2,
                             max_val=MAX_SYNTHETIC_ACTIONS)
                check_scalar(self.synthetic_features, "synthetic_features", numbers.Integral, min_val=1)
                check_scalar(self.synthetic_rows, "synthetic_rows", numbers.Integral, min_val=2)
                check_scalar(self.synthetic_seed, "synthetic_seed", numbers.Integral, min_val=0)
            self.split_config(0)
            self.net_shape()
            self.reward_sgd(0)
            self.base()
        except RejectedInputError as error:
            raise ValidationError(str(error)) from error

    def net_shape(self) -> NetShape:
        return NetShape(n_layers=self.n_layers, hidden_width=self.hidden_width)

    def _sgd(self, epochs, seed):
        return SgdConfig(learning_rate=self.learning_rate, epochs=epochs, batch_size=self.batch_size,
                         seed=int(seed), spectral_norm=self.spectral_norm)

    def reward_sgd(self, seed) -> SgdConfig:
        return self._sgd(self.reward_epochs, seed)

    def classifier_sgd(self, seed) -> SgdConfig:
        return self._sgd(self.classifier_epochs, seed)

    def logging_sgd(self, seed) -> SgdConfig:
        return self._sgd(self.logging_epochs, seed)

    def policy_sgd(self, seed) -> SgdConfig:
        return self._sgd(self.policy_epochs, seed)

    def split_config(self, seed) -> SplitConfig:
        return SplitConfig(train_fraction=self.train_fraction, seed=int(seed))

    def base(self) -> BaseGaussian:
        return BaseGaussian(mu0=self.mu0, sigma0_sq=self.sigma0_sq)

    def estimator_specs(self):
        return default_estimator_specs(tau=self.tau, shrink_cap=self.shrink_cap, kinds=self.estimators)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with the non-None overrides applied (CLI flags)."""
        values = {name: value for name, value in overrides.items() if value is not None}
        try:
            return dataclasses.replace(self, **values)
        except TypeError as error:
            raise ValidationError(str(error)) from error

    def as_dict(self):
        return dataclasses.asdict(self)


_FIELDS = {item.name: item for item in dataclasses.fields(ExperimentConfig)}


def _parse_value(parser, section, key, name):
    raw = parser.get(section, key).strip()
    default = _FIELDS[name].default
    if name in ("dataset_path", "eta1", "eta2"):
        if raw == "" or raw.lower() == "none":
            return None
        return raw if name == "dataset_path" else float(raw)
    if name == "estimators":
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if isinstance(default, bool):
        return parser.getboolean(section, key)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def config_from_parser(parser: configparser.ConfigParser) -> ExperimentConfig:
    """Map `section.key` entries of a parsed INI file onto ExperimentConfig fields."""
    values = {}
    for section in parser.sections():
        if section not in CONFIG_LAYOUT:
            raise ValidationError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in CONFIG_LAYOUT[section]:
                raise ValidationError(f"unknown config key {section}.{key}")
            name = CONFIG_LAYOUT[section][key]
            try:
                values[name] = _parse_value(parser, section, key, name)
            except ValueError as error:
                raise ValidationError(f"{section}.{key}: {error}") from error
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    """Read an INI experiment file."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as error:
        raise ValidationError(f"cannot read config {path}: {error}") from error
    except configparser.Error as error:
        raise ValidationError(f"malformed config {path}: {error}") from error
    config = config_from_parser(parser)
    _logger.info("Loaded experiment config %s (%s trials, logging %s)", path, config.n_trials, config.logging_mode)
    return config


def config_to_ini(config: ExperimentConfig) -> str:
    """INI text that load_config reads back into an equal config."""
    lines = []
    for section, keys in CONFIG_LAYOUT.items():
        lines.append(f"[{section}]")
        for key, name in keys.items():
            value = getattr(config, name)
            if value is None:
                text = ""
            elif isinstance(value, tuple):
                text = ", ".join(value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)
