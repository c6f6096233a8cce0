import hypothesis.strategies as st
import numpy as np
import pytest

from tr_ope.models.datasets import LabeledDataset, LoggedDataset
from tr_ope.services.bandit_sim import SyntheticBandit
from tr_ope.services.core_math import FeedForwardNet, Layer, NetShape, init_net
from tr_ope.services.experiment_config import ExperimentConfig
from tr_ope.services.policies import TablePolicy
from tr_ope.services.reward_models import TableRewardModel
from tr_ope.services.robust_regression import BaseGaussian, RhoParams, RobustRegressor


class BanditCase:
    """A finite bandit with known policies, its reward table and one logged sample."""

    def __init__(self, bandit, logging_policy, target, logged):
        self.bandit = bandit
        self.logging_policy = logging_policy
        self.target = target
        self.logged = logged

    @property
    def reward_table(self):
        return TableRewardModel(contexts=self.bandit.contexts, table=self.bandit.rewards)


def random_bandit_case(seed, n_contexts=4, n_actions=3, n_rows=30, n_features=2):
    rng = np.random.default_rng(seed)
    contexts = np.arange(n_contexts * n_features, dtype=np.float64).reshape(n_contexts, n_features)
    contexts = contexts + rng.uniform(0.0, 0.5, size=contexts.shape)
    bandit = SyntheticBandit(
        contexts=contexts,
        context_probabilities=rng.dirichlet(np.ones(n_contexts)),
        rewards=rng.random((n_contexts, n_actions)),
    )
    logging_table = 0.9 * rng.dirichlet(np.ones(n_actions), size=n_contexts) + 0.1 / n_actions
    target_table = rng.dirichlet(np.ones(n_actions), size=n_contexts)
    logging_policy = TablePolicy(contexts, logging_table)
    target = TablePolicy(contexts, target_table)
    logged = bandit.sample_logged(logging_policy, n_rows, seed=seed)
    return BanditCase(bandit, logging_policy, target, logged)


@st.composite
def bandit_cases(draw):
    return random_bandit_case(
        seed=draw(st.integers(min_value=0, max_value=2 ** 32 - 1)),
        n_contexts=draw(st.integers(min_value=2, max_value=6)),
        n_actions=draw(st.integers(min_value=2, max_value=4)),
        n_rows=draw(st.integers(min_value=1, max_value=40)),
    )


def constant_feature_regressor(feature, context_dim=1, n_actions=2, rho_r=0.0, rho_xr=None,
                               mu0=0.0, sigma0_sq=1.0, **kwargs):
    """Regressor whose feature net returns `feature` for every input."""
    feature = np.asarray(feature, dtype=np.float64)
    layer = Layer(weight=np.zeros((feature.shape[0], context_dim + n_actions)), bias=feature)
    return RobustRegressor(
        net=FeedForwardNet((layer,)),
        rho=RhoParams(rho_r=rho_r, rho_xr=np.zeros_like(feature) if rho_xr is None else rho_xr),
        n_actions=n_actions,
        base=BaseGaussian(mu0=mu0, sigma0_sq=sigma0_sq),
        **kwargs,
    )


def random_regressor(seed, context_dim=2, n_actions=3, mu0=0.5, net_shape=NetShape(2, 4)):
    rng = np.random.default_rng(seed)
    net = init_net(net_shape.layer_sizes(context_dim + n_actions, net_shape.hidden_width), seed=seed)
    return RobustRegressor(
        net=net,
        rho=RhoParams(rho_r=float(rng.uniform(0.2, 1.0)), rho_xr=rng.normal(0.0, 0.5, net.output_dim)),
        n_actions=n_actions,
        base=BaseGaussian(mu0=mu0, sigma0_sq=float(rng.uniform(0.5, 2.0))),
    )


@pytest.fixture
def labeled_blobs():
    """Three well separated gaussian classes in two dimensions."""
    rng = np.random.default_rng(7)
    centres = np.array([[0.0, 4.0], [4.0, 0.0], [-4.0, -4.0]])
    labels = np.repeat(np.arange(3), 100)
    contexts = centres[labels] + rng.normal(0.0, 0.5, size=(300, 2))
    return LabeledDataset(contexts=contexts, labels=labels, n_actions=3)


@pytest.fixture
def uniform_log():
    rng = np.random.default_rng(3)
    n_rows = 200
    return LoggedDataset(
        contexts=rng.normal(size=(n_rows, 2)),
        actions=rng.integers(2, size=n_rows),
        rewards=rng.integers(2, size=n_rows).astype(float),
        n_actions=2,
        propensities=np.full(n_rows, 0.5),
    )


@pytest.fixture
def tiny_config():
    return ExperimentConfig(
        synthetic_contexts=10,
        synthetic_features=3,
        synthetic_actions=3,
        synthetic_rows=120,
        n_trials=2,
        logging_epochs=1,
        policy_epochs=1,
        classifier_epochs=1,
        reward_epochs=1,
        n_layers=2,
        hidden_width=8,
        learning_rate=0.01,
        batch_size=16,
    )


TINY_INI = """\
[dataset]
synthetic_contexts = 10
synthetic_features = 3
synthetic_actions = 3
synthetic_rows = 120

[logging_policy]
mode = uniform
epochs = 1
policy_epochs = 1

[experiment]
trials = 2
seed = 4
classifier_epochs = 1

[network]
layers = 2
hidden_width = 8

[sgd]
learning_rate = 0.01
batch_size = 16

[reward]
epochs = 1
"""


@pytest.fixture
def tiny_ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI, encoding="utf-8")
    return path
