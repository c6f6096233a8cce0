from . import core_math
from . import policies
from . import robust_regression
from . import reward_models
from . import estimators
from . import bandit_sim
from . import diagnostics
from . import experiment_config
from . import harness
