from . import datasets
from . import estimator_spec
from . import experiment_report
