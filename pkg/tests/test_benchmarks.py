import os

import pytest

from tr_ope.models.estimator_spec import BASELINE_FAMILY, ROBUST_FAMILY
from tr_ope.services.experiment_config import load_config
from tr_ope.services.harness import run_experiment

ROOT = os.path.join(os.path.dirname(__file__), os.pardir)
CONFIGS = os.path.join(ROOT, "config")
DATASETS = {
    "vehicle": os.path.join(ROOT, "data", "vehicle.csv"),
    "optdigits": os.path.join(ROOT, "data", "optdigits.csv"),
}

pytestmark = pytest.mark.slow


def _config(name, **overrides):
    return load_config(os.path.join(CONFIGS, name)).with_overrides(**overrides)


def _rmse(report, name):
    return report.summary(name).rmse_mean


def test_uniform_logging_keeps_dr_and_tr_close_on_synthetic_data():
    report = run_experiment(_config("synthetic_uniform.ini"))
    assert _rmse(report, "DR") <= 0.10
    assert _rmse(report, "TR") <= 0.10


@pytest.mark.skipif(not os.path.exists(DATASETS["vehicle"]), reason="vehicle data not downloaded")
def test_uniform_logging_keeps_dr_and_tr_close_on_vehicle():
    config = _config("vehicle_estimated.ini", dataset_path=DATASETS["vehicle"], logging_mode="uniform")
    report = run_experiment(config)
    assert report.n_trials == 20
    assert _rmse(report, "DR") <= 0.10
    assert _rmse(report, "TR") <= 0.10


@pytest.mark.skipif(not all(os.path.exists(path) for path in DATASETS.values()),
                    reason="vehicle and optdigits data not downloaded")
def test_robust_family_wins_with_an_estimated_logging_policy():
    losses = []
    for name, path in DATASETS.items():
        report = run_experiment(_config(f"{name}_estimated.ini", dataset_path=path))
        best = report.best_by_family()
        if best[ROBUST_FAMILY].rmse_mean > best[BASELINE_FAMILY].rmse_mean:
            losses.append(name)
    # one dataset may go the other way in a single run
    assert len(losses) <= 1, losses
