"""
Experiment results and their text / spreadsheet renderings.
"""
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import xlsxwriter

from ..exceptions import RejectedInputError
from .estimator_spec import BASELINE_FAMILY, ROBUST_FAMILY, EstimatorSpec

_logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "markdown", "xlsx")
DIAGNOSTIC_COLUMNS = ("bias_bound", "variance_bound", "minimax_lower_bound")
CSV_FLOAT_FORMAT = "%.10g"


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    seed: int
    true_value: float
    estimates: Mapping[str, float]
    diagnostics: Mapping[str, float] = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def errors(self) -> Dict[str, float]:
        return {name: abs(value - self.true_value) for name, value in self.estimates.items()}


@dataclass(frozen=True)
class EstimatorSummary:
    name: str
    family: str
    rmse_mean: float
    rmse_std: float
    n_trials: int
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def cell(self):
        """`rmse (std)` as laid out in result tables."""
        return f"{self.rmse_mean:.2g} ({self.rmse_std:.2g})"


@dataclass(frozen=True)
class ExperimentReport:
    summaries: Tuple[EstimatorSummary, ...]
    trials: Tuple[TrialResult, ...]
    config: Mapping[str, object] = field(default_factory=dict)

    @property
    def n_trials(self):
        return len(self.trials)

    @property
    def mean_true_value(self):
        return float(np.mean([trial.true_value for trial in self.trials])) if self.trials else math.nan

    @property
    def wall_clock(self):
        return tuple(trial.wall_clock for trial in self.trials)

    def summary(self, name) -> EstimatorSummary:
        for summary in self.summaries:
            if summary.name == name:
                return summary
        raise KeyError(name)

    def best_by_family(self) -> Dict[str, EstimatorSummary]:
        """Lowest-RMSE estimator of each family present in the report."""
        best = {}
        for summary in self.summaries:
            current = best.get(summary.family)
            if current is None or summary.rmse_mean < current.rmse_mean:
                best[summary.family] = summary
        return {family: best[family] for family in (BASELINE_FAMILY, ROBUST_FAMILY) if family in best}


def summarize_trials(trials: Sequence[TrialResult], specs: Sequence[EstimatorSpec],
                     config: Optional[Mapping[str, object]] = None) -> ExperimentReport:
    """
    RMSE = sqrt(mean of squared errors); std = population std of the
    absolute errors. Diagnostics are averaged over trials.
    """
    if not trials:
        raise RejectedInputError("a report needs at least one finished trial")
    summaries = []
    for spec in specs:
        errors = np.array([trial.errors[spec.name] for trial in trials])
        diagnostics = {}
        for column in DIAGNOSTIC_COLUMNS:
            key = f"{spec.name}.{column}"
            values = [trial.diagnostics[key] for trial in trials if key in trial.diagnostics]
            if values:
                diagnostics[column] = float(np.mean(values))
        summaries.append(EstimatorSummary(
            name=spec.name,
            family=spec.family,
            rmse_mean=float(np.sqrt(np.mean(errors ** 2))),
            rmse_std=float(np.std(errors)),
            n_trials=len(trials),
            diagnostics=diagnostics,
        ))
    return ExperimentReport(summaries=tuple(summaries), trials=tuple(trials), config=dict(config or {}))


def report_frame(report: ExperimentReport) -> pd.DataFrame:
    """One row per estimator, diagnostics columns left empty where absent."""
    rows = []
    for summary in report.summaries:
        row = {
            "estimator": summary.name,
            "rmse_mean": summary.rmse_mean,
            "rmse_std": summary.rmse_std,
            "n_trials": summary.n_trials,
        }
        for column in DIAGNOSTIC_COLUMNS:
            row[column] = summary.diagnostics.get(column, np.nan)
        rows.append(row)
    return pd.DataFrame(rows, columns=["estimator", "rmse_mean", "rmse_std", "n_trials", *DIAGNOSTIC_COLUMNS])


def trials_frame(trials: Sequence[TrialResult]) -> pd.DataFrame:
    """One row per (trial, estimator)."""
    rows = [
        {
            "trial": trial.trial_index,
            "seed": trial.seed,
            "estimator": name,
            "estimate": value,
            "true_value": trial.true_value,
            "abs_error": abs(value - trial.true_value),
        }
        for trial in trials
        for name, value in trial.estimates.items()
    ]
    return pd.DataFrame(rows, columns=["trial", "seed", "estimator", "estimate", "true_value", "abs_error"])


def _to_csv(frame):
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, na_rep="", lineterminator="\n")


def _markdown(report):
    lines = [
        f"RMSE mean (std) over {report.n_trials} trials; mean true value {report.mean_true_value:.4g}",
        "",
        "| estimator | family | rmse (std) | " + " | ".join(DIAGNOSTIC_COLUMNS) + " |",
        "|---|---|---|" + "---|" * len(DIAGNOSTIC_COLUMNS),
    ]
    for summary in report.summaries:
        bounds = [
            f"{summary.diagnostics[column]:.3g}" if column in summary.diagnostics else ""
            for column in DIAGNOSTIC_COLUMNS
        ]
        lines.append(f"| {summary.name} | {summary.family} | {summary.cell()} | " + " | ".join(bounds) + " |")
    best = report.best_by_family()
    if best:
        lines += ["", "| family | best estimator | rmse (std) |", "|---|---|---|"]
        lines += [f"| {family} | {summary.name} | {summary.cell()} |" for family, summary in best.items()]
    if any(summary.diagnostics for summary in report.summaries):
        lines += ["", "Bounds are shown up to unspecified constants."]
    return "\n".join(lines) + "\n"


def _xlsx(report):
    output = io.BytesIO()
    workbook = xlsxwriter.Workbook(output, {"in_memory": True})
    header = workbook.add_format({"bold": True})
    number = workbook.add_format({"num_format": "0.0000"})

    sheet = workbook.add_worksheet("Summary")
    frame = report_frame(report)
    for col, name in enumerate(frame.columns):
        sheet.write(0, col, name, header)
    for row, values in enumerate(frame.itertuples(index=False), start=1):
        for col, value in enumerate(values):
            if isinstance(value, str):
                sheet.write_string(row, col, value)
            elif value is None or (isinstance(value, float) and math.isnan(value)):
                sheet.write_blank(row, col, None)
            else:
                sheet.write_number(row, col, float(value), number)
    sheet.set_column(0, 0, 14)
    sheet.set_column(1, len(frame.columns) - 1, 12)

    trials = workbook.add_worksheet("Trials")
    for col, name in enumerate(("trial", "seed", "true_value", "wall_clock_s")):
        trials.write(0, col, name, header)
    for row, trial in enumerate(report.trials, start=1):
        trials.write_number(row, 0, trial.trial_index)
        trials.write_number(row, 1, trial.seed)
        trials.write_number(row, 2, trial.true_value, number)
        trials.write_number(row, 3, trial.wall_clock, number)

    workbook.close()
    output.seek(0)
    return output.read()


def emit_report(report: ExperimentReport, fmt="csv"):
    """Render a report as csv or markdown text, or as xlsx bytes."""
    if fmt == "csv":
        return _to_csv(report_frame(report))
    if fmt == "markdown":
        return _markdown(report)
    if fmt == "xlsx":
        return _xlsx(report)
    raise RejectedInputError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")


def emit_trials_csv(trials: Sequence[TrialResult]) -> str:
    """Per-trial estimates, used for partial results of an aborted run."""
    return _to_csv(trials_frame(trials))
