"""
Command line entry point.

    tr-ope run --config experiment.ini --out report.csv
    tr-ope validate-config --config experiment.ini
    tr-ope list-estimators

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""
import argparse
import logging
import sys

from ..exceptions import DatasetParseError, ExperimentAborted, OpeError, ValidationError
from ..models.estimator_spec import default_estimator_specs
from ..models.experiment_report import REPORT_FORMATS, emit_report, emit_trials_csv
from ..services.experiment_config import ExperimentConfig, load_config
from ..services.harness import load_dataset, run_experiment

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser():
    parser = argparse.ArgumentParser(prog="tr-ope", description="Off-policy evaluation experiments.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an experiment and write its report")
    run.add_argument("--config", help="INI experiment file (defaults apply when omitted)")
    run.add_argument("--out", help="report path (stdout when omitted)")
    run.add_argument("--format", default="csv", choices=REPORT_FORMATS)
    run.add_argument("--jobs", type=int, help="parallel trials, -1 for all cores")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--trials", type=int, help="number of trials")
    run.add_argument("--quiet", action="store_true", help="no progress bar")

    validate = commands.add_parser("validate-config", help="check an experiment file")
    validate.add_argument("--config", required=True)

    commands.add_parser("list-estimators", help="list estimator names and families")
    return parser


def _load(path):
    return load_config(path) if path else ExperimentConfig()


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
        return
    mode = "wb" if isinstance(text, bytes) else "w"
    with open(path, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as handle:
        handle.write(text)
    _logger.info("Report written to %s", path)


def _run(args):
    config = _load(args.config).with_overrides(seed=args.seed, jobs=args.jobs, n_trials=args.trials)
    if args.format == "xlsx" and not args.out:
        raise ValidationError("the xlsx format needs --out")
    try:
        report = run_experiment(config, progress=not args.quiet)
    except ExperimentAborted as error:
        _logger.error("%s", error)
        if args.out and error.partial:
            partial_path = f"{args.out}.partial.csv"
            _write(emit_trials_csv(error.partial), partial_path)
            _logger.error("Partial results of %s trials written to %s", len(error.partial), partial_path)
        return EXIT_RUNTIME
    _write(emit_report(report, args.format), args.out)
    return EXIT_OK


def _validate(args):
    config = load_config(args.config)
    if config.dataset_path:
        dataset = load_dataset(config)
        _logger.info("Dataset %s readable: %s rows", config.dataset_path, dataset.n_rows)
    names = ", ".join(config.estimators)
    source = config.dataset_path or "synthetic"
    print(f"ok: {config.n_trials} trials on {source}, logging {config.logging_mode}, estimators {names}")
    return EXIT_OK


def _list_estimators(_args):
    for spec in default_estimator_specs():
        print(f"{spec.name}\t{spec.family}\t{spec.reward_model_tag or '-'}")
    return EXIT_OK


COMMANDS = {
    "run": _run,
    "validate-config": _validate,
    "list-estimators": _list_estimators,
}


def main(argv=None):
    """Parse `argv`, run the command and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, DatasetParseError) as error:
        _logger.error("Invalid input: %s", error)
        return EXIT_CONFIG
    except OpeError as error:
        _logger.error("Run failed: %s", error)
        return EXIT_RUNTIME

