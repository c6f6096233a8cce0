"""
Error hierarchy shared by every layer of the package.

Library code raises these; the CLI maps them to exit codes
(ValidationError and DatasetParseError -> 1, everything else -> 2).
"""


class OpeError(Exception):
    """Base class for all errors raised by tr_ope."""


class RejectedInputError(OpeError, ValueError):
    """An argument violates a documented precondition."""


class UndefinedEstimateError(OpeError, ArithmeticError):
    """A self-normalized estimate has no mass to normalize by."""


class TrainingFaultError(OpeError, FloatingPointError):
    """
    Training produced a non-finite gradient or objective.
    """

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DatasetParseError(OpeError, ValueError):
    """A dataset file could not be read."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ModelFormatError(OpeError, ValueError):
    """A serialized model is corrupt, unsigned or of another format."""


class ValidationError(OpeError, ValueError):
    """Invalid experiment configuration."""


class TrialError(OpeError):
    """
    A trial failed. Keeps the trial index and seed so the run can be replayed.
    """

    def __init__(self, trial_index, seed, cause):
        super().__init__(f"trial {trial_index} (seed {seed}) failed: {cause}")
        self.trial_index = trial_index
        self.seed = seed
        self.cause = cause

    def __reduce__(self):
        return self.__class__, (self.trial_index, self.seed, self.cause)


class ExperimentAborted(OpeError):
    """An experiment stopped early; `partial` holds the finished trials."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial
