"""Error hierarchy.

Usage/configuration errors map to exit code 2, runtime failures to exit
code 3. Value-shaped errors also subclass ``ValueError`` and state errors
``RuntimeError`` so callers can catch either.
"""


class HyperXError(Exception):
    """Base class for every error raised by the package."""

    exit_code: int = 3


class UsageError(HyperXError, ValueError):
    """Invalid command-line usage or configuration."""

    exit_code = 2


class ConfigurationError(UsageError):
    """Config file is missing, malformed, or inconsistent."""


class RuntimeFailure(HyperXError, RuntimeError):
    """Failure while executing a pipeline step."""


# numcore
class ShapeError(HyperXError, ValueError):
    """Operand shapes do not agree."""


class ContractError(RuntimeFailure):
    """A function was called outside its preconditions."""


class NumericalError(RuntimeFailure):
    """An operation produced NaN or Inf."""


# backbone
class VocabularyError(HyperXError, ValueError):
    """Token id outside the vocabulary."""


class TruncationError(HyperXError, ValueError):
    """Sequence longer than the position table."""


class DegenerateBatchError(HyperXError, ValueError):
    """Batch has nothing to mask."""


class ContaminationError(RuntimeFailure):
    """A held-out language reached backbone pretraining."""


# hypernet
class RegistrationError(HyperXError, ValueError):
    """Duplicate source registration."""


class UnknownSourceError(HyperXError, LookupError):
    """Task, language, or layer was never registered."""


# synthdata
class SpecError(HyperXError, ValueError):
    """Invalid language specification."""


class ParseError(HyperXError, ValueError):
    """Malformed corpus file."""


class LabelError(HyperXError, ValueError):
    """Tag outside the task's label set."""


# trainer
class PartitionError(HyperXError, ValueError):
    """Partition constraints cannot be satisfied."""


class SamplingError(HyperXError, ValueError):
    """Requested more examples than are available."""


class TrainingAborted(RuntimeFailure):
    """Training stopped on a non-finite loss."""


class AcceptanceFailure(RuntimeFailure):
    """A strict sweep missed one of its directional criteria."""


# evalkit
class AlignmentError(HyperXError, ValueError):
    """Predicted and gold sequences are not aligned."""


class EmptyEvaluationError(HyperXError, ValueError):
    """Metric is undefined on an empty evaluation set."""


class JoinError(HyperXError, ValueError):
    """Reports cannot be joined."""
