"""Exception hierarchy shared by all viewflow modules."""


class ViewflowError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ViewflowError):
    """Tensor/image shapes do not satisfy an operation's contract."""


class NumericError(ViewflowError):
    """A computation produced NaN or Inf."""


class LabelError(ViewflowError):
    """A class label is out of range or unknown to the model."""


class BatchSizeError(ViewflowError):
    """Per-batch statistics requested on a batch that is too small."""


class GraphError(ViewflowError):
    """Autodiff contract violation (e.g. backward from a non-scalar)."""


class InputError(ViewflowError):
    """Invalid input data (empty lists, undersized frames, bad files)."""


class ManifestError(InputError):
    """Dataset manifest fails schema validation."""


class BindingError(ViewflowError):
    """Network weights could not be bound to a spec.

    ``missing`` and ``mismatched`` list the offending tensor names.
    """

    def __init__(self, missing=(), mismatched=()):
        self.missing = list(missing)
        self.mismatched = list(mismatched)
        parts = []
        if self.missing:
            parts.append("missing tensors: " + ", ".join(self.missing))
        if self.mismatched:
            parts.append("shape-mismatched tensors: " + ", ".join(self.mismatched))
        super().__init__("; ".join(parts) or "binding failed")


class DataError(ViewflowError):
    """Training data violates a precondition (e.g. empty classes)."""


class TrainingError(ViewflowError):
    """Training diverged. ``epoch`` is the first bad epoch index."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)


class ProtocolError(ViewflowError):
    """A view protocol selects an empty or invalid split."""


class CoverageError(ViewflowError):
    """A result set does not cover the required protocol combinations.

    ``missing`` lists the absent protocol names.
    """

    def __init__(self, message, missing=()):
        self.missing = list(missing)
        super().__init__(message)


class ConfigError(ViewflowError):
    """Run configuration is invalid (CLI exit code 2)."""


class StageError(ViewflowError):
    """An upstream pipeline stage has not produced its artifacts yet.

    ``stage`` names the stage that must run first (CLI exit code 4).
    """

    def __init__(self, message, stage=None):
        self.stage = stage
        super().__init__(message)
