"""Exceptions shared across cpsample_lab."""


class CPSampleLabException(Exception):
    """Base class for all errors raised by cpsample_lab"""

    pass


class ShapeMismatchException(CPSampleLabException, ValueError):
    """Raised when operand shapes are incompatible"""

    pass


class NonFiniteException(CPSampleLabException, ArithmeticError):
    """Raised when a NaN or Inf shows up in a published value"""

    pass


class UnboundLeafException(CPSampleLabException, KeyError):
    """Raised when a graph leaf has no binding"""

    pass


class GraphException(CPSampleLabException, ValueError):
    """Raised on malformed graph requests (non-scalar output, unknown leaf, ...)"""

    pass


class ScheduleException(CPSampleLabException, ValueError):
    """Raised on invalid noise schedule parameters or timestep indices"""

    pass


class DivergenceException(CPSampleLabException, ArithmeticError):
    """Raised when a training loss stops being finite"""

    def __init__(self, model, step, last_loss):
        self.model = model
        self.step = step
        self.last_loss = last_loss
        super().__init__(
            f"{model} training diverged at step {step} (last finite loss: {last_loss})"
        )


class LabelException(CPSampleLabException, ValueError):
    """Raised on invalid random label requests"""

    pass


class GuidanceException(CPSampleLabException, ArithmeticError):
    """Raised when a guidance gradient is not finite. Carries sample index and step."""

    def __init__(self, message, sample_index=None, step=None):
        self.sample_index = sample_index
        self.step = step
        super().__init__(message)


class MaxTriesExhaustedException(CPSampleLabException, RuntimeError):
    """Raised when the rejection sampler runs out of tries. Carries the partial result."""

    def __init__(self, message, samples, tries_used):
        self.samples = samples
        self.tries_used = tries_used
        super().__init__(message)


class AuditException(CPSampleLabException, ValueError):
    """Raised on invalid audit inputs"""

    pass


class ConfigException(CPSampleLabException, ValueError):
    """Raised on a missing or invalid experiment config field"""

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"missing config field: {field}")


class ArchiveFormatException(CPSampleLabException, ValueError):
    """Raised when a tensor archive is malformed"""

    pass


class StageFailureException(CPSampleLabException, RuntimeError):
    """Raised when a pipeline stage fails"""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class QualityException(CPSampleLabException, ValueError):
    """Raised on invalid inputs to the sample quality metrics"""

    pass
