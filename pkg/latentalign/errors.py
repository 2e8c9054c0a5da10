"""Exception hierarchy shared by every latentalign module."""


class AlignerError(Exception):
    """Base class for all errors raised by latentalign."""


# --- autodiff ----------------------------------------------------------------
class ShapeMismatchError(AlignerError, ValueError):
    pass


class DegenerateNormError(AlignerError, ValueError):
    """Raised when an L2 normalization sees a (near) zero vector."""


class NonScalarLossError(AlignerError, ValueError):
    pass


# --- diffusion ---------------------------------------------------------------
class ScheduleError(AlignerError, ValueError):
    pass


class TimestepError(AlignerError, ValueError):
    pass


class WidthMismatchError(AlignerError, ValueError):
    pass


class EmptyDatasetError(AlignerError, ValueError):
    pass


# --- binder / aligner --------------------------------------------------------
class NonUnitEmbeddingError(AlignerError, ValueError):
    pass


class NonFiniteGradientError(AlignerError, ArithmeticError):
    pass


class GuidanceConfigError(AlignerError, ValueError):
    pass


class MissingModelError(AlignerError, LookupError):
    pass


# --- synthetic world ---------------------------------------------------------
class WorldSpecError(AlignerError, ValueError):
    pass


class ClassRangeError(AlignerError, ValueError):
    pass


class FormatError(AlignerError, IOError):
    """A persisted file does not follow its declared binary layout."""


class DatasetFormatError(FormatError):
    pass


# --- checkpoints -------------------------------------------------------------
class ChecksumError(AlignerError, IOError):
    pass


class KindMismatchError(AlignerError, TypeError):
    pass


class TruncatedFileError(AlignerError, IOError):
    pass


# --- evaluation --------------------------------------------------------------
class UnpairedRunsError(AlignerError, ValueError):
    pass


class EmptySetError(AlignerError, ValueError):
    pass


# --- harness -----------------------------------------------------------------
class ConfigError(AlignerError, ValueError):
    pass


class UnknownConfigKeyError(ConfigError):
    def __init__(self, key: str):
        super().__init__(f"Unknown config key: {key!r}")
        self.key = key


class MissingArtifactError(AlignerError, FileNotFoundError):
    pass
