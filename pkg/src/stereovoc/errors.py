"""Exception hierarchy shared across the package."""


class StereoVocError(Exception):
    """Base class for all package errors."""


class FormatError(StereoVocError):
    """Unsupported or malformed file contents (WAV, matrix files)."""


class ChannelCountError(StereoVocError):
    """Operation received the wrong number of channels."""


class DimensionError(StereoVocError):
    """Length or sample-rate mismatch between buffers."""


class ParameterError(StereoVocError):
    """Invalid scalar parameter (taps, snake frequency, ...)."""


class ConfigError(StereoVocError):
    """Inconsistent configuration."""


class ShapeError(StereoVocError):
    """Tensor shapes are incompatible with the requested op."""


class ContractError(StereoVocError):
    """Caller violated an operation's precondition."""


class SilentInputError(StereoVocError):
    """Input has zero energy where a gain or ratio is required."""


class CheckpointError(StereoVocError):
    """Checkpoint file is truncated, mismatched, or otherwise invalid."""


class StageError(StereoVocError):
    """A cascade stage received input it cannot process."""


class DataError(StereoVocError):
    """Training data is missing, too short, or otherwise unusable."""


class EvalError(StereoVocError):
    """Evaluation inputs are incompatible or degenerate."""


class TrainingDivergedError(StereoVocError):
    """Generator loss became non-finite."""
