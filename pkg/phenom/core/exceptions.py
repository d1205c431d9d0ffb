"""Exception hierarchy. Every error is also a ValueError so callers that
only guard on ValueError keep working."""


class PhenomError(ValueError):
    """Base class for all phenom errors."""


class InvalidConfigError(PhenomError):
    """A configuration document or parameter failed validation."""


class DimensionMismatchError(PhenomError):
    """Array shapes are incompatible (divisibility, lengths, token counts)."""


class ChannelMismatchError(PhenomError):
    """Input channel count does not match what the model was trained on."""


class EmptyMaskError(PhenomError):
    """A masked-patch loss was requested with zero masked patches."""


class EmptyInputError(PhenomError):
    """An operation received an empty collection it cannot reduce."""


class UndefinedMeanError(PhenomError):
    """A spherical mean is undefined (zero vector or antipodal cancellation)."""


class RankDeficientError(PhenomError):
    """A whitening fit saw a singular covariance."""


class TrainingDivergedError(PhenomError):
    """Loss became NaN or infinite during training."""


class InvalidLabelError(PhenomError):
    """A class label lies outside [0, n_classes)."""


class FormatError(PhenomError):
    """A file on disk does not follow the expected container layout."""


class UnknownOperationError(PhenomError):
    """A transform pipeline names an operation that is not registered."""
