"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input failed a precondition check (bad file, bad parameters, bad config)."""


class ChannelMismatch(ValidationError):
    pass


class InvalidBand(ValidationError):
    pass


class SegmentationError(ValidationError):
    pass


class InsufficientExtrema(RuntimeError):
    """A projected signal has too few maxima to build an envelope."""
