"""Exception taxonomy shared across the package."""


class CausalSeqError(Exception):
    pass


class ConfigError(CausalSeqError):
    """Invalid model/run configuration."""


class DataError(CausalSeqError):
    """Malformed or missing input data."""


class NumericError(CausalSeqError):
    """Non-finite value where a finite one is required (e.g. NaN gradient)."""


class InsufficientInputError(CausalSeqError):
    """Input sequence shorter than an operation or model requires."""

    def __init__(self, message: str, required: int):
        super().__init__(f"{message} (need at least {required} frames)")
        self.required = required


class CropError(CausalSeqError):
    """Front-crop longer than the sequence."""


class TemporalMisalignmentError(CausalSeqError):
    """Channel concatenation saw different time lengths (upstream crop bug)."""
