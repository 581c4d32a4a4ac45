"""Exception types raised across the toolkit."""


class ConvAdaptError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(ConvAdaptError, ValueError):
    """Tensor shapes do not line up."""


class ConfigurationError(ConvAdaptError, ValueError):
    """A configuration value is invalid or inconsistent."""


class ContractError(ConvAdaptError, RuntimeError):
    """An operation was called outside of its preconditions."""


class CheckpointError(ConvAdaptError, ValueError):
    """A checkpoint is malformed or incompatible with its target."""


class ParseError(ConvAdaptError, ValueError):
    """A container file is malformed.

    ``offset`` is the byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DivergenceError(ConvAdaptError, FloatingPointError):
    """Training produced a non-finite loss or gradient.

    ``partial`` carries whatever metrics had been collected before the abort.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
