"""Exception hierarchy. CLI exit codes hang off these classes."""


class AVCompressError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class ConfigError(AVCompressError, ValueError):
    """Invalid parameters or an infeasible configuration."""

    exit_code = 2


class InfeasibleChunkingError(ConfigError):
    """No joint segmentation satisfies the chunk-size bounds."""


class BandInfeasibleError(InfeasibleChunkingError):
    """The unbanded problem is feasible but the band prunes every path."""


class StructuralError(AVCompressError, ValueError):
    """A chunking or stream violates a structural invariant."""

    exit_code = 4


class ContainerError(AVCompressError, OSError):
    """Base class for ORTC read failures."""

    exit_code = 3


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class HeaderError(ContainerError):
    pass


class InvariantViolationError(ContainerError):
    """A stored stream breaks a type invariant; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
