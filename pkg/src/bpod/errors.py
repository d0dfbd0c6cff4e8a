"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A caller-supplied parameter is outside the supported range."""


class NumericalFailure(RuntimeError):
    """A factorization, solve or decomposition failed or is ill-posed."""


class DivergenceError(NumericalFailure):
    """Time integration blew up (unstable system or time step too large)."""


class UnstableSystemError(NumericalFailure):
    """An operation that requires a stable system received an unstable one."""


class FormatError(ValueError):
    """A persisted artifact is malformed."""


class VersionMismatchError(FormatError):
    """A persisted artifact was written by an incompatible format version."""


class ChecksumError(FormatError):
    """A persisted artifact does not match its recorded checksum."""
