"""Exception types shared across the package."""


class GClosureError(Exception):
    """Base class for package-specific failures."""


class NonIntegralFraction(GClosureError):
    """A requested volume fraction is not representable in whole pixels."""


class IndivisibleScale(GClosureError):
    """An oscillation or rescaling factor is incompatible with the grid."""


class MedialAxisError(GClosureError):
    """Gradient of an unsmoothed distance power requested at an ambiguous point."""


class CGStalled(GClosureError):
    """Conjugate gradient failed to reach the required residual."""


class ConfigError(GClosureError):
    """A run configuration is malformed; carries the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
