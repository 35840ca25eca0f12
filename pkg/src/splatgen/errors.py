"""Exception types raised across the package."""


class SplatgenError(Exception):
    """Base class for all errors raised by this package."""


class AssetFormatError(SplatgenError):
    """A splat asset file is malformed (bad header, missing property, truncated body)."""


class AssetDataError(SplatgenError):
    """A splat asset parsed but contains invalid values (NaN, inf, zero quaternion)."""


class ConfigError(SplatgenError):
    """A scene spec or config file is invalid."""


class SamplingError(SplatgenError):
    """Scene randomization could not satisfy its constraints."""


class AssetLookupError(SplatgenError, KeyError):
    """An asset or instance id was requested that does not exist."""

    def __str__(self) -> str:  # KeyError quotes its args; keep the message plain
        return Exception.__str__(self)


class LabelParseError(SplatgenError):
    """A label file line could not be parsed."""


class EvaluationError(SplatgenError):
    """Detector evaluation was asked to run on unusable inputs."""
