"""Exception types shared across the package."""


class GeoDecError(Exception):
    """Base class for every error raised by this package."""


class DatasetError(GeoDecError):
    """A cities or ping file could not be parsed or is unusable."""


class ValidationError(DatasetError):
    """A parsed value is outside its allowed range."""


class CoverageError(DatasetError):
    """Too few cities survive latency-matrix completion."""


class DomainError(GeoDecError, ValueError):
    """An argument lies outside the domain of a metric or rule."""


class ConfigError(GeoDecError):
    """A scenario, sweep or export configuration is inconsistent."""


class RoutingError(GeoDecError):
    """A message was addressed to a validator the network does not know."""


class ContractError(GeoDecError):
    """An exemption-contract call was rejected."""
