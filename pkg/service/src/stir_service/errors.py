class ServiceError(Exception):
    """Base for service-side failures."""


class ConfigError(ServiceError):
    """Invalid or unreadable service configuration."""


class ModelLoadError(ServiceError):
    """A configured model could not be loaded; the service must not start."""


class FixtureError(ServiceError):
    """Stub fixture is missing or lacks a requested entry."""
