from .app import create_app
from .config import BackendConfig
from .errors import ConfigError, FixtureError, ModelLoadError

__all__ = ["BackendConfig", "ConfigError", "FixtureError", "ModelLoadError", "create_app"]
