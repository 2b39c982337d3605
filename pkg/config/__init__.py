"""Config module."""
from .settings import (
    TOOL_VERSION,
    AppConfig,
    get_config,
    load_config,
    reset_config,
    validate_config,
)
