"""Core module: settings, logging and errors."""

from phenom.core.config import Settings, get_settings
from phenom.core.logger import PhenomLogger

__all__ = [
    "Settings",
    "get_settings",
    "PhenomLogger"
]
