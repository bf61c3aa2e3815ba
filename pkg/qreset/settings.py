"""
Django settings for the qreset project.

The project only hosts management commands; there are no URLs, templates or
database models.
"""

from pathlib import Path
from os import environ as env
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Not used for anything cryptographic, Django only insists on a value
SECRET_KEY = env.get("QRESET_KEY", "qreset-command-line-only")

ALLOWED_HOSTS: list[str] = []

# Application definition
INSTALLED_APPS = [
    "detection",
]

QRESET_DEBUG = env.get("QRESET_DEBUG")
DEBUG = QRESET_DEBUG is not None and (
    QRESET_DEBUG == "1" or QRESET_DEBUG.lower() == "true"
)

# No persistence
DATABASES: dict[str, dict[str, str]] = {}

USE_I18N = False
USE_TZ = True
TIME_ZONE = "UTC"


def _optional_int(name: str) -> int | None:
    value = env.get(name)
    if value is None or value.strip() == "":
        return None
    try:
        return int(value)
    except ValueError as exc:
        raise ValueError(f"{name} must be an integer, got {value!r}") from exc


# Run overrides
QRESET_SEED = _optional_int("QRESET_SEED")
QRESET_WORKERS = _optional_int("QRESET_WORKERS")

# Numerics
QRESET_TALBOT_NODES = _optional_int("QRESET_TALBOT_NODES") or 64
QRESET_BLOCK_SIZE = _optional_int("QRESET_BLOCK_SIZE") or 65536

QRESET_LOG_LEVEL = env.get("QRESET_LOG_LEVEL", "INFO").upper()

# Logging
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {module} {process:d} {thread:d} {message}",
            "style": "{",
        },
        "simple": {
            "format": "{levelname} {name} {message}",
            "style": "{",
        },
    },
    "filters": {
        "require_debug_true": {
            "()": "django.utils.log.RequireDebugTrue",
        },
    },
    "handlers": {
        "console": {
            "level": QRESET_LOG_LEVEL,
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "simple",
        },
        "file": {
            "level": "DEBUG",
            "filters": ["require_debug_true"],
            "class": "logging.FileHandler",
            "filename": env.get("QRESET_LOG_FILE", "./debug.log"),
            "formatter": "verbose",
            "delay": True,
        },
    },
    "loggers": {
        "firstdetect": {
            "handlers": ["console", "file"],
            "level": "DEBUG" if DEBUG else QRESET_LOG_LEVEL,
            "propagate": False,
        },
        "detection": {
            "handlers": ["console", "file"],
            "level": "DEBUG" if DEBUG else QRESET_LOG_LEVEL,
            "propagate": False,
        },
    },
}
