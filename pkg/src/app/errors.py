"""Exception hierarchy shared by every toolkit module.

Each error carries a human readable ``detail`` (like the HTTPException the service
used to raise) and the process ``exit_code`` the CLI maps it to.
"""
from typing import Iterable, Optional

from pydantic import ValidationError


class HrvToolkitError(Exception):
    exit_code = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None) -> None:
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class ConfigError(HrvToolkitError):
    """Invalid configuration, CLI usage or output location."""
    exit_code = 2


class ShapeError(ConfigError):
    """Shape or kernel contract violated inside the numerical core."""


class DataError(HrvToolkitError):
    """Unreadable, malformed or degenerate input data."""
    exit_code = 3


class NumericError(HrvToolkitError):
    """Non-finite loss or gradient."""
    exit_code = 4


def config_error_from_validation(exc: ValidationError, prefix: str = "") -> ConfigError:
    """Flatten a pydantic ValidationError into a ConfigError listing ``field.path: message``."""
    entries: Iterable[str] = (
        f"{'.'.join(str(part) for part in ((prefix,) if prefix else ()) + tuple(err['loc']))}: {err['msg']}"
        for err in exc.errors()
    )
    return ConfigError("; ".join(entries))
