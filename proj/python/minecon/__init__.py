"""Python front end to the minecon C++ library."""

from ._core import *  # noqa: F401,F403
from ._core import Error, run_cli

__all__ = [name for name in dir() if not name.startswith("_")]
