"""One-pass variable multi-stem generation with rectified flow on a toy corpus."""

__version__ = "0.1.0"

from . import codec, corpus  # noqa: F401
