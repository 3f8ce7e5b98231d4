"""Three-party secret-sharing protocols and private RKN inference."""

from .numfmt import DEFAULT, FixedPointConfig, RangeError, decode, encode

__version__ = "0.1.0"

__all__ = ["DEFAULT", "FixedPointConfig", "RangeError", "decode", "encode", "__version__"]
