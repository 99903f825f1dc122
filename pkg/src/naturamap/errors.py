"""Exception hierarchy shared across the package.

Exit-code mapping lives in the CLI: ConfigError -> 2, I/O and file-format
failures -> 3, NumericalError -> 4.
"""


class NaturamapError(Exception):
    """Base class for all package errors."""


class InvalidCoordinateError(NaturamapError, ValueError):
    """Latitude/longitude outside its legal range, or non-finite."""


class ShapeError(NaturamapError, ValueError):
    """Array shape does not match the operation's contract."""


class FusionError(ShapeError):
    """Latent blocks cannot be concatenated (spatial grids differ)."""


class FormatError(NaturamapError, ValueError):
    """File does not look like the expected format (magic/version/dtype)."""


class CorruptFileError(NaturamapError, ValueError):
    """File has the right header but an inconsistent payload."""


class ConfigError(NaturamapError, ValueError):
    """Invalid or inconsistent configuration."""


class AllWaterError(NaturamapError):
    """Every pixel of a sample is water; the sample carries no loss signal."""


class NumericalError(NaturamapError, ArithmeticError):
    """Non-finite value where the training contract requires finiteness."""
