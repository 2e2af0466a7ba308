"""Exception taxonomy shared by every module.

The CLI maps these onto process exit codes: ConfigError is 2, NumericsError
is 4, every other InmapError is 3 (bad or inconsistent data).
"""


class InmapError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(InmapError):
    """A parameter or configuration value is outside its allowed range."""


class FormatError(InmapError):
    """A file does not follow the expected on-disk layout."""


class TruncationError(FormatError):
    """Declared payload size does not match the bytes actually present."""


class DataError(InmapError):
    """Payload values are unusable (NaN, Inf, or otherwise malformed)."""


class IoError(InmapError):
    """The operating system refused a read or write."""


class EmptyError(DataError):
    """A file declares zero records."""


class LabelRangeError(DataError):
    """A class index falls outside the range of the paired proxy set."""


class DegenerateRowError(DataError):
    """A row with (near-)zero norm cannot be normalized."""

    def __init__(self, row: int, norm: float):
        self.row = int(row)
        self.norm = float(norm)
        super().__init__(f"row {row} has norm {norm:.3e}, cannot normalize")


class ShapeError(InmapError):
    """Array shapes are inconsistent with each other."""


class NumericsError(InmapError):
    """A computation produced non-finite values."""


class ConstructionError(InmapError):
    """A synthetic model cannot be built from the requested parameters."""
