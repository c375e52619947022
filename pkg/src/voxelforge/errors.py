"""Exception types shared across the package."""


class VoxelforgeError(Exception):
    """Base class for all package-specific errors."""


class ParseError(VoxelforgeError, ValueError):
    """Malformed genome/archive/checkpoint input.

    Carries the 1-based line number and a field description when the
    offending location is known.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(field)
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.field = field


class RepairExhausted(VoxelforgeError, RuntimeError):
    """No valid offspring found within the retry budget."""


class SizeTooLarge(VoxelforgeError, ValueError):
    """Grid too large for exhaustive enumeration."""


class NumericalBlowup(VoxelforgeError, FloatingPointError):
    """Simulation or training state became non-finite."""


class DimensionMismatch(VoxelforgeError, ValueError):
    """Vector length does not match the expected dimension."""


class DegenerateDesign(VoxelforgeError, ValueError):
    """Regression design matrix is rank-deficient or underpopulated."""
