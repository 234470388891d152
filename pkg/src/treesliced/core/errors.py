"""
Exception hierarchy for tree-sliced distance computations.
"""


class TreeSlicedError(Exception):
    """Base class for every error raised by treesliced."""
    pass


class InvalidDimensionError(TreeSlicedError, ValueError):
    """Raised when a dimension is out of range (e.g. d = 0)."""
    pass


class DimensionMismatchError(TreeSlicedError, ValueError):
    """Raised when two objects live in spaces of different dimension."""
    pass


class InvalidMeasureError(TreeSlicedError, ValueError):
    """Raised when points, weights or unit-norm constraints are violated."""
    pass


class InvalidConfigError(TreeSlicedError, ValueError):
    """Raised when a parameter combination is rejected at run time."""
    pass


class MassMismatchError(TreeSlicedError, ValueError):
    """Raised when two measures to be transported carry different mass."""
    pass


class DivergenceError(TreeSlicedError, RuntimeError):
    """Raised when a gradient flow leaves the finite, bounded regime."""
    pass
