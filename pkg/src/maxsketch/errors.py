"""Exception hierarchy shared by all maxsketch modules.

The CLI maps these onto exit codes: parameter/usage problems exit 2,
file-format and I/O problems exit 3, and a grid soundness failure
(the estimator's guarantee precondition) exits 4.
"""


class MaxSketchError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(MaxSketchError, ValueError):
    """A parameter violates its documented precondition."""


class InvalidInputError(MaxSketchError, ValueError):
    """Runtime data (vectors, statistics, samples) is malformed."""


class DimensionMismatchError(InvalidInputError):
    """A vector's dimension does not match the bound projection set."""


class BindingError(MaxSketchError):
    """State and projections (or readout) belong to different sketches."""


class EmptySketchError(MaxSketchError):
    """The statistic of a sketch with no items is undefined."""


class FormatError(MaxSketchError):
    """A serialized stream, sketch, or readout file is malformed."""


class GenerationError(MaxSketchError):
    """Synthetic center generation could not satisfy the separation bound."""


class GridSoundnessError(MaxSketchError):
    """A threshold grid violates the positive-gap precondition."""
