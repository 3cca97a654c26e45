"""Exception types raised across the package."""

from __future__ import annotations


class HMError(Exception):
    """Base class for all package errors."""


class DegenerateInput(HMError, ValueError):
    """Input has no well-defined normalization (e.g. the zero vector)."""


class InvalidBasis(HMError, ValueError):
    """Pole vectors are not orthonormal."""


class InvalidTangent(HMError, ValueError):
    """A vector that should be tangent to the sphere is not."""


class OutOfDomain(HMError, ValueError):
    """A point lies outside the domain of a convex function."""

    def __init__(self, message: str, node: int | None = None, time: float | None = None):
        super().__init__(message)
        self.node = node
        self.time = time


class GridTooCoarse(HMError, ValueError):
    """Grid has too few nodes for the requested stencil."""


class TruncationError(HMError, ValueError):
    """Gaussian weight has more tail mass outside the grid than allowed."""


class AlignmentError(HMError, ValueError):
    """A section is not sampled on the same grid as its map."""


class BlowupDetected(HMError, RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message: str, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace


class ScaleError(HMError, ValueError):
    """Requested rescaling is not resolvable on the grid."""


class InvalidEpsilon(HMError, ValueError):
    """Perturbation parameter outside its admissible range."""


class NoSolutionInBracket(HMError, RuntimeError):
    """Shooting found no sign change in the slope bracket."""


class UnsupportedDimension(HMError, ValueError):
    """Operation undefined for this source or target dimension."""


class InadmissibleSection(HMError, ValueError):
    """Section failed the weighted W^{2,2} admissibility check."""


class DegenerateSection(HMError, ValueError):
    """Section has zero weighted norm."""


class PreconditionFailed(HMError, ValueError):
    """A verified precondition of a certificate does not hold."""


class ConfigError(HMError, ValueError):
    """Experiment configuration is malformed."""
