"""Exception types shared across the package.

Every construction routine raises one of these instead of a bare ValueError
so that callers (and the CLI) can map failures to exit codes: input problems
exit 1, violated numerical certificates exit 2.
"""

from __future__ import annotations


class InputError(ValueError):
    """Malformed or inconsistent user input (graph JSON, weights, requests)."""


class EmbeddingError(InputError):
    """Vertex positions do not define a proper straight-line embedding."""


class BoundaryError(InputError):
    """Boundary arc specification is missing, overlapping, or has no wired arc."""


class GeometryError(ValueError):
    """Degenerate geometry: collapsed quad, undefined angle, zero-length corner."""


class SizeError(InputError):
    """Instance exceeds an enumeration or linear-algebra budget."""


class DegenerateLineError(InputError):
    """A disorder line runs through a zero-weight edge and cannot be inverted."""


class ShapeError(InputError):
    """Matrix has the wrong shape for the requested operation."""


class NonIntegrableError(ValueError):
    """Increments fail to close around a loop; the primitive does not exist."""


class DomainError(InputError):
    """Operation requires a structure (e.g. isoradial) the map does not have."""


class DegenerateSpinorError(ValueError):
    """Spinor pair is linearly dependent; the embedding map is not defined."""


class SheetError(ValueError):
    """Sign bookkeeping on a double cover cannot be made consistent."""


class CriticalityError(ValueError):
    """Periodic weights are off-critical where a critical structure is required."""
