"""Exception types shared across the package."""


class LorentzLabError(Exception):
    """Base class for all package errors."""


# geometry
class EmptyTableError(LorentzLabError):
    pass


class OverlapError(LorentzLabError):
    """Two scatterers (or a scatterer and a lattice image) overlap."""

    def __init__(self, i, j, offset, gap):
        self.pair = (i, j)
        self.offset = offset
        self.gap = gap
        super().__init__(
            f"scatterers {i} and {j} (lattice offset {offset}) overlap: gap = {gap:.6g}"
        )


class RangeError(LorentzLabError):
    """Argument outside its half-open domain, e.g. arclength r not in [0, L)."""


class NotOnBoundaryError(LorentzLabError):
    pass


# forces
class EnergyError(LorentzLabError):
    """Potential too large for the energy level: speed would not be real/positive."""


# flight
class GrazingError(LorentzLabError):
    """Tangential collision: |n . v| below the grazing tolerance."""


class MaxTimeError(LorentzLabError):
    """No collision found within the search time budget."""


class StiffnessError(LorentzLabError):
    """Adaptive step size underflowed."""


class TunnelError(LorentzLabError):
    """Post-hoc penetration detected: the step control let the path cross a scatterer."""


# pmap
class StencilSingularityError(LorentzLabError):
    """A finite-difference stencil straddles a singularity curve of the collision map."""


# stats
class InsufficientDataError(LorentzLabError):
    pass


class WindowError(LorentzLabError):
    """Autocovariance decay criterion not met at the given window."""


class AbortError(LorentzLabError):
    """Tangential-discard budget exceeded while driving an orbit."""


class TruncationWarning(UserWarning):
    """Truncated correlation series has a tail above the reporting threshold."""


# cli
class ParseError(LorentzLabError):
    pass


class ValidationError(LorentzLabError):
    pass
