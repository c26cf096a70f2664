"""Exception hierarchy for the aros package."""


class ArosError(Exception):
    """Base class for all package errors."""


class ParseError(ArosError):
    """Malformed mesh file record; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class DegenerateMesh(ArosError):
    """Mesh has no usable faces."""


class InsufficientSurface(ArosError):
    """Surface area too small to host the requested sample count."""


class NonConvergence(ArosError):
    """Iterative refinement hit its round cap without meeting its goal."""


class EmptyInterface(ArosError):
    """No bisector ridge survives clipping; meshes are too far apart."""


class NoCollisions(ArosError):
    """Collision sampling was invoked on a non-piercing surface."""


class InsufficientCandidates(ArosError):
    """Fewer candidate vectors than requested draws."""


class ReferenceOffSurface(ArosError):
    """Training reference point does not lie on the environment mesh."""


class FormatVersionMismatch(ArosError):
    """Serialized artifact was written by an incompatible format version."""


class ChecksumMismatch(ArosError):
    """Serialized artifact failed its integrity check."""


class NotAccepted(ArosError):
    """Placement was requested for a rejected detection."""


class NoContactWithinRange(ArosError):
    """Downward optimizer descended past its range without touching anything."""


class IcpDiverged(ArosError):
    """ICP residual increased over several consecutive iterations."""


class BodyOutsideGrid(ArosError):
    """A body vertex lies outside the signed-distance grid."""


class Unreachable(ArosError):
    """No path exists to a requested milestone."""
