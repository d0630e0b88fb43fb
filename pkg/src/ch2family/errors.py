"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class Ch2Error(Exception):
    code = "ERROR"


class InvalidParameters(Ch2Error, ValueError):
    code = "VALIDATION_ERROR"


class NonFiniteRHS(Ch2Error, ArithmeticError):
    code = "NONFINITE_RHS"


class NoBracket(Ch2Error, ValueError):
    code = "NO_BRACKET"


class NonpositiveScale(Ch2Error, ValueError):
    code = "NONPOSITIVE_SCALE"


class OutOfRange(Ch2Error, ValueError):
    code = "OUT_OF_RANGE"


class NegativeRadius(Ch2Error, ValueError):
    code = "NEGATIVE_RADIUS"


class NotSelfSimilarParams(Ch2Error, ValueError):
    code = "NOT_SELF_SIMILAR_PARAMS"


class BoundaryPoint(Ch2Error, ValueError):
    code = "BOUNDARY_POINT"


class EmptyInterior(Ch2Error, ValueError):
    code = "EMPTY_INTERIOR"


class NonnegativeXi(Ch2Error, ValueError):
    """Raised when touch-down time is requested for data that never touches down."""

    code = "NONNEGATIVE_XI"


class NoSingularityFound(Ch2Error):
    code = "NO_SINGULARITY_FOUND"

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ParseError(Ch2Error, ValueError):
    code = "PARSE_ERROR"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CapExceeded(Ch2Error, ValueError):
    code = "CAP_EXCEEDED"
