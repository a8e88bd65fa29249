class FBMSError(Exception):
    """Base class for all errors raised by this package."""


class QueryOutsideProfileInterval(FBMSError):
    pass


class DegenerateGradient(FBMSError):
    pass


class ProjectionDiverged(FBMSError):
    pass


class ParseError(FBMSError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonTriangularFace(ParseError):
    pass


class InsufficientNeighborhood(FBMSError):
    pass


class TangentProjectionDegenerate(FBMSError):
    pass


class MeshDegenerated(FBMSError):
    pass


class NotConverged(FBMSError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class HypothesisUnmet(FBMSError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
