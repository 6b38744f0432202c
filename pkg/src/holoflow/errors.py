"""Exception hierarchy for holoflow."""


class HoloflowError(Exception):
    """Base class for all errors raised by the package."""


# geometry
class GeometryError(HoloflowError):
    pass


class SelfIntersectingCurve(GeometryError):
    pass


class OverlappingCurves(GeometryError):
    pass


class HoleOutsideOuter(GeometryError):
    pass


# expressions
class ExpressionError(HoloflowError):
    pass


# flowfield
class NotTraversing(HoloflowError):
    def __init__(self, min_dfv, witness):
        self.min_dfv = float(min_dfv)
        self.witness = tuple(float(c) for c in witness)
        super().__init__(f"df(v) = {self.min_dfv:.6g} at {self.witness} violates the positivity margin")


class NotBoundaryGeneric(HoloflowError):
    pass


class DegenerateRootCluster(HoloflowError):
    pass


class RepairFailed(HoloflowError):
    def __init__(self, message, margin=None):
        self.margin = margin
        super().__init__(message)


# tracing
class TracingError(HoloflowError):
    pass


class StepLimitExceeded(TracingError):
    pass


class GrazingUnresolved(TracingError):
    pass


class NotInPositiveBoundary(TracingError):
    pass


class SamplingError(TracingError):
    """Aggregates trace failures raised while sampling the causality map."""

    def __init__(self, failures):
        self.failures = list(failures)
        head = "; ".join(f"sample {i} ({cid}, t={t:.6f}): {err}" for i, cid, t, err in self.failures[:3])
        super().__init__(f"{len(self.failures)} trace(s) failed: {head}")


# trajectory graph
class SignatureAmbiguity(HoloflowError):
    pass


class ValenceViolation(HoloflowError):
    pass


# holography
class BoundaryTraceIncomplete(HoloflowError):
    pass


class CommutationViolation(HoloflowError):
    def __init__(self, worst, witness):
        self.worst = float(worst)
        self.witness = witness
        super().__init__(f"boundary map does not commute with the causality maps: discrepancy {self.worst:.3g} at {witness}")


class LevelOutOfRange(HoloflowError):
    pass


# algebra
class ConstraintViolation(HoloflowError):
    pass


class IllConditioned(HoloflowError):
    pass


class SolverDiverged(HoloflowError):
    pass


class RangeViolation(HoloflowError):
    pass


# persistence / scenes
class VersionMismatch(HoloflowError):
    pass


class CorruptRecord(HoloflowError):
    def __init__(self, index, reason):
        self.index = index
        super().__init__(f"record {index}: {reason}")


class SceneError(HoloflowError):
    """Malformed scene file; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
