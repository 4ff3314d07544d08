"""Exception types raised across the engine."""


class SdfDemError(Exception):
    """Base class for all engine errors."""


class DegenerateShape(SdfDemError):
    pass


class ProjectionDiverged(SdfDemError):
    pass


class NonUnitAxis(SdfDemError):
    pass


class FixedBody(SdfDemError):
    pass


class SolverStalled(SdfDemError):
    def __init__(self, message, x1=None, x2=None, iterations=0):
        super().__init__(message)
        self.x1 = x1
        self.x2 = x2
        self.iterations = iterations


class DegenerateBond(SdfDemError):
    pass


class DegenerateDeformedBond(SdfDemError):
    pass


class IsolatedPoint(SdfDemError):
    pass


class UnknownBodyId(SdfDemError, KeyError):
    pass


class EmptyCollection(SdfDemError):
    pass


class SchemaError(SdfDemError):
    """Configuration validation failure carrying every problem found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SimulationAborted(SdfDemError):
    pass


class OutputError(SdfDemError, OSError):
    """An output file could not be written."""

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"cannot write '{path}': {reason}")
