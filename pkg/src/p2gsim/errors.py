"""Exception hierarchy shared by the simulation modules."""


class P2GSimError(Exception):
    """Base class for all p2gsim errors."""


class ValidationError(P2GSimError):
    """Bad input data (maps to CLI exit code 2)."""


class SimulationError(P2GSimError):
    """Failure while simulating (maps to CLI exit code 3)."""


# electric network
class NonRadialTopology(ValidationError):
    pass


class NotConverged(SimulationError):
    pass


class VoltageCollapse(SimulationError):
    pass


# gas network
class IntegrationUnstable(SimulationError):
    pass


class NegativeMass(SimulationError):
    pass


# plant / dispatch
class BufferUnderflow(SimulationError):
    pass


class UnmappedTransformer(ValidationError):
    pass


# scenario loading
class ParseError(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class DanglingReference(ValidationError):
    pass


class HorizonMismatch(ValidationError):
    pass


class SimulationFault(SimulationError):
    """Module error wrapped with the timestep at which it happened.

    ``partial`` holds the result trace up to (excluding) the failed step.
    """

    def __init__(self, message, step=None, partial=None):
        super().__init__(message)
        self.step = step
        self.partial = partial


# reporting
class IncompleteTrace(ValidationError):
    pass


class ScenarioMismatch(ValidationError):
    pass


class UnknownView(ValidationError):
    pass


class WindowOutOfRange(ValidationError):
    pass
