"""Exception hierarchy shared by all modules."""


class SvrOpfError(Exception):
    """Base class for every error raised by this package."""


# ingestion
class SchemaError(SvrOpfError, ValueError):
    pass


class PhaseMismatch(SvrOpfError, ValueError):
    pass


class UnitsError(SvrOpfError, ValueError):
    pass


class CycleError(SvrOpfError):
    pass


class NonRadial(SvrOpfError):
    pass


# gain algebra
class RatioOutOfBounds(SvrOpfError, ValueError):
    pass


class TapOutOfRange(SvrOpfError, ValueError):
    pass


class SingularGain(SvrOpfError, ValueError):
    pass


# load flow
class NonConvergence(SvrOpfError):
    pass


class ZeroVoltage(SvrOpfError):
    pass


# relaxation construction
class DeltaOutOfRange(SvrOpfError, ValueError):
    pass


class EmptyBox(SvrOpfError, ValueError):
    pass


class UnsupportedMode(SvrOpfError, ValueError):
    pass


class InfeasibleBox(SvrOpfError):
    pass


class NotSvrSecondary(SvrOpfError, ValueError):
    pass


class MissingDg(SvrOpfError, ValueError):
    pass


class SolverFailure(SvrOpfError):
    def __init__(self, message, status=None, diagnostics=None):
        super().__init__(message)
        self.status = status
        self.diagnostics = diagnostics or {}


# recovery
class NegativeR(SvrOpfError):
    pass


class DegenerateV(SvrOpfError):
    pass


class ZeroTrace(SvrOpfError):
    pass
