"""Exception types shared across the package."""


class TMRelaxError(Exception):
    """Base class for all package errors."""


class MalformedConfig(TMRelaxError):
    pass


class NotReversible(TMRelaxError):
    pass


class LayoutError(TMRelaxError):
    pass


class OrbitBudgetExceeded(TMRelaxError):
    pass


class BudgetExceeded(TMRelaxError):
    pass


class DimensionMismatch(TMRelaxError):
    pass


class WrongOrbitKind(TMRelaxError):
    pass


class EnergyOutOfRange(TMRelaxError):
    pass


class BetaOverflow(TMRelaxError):
    pass


class SymmetryViolation(TMRelaxError):
    pass


class DegenerateDenominator(TMRelaxError):
    pass


class SpectrumOutOfRange(TMRelaxError):
    pass


class NormTooLarge(TMRelaxError):
    pass


class PolyNotSubnormalized(TMRelaxError):
    pass


class ZeroProbability(TMRelaxError):
    pass


class PromiseUnknown(TMRelaxError):
    pass


class ScheduleInvalid(TMRelaxError):
    pass


class TauTooSmall(TMRelaxError):
    pass


class SpecParseError(TMRelaxError):
    pass
