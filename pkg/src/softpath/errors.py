"""Exception hierarchy shared by every module of the package."""


class SoftPathError(ValueError):
    """Base class for all errors raised by softpath."""


# path construction / evaluation
class EmptyPath(SoftPathError):
    pass


class NonZeroStart(SoftPathError):
    pass


class NonMonotoneTimes(SoftPathError):
    pass


class GapTooSmall(SoftPathError):
    pass


class InvalidState(SoftPathError):
    pass


class OutOfHorizon(SoftPathError):
    pass


# operators
class HorizonMismatch(SoftPathError):
    pass


class InvalidTimeChange(SoftPathError):
    pass


class InconsistentTower(SoftPathError):
    pass


class NonStabilizingTower(SoftPathError):
    pass


class NeverVisitsA(SoftPathError):
    pass


class StartOutsideA(SoftPathError):
    pass


# metrics / simulators
class TooLarge(SoftPathError):
    pass


class EmptyEnsemble(SoftPathError):
    pass


class BadConfiguration(SoftPathError):
    pass
