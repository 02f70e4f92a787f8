"""Exception hierarchy shared by all modules.

Every error that signals a violated numerical precondition derives from
``NumericalGuardError`` so that the CLI can map it to exit code 2.
"""


class NLQEDError(Exception):
    """Base class for all package errors."""


class ConfigError(NLQEDError):
    """Malformed or inconsistent run configuration."""


class NumericalGuardError(NLQEDError):
    """A scientific precondition does not hold for the given inputs."""


class GridTooNarrow(NumericalGuardError):
    pass


class GridTooCoarse(NumericalGuardError):
    pass


class DegenerateWronskian(NumericalGuardError):
    pass


class CoincidentPoints(NumericalGuardError):
    pass


class NonAbsorbing(NumericalGuardError):
    pass


class MissingGreen(NumericalGuardError):
    pass


class OverlappingBands(NumericalGuardError):
    pass


class BandMismatch(NumericalGuardError):
    pass


class VanishingAbsorption(NumericalGuardError):
    """Raised when Im eps at the sum frequency drops below the floor.

    ``locations`` lists the offending ``(x, omega)`` pairs.
    """

    def __init__(self, message, locations=()):
        super().__init__(message)
        self.locations = list(locations)


class PerturbationInvalid(NumericalGuardError):
    pass


class ZeroAmplitude(NumericalGuardError):
    pass


class KramersKronigViolation(NumericalGuardError):
    pass
