"""
Exception hierarchy for hullconc
"""


class HullConcError(Exception):
    """Base class for all toolkit errors"""


class ConfigError(HullConcError):
    """Invalid configuration file or command-line value"""


class ModelError(ConfigError):
    """Distribution model rejected at construction"""


class DomainError(HullConcError, ValueError):
    """Argument outside the mathematical domain of an operation"""


class NumericError(HullConcError, ArithmeticError):
    """Quadrature, root-finding or other numeric failure"""


class GeometryError(HullConcError):
    """Infeasible LP or a body without the origin in its interior"""


class CoverageError(GeometryError):
    """A net fails to cover a residual direction"""

    def __init__(self, message: str, direction=None):
        super().__init__(message)
        self.direction = direction


class NetCardinalityError(GeometryError):
    """Net grew past the volumetric bound (3/eps)^d"""


class NetMismatchError(GeometryError):
    """Net points are not on the boundary of the oracle's polar body"""


class SoundnessViolation(HullConcError, AssertionError):
    """A certified sandwich contradicted by brute force"""


class OutputError(HullConcError):
    """A report, summary or manifest could not be written"""
