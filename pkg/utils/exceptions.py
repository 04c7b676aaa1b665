"""
Exception types raised by the rsa-lab library
"""


class RsaLabError(Exception):
    """Base class for all library errors"""


class ShapeError(RsaLabError, ValueError):
    """States, draws or matrices with mismatching shapes"""


class ConfigurationError(RsaLabError, ValueError):
    """Invalid or incomplete configuration"""


class ParameterError(RsaLabError, ValueError):
    """Numerical parameter outside its admissible range"""


class InputError(RsaLabError, ValueError):
    """Malformed input data (measures, instance files)"""


class SizeError(RsaLabError, ValueError):
    """Problem too large for an exact computation"""


class CertificationError(RsaLabError, RuntimeError):
    """An optimizer or certificate could not be verified"""


class InfeasibleParametersError(RsaLabError, ValueError):
    """Rate conditions fail for the requested parameters"""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonFiniteStateError(RsaLabError, FloatingPointError):
    """A lifted state picked up NaN or Inf entries"""

    def __init__(self, message, replication=None, step=None):
        super().__init__(message)
        self.replication = replication
        self.step = step
