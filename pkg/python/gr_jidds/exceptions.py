"""
Exception hierarchy for gr-jidds
"""


class JiddsError(Exception):
    """Base class for all gr-jidds errors"""


class DimensionError(JiddsError, ValueError):
    """Vector, grid or matrix sizes do not agree"""


class CodeConstructionError(JiddsError, RuntimeError):
    """A regular LDPC matrix could not be built for the requested parameters"""


class RankDeficientError(JiddsError, ValueError):
    """Parity-check matrix rows are linearly dependent over GF(2)"""

    def __init__(self, message, effective_dimension):
        super().__init__(message)
        self.effective_dimension = effective_dimension


class AlistFormatError(JiddsError, ValueError):
    """Malformed alist text"""


class ChannelFormatError(JiddsError, ValueError):
    """Malformed channel response matrix file"""


class DetectorError(JiddsError, RuntimeError):
    """The trellis detector produced non-finite metrics at some position"""


class BracketError(JiddsError, ValueError):
    """Threshold search bracket does not separate convergence from failure"""


class ConfigError(JiddsError, ValueError):
    """Invalid run configuration; `field` names the offending key"""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DensityError(JiddsError, ValueError):
    """An LLR histogram has zero or non-finite total mass"""
