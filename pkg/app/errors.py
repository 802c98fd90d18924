"""
Exception hierarchy

Every error raised by the simulator derives from RiclError. The concrete
classes also derive from ValueError so callers that only know about
ValueError keep working.
"""


class RiclError(Exception):
    """Base class for simulator errors"""


class ConfigError(RiclError, ValueError):
    """Invalid or malformed experiment configuration"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ShapeMismatchError(RiclError, ValueError):
    """Array shapes do not agree with the model layout"""


class NonFiniteError(RiclError, ValueError):
    """A parameter, gradient or input contains NaN or inf"""


class EmptyInputError(RiclError, ValueError):
    """An operation received an empty sequence where data is required"""


class DuplicateSampleError(RiclError, ValueError):
    """A sample id is already present in a buffer"""


class InsufficientDataError(RiclError, ValueError):
    """Not enough classes or samples to build the requested stream"""


class CorpusFormatError(RiclError, ValueError):
    """A corpus or synonym file line cannot be parsed"""
