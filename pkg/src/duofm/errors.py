"""Exception hierarchy shared by every module."""


class DuoError(Exception):
    """Base class for all errors raised by duofm."""


class ParseError(DuoError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormatError(ParseError):
    """Raised for recognised but unsupported encodings (binary PLY)."""


class TopologyError(DuoError):
    pass


class GenerationError(DuoError):
    pass


class NumericalError(DuoError):
    pass


class FrameError(DuoError):
    pass


class RankError(DuoError):
    pass


class ConvergenceError(DuoError):
    pass


class FactorizationError(DuoError):
    pass


class DimensionError(DuoError, ValueError):
    pass


class SpectrumError(DuoError):
    pass


class SolveError(DuoError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DivergenceError(DuoError):
    pass


class DisconnectedError(DuoError):
    def __init__(self, message, vertices=()):
        self.vertices = list(vertices)
        super().__init__(message)


class CacheError(DuoError):
    pass


class CacheVersionError(CacheError):
    pass


class HashMismatchError(CacheError):
    pass


class CorruptionError(CacheError):
    pass
