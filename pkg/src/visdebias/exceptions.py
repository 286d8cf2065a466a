"""Error categories surfaced by the library and mapped to CLI exit codes."""


class VisDebiasError(Exception):
    exit_code = 1


class ConfigError(VisDebiasError, ValueError):
    exit_code = 2


class ParseError(VisDebiasError, ValueError):
    """Malformed input file. ``path`` and ``line`` are set when known."""

    exit_code = 3

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class FormatError(ParseError):
    pass


class DataError(VisDebiasError, ValueError):
    exit_code = 4


class SparseDatasetError(DataError):
    pass


class ShapeError(DataError):
    pass


class ProtocolError(VisDebiasError, ValueError):
    exit_code = 5


class TrainingError(VisDebiasError, FloatingPointError):
    exit_code = 6
