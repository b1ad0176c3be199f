class S2MError(Exception):
    pass


class ShapeError(S2MError, ValueError):
    pass


class InvalidMaskError(S2MError, ValueError):
    pass


class ConfigError(S2MError, ValueError):
    pass


class DataError(S2MError, ValueError):
    """Malformed corpus, vocabulary, embedding or checkpoint input."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


class TrainingDiverged(S2MError, RuntimeError):
    pass
