class ConfigurationError(ValueError):
    """Invalid configuration or mismatched shapes/dimensions."""


class InputError(ValueError):
    """Invalid data passed to an operation."""


class ConfigParseError(ConfigurationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
