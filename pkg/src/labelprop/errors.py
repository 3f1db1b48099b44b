"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or incompatible shapes."""


class SpecError(ValueError):
    """A synthetic-video specification that cannot be realized."""


class FormatError(ValueError):
    """Malformed file content, with the path and offending field."""

    def __init__(self, path, field, message):
        self.path = str(path)
        self.field = field
        super().__init__(f"{self.path}: bad {field}: {message}")
