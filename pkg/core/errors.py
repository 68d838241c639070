"""Exception hierarchy shared by every package in the screening pipeline."""


class ScreeningError(Exception):
    """Base class for all errors raised by this project."""


class ShapeError(ScreeningError, ValueError):
    """Tensor or parameter shapes do not line up."""


class ConfigError(ScreeningError, ValueError):
    pass


class ManifestError(ScreeningError, ValueError):
    """One or more manifest rows failed validation."""

    def __init__(self, message: str, rows: list[str] | None = None):
        super().__init__(message)
        self.rows = rows or []


class AudioFormatError(ScreeningError, ValueError):
    pass


class WeightFormatError(ScreeningError, ValueError):
    pass


class TrainingError(ScreeningError, RuntimeError):
    pass


class EmbeddingKeyError(ScreeningError, KeyError):
    """A precomputed embedding was requested for a key the store does not hold."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing embedding"


class UsageError(ScreeningError):
    """Bad command-line usage; the CLI maps it to exit status 2."""
