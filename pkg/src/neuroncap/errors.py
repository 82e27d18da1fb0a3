"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions are inconsistent (message names both shapes)."""


class DomainError(ValueError):
    """Input is outside an operation's mathematical domain."""


class ConfigError(ValueError):
    """Invalid configuration value or unknown mechanism/option name."""


class ParseError(ValueError):
    """Malformed dataset or config file; message carries the line number."""


class FormatError(ValueError):
    """Checkpoint or persisted-artifact bytes do not match the expected layout."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss); message carries epoch and step."""
