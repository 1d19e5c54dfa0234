"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates an operation's precondition."""


class ConfigError(ValueError):
    """Bad configuration: split counts, missing paths, malformed config files."""


class EmptyEvidenceError(ValueError):
    """A statistic was requested over an empty evidence set."""
