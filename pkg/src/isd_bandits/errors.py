"""Exception types shared across the library."""


class InvalidInputError(ValueError):
    """An argument violates an operation's preconditions."""


class InvalidPartitionError(ValueError):
    """A block partition cannot produce a valid basis (e.g. no residual block)."""


class NumericalError(RuntimeError):
    """A linear-algebra routine failed (rank deficiency, failed factorization)."""


class ConfigError(ValueError):
    """An experiment configuration is malformed."""


class EpisodeError(RuntimeError):
    """A policy or environment failure inside an episode, annotated with context."""
