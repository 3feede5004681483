"""Non-stationary linear contextual bandit simulations with invariant-subspace UCB."""

__version__ = "0.1.0"

from . import environments, figures, harness, policies, subspace  # noqa: F401
