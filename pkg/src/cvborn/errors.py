"""Exception hierarchy shared by the simulator, trainer and CLI."""


class CVBornError(Exception):
    """Base class for all package errors."""


class UsageError(CVBornError, ValueError):
    """Invalid arguments passed to an operation."""


class DomainError(UsageError):
    """An occupation vector lies outside the truncated Fock space."""


class SimulationError(CVBornError):
    """Numerical failure while simulating or sampling."""


class DegenerateStateError(SimulationError):
    """A state has (numerically) zero trace and cannot be normalized."""


class InvalidStateError(SimulationError):
    """A density matrix violates Hermiticity, positivity or normalization."""


class TruncationOverflowError(SimulationError):
    """Too much probability leaked out of the truncated Fock space."""


class UnsupportedGradientError(CVBornError, ValueError):
    """No parameter-shift rule exists for the requested gate parameter."""


class DegenerateConditionalError(SimulationError):
    """A conditional density matrix vanished (sample in a zero-density region)."""


class PathologicalDistributionError(SimulationError):
    """The root bracket for inverse transform sampling could not be established."""


class ConfigError(CVBornError, ValueError):
    """A configuration document does not follow the schema."""
