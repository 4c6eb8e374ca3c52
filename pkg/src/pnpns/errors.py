"""Exception types shared across the solver."""


class PnpnsError(Exception):
    """Base class for all solver errors."""


class GridMismatchError(PnpnsError):
    """Operands live on different grids (or have the wrong shape)."""


class NonZeroMeanError(PnpnsError):
    """A zero-mean right-hand side was required but not supplied."""


class NonPositiveMobilityError(PnpnsError):
    """Mobility coefficient must be strictly positive at every point."""


class NonPositiveConcentrationError(PnpnsError):
    """Ion concentration must be strictly positive (logs are taken)."""


class MassMismatchError(PnpnsError):
    """Candidate fields do not carry the required total mass."""


class NetChargeError(PnpnsError):
    """Initial data carries a non-negligible net charge."""


class NoConvergenceError(PnpnsError):
    """An iterative solve exhausted its budget.

    Attributes:
        iterations: iterations performed before giving up.
        residual: residual norm at the last iterate.
    """

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.bare_message = message
        self.iterations = iterations
        self.residual = residual


class ConfigError(PnpnsError):
    """Run configuration is invalid."""


class SnapshotError(PnpnsError):
    """Snapshot file is corrupt, truncated, or incompatible."""


class RejectedGridError(SnapshotError):
    """Snapshot grid size does not match the requesting run."""
