"""Exception and warning types raised across the package."""


class LeraymarchError(Exception):
    """Base class for all package errors."""


class InvalidGrid(LeraymarchError):
    """Grid parameters violate an invariant (dimension, point count, extent)."""


class NonFinite(LeraymarchError):
    """A field contains NaN or infinite samples."""


class TopologyMismatch(LeraymarchError):
    """Operation requested on a grid topology it does not support."""


class SingularPoint(LeraymarchError):
    """Kernel evaluated at its singularity."""


class ZeroTime(LeraymarchError):
    """Heat-kernel evaluation requested at zero elapsed time."""


class EngineMismatch(LeraymarchError):
    """Direct and fast convolution engines disagree beyond tolerance."""


class DepthExceeded(LeraymarchError):
    """Analytic-expansion order beyond the configured maximum."""


class CFLViolation(LeraymarchError):
    """Explicit advection substep violates the CFL bound."""


class BackendDisagreement(LeraymarchError):
    """Cross-validated solver backends disagree beyond tolerance."""


class EmptyDistance(LeraymarchError):
    """Partition requested for sets that touch."""


class LedgerViolation(LeraymarchError):
    """Input data violate a bound the ledger guarantees."""


class LedgerBreach(LeraymarchError):
    """A scheme bound failed its numerical check; diagnostics attached."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoContraction(LeraymarchError):
    """Fixed-point iteration expanded over several consecutive sweeps."""


class MaxPrincipleViolation(LeraymarchError):
    """Sup norm grew beyond the grid tolerance in a max-principle mode."""


class CapCollapse(LeraymarchError):
    """Step-size cap dropped below the usable floor (ledger blow-up)."""


class SeriesDiverging(LeraymarchError):
    """Boundary-density series terms fail the ratio test."""


class ScheduleError(LeraymarchError):
    """Requested step size is incompatible with the step-size cap."""


class ParseError(LeraymarchError):
    """Config file could not be parsed; message carries line information."""


class ValidationError(LeraymarchError):
    """Config parsed but one or more fields are invalid."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class TruncationWarning(UserWarning):
    """Series truncated before its terms decayed."""


class ValidityWindowWarning(UserWarning):
    """Analytic expansion queried outside its empirical validity window."""
