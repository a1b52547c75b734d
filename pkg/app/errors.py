"""
Exceptions for the CV-QSDC simulator
Every class carries the exit code the command line reports for it
"""


class QsdcError(Exception):
    """Base error. Unclassified failures are internal invariant violations."""

    exit_code = 4


# =============================================================================
# CONFIGURATION (exit 2)
# =============================================================================

class ConfigError(QsdcError, ValueError):
    """Bad configuration file, unknown key or invalid value."""

    exit_code = 2


class InvalidParams(ConfigError):
    """Parameters outside their physical or structural range."""


class DomainError(ConfigError):
    """Function argument outside its mathematical domain."""


# =============================================================================
# INPUT DATA (exit 3)
# =============================================================================

class InputDataError(QsdcError):
    exit_code = 3


class DegenerateInput(InputDataError):
    """Estimation data that admits no estimate (too few samples, zero energy)."""


class InsufficientSamples(InputDataError):
    pass


class LengthMismatch(InputDataError):
    pass


class FrameMismatch(InputDataError):
    """Mode frames inconsistent with their header."""


class MalformedData(InputDataError):
    """CSV input missing columns or holding non-numeric values."""


class SeedDegenerate(InputDataError):
    """
    Toeplitz seed whose rightmost k x k block is singular over GF(2).

    Row operations alone cannot reach the systematic form; the caller must
    draw a new seed.
    """


class CalibrationInfeasible(InputDataError):
    """Calibration target outside what the model can reach."""


# =============================================================================
# INTERNAL INVARIANTS (exit 4)
# =============================================================================

class InvariantViolation(QsdcError):
    exit_code = 4


class NonPhysicalState(InvariantViolation):
    """Covariance matrix with a symplectic eigenvalue below one."""


class NonPhysicalSpectrum(InvariantViolation):
    """Closed-form symplectic eigenvalue below one."""
