"""
Error types for the singular flux lab.
Every failure carries a stable code used in summary.json and an exit code used by the CLI.
"""

from dataclasses import dataclass


class LabError(Exception):
    """Base class for all lab failures."""

    code = "lab_error"
    exit_code = 1

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self) -> dict:
        return {"code": self.code, "error": str(self), **self.details}


class InvalidParameter(LabError):
    code = "invalid_parameter"


class ConfigError(LabError):
    code = "config_error"
    exit_code = 64


class IoError(LabError):
    code = "io_error"


# =====================================================================
# nonlinearity
# =====================================================================

class NonIntegrableSingularity(LabError):
    code = "non_integrable_singularity"


class UnsupportedKind(LabError):
    code = "unsupported_kind"


class InfiniteInfimum(LabError):
    code = "infinite_infimum"


class Inconclusive(LabError):
    code = "inconclusive"


# =====================================================================
# grid
# =====================================================================

class NonFinite(LabError):
    code = "non_finite"


class DomainMismatch(LabError):
    code = "domain_mismatch"


# =====================================================================
# ode / bvp
# =====================================================================

class NoConvergence(LabError):
    code = "no_convergence"


class CoercivityViolation(LabError):
    code = "coercivity_violation"


class RangeExceeded(LabError):
    code = "range_exceeded"


class NoRootInBracket(LabError):
    code = "no_root_in_bracket"


class CrossCheckMismatch(LabError):
    code = "cross_check_mismatch"


class BracketTooNarrow(LabError):
    code = "bracket_too_narrow"


# =====================================================================
# construct / verify
# =====================================================================

class ExponentOutOfWindow(LabError):
    code = "exponent_out_of_window"


class SignClash(LabError):
    code = "sign_clash"


class MembershipFailure(LabError):
    code = "membership_failure"


class ZeroAtSplice(LabError):
    code = "zero_at_splice"


class BudgetExceeded(LabError):
    code = "budget_exceeded"


@dataclass(frozen=True)
class NoSolution:
    """Outcome value for problems that admit no weak solution."""

    reason: str

    def to_dict(self) -> dict:
        return {"no_solution": True, "reason": self.reason}
