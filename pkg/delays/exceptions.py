"""
Errors raised by the lab.

Every error carries a human readable message and a dict of diagnostics.
`exit_code` is what the `lab` command exits with when the error escapes.
"""


class LabError(Exception):
    """Base class for every failure the lab reports."""

    exit_code = 1

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics

    def __str__(self):
        if not self.diagnostics:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in sorted(self.diagnostics.items()))
        return f"{self.message} ({details})"


class ConfigurationError(LabError):
    """Inputs that fail validation before any computation starts."""

    exit_code = 2


class ProfileError(ConfigurationError):
    """Energy profile touching E <= E_min or failing normalization."""


class GridError(ConfigurationError):
    """Grid or region that does not fit the problem."""


class UnitarityError(LabError):
    """S-matrix unitarity defect above tolerance."""


class PhaseJumpError(LabError):
    """Phase changes by more than pi/2 over a derivative step."""


class ConvergenceError(LabError):
    """A numerical limit (slope fit, extrapolation) did not settle."""


class ConditionProbabilityError(LabError):
    """Final-state condition is almost never satisfied."""


class ArrivalError(LabError):
    """Trajectory does not cross the sphere of radius r twice."""


class PrecessionError(LabError):
    """Larmor precession exceeds pi, the reading is ambiguous."""


class NormDriftError(LabError):
    """Wave-packet norm drifted beyond tolerance."""


class WindowTooShortError(LabError):
    """Propagation stopped before the packet left the region."""


class ResonanceFitError(LabError):
    """No isolated |T|^2 peak or a failed Lorentzian fit."""


class TruncationError(LabError):
    """Requested sideband outside the Floquet truncation."""
