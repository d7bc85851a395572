"""Exception taxonomy for the numerical pipeline.

Every failure mode that callers are expected to branch on gets its own class;
anything else surfaces as the nearest base class. The CLI maps ValidationError
to exit code 2, every other BlochDiracError to exit code 3, and I/O errors to 4.
"""

from __future__ import annotations

__all__ = [
    "BlochDiracError",
    "ValidationError",
    "IntegrationFailure",
    "ContourError",
    "LocalizationError",
    "SolverError",
    "CompletenessError",
    "DegenerateEigenvalueError",
    "NearSingularError",
    "CollisionError",
    "ProbeFailure",
]


class BlochDiracError(Exception):
    """Base class for all package-specific failures."""


class ValidationError(BlochDiracError):
    """Malformed potential spec, config payload, or argument out of contract."""


class IntegrationFailure(BlochDiracError):
    """Adaptive ODE propagation could not meet its tolerance.

    Carries the worst local error estimate seen before giving up.
    """

    def __init__(self, message: str, worst_local_error: float = float("nan")):
        super().__init__(message)
        self.worst_local_error = worst_local_error


class ContourError(BlochDiracError):
    """A contour (circle/rectangle edge) passes too close to a zero or is otherwise unusable."""

    def __init__(self, message: str, min_abs: float = float("nan")):
        super().__init__(message)
        self.min_abs = min_abs


class LocalizationError(BlochDiracError):
    """A root landed outside its guaranteed localization disk."""


class SolverError(BlochDiracError):
    """Newton/bisection root search failed to converge.

    ``trace`` keeps the iterates for post-mortem inspection.
    """

    def __init__(self, message: str, trace: tuple = ()):
        super().__init__(message)
        self.trace = tuple(trace)


class CompletenessError(BlochDiracError):
    """Enumerated eigenvalue count disagrees with the argument-principle count."""


class DegenerateEigenvalueError(BlochDiracError):
    """Simplicity condition failed (F'(λ)≈0 or s1(π,λ)≈0); use the singularity machinery."""


class NearSingularError(BlochDiracError):
    """Resolvent requested too close to spectrum: |F(λ) − 2cos(πt)| below threshold."""

    def __init__(self, message: str, delta_abs: float = float("nan")):
        super().__init__(message)
        self.delta_abs = delta_abs


class CollisionError(BlochDiracError):
    """Two tracked branches became numerically indistinguishable.

    ``bracket`` is a (t_lo, t_hi) interval localizing the closest approach.
    """

    def __init__(self, message: str, bracket: tuple = ()):
        super().__init__(message)
        self.bracket = tuple(bracket)


class ProbeFailure(BlochDiracError):
    """Blow-up exponent probe could not produce a stable fit."""
