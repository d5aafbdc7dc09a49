"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: configuration problems are
``ConfigError`` (exit 2), anything that fails numerically at run time
derives from ``NumericalError`` (exit 3).
"""

from __future__ import annotations


class QsPatternError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(QsPatternError):
    """Invalid or inconsistent configuration / parameter input."""


class NumericalError(QsPatternError):
    """A numerical procedure failed to produce a valid result."""


class NoSteadyState(NumericalError):
    """No root of the steady-state balance equation inside the bracket."""


class NewtonDivergence(NumericalError):
    """Newton iteration failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None, residual_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm


class NotBracketed(NumericalError):
    """A sign change was expected in the scanned interval but not found."""


class NoLocalBranch(NumericalError):
    """Requested a bifurcating branch on the side where none exists locally."""


class DegenerateBifurcation(NumericalError):
    """Degenerate normal form (cubic coefficient grouping vanishes)."""


class ResonanceError(NumericalError):
    """A series recursion denominator vanished (cannot occur for valid parameters)."""


class NotDivergent(NumericalError):
    """Late-term sequence shows no factorial growth; singulant fit impossible."""
