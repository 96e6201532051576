"""Exception types shared across the package.

Every error raised by the analysis modules derives from either
:class:`ValidationError` (the input violates a hypothesis; CLI exit code 2)
or :class:`NumericalError` (a computation failed to converge or left its
range of validity; CLI exit code 3).
"""
from __future__ import annotations

from .expr import DomainError, ExprError, ExprSyntaxError, NonFinite, UnknownVariable  # noqa: F401  (re-exported)


class PolarMetricError(Exception):
    """Base class for model and analysis failures."""

    module = "polarmetric"


class ValidationError(PolarMetricError):
    pass


class NumericalError(PolarMetricError):
    pass


# metric
class SpecError(ValidationError):
    module = "metric"


class RankError(ValidationError):
    module = "metric"


class DegeneratePoint(ValidationError):
    module = "metric"


class NotInDomain(ValidationError):
    module = "metric"


class ExtrapolationDiverged(NumericalError):
    module = "limits"

    def __init__(self, message: str, entry=None):
        super().__init__(message)
        self.entry = entry


# frames
class NotRadical(ValidationError):
    module = "frames"


class NotTransversal(ValidationError):
    module = "frames"


class GramSchmidtBreakdown(NumericalError):
    module = "frames"


class SingularCoframe(NumericalError):
    module = "frames"


class NotOnBoundary(ValidationError):
    module = "frames"


# connection
class NonExtendible(NumericalError):
    module = "connection"


# geodesic
class SpectrumMismatch(NumericalError):
    module = "geodesic"


class IntegrationFailure(NumericalError):
    module = "geodesic"


class LeftDomain(NumericalError):
    module = "geodesic"


class ApproachedBoundary(NumericalError):
    module = "geodesic"


# natcoords
class SignError(ValidationError):
    module = "natcoords"


class QuadratureFailure(NumericalError):
    module = "natcoords"


class FoldedChart(NumericalError):
    module = "natcoords"


# curvature
class StencilOutOfRange(NumericalError):
    module = "curvature"


class MeaninglessDimension(ValidationError):
    module = "curvature"


# conformal
class IsotropicField(ValidationError):
    module = "conformal"


class FrobeniusFailure(NumericalError):
    module = "conformal"


class HypothesisFailed(ValidationError):
    module = "conformal"

    def __init__(self, which: str, detail: str = ""):
        super().__init__(f"hypothesis failed: {which}" + (f" ({detail})" if detail else ""))
        self.which = which


# cli
class UnknownKind(ValidationError):
    module = "cli"


class UsageError(ValidationError):
    module = "cli"


__all__ = [name for name in dir() if name[0].isupper() and not name.startswith("_")]
