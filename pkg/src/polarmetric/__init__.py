"""Numerical toolkit for transverse type-changing cometrics.

The metric ``g`` blows up on the hypersurface where ``det g*`` vanishes,
while the cometric ``g*`` stays smooth.  The modules build adapted frames,
the canonical transversal direction, crossing pregeodesics, natural
coordinates, curvature limits and conformal constructions for such
metrics.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import NumericalError, PolarMetricError, ValidationError  # noqa: E402
from .metric import MetricModel, load_model, model_from_dict, validate  # noqa: E402

__all__ = ["MetricModel", "NumericalError", "PolarMetricError", "ValidationError",
           "__version__", "load_model", "model_from_dict", "validate"]
