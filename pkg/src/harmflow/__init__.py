"""Discrete harmonic maps between constant-curvature surfaces.

Weighted geodesic triangulations of flat tori and genus-2 hyperbolic
surfaces, the discrete heat flow, and a harness for measuring how the
discrete theory converges under midpoint refinement.
"""

from .geometry import EUCLIDEAN, HYPERBOLIC, GeometryContext

__version__ = "0.1.0"

__all__ = ["EUCLIDEAN", "HYPERBOLIC", "GeometryContext", "__version__"]
