"""Silhouette topology toolkit.

Erosion distance fields, ridge skeletons, spatial Chamfer losses, a 2-D
capsule body model and silhouette-only adaptation of a pose regressor.
"""
from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
