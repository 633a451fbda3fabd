"""Desk-scale pluripotential theory laboratory on flat tori and projective charts."""

from ._accel import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
