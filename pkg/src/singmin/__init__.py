"""Certified construction of a continuous Lagrangian whose minimizer has
infinite-oscillation singularities at prescribed anchors, with numerical
corroboration of minimality."""

from .kernels import BACKEND
from .special_functions import GuardedValue, Offset, constant_C, half_width

__version__ = "0.1.0"

__all__ = ["BACKEND", "GuardedValue", "Offset", "constant_C", "half_width", "__version__"]
