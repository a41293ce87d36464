"""Numerical laboratory for the Maryland model: the discrete Schrödinger
operator with potential lambda*tan(pi(theta + n*alpha)) on the line.

Modules: cf (continued fractions / frequencies), indices (resonance and
anti-resonance indices), cocycle (transfer matrices, determinants, Lyapunov
exponents), interp (node sets, interpolation, uniformity), spectrum (finite
boxes, eigensolver, Green functions), verify (eigenfunction decay envelopes),
cli (command-line entry points).
"""

__version__ = "0.1.0"

from .backends import BACKEND  # noqa: F401
