"""Numerical toolkit for Holder-smooth linearization at hyperbolic fixed points.

Checks spectral band and gap conditions, evaluates the guaranteed Holder
exponent of the linearizing conjugacy, constructs the conjugacy through
invariant foliations and a per-band cascade, and verifies everything
empirically.
"""

__version__ = "0.1.0"
