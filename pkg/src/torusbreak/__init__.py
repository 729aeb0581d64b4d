"""Breakdown thresholds of invariant tori in 2D/4D standard maps.

Three independent methods: Lindstedt series + Pade singularity analysis,
spectral Newton continuation with Sobolev blow-up detection, and
Greene-style periodic-orbit residue analysis.
"""
from .precision import Context

__all__ = ["Context"]
__version__ = "0.1.0"
