"""qdlab: a grid laboratory for quadrature domains.

Solves the obstacle-type maximization problem for properly supported weight
functions (largest nonpositive f with lap f >= w - 1), extracts the
quadrature domain Q = {f < 0} union {w >= 1}, and verifies the identities
that make Q a quadrature domain: mass and centroid matching, the
moment-of-inertia inequality, and the potential certificate
N(1_Q - w) <= 0 with equality off Q.
"""

from . import analysis, cutoffs, field, greens, obstacle, oracles, quadrature

__all__ = ["analysis", "cutoffs", "field", "greens", "obstacle", "oracles", "quadrature"]
__version__ = "0.1.0"
