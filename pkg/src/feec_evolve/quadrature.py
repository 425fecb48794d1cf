"""Quadrature rules on the reference triangle and the unit interval."""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

__all__ = ["triangle_rule", "interval_rule"]


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss rule on ``{(0,0), (1,0), (0,1)}`` exact to ``degree``.

    Gauss-Legendre in the collapsed direction times Gauss-Jacobi(1, 0) in
    the other, so the Duffy Jacobian ``1 - y`` is absorbed into the
    weights. Weights sum to 1/2.

    Returns
    -------
    points : (Q, 2) array
    weights : (Q,) array
    """
    n = max(1, (degree + 2) // 2)
    s, ws = np.polynomial.legendre.leggauss(n)
    t, wt = roots_jacobi(n, 1.0, 0.0)
    xi = 0.5 * (1.0 + s)
    eta = 0.5 * (1.0 + t)
    X = np.outer(1.0 - eta, xi)
    Y = np.repeat(eta[:, None], n, axis=1)
    W = np.outer(0.25 * wt, 0.5 * ws)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    w = W.ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def interval_rule(degree):
    """Gauss-Legendre rule on [0, 1] exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    s, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (1.0 + s)
    w = 0.5 * w
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w
