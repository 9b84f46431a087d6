"""Small quadrature helpers.

Two tools cover every integral in the package:

* :func:`gauss_panels` integrates a batch of smooth integrands, one per interval,
  with a fixed 5-point Gauss-Legendre rule (degree-9 exactness).  Step intervals
  of the scheme are tiny and the integrands polynomial in ``r``, so this is exact
  to machine precision and vectorizes over hundreds of thousands of intervals.
* :func:`adaptive_simpson` handles the few long, possibly kinked 1-D integrals
  (cost quadratures) where adaptivity actually matters.
"""

from __future__ import annotations

import numpy as np

# nodes/weights on [-1, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


def gauss_panels(f, a, b):
    """Integrate ``f`` over each interval ``[a_i, b_i]`` with 5-point Gauss.

    Parameters
    ----------
    f : callable
        Vectorized ``f(r)`` where ``r`` has shape ``(m, 5)``; must return the
        integrand evaluated elementwise, shape ``(m, 5)``.
    a, b : arrays of shape (m,)

    Returns
    -------
    array of shape (m,) with the panel integrals.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    r = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = f(r)
    return half * (vals * _GL_W[None, :]).sum(axis=1)


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=40):
    """Adaptive Simpson integral of scalar ``f`` on ``[a, b]``."""
    if a == b:
        return 0.0

    def _simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def _rec(x0, x2, f0, f1, f2, whole, tol, depth):
        x1 = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + x1)
        xr = 0.5 * (x1 + x2)
        fl = f(xl)
        fr = f(xr)
        left = _simpson(x0, x1, f0, fl, f1)
        right = _simpson(x1, x2, f1, fr, f2)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return _rec(x0, x1, f0, fl, f1, left, 0.5 * tol, depth - 1) + _rec(
            x1, x2, f1, fr, f2, right, 0.5 * tol, depth - 1
        )

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = _simpson(a, b, fa, fm, fb)
    return _rec(a, b, fa, fm, fb, whole, tol, max_depth)
