"""Slow but independent numeric routes used to pin expected values.

Nothing here calls the package solver machinery: argmins come from dense
scans with one parabolic refinement, roots from plain bisection, integrals
from midpoint Riemann sums.
"""

import numpy as np


def grid_argmin(f, lo, hi, n=20001):
    """Dense-grid argmin of a vectorized scalar function, parabola-refined."""
    xs = np.linspace(lo, hi, n)
    ys = f(xs)
    i = int(np.argmin(ys))
    if 0 < i < n - 1:
        denom = ys[i - 1] - 2.0 * ys[i] + ys[i + 1]
        if denom > 0:
            h = xs[1] - xs[0]
            return float(xs[i] + 0.5 * h * (ys[i - 1] - ys[i + 1]) / denom)
    return float(xs[i])


def grid_min(f, lo, hi, n=20001):
    """Dense-grid minimum value with the same parabolic refinement."""
    x = grid_argmin(f, lo, hi, n)
    return float(f(np.array([x]))[0])


def bisect_roots(g, lo, hi, n=4001, iters=90):
    """All sign-change roots of a vectorized g on [lo, hi]."""
    xs = np.linspace(lo, hi, n)
    ys = g(xs)
    roots = []
    for i in range(n - 1):
        a, b, fa, fb = xs[i], xs[i + 1], ys[i], ys[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if (fa < 0) == (fb < 0):
            continue
        for _ in range(iters):
            m = 0.5 * (a + b)
            fm = float(g(np.array([m]))[0])
            if (fm < 0) == (fa < 0):
                a, fa = m, fm
            else:
                b, fb = m, fm
        roots.append(0.5 * (a + b))
    if ys[-1] == 0.0:
        roots.append(float(xs[-1]))
    return roots


def riemann_speed_integral(gabs, a, b, n=400001):
    """Midpoint rule of |g| along the straight segment from a to b."""
    mids = np.linspace(a, b, n + 1)
    mids = 0.5 * (mids[:-1] + mids[1:])
    return float(np.sum(gabs(mids)) * abs(b - a) / n)


def envelope_min(f, u, lam, lo, hi, n=40001):
    """Dense scan of x -> f(x) + lam/2 (x - u)^2."""
    xs = np.linspace(lo, hi, n)
    vals = f(xs) + 0.5 * lam * (xs - u) ** 2
    i = int(np.argmin(vals))
    if 0 < i < n - 1:
        denom = vals[i - 1] - 2.0 * vals[i] + vals[i + 1]
        if denom > 0:
            h = xs[1] - xs[0]
            x = xs[i] + 0.5 * h * (vals[i - 1] - vals[i + 1]) / denom
            return float(f(np.array([x]))[0] + 0.5 * lam * (x - u) ** 2)
    return float(vals[i])


def cumulative_trapezoid(y, x):
    """Running trapezoid integral matching numpy conventions."""
    out = np.zeros(len(y))
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out
