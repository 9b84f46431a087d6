"""Critical-point atlas, Moreau-Yosida regularization, and stability sets.

The atlas at a fixed time t collects the roots of grad F(t, .) inside the
working box, classified by the Hessian spectrum.  The Moreau-Yosida gap
R(t, u) = F(t, u) - min_v [F(t, v) + (lam/2)|v - u|^2] >= 0 measures how far u
is from being stable at rate lam; its zero set is a subset of the atlas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyFailure
from .solver import default_scan_resolution, global_argmin, newton_root

CRIT_TOL = 1e-8
DEGENERACY_TOL = 1e-5
STABLE_R_TOL = 1e-9


def classify_point(model, t, x, degeneracy_tol=DEGENERACY_TOL):
    """'stable' / 'unstable' / 'degenerate' from the Hessian spectrum."""
    eigs = np.linalg.eigvalsh(model.hess(t, x))
    if float(np.abs(eigs).min()) < degeneracy_tol:
        return "degenerate"
    return "stable" if float(eigs.min()) > 0 else "unstable"


@dataclass
class CriticalAtlas:
    """All critical points found at one time, with classes and separation."""

    t: float
    points: np.ndarray  # (k, n)
    classes: list
    residuals: np.ndarray  # (k,) gradient norms at the points
    min_separation: float

    def __len__(self):
        return len(self.points)

    def of_class(self, cls):
        idx = [i for i, c in enumerate(self.classes) if c == cls]
        return self.points[idx]

    @property
    def stable(self):
        return self.of_class("stable")

    @property
    def unstable(self):
        return self.of_class("unstable")

    @property
    def degenerate(self):
        return self.of_class("degenerate")

    def nearest(self, x):
        """(point, class, distance) of the closest atlas entry, or None."""
        if len(self.points) == 0:
            return None
        d = np.linalg.norm(self.points - np.asarray(x, float), axis=1)
        i = int(np.argmin(d))
        return self.points[i], self.classes[i], float(d[i])

    def as_dict(self):
        return {
            "t": self.t,
            "points": [[float(v) for v in p] for p in self.points],
            "classes": list(self.classes),
            "residuals": [float(r) for r in self.residuals],
            "min_separation": None if np.isinf(self.min_separation)
            else float(self.min_separation),
        }


def _grad_scalar(model, t, x):
    return float(model.gradient(t, np.asarray([[x]], float))[0, 0])


def _bisect_root(model, t, a, b, ga, gb, iters=80):
    for _ in range(iters):
        m = 0.5 * (a + b)
        gm = _grad_scalar(model, t, m)
        if gm == 0.0:
            return m
        if (ga < 0) != (gm < 0):
            b, gb = m, gm
        else:
            a, ga = m, gm
    return 0.5 * (a + b)


def _hessian_root_polish(model, t, x0, box):
    # a double root of g sits where F_xx vanishes; Newton on the hessian
    # converges quadratically there, unlike plain Newton on g itself
    x = float(x0)
    for _ in range(60):
        h = float(model.hess(t, [x])[0, 0])
        step = 1e-6 * max(1.0, abs(x))
        dh = (float(model.hess(t, [x + step])[0, 0])
              - float(model.hess(t, [x - step])[0, 0])) / (2.0 * step)
        if dh == 0.0:
            break
        x_new = float(np.clip(x - h / dh, box.lo[0], box.hi[0]))
        if abs(x_new - x) <= 1e-15 * max(1.0, abs(x)):
            x = x_new
            break
        x = x_new
    return x, abs(float(model.grad(t, [x])[0]))


def _roots_1d(model, t, resolution, crit_tol):
    box = model.box
    xs = box.grid(resolution)[:, 0]
    g = model.gradient(t, xs[:, None])[:, 0]
    roots = []
    for i in range(len(xs) - 1):
        if g[i] == 0.0:
            roots.append(xs[i])
        elif (g[i] < 0) != (g[i + 1] < 0):
            roots.append(_bisect_root(model, t, xs[i], xs[i + 1], g[i], g[i + 1]))
    if g[-1] == 0.0:
        roots.append(xs[-1])
    # tangential roots (no sign change): polish from interior local minima of |g|
    a = np.abs(g)
    for i in range(1, len(xs) - 1):
        if a[i] <= a[i - 1] and a[i] <= a[i + 1] and a[i] > 0:
            x, rn, _, ok = newton_root(model, t, [xs[i]], crit_tol, 90, box=box)
            if ok:
                roots.append(float(x[0]))
            x2, g2 = _hessian_root_polish(model, t, float(x[0]), box)
            if g2 <= crit_tol:
                roots.append(x2)
    return [np.array([r]) for r in roots]


def _roots_nd(model, t, resolution, crit_tol):
    box = model.box
    roots = []
    for x0 in box.grid(resolution):
        x, rn, _, ok = newton_root(model, t, x0, crit_tol, 80, box=box)
        if ok and not box.on_boundary(x):
            roots.append(x)
    return roots


def critical_points(model, t, *, resolution=None, crit_tol=CRIT_TOL,
                    merge_radius=None, degeneracy_tol=DEGENERACY_TOL):
    """Atlas of grad F(t, .) = 0 inside the working box.

    1-d roots come from sign-change bisection plus a polish pass on
    tangential near-zeros, so fold points (double roots) are found too.
    Higher dimensions run Newton from every node of a coarse start grid.
    """
    n = model.dim
    if resolution is None:
        resolution = 241 if n == 1 else (25 if n == 2 else 9)
    if merge_radius is None:
        merge_radius = 1e-4 * model.box.diameter

    raw = _roots_1d(model, t, resolution, crit_tol) if n == 1 else \
        _roots_nd(model, t, resolution, crit_tol)

    scored = []
    for x in raw:
        x = np.asarray(x, float)
        rn = float(np.linalg.norm(model.grad(t, x)))
        if rn <= max(crit_tol, 1e-6):
            scored.append((rn, x))
    scored.sort(key=lambda s: s[0])

    kept = []
    for rn, x in scored:
        if all(np.linalg.norm(x - y) > merge_radius for _, y in kept):
            kept.append((rn, x))
    kept.sort(key=lambda s: tuple(s[1]))

    points = np.array([x for _, x in kept]).reshape(len(kept), n)
    residuals = np.array([rn for rn, _ in kept])
    classes = [classify_point(model, t, x, degeneracy_tol) for x in points]

    if len(points) >= 2:
        d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
        sep = float(d[np.triu_indices(len(points), 1)].min())
    else:
        sep = np.inf
    return CriticalAtlas(t=float(t), points=points, classes=classes,
                         residuals=residuals, min_separation=sep)


@dataclass
class MoreauYosidaResult:
    """One regularized evaluation: value, proximal point, certificates."""

    value: float  # min_v F(t,v) + (lam/2)|v-u|^2
    argmin: np.ndarray
    gap: float  # F(t,u) - value, >= 0 up to roundoff
    residual: float  # norm of grad F + lam (v - u) at the argmin
    tie_break: bool


def moreau_yosida(model, t, u, lam, *, resolution=None, newton_tol=1e-10,
                  max_iter=60, grid=None):
    """Moreau-Yosida value and proximal point at rate lam."""
    sol = global_argmin(
        model, float(t), u, lam,
        resolution=resolution, newton_tol=newton_tol, max_iter=max_iter,
        grid=grid,
    )
    return MoreauYosidaResult(
        value=sol.objective,
        argmin=sol.x,
        gap=sol.improvement,
        residual=sol.residual,
        tie_break=sol.tie_break,
    )


def residual_stability(model, t, u, lam, **kw):
    """Gap R(t, u) >= 0; tiny negative roundoff is clamped to zero."""
    gap = moreau_yosida(model, t, u, lam, **kw).gap
    if gap < -1e-12:
        raise ConsistencyFailure(
            f"Moreau-Yosida gap {gap:.3e} < 0 at t={t}: certification broken"
        )
    return max(gap, 0.0)


@dataclass
class StableSet:
    """Zero set of the rate-lam gap at one time, as atlas entries."""

    t: float
    lam: float
    points: np.ndarray
    classes: list
    gaps: np.ndarray

    def __len__(self):
        return len(self.points)

    def as_dict(self):
        return {
            "t": self.t,
            "lambda": self.lam,
            "points": [[float(v) for v in p] for p in self.points],
            "classes": list(self.classes),
            "gaps": [float(g) for g in self.gaps],
        }


def stable_points(model, t, lam, *, atlas=None, r_tol=STABLE_R_TOL,
                  verify=None, scan_resolution=None, **atlas_kw):
    """Atlas entries whose rate-lam gap vanishes.

    With ``verify`` on (default for dim <= 2), a coarse scan checks the
    containment 'gap zero implies critical': a scan point with vanishing gap
    but a large gradient raises ConsistencyFailure.
    """
    if atlas is None:
        atlas = critical_points(model, t, **atlas_kw)
    n = model.dim
    if verify is None:
        verify = n <= 2

    keep, gaps = [], []
    grid = model.box.grid(default_scan_resolution(n)) if n <= 3 else None
    for i, p in enumerate(atlas.points):
        g = residual_stability(model, t, p, lam, grid=grid)
        if g <= r_tol:
            keep.append(i)
            gaps.append(g)

    if verify:
        res = scan_resolution or (41 if n == 1 else 13)
        for x in model.box.grid(res):
            g = residual_stability(model, t, x, lam, grid=grid)
            if g <= r_tol:
                gn = float(np.linalg.norm(model.grad(t, x)))
                if gn > 1e-3:
                    raise ConsistencyFailure(
                        f"gap {g:.2e} vanishes at non-critical point {x} "
                        f"(|grad| = {gn:.2e}) at t={t}"
                    )

    return StableSet(
        t=float(t), lam=float(lam),
        points=atlas.points[keep].reshape(len(keep), n),
        classes=[atlas.classes[i] for i in keep],
        gaps=np.array(gaps),
    )
