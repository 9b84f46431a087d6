"""Energy models F(t, x) on a working box, plus the built-in test energies.

A model provides the energy, its state gradient, its time derivative, and
(optionally) an analytic Hessian, all in batched form: ``t`` may be a scalar or
an array matching the leading dimension of ``X``.  Scalar convenience wrappers
and the public ``evaluate`` / ``gradient`` / ``time_derivative`` entry points
validate inputs and raise :class:`~mmflow.errors.NonFinite` on overflow.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, NonFinite


@dataclass(frozen=True)
class Box:
    """Axis-aligned working box holding the evolution."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, float)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, float)))
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise InvalidParams(f"degenerate box lo={self.lo} hi={self.hi}")

    @property
    def dim(self):
        return self.lo.size

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, x, margin=0.0):
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lo - margin) and np.all(x <= self.hi + margin))

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)

    def on_boundary(self, x, rel=1e-9):
        tol = rel * (self.hi - self.lo)
        x = np.asarray(x, float)
        return bool(np.any(x <= self.lo + tol) or np.any(x >= self.hi - tol))

    def grid(self, resolution):
        """Cartesian grid with ``resolution`` points per axis, shape (R^n, n)."""
        axes = [np.linspace(self.lo[i], self.hi[i], resolution) for i in range(self.dim)]
        if self.dim == 1:
            return axes[0][:, None]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def boundary_grid(self, resolution):
        """Points on the box faces (for coercivity checks)."""
        pts = self.grid(resolution)
        tol = 1e-12 * (self.hi - self.lo)
        on_face = np.zeros(len(pts), bool)
        for i in range(self.dim):
            on_face |= np.abs(pts[:, i] - self.lo[i]) <= tol[i]
            on_face |= np.abs(pts[:, i] - self.hi[i]) <= tol[i]
        return pts[on_face]

    def sample(self, rng, count):
        return self.lo + (self.hi - self.lo) * rng.random((count, self.dim))


class EnergyModel:
    """Base class: subclasses implement the batched core methods.

    Batched signature convention: ``X`` has shape ``(m, n)``; ``t`` is a scalar
    or an array of shape ``(m,)``.  ``energy``/``time_derivative`` return
    ``(m,)``, ``gradient`` returns ``(m, n)``, ``hessian`` returns ``(m, n, n)``.
    """

    name = "model"
    dim = 1
    horizon = 1.0
    box: Box

    # ---- batched core (subclass responsibility except hessian) ----

    def energy(self, t, X):
        raise NotImplementedError

    def gradient(self, t, X):
        raise NotImplementedError

    def time_derivative(self, t, X):
        raise NotImplementedError

    def hessian(self, t, X):
        """Central finite differences of the gradient (analytic in built-ins)."""
        X = np.asarray(X, float)
        m, n = X.shape
        H = np.empty((m, n, n))
        h = 1e-6 * (1.0 + np.abs(X))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            step = h[:, j][:, None] * e[None, :]
            H[:, :, j] = (self.gradient(t, X + step) - self.gradient(t, X - step)) / (
                2.0 * h[:, j][:, None]
            )
        return 0.5 * (H + np.swapaxes(H, 1, 2))

    # ---- scalar wrappers ----

    def eval(self, t, x):
        return float(self.energy(t, np.asarray(x, float).reshape(1, -1))[0])

    def grad(self, t, x):
        return self.gradient(t, np.asarray(x, float).reshape(1, -1))[0]

    def dt(self, t, x):
        return float(self.time_derivative(t, np.asarray(x, float).reshape(1, -1))[0])

    def hess(self, t, x):
        return self.hessian(t, np.asarray(x, float).reshape(1, -1))[0]

    def describe(self):
        return {
            "kind": self.name,
            "dim": int(self.dim),
            "horizon": float(self.horizon),
            "box_lo": self.box.lo.tolist(),
            "box_hi": self.box.hi.tolist(),
        }


# ---------------------------------------------------------------------------
# public operations


def _check_point(model, t, x):
    if not (0.0 <= t <= model.horizon + 1e-12):
        raise InvalidParams(f"t={t} outside [0, {model.horizon}]")
    x = np.atleast_1d(np.asarray(x, float))
    if x.shape != (model.dim,):
        raise InvalidParams(f"point shape {x.shape} != ({model.dim},)")
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"non-finite point {x}")
    return x


def evaluate(model, t, x):
    """F(t, x); raises NonFinite if the evaluation overflows."""
    x = _check_point(model, t, x)
    v = model.eval(t, x)
    if not np.isfinite(v):
        raise NonFinite(f"F({t}, {x}) = {v}")
    return v


def gradient(model, t, x):
    """State gradient of F at (t, x)."""
    x = _check_point(model, t, x)
    g = model.grad(t, x)
    if not np.all(np.isfinite(g)):
        raise NonFinite(f"gradient at ({t}, {x}) not finite")
    return g


def time_derivative(model, t, x):
    """Partial derivative of F in t at (t, x)."""
    x = _check_point(model, t, x)
    v = model.dt(t, x)
    if not np.isfinite(v):
        raise NonFinite(f"dF/dt at ({t}, {x}) not finite")
    return v


# ---------------------------------------------------------------------------
# built-in models


class DoubleWell(EnergyModel):
    """F(t, u) = (u^2-1)^2/4 - (t-1) u on t in [0, 2].

    The tilt sweeps from favoring the left well to favoring the right one; the
    left branch of critical points folds at t = 1 + 2/(3 sqrt 3).
    """

    name = "double_well"
    dim = 1
    horizon = 2.0

    def __init__(self, box=None):
        self.box = box or Box(np.array([-2.5]), np.array([2.5]))

    def energy(self, t, X):
        u = X[..., 0]
        return 0.25 * (u * u - 1.0) ** 2 - (np.asarray(t) - 1.0) * u

    def gradient(self, t, X):
        u = X[..., 0]
        return (u * (u * u - 1.0) - (np.asarray(t) - 1.0))[..., None]

    def time_derivative(self, t, X):
        return -X[..., 0]

    def hessian(self, t, X):
        u = X[..., 0]
        return (3.0 * u * u - 1.0)[..., None, None]


class QuadraticLoad(EnergyModel):
    """F(t, x) = |x|^2/2 - <l(t), x> with affine load l(t) = l0 + t l1."""

    name = "quadratic"

    def __init__(self, load_const, load_slope, horizon=2.0, box=None):
        self.l0 = np.atleast_1d(np.asarray(load_const, float))
        self.l1 = np.atleast_1d(np.asarray(load_slope, float))
        if self.l0.shape != self.l1.shape:
            raise InvalidParams("load_const and load_slope dimensions differ")
        self.dim = self.l0.size
        self.horizon = float(horizon)
        if box is None:
            # boundary energy must clear the drift ceiling F0 + T sup|dF/dt|,
            # which needs radius > 2 (max load + T |l1|); pad past that
            reach = np.abs(self.l0) + np.abs(self.l1) * self.horizon
            pad = 1.0 + 2.0 * (reach + np.abs(self.l1) * self.horizon)
            box = Box(-pad, pad)
        self.box = box

    def load(self, t):
        t = np.asarray(t, float)
        return self.l0 + t[..., None] * self.l1 if t.ndim else self.l0 + t * self.l1

    def energy(self, t, X):
        L = self.load(np.asarray(t, float))
        return 0.5 * np.sum(X * X, axis=-1) - np.sum(L * X, axis=-1)

    def gradient(self, t, X):
        return X - self.load(np.asarray(t, float))

    def time_derivative(self, t, X):
        return -np.sum(self.l1 * X, axis=-1)

    def hessian(self, t, X):
        m = X.shape[0]
        return np.broadcast_to(np.eye(self.dim), (m, self.dim, self.dim)).copy()


class ElasticChain(EnergyModel):
    """Discrete chain of n nodes with clamped zero boundary.

    F(t, u) = sum_i (u_{i+1}-u_i)^2/(2h) + h W(u_i) - h l(t) u_i with
    W(u) = (u^2-1)^2/4, h = 1/(n+1), scalar affine load l(t).
    """

    name = "elastic_chain"

    def __init__(self, nodes, load_const=0.0, load_slope=0.5, horizon=2.0, box=None):
        if nodes < 1:
            raise InvalidParams("chain needs at least one free node")
        self.dim = int(nodes)
        n = self.dim
        self.h = 1.0 / (n + 1)
        self.a = float(load_const)
        self.b = float(load_slope)
        self.horizon = float(horizon)
        lap = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
        self._lap = lap / self.h
        self.box = box or Box(np.full(n, -2.0), np.full(n, 2.0))

    def load(self, t):
        return self.a + self.b * np.asarray(t, float)

    def energy(self, t, X):
        d = np.diff(X, axis=-1, prepend=0.0, append=0.0)
        coupling = 0.5 * np.sum(d * d, axis=-1) / self.h
        w = 0.25 * (X * X - 1.0) ** 2
        lt = self.load(t)
        return coupling + self.h * np.sum(w, axis=-1) - self.h * lt * np.sum(X, axis=-1)

    def gradient(self, t, X):
        lt = np.asarray(self.load(t), float)
        if lt.ndim:
            lt = lt[..., None]
        return X @ self._lap.T + self.h * (X * (X * X - 1.0) - lt)

    def time_derivative(self, t, X):
        return -self.h * self.b * np.sum(X, axis=-1)

    def hessian(self, t, X):
        m, n = X.shape
        H = np.broadcast_to(self._lap, (m, n, n)).copy()
        idx = np.arange(n)
        H[:, idx, idx] += self.h * (3.0 * X * X - 1.0)
        return H


class PolynomialEnergy(EnergyModel):
    """User energy assembled from monomial terms c * t^p * prod_i x_i^{q_i}."""

    name = "polynomial"

    def __init__(self, terms, dim, horizon, box):
        # terms: iterable of (coef, t_power, x_powers) with len(x_powers) == dim
        self.dim = int(dim)
        self.horizon = float(horizon)
        self.box = box
        parsed = []
        for c, pt, qs in terms:
            qs = tuple(int(q) for q in qs)
            if len(qs) != self.dim or pt < 0 or any(q < 0 for q in qs):
                raise InvalidParams(f"bad polynomial term ({c}, {pt}, {qs})")
            parsed.append((float(c), int(pt), qs))
        if not parsed:
            raise InvalidParams("polynomial model needs at least one term")
        self.terms = parsed

    def _tpow(self, t, p):
        t = np.asarray(t, float)
        return np.ones_like(t) if p == 0 else t**p

    def energy(self, t, X):
        out = np.zeros(X.shape[0])
        for c, pt, qs in self.terms:
            term = c * self._tpow(t, pt)
            for i, q in enumerate(qs):
                if q:
                    term = term * X[:, i] ** q
            out += term if np.ndim(term) else np.full(X.shape[0], term)
        return out

    def gradient(self, t, X):
        out = np.zeros_like(X)
        for c, pt, qs in self.terms:
            base = c * self._tpow(t, pt)
            for j, qj in enumerate(qs):
                if qj == 0:
                    continue
                term = base * qj * X[:, j] ** (qj - 1)
                for i, q in enumerate(qs):
                    if q and i != j:
                        term = term * X[:, i] ** q
                out[:, j] += term
        return out

    def time_derivative(self, t, X):
        out = np.zeros(X.shape[0])
        for c, pt, qs in self.terms:
            if pt == 0:
                continue
            term = c * pt * self._tpow(t, pt - 1)
            for i, q in enumerate(qs):
                if q:
                    term = term * X[:, i] ** q
            out += term if np.ndim(term) else np.full(X.shape[0], term)
        return out

    def hessian(self, t, X):
        m, n = X.shape
        H = np.zeros((m, n, n))
        for c, pt, qs in self.terms:
            base = c * self._tpow(t, pt)
            for j, k in itertools.product(range(n), range(n)):
                qj, qk = qs[j], qs[k]
                if j == k:
                    if qj < 2:
                        continue
                    term = base * qj * (qj - 1) * X[:, j] ** (qj - 2)
                    for i, q in enumerate(qs):
                        if q and i != j:
                            term = term * X[:, i] ** q
                else:
                    if qj == 0 or qk == 0:
                        continue
                    term = base * qj * qk * X[:, j] ** (qj - 1) * X[:, k] ** (qk - 1)
                    for i, q in enumerate(qs):
                        if q and i not in (j, k):
                            term = term * X[:, i] ** q
                H[:, j, k] += term
        return H


# ---------------------------------------------------------------------------


def from_config(table):
    """Build a model from a parsed config ``[model]`` table."""
    kind = table.get("kind")
    horizon = float(table.get("horizon", 2.0))
    box = None
    if "box_lo" in table or "box_hi" in table:
        box = Box(np.asarray(table["box_lo"], float), np.asarray(table["box_hi"], float))
    if kind == "double_well":
        model = DoubleWell(box=box)
        model.horizon = horizon
        return model
    if kind == "quadratic":
        return QuadraticLoad(
            table.get("load_const", [0.0]),
            table.get("load_slope", [1.0]),
            horizon=horizon,
            box=box,
        )
    if kind == "elastic_chain":
        return ElasticChain(
            int(table.get("nodes", 4)),
            load_const=float(table.get("load_const", 0.0)),
            load_slope=float(table.get("load_slope", 0.5)),
            horizon=horizon,
            box=box,
        )
    if kind == "polynomial":
        if box is None:
            raise InvalidParams("polynomial model requires explicit box bounds")
        terms = [(tm["c"], tm.get("t", 0), tm["x"]) for tm in table["terms"]]
        return PolynomialEnergy(terms, dim=box.dim, horizon=horizon, box=box)
    raise InvalidParams(f"unknown model kind {kind!r}")


def derive_box(model, u0, resolution=41, inflate=1.2):
    """Bound the sublevel set reached from ``u0`` and return a tighter box.

    Uses the a-priori growth bound: along any trajectory the energy never
    exceeds rho = (F(0,u0) + C2) e^{C1 T} - C2 with empirically fitted
    constants, so the sublevel {F(0,.) <= rho} scanned on a coarse grid bounds
    the evolution.  The result is inflated and intersected with the model box.
    """
    from .audit import fit_growth_constants

    u0 = np.atleast_1d(np.asarray(u0, float))
    c1, c2, _ = fit_growth_constants(model, samples=256, seed=0)
    f0 = model.eval(0.0, u0)
    rho = (f0 + c2) * np.exp(c1 * model.horizon) - c2
    pts = model.box.grid(resolution)
    inside = pts[model.energy(0.0, pts) <= rho]
    if len(inside) == 0:
        return model.box
    lo, hi = inside.min(axis=0), inside.max(axis=0)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    half = np.maximum(half * inflate, 1e-3 * (model.box.hi - model.box.lo))
    return Box(np.maximum(mid - half, model.box.lo), np.minimum(mid + half, model.box.hi))
