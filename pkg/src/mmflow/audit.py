"""Empirical audits of the standing assumptions on an energy model.

The solver relies on: consistent first derivatives (checked against central
finite differences), controlled time growth |dF/dt| <= C1 (F + C2) feeding a
Gronwall bound, isolated critical points, a Lipschitz time dependence of the
gradient, and coercivity keeping the sublevel sets inside the working box.
Audits sample; they are evidence, not proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AuditFailure, InvalidParams, NonFinite

TOL_FD = 1e-5  # relative tolerance for derivative cross-checks


@dataclass(frozen=True)
class AuditReport:
    f0_grad_max_rel_err: float
    f0_dt_max_rel_err: float
    f2_constants: tuple  # (C1, C2)
    f2_max_violation: float
    f3_min_separation: float
    f5_lipschitz: float
    coercivity_ok: bool
    f4_assumed: bool
    sample_count: int
    seed: int
    notes: tuple = field(default_factory=tuple)

    def as_dict(self):
        return {
            "f0_grad_max_rel_err": self.f0_grad_max_rel_err,
            "f0_dt_max_rel_err": self.f0_dt_max_rel_err,
            "f2_c1": self.f2_constants[0],
            "f2_c2": self.f2_constants[1],
            "f2_max_violation": self.f2_max_violation,
            "f3_min_separation": self.f3_min_separation,
            "f5_lipschitz": self.f5_lipschitz,
            "coercivity_ok": self.coercivity_ok,
            "f4_assumed": self.f4_assumed,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "notes": list(self.notes),
        }


def _sample_domain(model, rng, count):
    X = model.box.sample(rng, count)
    ts = model.horizon * rng.random(count)
    return ts, X


def check_derivatives(model, sample_count=100, seed=0, tol=TOL_FD):
    """Compare grad and dF/dt against central differences of the energy.

    Returns (max relative gradient error, max relative dt error); raises
    AuditFailure with the witness point on the first violation.
    """
    rng = np.random.default_rng(seed)
    ts, X = _sample_domain(model, rng, sample_count)
    worst_g, worst_t = 0.0, 0.0
    for t, x in zip(ts, X):
        g = model.grad(t, x)
        fd = np.empty_like(g)
        h = 1e-5 * (1.0 + np.linalg.norm(x))
        for i in range(model.dim):
            e = np.zeros(model.dim)
            e[i] = h
            fd[i] = (model.eval(t, x + e) - model.eval(t, x - e)) / (2.0 * h)
        err = np.linalg.norm(g - fd) / (1.0 + np.linalg.norm(g))
        worst_g = max(worst_g, err)
        if err > tol:
            raise AuditFailure("F0", (t, x.copy()), f"gradient vs FD rel err {err:.3e}")

        ht = min(1e-5 * (1.0 + abs(t)), 0.45 * model.horizon)
        ta, tb = max(0.0, t - ht), min(model.horizon, t + ht)
        fdt = (model.eval(tb, x) - model.eval(ta, x)) / (tb - ta)
        dt = model.dt(0.5 * (ta + tb), x)
        errt = abs(dt - fdt) / (1.0 + abs(dt))
        worst_t = max(worst_t, errt)
        if errt > tol:
            raise AuditFailure("F0", (t, x.copy()), f"dF/dt vs FD rel err {errt:.3e}")
    return worst_g, worst_t


def fit_growth_constants(model, samples=400, seed=0, inflate=1.05):
    """Fit feasible (C1, C2) with |dF/dt| <= C1 (F + C2) on the domain.

    C2 = 1 + |min sampled F| keeps the denominator above 1; C1 is the maximal
    sampled ratio inflated by a safety factor (a feasible pair is all the
    Gronwall bound needs).  Returns (C1, C2, max relative violation on an
    independent validation grid).
    """
    rng = np.random.default_rng(seed)
    grid = model.box.grid(9 if model.dim > 2 else 41)
    tgrid = np.linspace(0.0, model.horizon, 21)
    Xr = model.box.sample(rng, samples)
    tr = model.horizon * rng.random(samples)

    def ratios(ts, X):
        F = model.energy(ts, X)
        D = model.time_derivative(ts, X)
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(D))):
            raise NonFinite("energy or dF/dt overflowed during growth fit")
        return F, D

    Fs, Ds = [], []
    for t in tgrid:
        F, D = ratios(t, grid)
        Fs.append(F)
        Ds.append(D)
    F, D = ratios(tr, Xr)
    Fs.append(F)
    Ds.append(D)
    Fall = np.concatenate(Fs)
    Dall = np.concatenate(Ds)
    c2 = 1.0 + abs(float(Fall.min()))
    c1 = inflate * float(np.max(np.abs(Dall) / (Fall + c2)))
    c1 = max(c1, 1e-12)

    # independent validation on a shifted grid
    vgrid = model.box.grid(13 if model.dim > 2 else 53)
    viol = 0.0
    for t in np.linspace(0.0, model.horizon, 17) + 0.013 * model.horizon / 17:
        t = min(t, model.horizon)
        F, D = ratios(t, vgrid)
        bound = c1 * (F + c2)
        viol = max(viol, float(np.max((np.abs(D) - bound) / bound)))
    return c1, c2, max(0.0, viol)


def gronwall_bound(f0, c1, c2, t):
    """A-priori energy ceiling (F(0,u0) + C2) e^{C1 t} - C2."""
    return (f0 + c2) * np.exp(c1 * np.asarray(t, float)) - c2


def lipschitz_in_time(model, sample_count=60, seed=1):
    """Max finite-difference Lipschitz estimate of t -> grad F(t, u)."""
    rng = np.random.default_rng(seed)
    X = model.box.sample(rng, sample_count)
    tg = np.linspace(0.0, model.horizon, 33)
    worst = 0.0
    for x in X:
        gs = np.stack([model.grad(t, x) for t in tg])
        slopes = np.linalg.norm(np.diff(gs, axis=0), axis=1) / np.diff(tg)
        worst = max(worst, float(slopes.max()))
    return worst


def check_coercivity(model, rho, resolution=17):
    """True when F exceeds rho on the whole box boundary for all t samples."""
    bd = model.box.boundary_grid(resolution)
    for t in np.linspace(0.0, model.horizon, 9):
        if float(model.energy(t, bd).min()) <= rho:
            return False
    return True


def audit_assumptions(model, sample_count=100, seed=0, u0=None, tol=TOL_FD):
    """Run every audit and assemble the report.

    u0 (optional) anchors the Gronwall ceiling used by the coercivity check;
    the box center is used otherwise.
    """
    if sample_count < 1:
        raise InvalidParams("sample_count must be >= 1")
    g_err, t_err = check_derivatives(model, sample_count, seed, tol)
    c1, c2, viol = fit_growth_constants(model, samples=4 * sample_count, seed=seed)

    from .critical import critical_points  # local import keeps module graph acyclic

    sep = np.inf
    notes = []
    for t in np.linspace(0.0, model.horizon, 5):
        atlas = critical_points(model, t)
        if len(atlas.points) >= 2:
            sep = min(sep, atlas.min_separation)
    if not np.isfinite(sep):
        notes.append("fewer than two critical points at sampled times; separation is +inf")

    lip = lipschitz_in_time(model, max(10, sample_count // 2), seed + 1)

    anchor = np.asarray(u0, float) if u0 is not None else 0.5 * (model.box.lo + model.box.hi)
    f0 = model.eval(0.0, anchor)
    rho_exp = float(gronwall_bound(f0, c1, c2, model.horizon))
    # on a box the incremental estimate telescopes to a uniform ceiling
    # F <= F(0,u0) + T sup |dF/dt| with no exponential; use the tighter one
    grid = model.box.grid(9 if model.dim > 2 else 41)
    sup_dt = max(
        float(np.abs(model.time_derivative(t, grid)).max())
        for t in np.linspace(0.0, model.horizon, 21)
    )
    rho = min(rho_exp, f0 + model.horizon * sup_dt)
    coercive = check_coercivity(model, rho)

    return AuditReport(
        f0_grad_max_rel_err=float(g_err),
        f0_dt_max_rel_err=float(t_err),
        f2_constants=(float(c1), float(c2)),
        f2_max_violation=float(viol),
        f3_min_separation=float(sep),
        f5_lipschitz=float(lip),
        coercivity_ok=bool(coercive),
        f4_assumed=True,
        sample_count=int(sample_count),
        seed=int(seed),
        notes=tuple(notes),
    )
