"""Incremental minimization scheme and its discrete energy diagnostics.

One run fixes a time step tau and a rate epsilon, then marches
u^k in argmin F(t_k, .) + (epsilon / 2 tau) |. - u^{k-1}|^2 for k = 1..m.
Everything downstream (jump extraction, cost checks, balances) consumes the
arrays recorded here, so the run stores per-step certificates, not just
states.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import BoxEscape, EstimateViolation, InvalidParams
from .quadrature import gauss_panels
from .solver import global_argmin

STEP_SLACK_FLOOR = -1e-9  # hard lower bound for the per-step upper estimate


@dataclass(frozen=True)
class SchemeParams:
    """Parameters of one discrete run."""

    epsilon: float
    tau: float
    u0: np.ndarray
    horizon: float = 2.0
    resolution: int = 121
    newton_tol: float = 1e-9
    max_iter: int = 60
    seed: int = 0
    n_random_starts: int = 3

    def __post_init__(self):
        object.__setattr__(self, "u0", np.atleast_1d(np.asarray(self.u0, float)))
        if not (self.epsilon > 0 and self.tau > 0):
            raise InvalidParams("epsilon and tau must be positive")
        if self.tau > self.horizon:
            raise InvalidParams(f"tau={self.tau} exceeds horizon={self.horizon}")
        if self.resolution < 3:
            raise InvalidParams("resolution must be at least 3")

    @property
    def weight(self):
        return self.epsilon / self.tau

    @property
    def n_steps(self):
        return int(np.floor(self.horizon / self.tau + 1e-12))

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "tau": self.tau,
            "u0": [float(v) for v in self.u0],
            "horizon": self.horizon,
            "resolution": self.resolution,
            "newton_tol": self.newton_tol,
            "max_iter": self.max_iter,
            "seed": self.seed,
        }


@dataclass
class Trajectory:
    """Full record of one run: nodes, states and per-step certificates."""

    params: SchemeParams
    times: np.ndarray  # (m+1,)
    states: np.ndarray  # (m+1, n)
    energies: np.ndarray  # (m+1,)  F(t_k, u_k)
    grad_norms: np.ndarray  # (m+1,)  |grad F(t_k, u_k)|
    residuals: np.ndarray  # (m,)    Euler-Lagrange residual per step
    slacks: np.ndarray  # (m,)    F(t_k, u_{k-1}) - G_k(u_k)
    tie_break_count: int
    wall_time: float

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def n_steps(self):
        return len(self.times) - 1

    def displacements(self):
        return np.linalg.norm(np.diff(self.states, axis=0), axis=1)

    def dissipation_terms(self):
        """Per-step penalty (epsilon / 2 tau) |u_k - u_{k-1}|^2."""
        d = self.displacements()
        return 0.5 * self.params.weight * d * d

    def to_frame(self):
        cols = {"k": np.arange(len(self.times)), "t": self.times}
        for j in range(self.dim):
            cols[f"u_{j}"] = self.states[:, j]
        cols["F"] = self.energies
        cols["grad_norm"] = self.grad_norms
        return pd.DataFrame(cols)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    def metadata(self):
        return {
            "params": self.params.as_dict(),
            "n_steps": self.n_steps,
            "dim": self.dim,
            "tie_break_count": self.tie_break_count,
            "min_step_slack": float(self.slacks.min()) if len(self.slacks) else 0.0,
            "max_residual": float(self.residuals.max()) if len(self.residuals) else 0.0,
            "wall_time": self.wall_time,
        }


def step(model, t, u_prev, epsilon, tau, *, resolution=121, newton_tol=1e-9,
         max_iter=60, grid=None, rng=None, extra_starts=()):
    """One incremental step; returns the accepted ProxSolution."""
    return global_argmin(
        model,
        float(t),
        u_prev,
        epsilon / tau,
        resolution=resolution,
        newton_tol=newton_tol,
        max_iter=max_iter,
        grid=grid,
        rng=rng,
        extra_starts=extra_starts,
    )


def run(model, params):
    """March the scheme over the whole horizon and record certificates.

    Raises BoxEscape (with the offending step) if an accepted minimizer lands
    on the working-box boundary, and EstimateViolation if any per-step slack
    drops below the hard floor.
    """
    m = params.n_steps
    n = model.dim
    if len(params.u0) != n:
        raise InvalidParams(f"u0 has dim {len(params.u0)}, model has dim {n}")
    if not model.box.contains(params.u0):
        raise InvalidParams(f"u0={params.u0} outside working box")

    w = params.weight
    tau = params.tau
    rng = np.random.default_rng(params.seed)
    grid = model.box.grid(params.resolution) if n <= 3 else None

    times = tau * np.arange(m + 1)
    states = np.empty((m + 1, n))
    energies = np.empty(m + 1)
    grad_norms = np.empty(m + 1)
    residuals = np.empty(m)
    slacks = np.empty(m)

    states[0] = params.u0
    energies[0] = model.eval(0.0, params.u0)
    grad_norms[0] = float(np.linalg.norm(model.grad(0.0, params.u0)))

    tie_breaks = 0
    u = params.u0
    t0 = time.perf_counter()
    for k in range(1, m + 1):
        t = float(times[k])
        try:
            sol = global_argmin(
                model, t, u, w,
                resolution=params.resolution,
                newton_tol=params.newton_tol,
                max_iter=params.max_iter,
                grid=grid,
                rng=rng,
                extra_starts=(u,),
                n_random=params.n_random_starts,
            )
        except BoxEscape as e:
            raise BoxEscape(f"step k={k}, t={t:.6g}: {e}") from None
        u = sol.x
        states[k] = u
        energies[k] = sol.objective - 0.5 * w * float(
            np.dot(u - states[k - 1], u - states[k - 1])
        )
        grad_norms[k] = float(np.linalg.norm(sol.grad))
        residuals[k - 1] = sol.residual
        slacks[k - 1] = sol.improvement
        if sol.tie_break:
            tie_breaks += 1
        if sol.improvement < STEP_SLACK_FLOOR:
            raise EstimateViolation(
                f"step k={k}: slack {sol.improvement:.3e} below {STEP_SLACK_FLOOR}"
            )
    wall = time.perf_counter() - t0

    return Trajectory(
        params=params,
        times=times,
        states=states,
        energies=energies,
        grad_norms=grad_norms,
        residuals=residuals,
        slacks=slacks,
        tie_break_count=tie_breaks,
        wall_time=wall,
    )


class Interpolants:
    """Piecewise-constant and affine interpolants of a run.

    The piecewise-constant interpolant is left-continuous: it takes the value
    u_k on (t_{k-1}, t_k], and u_0 at t = 0.  The affine interpolant joins the
    nodes linearly.
    """

    def __init__(self, trajectory):
        self.times = trajectory.times
        self.states = trajectory.states
        self.tau = trajectory.params.tau

    def node_index(self, t):
        """Smallest k with t <= t_k (clipped to the node range)."""
        k = np.searchsorted(self.times, np.asarray(t, float), side="left")
        return np.clip(k, 0, len(self.times) - 1)

    def piecewise(self, t):
        k = self.node_index(t)
        return self.states[k]

    def affine(self, t):
        t = np.asarray(t, float)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0,
                    len(self.times) - 2)
        theta = (t - self.times[k]) / self.tau
        theta = np.clip(theta, 0.0, 1.0)
        if t.ndim:
            theta = theta[:, None]
        return self.states[k] + theta * (self.states[k + 1] - self.states[k])


def interpolants(trajectory):
    return Interpolants(trajectory)


@dataclass
class EstimateReport:
    """Recomputed energy estimates of a finished run."""

    step_slacks: np.ndarray
    min_step_slack: float
    cumulative_residuals: np.ndarray
    min_cumulative_residual: float
    dissipation_total: float
    ok: bool

    def as_dict(self):
        return {
            "min_step_slack": self.min_step_slack,
            "min_cumulative_residual": self.min_cumulative_residual,
            "dissipation_total": self.dissipation_total,
            "ok": self.ok,
        }


def verify_energy_estimates(model, trajectory, *, slack_floor=STEP_SLACK_FLOOR):
    """Recompute both energy estimates independently of the run loop.

    Per step:  F(t_k, u_k) + (eps/2 tau)|du_k|^2 <= F(t_k, u_{k-1}).
    Summed, with the incumbent energy moved through the time derivative:
    F(t_k, u_k) + sum_j (eps/2 tau)|du_j|^2
        <= F(0, u_0) + sum_j int_{t_{j-1}}^{t_j} dF/dt(s, u_{j-1}) ds.
    Raises EstimateViolation if a recomputed per-step slack breaks the floor.
    """
    times = trajectory.times
    states = trajectory.states
    m = trajectory.n_steps
    w = trajectory.params.weight

    incumbent = model.energy(times[1:], states[:-1])
    penalties = trajectory.dissipation_terms()
    slacks = incumbent - (trajectory.energies[1:] + penalties)
    min_slack = float(slacks.min()) if m else 0.0
    if min_slack < slack_floor:
        k = int(np.argmin(slacks)) + 1
        raise EstimateViolation(
            f"recomputed slack {min_slack:.3e} at step {k} below {slack_floor}"
        )

    def dt_rows(T):
        # T has shape (m, q); pair row j with state u_{j-1}
        q = T.shape[1]
        Ts = T.reshape(-1)
        Xs = np.repeat(states[:-1], q, axis=0)
        return model.time_derivative(Ts, Xs).reshape(T.shape)

    drift = gauss_panels(dt_rows, times[:-1], times[1:])
    lhs = trajectory.energies[1:] + np.cumsum(penalties)
    rhs = trajectory.energies[0] + np.cumsum(drift)
    cum = rhs - lhs
    min_cum = float(cum.min()) if m else 0.0

    return EstimateReport(
        step_slacks=slacks,
        min_step_slack=min_slack,
        cumulative_residuals=cum,
        min_cumulative_residual=min_cum,
        dissipation_total=float(penalties.sum()),
        ok=min_cum >= -1e-6 * (1.0 + abs(float(trajectory.energies[0]))),
    )


def interpolant_mismatch(trajectory):
    """Distances between the two interpolants, in closed form.

    sup-norm: max_k |u_k - u_{k-1}|.
    L2-norm:  sqrt(sum_k |u_k - u_{k-1}|^2 tau / 3).
    """
    d = trajectory.displacements()
    if len(d) == 0:
        return {"sup": 0.0, "l2": 0.0}
    return {
        "sup": float(d.max()),
        "l2": float(np.sqrt((d * d).sum() * trajectory.params.tau / 3.0)),
    }
