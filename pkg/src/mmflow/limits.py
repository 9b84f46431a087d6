"""Limit extraction from (epsilon, tau) sweeps and theorem-level validation.

The finest run of a sweep stands in for the limit evolution.  Jumps are the
steps whose displacement dwarfs the run's median displacement and release a
real amount of energy; sided states come from short windows at the cluster
edges and are then refined onto the critical branch.  Coarser runs vouch for
convergence: away from every run's jump window they must agree with the
finest run.

Validation mirrors the structure of the limit theorems: a defect measure of
positive atoms, a two-time energy balance with jump costs, regime-appropriate
stability off the jump set, and near-monotonicity of the corrected energy
f(t) = F(t, u(t)) - int_0^t dF/dr(r, u(r)) dr.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .critical import classify_point, residual_stability
from .errors import InconsistentSweep, InvalidParams, NonpositiveAtom
from .quadrature import gauss_panels
from .solver import default_scan_resolution, newton_root

JUMP_FACTOR = 20.0
WINDOW_STEPS = 10
CLUSTER_GAP = 10  # flagged steps closer than this merge into one transition


@dataclass
class JumpRecord:
    """One detected jump with raw and refined sided data."""

    t_jump: float
    u_minus: np.ndarray
    u_plus: np.ndarray
    energy_drop: float  # F(t_jump, u_minus) - F(t_jump, u_plus)
    mu_atom: float  # equals energy_drop by construction
    t_raw: float
    u_minus_raw: np.ndarray
    u_plus_raw: np.ndarray
    refined_by: str  # fold_bisection | stability_bisection | critical_polish | raw
    k_start: int
    k_end: int
    window: tuple  # (t_lo, t_hi) exclusion band of the source run

    def as_dict(self):
        return {
            "t_jump": self.t_jump,
            "u_minus": [float(v) for v in self.u_minus],
            "u_plus": [float(v) for v in self.u_plus],
            "energy_drop": self.energy_drop,
            "mu_atom": self.mu_atom,
            "t_raw": self.t_raw,
            "u_minus_raw": [float(v) for v in self.u_minus_raw],
            "u_plus_raw": [float(v) for v in self.u_plus_raw],
            "refined_by": self.refined_by,
            "cluster": [self.k_start, self.k_end],
            "window": [self.window[0], self.window[1]],
        }

    @staticmethod
    def from_dict(d):
        return JumpRecord(
            t_jump=float(d["t_jump"]),
            u_minus=np.asarray(d["u_minus"], float),
            u_plus=np.asarray(d["u_plus"], float),
            energy_drop=float(d["energy_drop"]),
            mu_atom=float(d["mu_atom"]),
            t_raw=float(d["t_raw"]),
            u_minus_raw=np.asarray(d["u_minus_raw"], float),
            u_plus_raw=np.asarray(d["u_plus_raw"], float),
            refined_by=d["refined_by"],
            k_start=int(d["cluster"][0]),
            k_end=int(d["cluster"][1]),
            window=(float(d["window"][0]), float(d["window"][1])),
        )


@dataclass
class RegulatedCurve:
    """Sampled limit evolution with jump records.

    Samples live at continuity times only; inside an exclusion band the curve
    is represented by u_minus up to t_jump and u_plus from t_jump on.
    """

    times: np.ndarray  # (S,)
    states: np.ndarray  # (S, n)
    energies: np.ndarray  # (S,) F at the samples
    jumps: list
    regime: str
    lam: float | None
    epsilon: float
    tau: float
    drift_bound: float
    bands: list = field(default_factory=list)  # merged exclusion bands
    _drift: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def dim(self):
        return self.states.shape[1]

    def jump_times(self):
        return np.array([j.t_jump for j in self.jumps])

    def _jump_at(self, t, tol=1e-9):
        for j in self.jumps:
            if abs(t - j.t_jump) <= tol:
                return j
        return None

    def _band_at(self, t):
        # merged bands can extend past a record's own window (refined jump
        # times precede every raw window when the runs lag the limit)
        bands = (self.bands if len(self.bands) == len(self.jumps)
                 else [j.window for j in self.jumps])
        for j, (lo, hi) in zip(self.jumps, bands):
            if lo <= t <= hi:
                return j
        return None

    def value(self, t):
        """Curve state at time t (the sided convention is u_plus at t_jump)."""
        j = self._band_at(t)
        if j is not None:
            return j.u_minus if t < j.t_jump else j.u_plus
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0,
                    len(self.times) - 1)
        return self.states[i]

    def left_value(self, t):
        j = self._band_at(t)
        if j is not None and t <= j.t_jump:
            return j.u_minus
        return self.value(t)

    def right_value(self, t):
        j = self._band_at(t)
        if j is not None and t >= j.t_jump:
            return j.u_plus
        return self.value(t)

    def to_frame(self, model, max_rows=4001):
        f = corrected_energy(self, model)
        idx = _sample_indices(len(self.times), max_rows or len(self.times))
        cols = {"t": self.times[idx]}
        for i in range(self.dim):
            cols[f"u_{i}"] = self.states[idx, i]
        cols["F"] = self.energies[idx]
        cols["f"] = f[idx]
        return pd.DataFrame(cols)

    def to_csv(self, path, model, max_rows=4001):
        self.to_frame(model, max_rows=max_rows).to_csv(path, index=False)

    def jumps_json(self, path=None, cost_values=None):
        records = []
        for i, j in enumerate(self.jumps):
            d = j.as_dict()
            if cost_values is not None:
                d["cost"] = float(cost_values[i])
                d["atom_minus_cost"] = float(j.mu_atom - cost_values[i])
            records.append(d)
        if path is None:
            return records
        with open(path, "w") as fh:
            json.dump(records, fh, indent=1)
        return records


# ------------------------------------------------------------- jump detection


def _detect_clusters(traj, jump_factor, energy_tol, cluster_gap=CLUSTER_GAP):
    d = traj.displacements()
    if len(d) == 0:
        return []
    med = float(np.median(d))
    floor = 1e-12 * (1.0 + float(np.abs(traj.states).max()))
    thresh = jump_factor * max(med, floor)
    flagged = np.nonzero(d > thresh)[0] + 1  # step indices k with big moves
    if len(flagged) == 0:
        return []
    clusters = []
    start = prev = int(flagged[0])
    for k in flagged[1:]:
        k = int(k)
        if k - prev <= cluster_gap:
            prev = k
        else:
            clusters.append((start, prev))
            start = prev = k
    clusters.append((start, prev))
    # keep transitions that release real energy, not drift artifacts
    kept = []
    for a, b in clusters:
        drop = float(traj.energies[a - 1] - traj.energies[b])
        if drop > energy_tol:
            kept.append((a, b, drop))
    return kept


def _window_mean(traj, lo_k, hi_k):
    lo_k = max(lo_k, 0)
    hi_k = min(hi_k, traj.n_steps)
    if hi_k < lo_k:
        lo_k = hi_k
    return traj.states[lo_k:hi_k + 1].mean(axis=0)


def _raw_record(traj, a, b, window_steps):
    """Sided window averages anchored at the cluster edges."""
    w = window_steps
    u_minus = _window_mean(traj, a - 1 - w, a - 1 - w // 2)
    u_plus = _window_mean(traj, b + w // 2, b + w)
    t_raw = 0.5 * (traj.times[a - 1] + traj.times[b])
    t_lo = traj.times[max(a - 1 - w, 0)]
    t_hi = traj.times[min(b + w, traj.n_steps)]
    return t_raw, u_minus, u_plus, (float(t_lo), float(t_hi))


# ------------------------------------------------------------ jump refinement


def _branch_root(model, t, anchor, radius, tol=1e-8):
    """Critical point near the anchor, or None if the branch is gone."""
    x, rn, _, ok = newton_root(model, t, anchor, tol, 90, box=model.box)
    if ok and float(np.linalg.norm(x - np.asarray(anchor, float))) <= radius:
        return x
    return None


def _bisect_loss(model, exists, t_ok, t_bad, tol_t):
    """Largest time where `exists` still holds, found by bisection."""
    payload_ok = exists(t_ok)
    while t_bad - t_ok > tol_t:
        mid = 0.5 * (t_ok + t_bad)
        p = exists(mid)
        if p is not None:
            t_ok, payload_ok = mid, p
        else:
            t_bad = mid
    return t_ok, payload_ok


def _refine_jump(model, traj, record, regime, lam, *, refine_radius=None,
                 tol_t=1e-6):
    """Move the raw jump data onto the branch-loss time.

    BV regime: the jump happens where the critical branch carrying u_minus
    ceases to exist (a fold), so bisect branch existence in time.  Finite
    rate: the branch usually persists past the jump; what dies is its
    lam-stability, so bisect on the Moreau-Yosida gap of the tracked root.
    Falls back to a plain critical polish at the raw time, then to the raw
    window data.
    """
    t_raw, u_minus_raw, u_plus_raw, window, (a, b) = record
    diam = model.box.diameter
    radius = refine_radius if refine_radius is not None else 0.05 * diam
    span = max(traj.times[b] - traj.times[a - 1], traj.params.tau)
    guard = 3.0 * span + 20.0 * WINDOW_STEPS * traj.params.tau
    grid = model.box.grid(default_scan_resolution(model.dim)) \
        if model.dim <= 3 else None

    if regime == "bv_infinity":
        def exists(t):
            return _branch_root(model, t, u_minus_raw, radius)
    else:
        def exists(t):
            x = _branch_root(model, t, u_minus_raw, radius)
            if x is None:
                return None
            gap = residual_stability(model, t, x, lam, grid=grid)
            return x if gap <= 1e-9 else None

    t_ok = None
    probe = t_raw - span
    while probe >= max(t_raw - guard, 0.0):
        if exists(probe) is not None:
            t_ok = probe
            break
        probe -= span
    refined_by = "raw"
    t_jump = t_raw
    u_minus = u_minus_raw
    u_plus = u_plus_raw

    if t_ok is not None:
        t_bad = t_raw
        if exists(t_bad) is not None:
            # loss happens inside the cluster; probe forward for a bad time
            t_bad = traj.times[min(b, traj.n_steps)]
            while exists(t_bad) is not None and t_bad < traj.times[-1]:
                t_bad = min(t_bad + span, traj.times[-1])
                if t_bad >= traj.times[-1]:
                    break
        if exists(t_bad) is None:
            t_jump, u_minus = _bisect_loss(model, exists, t_ok, t_bad, tol_t)
            refined_by = ("fold_bisection" if regime == "bv_infinity"
                          else "stability_bisection")

    if refined_by == "raw":
        x = _branch_root(model, t_jump, u_minus_raw, radius)
        if x is not None:
            u_minus = x
            refined_by = "critical_polish"

    x_plus = _branch_root(model, t_jump, u_plus_raw, radius)
    if x_plus is not None:
        u_plus = x_plus

    u_minus = np.asarray(u_minus, float)
    u_plus = np.asarray(u_plus, float)
    drop = float(model.eval(t_jump, u_minus) - model.eval(t_jump, u_plus))
    return JumpRecord(
        t_jump=float(t_jump), u_minus=u_minus, u_plus=u_plus,
        energy_drop=drop, mu_atom=drop,
        t_raw=float(t_raw), u_minus_raw=np.asarray(u_minus_raw, float),
        u_plus_raw=np.asarray(u_plus_raw, float),
        refined_by=refined_by, k_start=a, k_end=b, window=window,
    )


def detect_jumps(model, traj, regime, lam=None, *, jump_factor=JUMP_FACTOR,
                 energy_tol=None, window_steps=WINDOW_STEPS, refine=True,
                 refine_radius=None):
    """Jump records of one trajectory (detection plus optional refinement)."""
    if energy_tol is None:
        energy_tol = 1e-3 * (1.0 + abs(float(traj.energies[0])))
    records = []
    for a, b, _drop in _detect_clusters(traj, jump_factor, energy_tol):
        t_raw, um, up, window = _raw_record(traj, a, b, window_steps)
        raw = (t_raw, um, up, window, (a, b))
        if refine:
            records.append(_refine_jump(model, traj, raw, regime, lam,
                                        refine_radius=refine_radius))
        else:
            drop = float(model.eval(t_raw, um) - model.eval(t_raw, up))
            records.append(JumpRecord(
                t_jump=float(t_raw), u_minus=um, u_plus=up, energy_drop=drop,
                mu_atom=drop, t_raw=float(t_raw), u_minus_raw=um,
                u_plus_raw=up, refined_by="raw", k_start=a, k_end=b,
                window=window,
            ))
    return records


# -------------------------------------------------------------- limit curves


def _sample_indices(n_nodes, max_samples):
    if n_nodes <= max_samples:
        return np.arange(n_nodes)
    stride = int(np.ceil(n_nodes / max_samples))
    idx = np.arange(0, n_nodes, stride)
    if idx[-1] != n_nodes - 1:
        idx = np.append(idx, n_nodes - 1)
    return idx


def _ratio_consistent(trajs, regime):
    ratios = np.array([t.params.weight for t in trajs])
    if regime == "bv_infinity":
        return bool(np.all(np.diff(ratios) > 0))
    mean = ratios.mean()
    return bool(np.all(np.abs(ratios - mean) <= 0.01 * abs(mean) + 1e-15))


def extract_limit(model, trajectories, regime, *, lam=None,
                  jump_factor=JUMP_FACTOR, energy_tol=None,
                  window_steps=WINDOW_STEPS, consistency_tol=None,
                  max_samples=None, refine=True, refine_radius=None,
                  jump_time_tol=0.05):
    """Limit curve from the finest run, certified by the coarser runs.

    Trajectories must be ordered by strictly decreasing epsilon and their
    rate ratios must match the declared regime.  Every run is scanned for
    jumps; counts must agree, matched jump times must be close, and states
    must agree at shared continuity times, else InconsistentSweep.
    """
    if len(trajectories) < 2:
        raise InvalidParams("need at least two runs to evidence a limit")
    eps = [t.params.epsilon for t in trajectories]
    if not all(a > b for a, b in zip(eps, eps[1:])):
        raise InvalidParams("sweep must be ordered by strictly decreasing epsilon")
    if regime == "finite_lambda" and lam is None:
        lam = float(np.mean([t.params.weight for t in trajectories]))
    if not _ratio_consistent(trajectories, regime):
        raise InconsistentSweep(
            f"epsilon/tau ratios {[t.params.weight for t in trajectories]} do "
            f"not match declared regime {regime!r}"
        )

    per_run = [
        detect_jumps(model, tr, regime, lam, jump_factor=jump_factor,
                     energy_tol=energy_tol, window_steps=window_steps,
                     refine=(tr is trajectories[-1]) and refine,
                     refine_radius=refine_radius)
        for tr in trajectories
    ]
    counts = [len(r) for r in per_run]
    if len(set(counts)) != 1:
        raise InconsistentSweep(f"jump counts differ across runs: {counts}")

    finest = trajectories[-1]
    jumps = per_run[-1]

    # combined exclusion bands: for each matched jump take the hull of all
    # runs' windows so inter-run jump-time spread never pollutes comparisons
    bands = []
    for i, j in enumerate(jumps):
        if any(abs(r[i].t_raw - j.t_raw) > jump_time_tol for r in per_run[:-1]):
            raise InconsistentSweep(
                f"jump {i} time drifts across runs: "
                f"{[float(r[i].t_raw) for r in per_run]}"
            )
        lo = min(r[i].window[0] for r in per_run)
        hi = max(r[i].window[1] for r in per_run)
        # finite-eps runs lag the limit, so a refined jump time can precede
        # every raw window; the band must still cover it or stale pre-branch
        # samples would masquerade as limit values after the jump
        bands.append((min(lo, j.t_jump), max(hi, j.t_jump)))

    idx = _sample_indices(len(finest.times), max_samples or len(finest.times))
    times = finest.times[idx]
    keep = np.ones(len(times), dtype=bool)
    for lo, hi in bands:
        keep &= ~((times >= lo) & (times <= hi))
    idx = idx[keep]
    times = finest.times[idx]
    states = finest.states[idx]
    energies = finest.energies[idx]

    if consistency_tol is None:
        consistency_tol = 0.03 * model.box.diameter
    from .scheme import Interpolants
    for tr in trajectories[:-1]:
        interp = Interpolants(tr)
        ok = times <= tr.times[-1] + 1e-12
        vals = interp.piecewise(np.minimum(times[ok], tr.times[-1]))
        diff = np.linalg.norm(vals - states[ok], axis=1)
        worst = float(diff.max()) if len(diff) else 0.0
        if worst > consistency_tol:
            at = float(times[ok][int(np.argmax(diff))])
            raise InconsistentSweep(
                f"run eps={tr.params.epsilon:g} deviates from finest by "
                f"{worst:.3g} at t={at:.6g} (tol {consistency_tol:.3g})"
            )

    if len(times) >= 2:
        seg = np.linalg.norm(np.diff(states, axis=0), axis=1)
        dt = np.diff(times)
        inside_gap = np.zeros(len(dt), dtype=bool)
        for lo, hi in bands:
            inside_gap |= (times[:-1] < lo) & (times[1:] > hi)
        rates = seg[~inside_gap] / np.maximum(dt[~inside_gap], 1e-15)
        drift_bound = float(rates.max()) if len(rates) else 0.0
    else:
        drift_bound = 0.0

    return RegulatedCurve(
        times=times, states=states, energies=energies, jumps=jumps,
        regime=regime, lam=lam, epsilon=finest.params.epsilon,
        tau=finest.params.tau, drift_bound=drift_bound, bands=bands,
    )


# ----------------------------------------------------------------- validation


def defect_measure(curve, model):
    """Atoms (t_jump, mass) of the dissipation defect; all must be positive."""
    atoms = []
    for j in curve.jumps:
        mass = float(model.eval(j.t_jump, j.u_minus) - model.eval(j.t_jump, j.u_plus))
        if mass <= 0:
            raise NonpositiveAtom(
                f"jump at t={j.t_jump:.6g} carries atom {mass:.3e} <= 0; "
                f"likely a spurious detection"
            )
        atoms.append((j.t_jump, mass))
    return atoms


def _augmented_pieces(curve):
    """Sample intervals plus jump-gap pieces with the sided states.

    Returns (starts, ends, lo, hi) where the curve is treated as affine from
    lo to hi on each [start, end) piece; an interval straddling a jump is
    split at t_jump, bridging the last kept sample to u_minus and u_plus to
    the next kept sample, the limit-curve representatives of the band.
    """
    starts = curve.times[:-1].copy()
    ends = curve.times[1:].copy()
    lo = curve.states[:-1].copy()
    hi = curve.states[1:].copy()
    for j in curve.jumps:
        i = int(np.searchsorted(starts, j.t_jump, side="right")) - 1
        if i < 0 or j.t_jump > ends[i]:
            continue
        starts = np.insert(starts, i + 1, j.t_jump)
        ends = np.insert(ends, i, j.t_jump)
        right = hi[i].copy()
        lo = np.insert(lo, i + 1, j.u_plus, axis=0)
        hi = np.insert(hi, i + 1, right, axis=0)
        hi[i] = j.u_minus
    return starts, ends, lo, hi


def _cumulative_drift(curve, model):
    """Cumulative int_0^t dF/dr(r, u(r)) dr at the sample times (cached).

    Each piece integrates the average of the two endpoint-state integrands
    (trapezoid in the state), which cancels the O(du) staleness a frozen
    state would leave behind.
    """
    if curve._drift is not None:
        return curve._drift
    if len(curve.times) < 2:
        return np.zeros(len(curve.times))
    starts, ends, lo, hi = _augmented_pieces(curve)
    vals = np.concatenate([lo, hi], axis=0)

    def rows(T):
        q = T.shape[1]
        Ts = T.reshape(-1)
        Xs = np.repeat(vals, q, axis=0)
        return model.time_derivative(Ts, Xs).reshape(T.shape)

    both = gauss_panels(rows, np.concatenate([starts, starts]),
                        np.concatenate([ends, ends]))
    piece = 0.5 * (both[: len(starts)] + both[len(starts):])
    cum_ends = np.cumsum(piece)
    # map back to sample times: t_{i+1} coincides with the end of a piece
    out = np.zeros(len(curve.times))
    pos = np.searchsorted(ends, curve.times[1:] - 1e-15)
    out[1:] = cum_ends[np.minimum(pos, len(ends) - 1)]
    curve._drift = out
    return out


def corrected_energy(curve, model):
    """f(t) = F(t, u(t)) - int_0^t dF/dr(r, u(r)) dr at the samples."""
    return curve.energies - _cumulative_drift(curve, model)


def f_monotonicity(curve, model):
    """Maximum increase of f between consecutive samples (ideally <= 0)."""
    f = corrected_energy(curve, model)
    if len(f) < 2:
        return 0.0
    return float(max(np.diff(f).max(), 0.0))


def check_stability(curve, model, regime=None, lam=None, *, include_sided=True,
                    max_checks=2001):
    """Worst regime-appropriate stability violation at continuity samples.

    bv_infinity: max |grad F(t, u(t))|.  finite_lambda: max Moreau-Yosida
    gap R_lam(t, u(t)) over at most max_checks samples (each gap evaluation
    is a full inner minimization), also at the sided jump states.
    """
    regime = regime or curve.regime
    if regime == "bv_infinity":
        g = model.gradient(curve.times, curve.states)
        return float(np.linalg.norm(g, axis=1).max())
    lam = lam if lam is not None else curve.lam
    if lam is None:
        raise InvalidParams("finite_lambda stability needs lam")
    grid = model.box.grid(default_scan_resolution(model.dim)) \
        if model.dim <= 3 else None
    idx = _sample_indices(len(curve.times), max_checks)
    worst = 0.0
    for t, u in zip(curve.times[idx], curve.states[idx]):
        worst = max(worst, residual_stability(model, float(t), u, lam, grid=grid))
    if include_sided:
        for j in curve.jumps:
            worst = max(worst, residual_stability(model, j.t_jump, j.u_minus,
                                                  lam, grid=grid))
            worst = max(worst, residual_stability(model, j.t_jump, j.u_plus,
                                                  lam, grid=grid))
    return float(worst)


@dataclass
class BalanceReport:
    """Energy-balance residuals over a two-time grid, plus side conditions."""

    regime: str
    grid_times: np.ndarray
    residuals: np.ndarray  # (S, S), NaN below the diagonal
    max_residual: float
    mean_residual: float
    stability_violation: float
    f_monotonicity_max: float

    def as_dict(self):
        return {
            "regime": self.regime,
            "grid_times": [float(t) for t in self.grid_times],
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "stability_violation": self.stability_violation,
            "f_monotonicity_max": self.f_monotonicity_max,
        }

    def residual_triples(self):
        """Upper-triangular residuals as (s, t, value) rows."""
        rows = []
        S = len(self.grid_times)
        for a in range(S):
            for b in range(a, S):
                rows.append([float(self.grid_times[a]),
                             float(self.grid_times[b]),
                             float(self.residuals[a, b])])
        return rows

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=1)


def check_energy_balance(curve, model, cost_values=None, regime=None, *,
                         lam=None, grid_size=50, stability=None):
    """Residuals of F(t,u_+) + sum costs - F(s,u_-) - int_s^t dF/dr over (s,t).

    The cost of every jump in the closed interval [s, t] is counted; at the
    endpoints the sided states are used, so s = t at a jump reduces to
    |energy_drop - cost|.  cost_values defaults to the atoms.
    """
    regime = regime or curve.regime
    lam = lam if lam is not None else curve.lam
    if cost_values is None:
        cost_values = [j.mu_atom for j in curve.jumps]
    if len(cost_values) != len(curve.jumps):
        raise InvalidParams("one cost value per jump required")

    T = float(curve.times[-1]) if len(curve.times) else 0.0
    base = np.linspace(0.0, T, grid_size)
    jt = curve.jump_times()
    pool = np.concatenate([curve.times, jt])
    snapped = pool[np.abs(pool[:, None] - base[None, :]).argmin(axis=0)]
    grid_times = np.unique(np.concatenate([snapped, jt]))

    cum = _cumulative_drift(curve, model)

    def drift_to(t):
        # jump times sit inside bands; integrate the last partial piece
        i = int(np.clip(np.searchsorted(curve.times, t + 1e-15) - 1, 0,
                        len(curve.times) - 1))
        extra = 0.0
        t0 = float(curve.times[i])
        if t > t0 + 1e-15:
            j = curve._band_at(t)
            u = curve.left_value(t) if j is not None else curve.states[i]
            if j is not None and t > j.t_jump:
                e1 = gauss_panels(
                    lambda X: model.time_derivative(X.reshape(-1),
                        np.repeat(j.u_minus[None, :], X.size, axis=0)
                        ).reshape(X.shape), np.array([t0]),
                    np.array([j.t_jump]))[0]
                e2 = gauss_panels(
                    lambda X: model.time_derivative(X.reshape(-1),
                        np.repeat(j.u_plus[None, :], X.size, axis=0)
                        ).reshape(X.shape), np.array([j.t_jump]),
                    np.array([t]))[0]
                extra = e1 + e2
            else:
                extra = gauss_panels(
                    lambda X: model.time_derivative(X.reshape(-1),
                        np.repeat(u[None, :], X.size, axis=0)
                        ).reshape(X.shape), np.array([t0]), np.array([t]))[0]
        return cum[i] + extra

    D = np.array([drift_to(float(t)) for t in grid_times])
    F_plus = np.array([
        model.eval(float(t), curve.right_value(float(t))) for t in grid_times
    ])
    F_minus = np.array([
        model.eval(float(t), curve.left_value(float(t))) for t in grid_times
    ])

    S = len(grid_times)
    res = np.full((S, S), np.nan)
    jt_arr = np.array([j.t_jump for j in curve.jumps])
    costs_arr = np.asarray(cost_values, float)
    for a in range(S):
        s = grid_times[a]
        for b in range(a, S):
            t = grid_times[b]
            in_range = (jt_arr >= s - 1e-12) & (jt_arr <= t + 1e-12)
            csum = float(costs_arr[in_range].sum()) if len(jt_arr) else 0.0
            res[a, b] = abs(F_plus[b] + csum - F_minus[a] - (D[b] - D[a]))

    vals = res[np.triu_indices(S)]
    if stability is None:
        stability = check_stability(curve, model, regime, lam)
    label = regime if regime == "bv_infinity" else f"finite_lambda({lam:g})"
    return BalanceReport(
        regime=label,
        grid_times=grid_times,
        residuals=res,
        max_residual=float(np.nanmax(vals)),
        mean_residual=float(np.nanmean(vals)),
        stability_violation=float(stability),
        f_monotonicity_max=f_monotonicity(curve, model),
    )


def dissipation_density(traj, model=None):
    """Interval density (eps/2)|du/dt|^2 of one run, with its integral.

    By the step optimality condition this equals the equivalent split form
    (1/4 eps)|grad F|^2 + (eps/4)|du/dt|^2 up to the solver tolerance.
    """
    d = traj.displacements()
    tau = traj.params.tau
    rate = d / tau
    density = 0.5 * traj.params.epsilon * rate * rate
    mids = 0.5 * (traj.times[:-1] + traj.times[1:])
    return mids, density, float(density.sum() * tau)


def window_mass_fraction(traj, jumps, *, widen=1.0):
    """Share of the dissipation integral inside the jump windows."""
    mids, density, total = dissipation_density(traj)
    if total <= 0 or not jumps:
        return 0.0
    inside = np.zeros(len(mids), dtype=bool)
    for j in jumps:
        lo, hi = j.window
        c = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * widen
        inside |= (mids >= c - half) & (mids <= c + half)
    return float(density[inside].sum() / density.sum())
