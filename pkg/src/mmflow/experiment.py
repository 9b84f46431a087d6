"""Experiment orchestration: sweep, extract, price jumps, validate, persist.

One experiment = audit the model, run the scheme once per (epsilon, tau)
pair, extract the limit curve with jumps, price every jump with the
regime-appropriate cost, check the energy balance and stability, and write
every report to the output directory with a manifest.  Artifacts are written
atomically and contain no timestamps, so a fixed config and seed reproduce
them byte for byte; wall-clock timings live only in the manifest.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .audit import audit_assumptions
from .costs import transition_cost, viscous_cost
from .critical import critical_points
from .errors import AmbiguousRegime
from .limits import (check_energy_balance, defect_measure, dissipation_density,
                     extract_limit, window_mass_fraction)
from .models import from_config
from .scheme import SchemeParams, run, verify_energy_estimates
from . import __version__


def classify_regime(sweep):
    """Declare the limit regime of a sweep from its epsilon/tau ratios.

    Near-constant ratios (within 1%) mean a finite rate; strictly growing
    ratios that either grow tenfold or follow tau ~ eps^p with p clearly
    above 1 mean the ratio diverges.  Anything else is ambiguous.
    """
    ratios = np.array([e / t for e, t in sweep], dtype=float)
    if len(ratios) == 0:
        raise AmbiguousRegime("empty sweep")
    mean = float(ratios.mean())
    if np.all(np.abs(ratios - mean) <= 0.01 * abs(mean)):
        return "finite_lambda", mean
    if len(ratios) >= 2 and np.all(np.diff(ratios) > 0):
        if ratios[-1] >= 10.0 * ratios[0]:
            return "bv_infinity", None
        eps = np.array([e for e, _ in sweep], dtype=float)
        slope = np.polyfit(np.log(eps), np.log(ratios), 1)[0]
        if 1.0 - slope >= 1.05:
            return "bv_infinity", None
    raise AmbiguousRegime(
        f"ratios {ratios.tolist()} neither settle nor grow decisively"
    )


# ------------------------------------------------------------------ artifacts


def atomic_write_json(path, obj):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def atomic_write_frame(path, frame):
    tmp = f"{path}.tmp"
    frame.to_csv(tmp, index=False)
    os.replace(tmp, path)


def atomic_write_arrays(path, **arrays):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


@dataclass
class RunManifest:
    """Index of everything an experiment produced."""

    config_sha256: str
    name: str
    out_dir: str
    regime: str
    lam: float | None
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)
    status: str = "incomplete"
    error: str = ""
    summary: dict = field(default_factory=dict)

    def path(self, name):
        return os.path.join(self.out_dir, self.artifacts[name])

    def add(self, name, filename):
        self.artifacts[name] = filename
        return os.path.join(self.out_dir, filename)

    def as_dict(self):
        return {
            "config_sha256": self.config_sha256,
            "name": self.name,
            "out_dir": self.out_dir,
            "regime": self.regime,
            "lambda": self.lam,
            "artifacts": self.artifacts,
            "timings": self.timings,
            "versions": self.versions,
            "runs": self.runs,
            "status": self.status,
            "error": self.error,
            "summary": self.summary,
        }

    def write(self):
        atomic_write_json(os.path.join(self.out_dir, "manifest.json"),
                          self.as_dict())

    def check_complete(self):
        missing = [n for n, p in self.artifacts.items()
                   if not os.path.exists(os.path.join(self.out_dir, p))]
        if missing:
            raise FileNotFoundError(f"manifest references missing files: {missing}")

    @staticmethod
    def load(out_dir):
        with open(os.path.join(out_dir, "manifest.json")) as fh:
            d = json.load(fh)
        return RunManifest(
            config_sha256=d["config_sha256"], name=d["name"],
            out_dir=out_dir, regime=d["regime"], lam=d["lambda"],
            artifacts=d["artifacts"], timings=d["timings"],
            versions=d["versions"], runs=d["runs"], status=d["status"],
            error=d["error"], summary=d["summary"],
        )


def _versions():
    import scipy
    return {
        "package": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


# -------------------------------------------------------------------- running


def _params_for(config, eps, tau):
    kw = config.scheme_kwargs()
    return SchemeParams(epsilon=eps, tau=tau, u0=np.array(config.u0),
                        horizon=config.horizon, seed=config.seed, **kw)


def _run_pair(model_table, params):
    model = from_config(model_table)
    return run(model, params)


def run_sweep(config, workers=None):
    """All scheme runs of the sweep, ordered by decreasing epsilon."""
    workers = workers if workers is not None else config.workers
    jobs = [(config.model_table, _params_for(config, e, t))
            for e, t in config.sweep]
    if workers <= 1 or len(jobs) == 1:
        return [_run_pair(*j) for j in jobs]
    try:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_run_pair, *j) for j in jobs]
            return [f.result() for f in futures]
    except (OSError, PermissionError):
        return [_run_pair(*j) for j in jobs]


def jump_costs(model, curve, regime, lam, cost_options=None):
    """Price every jump of the curve with the regime's cost functional."""
    opts = dict(cost_options or {})
    values, reports = [], []
    for j in curve.jumps:
        atlas = critical_points(model, j.t_jump,
                                **({"resolution": opts["atlas_resolution"]}
                                   if "atlas_resolution" in opts else {}))
        if regime == "bv_infinity":
            kw = {k: opts[k] for k in ("resolution", "smooth_rounds")
                  if k in opts}
            witness = viscous_cost(model, j.t_jump, j.u_minus, j.u_plus,
                                   atlas=atlas, **kw)
        else:
            kw = {k: opts[k] for k in ("grid_points", "n_max", "resolution")
                  if k in opts}
            witness = transition_cost(model, j.t_jump, j.u_minus, j.u_plus,
                                      lam, atlas=atlas, **kw)
        values.append(witness.cost)
        reports.append(witness.as_dict())
    return values, reports


def _evaluate_summary(config, curve, balance, estimates, cost_values):
    tol = config.tolerances
    expect = config.expect
    checks = {}

    checks["balance_max"] = {
        "value": balance.max_residual, "limit": tol.balance_max,
        "ok": balance.max_residual <= tol.balance_max,
    }
    checks["stability"] = {
        "value": balance.stability_violation, "limit": tol.stability_max,
        "ok": balance.stability_violation <= tol.stability_max,
    }
    checks["f_monotonicity"] = {
        "value": balance.f_monotonicity_max, "limit": tol.mono_max,
        "ok": balance.f_monotonicity_max <= tol.mono_max,
    }
    worst_slack = min((e["min_step_slack"] for e in estimates), default=0.0)
    checks["step_estimate_slack"] = {
        "value": worst_slack, "limit": -1e-9, "ok": worst_slack >= -1e-9,
    }
    if curve.jumps:
        gap = max(abs(j.mu_atom - c) for j, c in zip(curve.jumps, cost_values))
        checks["cost_identity"] = {
            "value": gap, "limit": tol.cost_match, "ok": gap <= tol.cost_match,
        }

    if "jump_count" in expect:
        checks["jump_count"] = {
            "value": len(curve.jumps), "limit": expect["jump_count"],
            "ok": len(curve.jumps) == int(expect["jump_count"]),
        }
    if curve.jumps:
        t0 = curve.jumps[0].t_jump
        if "t_jump" in expect:
            tol_t = float(expect.get("t_jump_tol", 0.02))
            checks["t_jump"] = {
                "value": t0, "limit": [expect["t_jump"], tol_t],
                "ok": abs(t0 - float(expect["t_jump"])) <= tol_t,
            }
        if "t_jump_min" in expect:
            checks["t_jump_min"] = {
                "value": t0, "limit": expect["t_jump_min"],
                "ok": t0 > float(expect["t_jump_min"]),
            }
        if "t_jump_max" in expect:
            checks["t_jump_max"] = {
                "value": t0, "limit": expect["t_jump_max"],
                "ok": t0 < float(expect["t_jump_max"]),
            }
        state_tol = float(expect.get("state_tol", 0.01))
        if "u_minus" in expect:
            err = float(np.linalg.norm(
                curve.jumps[0].u_minus - np.atleast_1d(expect["u_minus"])))
            checks["u_minus"] = {"value": err, "limit": state_tol,
                                 "ok": err <= state_tol}
        if "u_plus" in expect:
            err = float(np.linalg.norm(
                curve.jumps[0].u_plus - np.atleast_1d(expect["u_plus"])))
            checks["u_plus"] = {"value": err, "limit": state_tol,
                                "ok": err <= state_tol}

    return {
        "checks": checks,
        "passed": all(c["ok"] for c in checks.values()),
        "n_jumps": len(curve.jumps),
        "jump_times": [j.t_jump for j in curve.jumps],
        "cost_values": [float(c) for c in cost_values],
        "regime": balance.regime,
    }


def run_experiment(config, out_dir, *, workers=None, seed=None):
    """Full pipeline; returns the manifest.  Partial artifacts persist on error."""
    if seed is not None:
        config = dataclasses.replace(config, seed=int(seed))
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(
        config_sha256=config.sha256, name=config.name, out_dir=out_dir,
        regime=config.regime, lam=config.lam, versions=_versions(),
    )
    stage = "setup"
    t_start = time.perf_counter()
    try:
        model = from_config(config.model_table)

        stage = "audit"
        t0 = time.perf_counter()
        report = audit_assumptions(model, u0=np.array(config.u0),
                                   seed=config.seed)
        atomic_write_json(manifest.add("audit", "audit.json"), report.as_dict())
        manifest.timings["audit"] = time.perf_counter() - t0

        stage = "sweep"
        t0 = time.perf_counter()
        trajectories = run_sweep(config, workers=workers)
        manifest.timings["sweep"] = time.perf_counter() - t0
        estimates = []
        for i, traj in enumerate(trajectories):
            fname = f"run_{i:02d}.csv"
            atomic_write_frame(manifest.add(f"run_{i:02d}", fname),
                               traj.to_frame())
            est = verify_energy_estimates(model, traj)
            meta = traj.metadata()
            meta["estimates"] = est.as_dict()
            manifest.runs.append({"file": fname, **meta})
            estimates.append(est.as_dict())

        stage = "extract"
        t0 = time.perf_counter()
        curve = extract_limit(model, trajectories, config.regime,
                              lam=config.lam, **config.limits)
        atoms = defect_measure(curve, model)
        manifest.timings["extract"] = time.perf_counter() - t0
        atomic_write_arrays(
            manifest.add("curve_full", "curve_full.npz"),
            times=curve.times, states=curve.states, energies=curve.energies,
            bands=np.asarray(curve.bands, float).reshape(-1, 2),
        )
        frame = curve.to_frame(model)
        atomic_write_frame(manifest.add("curve", "curve.csv"), frame)

        stage = "costs"
        t0 = time.perf_counter()
        cost_values, cost_reports = jump_costs(model, curve, config.regime,
                                               config.lam, config.costs)
        manifest.timings["costs"] = time.perf_counter() - t0
        atomic_write_json(manifest.add("costs", "costs.json"), cost_reports)
        atomic_write_json(manifest.add("jumps", "jumps.json"),
                          curve.jumps_json(cost_values=cost_values))

        stage = "balance"
        t0 = time.perf_counter()
        balance = check_energy_balance(curve, model, cost_values,
                                       config.regime, lam=config.lam)
        manifest.timings["balance"] = time.perf_counter() - t0
        bd = balance.as_dict()
        bd["residual_grid"] = balance.residual_triples()
        bd["atoms"] = [[t, m] for t, m in atoms]
        atomic_write_json(manifest.add("balance", "balance.json"), bd)

        stage = "summary"
        finest = trajectories[-1]
        summary = _evaluate_summary(config, curve, balance, estimates,
                                    cost_values)
        summary["window_mass_fraction"] = window_mass_fraction(finest,
                                                               curve.jumps)
        worst_res = max(float(r["max_residual"]) for r in manifest.runs)
        summary["max_el_residual"] = worst_res
        manifest.summary = summary
        atomic_write_json(manifest.add("summary", "summary.json"), summary)

        manifest.status = "ok" if summary["passed"] else "failed_tolerances"
        manifest.timings["total"] = time.perf_counter() - t_start
        manifest.write()
        manifest.check_complete()
        return manifest
    except Exception as e:
        manifest.status = "error"
        manifest.error = f"{stage}: {type(e).__name__}: {e}"
        manifest.timings["total"] = time.perf_counter() - t_start
        manifest.write()
        raise


# ------------------------------------------------------------------- plotdata


def _long_rows(series, ts, vals):
    return pd.DataFrame({"series": series, "t": ts, "value": vals})


def _subsample(frame, max_rows=2001):
    if len(frame) <= max_rows:
        return frame
    stride = int(np.ceil(len(frame) / max_rows))
    idx = np.arange(0, len(frame), stride)
    if idx[-1] != len(frame) - 1:
        idx = np.append(idx, len(frame) - 1)
    return frame.iloc[idx]


def emit_plotdata(manifest, max_rows=2001):
    """Long-format plot files from a finished experiment's artifacts."""
    if isinstance(manifest, str):
        manifest = RunManifest.load(manifest)
    out = os.path.join(manifest.out_dir, "plotdata")
    os.makedirs(out, exist_ok=True)
    written = []

    pieces = []
    for rec in manifest.runs:
        df = _subsample(pd.read_csv(os.path.join(manifest.out_dir,
                                                 rec["file"])), max_rows)
        eps = rec["params"]["epsilon"]
        dims = [c for c in df.columns if c.startswith("u_")]
        for c in dims:
            pieces.append(_long_rows(f"traj_eps{eps:g}_{c}", df["t"], df[c]))
        pieces.append(_long_rows(f"traj_eps{eps:g}_F", df["t"], df["F"]))

    curve = _subsample(pd.read_csv(os.path.join(manifest.out_dir,
                                                manifest.artifacts["curve"])),
                       max_rows)
    for c in [c for c in curve.columns if c != "t"]:
        pieces.append(_long_rows(f"curve_{c}", curve["t"], curve[c]))

    finest = manifest.runs[-1]
    df = pd.read_csv(os.path.join(manifest.out_dir, finest["file"]))
    dims = [c for c in df.columns if c.startswith("u_")]
    states = df[dims].to_numpy()
    ts = df["t"].to_numpy()
    tau = float(finest["params"]["tau"])
    eps = float(finest["params"]["epsilon"])
    d = np.linalg.norm(np.diff(states, axis=0), axis=1)
    density = 0.5 * eps * (d / tau) ** 2
    dd = _subsample(pd.DataFrame({
        "t": 0.5 * (ts[:-1] + ts[1:]), "value": density}), max_rows)
    pieces.append(_long_rows("dissipation_density", dd["t"], dd["value"]))

    series = pd.concat(pieces, ignore_index=True)
    path = os.path.join(out, "series.csv")
    atomic_write_frame(path, series)
    written.append(path)

    with open(os.path.join(manifest.out_dir,
                           manifest.artifacts["balance"])) as fh:
        bal = json.load(fh)
    grid = pd.DataFrame(bal["residual_grid"], columns=["s", "t", "value"])
    path = os.path.join(out, "balance_grid.csv")
    atomic_write_frame(path, grid)
    written.append(path)

    with open(os.path.join(manifest.out_dir,
                           manifest.artifacts["jumps"])) as fh:
        jumps = json.load(fh)
    if jumps:
        overlay = pd.DataFrame({
            "series": "jump",
            "t": [j["t_jump"] for j in jumps],
            "value": [j["energy_drop"] for j in jumps],
        })
        path = os.path.join(out, "jumps.csv")
        atomic_write_frame(path, overlay)
        written.append(path)
    return written
