"""Command line front end.

Subcommands: audit, simulate, sweep, critical, costs, balance, plotdata.
`sweep` is the full pipeline; `costs` and `balance` re-derive their reports
from the artifacts of a previous sweep in the same output directory.  All
subcommands exit 0 only when their checks pass.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .audit import audit_assumptions
from .config import load_config
from .critical import critical_points
from .errors import AuditFailure, MMFlowError
from .experiment import (RunManifest, atomic_write_json, emit_plotdata,
                         jump_costs, run_experiment)
from .limits import JumpRecord, RegulatedCurve, check_energy_balance
from .models import from_config
from .scheme import verify_energy_estimates
from . import scheme


def _default_out(args):
    if args.out:
        return args.out
    if not getattr(args, "config", None):
        raise FileNotFoundError("need --out (or --config to derive it from)")
    stem = os.path.basename(args.config).rsplit(".", 1)[0]
    return f"{stem}_out"


def _cmd_audit(args):
    config = load_config(args.config)
    model = from_config(config.model_table)
    seed = args.seed if args.seed is not None else config.seed
    try:
        report = audit_assumptions(model, u0=np.array(config.u0), seed=seed)
    except AuditFailure as e:
        print(f"audit FAILED: {e}")
        return 1
    d = report.as_dict()
    print(f"audit ok: grad err {d['f0_grad_max_rel_err']:.2e}, "
          f"dF/dt err {d['f0_dt_max_rel_err']:.2e}, "
          f"growth violation {d['f2_max_violation']:.2e}, "
          f"min critical separation {d['f3_min_separation']}, "
          f"coercivity {'ok' if d['coercivity_ok'] else 'NOT OK'}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "audit.json")
        atomic_write_json(path, d)
        print(f"wrote {path}")
    return 0


def _cmd_simulate(args):
    config = load_config(args.config)
    model = from_config(config.model_table)
    out = _default_out(args)
    os.makedirs(out, exist_ok=True)
    eps, tau = config.sweep[-1]
    from .experiment import _params_for
    params = _params_for(config, eps, tau)
    if args.seed is not None:
        import dataclasses
        params = dataclasses.replace(params, seed=args.seed)
    traj = scheme.run(model, params)
    est = verify_energy_estimates(model, traj)
    path = os.path.join(out, "simulate.csv")
    traj.to_csv(path)
    meta = traj.metadata()
    meta["estimates"] = est.as_dict()
    atomic_write_json(os.path.join(out, "simulate.json"), meta)
    print(f"ran eps={eps:g} tau={tau:g}: {traj.n_steps} steps, "
          f"max residual {meta['max_residual']:.2e}, "
          f"min slack {meta['min_step_slack']:.2e}, wrote {path}")
    return 0


def _cmd_sweep(args):
    config = load_config(args.config)
    out = _default_out(args)
    manifest = run_experiment(config, out, workers=args.workers,
                              seed=args.seed)
    s = manifest.summary
    for name, c in s["checks"].items():
        print(f"{'PASS' if c['ok'] else 'FAIL'} {name}: value {c['value']:.6g} "
              f"(limit {c['limit']})")
    print(f"jumps: {s['n_jumps']} at {['%.5f' % t for t in s['jump_times']]}")
    print(f"summary: {'PASS' if s['passed'] else 'FAIL'} -> {out}/summary.json")
    return 0 if s["passed"] else 1


def _cmd_critical(args):
    config = load_config(args.config)
    model = from_config(config.model_table)
    T = config.horizon
    atlases = []
    for t in np.linspace(0.0, T, 5):
        atlas = critical_points(model, float(t), **config.critical)
        atlases.append(atlas.as_dict())
        sep = atlas.min_separation
        print(f"t={t:.3f}: {len(atlas)} critical points "
              f"({', '.join(atlas.classes) or 'none'}), "
              f"min separation {sep if np.isfinite(sep) else 'n/a'}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "critical.json")
        atomic_write_json(path, atlases)
        print(f"wrote {path}")
    return 0


def _load_curve(manifest, config):
    data = np.load(manifest.path("curve_full"))
    with open(manifest.path("jumps")) as fh:
        jumps = [JumpRecord.from_dict(d) for d in json.load(fh)]
    if "bands" in data:
        bands = [tuple(b) for b in data["bands"]]
    else:
        bands = [j.window for j in jumps]
    return RegulatedCurve(
        times=data["times"], states=data["states"], energies=data["energies"],
        jumps=jumps, regime=config.regime, lam=config.lam,
        epsilon=config.sweep[-1][0], tau=config.sweep[-1][1],
        drift_bound=0.0, bands=bands,
    )


def _cmd_costs(args):
    config = load_config(args.config)
    out = _default_out(args)
    manifest = RunManifest.load(out)
    model = from_config(config.model_table)
    curve = _load_curve(manifest, config)
    values, reports = jump_costs(model, curve, config.regime, config.lam,
                                 config.costs)
    atomic_write_json(os.path.join(out, "costs.json"), reports)
    atomic_write_json(os.path.join(out, "jumps.json"),
                      curve.jumps_json(cost_values=values))
    for j, v in zip(curve.jumps, values):
        print(f"jump t={j.t_jump:.5f}: atom {j.mu_atom:.6g}, cost {v:.6g}, "
              f"gap {abs(j.mu_atom - v):.2e}")
    if not curve.jumps:
        print("no jumps; nothing to price")
    return 0


def _cmd_balance(args):
    config = load_config(args.config)
    out = _default_out(args)
    manifest = RunManifest.load(out)
    model = from_config(config.model_table)
    curve = _load_curve(manifest, config)
    with open(manifest.path("jumps")) as fh:
        jd = json.load(fh)
    costs = [d.get("cost", d["mu_atom"]) for d in jd]
    report = check_energy_balance(curve, model, costs, config.regime,
                                  lam=config.lam)
    d = report.as_dict()
    d["residual_grid"] = report.residual_triples()
    atomic_write_json(os.path.join(out, "balance.json"), d)
    ok = (report.max_residual <= config.tolerances.balance_max
          and report.stability_violation <= config.tolerances.stability_max
          and report.f_monotonicity_max <= config.tolerances.mono_max)
    print(f"balance max residual {report.max_residual:.3e} "
          f"(limit {config.tolerances.balance_max:g}), "
          f"stability {report.stability_violation:.3e} "
          f"(limit {config.tolerances.stability_max:g}), "
          f"f increase {report.f_monotonicity_max:.3e} "
          f"(limit {config.tolerances.mono_max:g}) -> "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _cmd_plotdata(args):
    out = _default_out(args)
    files = emit_plotdata(out)
    for f in files:
        print(f"wrote {f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="mmflow",
        description="Minimizing-movement schemes for singularly perturbed "
                    "gradient flows: simulation, limit extraction, jump "
                    "costs, energy-balance validation.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, doc in [
        ("audit", _cmd_audit, "check model assumptions on the working box"),
        ("simulate", _cmd_simulate, "run the scheme for the finest sweep pair"),
        ("sweep", _cmd_sweep, "full pipeline: runs, limit, costs, balance"),
        ("critical", _cmd_critical, "critical-point atlas at sampled times"),
        ("costs", _cmd_costs, "re-price jumps from existing sweep artifacts"),
        ("balance", _cmd_balance, "recheck energy balance from artifacts"),
        ("plotdata", _cmd_plotdata, "emit long-format CSVs for plotting"),
    ]:
        q = sub.add_parser(name, help=doc)
        q.set_defaults(fn=fn)
        q.add_argument("--config", required=(name != "plotdata"),
                       help="experiment TOML file")
        q.add_argument("--out", default=None, help="output directory")
        q.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        q.add_argument("--workers", type=int, default=None,
                       help="parallel runs for sweeps")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MMFlowError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
