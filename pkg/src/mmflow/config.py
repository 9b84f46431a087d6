"""Experiment configuration: a single TOML file drives every subcommand.

Sections: [model] (kind plus its parameters), [run] (u0, seed, workers,
solver knobs), [sweep] (epsilon list plus either a tau generator
tau = coefficient * epsilon^exponent or explicit pairs, and the declared
regime), [tolerances] (pass/fail thresholds for the summary), and optional
[critical], [costs], [limits], [expect] overrides.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from .errors import InvalidParams


@dataclass(frozen=True)
class Tolerances:
    """Summary pass/fail thresholds; defaults mirror the validation ledger."""

    balance_max: float = 5e-3
    stability_max: float = 1e-4
    mono_max: float = 1e-6
    cost_match: float = 5e-3

    def as_dict(self):
        return {
            "balance_max": self.balance_max,
            "stability_max": self.stability_max,
            "mono_max": self.mono_max,
            "cost_match": self.cost_match,
        }


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    model_table: dict
    u0: list
    seed: int
    workers: int
    sweep: list  # [(epsilon, tau)], strictly decreasing epsilon
    regime: str  # bv_infinity | finite_lambda
    lam: float | None
    horizon: float
    tolerances: Tolerances
    solver: dict = field(default_factory=dict)
    critical: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    name: str = "experiment"
    sha256: str = ""

    def scheme_kwargs(self):
        kw = {}
        for key in ("resolution", "newton_tol", "max_iter", "n_random_starts"):
            if key in self.solver:
                kw[key] = self.solver[key]
        return kw


def _build_sweep(table):
    if "pairs" in table:
        pairs = [(float(e), float(t)) for e, t in table["pairs"]]
    else:
        eps = [float(e) for e in table["epsilons"]]
        c = float(table.get("tau_coefficient", 1.0))
        p = float(table.get("tau_exponent", 1.0))
        if p < 1.0:
            raise InvalidParams(f"tau exponent must be >= 1, got {p}")
        if c <= 0:
            raise InvalidParams("tau coefficient must be positive")
        pairs = [(e, c * e ** p) for e in eps]
    if len(pairs) < 1:
        raise InvalidParams("sweep must contain at least one (epsilon, tau) pair")
    eps = [e for e, _ in pairs]
    if not all(a > b for a, b in zip(eps, eps[1:])):
        raise InvalidParams("sweep must be strictly decreasing in epsilon")
    if any(e <= 0 or t <= 0 for e, t in pairs):
        raise InvalidParams("epsilons and taus must be positive")
    return pairs


def _check_regime(sweep, regime, lam):
    ratios = np.array([e / t for e, t in sweep])
    if regime == "finite_lambda":
        mean = float(ratios.mean())
        if np.any(np.abs(ratios - mean) > 0.01 * abs(mean) + 1e-15):
            raise InvalidParams(
                f"declared finite_lambda but ratios {ratios.tolist()} are not constant"
            )
        if lam is None:
            lam = mean
        elif abs(lam - mean) > 0.01 * abs(mean):
            raise InvalidParams(
                f"declared lambda {lam} disagrees with sweep ratio {mean}"
            )
        return lam
    if regime == "bv_infinity":
        if len(sweep) >= 2 and not np.all(np.diff(ratios) > 0):
            raise InvalidParams(
                f"declared bv_infinity but ratios {ratios.tolist()} do not grow"
            )
        return None
    raise InvalidParams(f"unknown regime {regime!r}")


def load_config(path):
    """Parse and validate a TOML experiment file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    data = tomllib.loads(raw.decode("utf-8"))

    for section in ("model", "run", "sweep"):
        if section not in data:
            raise InvalidParams(f"config missing [{section}] section")

    model_table = dict(data["model"])
    run = data["run"]
    if "u0" not in run:
        raise InvalidParams("[run] must set u0")
    u0 = [float(v) for v in np.atleast_1d(run["u0"])]

    sweep_table = data["sweep"]
    sweep = _build_sweep(sweep_table)
    regime = sweep_table.get("regime")
    if regime is None:
        raise InvalidParams("[sweep] must declare the regime")
    lam = sweep_table.get("lambda")
    lam = float(lam) if lam is not None else None
    lam = _check_regime(sweep, regime, lam)

    horizon = float(model_table.get("horizon", 2.0))
    tol_table = data.get("tolerances", {})
    allowed = {"balance_max", "stability_max", "mono_max", "cost_match"}
    unknown = set(tol_table) - allowed
    if unknown:
        raise InvalidParams(f"unknown tolerance keys: {sorted(unknown)}")
    tolerances = Tolerances(**{k: float(v) for k, v in tol_table.items()})

    name = data.get("name", None)
    if name is None:
        name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]

    return ExperimentConfig(
        model_table=model_table,
        u0=u0,
        seed=int(run.get("seed", 0)),
        workers=int(run.get("workers", 1)),
        sweep=sweep,
        regime=regime,
        lam=lam,
        horizon=horizon,
        tolerances=tolerances,
        solver=dict(data.get("solver", {})),
        critical=dict(data.get("critical", {})),
        costs=dict(data.get("costs", {})),
        limits=dict(data.get("limits", {})),
        expect=dict(data.get("expect", {})),
        name=str(name),
        sha256=hashlib.sha256(raw).hexdigest(),
    )
