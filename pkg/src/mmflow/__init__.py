"""Minimizing-movement schemes for singularly perturbed gradient flows.

Discrete-in-time solver for eps u' = -grad F(t, u) via recursive global
minimization, with extraction of the two limit evolutions (vanishing and
finite eps/tau ratio), their jump costs, and energy-balance validation.
"""

__version__ = "0.1.0"

from .errors import (AmbiguousRegime, AuditFailure, BoxEscape,
                     ConsistencyFailure, EstimateViolation, InconsistentSweep,
                     InnerSolveFailure, InvalidParams, MMFlowError, NonFinite,
                     NonpositiveAtom, ResolutionWarning)
from .models import (Box, DoubleWell, ElasticChain, EnergyModel,
                     PolynomialEnergy, QuadraticLoad, derive_box, evaluate,
                     from_config, gradient, time_derivative)
from .audit import AuditReport, audit_assumptions, check_coercivity, \
    check_derivatives, fit_growth_constants, gronwall_bound, lipschitz_in_time
from .solver import (ProxSolution, default_scan_resolution, global_argmin,
                     newton_root)
from .scheme import (EstimateReport, Interpolants, SchemeParams, Trajectory,
                     interpolant_mismatch, interpolants, run, step,
                     verify_energy_estimates)
from .critical import (CriticalAtlas, MoreauYosidaResult, StableSet,
                       classify_point, critical_points, moreau_yosida,
                       residual_stability, stable_points)
from .costs import (ChainWitness, PathWitness, chain_energy, transition_cost,
                    transition_cost_oracle, viscous_cost, viscous_cost_oracle)
from .limits import (BalanceReport, JumpRecord, RegulatedCurve,
                     check_energy_balance, check_stability, corrected_energy,
                     defect_measure, detect_jumps, dissipation_density,
                     extract_limit, f_monotonicity, window_mass_fraction)
from .config import ExperimentConfig, Tolerances, load_config
from .experiment import (RunManifest, classify_regime, emit_plotdata,
                         jump_costs, run_experiment, run_sweep)

__all__ = [
    "AmbiguousRegime", "AuditFailure", "AuditReport", "BalanceReport", "Box",
    "BoxEscape", "ChainWitness", "ConsistencyFailure", "CriticalAtlas",
    "DoubleWell", "ElasticChain", "EnergyModel", "EstimateReport",
    "EstimateViolation", "ExperimentConfig", "InconsistentSweep",
    "InnerSolveFailure", "Interpolants", "InvalidParams", "JumpRecord",
    "MMFlowError", "MoreauYosidaResult", "NonFinite", "NonpositiveAtom",
    "PathWitness", "PolynomialEnergy", "ProxSolution", "QuadraticLoad",
    "RegulatedCurve", "ResolutionWarning", "RunManifest", "SchemeParams",
    "StableSet", "Tolerances", "Trajectory", "audit_assumptions",
    "chain_energy", "check_coercivity", "check_derivatives",
    "check_energy_balance", "check_stability", "classify_point",
    "classify_regime", "corrected_energy", "critical_points", "defect_measure",
    "derive_box", "detect_jumps", "dissipation_density", "emit_plotdata",
    "evaluate", "extract_limit", "f_monotonicity", "fit_growth_constants",
    "from_config", "default_scan_resolution",
    "global_argmin", "gradient", "gronwall_bound",
    "interpolant_mismatch", "interpolants", "jump_costs", "lipschitz_in_time",
    "load_config", "moreau_yosida", "newton_root", "residual_stability",
    "run", "run_experiment", "run_sweep", "stable_points", "step",
    "time_derivative", "transition_cost", "transition_cost_oracle",
    "verify_energy_estimates", "viscous_cost", "viscous_cost_oracle",
    "window_mass_fraction",
]
