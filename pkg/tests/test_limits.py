"""Jump detection, limit curves, defect atoms, and energy balances."""

import copy

import numpy as np
import pytest

from mmflow import (
    InconsistentSweep,
    InvalidParams,
    JumpRecord,
    NonpositiveAtom,
    QuadraticLoad,
    SchemeParams,
    check_energy_balance,
    check_stability,
    corrected_energy,
    defect_measure,
    detect_jumps,
    extract_limit,
    f_monotonicity,
    run,
    window_mass_fraction,
)

import oracles
from conftest import FOLD_T, U_MINUS, U_PLUS


@pytest.fixture(scope="module")
def quad_pair():
    q = QuadraticLoad([0.1], [0.25])
    trajs = [
        run(q, SchemeParams(epsilon=e, tau=e, u0=[0.1])) for e in (4e-3, 2e-3)
    ]
    return q, trajs


def test_detect_jumps_bv_regime(double_well, bv_pair):
    jumps = detect_jumps(double_well, bv_pair[-1], "bv_infinity")
    assert len(jumps) == 1
    j = jumps[0]
    assert j.refined_by == "fold_bisection"
    assert j.t_jump == pytest.approx(FOLD_T, abs=1e-4)
    assert j.u_minus[0] == pytest.approx(U_MINUS, abs=5e-3)
    assert j.u_plus[0] == pytest.approx(U_PLUS, abs=1e-4)
    assert j.energy_drop == pytest.approx(0.75, abs=1e-3)
    assert j.mu_atom == j.energy_drop
    # the raw cluster lags the fold
    assert j.t_raw >= j.t_jump
    assert j.window[0] < j.t_raw < j.window[1]


def test_detect_jumps_lambda_regime(double_well, lambda_pair):
    jumps = detect_jumps(double_well, lambda_pair[-1], "finite_lambda", lam=0.5)
    assert len(jumps) == 1
    j = jumps[0]
    assert j.refined_by == "stability_bisection"
    # the branch loses rate-1/2 stability strictly before the fold
    assert 1.0 < j.t_jump < FOLD_T
    assert j.t_jump == pytest.approx(1.3535533906, abs=2e-3)
    assert j.u_minus[0] == pytest.approx(-1.0 / np.sqrt(2.0), abs=5e-3)


def test_detect_jumps_none_on_quadratic(quad_pair):
    q, trajs = quad_pair
    assert detect_jumps(q, trajs[-1], "finite_lambda", lam=1.0) == []


def test_extract_limit_bands_cover_refined_jump(double_well, bv_pair):
    curve = extract_limit(double_well, bv_pair, "bv_infinity")
    assert curve.regime == "bv_infinity"
    assert curve.epsilon == bv_pair[-1].params.epsilon
    assert len(curve.jumps) == 1
    j = curve.jumps[0]
    assert len(curve.bands) == 1
    lo, hi = curve.bands[0]
    assert lo <= j.t_jump <= hi
    # no continuity sample may sit inside the exclusion band
    assert not np.any((curve.times >= lo) & (curve.times <= hi))
    # sided evaluation at the jump
    assert np.array_equal(curve.left_value(j.t_jump), j.u_minus)
    assert np.array_equal(curve.right_value(j.t_jump), j.u_plus)
    assert np.array_equal(curve.value(j.t_jump), j.u_plus)
    # inside the band the curve is represented by the sided states only
    assert np.array_equal(curve.value(0.5 * (j.t_jump + hi)), j.u_plus)
    if lo < j.t_jump:
        assert np.array_equal(curve.value(0.5 * (lo + j.t_jump)), j.u_minus)
    assert curve.drift_bound >= 0.0


def test_extract_limit_validation(double_well, bv_pair):
    with pytest.raises(InvalidParams):
        extract_limit(double_well, bv_pair[:1], "bv_infinity")
    with pytest.raises(InvalidParams):
        extract_limit(double_well, bv_pair[::-1], "bv_infinity")
    # constant-ratio declaration contradicts the epsilon^{3/2} steps
    with pytest.raises(InconsistentSweep):
        extract_limit(double_well, bv_pair, "finite_lambda", lam=0.5)


def test_extract_limit_jump_count_mismatch(double_well, bv_pair):
    # a run stopped before the fold sees no jump at all
    short = run(double_well, SchemeParams(
        epsilon=1e-2, tau=1e-3, u0=bv_pair[0].params.u0, horizon=1.0))
    with pytest.raises(InconsistentSweep):
        extract_limit(double_well, [short, bv_pair[-1]], "bv_infinity")


def test_defect_measure_atoms(double_well, bv_pair):
    curve = extract_limit(double_well, bv_pair, "bv_infinity")
    atoms = defect_measure(curve, double_well)
    assert len(atoms) == 1
    t, mass = atoms[0]
    assert t == curve.jumps[0].t_jump
    assert mass == pytest.approx(0.75, abs=1e-3)

    bad = copy.deepcopy(curve)
    bad.jumps[0].u_minus, bad.jumps[0].u_plus = (
        bad.jumps[0].u_plus, bad.jumps[0].u_minus)
    with pytest.raises(NonpositiveAtom):
        defect_measure(bad, double_well)


def test_jump_record_roundtrip(double_well, bv_pair):
    j = detect_jumps(double_well, bv_pair[-1], "bv_infinity")[0]
    back = JumpRecord.from_dict(j.as_dict())
    assert back.t_jump == j.t_jump
    assert np.array_equal(back.u_minus, j.u_minus)
    assert np.array_equal(back.u_plus, j.u_plus)
    assert back.refined_by == j.refined_by
    assert back.window == j.window
    assert (back.k_start, back.k_end) == (j.k_start, j.k_end)


def test_drift_matches_trapezoid_when_continuous(quad_pair):
    q, trajs = quad_pair
    curve = extract_limit(q, trajs, "finite_lambda")
    assert curve.lam == pytest.approx(1.0)
    f = corrected_energy(curve, q)
    # dF/dt is state-affine and t-free here, so the piecewise rule used by
    # the drift integral must agree with a plain trapezoid on the samples
    y = q.time_derivative(curve.times, curve.states)
    ref = curve.energies - oracles.cumulative_trapezoid(y, curve.times)
    assert np.allclose(f, ref, atol=1e-10)
    assert f_monotonicity(curve, q) <= 1e-6


def test_window_mass_fraction_concentrates_at_jump(double_well, bv_pair):
    traj = bv_pair[-1]
    jumps = detect_jumps(double_well, traj, "bv_infinity")
    frac = window_mass_fraction(traj, jumps)
    assert 0.0 <= frac <= 1.0
    assert frac > 0.5
    assert window_mass_fraction(traj, []) == 0.0


def test_check_stability_both_regimes(double_well, bv_pair, lambda_pair):
    bv_curve = extract_limit(double_well, bv_pair, "bv_infinity")
    g = check_stability(bv_curve, double_well)
    assert 0.0 <= g <= 0.05
    lam_curve = extract_limit(double_well, lambda_pair, "finite_lambda")
    r = check_stability(lam_curve, double_well)
    assert 0.0 <= r <= 1e-4


def test_energy_balance_report(double_well, bv_pair):
    curve = extract_limit(double_well, bv_pair, "bv_infinity")
    rep = check_energy_balance(curve, double_well, grid_size=12)
    assert rep.max_residual <= 2e-2
    assert rep.mean_residual <= rep.max_residual
    assert rep.f_monotonicity_max <= 1e-6
    assert rep.regime == "bv_infinity"
    S = len(rep.grid_times)
    assert rep.residuals.shape == (S, S)
    assert len(rep.residual_triples()) == S * (S + 1) // 2
    # the jump time is always a grid point; s = t there compares atom to cost
    assert np.any(np.isclose(rep.grid_times, curve.jumps[0].t_jump))
    d = rep.as_dict()
    assert {"regime", "max_residual", "stability_violation",
            "f_monotonicity_max"} <= set(d)
    with pytest.raises(InvalidParams):
        check_energy_balance(curve, double_well, cost_values=[0.1, 0.2])
