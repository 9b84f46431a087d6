"""Incremental scheme: step exactness, run certificates, interpolants."""

import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmflow import (
    DoubleWell,
    EstimateViolation,
    InvalidParams,
    QuadraticLoad,
    SchemeParams,
    Trajectory,
    interpolant_mismatch,
    interpolants,
    run,
    step,
    verify_energy_estimates,
)


def test_step_exact_on_quadratic():
    # grad = u - l(t); prox root is (l(t) + w u_prev) / (1 + w)
    q = QuadraticLoad([0.0], [1.0])
    sol = step(q, 2.0, np.array([-1.0]), epsilon=1.0, tau=2.0)
    assert abs(sol.x[0] - 1.0) < 1e-10
    assert sol.residual <= 1e-9
    assert sol.improvement >= -1e-12


def test_params_validation():
    with pytest.raises(InvalidParams):
        SchemeParams(epsilon=0.0, tau=0.1, u0=[0.0])
    with pytest.raises(InvalidParams):
        SchemeParams(epsilon=1e-3, tau=-0.1, u0=[0.0])
    with pytest.raises(InvalidParams):
        SchemeParams(epsilon=1e-3, tau=3.0, u0=[0.0], horizon=2.0)
    with pytest.raises(InvalidParams):
        SchemeParams(epsilon=1e-3, tau=0.1, u0=[0.0], resolution=2)
    p = SchemeParams(epsilon=1e-3, tau=0.5, u0=[0.0])
    assert p.n_steps == 4
    assert p.weight == pytest.approx(2e-3)


def test_run_rejects_bad_initial_state(double_well):
    with pytest.raises(InvalidParams):
        run(double_well, SchemeParams(epsilon=1e-2, tau=0.5, u0=[0.0, 0.0]))
    with pytest.raises(InvalidParams):
        run(double_well, SchemeParams(epsilon=1e-2, tau=0.5, u0=[99.0]))


def test_run_records_consistent_certificates(double_well, bv_pair):
    traj = bv_pair[0]
    p = traj.params
    m = traj.n_steps
    assert traj.times.shape == (m + 1,)
    assert traj.states.shape == (m + 1, 1)
    assert traj.times[0] == 0.0
    assert np.allclose(np.diff(traj.times), p.tau)
    assert np.array_equal(traj.states[0], p.u0)

    assert float(traj.residuals.max()) <= p.newton_tol
    assert float(traj.slacks.min()) >= -1e-9

    # stored energies and gradient norms must match direct re-evaluation
    f = double_well.energy(traj.times, traj.states)
    assert np.allclose(traj.energies, f, atol=1e-10)
    g = np.linalg.norm(double_well.gradient(traj.times, traj.states), axis=1)
    assert np.allclose(traj.grad_norms, g, atol=1e-10)

    meta = traj.metadata()
    assert meta["n_steps"] == m
    assert meta["max_residual"] <= p.newton_tol


def test_trajectory_frame_and_csv(bv_pair, tmp_path):
    traj = bv_pair[0]
    frame = traj.to_frame()
    assert list(frame.columns) == ["k", "t", "u_0", "F", "grad_norm"]
    assert len(frame) == traj.n_steps + 1
    out = tmp_path / "traj.csv"
    traj.to_csv(out)
    import pandas as pd

    back = pd.read_csv(out)
    assert len(back) == len(frame)
    assert np.allclose(back["u_0"].to_numpy(), traj.states[:, 0])


def test_interpolants_left_continuous_piecewise(bv_pair):
    traj = bv_pair[0]
    itp = interpolants(traj)
    times, states, tau = traj.times, traj.states, traj.params.tau
    for k in (0, 1, traj.n_steps // 2, traj.n_steps):
        assert np.array_equal(itp.piecewise(times[k]), states[k])
    # on (t_k, t_{k+1}] the value is u_{k+1}
    k = traj.n_steps // 3
    assert np.array_equal(itp.piecewise(times[k] + 0.25 * tau), states[k + 1])
    assert np.array_equal(itp.piecewise(times[k] + tau), states[k + 1])


def test_interpolants_affine_joins_nodes(bv_pair):
    traj = bv_pair[0]
    itp = interpolants(traj)
    times, states = traj.times, traj.states
    k = traj.n_steps // 2
    assert np.allclose(itp.affine(times[k]), states[k], atol=1e-12)
    mid = 0.5 * (times[k] + times[k + 1])
    assert np.allclose(itp.affine(mid), 0.5 * (states[k] + states[k + 1]), atol=1e-12)
    # vectorized evaluation keeps the (K, n) shape
    ts = np.linspace(0.0, traj.params.horizon, 37)
    assert itp.affine(ts).shape == (37, 1)
    assert itp.piecewise(ts).shape == (37, 1)


def test_interpolant_mismatch_matches_dense_quadrature():
    params = SchemeParams(epsilon=1.0, tau=0.25, u0=[0.0], horizon=2.0)
    rng = np.random.default_rng(7)
    m = params.n_steps
    times = params.tau * np.arange(m + 1)
    states = rng.normal(size=(m + 1, 1))
    z = np.zeros(m)
    traj = Trajectory(
        params=params, times=times, states=states,
        energies=np.zeros(m + 1), grad_norms=np.zeros(m + 1),
        residuals=z, slacks=z, tie_break_count=0, wall_time=0.0,
    )
    got = interpolant_mismatch(traj)

    itp = interpolants(traj)
    sup_dense = 0.0
    l2_dense = 0.0
    kq = 4000
    for k in range(m):
        # midpoints stay inside the open interval, where both interpolants
        # are unambiguous
        ts = times[k] + (np.arange(kq) + 0.5) * params.tau / kq
        diff = np.linalg.norm(itp.piecewise(ts) - itp.affine(ts), axis=1)
        sup_dense = max(sup_dense, float(diff.max()))
        l2_dense += float((diff**2).sum() * params.tau / kq)
    l2_dense = np.sqrt(l2_dense)

    assert got["sup"] == pytest.approx(sup_dense, rel=2.0 / kq)
    assert got["l2"] == pytest.approx(l2_dense, rel=1e-6)


def test_verify_energy_estimates_passes_on_real_run(double_well, bv_pair):
    traj = bv_pair[0]
    rep = verify_energy_estimates(double_well, traj)
    assert rep.ok
    assert rep.min_step_slack >= -1e-9
    assert np.allclose(rep.step_slacks, traj.slacks, atol=1e-9)
    assert rep.dissipation_total == pytest.approx(
        float(traj.dissipation_terms().sum())
    )
    d = rep.as_dict()
    assert set(d) == {
        "min_step_slack", "min_cumulative_residual", "dissipation_total", "ok",
    }


def test_verify_energy_estimates_catches_corruption(double_well, bv_pair):
    bad = copy.deepcopy(bv_pair[0])
    bad.states[bad.n_steps // 2] += 0.5
    with pytest.raises(EstimateViolation):
        verify_energy_estimates(double_well, bad)


@settings(max_examples=60, deadline=None)
@given(
    u=st.floats(-1.3, 1.4),
    t=st.floats(0.0, 2.0),
    w=st.floats(0.5, 100.0),
)
def test_step_certificates_hold_everywhere(u, t, w):
    """Any prox step improves on staying put and satisfies its tolerance."""
    dw = DoubleWell()
    sol = step(dw, t, np.array([u]), epsilon=w, tau=1.0)
    assert sol.residual <= 1e-9
    assert sol.improvement >= -1e-12
    assert sol.objective <= dw.eval(t, np.array([u])) + 1e-12
