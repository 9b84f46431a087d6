"""End-to-end experiment pipeline and command line surface."""

import json
import os
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from mmflow import RunManifest, emit_plotdata, load_config, run_experiment
from mmflow.cli import main

BV_CFG = """
name = "tiny_bv"

[model]
kind = "double_well"
horizon = 2.0

[run]
u0 = [-1.324717957244746]
seed = 0

[sweep]
epsilons = [1e-2, 3e-3]
tau_exponent = 1.5
regime = "bv_infinity"

[tolerances]
balance_max = 5e-2
stability_max = 5e-2
mono_max = 1e-6
cost_match = 5e-3

[expect]
jump_count = 1
t_jump = 1.3849001794597505
t_jump_tol = 0.02
u_minus = [-0.5773502691896258]
u_plus = [1.1547005383792517]
state_tol = 0.01
"""

QUAD_CFG = """
name = "tiny_quad"

[model]
kind = "quadratic"
load_const = [0.1]
load_slope = [0.25]

[run]
u0 = [0.1]
seed = 0

[sweep]
epsilons = [4e-3, 2e-3]
regime = "finite_lambda"
lambda = 1.0

[tolerances]
balance_max = 1e-3
stability_max = 1e-4
mono_max = 1e-6

[expect]
jump_count = 0
"""


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("exp")
    cfg = root / "tiny_bv.cfg"
    cfg.write_text(BV_CFG)
    qcfg = root / "tiny_quad.cfg"
    qcfg.write_text(QUAD_CFG)
    out = root / "bv_out"
    config = load_config(cfg)
    manifest = run_experiment(config, str(out))
    return SimpleNamespace(root=root, cfg=cfg, qcfg=qcfg, out=out,
                           config=config, manifest=manifest)


def test_manifest_complete_and_reloadable(work):
    m = work.manifest
    assert m.status == "ok"
    assert m.summary["passed"]
    m.check_complete()
    expected = {"audit", "run_00", "run_01", "curve", "curve_full",
                "costs", "jumps", "balance", "summary"}
    assert expected <= set(m.artifacts)
    assert len(m.runs) == 2
    assert {"package", "python", "numpy"} <= set(m.versions)
    assert "total" in m.timings

    back = RunManifest.load(str(work.out))
    assert back.config_sha256 == work.config.sha256
    assert back.summary == m.summary
    assert back.artifacts == m.artifacts


def test_artifact_contents(work):
    m = work.manifest
    run0 = pd.read_csv(m.path("run_00"))
    assert len(run0) == m.runs[0]["n_steps"] + 1
    assert list(run0.columns) == ["k", "t", "u_0", "F", "grad_norm"]

    curve = pd.read_csv(m.path("curve"))
    assert list(curve.columns) == ["t", "u_0", "F", "f"]

    with open(m.path("jumps")) as fh:
        jumps = json.load(fh)
    assert len(jumps) == 1
    assert {"t_jump", "energy_drop", "cost", "atom_minus_cost"} <= set(jumps[0])
    assert abs(jumps[0]["atom_minus_cost"]) <= 5e-3

    with open(m.path("balance")) as fh:
        bal = json.load(fh)
    assert bal["max_residual"] <= 5e-2
    assert bal["atoms"][0][1] == pytest.approx(0.75, abs=2e-3)

    with open(m.path("audit")) as fh:
        audit = json.load(fh)
    assert audit["coercivity_ok"]

    checks = m.summary["checks"]
    assert all(c["ok"] for c in checks.values())
    assert {"balance_max", "stability", "f_monotonicity", "cost_identity",
            "jump_count", "t_jump", "u_minus", "u_plus"} <= set(checks)


def test_rerun_reproduces_artifacts_bytewise(work):
    out2 = work.root / "bv_out2"
    m2 = run_experiment(work.config, str(out2), workers=3)
    assert set(m2.artifacts) == set(work.manifest.artifacts)
    for name in work.manifest.artifacts:
        a = open(work.manifest.path(name), "rb").read()
        b = open(m2.path(name), "rb").read()
        assert a == b, f"artifact {name} differs between reruns"


def test_emit_plotdata(work):
    files = emit_plotdata(work.manifest)
    names = {os.path.basename(f) for f in files}
    assert names == {"series.csv", "balance_grid.csv", "jumps.csv"}
    series = pd.read_csv(os.path.join(str(work.out), "plotdata", "series.csv"))
    kinds = set(series["series"])
    assert "dissipation_density" in kinds
    assert "curve_u_0" in kinds and "curve_f" in kinds
    assert any(k.startswith("traj_eps0.003") for k in kinds)
    # the dissipation spike must sit inside the detected jump window
    dd = series[series["series"] == "dissipation_density"]
    t_peak = float(dd["t"].iloc[int(np.argmax(dd["value"].to_numpy()))])
    with open(work.manifest.path("jumps")) as fh:
        w = json.load(fh)[0]["window"]
    assert w[0] <= t_peak <= w[1]

    grid = pd.read_csv(os.path.join(str(work.out), "plotdata",
                                    "balance_grid.csv"))
    assert list(grid.columns) == ["s", "t", "value"]
    assert (grid["s"] <= grid["t"] + 1e-12).all()


def test_cli_audit_critical_costs_balance(work, capsys):
    assert main(["audit", "--config", str(work.cfg)]) == 0
    assert "audit ok" in capsys.readouterr().out

    assert main(["critical", "--config", str(work.cfg)]) == 0
    out = capsys.readouterr().out
    assert "critical points" in out

    assert main(["costs", "--config", str(work.cfg),
                 "--out", str(work.out)]) == 0
    assert "gap" in capsys.readouterr().out

    assert main(["balance", "--config", str(work.cfg),
                 "--out", str(work.out)]) == 0
    assert "PASS" in capsys.readouterr().out

    assert main(["plotdata", "--out", str(work.out)]) == 0


def test_cli_simulate_and_sweep(work, capsys, tmp_path):
    out = tmp_path / "quad_out"
    assert main(["simulate", "--config", str(work.qcfg),
                 "--out", str(out)]) == 0
    msg = capsys.readouterr().out
    assert "max residual" in msg
    assert (out / "simulate.csv").exists()
    assert (out / "simulate.json").exists()

    assert main(["sweep", "--config", str(work.qcfg),
                 "--out", str(out)]) == 0
    msg = capsys.readouterr().out
    assert "PASS balance_max" in msg
    assert "jumps: 0" in msg
    assert "summary: PASS" in msg


def test_cli_failure_exit_codes(work, tmp_path, capsys):
    # unattainable tolerance: pipeline completes but the summary fails
    bad = tmp_path / "bad.cfg"
    bad.write_text(QUAD_CFG.replace("balance_max = 1e-3",
                                    "balance_max = 1e-12"))
    assert main(["sweep", "--config", str(bad),
                 "--out", str(tmp_path / "bad_out")]) == 1
    assert "FAIL balance_max" in capsys.readouterr().out

    # invalid parameters surface as exit 2 before any run happens
    broken = tmp_path / "broken.cfg"
    broken.write_text(QUAD_CFG.replace("epsilons = [4e-3, 2e-3]",
                                       "pairs = [[1e-2, 3.0], [1e-3, 3.0]]"))
    assert main(["sweep", "--config", str(broken),
                 "--out", str(tmp_path / "broken_out")]) == 2

    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["balance", "--config", str(work.cfg),
                 "--out", str(tmp_path / "empty_out")]) == 2
