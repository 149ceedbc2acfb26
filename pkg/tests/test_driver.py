import json
import os

import numpy as np
import pytest

from undercool.assembly import split_fields
from undercool.config import (
    MeshConfig,
    OutputConfig,
    RunConfig,
    TimeConfig,
    default_config,
    load_config,
    parse_overrides,
    save_config,
)
from undercool.driver import EXIT_CONFIG, EXIT_SOLVER, EXIT_UNSTABLE, run, simulate
from undercool.errors import ConfigError


def small_free_growth(tmp_path, **time_kw):
    cfg = RunConfig()
    cfg.mesh = MeshConfig(dimension=2, extents=(0.96, 0.96), counts=(32, 32))
    cfg.time = TimeConfig(**({"theta": 0.5, "dt": 1e-5, "t_final": 1e-4} | time_kw))
    cfg.output = OutputConfig(directory=str(tmp_path / "out"))
    return cfg


def test_config_round_trip_lossless(tmp_path):
    cfg = default_config("alloy")
    cfg.seed = 7
    cfg.solver.eta0 = 0.05
    cfg.precond.kind = "sgs"
    path = tmp_path / "case.cfg"
    save_config(cfg, path)
    cfg2 = load_config(str(path))
    assert save_config(cfg2) == save_config(cfg)
    assert cfg2.alloy.partition == cfg.alloy.partition
    assert cfg2.solver.eta0 == 0.05
    assert cfg2.precond.kind == "sgs"


def test_overrides_and_errors():
    cfg = RunConfig()
    parse_overrides(cfg, ["time.dt=1e-3", "mesh.counts=10, 20", "run.seed=5",
                          "precond.enabled=false"])
    assert cfg.time.dt == 1e-3
    assert cfg.mesh.counts == (10, 20)
    assert cfg.seed == 5
    assert cfg.precond.enabled is False
    with pytest.raises(ConfigError):
        parse_overrides(cfg, ["nosection.key=1"])
    with pytest.raises(ConfigError):
        parse_overrides(cfg, ["time.notakey=1"])
    with pytest.raises(ConfigError):
        parse_overrides(cfg, ["badpair"])


def test_config_validation_failures():
    cfg = RunConfig()
    cfg.model = "plasma"
    with pytest.raises(ConfigError):
        cfg.validate()
    cfg = RunConfig()
    cfg.mesh.counts = (4,)
    with pytest.raises(ConfigError):
        cfg.validate()
    cfg = RunConfig()
    cfg.time.theta = 2.0
    with pytest.raises(ConfigError):
        cfg.validate()


def test_free_growth_run_grows_and_writes_artifacts(tmp_path):
    cfg = small_free_growth(tmp_path)
    cfg.output.snapshot_every = 5
    code, res = run(cfg)
    assert code == 0
    assert res.steps_completed == 10
    out = cfg.output.directory
    names = sorted(os.listdir(out))
    assert "runlog.csv" in names and "summary.json" in names
    assert "config.used" in names
    assert "snapshot_000005.csv" in names and "snapshot_000010.vtk" in names
    with open(os.path.join(out, "summary.json")) as fh:
        summary = json.load(fh)
    assert summary["status"] == "ok"
    assert summary["steps"] == 10
    # undercooled seed grows
    phi_final = split_fields(res.state, 2)[0]
    from undercool.driver import initial_state

    phi0 = split_fields(initial_state(cfg, res.mesh), 2)[0]
    assert phi_final.sum() > phi0.sum()
    # run log header carries the timescale report
    with open(os.path.join(out, "runlog.csv")) as fh:
        head = fh.read()
    assert "# dt_heat" in head and "# dt_phase" in head


def test_runlog_and_snapshots_bit_deterministic(tmp_path):
    outputs = []
    for name in ("a", "b"):
        cfg = small_free_growth(tmp_path)
        cfg.output.directory = str(tmp_path / name)
        cfg.output.snapshot_every = 10
        code, _ = run(cfg)
        assert code == 0
        with open(os.path.join(cfg.output.directory, "runlog.csv"), "rb") as fh:
            log = fh.read()
        with open(
            os.path.join(cfg.output.directory, "snapshot_000010.csv"), "rb"
        ) as fh:
            snap = fh.read()
        outputs.append((log, snap))
    assert outputs[0] == outputs[1]


def test_heat_balance_identity_recorded(tmp_path):
    cfg = small_free_growth(tmp_path, dt=2.25e-4, t_final=2.25e-4 * 6)
    res = simulate(cfg)
    assert res.status == "ok"
    from undercool.diagnostics import conservation_report

    rep = conservation_report(res.records, "free_growth")
    assert rep["all_within_bound"]


def test_explicit_instability_flagged(tmp_path):
    # ten times the heat-diffusion limit blows up quickly under explicit
    # stepping and must be reported as instability, not solver failure
    cfg = small_free_growth(tmp_path, theta=0.0, dt=5.625e-4, t_final=5.625e-4 * 50)
    code, res = run(cfg)
    assert code == EXIT_UNSTABLE
    assert res.status == "unstable"
    assert res.steps_completed < 50


def test_solver_failure_exit_and_retry_policy(tmp_path):
    cfg = small_free_growth(tmp_path, dt=2.25e-4, t_final=2.25e-4 * 2)
    cfg.solver.max_iterations = 1  # starve the nonlinear solve
    cfg.solver.rel_tol = 1e-14
    code, res = run(cfg)
    assert code == EXIT_SOLVER
    assert res.status == "solver_failure"
    # halving retry gives the step two attempts; still starved, still fails
    cfg2 = small_free_growth(tmp_path, dt=2.25e-4, t_final=2.25e-4 * 2)
    cfg2.output.directory = str(tmp_path / "retry")
    cfg2.solver.max_iterations = 1
    cfg2.solver.rel_tol = 1e-14
    cfg2.retry_halve_dt = True
    code2, res2 = run(cfg2)
    assert code2 == EXIT_SOLVER


def test_config_error_exit_code(tmp_path):
    cfg = small_free_growth(tmp_path)
    cfg.time.dt = -1.0
    code, res = run(cfg)
    assert code == EXIT_CONFIG


def test_alloy_short_run_stays_bounded(tmp_path):
    cfg = default_config("alloy")
    cfg.mesh = MeshConfig(dimension=2, extents=(102.4, 25.6), counts=(128, 32))
    cfg.time = TimeConfig(theta=0.5, dt=0.002, t_final=0.02)
    cfg.output.directory = str(tmp_path / "alloy")
    res = simulate(cfg)
    assert res.status == "ok"
    assert res.steps_completed == 10
    phi = split_fields(res.state, 2)[0]
    assert np.abs(phi).max() <= 1.0 + 1e-6
    assert np.isfinite(res.state).all()


def test_cli_run_and_exit_codes(tmp_path, capsys):
    from undercool.cli import main

    out = str(tmp_path / "cli_out")
    rc = main([
        "run",
        "--set", "mesh.extents=0.48,0.48",
        "--set", "mesh.counts=16,16",
        "--set", "time.dt=1e-5",
        "--set", "time.t_final=3e-5",
        "--out", out,
    ])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "summary.json"))
    rc2 = main(["run", "--set", "time.dt=-1"])
    assert rc2 == 2


def test_cli_converge_subcommand(tmp_path):
    from undercool.cli import main

    out = str(tmp_path / "conv")
    rc = main([
        "converge",
        "--set", "mesh.extents=0.48,0.48",
        "--set", "mesh.counts=16,16",
        "--dts", "4e-5,2e-5,1e-5",
        "--t-end", "2e-4",
        "--ref-dt", "2.5e-6",
        "--out", out,
    ])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "convergence.csv"))


def test_cli_sweep_subcommand(tmp_path):
    from undercool.cli import main

    out = str(tmp_path / "sw")
    rc = main([
        "sweep",
        "--set", "mesh.extents=0.48,0.48",
        "--set", "mesh.counts=16,16",
        "--dts", "2.25e-4",
        "--t-final", "6.75e-4",
        "--precond", "on",
        "--out", out,
    ])
    assert rc == 0
    path = os.path.join(out, "sweep.csv")
    assert os.path.exists(path)
    with open(path) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0].startswith("dt,kappa,precond,status")
    assert len(lines) == 2


def test_vtk_outputs_parse_back(tmp_path):
    cfg = small_free_growth(tmp_path, t_final=2e-5)
    code, res = run(cfg)
    assert code == 0
    vtk = os.path.join(cfg.output.directory, "snapshot_000002.vtk")
    with open(vtk) as fh:
        text = fh.read().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert "DATASET STRUCTURED_GRID" in text
    dims = [l for l in text if l.startswith("DIMENSIONS")][0].split()
    assert dims[1:] == ["33", "33", "1"]
    npts = res.mesh.n_nodes
    pts_idx = text.index(f"POINTS {npts} double")
    assert f"POINT_DATA {npts}" in text
    scalars = [l for l in text if l.startswith("SCALARS")]
    assert any("phi" in s for s in scalars)
    # mesh export variant
    from undercool.vtkio import write_mesh_vtk

    mesh_path = str(tmp_path / "mesh.vtk")
    write_mesh_vtk(res.mesh, mesh_path)
    with open(mesh_path) as fh:
        mext = fh.read()
    assert "DATASET UNSTRUCTURED_GRID" in mext
    assert f"CELLS {res.mesh.n_elements} {res.mesh.n_elements * 5}" in mext
