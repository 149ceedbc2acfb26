"""Run orchestration: time loop, step policy, logging, and artifacts.

``simulate`` is the in-memory core used by sweeps and studies; ``run``
wraps it with file outputs (run log CSV, field snapshots, a JSON summary)
and maps outcomes to exit codes: 0 success, 2 config error, 3 solver
failure, 4 instability.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import StateHistory, TimestepResidual, split_fields
from .config import RunConfig, save_config
from .diagnostics import extract_tip
from .errors import ConfigError
from .mesh import StructuredMesh, build_mesh
from .models.alloy import directional_initial_condition, map_u_to_c
from .models.free_growth import seed_initial_condition
from .newton import newton_solve
from .precond import build_precond
from .stepping import ThetaScheme, timescales
from .vtkio import write_snapshot_csv, write_snapshot_vtk

__all__ = ["SimResult", "simulate", "run", "EXIT_OK", "EXIT_CONFIG",
           "EXIT_SOLVER", "EXIT_UNSTABLE"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_UNSTABLE = 4

BLOWUP_LIMIT = 1e6


@dataclass
class SimResult:
    status: str = "ok"
    steps_completed: int = 0
    final_time: float = 0.0
    state: np.ndarray | None = None
    records: list = field(default_factory=list)
    timescales: dict = field(default_factory=dict)
    loop_seconds: float = 0.0
    total_newton: int = 0
    total_gmres: int = 0
    failure_detail: str = ""
    mesh: StructuredMesh | None = None

    @property
    def exit_code(self) -> int:
        return {"ok": EXIT_OK, "config_error": EXIT_CONFIG,
                "solver_failure": EXIT_SOLVER, "unstable": EXIT_UNSTABLE}[self.status]

    def mean_gmres_per_step(self) -> float:
        return self.total_gmres / max(self.steps_completed, 1)

    def mean_newton_per_step(self) -> float:
        return self.total_newton / max(self.steps_completed, 1)


def initial_state(cfg: RunConfig, mesh: StructuredMesh) -> np.ndarray:
    if cfg.model == "free_growth":
        return seed_initial_condition(mesh, cfg.free_growth)
    return directional_initial_condition(
        mesh, cfg.alloy, amplitude=cfg.perturbation, seed=cfg.seed,
        smooth=cfg.smooth_interface,
    )


def _total_solute(mesh, kernel, state) -> float:
    """Composition integral with the assembly quadrature."""
    from .assembly import frozen_quad_state

    qs = frozen_quad_state(mesh, kernel, state, ThetaScheme(0.5, 1.0, 0))
    phi, u = qs.val_new
    c = map_u_to_c(u, phi, kernel.params)
    return float(np.sum(c @ mesh.basis().jxw))


def _heat_balance(mesh, kernel, states, scheme, fnorm) -> tuple[float, float]:
    """Discrete heat/phase balance residual of a converged step and its bound."""
    w = mesh.integration_weights()
    nf = kernel.n_fields
    phi_new, t_new = split_fields(states.new, nf)
    phi_old, t_old = split_fields(states.old, nf)
    phi_prev = split_fields(states.prev, nf)[0]
    th = scheme.theta
    lat = kernel.params.latent_ratio
    lhs = w @ (t_new - t_old)
    rhs = lat * (th * (w @ (phi_new - phi_old)) + (1 - th) * (w @ (phi_old - phi_prev)))
    bound = 10.0 * np.sqrt(states.new.size) * max(fnorm, np.finfo(float).tiny)
    return float(lhs - rhs), float(bound)


def _advance(mesh, kernel, cfg, scheme, old, prev, precond):
    res = TimestepResidual(mesh, kernel, old, prev, scheme)
    apply_m = precond.apply if precond is not None else None
    u_new, report = newton_solve(res, old, cfg.solver, precond_apply=apply_m)
    return u_new, report


def _advance_substepped(mesh, kernel, cfg, theta, n, substeps, old, prev):
    """Cover one nominal dt interval with damped implicit substeps."""
    sub_dt = cfg.time.dt / substeps
    state, before = old, prev
    total = None
    for m in range(substeps):
        scheme = ThetaScheme(theta, sub_dt, n * substeps + m)
        precond = None
        if cfg.precond.enabled and cfg.precond.kind != "identity":
            precond = build_precond(mesh, kernel, state, scheme, cfg.precond)
        u_new, rep = _advance(mesh, kernel, cfg, scheme, state, before, precond)
        if total is None:
            total = rep
        else:
            total.iterations += rep.iterations
            total.gmres_iterations = total.gmres_iterations + rep.gmres_iterations
            total.residual_norms = total.residual_norms + rep.residual_norms
            total.step_lengths = total.step_lengths + rep.step_lengths
            total.final_norm = rep.final_norm
            total.converged = rep.converged
            total.failure_reason = rep.failure_reason
        if not rep.converged:
            break
        before, state = state, u_new
    return state, total


def simulate(cfg: RunConfig, snapshot_cb=None) -> SimResult:
    """Integrate the configured model to t_final with fixed dt."""
    cfg.validate()
    out = SimResult()
    mesh = build_mesh(cfg.mesh.dimension, cfg.mesh.extents, cfg.mesh.counts,
                      cfg.mesh.order)
    out.mesh = mesh
    kernel = cfg.kernel()
    h = min(mesh.spacing)
    report = timescales(kernel.scales(), h, cfg.time.dt, dim=mesh.dim)
    out.timescales = report.as_dict()

    nsteps = int(round(cfg.time.t_final / cfg.time.dt))
    if nsteps < 1 or abs(nsteps * cfg.time.dt - cfg.time.t_final) > 1e-9 * max(
        cfg.time.t_final, 1.0
    ):
        nsteps = int(np.ceil(cfg.time.t_final / cfg.time.dt - 1e-12))

    state = initial_state(cfg, mesh)
    prev = state.copy()
    level = kernel.contour_level
    track_tip = mesh.dim == 2
    is_free = cfg.model == "free_growth"

    t_loop = time.perf_counter()
    for n in range(nsteps):
        theta = cfg.time.theta
        substeps = 1
        # startup damping only matters for the implicit family; explicit
        # runs stay explicit so stability studies measure the pure method
        if n < cfg.time.startup_steps and 0.0 < theta < 1.0:
            theta = cfg.time.startup_theta
            if cfg.time.startup_dt > 0.0:
                substeps = max(1, int(np.ceil(cfg.time.dt / cfg.time.startup_dt)))

        if substeps > 1:
            u_new, rep = _advance_substepped(
                mesh, kernel, cfg, theta, n, substeps, state, prev
            )
        else:
            scheme = ThetaScheme(theta, cfg.time.dt, n)
            precond = None
            if cfg.precond.enabled and cfg.precond.kind != "identity":
                precond = build_precond(mesh, kernel, state, scheme, cfg.precond)
            u_new, rep = _advance(mesh, kernel, cfg, scheme, state, prev, precond)

            if not rep.converged and cfg.retry_halve_dt:
                half = ThetaScheme(cfg.time.theta, cfg.time.dt / 2.0, 2 * n)
                mid, rep1 = _advance(mesh, kernel, cfg, half, state, prev, precond)
                if rep1.converged:
                    half2 = ThetaScheme(cfg.time.theta, cfg.time.dt / 2.0, 2 * n + 1)
                    u_new, rep2 = _advance(mesh, kernel, cfg, half2, mid, state,
                                           precond)
                    if rep2.converged:
                        rep = rep2
                        rep.iterations += rep1.iterations
                        rep.gmres_iterations = (
                            rep1.gmres_iterations + rep2.gmres_iterations
                        )

        finite = np.isfinite(u_new).all()
        if not finite or np.max(np.abs(u_new)) > BLOWUP_LIMIT or (
            not rep.converged and not np.isfinite(rep.final_norm)
        ):
            out.status = "unstable"
            out.failure_detail = f"non-finite or unbounded fields at step {n}"
            break
        if not rep.converged:
            out.status = "solver_failure"
            out.failure_detail = (
                f"step {n}: {rep.failure_reason or 'nonlinear solve failed'}"
            )
            break

        rec = {
            "step": n,
            "time": scheme.t_new,
            "newton_iters": rep.iterations,
            "gmres_iters": rep.total_gmres,
            "lambda_history": ";".join(repr(s) for s in rep.step_lengths),
            "fnorm0": rep.initial_norm,
            "fnorm": rep.final_norm,
        }
        if is_free:
            bal, bound = _heat_balance(
                mesh, kernel, StateHistory(u_new, state, prev), scheme,
                rep.final_norm,
            )
            rec["balance"] = bal
            rec["balance_bound"] = bound
        else:
            rec["total_solute"] = _total_solute(mesh, kernel, u_new)
        if track_tip:
            tip, found = extract_tip(u_new, mesh, level, kernel.n_fields)
            rec["x_tip"] = tip if found else float("nan")
        out.records.append(rec)
        out.total_newton += rep.iterations
        out.total_gmres += rep.total_gmres

        prev = state
        state = u_new
        out.steps_completed = n + 1
        out.final_time = scheme.t_new
        if snapshot_cb is not None:
            snapshot_cb(n + 1, scheme.t_new, state, mesh)
    out.loop_seconds = time.perf_counter() - t_loop
    out.state = state
    return out


def _field_dict(cfg: RunConfig, kernel, state) -> dict:
    fields = dict(zip(kernel.field_names, split_fields(state, kernel.n_fields)))
    if cfg.model == "alloy":
        fields["composition"] = map_u_to_c(
            fields["solute"], fields["phi"], kernel.params
        )
    return fields


def _write_log(path, cfg, result) -> None:
    keys = ["step", "time", "newton_iters", "gmres_iters", "lambda_history",
            "fnorm0", "fnorm", "x_tip"]
    keys += ["balance", "balance_bound"] if cfg.model == "free_growth" else [
        "total_solute"
    ]
    with open(path, "w") as fh:
        fh.write(f"# model = {cfg.model}\n")
        for k, v in result.timescales.items():
            fh.write(f"# {k} = {repr(v)}\n")
        fh.write(f"# theta = {repr(cfg.time.theta)}\n")
        fh.write(f"# dt = {repr(cfg.time.dt)}\n")
        fh.write(",".join(keys) + "\n")
        for rec in result.records:
            row = []
            for k in keys:
                v = rec.get(k, "")
                row.append(repr(v) if isinstance(v, float) else str(v))
            fh.write(",".join(row) + "\n")


def run(cfg: RunConfig, out_dir: str | None = None) -> tuple[int, SimResult]:
    """Execute a configured run and write its artifacts."""
    try:
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG, SimResult(status="config_error", failure_detail=str(exc))

    directory = out_dir or cfg.output.directory
    os.makedirs(directory, exist_ok=True)
    save_config(cfg, os.path.join(directory, "config.used"))
    kernel = cfg.kernel()

    snapshots = []

    def snapshot_cb(step, t, state, mesh):
        every = cfg.output.snapshot_every
        if every > 0 and step % every == 0:
            _emit_snapshot(cfg, kernel, mesh, directory, step, t, state, snapshots)

    result = simulate(cfg, snapshot_cb=snapshot_cb)

    ts = result.timescales
    print(
        f"timescales: dt_phase={ts['dt_phase']:.4g} dt_solute={ts['dt_solute']:.4g} "
        f"dt_heat={ts['dt_heat']:.4g} kappa={ts['kappa']:.4g}"
    )
    if result.state is not None and result.mesh is not None:
        _emit_snapshot(cfg, kernel, result.mesh, directory, result.steps_completed,
                       result.final_time, result.state, snapshots)
    _write_log(os.path.join(directory, cfg.output.log_name), cfg, result)

    summary = {
        "model": cfg.model,
        "status": result.status,
        "failure_detail": result.failure_detail,
        "steps": result.steps_completed,
        "final_time": result.final_time,
        "total_newton": result.total_newton,
        "total_gmres": result.total_gmres,
        "mean_newton_per_step": result.mean_newton_per_step(),
        "mean_gmres_per_step": result.mean_gmres_per_step(),
        "timescales": result.timescales,
        "wall_seconds": result.loop_seconds,
        "snapshots": snapshots,
        "unknowns": 0 if result.state is None else int(result.state.size),
    }
    with open(os.path.join(directory, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)

    if result.status == "ok":
        print(f"completed {result.steps_completed} steps to t = {result.final_time:g}")
    else:
        print(f"{result.status}: {result.failure_detail}")
    return result.exit_code, result


def _emit_snapshot(cfg, kernel, mesh, directory, step, t, state, registry) -> None:
    fields = _field_dict(cfg, kernel, state)
    base = os.path.join(directory, f"snapshot_{step:06d}")
    write_snapshot_csv(mesh, fields, base + ".csv")
    if cfg.output.write_vtk:
        write_snapshot_vtk(mesh, fields, base + ".vtk", comment=f"t = {repr(t)}")
    registry.append({"step": step, "time": t, "base": os.path.basename(base)})
