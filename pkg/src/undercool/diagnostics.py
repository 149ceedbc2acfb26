"""Verification metrics: temporal-order fits, tip tracking, conservation.

These work on nodal states and per-step run records; they are deliberately
independent of the solver internals so they can also post-process stored
output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import split_fields
from .mesh import StructuredMesh

__all__ = [
    "ConvergenceStudy",
    "TipTrace",
    "state_error",
    "fit_order",
    "extract_tip",
    "interface_positions",
    "tip_radius_profile",
    "conservation_report",
]


def state_error(u: np.ndarray, u_ref: np.ndarray) -> float:
    """Euclidean norm of the difference over all unknowns."""
    if u.shape != u_ref.shape:
        raise ValueError("states have different sizes")
    return float(np.linalg.norm(u - u_ref))


@dataclass
class ConvergenceStudy:
    dts: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def add(self, dt: float, error: float) -> None:
        self.dts.append(float(dt))
        self.errors.append(float(error))

    @property
    def order(self) -> float:
        return fit_order(self)


def fit_order(study) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    dts = np.asarray(study.dts, dtype=float)
    errs = np.asarray(study.errors, dtype=float)
    if dts.size < 3:
        raise ValueError("order fit needs at least 3 points")
    if np.any(errs <= 0.0) or np.any(dts <= 0.0):
        raise ValueError("order fit needs positive timesteps and errors")
    slope, _ = np.polyfit(np.log(dts), np.log(errs), 1)
    return float(slope)


def _scan_row(mesh: StructuredMesh, phi: np.ndarray):
    """Nodal x positions and phi values along the first grid row (y = 0...)."""
    nx = mesh.node_shape[0]
    idx = np.arange(nx)
    return mesh.coords[idx, 0], phi[idx]


def extract_tip(
    state: np.ndarray, mesh: StructuredMesh, level: float, n_fields: int = 2
):
    """Interface position along the growth axis.

    Scans the x-axis boundary row for the last crossing of phi through
    ``level`` and interpolates it linearly.  Returns (x_tip, found).
    """
    phi = split_fields(state, n_fields)[0]
    xs, vals = _scan_row(mesh, phi)
    d = vals - level
    sign_change = d[:-1] * d[1:] < 0.0
    exact = np.nonzero(d == 0.0)[0]
    idx = np.nonzero(sign_change)[0]
    if idx.size == 0:
        if exact.size:
            return float(xs[exact[-1]]), True
        return float(xs[0]), False
    i = idx[-1]
    frac = d[i] / (d[i] - d[i + 1])
    return float(xs[i] + frac * (xs[i + 1] - xs[i])), True


def interface_positions(
    state: np.ndarray, mesh: StructuredMesh, level: float, n_fields: int = 2
) -> np.ndarray:
    """Per-transverse-row interface x positions (last crossing per row).

    Rows without a crossing report the domain start.  2D only.
    """
    phi = split_fields(state, n_fields)[0]
    nx, ny = mesh.node_shape[0], int(np.prod(mesh.node_shape[1:]))
    vals = phi.reshape(ny, nx)
    xs = mesh.coords[:nx, 0]
    d = vals - level
    out = np.full(ny, xs[0])
    change = d[:, :-1] * d[:, 1:] < 0.0
    for r in range(ny):
        idx = np.nonzero(change[r])[0]
        if idx.size:
            i = idx[-1]
            frac = d[r, i] / (d[r, i] - d[r, i + 1])
            out[r] = xs[i] + frac * (xs[i + 1] - xs[i])
    return out


@dataclass
class TipTrace:
    """Tip position samples and the derived dimensionless velocity.

    ``velocity_scale`` multiplies dx/dt (capillary length over diffusivity
    for the free-growth benchmark).
    """

    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    velocity_scale: float = 1.0

    def add(self, t: float, x: float) -> None:
        self.times.append(float(t))
        self.positions.append(float(x))

    def steady_velocity(self, window: float = 0.25):
        """Dimensionless velocity over the trailing ``window`` fraction.

        The slope comes from a least-squares fit; steadiness compares the
        slopes of the window's quarters and requires their spread to stay
        within 5 percent of the mean.  Returns (velocity, steady, spread).
        """
        t = np.asarray(self.times)
        x = np.asarray(self.positions)
        if t.size < 8:
            raise ValueError("tip trace too short for a steady-state fit")
        i0 = int(np.floor(t.size * (1.0 - window)))
        t, x = t[i0:], x[i0:]
        slope = np.polyfit(t, x, 1)[0]
        quarters = np.array_split(np.arange(t.size), 4)
        qs = [np.polyfit(t[q], x[q], 1)[0] for q in quarters if q.size >= 2]
        spread = (max(qs) - min(qs)) / abs(np.mean(qs)) if np.mean(qs) != 0 else np.inf
        return float(slope * self.velocity_scale), bool(spread < 0.05), float(spread)


def tip_radius_profile(
    state: np.ndarray,
    mesh: StructuredMesh,
    level: float,
    window: float,
    n_fields: int = 2,
) -> np.ndarray:
    """Interface contour near the tip, in tip-centered coordinates.

    Collects level crossings along every grid row and column whose x lies
    within ``window`` behind the tip, and returns them as an (n, 2) array of
    (x - x_tip, y) points sorted by y.
    """
    x_tip, found = extract_tip(state, mesh, level, n_fields)
    phi = split_fields(state, n_fields)[0]
    nx, ny = mesh.node_shape[0], mesh.node_shape[1]
    vals = phi.reshape(ny, nx)
    xs = mesh.coords[:nx, 0]
    ys = mesh.coords[::nx, 1][:ny]
    pts = []
    d = vals - level
    # row crossings give x(y)
    for r in range(ny):
        dr = d[r]
        idx = np.nonzero(dr[:-1] * dr[1:] < 0.0)[0]
        for i in idx:
            frac = dr[i] / (dr[i] - dr[i + 1])
            xc = xs[i] + frac * (xs[i + 1] - xs[i])
            if x_tip - window <= xc <= x_tip + 1e-12:
                pts.append((xc - x_tip, ys[r]))
    # column crossings give y(x) for the flanks
    for c in range(nx):
        if not (x_tip - window <= xs[c] <= x_tip):
            continue
        dc = d[:, c]
        idx = np.nonzero(dc[:-1] * dc[1:] < 0.0)[0]
        for i in idx:
            frac = dc[i] / (dc[i] - dc[i + 1])
            yc = ys[i] + frac * (ys[i + 1] - ys[i])
            pts.append((xs[c] - x_tip, yc))
    arr = np.array(sorted(pts, key=lambda p: p[1])) if pts else np.zeros((0, 2))
    return arr


def scalability_sweep(cfg, dts, precond_modes=("on", "off"), t_final=None) -> list[dict]:
    """Integrate the same physics to a fixed final time for each timestep
    size, with and without preconditioning, and tabulate cost metrics.

    Returns one row per (dt, preconditioning) with CPU seconds, average
    GMRES and Newton counts per step, and a status flag; diverged runs are
    flagged and carry no averages.
    """
    import copy

    from .driver import simulate
    from .stepping import timescales

    rows = []
    for dt in dts:
        for mode in precond_modes:
            run_cfg = copy.deepcopy(cfg)
            run_cfg.time.dt = float(dt)
            if t_final is not None:
                run_cfg.time.t_final = float(t_final)
            run_cfg.precond.enabled = mode == "on"
            result = simulate(run_cfg)
            kernel = run_cfg.kernel()
            h = min(result.mesh.spacing) if result.mesh else min(
                e / c for e, c in zip(run_cfg.mesh.extents, run_cfg.mesh.counts)
            )
            kappa = timescales(kernel.scales(), h, float(dt)).kappa
            row = {
                "dt": float(dt),
                "kappa": kappa,
                "precond": mode,
                "status": result.status,
                "steps": result.steps_completed,
                "cpu_seconds": result.loop_seconds,
                "avg_gmres_per_step": result.mean_gmres_per_step()
                if result.status == "ok"
                else float("nan"),
                "avg_newton_per_step": result.mean_newton_per_step()
                if result.status == "ok"
                else float("nan"),
            }
            rows.append(row)
    return rows


def write_sweep_csv(rows: list[dict], path: str) -> None:
    keys = ["dt", "kappa", "precond", "status", "steps", "cpu_seconds",
            "avg_gmres_per_step", "avg_newton_per_step"]
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(
                repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k in keys
            ) + "\n")


def convergence_study(cfg, dts, t_end, ref_dt=None) -> ConvergenceStudy:
    """Temporal-error study against a fine-timestep trapezoidal reference.

    All runs share the spatial mesh and are compared at ``t_end`` (which
    every dt in the sweep must divide).  The reference uses dt_min/8 unless
    ``ref_dt`` is given, and always runs with theta = 1/2.
    """
    import copy

    from .driver import simulate

    dts = sorted(float(d) for d in dts)
    for d in dts:
        steps = t_end / d
        if abs(steps - round(steps)) > 1e-8 * max(steps, 1.0):
            raise ValueError(f"dt {d} does not divide the comparison time {t_end}")
    ref = float(ref_dt) if ref_dt is not None else dts[0] / 8.0

    ref_cfg = copy.deepcopy(cfg)
    ref_cfg.time.theta = 0.5
    ref_cfg.time.dt = ref
    ref_cfg.time.t_final = t_end
    ref_res = simulate(ref_cfg)
    if ref_res.status != "ok":
        raise RuntimeError(f"reference run failed: {ref_res.failure_detail}")

    study = ConvergenceStudy()
    for d in dts:
        run_cfg = copy.deepcopy(cfg)
        run_cfg.time.dt = d
        run_cfg.time.t_final = t_end
        res = simulate(run_cfg)
        if res.status != "ok":
            raise RuntimeError(f"run at dt={d} failed: {res.failure_detail}")
        study.add(d, state_error(res.state, ref_res.state))
    return study


def conservation_report(records: list[dict], kind: str) -> dict:
    """Summarize per-step balance metrics from driver records.

    For the pure-material model, ``balance`` holds the discrete heat/phase
    balance residual per step and ``bound`` its converged-residual bound.
    For the alloy, ``total_solute`` holds the tracked integral.
    """
    if kind == "free_growth":
        bal = np.array([r["balance"] for r in records])
        bound = np.array([r["balance_bound"] for r in records])
        ok = np.abs(bal) <= bound
        return {
            "max_abs_balance": float(np.max(np.abs(bal))) if bal.size else 0.0,
            "max_ratio": float(np.max(np.abs(bal) / bound)) if bal.size else 0.0,
            "all_within_bound": bool(np.all(ok)),
        }
    solute = np.array([r["total_solute"] for r in records])
    if solute.size == 0:
        return {"relative_drift": 0.0}
    s0 = solute[0]
    drift = np.max(np.abs(solute - s0)) / abs(s0)
    return {"relative_drift": float(drift), "initial": float(s0), "final": float(solute[-1])}
