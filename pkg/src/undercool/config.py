"""Run configuration: flat key = value text with sections.

Defaults reproduce the reference benchmark setups of the two models; any
key can be overridden from the file or with ``--set section.key=value``.
The configuration round-trips losslessly through ``save_config`` /
``load_config``.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

from .errors import ConfigError
from .krylov import GmresConfig
from .models.alloy import AlloyParams
from .models.free_growth import FreeGrowthParams
from .newton import NewtonConfig
from .precond import PrecondConfig

__all__ = ["MeshConfig", "TimeConfig", "OutputConfig", "RunConfig",
           "load_config", "save_config", "parse_overrides", "default_config"]


@dataclass
class MeshConfig:
    dimension: int = 2
    extents: tuple = (4.5, 4.5)
    counts: tuple = (150, 150)
    order: int = 1


@dataclass
class TimeConfig:
    theta: float = 0.5
    dt: float = 2.25e-4
    t_final: float = 0.14
    # trapezoidal stepping rings on rough initial data; a few backward-Euler
    # startup steps damp that without hurting the convergence order.  When
    # startup_dt > 0 each startup interval is further cut into implicit
    # substeps of about that size, which carries stiff initial transients
    # (the alloy interface recoil) that a full-size first step cannot.
    startup_steps: int = 2
    startup_theta: float = 1.0
    startup_dt: float = 0.0


@dataclass
class OutputConfig:
    directory: str = "out"
    snapshot_every: int = 0        # steps between field snapshots; 0 = final only
    log_name: str = "runlog.csv"
    write_vtk: bool = True


@dataclass
class RunConfig:
    model: str = "free_growth"
    seed: int = 0
    perturbation: float = 0.5      # alloy interface corrugation amplitude
    smooth_interface: bool = True  # start the alloy from the tanh profile
    retry_halve_dt: bool = False
    mesh: MeshConfig = field(default_factory=MeshConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    solver: NewtonConfig = field(default_factory=NewtonConfig)
    precond: PrecondConfig = field(default_factory=PrecondConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    free_growth: FreeGrowthParams = field(default_factory=FreeGrowthParams)
    alloy: AlloyParams = field(default_factory=AlloyParams)

    def validate(self) -> None:
        if self.model not in ("free_growth", "alloy"):
            raise ConfigError(f"unknown model '{self.model}'")
        m = self.mesh
        if m.dimension not in (2, 3):
            raise ConfigError("mesh.dimension must be 2 or 3")
        if len(m.extents) != m.dimension or len(m.counts) != m.dimension:
            raise ConfigError("mesh extents/counts must match the dimension")
        if any(e <= 0 for e in m.extents) or any(c < 1 for c in m.counts):
            raise ConfigError("mesh extents must be positive, counts at least 1")
        if m.order not in (1, 2) or (m.dimension == 3 and m.order != 1):
            raise ConfigError("element order must be 1 or 2 (1 only in 3D)")
        t = self.time
        if not 0.0 <= t.theta <= 1.0:
            raise ConfigError("time.theta must lie in [0, 1]")
        if t.dt <= 0.0 or t.t_final <= 0.0:
            raise ConfigError("time.dt and time.t_final must be positive")
        try:
            self.params().validate()
            PrecondConfig(**dataclasses.asdict(self.precond))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def params(self):
        return self.free_growth if self.model == "free_growth" else self.alloy

    def kernel(self):
        from .models.alloy import AlloyKernel
        from .models.free_growth import FreeGrowthKernel

        if self.model == "free_growth":
            return FreeGrowthKernel(self.free_growth)
        return AlloyKernel(self.alloy)


_SECTIONS = {
    "run": None,          # scalar fields of RunConfig itself
    "mesh": "mesh",
    "time": "time",
    "solver": "solver",
    "precond": "precond",
    "output": "output",
    "free_growth": "free_growth",
    "alloy": "alloy",
}
_RUN_KEYS = ("model", "seed", "perturbation", "smooth_interface", "retry_halve_dt")


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str, template):
    text = text.strip()
    if isinstance(template, bool):
        if text.lower() in ("true", "1", "yes", "on"):
            return True
        if text.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got '{text}'")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, (tuple, list)):
        parts = [p for p in text.replace(",", " ").split() if p]
        elem = template[0] if len(template) else 1.0
        conv = int if isinstance(elem, int) else float
        return tuple(conv(p) for p in parts)
    return text


def save_config(cfg: RunConfig, path=None) -> str:
    cp = configparser.ConfigParser()
    cp["run"] = {k: _format_value(getattr(cfg, k)) for k in _RUN_KEYS}
    for section, attr in _SECTIONS.items():
        if attr is None:
            continue
        sub = getattr(cfg, attr)
        if dataclasses.is_dataclass(sub):
            cp[section] = {
                f.name: _format_value(getattr(sub, f.name))
                for f in dataclasses.fields(sub)
                if f.name != "gmres"
            }
    cp["gmres"] = {
        f.name: _format_value(getattr(cfg.solver.gmres, f.name))
        for f in dataclasses.fields(GmresConfig)
    }
    buf = io.StringIO()
    cp.write(buf)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _apply_key(cfg: RunConfig, section: str, key: str, raw: str) -> None:
    if section == "run":
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key run.{key}")
        setattr(cfg, key, _parse_value(raw, getattr(cfg, key)))
        return
    if section == "gmres":
        target = cfg.solver.gmres
    else:
        attr = _SECTIONS.get(section)
        if attr is None:
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, attr)
    if not hasattr(target, key):
        raise ConfigError(f"unknown key {section}.{key}")
    setattr(target, key, _parse_value(raw, getattr(target, key)))


def load_config(path_or_text, base: RunConfig | None = None) -> RunConfig:
    """Parse a config file (path or literal text) over the defaults."""
    cfg = base or RunConfig()
    cp = configparser.ConfigParser()
    text = path_or_text
    if "\n" not in str(path_or_text) and "=" not in str(path_or_text):
        with open(path_or_text) as fh:
            text = fh.read()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in cp.sections():
        for key, raw in cp[section].items():
            _apply_key(cfg, section, key, raw)
    return cfg


def parse_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply ``section.key=value`` command-line overrides in order."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' is not of the form section.key=value")
        lhs, value = pair.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"override key '{lhs}' needs a section prefix")
        section, key = lhs.split(".", 1)
        _apply_key(cfg, section.strip(), key.strip(), value)
    return cfg


def default_config(model: str) -> RunConfig:
    """Benchmark defaults per model (mesh, timestep, final time)."""
    cfg = RunConfig(model=model)
    if model == "alloy":
        cfg.mesh = MeshConfig(dimension=2, extents=(204.8, 51.2), counts=(256, 64))
        cfg.time = TimeConfig(theta=0.5, dt=0.002, t_final=10.0, startup_dt=0.002)
    return cfg
