"""
config.py

Defaults for every numerical knob of the lab, plus file/env overrides.

Run:
  settings = load_settings("lab.toml")          # TOML or JSON, unknown keys rejected
  settings = LabSettings().replace(grid=17)
"""

import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .errors import InputError

# ---- Config ----
RANK_TOL = 1e-8              # sigma_min / sigma_max threshold for rank decisions
S_MAX = 6                    # deepest filtration layer tried
H_FD_FACTOR = 1e-5           # black-box central differences: h = H_FD_FACTOR * (1 + |z|)
STEPS_PER_UNIT = 64          # RK4 steps per unit flow time
BLOWUP_BOUND = 1e6           # trajectory norm treated as escape
LIE_SERIES_MAX = 8           # highest Lie-series order accepted as an exact flow
FLOW_INTEGRATOR = "auto"     # "auto" (Lie series when exact, else RK4) or "rk4"
CHART_RADIUS = 0.5           # chart ball, measured in the gauge sum |h_i|^(1/deg)
MAX_NEWTON = 50
LOG_TOL = 1e-10
JET_STEP = 1e-4              # flow step for finite-difference jets
NOISE_FLOOR = 1e-12
C2L_TOL = 1e-2
POLE_TOL = 1e-3
Q_RES = 48                   # quadrature nodes per axis
GRID = 25                    # Dirichlet grid nodes per axis (odd so the center is a node)
STENCIL_WIDTH = 1            # reach of a second difference, in nodes
SOLVER_TOL = 1e-9
MAX_SWEEPS = 20000
RELAX_OMEGA = 0.8
RHO = 0.5
K_MAX = 6
SEED = 20240601
THREADS_ENV = "HORMANDER_LAB_THREADS"


@dataclass(frozen=True)
class LabSettings:
    rank_tol: float = RANK_TOL
    s_max: int = S_MAX
    h_fd_factor: float = H_FD_FACTOR
    steps_per_unit: int = STEPS_PER_UNIT
    blowup_bound: float = BLOWUP_BOUND
    lie_series_max: int = LIE_SERIES_MAX
    flow_integrator: str = FLOW_INTEGRATOR
    chart_radius: float = CHART_RADIUS
    max_newton: int = MAX_NEWTON
    log_tol: float = LOG_TOL
    jet_step: float = JET_STEP
    noise_floor: float = NOISE_FLOOR
    c2l_tol: float = C2L_TOL
    pole_tol: float = POLE_TOL
    q_res: int = Q_RES
    grid: int = GRID
    stencil_width: int = STENCIL_WIDTH
    solver_tol: float = SOLVER_TOL
    max_sweeps: int = MAX_SWEEPS
    relax_omega: float = RELAX_OMEGA
    rho: float = RHO
    k_max: int = K_MAX
    seed: int = SEED

    def __post_init__(self):
        if self.flow_integrator not in ("auto", "rk4"):
            raise InputError(f"flow_integrator must be 'auto' or 'rk4', got {self.flow_integrator!r}")
        if self.s_max < 1:
            raise InputError("s_max must be >= 1")
        if self.steps_per_unit < 1:
            raise InputError("steps_per_unit must be >= 1")
        if not 0.0 < self.rho < 1.0:
            raise InputError("rho must lie in (0, 1)")

    def replace(self, **changes) -> "LabSettings":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_SETTINGS = LabSettings()


def load_settings(path: Optional[Path]) -> LabSettings:
    if path is None:
        return DEFAULT_SETTINGS
    path = Path(path).expanduser().resolve()
    if not path.exists():
        raise InputError(f"Settings file not found: {path}")
    if path.suffix.lower() == ".toml":
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    else:
        raw = json.loads(path.read_text())
    raw = raw.get("settings", raw)
    known = {f.name for f in fields(LabSettings)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InputError(f"Unknown settings keys: {', '.join(unknown)}")
    return LabSettings(**raw)


def thread_cap() -> int:
    value = os.environ.get(THREADS_ENV, "")
    try:
        cap = int(value)
    except ValueError:
        cap = os.cpu_count() or 1
    return max(1, cap)
