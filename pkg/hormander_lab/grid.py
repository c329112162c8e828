"""
grid.py

Finite-difference Dirichlet problems for L u = g on a cylinder H_R(z0).

The grid lives in chart coordinates at z0 with anisotropic spacing (R^deg per axis).
X_i X_i is a second difference along the X_i flow, mixed terms go through the flows of
X_i +- X_j, and X_0 is an upwind difference along its flow; flow end points are read by
multilinear interpolation, so the matrix of -L is an M-matrix.

Run:
  problem = DirichletProblem(model, Cylinder((0, 0, 0), 0.5), boundary=model.function("x"))
  sol = dirichlet_solve(problem)
  sol(points), sol.sup(), sol.center_jet(model)
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.interpolate import NdBSpline, make_interp_spline
from scipy.sparse.linalg import spsolve

from .chart import ExpChart
from .config import LabSettings
from .errors import InputError, NumericError, SolverError
from .flows import flow_batch
from .models import CoefficientField, Cylinder, ModelOperator
from .taylor import ScalarFunction, derivative_along, mixed_along, second_along
from .vectorfields import DRIFT, VectorField

log = logging.getLogger(__name__)

SOLVERS = ("direct", "jacobi")
EDGE_TOL = 1e-9


# ---------- Grid ----------
@dataclass(frozen=True)
class CylinderGrid:
    """Tensor grid over the chart box |h_k| <= R^deg_k; nodes with gauge < R are interior."""

    chart: ExpChart
    radius: float
    resolution: int
    width: int = 1

    def __post_init__(self):
        if self.resolution < 5 or self.resolution % 2 == 0:
            raise InputError(f"Grid resolution must be odd and >= 5, got {self.resolution}")
        if self.width < 1:
            raise InputError("Stencil width must be >= 1")
        if not 0.0 < self.radius <= 1.0:
            raise InputError(f"Cylinder radius must lie in (0, 1], got {self.radius}")

    @property
    def dimension(self) -> int:
        return self.chart.dimension

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.resolution,) * self.dimension

    @cached_property
    def half_widths(self) -> np.ndarray:
        return self.radius ** np.asarray(self.chart.degrees, dtype=float)

    @cached_property
    def spacing(self) -> np.ndarray:
        return 2.0 * self.half_widths / (self.resolution - 1)

    @property
    def horizontal_step(self) -> float:
        """Spacing of the degree-1 axes: 2R / (resolution - 1)."""
        return 2.0 * self.radius / (self.resolution - 1)

    @property
    def drift_step(self) -> float:
        """Spacing of a degree-2 axis: 2R^2 / (resolution - 1)."""
        return 2.0 * self.radius**2 / (self.resolution - 1)

    @cached_property
    def coordinates(self) -> np.ndarray:
        axes = [np.linspace(-b, b, self.resolution) for b in self.half_widths]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dimension)

    @cached_property
    def points(self) -> np.ndarray:
        pts, ok = self.chart.e_map_batch(self.coordinates, enforce_radius=False)
        if not np.all(ok):
            raise NumericError(f"{int(np.sum(~ok))} grid nodes left the flow domain")
        return pts

    @cached_property
    def gauge(self) -> np.ndarray:
        return self.chart.gauge(self.coordinates)

    @cached_property
    def interior(self) -> np.ndarray:
        return self.gauge < self.radius * (1.0 - EDGE_TOL)

    def region(self, r: float) -> np.ndarray:
        """Interior nodes of H_r(z0)."""
        return self.interior & (self.gauge < r)

    @property
    def center_index(self) -> int:
        mid = self.resolution // 2
        return int(np.ravel_multi_index((mid,) * self.dimension, self.shape))

    def fractional_index(self, h) -> np.ndarray:
        return (np.atleast_2d(h) + self.half_widths) / self.spacing

    def contains(self, h) -> np.ndarray:
        f = self.fractional_index(h)
        return np.all((f >= -EDGE_TOL) & (f <= self.resolution - 1 + EDGE_TOL), axis=1)

    def interpolation(self, h) -> Tuple[np.ndarray, np.ndarray]:
        """Flat node indices and multilinear weights, (P, 2^n) each; coordinates are clipped to the box."""
        f = np.clip(self.fractional_index(h), 0.0, self.resolution - 1)
        lo = np.minimum(np.floor(f).astype(int), self.resolution - 2)
        theta = f - lo
        cols, weights = [], []
        for corner in product((0, 1), repeat=self.dimension):
            c = np.asarray(corner)
            idx = lo + c
            w = np.prod(np.where(c == 1, theta, 1.0 - theta), axis=1)
            cols.append(np.ravel_multi_index(tuple(idx.T), self.shape))
            weights.append(w)
        return np.stack(cols, axis=1), np.stack(weights, axis=1)


# ---------- Problem ----------
@dataclass(frozen=True, eq=False)
class DirichletProblem:
    model: ModelOperator
    cylinder: Cylinder
    boundary: ScalarFunction
    rhs: Union[ScalarFunction, float] = 0.0
    coefficients: Optional[CoefficientField] = None

    @property
    def coefficient_field(self) -> CoefficientField:
        return self.coefficients or self.model.coefficients

    def rhs_values(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        if callable(self.rhs):
            return np.asarray(self.rhs(pts), dtype=float)
        return np.full(len(pts), float(self.rhs))

    def boundary_values(self, points) -> np.ndarray:
        return np.asarray(self.boundary(np.atleast_2d(points)), dtype=float)


# ---------- Stencils ----------
def second_order_directions(generators, a: np.ndarray) -> List[Tuple[VectorField, np.ndarray]]:
    """sum a_ij X_iX_j = sum_i c_i X_i^2 + sum_{i<j} |a_ij| (X_i +- X_j)^2, c_i = a_ii - sum_{j != i} |a_ij|."""
    m = a.shape[1]
    out = []
    for i in range(m):
        off = np.sum(np.abs(a[:, i, :]), axis=1) - np.abs(a[:, i, i])
        out.append((generators[i + 1], a[:, i, i] - off))
    for i in range(m):
        for j in range(i + 1, m):
            aij = a[:, i, j]
            if np.any(aij > 0):
                out.append((generators[i + 1] + generators[j + 1], np.where(aij > 0, aij, 0.0)))
            if np.any(aij < 0):
                out.append((generators[i + 1] - generators[j + 1], np.where(aij < 0, -aij, 0.0)))
    return out


def _endpoint(grid: CylinderGrid, x: VectorField, step, pts: np.ndarray, h: np.ndarray,
              settings: LabSettings) -> Tuple[np.ndarray, np.ndarray]:
    """Chart coordinates and points of exp(step X)(p)."""
    moved, ok = flow_batch(x, step, pts, settings)
    coords, conv, _ = grid.chart.log_map_from(grid.chart.base_point, moved, initial=h)
    bad = ~(ok & conv)
    if np.any(bad):
        log.warning("%d stencil end points did not invert; using the nearest box coordinates", int(np.sum(bad)))
    return coords, moved


@dataclass
class _Entries:
    rows: List[np.ndarray] = field(default_factory=list)
    cols: List[np.ndarray] = field(default_factory=list)
    vals: List[np.ndarray] = field(default_factory=list)

    def add(self, rows, cols, vals):
        self.rows.append(np.ravel(rows))
        self.cols.append(np.ravel(cols))
        self.vals.append(np.ravel(vals))

    def interpolated(self, grid: CylinderGrid, rows: np.ndarray, h: np.ndarray, scale: np.ndarray):
        cols, w = grid.interpolation(h)
        self.add(np.repeat(rows[:, None], cols.shape[1], axis=1), cols, scale[:, None] * w)

    def matrix(self, size: int) -> sparse.csr_matrix:
        return sparse.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(size, size),
        ).tocsr()


def _second_difference(entries: _Entries, grid: CylinderGrid, x: VectorField, coef: np.ndarray,
                       nodes: np.ndarray, settings: LabSettings):
    """coef (u(exp(dX)p) - 2u(p) + u(exp(-dX)p)) / d^2, d = j * horizontal step with the widest j fitting the box."""
    pts = grid.points[nodes]
    h = grid.coordinates[nodes]
    pending = np.ones(len(nodes), dtype=bool)
    for j in range(grid.width, 0, -1):
        sel = np.flatnonzero(pending)
        if not len(sel):
            break
        d = j * grid.horizontal_step
        hp, _ = _endpoint(grid, x, d, pts[sel], h[sel], settings)
        hm, _ = _endpoint(grid, x, -d, pts[sel], h[sel], settings)
        take = grid.contains(hp) & grid.contains(hm) if j > 1 else np.ones(len(sel), dtype=bool)
        if not np.any(take):
            continue
        rows = nodes[sel[take]]
        scale = coef[sel[take]] / d**2
        entries.interpolated(grid, rows, hp[take], scale)
        entries.interpolated(grid, rows, hm[take], scale)
        entries.add(rows, rows, -2.0 * scale)
        pending[sel[take]] = False


def assemble(problem: DirichletProblem, grid: CylinderGrid) -> Tuple[sparse.csr_matrix, np.ndarray, Tuple[float, float]]:
    """Matrix and right side of the discrete problem over all nodes; boundary rows are identities.

    Also returns the observed range of the discrete X_0 t over interior nodes.
    """
    model = problem.model
    settings = model.settings
    nodes = np.flatnonzero(grid.interior)
    outside = np.flatnonzero(~grid.interior)
    size = len(grid.coordinates)
    pts = grid.points[nodes]
    a = problem.coefficient_field(pts)
    entries = _Entries()
    for x, coef in second_order_directions(model.generators, a):
        if np.any(coef):
            _second_difference(entries, grid, x, coef, nodes, settings)
    rate = (0.0, 0.0)
    if not model.drift.is_zero():
        d0 = grid.drift_step
        back_h, back = _endpoint(grid, model.drift, -d0, pts, grid.coordinates[nodes], settings)
        inv = np.full(len(nodes), 1.0 / d0)
        entries.interpolated(grid, nodes, back_h, inv)
        entries.add(nodes, nodes, -inv)
        dt = (pts[:, -1] - back[:, -1]) / d0
        rate = (float(np.min(dt)), float(np.max(dt)))
    entries.add(outside, outside, np.ones(len(outside)))
    matrix = entries.matrix(size)
    rhs = np.empty(size)
    rhs[nodes] = problem.rhs_values(pts)
    rhs[outside] = problem.boundary_values(grid.points[outside])
    return matrix, rhs, rate


def scaled_residual(matrix: sparse.csr_matrix, u: np.ndarray, rhs: np.ndarray, rows: np.ndarray) -> float:
    """max |(A u - b)_i| / |A_ii| over the given rows."""
    r = matrix @ u - rhs
    d = np.abs(matrix.diagonal())
    return float(np.max(np.abs(r[rows]) / np.maximum(d[rows], 1e-300))) if len(rows) else 0.0


def _jacobi(matrix, rhs, rows, settings: LabSettings, initial: np.ndarray) -> Tuple[np.ndarray, List[float]]:
    d = matrix.diagonal()
    u = initial.copy()
    history = []
    for _ in range(settings.max_sweeps):
        r = rhs - matrix @ u
        res = float(np.max(np.abs(r[rows]) / np.abs(d[rows]))) if len(rows) else 0.0
        history.append(res)
        if res < settings.solver_tol * max(1.0, float(np.max(np.abs(u)))):
            return u, history
        u = u + settings.relax_omega * r / d
    raise SolverError(f"Damped Jacobi did not reach {settings.solver_tol:g} in {settings.max_sweeps} sweeps "
                      f"(residual {history[-1]:.3g})", history)


# ---------- Solution ----------
@dataclass(frozen=True, eq=False)
class GridSolution:
    grid: CylinderGrid
    values: np.ndarray
    residual: float
    history: Tuple[float, ...]
    method: str
    drift_rate: Tuple[float, float] = (0.0, 0.0)

    @property
    def settings(self) -> LabSettings:
        return self.grid.chart.settings

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    @cached_property
    def _spline(self) -> NdBSpline:
        """Tensor not-a-knot cubic spline through the nodal values; exact on cubics."""
        coeffs = self.array
        knots = []
        for axis, half in enumerate(self.grid.half_widths):
            nodes = np.linspace(-half, half, self.grid.resolution)
            spl = make_interp_spline(nodes, coeffs, k=3, axis=axis)
            knots.append(spl.t)
            coeffs = np.moveaxis(spl.c, 0, axis)
        return NdBSpline(tuple(knots), coeffs, 3)

    def sup(self, r: Optional[float] = None) -> float:
        mask = self.grid.interior if r is None else self.grid.region(r)
        return float(np.max(np.abs(self.values[mask]))) if np.any(mask) else 0.0

    def boundary_sup(self) -> float:
        return float(np.max(np.abs(self.values[~self.grid.interior])))

    def at_coordinates(self, h) -> np.ndarray:
        return self._spline(np.atleast_2d(np.asarray(h, dtype=float)))

    def __call__(self, points, initial=None) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h, ok, _ = self.grid.chart.log_map_from(self.grid.chart.base_point, pts, initial)
        out = self.at_coordinates(h)
        out[~ok] = np.nan
        return out

    def center_jet(self, model: ModelOperator) -> dict:
        """X_iX_j u and X_0 u at the center from flow differences on the spline, Richardson-corrected."""
        settings = model.settings
        center = self.grid.points[[self.grid.center_index]]
        gens = model.generators
        d = self.grid.horizontal_step
        out = {}
        for i in range(1, model.m + 1):
            for j in range(1, model.m + 1):
                if i == j:
                    fine = second_along(self, gens[i], center, d, settings)
                    coarse = second_along(self, gens[i], center, 2.0 * d, settings)
                else:
                    fine = mixed_along(self, gens[i], gens[j], center, d, settings)
                    coarse = mixed_along(self, gens[i], gens[j], center, 2.0 * d, settings)
                out[f"X{i}X{j}"] = float((4.0 * fine[0] - coarse[0]) / 3.0)
        if not model.drift.is_zero():
            d0 = self.grid.drift_step
            fine = derivative_along(self, gens[DRIFT], center, d0, settings)
            coarse = derivative_along(self, gens[DRIFT], center, 2.0 * d0, settings)
            out["X0"] = float((4.0 * fine[0] - coarse[0]) / 3.0)
        return out

    def to_dict(self) -> dict:
        return {
            "radius": self.grid.radius,
            "center": list(self.grid.chart.base_point),
            "resolution": self.grid.resolution,
            "width": self.grid.width,
            "interior_nodes": int(np.sum(self.grid.interior)),
            "method": self.method,
            "residual": self.residual,
            "sweeps": len(self.history),
            "drift_rate": list(self.drift_rate),
        }


def dirichlet_solve(problem: DirichletProblem, resolution: Optional[int] = None, method: str = "direct",
                    width: Optional[int] = None) -> GridSolution:
    model = problem.model
    settings = model.settings
    if method not in SOLVERS:
        raise InputError(f"Solver must be one of {SOLVERS}, got {method!r}")
    chart = model.chart(problem.cylinder.center)
    grid = CylinderGrid(chart, problem.cylinder.radius, resolution or settings.grid, width or settings.stencil_width)
    rows = np.flatnonzero(grid.interior)
    lam, big, worst = problem.coefficient_field.ellipticity(grid.points[rows])
    if lam <= 0.0:
        raise InputError(f"Coefficients are not elliptic at node {grid.points[rows[worst]].tolist()} "
                         f"(smallest eigenvalue {lam:.3g})")
    matrix, rhs, rate = assemble(problem, grid)
    if method == "direct":
        u = spsolve(matrix.tocsc(), rhs)
        res = scaled_residual(matrix, u, rhs, rows)
        history = [res]
        if not np.all(np.isfinite(u)) or res > settings.solver_tol * max(1.0, float(np.max(np.abs(u)))):
            raise SolverError(f"Direct solve left residual {res:.3g}", history)
    else:
        initial = np.where(grid.interior, 0.0, rhs)
        u, history = _jacobi(matrix, rhs, rows, settings, initial)
        res = history[-1]
    log.info("Dirichlet solve on H_%g: %d nodes, residual %.2e (%s)", grid.radius, len(rows), res, method)
    return GridSolution(grid, u, res, tuple(history), method, rate)
