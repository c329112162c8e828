"""
schauder.py

Interior Schauder experiments on discrete Dirichlet problems: the maximum principle,
the shrinking-cylinder iteration (constant and frozen coefficients), the Dini modulus
of second derivatives and the scale-invariant Lipschitz and derivative bounds.

Run:
  model = get_model("kolmogorov")
  u, f = power_oracle(0.5)
  ledger = wang_iteration(model, u, f, ModulusOfContinuity.power(0.5), levels=6)
  ledger.decay_exponent("sup_v"), ledger.last_share()
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from .chart import ExpChart
from .config import thread_cap
from .errors import BinningError, InputError
from .grid import DirichletProblem, GridSolution, dirichlet_solve
from .models import CoefficientField, Cylinder, ModelOperator
from .moduli import ModulusOfContinuity, dini_bound_shape, dini_integral
from .taylor import ScalarFunction, compute_jet, derivative_along, fit_slope, mixed_along, second_along
from .vectorfields import DRIFT

log = logging.getLogger(__name__)

# ---- Config ----
V_BOUND_FACTOR = 4.0
GRID_TOL = 0.2
TELESCOPE_TOL = 1e-12
SATURATION_SHARE = 0.05
STABILITY_RATIO = 2.0
MIN_PAIRS_PER_BIN = 10
SCALE_RADII = (1.0, 0.5, 0.25)
TAIL_TERMS = 400
ETA_REGION = 0.75
SLOPE_TOL = 0.3
DERIVATIVE_FLOOR = 1e-6        # scaled derivatives below this are rounding noise and are not fitted


# ---------- Test functions ----------
@dataclass(frozen=True, eq=False)
class TrigSum:
    """sum_k a_k sin(<w_k, p> + b_k), squared when asked (then >= 0)."""

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    squared: bool = False

    @classmethod
    def random(cls, dimension: int, rng: np.random.Generator, terms: int = 3, scale: float = 2.0,
               squared: bool = False) -> "TrigSum":
        return cls(rng.uniform(-1.0, 1.0, terms), rng.uniform(-scale, scale, (terms, dimension)),
                   rng.uniform(0.0, 2.0 * math.pi, terms), squared)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.sin(pts @ self.frequencies.T + self.phases) @ self.amplitudes
        return out**2 if self.squared else out


@dataclass(frozen=True, eq=False)
class ScaledChartFunction:
    """psi(delta_{1/R} Log z): the same profile on every H_R(z0)."""

    chart: ExpChart
    radius: float
    profile: Callable[[np.ndarray], np.ndarray]

    def __call__(self, points) -> np.ndarray:
        h, ok, _ = self.chart.log_map_from(self.chart.base_point, points)
        out = np.asarray(self.profile(self.chart.dilation(h, 1.0 / self.radius)), dtype=float)
        return np.where(ok, out, np.nan)


def _abs_coordinate(points, variable: int) -> np.ndarray:
    return np.abs(np.atleast_2d(np.asarray(points, dtype=float))[:, variable])


def power_oracle(alpha: float = 0.5, scale: float = 1.0, variable: int = 0) -> Tuple[Callable, Callable]:
    """u = c |x|^(alpha+2) / ((alpha+1)(alpha+2)), f = c |x|^alpha.

    L u = f for every shipped model: X_1 acts as d_x on functions of x, the other fields kill them, a_11 = 1.
    """
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"Oracle exponent must lie in (0, 1], got {alpha}")
    c = scale / ((alpha + 1.0) * (alpha + 2.0))
    return (lambda p: c * _abs_coordinate(p, variable) ** (alpha + 2.0),
            lambda p: scale * _abs_coordinate(p, variable) ** alpha)


def log_oracle(scale: float = 1.0, variable: int = 0) -> Tuple[Callable, Callable]:
    """U = |x| e E1(L) - e^2 E1(2L), L = log(e/|x|), so U'' = 1/log(e/|x|): a non-Dini right side."""

    def u(p):
        x = _abs_coordinate(p, variable)
        with np.errstate(divide="ignore"):
            big = np.log(math.e / np.where(x > 0, x, 1.0))
        val = x * math.e * special.exp1(big) - math.e**2 * special.exp1(2.0 * big)
        return scale * np.where(x > 0, val, 0.0)

    omega = ModulusOfContinuity.logarithmic(scale)
    return u, lambda p: omega(_abs_coordinate(p, variable))


def oracle_for(omega: ModulusOfContinuity) -> Tuple[Callable, Callable]:
    if omega.kind == "power":
        return power_oracle(omega.alpha, omega.scale)
    if omega.kind == "log":
        return log_oracle(omega.scale)
    if omega.kind == "zero":
        return (lambda p: _abs_coordinate(p, 0) ** 2 / 2.0), (lambda p: np.ones(len(np.atleast_2d(p))))
    raise InputError(f"No closed-form solution for modulus {omega.label}; give the right side with --fn")


def _rhs_values(f: Union[ScalarFunction, float], points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if callable(f):
        return np.asarray(f(pts), dtype=float)
    return np.full(len(pts), float(f))


# ---------- Maximum principle ----------
@dataclass(frozen=True)
class MaxPrincipleReport:
    model: str
    radius: float
    sup_v: float
    sup_boundary: float
    sup_rhs: float
    tolerance: float
    subsolution: Optional[bool] = None

    @property
    def bound(self) -> float:
        return self.sup_boundary + self.radius**2 * self.sup_rhs + self.tolerance

    @property
    def passed(self) -> bool:
        return bool(self.sup_v <= self.bound and self.subsolution is not False)

    def to_dict(self) -> dict:
        return {"model": self.model, "radius": self.radius, "sup_v": self.sup_v, "sup_boundary": self.sup_boundary,
                "sup_rhs": self.sup_rhs, "bound": self.bound, "tolerance": self.tolerance,
                "subsolution": self.subsolution, "passed": self.passed}


def max_principle_check(problem: DirichletProblem, resolution: Optional[int] = None,
                        method: str = "direct") -> MaxPrincipleReport:
    """||v|| <= ||phi|| + R^2 ||g|| on the discrete solution; with g of one sign also the one-sided principle."""
    sol = dirichlet_solve(problem, resolution, method)
    grid = sol.grid
    inner = sol.values[grid.interior]
    outer = sol.values[~grid.interior]
    g = problem.rhs_values(grid.points[grid.interior])
    tol = GRID_TOL * problem.model.settings.solver_tol * max(1.0, float(np.max(np.abs(sol.values))))
    tol = max(tol, 10.0 * sol.residual)
    sub = None
    if len(g) and np.all(g >= 0.0):
        sub = bool(np.max(inner) <= np.max(outer) + tol)
    elif len(g) and np.all(g <= 0.0):
        sub = bool(np.min(inner) >= np.min(outer) - tol)
    return MaxPrincipleReport(problem.model.name, grid.radius, sol.sup(), float(np.max(np.abs(outer))),
                              float(np.max(np.abs(g))) if len(g) else 0.0, tol, sub)


def random_trials(model: ModelOperator, radius: float = 0.5, trials: int = 20,
                  rng: Optional[np.random.Generator] = None, resolution: Optional[int] = None) -> List[MaxPrincipleReport]:
    """Random trigonometric phi and g; odd trials use g >= 0 to exercise the subsolution principle."""
    rng = np.random.default_rng(model.settings.seed) if rng is None else rng
    cylinder = Cylinder(tuple(model.origin), radius)
    out = []
    for k in range(trials):
        phi = TrigSum.random(model.dimension, rng)
        g = TrigSum.random(model.dimension, rng, squared=bool(k % 2))
        out.append(max_principle_check(DirichletProblem(model, cylinder, phi, g), resolution))
    failed = sum(not r.passed for r in out)
    log.info("Maximum principle on %s: %d/%d trials passed", model.name, trials - failed, trials)
    return out


# ---------- Shrinking-cylinder iteration ----------
@dataclass(frozen=True)
class LevelRecord:
    level: int
    radius: float
    sup_v: float
    sup_step: float
    first_increment: float
    second_increment: float
    drift_increment: float
    shape_v: float
    omega: float
    residual: float

    @property
    def bound_v(self) -> float:
        return V_BOUND_FACTOR * self.shape_v


SERIES = ("sup_v", "sup_step", "first_increment", "second_increment", "drift_increment")


@dataclass(frozen=True)
class IterationLedger:
    """Per level k = 0..K: sup|u - u_k| on H_k, sup|u_k - u_{k+1}| on H_{k+1}, derivative increments
    of u_k - u_{k+1} on H_{k+2}; center jets of u_0..u_{K+1}."""

    model: str
    rho: float
    requested: int
    records: Tuple[LevelRecord, ...]
    jets: Tuple[Dict[str, float], ...]
    reference_jet: Dict[str, float]
    tails: Tuple[float, ...]
    omega_f: str
    omega_a: str = "zero"
    eta: float = 0.0
    dini: float = math.inf
    ellipticity: Optional[Tuple[float, float]] = None

    @property
    def levels(self) -> int:
        return len(self.records) - 1

    @property
    def complete(self) -> bool:
        return self.levels >= self.requested

    @property
    def radii(self) -> np.ndarray:
        return np.array([r.radius for r in self.records])

    def series(self, name: str) -> np.ndarray:
        if name not in SERIES:
            raise InputError(f"Unknown ledger series {name!r}")
        return np.array([getattr(r, name) for r in self.records])

    def decay_exponent(self, name: str) -> float:
        """Slope of log(series) against log(rho^k); nan with fewer than two positive entries."""
        values = self.series(name)
        keep = values > 0
        if np.sum(keep) < 2:
            return float("nan")
        return fit_slope(self.radii[keep], values[keep])

    def fitted_constant(self, name: str) -> float:
        """max series / shape with shapes rho^2k W, rho^k W, W, W for W = omega_f + omega_a eta."""
        power = {"sup_v": 2.0, "sup_step": 2.0, "first_increment": 1.0}.get(name, 0.0)
        values = self.series(name)
        shape = np.array([r.omega for r in self.records]) * self.radii**power
        if np.any((shape == 0) & (values > 0)):
            return math.inf
        live = shape > 0
        return float(np.max(values[live] / shape[live])) if np.any(live) else 0.0

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.series("second_increment"))

    def last_share(self) -> float:
        """Last second-derivative sup increment as a share of the running sum."""
        sums = self.partial_sums()
        return float(self.records[-1].second_increment / sums[-1]) if sums[-1] > 0 else 0.0

    @property
    def saturated(self) -> bool:
        return self.last_share() < SATURATION_SHARE

    def zero_increments(self) -> Dict[str, np.ndarray]:
        keys = sorted(self.jets[0])
        return {k: np.array([self.jets[l][k] - self.jets[l + 1][k] for l in range(len(self.jets) - 1)]) for k in keys}

    def telescoping_error(self) -> float:
        """max_k |sum_{l>=k} (a_l - a_{l+1}) - (a_k - a_{K+1})| for every center derivative a."""
        worst = 0.0
        for key, incr in self.zero_increments().items():
            a = np.array([j[key] for j in self.jets])
            scale = max(1.0, float(np.max(np.abs(a))))
            for k in range(len(incr)):
                worst = max(worst, abs(float(np.sum(incr[k:])) - (a[k] - a[-1])) / scale)
        return worst

    def taylor_gaps(self) -> np.ndarray:
        keys = sorted(self.reference_jet)
        return np.array([max(abs(self.jets[k][key] - self.reference_jet[key]) for key in keys)
                         for k in range(len(self.records))])

    def taylor_constant(self) -> float:
        tails = np.asarray(self.tails)
        gaps = self.taylor_gaps()
        live = np.isfinite(tails) & (tails > 0)
        return float(np.max(gaps[live] / tails[live])) if np.any(live) else float("nan")

    @property
    def bound_kind(self) -> str:
        """Shape behind bound_v: rho^2k omega_f (constant) or rho^2k (omega_f + omega_a eta) (variable)."""
        return "constant" if self.ellipticity is None else "variable"

    def bound_ratio(self) -> float:
        """max sup_v / bound_v over the levels; inf when a zero bound meets a nonzero sup_v."""
        worst = 0.0
        for r in self.records:
            if r.bound_v > 0:
                worst = max(worst, r.sup_v / r.bound_v)
            elif r.sup_v > 1e-12:
                return math.inf
        return worst

    @property
    def bounds_hold(self) -> bool:
        return all(r.sup_v <= r.bound_v * (1.0 + GRID_TOL) + 1e-12 for r in self.records)

    @property
    def passed(self) -> bool:
        return bool(self.bounds_hold and self.telescoping_error() <= TELESCOPE_TOL)

    def rows(self) -> List[dict]:
        sums = self.partial_sums()
        gaps = self.taylor_gaps()
        out = []
        for k, r in enumerate(self.records):
            out.append({
                "level": r.level, "radius": r.radius, "sup_v": r.sup_v, "bound_v": r.bound_v,
                "sup_step": r.sup_step, "first_increment": r.first_increment,
                "second_increment": r.second_increment, "drift_increment": r.drift_increment,
                "partial_sum": float(sums[k]), "omega": r.omega, "tail": self.tails[k],
                "taylor_gap": float(gaps[k]), "residual": r.residual,
            })
        return out

    def to_dict(self) -> dict:
        sums = self.partial_sums()
        return {
            "model": self.model,
            "rho": self.rho,
            "levels": self.levels,
            "requested_levels": self.requested,
            "complete": self.complete,
            "omega_f": self.omega_f,
            "omega_a": self.omega_a,
            "eta": self.eta,
            "ellipticity": list(self.ellipticity) if self.ellipticity else None,
            "exponents": {name: self.decay_exponent(name) for name in SERIES},
            "fitted_constants": {name: self.fitted_constant(name) for name in SERIES},
            "partial_sum": float(sums[-1]),
            "last_share": self.last_share(),
            "saturated": self.saturated,
            "dini_constant": float(sums[-1] / self.dini) if math.isfinite(self.dini) and self.dini > 0 else None,
            "telescoping_error": self.telescoping_error(),
            "taylor_constant": self.taylor_constant(),
            "reference_jet": self.reference_jet,
            "bound_kind": self.bound_kind,
            "bound_ratio": self.bound_ratio(),
            "bounds_hold": self.bounds_hold,
            "passed": self.passed,
            "table": self.rows(),
        }


def tail_sums(omega: ModulusOfContinuity, rho: float, levels: int) -> Tuple[float, ...]:
    """sum_{l >= k} omega(rho^l) for k = 0..levels; inf when omega is not Dini."""
    if dini_integral(omega, 0.0, 1.0).divergent:
        return tuple(math.inf for _ in range(levels + 1))
    terms = omega(rho ** np.arange(levels + TAIL_TERMS, dtype=float))
    return tuple(float(np.sum(terms[k:])) for k in range(levels + 1))


def _jet_dict(model: ModelOperator, u) -> Dict[str, float]:
    if isinstance(u, GridSolution):
        return u.center_jet(model)
    jet = compute_jet(u, model.generators, model.origin, model.settings)
    out = {f"X{i}X{j}": jet.second_of(i, j) for i in range(1, model.m + 1) for j in range(1, model.m + 1)}
    if not model.drift.is_zero():
        out["X0"] = jet.drift
    return out


def _derivatives(model: ModelOperator, u: GridSolution, points: np.ndarray, step: float,
                 drift_step: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(X_i u (P, m), X_iX_j u (P, m, m), X_0 u (P,)) by flow differences on the spline."""
    settings = model.settings
    gens = model.generators
    m = model.m
    first = np.column_stack([derivative_along(u, gens[i], points, step, settings) for i in range(1, m + 1)])
    second = np.empty((len(points), m, m))
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            if i == j:
                second[:, i - 1, j - 1] = second_along(u, gens[i], points, step, settings)
            else:
                second[:, i - 1, j - 1] = mixed_along(u, gens[i], gens[j], points, step, settings)
    drift = np.zeros(len(points))
    if not model.drift.is_zero():
        drift = derivative_along(u, gens[DRIFT], points, drift_step, settings)
    return first, second, drift


def _solve_all(problems: Sequence[DirichletProblem], resolution: Optional[int], method: str) -> List[GridSolution]:
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        return list(pool.map(lambda p: dirichlet_solve(p, resolution, method), problems))


def _iterate(model: ModelOperator, reference, f, omega_f: ModulusOfContinuity, levels: Optional[int],
             resolution: Optional[int], method: str, coefficients: Optional[CoefficientField] = None,
             omega_a: Optional[ModulusOfContinuity] = None, eta: float = 0.0,
             ellipticity: Optional[Tuple[float, float]] = None) -> IterationLedger:
    settings = model.settings
    rho = settings.rho
    requested = settings.k_max if levels is None else int(levels)
    if requested < 1:
        raise InputError("The iteration needs at least one level")
    count = requested
    if requested > settings.k_max:
        log.warning("Grid budget allows %d levels; %d requested", settings.k_max, requested)
        count = settings.k_max
    origin = model.origin
    f0 = float(_rhs_values(f, origin)[0])
    problems = [DirichletProblem(model, Cylinder(tuple(origin), rho**k), reference, f0, coefficients)
                for k in range(count + 2)]
    sols = _solve_all(problems, resolution, method)
    omega_a = omega_a or ModulusOfContinuity.zero()
    records = []
    for k in range(count + 1):
        sol, nxt = sols[k], sols[k + 1]
        inner = sol.grid.interior
        sup_v = float(np.max(np.abs(reference(sol.grid.points[inner]) - sol.values[inner])))
        ninner = nxt.grid.interior
        sup_step = float(np.max(np.abs(sol(nxt.grid.points[ninner]) - nxt.values[ninner])))
        targets = nxt.grid.points[nxt.grid.region(rho ** (k + 2))]
        step, dstep = nxt.grid.horizontal_step, nxt.grid.drift_step
        d_this = _derivatives(model, sol, targets, step, dstep)
        d_next = _derivatives(model, nxt, targets, step, dstep)
        w = float(omega_f(rho**k) + omega_a(rho**k) * eta)
        records.append(LevelRecord(
            level=k,
            radius=rho**k,
            sup_v=sup_v,
            sup_step=sup_step,
            first_increment=float(np.max(np.abs(d_this[0] - d_next[0]))) if len(targets) else 0.0,
            second_increment=float(np.max(np.abs(d_this[1] - d_next[1]))) if len(targets) else 0.0,
            drift_increment=float(np.max(np.abs(d_this[2] - d_next[2]))) if len(targets) else 0.0,
            shape_v=rho ** (2 * k) * w,
            omega=w,
            residual=sol.residual,
        ))
    ledger = IterationLedger(
        model=model.name,
        rho=rho,
        requested=requested,
        records=tuple(records),
        jets=tuple(s.center_jet(model) for s in sols),
        reference_jet=_jet_dict(model, reference),
        tails=tail_sums(omega_f, rho, count),
        omega_f=omega_f.label,
        omega_a=omega_a.label,
        eta=eta,
        dini=dini_integral(omega_f, 0.0, 1.0).value,
        ellipticity=ellipticity,
    )
    log.info("Iteration on %s: %d levels, sup v exponent %.3f, last share %.3f",
             model.name, ledger.levels, ledger.decay_exponent("sup_v"), ledger.last_share())
    return ledger


def wang_iteration(model: ModelOperator, reference, f, omega_f: ModulusOfContinuity, levels: Optional[int] = None,
                   resolution: Optional[int] = None, method: str = "direct") -> IterationLedger:
    """L u_k = f(0) on H_{rho^k}(0) with u_k = u on the boundary, u the reference (function or solve)."""
    return _iterate(model, reference, f, omega_f, levels, resolution, method)


def reference_solve(model: ModelOperator, boundary: ScalarFunction, f, coefficients: Optional[CoefficientField] = None,
                    resolution: Optional[int] = None, method: str = "direct") -> GridSolution:
    """Fine solve of L u = f on H_1(0)."""
    problem = DirichletProblem(model, Cylinder(tuple(model.origin), 1.0), boundary, f, coefficients)
    return dirichlet_solve(problem, resolution, method)


def second_derivative_sup(model: ModelOperator, sol: GridSolution, radius: float) -> float:
    """max_ij sup |X_iX_j u| over nodes of H_radius."""
    pts = sol.grid.points[sol.grid.region(radius)]
    _, second, _ = _derivatives(model, sol, pts, sol.grid.horizontal_step, sol.grid.drift_step)
    return float(np.max(np.abs(second))) if len(pts) else 0.0


def variable_coefficient_experiment(model: ModelOperator, coefficients: CoefficientField,
                                    omega_a: ModulusOfContinuity, f, omega_f: ModulusOfContinuity,
                                    levels: Optional[int] = None, boundary: Optional[ScalarFunction] = None,
                                    resolution: Optional[int] = None, reference_resolution: Optional[int] = None,
                                    reference: Optional[GridSolution] = None, method: str = "direct") -> IterationLedger:
    """Frozen-coefficient iteration with a_ij(0) against a reference solve with the variable a_ij.

    eta = max sup |X_iX_j u| over H_{3/4}; the sup v_k shape is rho^2k (omega_f + omega_a eta).
    """
    if coefficients.m != model.m:
        raise InputError(f"Coefficient matrix size {coefficients.m} does not match {model.m} fields")
    if reference is None:
        if boundary is None:
            raise InputError("Give boundary data or a reference solution")
        reference = reference_solve(model, boundary, f, coefficients, reference_resolution, method)
    lam, big, _ = coefficients.ellipticity(reference.grid.points[reference.grid.interior])
    eta = second_derivative_sup(model, reference, ETA_REGION)
    frozen = CoefficientField.from_matrix(coefficients.at(model.origin))
    log.info("Variable coefficients on %s: lambda %.4g, Lambda %.4g, eta %.4g", model.name, lam, big, eta)
    return _iterate(model, reference, f, omega_f, levels, resolution, method, frozen, omega_a, eta, (lam, big))


# ---------- Dini modulus of second derivatives ----------
@dataclass(frozen=True)
class DiniBin:
    d_lo: float
    d_hi: float
    count: int
    measured: float
    shape: float


@dataclass(frozen=True)
class DiniModulusReport:
    model: str
    omega_f: str
    sup_u: float
    sup_f: float
    bins: Tuple[DiniBin, ...]

    @property
    def constant(self) -> float:
        """Fitted c in measured <= c (d sup|u| + d sup|f| + int_0^d omega/r + d int_d^1 omega/r^2)."""
        ratios = [b.measured / b.shape for b in self.bins if b.shape > 0]
        return float(max(ratios)) if ratios else float("nan")

    @property
    def exponent(self) -> float:
        d = np.array([math.sqrt(b.d_lo * b.d_hi) for b in self.bins])
        w = np.array([b.measured for b in self.bins])
        keep = w > 0
        return fit_slope(d[keep], w[keep]) if np.sum(keep) >= 2 else float("nan")

    def slack(self) -> List[float]:
        c = self.constant
        return [c * b.shape - b.measured for b in self.bins]

    def rows(self) -> List[dict]:
        return [{"d_lo": b.d_lo, "d_hi": b.d_hi, "pairs": b.count, "measured": b.measured, "shape": b.shape,
                 "slack": s} for b, s in zip(self.bins, self.slack())]

    def to_dict(self) -> dict:
        return {"model": self.model, "omega_f": self.omega_f, "sup_u": self.sup_u, "sup_f": self.sup_f,
                "constant": self.constant, "exponent": self.exponent, "bins": self.rows()}


def second_order_increment(model: ModelOperator, sol: GridSolution, z, zeta) -> np.ndarray:
    """max_ij |X_iX_j u(z) - X_iX_j u(zeta)| + |X_0 u(z) - X_0 u(zeta)| per pair."""
    step, dstep = sol.grid.horizontal_step, sol.grid.drift_step
    _, sz, dz = _derivatives(model, sol, np.atleast_2d(z), step, dstep)
    _, sw, dw = _derivatives(model, sol, np.atleast_2d(zeta), step, dstep)
    return np.max(np.abs(sz - sw), axis=(1, 2)) + np.abs(dz - dw)


def dini_modulus_of_second_derivatives(model: ModelOperator, f, omega_f: ModulusOfContinuity,
                                       boundary: Optional[ScalarFunction] = None, pairs: int = 4000,
                                       rng: Optional[np.random.Generator] = None, resolution: Optional[int] = None,
                                       bins: int = 3, reference: Optional[GridSolution] = None,
                                       method: str = "direct") -> DiniModulusReport:
    """Second-order increments of the reference solve on H_1 over pairs z in H_{1/2}, d_L(z, zeta) in [4 Delta, 1/2]."""
    rng = np.random.default_rng(model.settings.seed) if rng is None else rng
    if reference is None:
        if boundary is None:
            raise InputError("Give boundary data or a reference solution")
        reference = reference_solve(model, boundary, f, resolution=resolution, method=method)
    grid = reference.grid
    chart = grid.chart
    d_lo, d_hi = 4.0 * grid.horizontal_step, 0.5
    if d_lo >= d_hi:
        raise InputError(f"Grid resolution {grid.resolution} is too coarse for distance bins")
    candidates = np.flatnonzero(grid.region(0.5))
    z = grid.points[rng.choice(candidates, size=pairs)]
    raw = rng.uniform(-1.0, 1.0, size=(pairs, chart.dimension))
    unit = chart.dilation(raw, 1.0 / np.maximum(chart.gauge(raw), 1e-300))
    d = np.exp(rng.uniform(math.log(d_lo), math.log(d_hi), size=pairs))
    zeta, ok = chart.e_map_from(z, chart.dilation(unit, d))
    h, conv, _ = chart.log_map_from(chart.base_point, zeta)
    keep = ok & conv & (chart.gauge(h) < 0.9)
    z, zeta, d = z[keep], zeta[keep], d[keep]
    measured = second_order_increment(model, reference, z, zeta)
    inner = grid.points[grid.interior]
    sup_f = float(np.max(np.abs(_rhs_values(f, inner))))
    edges = np.geomspace(d_lo, d_hi, bins + 1)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (d >= lo) & (d < hi)
        count = int(np.sum(sel))
        if count < MIN_PAIRS_PER_BIN:
            raise BinningError(f"Distance bin [{lo:.3g}, {hi:.3g}) holds {count} pairs; need {MIN_PAIRS_PER_BIN}")
        out.append(DiniBin(float(lo), float(hi), count, float(np.max(measured[sel])),
                           dini_bound_shape(omega_f, float(hi), reference.sup(), sup_f)))
    report = DiniModulusReport(model.name, omega_f.label, reference.sup(), sup_f, tuple(out))
    log.info("Dini modulus on %s: c %.4g, exponent %.3f", model.name, report.constant, report.exponent)
    return report


# ---------- Scale-invariant estimates ----------
@dataclass(frozen=True)
class PoolMember:
    """Boundary data for the scale checks: a chart profile dilated to every H_R, or one fixed function."""

    label: str
    function: Callable
    dilated: bool = True

    def boundary(self, chart: ExpChart, radius: float) -> Callable:
        return ScaledChartFunction(chart, radius, self.function) if self.dilated else self.function


def default_pool(model: ModelOperator, count: int = 3, rng: Optional[np.random.Generator] = None) -> List[Callable]:
    """Profiles on scaled chart coordinates: the first coordinate plus random trigonometric sums."""
    rng = np.random.default_rng(model.settings.seed) if rng is None else rng
    pool: List[Callable] = [lambda h: np.atleast_2d(h)[:, 0]]
    pool.extend(TrigSum.random(model.dimension, rng) for _ in range(count - 1))
    return pool


def fixed_pool(model: ModelOperator) -> List[Callable]:
    """x1 and x1^2 + 2t in model coordinates, one function for every R; both solve L u = 0 on the shipped models."""
    x, t = model.variables[0], model.variables[-1]
    return [model.function(x), model.function(f"{x}**2 + 2*{t}")]


def _members(model: ModelOperator, pool: Optional[Sequence[Callable]],
             fixed: Optional[Sequence[Callable]]) -> Tuple[PoolMember, ...]:
    pool = default_pool(model) if pool is None else pool
    fixed = fixed_pool(model) if fixed is None else fixed
    members = [PoolMember(f"dilated:{j}", p) for j, p in enumerate(pool)]
    members += [PoolMember(f"fixed:{getattr(f, 'text', j)}", f, dilated=False) for j, f in enumerate(fixed)]
    if not members:
        raise InputError("The scale checks need at least one pool member")
    return tuple(members)


def _scaled_solves(model: ModelOperator, radii: Sequence[float], members: Sequence[PoolMember],
                   resolution: Optional[int], method: str) -> Dict[Tuple[int, int], GridSolution]:
    chart = model.chart()
    keys = [(a, b) for a in range(len(radii)) for b in range(len(members))]
    problems = [DirichletProblem(model, Cylinder(tuple(model.origin), radii[a]),
                                 members[b].boundary(chart, radii[a])) for a, b in keys]
    return dict(zip(keys, _solve_all(problems, resolution, method)))


def _stability(values: Sequence[float]) -> float:
    vals = np.asarray([v for v in values if np.isfinite(v) and v > 0])
    return float(np.max(vals) / np.min(vals)) if len(vals) >= 2 else 1.0


def _slope_or_nan(radii: Sequence[float], values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2 or not np.all(np.isfinite(values) & (values > 0)):
        return float("nan")
    return fit_slope(np.asarray(radii, dtype=float), values)


@dataclass(frozen=True)
class MeanValueReport:
    model: str
    radii: Tuple[float, ...]
    constants: Tuple[Tuple[float, ...], ...]
    members: Tuple[str, ...] = ()

    @property
    def constant(self) -> float:
        return float(np.max(self.constants))

    @property
    def stability(self) -> float:
        """Worst max/min of the fitted C across radii, per pool member."""
        return max(_stability(col) for col in zip(*self.constants))

    def prefactor_slopes(self) -> Dict[str, float]:
        """Slope of the prefactor C/R against R for each fixed member; a scale-free C gives -1."""
        out = {}
        for j, label in enumerate(self.members):
            if label.startswith("fixed:"):
                out[label] = _slope_or_nan(self.radii, [row[j] / r for r, row in zip(self.radii, self.constants)])
        return out

    @property
    def passed(self) -> bool:
        slopes_ok = all(abs(s + 1.0) <= SLOPE_TOL for s in self.prefactor_slopes().values() if np.isfinite(s))
        return bool(self.stability <= STABILITY_RATIO and slopes_ok)

    def rows(self) -> List[dict]:
        labels = self.members or tuple(f"dilated:{j}" for j in range(len(self.constants[0])))
        return [{"radius": r, "member": labels[j], "C": c, "prefactor": c / r}
                for r, row in zip(self.radii, self.constants) for j, c in enumerate(row)]

    def to_dict(self) -> dict:
        return {"model": self.model, "radii": list(self.radii), "constant": self.constant,
                "stability": self.stability, "prefactor_slopes": self.prefactor_slopes(), "passed": self.passed,
                "table": self.rows()}


def lipschitz_constant(sol: GridSolution) -> float:
    """max over nodes z of H_{R/2} of |u(z) - u(z0)| R / (d_L(z0, z) ||u||)."""
    grid = sol.grid
    norm = sol.sup()
    mask = grid.region(grid.radius / 2.0)
    mask[grid.center_index] = False
    if norm == 0.0 or not np.any(mask):
        return 0.0
    diff = np.abs(sol.values[mask] - sol.values[grid.center_index])
    return float(np.max(diff * grid.radius / (grid.gauge[mask] * norm)))


def mean_value_check(model: ModelOperator, radii: Sequence[float] = SCALE_RADII,
                     pool: Optional[Sequence[Callable]] = None, resolution: Optional[int] = None,
                     method: str = "direct", fixed: Optional[Sequence[Callable]] = None) -> MeanValueReport:
    """|u(z) - u(z0)| <= (C/R) d_L(z, z0) ||u|| on H_{R/2} for discrete solutions of L u = 0 on H_R.

    Dilated profiles give one shape per R; fixed functions show how the prefactor C/R grows as R shrinks.
    """
    members = _members(model, pool, fixed)
    sols = _scaled_solves(model, radii, members, resolution, method)
    table = tuple(tuple(lipschitz_constant(sols[(a, b)]) for b in range(len(members))) for a in range(len(radii)))
    report = MeanValueReport(model.name, tuple(float(r) for r in radii), table, tuple(m.label for m in members))
    log.info("Mean value on %s: C %.4g, stability %.3f", model.name, report.constant, report.stability)
    return report


@dataclass(frozen=True)
class AprioriReport:
    model: str
    radii: Tuple[float, ...]
    directions: Tuple[str, ...]
    degrees: Tuple[int, ...]
    raw: Tuple[Tuple[Tuple[float, ...], ...], ...]
    members: Tuple[str, ...] = ()

    def scaled(self) -> np.ndarray:
        """(radius, member, direction) array of sup|D u| R^deg / ||u||."""
        r = np.asarray(self.radii)[:, None, None]
        return np.asarray(self.raw) * r ** np.asarray(self.degrees, dtype=float)

    def measured(self) -> np.ndarray:
        """(member, direction) mask: the scaled derivative clears DERIVATIVE_FLOOR at every radius.

        Scaled values are sup|D u| R^deg / ||u||, of order one when the derivative is alive, so members
        whose derivative vanishes identically (d_y of x, second derivatives of a linear function) drop out.
        """
        return np.all(self.scaled() > DERIVATIVE_FLOOR, axis=0)

    def exponents(self) -> Dict[str, float]:
        """Per direction, the worst fitted slope of sup|D u|/||u|| against R over the measured members."""
        raw = np.asarray(self.raw)
        mask = self.measured()
        out = {}
        for k, name in enumerate(self.directions):
            slopes = [fit_slope(self.radii, raw[:, j, k]) for j in range(raw.shape[1]) if mask[j, k]]
            target = -self.degrees[k]
            out[name] = max(slopes, key=lambda s: abs(s - target)) if slopes else float("nan")
        return out

    def constants(self) -> Dict[str, float]:
        scaled = self.scaled()
        return {name: float(np.max(scaled[:, :, k])) for k, name in enumerate(self.directions)}

    def stability(self) -> Dict[str, float]:
        """Per direction, max/min across radii of the largest scaled value among measured members."""
        scaled = self.scaled()
        mask = self.measured()
        out = {}
        for k, name in enumerate(self.directions):
            live = mask[:, k]
            out[name] = _stability(np.max(scaled[:, live, k], axis=1)) if np.any(live) else 1.0
        return out

    @property
    def passed(self) -> bool:
        fitted = [(e, d) for e, d in zip(self.exponents().values(), self.degrees) if np.isfinite(e)]
        ok_exp = bool(fitted) and all(abs(e + d) <= SLOPE_TOL for e, d in fitted)
        return bool(ok_exp and all(s <= STABILITY_RATIO for s in self.stability().values()))

    def rows(self) -> List[dict]:
        scaled = self.scaled()
        mask = self.measured()
        labels = self.members or tuple(f"dilated:{j}" for j in range(scaled.shape[1]))
        return [{"radius": r, "member": labels[j], "direction": name, "degree": self.degrees[k],
                 "sup_ratio": self.raw[a][j][k], "C": float(scaled[a, j, k]), "measured": bool(mask[j, k])}
                for a, r in enumerate(self.radii) for j in range(scaled.shape[1])
                for k, name in enumerate(self.directions)]

    def to_dict(self) -> dict:
        return {"model": self.model, "radii": list(self.radii), "members": list(self.members),
                "exponents": self.exponents(), "constants": self.constants(), "stability": self.stability(),
                "passed": self.passed, "table": self.rows()}


def derivative_sups(model: ModelOperator, sol: GridSolution) -> List[float]:
    """sup over H_{R/2} of |Y_k u| for every basis field, then |X_iX_j u|, each divided by ||u||.

    Y_k steps are the grid spacing of chart axis k, which scales like R^deg(Y_k).
    """
    grid = sol.grid
    chart = grid.chart
    norm = sol.sup()
    pts = grid.points[grid.region(grid.radius / 2.0)]
    out = []
    for k, entry in enumerate(chart.basis.entries):
        vals = derivative_along(sol, entry.field, pts, float(grid.spacing[k]), model.settings)
        out.append(float(np.max(np.abs(vals))))
    _, second, _ = _derivatives(model, sol, pts, grid.horizontal_step, grid.drift_step)
    for i in range(model.m):
        for j in range(model.m):
            out.append(float(np.max(np.abs(second[:, i, j]))))
    return [v / norm if norm > 0 else 0.0 for v in out]


def apriori_derivative_check(model: ModelOperator, radii: Sequence[float] = SCALE_RADII,
                             pool: Optional[Sequence[Callable]] = None, resolution: Optional[int] = None,
                             method: str = "direct", fixed: Optional[Sequence[Callable]] = None) -> AprioriReport:
    """|Y_k u| <= C ||u|| / R^deg(Y_k) and |X_iX_j u| <= C ||u|| / R^2 on H_{R/2}."""
    members = _members(model, pool, fixed)
    chart = model.chart()
    names = [f"Y{k}:{w.label()}" for k, w in enumerate(chart.basis.words)]
    names += [f"X{i}X{j}" for i in range(1, model.m + 1) for j in range(1, model.m + 1)]
    degrees = tuple(chart.degrees) + (2,) * (model.m * model.m)
    sols = _scaled_solves(model, radii, members, resolution, method)
    raw = tuple(tuple(tuple(derivative_sups(model, sols[(a, b)])) for b in range(len(members)))
                for a in range(len(radii)))
    report = AprioriReport(model.name, tuple(float(r) for r in radii), tuple(names), degrees, raw,
                           tuple(m.label for m in members))
    log.info("A-priori bounds on %s: exponents %s", model.name,
             {k: f"{v:.3f}" for k, v in report.exponents().items()})
    return report
