"""
taylor.py

Second-order jets along the fields, the anisotropic Taylor polynomial in chart
coordinates, remainder-order fits and the half-order drift check of the C^2_L class.

Run:
  jet = compute_jet(u, chart.generators, z)
  taylor_eval(jet, chart, zeta)
  remainder_order(u, chart).slope
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .chart import ExpChart
from .config import DEFAULT_SETTINGS, LabSettings
from .errors import InputError, NumericError
from .expressions import ScalarExpression
from .flows import flow_batch
from .polynomial import Polynomial
from .vectorfields import DRIFT, VectorField

log = logging.getLogger(__name__)

ScalarFunction = Union[Polynomial, ScalarExpression, Callable[[np.ndarray], np.ndarray]]
MIXED_MODES = ("chart", "symmetric")


# ---------- Derivatives along flows ----------
def _values(u: ScalarFunction, pts: np.ndarray) -> np.ndarray:
    out = np.asarray(u(pts), dtype=float)
    if not np.all(np.isfinite(out)):
        raise NumericError("Non-finite function values along a flow")
    return out


def derivative_along(u: ScalarFunction, x: VectorField, points, step: float,
                     settings: LabSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """(u(exp(hX)z) - u(exp(-hX)z)) / 2h."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    plus, _ = flow_batch(x, step, pts, settings)
    minus, _ = flow_batch(x, -step, pts, settings)
    return (_values(u, plus) - _values(u, minus)) / (2.0 * step)


def second_along(u: ScalarFunction, x: VectorField, points, step: float,
                 settings: LabSettings = DEFAULT_SETTINGS) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    plus, _ = flow_batch(x, step, pts, settings)
    minus, _ = flow_batch(x, -step, pts, settings)
    return (_values(u, plus) - 2.0 * _values(u, pts) + _values(u, minus)) / (step * step)


def mixed_along(u: ScalarFunction, xi: VectorField, xj: VectorField, points, step: float,
                settings: LabSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """X_i(X_j u): outer difference along X_i of the inner difference along X_j."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    plus, _ = flow_batch(xi, step, pts, settings)
    minus, _ = flow_batch(xi, -step, pts, settings)
    inner_plus = derivative_along(u, xj, plus, step, settings)
    inner_minus = derivative_along(u, xj, minus, step, settings)
    return (inner_plus - inner_minus) / (2.0 * step)


# ---------- Jets ----------
@dataclass(frozen=True)
class JetData:
    """u, X_i u, X_i X_j u (i, j = 1..m) and X_0 u at one point; index i is stored at i-1."""

    base_point: Tuple[float, ...]
    value: float
    first: Tuple[float, ...]
    second: Tuple[Tuple[float, ...], ...]
    drift: float

    def __post_init__(self):
        m = len(self.first)
        if len(self.second) != m or any(len(row) != m for row in self.second):
            raise InputError(f"Second-derivative table must be {m}x{m}")
        flat = [self.value, self.drift, *self.first, *[v for row in self.second for v in row]]
        if not np.all(np.isfinite(flat)):
            raise NumericError("Jet entries must be finite")

    @property
    def m(self) -> int:
        return len(self.first)

    def first_of(self, i: int) -> float:
        return self.first[i - 1]

    def second_of(self, i: int, j: int) -> float:
        return self.second[i - 1][j - 1]

    def bracket_value(self, i: int, j: int) -> float:
        """[X_i, X_j]u = X_iX_j u - X_jX_i u."""
        return self.second_of(i, j) - self.second_of(j, i)

    def max_difference(self, other: "JetData") -> float:
        a = np.array([self.value, self.drift, *self.first, *np.ravel(self.second)])
        b = np.array([other.value, other.drift, *other.first, *np.ravel(other.second)])
        return float(np.max(np.abs(a - b)))

    def to_dict(self) -> dict:
        return {
            "base_point": list(self.base_point),
            "value": self.value,
            "first": list(self.first),
            "second": [list(r) for r in self.second],
            "drift": self.drift,
        }


def _exact_polynomial(u: ScalarFunction) -> Optional[Polynomial]:
    if isinstance(u, Polynomial):
        return u
    if isinstance(u, ScalarExpression):
        return u.polynomial
    return None


def jet_from_polynomial(u: Polynomial, generators: Sequence[VectorField], z) -> JetData:
    point = np.asarray(z, dtype=float)
    m = len(generators) - 1
    first_polys = [generators[i].apply(u) for i in range(1, m + 1)]
    second = tuple(
        tuple(float(generators[i].apply(first_polys[j - 1])(point)) for j in range(1, m + 1))
        for i in range(1, m + 1)
    )
    return JetData(
        base_point=tuple(point.tolist()),
        value=float(u(point)),
        first=tuple(float(p(point)) for p in first_polys),
        second=second,
        drift=float(generators[DRIFT].apply(u)(point)),
    )


def jet_from_function(u: ScalarFunction, generators: Sequence[VectorField], z,
                      settings: LabSettings = DEFAULT_SETTINGS) -> JetData:
    """Finite differences along the flows with step settings.jet_step."""
    point = np.atleast_2d(np.asarray(z, dtype=float))
    h = settings.jet_step
    m = len(generators) - 1
    first = tuple(float(derivative_along(u, generators[i], point, h, settings)[0]) for i in range(1, m + 1))
    rows = []
    for i in range(1, m + 1):
        row = []
        for j in range(1, m + 1):
            if i == j:
                row.append(float(second_along(u, generators[i], point, h, settings)[0]))
            else:
                row.append(float(mixed_along(u, generators[i], generators[j], point, h, settings)[0]))
        rows.append(tuple(row))
    drift = float(derivative_along(u, generators[DRIFT], point, h, settings)[0]) if not generators[DRIFT].is_zero() else 0.0
    return JetData(tuple(point[0].tolist()), float(_values(u, point)[0]), first, tuple(rows), drift)


def compute_jet(u: ScalarFunction, generators: Sequence[VectorField], z,
                settings: LabSettings = DEFAULT_SETTINGS, exact: Optional[bool] = None) -> JetData:
    """Exact jets for polynomial u unless exact=False; finite differences otherwise."""
    poly = _exact_polynomial(u)
    if poly is not None and exact is not False:
        return jet_from_polynomial(poly, generators, z)
    if exact:
        raise InputError("Exact jets need a polynomial function")
    return jet_from_function(u, generators, z, settings)


# ---------- Taylor polynomial ----------
def taylor_from_coordinates(jet: JetData, chart: ExpChart, h, mixed: str = "chart") -> np.ndarray:
    """T^2 u at E(z, h) written in the chart coordinates h; (P, n) -> (P,)."""
    if mixed not in MIXED_MODES:
        raise InputError(f"mixed must be one of {MIXED_MODES}, got {mixed!r}")
    h = np.atleast_2d(np.asarray(h, dtype=float))
    words = chart.basis.words
    out = np.full(len(h), jet.value)
    horizontal = []
    for k, word in enumerate(words):
        if word.degree == 1:
            i = word.leaf
            out = out + h[:, k] * jet.first_of(i)
            horizontal.append((k, i))
        elif word.degree == 2:
            if word.is_leaf:
                out = out + h[:, k] * jet.drift
            else:
                i, j = word.leaves()
                out = out + h[:, k] * jet.bracket_value(i, j)
    for k, i in horizontal:
        out = out + 0.5 * h[:, k] ** 2 * jet.second_of(i, i)
    if mixed == "symmetric":
        for ka, i in horizontal:
            for kb, j in horizontal:
                if i != j:
                    out = out + 0.5 * h[:, ka] * h[:, kb] * jet.second_of(i, j)
    else:
        order = [k for k in chart.application_order if words[k].degree == 1]
        leaf = dict(horizontal)
        for pos, ka in enumerate(order):
            for kb in order[pos + 1:]:
                out = out + h[:, ka] * h[:, kb] * jet.second_of(leaf[ka], leaf[kb])
    return out


def taylor_eval(jet: JetData, chart: ExpChart, zeta, mixed: str = "chart") -> Union[float, np.ndarray]:
    if tuple(np.round(jet.base_point, 12)) != tuple(np.round(chart.base_point, 12)):
        raise InputError("Jet and chart must share a base point")
    zeta = np.asarray(zeta, dtype=float)
    h = chart.log_map(zeta)
    out = taylor_from_coordinates(jet, chart, h, mixed)
    return float(out[0]) if zeta.ndim == 1 else out


# ---------- Remainder order ----------
@dataclass(frozen=True)
class RemainderFit:
    slope: float
    exact: bool
    table: Tuple[Tuple[float, float, int], ...]

    def rows(self) -> List[dict]:
        return [{"r": r, "remainder": rem, "direction": d} for r, rem, d in self.table]


def sample_directions(chart: ExpChart, rng: np.random.Generator) -> np.ndarray:
    """+-e_k for every basis coordinate plus n random mixed directions, all of unit gauge."""
    n = chart.dimension
    eye = np.eye(n)
    mixed_dirs = rng.uniform(-1.0, 1.0, size=(n, n))
    dirs = np.vstack([eye, -eye, mixed_dirs])
    return chart.dilation(dirs, 1.0 / chart.gauge(dirs))


def fit_slope(radii, values) -> float:
    return float(np.polyfit(np.log(radii), np.log(values), 1)[0])


def remainder_order(
    u: ScalarFunction,
    chart: ExpChart,
    radii: Optional[Sequence[float]] = None,
    rng: Optional[np.random.Generator] = None,
    mixed: str = "chart",
    exact_jet: Optional[bool] = None,
) -> RemainderFit:
    settings = chart.settings
    radii = np.geomspace(1e-3, 1e-1, 9) if radii is None else np.asarray(radii, dtype=float)
    rng = np.random.default_rng(settings.seed) if rng is None else rng
    jet = compute_jet(u, chart.generators, chart.base_point, settings, exact=exact_jet)
    dirs = sample_directions(chart, rng)
    table = []
    worst = []
    for r in radii:
        h = chart.dilation(dirs, r)
        pts, ok = chart.e_map_batch(h, enforce_radius=False)
        rem = np.abs(_values(u, pts) - taylor_from_coordinates(jet, chart, h, mixed))
        rem = np.where(ok, rem, np.nan)
        for d, value in enumerate(rem):
            table.append((float(r), float(value), d))
        worst.append(float(np.nanmax(rem)))
    worst = np.asarray(worst)
    above = worst > settings.noise_floor
    if np.sum(above) < 2:
        log.info("Remainders at the noise floor: exact to machine precision")
        return RemainderFit(float("inf"), True, tuple(table))
    slope = fit_slope(radii[above], worst[above])
    log.info("Remainder slope %.3f over r in [%g, %g]", slope, radii[0], radii[-1])
    return RemainderFit(slope, False, tuple(table))


# ---------- C^2_L drift condition ----------
@dataclass(frozen=True)
class C2LReport:
    steps: Tuple[float, ...]
    sup_ratio: Tuple[float, ...]
    tolerance: float

    @property
    def decreasing(self) -> bool:
        slack = 1e-3 * self.tolerance
        return all(b <= a + slack for a, b in zip(self.sup_ratio, self.sup_ratio[1:]))

    @property
    def passed(self) -> bool:
        return bool(self.decreasing and self.sup_ratio[-1] < self.tolerance)

    def to_dict(self) -> dict:
        return {"steps": list(self.steps), "sup_ratio": list(self.sup_ratio), "tolerance": self.tolerance,
                "decreasing": self.decreasing, "passed": self.passed}


def c2l_mixed_check(
    u: ScalarFunction,
    chart: ExpChart,
    samples,
    steps: Optional[Sequence[float]] = None,
) -> C2LReport:
    """sup over samples and i of |X_i u(exp(sX_0)z) - X_i u(z)| / |s|^(1/2), per s (decreasing)."""
    settings = chart.settings
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    steps = np.geomspace(1e-2, 1e-6, 5) if steps is None else np.asarray(steps, dtype=float)
    gens = chart.generators
    drift = gens[DRIFT]
    h = settings.jet_step
    base = [derivative_along(u, gens[i], pts, h, settings) for i in range(1, len(gens))]
    sups = []
    for s in steps:
        moved = np.vstack([flow_batch(drift, s, pts, settings)[0], flow_batch(drift, -s, pts, settings)[0]])
        ratio = 0.0
        for i, b in zip(range(1, len(gens)), base):
            diff = np.abs(derivative_along(u, gens[i], moved, h, settings) - np.concatenate([b, b]))
            ratio = max(ratio, float(np.max(diff)) / np.sqrt(abs(s)))
        sups.append(ratio)
    report = C2LReport(tuple(float(s) for s in steps), tuple(sups), settings.c2l_tol)
    log.info("C2L drift ratios %s -> %s", [f"{v:.3g}" for v in sups], "pass" if report.passed else "fail")
    return report
