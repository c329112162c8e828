"""
kernel_checks.py

Numerical checks built on a model's fundamental solution: the two kernel oracles
(L Gamma = 0 off the pole, convolution reproduction), the d_L-power bounds, annulus
estimates, the representation formula on H_R and the second derivatives of the
cut-off potential.

Run:
  model = get_model("kolmogorov")
  kernel_residual_check(model).passed
  gamma_bound_check(model, samples=10000).to_dict()
  representation_check(model, model.function("x"), radius=0.5).relative_error
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .chart import ExpChart
from .errors import InputError
from .models import CUTOFF_INNER, Cylinder, CutOff, ModelOperator, cutoff, kolmogorov_gamma
from .taylor import ScalarFunction, _exact_polynomial, derivative_along, mixed_along, second_along
from .vectorfields import DRIFT, VectorField

log = logging.getLogger(__name__)

LOG_UNDERFLOW = np.log(1e-300)  # log Gamma below this counts as underflowed
RESIDUAL_TOL = 1e-4
CONVOLUTION_TOL = 1e-2
STABILITY_TOL = 0.2
SCALE_RATIO = 2.0
QUADRATURE_TOL = 2e-2
ANNULUS_RADII = (1.0, 0.5, 0.25, 0.125)
POTENTIAL_RADII = (1.0, 0.5, 0.25)
JAC_REL = 1e-6


# ---------- helpers ----------
def _require_kernel(model: ModelOperator):
    if model.kernel is None:
        raise InputError(f"Model {model.name} has no fundamental-solution oracle")


def _drift_index(chart: ExpChart) -> Optional[int]:
    for k, word in enumerate(chart.basis.words):
        if word.leaves() == (DRIFT,):
            return k
    return None


def kernel_in_first_argument(model: ModelOperator, zeta, closed_form: bool = False):
    """z -> Gamma(z, zeta_p), row p of z paired with pole p."""
    _require_kernel(model)
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    if closed_form and model.name == "kolmogorov":
        return lambda pts: kolmogorov_gamma(pts, zeta, model.settings)
    return lambda pts: model.kernel(pts, zeta)


def offsets(chart: ExpChart, count: int, rng: np.random.Generator, d_lo: float, d_hi: float) -> np.ndarray:
    """Chart coordinates with gauge log-uniform in [d_lo, d_hi] and a nonnegative drift coordinate."""
    raw = rng.uniform(-1.0, 1.0, size=(count, chart.dimension))
    k0 = _drift_index(chart)
    if k0 is not None:
        raw[:, k0] = np.abs(raw[:, k0])
    unit = chart.dilation(raw, 1.0 / np.maximum(chart.gauge(raw), 1e-300))
    levels = np.exp(rng.uniform(np.log(d_lo), np.log(d_hi), size=count))
    return chart.dilation(unit, levels)


def _time_gap(z: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    return z[:, -1] - zeta[:, -1]


@dataclass(frozen=True)
class KernelJet:
    """Gamma and its field derivatives divided by Gamma at pairs (z_p, zeta_p)."""

    log_gamma: np.ndarray
    first: np.ndarray     # X_i Gamma / Gamma, (P, m)
    second: np.ndarray    # X_i X_j Gamma / Gamma, (P, m, m)
    drift: np.ndarray     # X_0 Gamma / Gamma, (P,)

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma)

    @property
    def underflow(self) -> np.ndarray:
        return self.log_gamma < LOG_UNDERFLOW


def kernel_jet(model: ModelOperator, z, zeta) -> KernelJet:
    """Analytic X_i Gamma, X_i X_j Gamma and X_0 Gamma in the first argument, as ratios to Gamma.

    X_i X_j Gamma / Gamma = sum_k (X_i b^j_k) g_k + b^i (H + g g^T) b^j with g, H the gradient and
    Hessian of log Gamma and b^j the coefficients of X_j.
    """
    _require_kernel(model)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    z, zeta = np.broadcast_arrays(z, zeta)
    gens = model.generators
    m = model.m
    logs, grad, hess = model.kernel.log_derivatives(z, zeta)
    outer = hess + grad[:, :, None] * grad[:, None, :]
    coeff = [np.atleast_2d(g(z)) for g in gens]
    first = np.stack([np.einsum("pk,pk->p", coeff[i], grad) for i in range(1, m + 1)], axis=1)
    second = np.empty((len(z), m, m))
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            transported = np.stack([gens[i].apply(c)(z) for c in gens[j].coefficients], axis=1)
            second[:, i - 1, j - 1] = (np.einsum("pk,pk->p", transported, grad)
                                       + np.einsum("pk,pkl,pl->p", coeff[i], outer, coeff[j]))
    drift = np.einsum("pk,pk->p", coeff[DRIFT], grad)
    return KernelJet(logs, first, second, drift)


def _spread(values: Sequence[float]) -> float:
    vals = np.asarray([v for v in values if np.isfinite(v) and v > 0])
    if len(vals) < 2:
        return 1.0
    return float(np.max(vals) / np.min(vals))


# ---------- Oracle (i): L Gamma = 0 off the pole ----------
@dataclass(frozen=True)
class KernelResidualReport:
    model: str
    samples: int
    max_relative: float
    closed_form_gap: float
    underflow: int = 0
    tolerance: float = RESIDUAL_TOL

    @property
    def passed(self) -> bool:
        return bool(self.samples > 0 and self.max_relative < self.tolerance and self.closed_form_gap < self.tolerance)

    def to_dict(self) -> dict:
        return {"model": self.model, "samples": self.samples, "max_relative": self.max_relative,
                "closed_form_gap": self.closed_form_gap, "underflow": self.underflow,
                "tolerance": self.tolerance, "passed": self.passed}


def kernel_residual_check(model: ModelOperator, samples: int = 100, rng: Optional[np.random.Generator] = None,
                          distance: Tuple[float, float] = (0.1, 0.5)) -> KernelResidualReport:
    """|L_z Gamma / Gamma| relative to |sum a X_iX_j Gamma / Gamma| + |X_0 Gamma / Gamma| + 1/s, d_L(zeta, z) in the band.

    The ratios are analytic, so pairs where Gamma underflows still count; their number is reported.
    """
    _require_kernel(model)
    rng = np.random.default_rng(model.settings.seed) if rng is None else rng
    chart = model.chart()
    zeta_all, _ = chart.e_map_batch(chart.sample_coordinates(8 * samples, rng, 0.2), enforce_radius=False)
    h = offsets(chart, 8 * samples, rng, *distance)
    z_all, ok = chart.e_map_from(zeta_all, h)
    s_all = _time_gap(z_all, zeta_all)
    # keep pairs whose time gap carries a fair share of the distance
    keep = np.flatnonzero(ok & (s_all >= (chart.gauge(h) / 4.0) ** 2))[:samples]
    if len(keep) < samples:
        log.warning("Only %d of %d residual samples usable", len(keep), samples)
    z, zeta, s = z_all[keep], zeta_all[keep], s_all[keep]
    jet = kernel_jet(model, z, zeta)
    a = model.coefficients(z)
    horizontal = np.einsum("pij,pij->p", a, jet.second)
    scale = np.abs(horizontal) + np.abs(jet.drift) + 1.0 / s
    rel = np.abs(horizontal - jet.drift) / scale
    gap = 0.0
    if model.name == "kolmogorov":
        reference = model.kernel(z, zeta)
        closed = kernel_in_first_argument(model, zeta, closed_form=True)(z)
        live = reference > 0.0
        if np.any(live):
            gap = float(np.max(np.abs(closed[live] - reference[live]) / reference[live]))
    underflow = int(np.sum(jet.underflow))
    if underflow:
        log.info("Kernel residual on %s: Gamma underflows at %d of %d pairs", model.name, underflow, len(keep))
    report = KernelResidualReport(model.name, int(len(keep)), float(np.max(rel)) if len(rel) else float("inf"),
                                  gap, underflow)
    log.info("Kernel residual on %s: %.3g over %d pairs", model.name, report.max_relative, report.samples)
    return report


# ---------- Oracle (ii): convolution reproduction ----------
def bump_density(points) -> np.ndarray:
    """exp(-|xi|^2/2) * 64 (tau(1 - tau))^3 on 0 < tau < 1; maximum 1."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tau = pts[:, -1]
    window = np.where((tau > 0.0) & (tau < 1.0), 64.0 * (tau * (1.0 - tau)) ** 3, 0.0)
    return np.exp(-0.5 * np.sum(pts[:, :-1] ** 2, axis=1)) * window


@dataclass(frozen=True)
class ConvolutionReport:
    model: str
    points: Tuple[Tuple[float, ...], ...]
    errors: Tuple[float, ...]
    tolerance: float = CONVOLUTION_TOL

    @property
    def max_error(self) -> float:
        return float(max(self.errors))

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tolerance)

    def rows(self) -> List[dict]:
        return [{"point": list(p), "error": e} for p, e in zip(self.points, self.errors)]

    def to_dict(self) -> dict:
        return {"model": self.model, "max_error": self.max_error, "tolerance": self.tolerance,
                "passed": self.passed, "points": self.rows()}


def convolution_check(model: ModelOperator, points: int = 10, rng: Optional[np.random.Generator] = None) -> ConvolutionReport:
    """v = int Gamma(., zeta) phi(zeta) dzeta must satisfy L v = -phi; error relative to max phi = 1."""
    _require_kernel(model)
    rng = np.random.default_rng(model.settings.seed) if rng is None else rng
    n = model.kernel.space_dimension
    pts = np.column_stack([rng.uniform(-0.5, 0.5, size=(points, n)), rng.uniform(0.3, 0.9, size=points)])

    def potential(p):
        return model.kernel.potential(bump_density, p, s_max=p[:, -1])

    lv = model.apply(potential, pts, scale=3.0)
    err = np.abs(lv + bump_density(pts))
    report = ConvolutionReport(model.name, tuple(tuple(p) for p in pts.tolist()), tuple(err.tolist()))
    log.info("Convolution reproduction on %s: max error %.3g", model.name, report.max_error)
    return report


# ---------- Homogeneity ----------
def kernel_homogeneity(model: ModelOperator, samples: int = 50, radii: Sequence[float] = (0.25, 0.5, 1.0),
                       rng: Optional[np.random.Generator] = None) -> dict:
    """max |Gamma(0, delta_r zeta) r^(q-2) / Gamma(0, zeta) - 1| over poles in the past of the origin."""
    _require_kernel(model)
    rng = np.random.default_rng(model.settings.seed) if rng is None else rng
    chart = model.chart()
    h = -offsets(chart, samples, rng, 0.2, 0.5)
    zeta, ok = chart.e_map_batch(h, enforce_radius=False)
    origin = np.zeros((1, model.dimension))
    base = model.kernel(origin, zeta)
    live = ok & (base > 1e-250)
    worst = 0.0
    for r in radii:
        scaled, ok_r = chart.e_map_batch(chart.dilation(h, r), enforce_radius=False)
        ratio = model.kernel(origin, scaled) * r ** (chart.q - 2) / np.where(live, base, 1.0)
        worst = max(worst, float(np.max(np.abs(ratio[live & ok_r] - 1.0))))
    return {"model": model.name, "q": chart.q, "samples": int(np.sum(live)), "max_deviation": worst}


# ---------- d_L-power bounds ----------
BOUND_FAMILIES = ("gamma", "first", "second", "drift")


@dataclass(frozen=True)
class GammaBoundReport:
    model: str
    q: int
    samples: Tuple[int, int]
    sups: Dict[str, Tuple[float, float]]
    underflow: Tuple[int, int] = (0, 0)
    tolerance: float = STABILITY_TOL

    def stable(self, family: str) -> bool:
        small, large = self.sups[family]
        if not (np.isfinite(small) and np.isfinite(large)):
            return False
        if large == 0.0:
            return small == 0.0
        return abs(large - small) <= self.tolerance * large

    @property
    def passed(self) -> bool:
        return all(self.stable(f) for f in self.sups)

    def rows(self) -> List[dict]:
        return [{"family": f, "sup_small": s, "sup_large": l, "stable": self.stable(f)}
                for f, (s, l) in sorted(self.sups.items())]

    def to_dict(self) -> dict:
        return {"model": self.model, "q": self.q, "samples": list(self.samples), "underflow": list(self.underflow),
                "tolerance": self.tolerance, "families": self.rows(), "passed": self.passed}


def _bound_sups(model: ModelOperator, chart: ExpChart, count: int,
                rng: np.random.Generator) -> Tuple[Dict[str, float], int]:
    """Sups of the d_L-weighted kernel derivatives over pairs with Gamma above underflow, plus the excluded count."""
    q = chart.q
    zeta, _ = chart.e_map_batch(chart.sample_coordinates(count, rng, 0.1), enforce_radius=False)
    h = offsets(chart, count, rng, 1e-2, 1.0)
    z, ok = chart.e_map_from(zeta, h)
    s = _time_gap(z, zeta)
    keep = ok & (s > 0)
    z, zeta, d = z[keep], zeta[keep], chart.gauge(h[keep])
    jet = kernel_jet(model, z, zeta)
    live = ~jet.underflow
    gamma, d = jet.gamma[live], d[live]
    sups = {
        "gamma": float(np.max(gamma * d ** (q - 2), initial=0.0)),
        "first": float(np.max(np.max(np.abs(jet.first[live]), axis=1) * gamma * d ** (q - 1), initial=0.0)),
        "second": float(np.max(np.max(np.abs(jet.second[live]), axis=(1, 2)) * gamma * d**q, initial=0.0)),
        "drift": float(np.max(np.abs(jet.drift[live]) * gamma * d**q, initial=0.0)),
    }
    return sups, int(np.sum(~live))


def gamma_bound_check(model: ModelOperator, samples: int = 10000,
                      rng: Optional[np.random.Generator] = None) -> GammaBoundReport:
    """Sups of Gamma d^(q-2), |X_j Gamma| d^(q-1), |X_iX_j Gamma| d^q, |X_0 Gamma| d^q over d_L in [1e-2, 1],
    at samples and 4*samples pairs. Derivatives are analytic; underflowed pairs are left out and counted."""
    _require_kernel(model)
    rng = np.random.default_rng(model.settings.seed) if rng is None else rng
    chart = model.chart()
    small, lost_small = _bound_sups(model, chart, samples, rng)
    large, lost_large = _bound_sups(model, chart, 4 * samples, rng)
    report = GammaBoundReport(model.name, chart.q, (samples, 4 * samples),
                              {f: (small[f], large[f]) for f in BOUND_FAMILIES}, (lost_small, lost_large))
    log.info("Gamma bounds on %s: %s (%d + %d underflowed)", model.name,
             {f: f"{v[1]:.4g}" for f, v in report.sups.items()}, lost_small, lost_large)
    return report


# ---------- Annuli ----------
@dataclass(frozen=True)
class AnnulusReport:
    model: str
    table: Tuple[dict, ...]
    tolerance: float = SCALE_RATIO

    def spread(self, key: str) -> float:
        return _spread([row[key] for row in self.table])

    @property
    def keys(self) -> Tuple[str, ...]:
        return tuple(k for k in self.table[0] if k != "R")

    @property
    def passed(self) -> bool:
        return all(self.spread(k) < self.tolerance for k in self.keys)

    def rows(self) -> List[dict]:
        return [dict(row) for row in self.table]

    def to_dict(self) -> dict:
        return {"model": self.model, "tolerance": self.tolerance, "rows": self.rows(),
                "spread": {k: self.spread(k) for k in self.keys}, "passed": self.passed}


def _basis_field(chart: ExpChart, k: int) -> VectorField:
    return chart.basis.entries[k].field


def _annulus_row(model: ModelOperator, chart: ExpChart, radius: float, rng: np.random.Generator,
                 samples: int) -> Dict[str, float]:
    settings = model.settings
    q = chart.q
    cyl = Cylinder(tuple(model.origin), radius)
    z, _ = cyl.sample(chart, samples, rng, 0.0, 0.5)
    zeta, _ = cyl.sample(chart, samples, rng, 0.75, 1.0)
    live = _time_gap(z, zeta) > 0
    row = {}
    if np.any(live):
        jet = kernel_jet(model, z[live], zeta[live])
        first = np.abs(jet.first) * jet.gamma[:, None]
        row["kernel_first"] = float(np.max(first)) * radius ** (q - 1)
    else:
        row["kernel_first"] = 0.0
    cut = cutoff(radius, chart)
    pts, h = cyl.sample(chart, samples, rng, 0.5, 1.0)

    def eta(p):
        return cut(p, initial=h)

    for k, deg in enumerate(chart.degrees):
        step = 1e-6 * radius**deg
        grad = derivative_along(eta, _basis_field(chart, k), pts, step, settings)
        row[f"eta_Y{k + 1}"] = float(np.max(np.abs(grad))) * radius**deg
    lap = np.zeros(len(pts))
    for j in range(1, model.m + 1):
        lap += np.abs(second_along(eta, model.generators[j], pts, 1e-3 * radius, settings))
    row["eta_second"] = float(np.max(lap)) * radius**2
    return row


def annulus_estimates(model: ModelOperator, radii: Sequence[float] = ANNULUS_RADII, samples: int = 2000,
                      seed: Optional[int] = None, fresh: bool = True) -> AnnulusReport:
    """Per R: sup |X_i Gamma(z, zeta)| R^(q-1) for z in H_{R/2}, zeta in H_R minus H_{3R/4};
    sup |Y_k eta_R| R^(deg k) per basis field; sup sum_j |X_jX_j eta_R| R^2.

    One seed at every R gives dilated copies of one sample; with fresh, a second set of columns
    (suffix _fresh) draws an independent sample per R.
    """
    _require_kernel(model)
    seed = model.settings.seed if seed is None else seed
    chart = model.chart()
    rows = []
    for a, radius in enumerate(radii):
        row = {"R": float(radius)}
        row.update(_annulus_row(model, chart, radius, np.random.default_rng(seed), samples))
        if fresh:
            other = _annulus_row(model, chart, radius, np.random.default_rng([seed, a + 1]), samples)
            row.update({f"{k}_fresh": v for k, v in other.items()})
        rows.append(row)
        log.info("Annulus R=%g: %s", radius, {k: f"{v:.4g}" for k, v in row.items() if k != "R"})
    return AnnulusReport(model.name, tuple(rows))


# ---------- Representation formula ----------
def _jacobian_det(chart: ExpChart, h: np.ndarray, box: np.ndarray) -> np.ndarray:
    n = chart.dimension
    jac = np.empty((len(h), n, n))
    for k in range(n):
        step = np.zeros(n)
        step[k] = JAC_REL * box[k]
        plus, _ = chart.e_map_from(chart.base_point, h + step)
        minus, _ = chart.e_map_from(chart.base_point, h - step)
        jac[:, :, k] = (plus - minus) / (2.0 * step[k])
    return np.linalg.det(jac)


def sphere_nodes(dimension: int, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """Product rule on the Euclidean unit sphere S^(n-1): Gauss-Legendre in the polar angles with their
    sine weights, the trapezoid rule in the azimuth. Returns (directions, weights)."""
    count = max(2, int(resolution))
    azimuth = 2.0 * np.pi * np.arange(2 * count) / (2 * count)
    axes = [azimuth]
    weights = [np.full(2 * count, np.pi / count)]
    x, w = np.polynomial.legendre.leggauss(count)
    for _ in range(dimension - 2):
        axes.insert(0, 0.5 * np.pi * (x + 1.0))
        weights.insert(0, 0.5 * np.pi * w)
    angles = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    weight = np.prod(np.stack([g.ravel() for g in np.meshgrid(*weights, indexing="ij")], axis=-1), axis=-1)
    theta = np.empty((len(angles), dimension))
    sines = np.ones(len(angles))
    for k in range(dimension - 2):
        theta[:, k] = sines * np.cos(angles[:, k])
        weight = weight * np.sin(angles[:, k]) ** (dimension - 2 - k)
        sines = sines * np.sin(angles[:, k])
    theta[:, -2] = sines * np.cos(angles[:, -1])
    theta[:, -1] = sines * np.sin(angles[:, -1])
    return theta, weight


def shell_nodes(cut: CutOff, resolution: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes on the transition shell R_in <= N(h) <= R of the smooth cut-off: (chart coordinates, points, volumes).

    Homogeneous polar coordinates h = delta_(rho/N(theta)) theta carry dh = rho^(q-1) <D theta, theta>
    N(theta)^(-q) drho dsigma(theta). eta is a polynomial in rho across the shell, so Gauss-Legendre
    in rho and the smooth product rule on the sphere converge fast where a box grid does not.
    """
    if cut.kind != "smooth":
        raise InputError("Shell quadrature needs the smooth-gauge cut-off")
    chart = cut.chart
    deg = np.asarray(chart.degrees, dtype=float)
    theta, w_sigma = sphere_nodes(chart.dimension, resolution)
    norm = chart.smooth_gauge(theta)
    x, w = np.polynomial.legendre.leggauss(max(4, resolution // 3))
    lo, hi = CUTOFF_INNER * cut.radius, cut.radius
    rho = lo + 0.5 * (hi - lo) * (x + 1.0)
    w_rho = 0.5 * (hi - lo) * w
    h = chart.dilation(theta[None, :, :], rho[:, None] / norm[None, :]).reshape(-1, chart.dimension)
    radial = theta**2 @ deg * norm ** (-chart.q)
    vol = (w_rho[:, None] * rho[:, None] ** (chart.q - 1) * (w_sigma * radial)[None, :]).ravel()
    pts, ok = chart.e_map_batch(h, enforce_radius=False)
    vol = vol * np.abs(_jacobian_det(chart, h, cut.support_box()))
    return h[ok], pts[ok], vol[ok]


def field_derivative(u: ScalarFunction, x: VectorField, points, step, settings) -> np.ndarray:
    poly = _exact_polynomial(u)
    if poly is not None:
        return x.apply(poly)(np.atleast_2d(points))
    return derivative_along(u, x, points, step, settings)


def _represent(model: ModelOperator, u: ScalarFunction, cut: CutOff, points: np.ndarray,
               resolution: int) -> Tuple[np.ndarray, float, int]:
    """-sum Gamma(z, zeta) [2 sum a_ij X_iu X_jeta + u L eta](zeta) dzeta over the shell nodes."""
    settings = model.settings
    radius = cut.radius
    h, pts, vol = shell_nodes(cut, resolution)

    def eta(p):
        return cut(p, initial=h)

    a = model.coefficients(pts)
    du = [field_derivative(u, model.generators[i], pts, settings.jet_step, settings) for i in range(1, model.m + 1)]
    deta = [derivative_along(eta, model.generators[j], pts, 1e-3 * radius, settings) for j in range(1, model.m + 1)]
    u_vals = np.asarray(u(pts), dtype=float)
    source = u_vals * model.apply(eta, pts, scale=10.0 * radius)
    for i in range(model.m):
        for j in range(model.m):
            source = source + 2.0 * a[:, i, j] * du[i] * deta[j]
    weights = source * vol
    out = np.array([-np.sum(model.kernel(z[None, :], pts) * weights) for z in points])
    return out, float(np.max(np.abs(u_vals))) if len(u_vals) else 0.0, int(len(h))


@dataclass(frozen=True)
class RepresentationReport:
    model: str
    radius: float
    resolution: int
    nodes: int
    points: Tuple[Tuple[float, ...], ...]
    exact: Tuple[float, ...]
    represented: Tuple[float, ...]
    halved: Tuple[float, ...]
    scale: float
    tolerance: float = QUADRATURE_TOL

    @property
    def relative_error(self) -> float:
        return float(np.max(np.abs(np.subtract(self.represented, self.exact)))) / self.scale

    @property
    def halving_gap(self) -> float:
        return float(np.max(np.abs(np.subtract(self.represented, self.halved)))) / self.scale

    @property
    def flagged(self) -> bool:
        return self.halving_gap > self.tolerance

    @property
    def passed(self) -> bool:
        return self.relative_error < self.tolerance and not self.flagged

    def rows(self) -> List[dict]:
        return [{"point": list(p), "u": e, "represented": r, "halved": hh}
                for p, e, r, hh in zip(self.points, self.exact, self.represented, self.halved)]

    def to_dict(self) -> dict:
        return {"model": self.model, "radius": self.radius, "resolution": self.resolution, "nodes": self.nodes,
                "relative_error": self.relative_error, "halving_gap": self.halving_gap, "flagged": self.flagged,
                "tolerance": self.tolerance, "passed": self.passed, "points": self.rows()}


def representation_check(model: ModelOperator, u: ScalarFunction, radius: float, points: int = 8,
                         rng: Optional[np.random.Generator] = None,
                         resolution: Optional[int] = None) -> RepresentationReport:
    """Reproduce a solution of L u = 0 at points in H_{R/2} from its values on the transition shell.

    The cut-off uses the smooth lcm-power gauge; errors are relative to sup |u| over the shell nodes,
    and a rerun at half the resolution flags an unresolved quadrature.
    """
    _require_kernel(model)
    rng = np.random.default_rng(model.settings.seed) if rng is None else rng
    resolution = model.settings.q_res if resolution is None else int(resolution)
    chart = model.chart()
    cut = cutoff(radius, chart, kind="smooth")
    z, _ = Cylinder(tuple(model.origin), radius).sample(chart, points, rng, 0.0, 0.5)
    full, scale, nodes = _represent(model, u, cut, z, resolution)
    half, _, _ = _represent(model, u, cut, z, max(2, resolution // 2))
    exact = np.asarray(u(z), dtype=float)
    report = RepresentationReport(model.name, float(radius), resolution, nodes, tuple(tuple(p) for p in z.tolist()),
                                  tuple(exact.tolist()), tuple(full.tolist()), tuple(half.tolist()),
                                  max(scale, 1e-300))
    log.info("Representation on %s, R=%g: error %.3g, halving gap %.3g", model.name, radius,
             report.relative_error, report.halving_gap)
    return report


# ---------- Second derivatives of the cut-off potential ----------
@dataclass(frozen=True)
class PotentialBoundReport:
    model: str
    table: Tuple[dict, ...]
    tolerance: float = SCALE_RATIO

    @property
    def spread(self) -> float:
        return _spread([row["second"] for row in self.table])

    @property
    def passed(self) -> bool:
        return bool(all(np.isfinite(row["second"]) for row in self.table) and self.spread < self.tolerance)

    def rows(self) -> List[dict]:
        return [dict(row) for row in self.table]

    def to_dict(self) -> dict:
        return {"model": self.model, "rows": self.rows(), "spread": self.spread, "tolerance": self.tolerance,
                "passed": self.passed}


def second_derivative_potential_bound(model: ModelOperator, radii: Sequence[float] = POTENTIAL_RADII,
                                      points: int = 6, seed: Optional[int] = None,
                                      density: Optional[ScalarFunction] = None) -> PotentialBoundReport:
    """sup over z in H_{R/2} of max_ij |X_iX_j int Gamma(z, zeta) eta_R(zeta) dzeta|, per R.

    eta_R is the smooth-gauge cut-off unless a density replaces it; the time integral reaches back to -R^2.
    """
    _require_kernel(model)
    settings = model.settings
    seed = settings.seed if seed is None else seed
    chart = model.chart()
    rows = []
    for radius in radii:
        rng = np.random.default_rng(seed)
        z, _ = Cylinder(tuple(model.origin), radius).sample(chart, points, rng, 0.0, 0.5)
        g = density if density is not None else cutoff(radius, chart, kind="smooth")

        def potential(p, g=g, radius=radius):
            return model.kernel.potential(g, p, s_max=p[:, -1] + radius**2)

        step = 1e-2 * radius
        second = np.zeros(len(z))
        for i in range(1, model.m + 1):
            for j in range(1, model.m + 1):
                if i == j:
                    d2 = second_along(potential, model.generators[i], z, step, settings)
                else:
                    d2 = mixed_along(potential, model.generators[i], model.generators[j], z, step, settings)
                second = np.maximum(second, np.abs(d2))
        drift = np.abs(derivative_along(potential, model.drift, z, step**2, settings))
        rows.append({"R": float(radius), "second": float(np.max(second)), "drift": float(np.max(drift))})
        log.info("Potential second derivatives R=%g: %.4g", radius, rows[-1]["second"])
    return PotentialBoundReport(model.name, tuple(rows))
