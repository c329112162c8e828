"""
models.py

Shipped model operators L = sum a_ij X_i X_j - X_0, their Gaussian fundamental solutions,
cylinders H_R(z0) and the smooth cut-offs eta_R.

Run:
  model = get_model("kolmogorov")            # heat-1d | euclidean-heat | kolmogorov | heisenberg-time
  model = load_model("my_fields.json")       # custom fields + coefficients block
  model.kernel(z, zeta)
"""

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import factorial
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .chart import ExpChart
from .config import DEFAULT_SETTINGS, LabSettings
from .errors import InputError, SingularEvaluationError
from .expressions import ScalarExpression, default_variables, parse_function
from .polynomial import Polynomial
from .taylor import ScalarFunction, _exact_polynomial, derivative_along, mixed_along, second_along
from .vectorfields import DRIFT, VectorField, fields_from_dict, read_field_file

log = logging.getLogger(__name__)

HERMITE_NODES = 16
TIME_NODES = 24


# ---------- Coefficients ----------
@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Symmetric m x m matrix a_ij, constant or given by expressions in the coordinates."""

    m: int
    constant: Optional[Tuple[Tuple[float, ...], ...]] = None
    expressions: Optional[Tuple[Tuple[ScalarExpression, ...], ...]] = None

    def __post_init__(self):
        if (self.constant is None) == (self.expressions is None):
            raise InputError("Coefficients need exactly one of a constant matrix or expressions")
        if self.constant is not None:
            mat = np.asarray(self.constant, dtype=float)
            if mat.shape != (self.m, self.m):
                raise InputError(f"Coefficient matrix must be {self.m}x{self.m}, got {mat.shape}")
            if not np.allclose(mat, mat.T):
                raise InputError("Coefficient matrix must be symmetric")
        else:
            if len(self.expressions) != self.m or any(len(r) != self.m for r in self.expressions):
                raise InputError(f"Coefficient expressions must form a {self.m}x{self.m} table")
            for i in range(self.m):
                for j in range(i + 1, self.m):
                    if str(self.expressions[i][j].expr - self.expressions[j][i].expr) != "0":
                        raise InputError(f"Coefficient a_{i + 1}{j + 1} differs from a_{j + 1}{i + 1}")

    @classmethod
    def identity(cls, m: int) -> "CoefficientField":
        return cls(m, constant=tuple(tuple(1.0 if i == j else 0.0 for j in range(m)) for i in range(m)))

    @classmethod
    def from_matrix(cls, matrix) -> "CoefficientField":
        mat = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(len(mat), constant=tuple(tuple(float(v) for v in row) for row in mat))

    @classmethod
    def from_strings(cls, table, variables: Sequence[str]) -> "CoefficientField":
        exprs = tuple(tuple(parse_function(str(v), variables) for v in row) for row in table)
        return cls(len(exprs), expressions=exprs)

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.constant is not None:
            return np.broadcast_to(np.asarray(self.constant), (len(pts), self.m, self.m)).copy()
        out = np.empty((len(pts), self.m, self.m))
        for i in range(self.m):
            for j in range(self.m):
                out[:, i, j] = self.expressions[i][j](pts)
        return out

    def at(self, point) -> np.ndarray:
        return self(np.asarray(point, dtype=float))[0]

    def frozen(self, point) -> "CoefficientField":
        return CoefficientField.from_matrix(self.at(point))

    def ellipticity(self, points) -> Tuple[float, float, int]:
        """(lambda, Lambda, index of the worst node) over the points."""
        eig = np.linalg.eigvalsh(self(points))
        worst = int(np.argmin(eig[:, 0]))
        return float(np.min(eig[:, 0])), float(np.max(eig[:, -1])), worst

    def to_dict(self):
        if self.constant is not None:
            return {"constant": [list(r) for r in self.constant]}
        return {"expressions": [[str(e) for e in row] for row in self.expressions]}


# ---------- Gaussian kernels ----------
@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """Fundamental solution of tr(A D^2) - <Bx, grad> - d_t with nilpotent B, pole at zeta.

    Gamma(z, zeta) = N(x - e^{sB} xi; 0, C(s)), s = t - tau > 0, C(s) = 2 int_0^s e^{rB} A e^{rB^T} dr.
    """

    drift: np.ndarray
    diffusion: np.ndarray

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.drift, dtype=float))
        a = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
        if b.shape != a.shape or b.shape[0] != b.shape[1]:
            raise InputError("Drift and diffusion matrices must be square and of one size")
        if np.any(np.abs(np.linalg.matrix_power(b, len(b))) > 1e-12):
            raise InputError("Drift matrix must be nilpotent")
        if not np.allclose(a, a.T) or np.min(np.linalg.eigvalsh(a)) < -1e-12:
            raise InputError("Diffusion matrix must be symmetric positive semidefinite")
        object.__setattr__(self, "drift", b)
        object.__setattr__(self, "diffusion", a)

    @property
    def space_dimension(self) -> int:
        return len(self.drift)

    @property
    def _powers(self):
        n = self.space_dimension
        return [np.linalg.matrix_power(self.drift, k) / factorial(k) for k in range(n)]

    def covariance_terms(self) -> Dict[int, np.ndarray]:
        """C(s) = sum_p s^p M_p, M_p = 2 sum_{k+l=p-1} B^k A (B^T)^l / (k! l! p)."""
        pw = self._powers
        terms: Dict[int, np.ndarray] = {}
        for k, bk in enumerate(pw):
            for l, bl in enumerate(pw):
                p = k + l + 1
                terms[p] = terms.get(p, 0.0) + 2.0 * bk @ self.diffusion @ bl.T / p
        return terms

    def covariance(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + (self.space_dimension,) * 2)
        for p, mp in self.covariance_terms().items():
            out = out + (s**p)[..., None, None] * mp
        return out

    def covariance_rate(self, s, order: int = 1) -> np.ndarray:
        """d^order C / ds^order."""
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + (self.space_dimension,) * 2)
        for p, mp in self.covariance_terms().items():
            if p >= order:
                out = out + (factorial(p) / factorial(p - order) * s ** (p - order))[..., None, None] * mp
        return out

    def log_derivatives(self, z, zeta) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(log Gamma, gradient, Hessian of log Gamma) in the first argument, coordinates (x, t).

        Closed form in w = x - e^{sB} xi and P = C(s)^-1, so the ratios D Gamma / Gamma stay finite
        where Gamma itself underflows. Rows with s <= 0 get log Gamma = -inf and zero derivatives.
        """
        z = np.atleast_2d(np.asarray(z, dtype=float))
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        z, zeta = np.broadcast_arrays(z, zeta)
        n = self.space_dimension
        count = len(z)
        logs = np.full(count, -np.inf)
        grad = np.zeros((count, n + 1))
        hess = np.zeros((count, n + 1, n + 1))
        s = z[:, n] - zeta[:, n]
        live = s > 0
        if not np.any(live):
            return logs, grad, hess
        sl = s[live]
        e = self.transport(sl, zeta[live, :n])
        w = z[live, :n] - e
        ws = -np.einsum("ij,pj->pi", self.drift, e)
        wss = -np.einsum("ij,pj->pi", self.drift, ws)
        cov = self.covariance(sl)
        c1 = self.covariance_rate(sl, 1)
        c2 = self.covariance_rate(sl, 2)
        prec = np.linalg.inv(cov)
        pw = np.einsum("pij,pj->pi", prec, w)
        q1 = prec @ c1 @ prec
        q1w = np.einsum("pij,pj->pi", q1, w)
        _, logdet = np.linalg.slogdet(cov)

        def dot(a, b):
            return np.einsum("pi,pi->p", a, b)

        dq1 = -q1 @ c1 @ prec + prec @ c2 @ prec - prec @ c1 @ q1
        trace_pc1 = np.einsum("pii->p", prec @ c1)
        logs[live] = -0.5 * dot(w, pw) - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi)
        grad[live, :n] = -pw
        grad[live, n] = -dot(pw, ws) + 0.5 * dot(w, q1w) - 0.5 * trace_pc1
        hess[np.ix_(live, range(n), range(n))] = -prec
        cross = q1w - np.einsum("pij,pj->pi", prec, ws)
        hess[live, :n, n] = cross
        hess[live, n, :n] = cross
        hess[live, n, n] = (-dot(ws, np.einsum("pij,pj->pi", prec, ws)) + 2.0 * dot(q1w, ws) - dot(pw, wss)
                            + 0.5 * dot(w, np.einsum("pij,pj->pi", dq1, w))
                            + 0.5 * np.einsum("pii->p", q1 @ c1) - 0.5 * np.einsum("pii->p", prec @ c2))
        return logs, grad, hess

    def transport(self, s, xi) -> np.ndarray:
        """e^{sB} xi for broadcastable s (...,) and xi (..., N)."""
        s = np.asarray(s, dtype=float)[..., None]
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(np.broadcast_shapes(s.shape, xi.shape))
        for k, bk in enumerate(self._powers):
            out = out + s**k * np.einsum("ij,...j->...i", bk, xi)
        return out

    def __call__(self, z, zeta) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        z, zeta = np.broadcast_arrays(z, zeta)
        n = self.space_dimension
        s = z[:, n] - zeta[:, n]
        out = np.zeros(len(z))
        live = s > 0
        if not np.any(live):
            return out
        sl = s[live]
        w = z[live, :n] - self.transport(sl, zeta[live, :n])
        cov = self.covariance(sl)
        quad = np.einsum("pi,pi->p", w, np.linalg.solve(cov, w[..., None])[..., 0])
        det = np.linalg.det(cov)
        out[live] = np.exp(-0.5 * quad) / np.sqrt((2.0 * np.pi) ** n * det)
        return out

    def potential(self, g: ScalarFunction, z, s_max, time_nodes: int = TIME_NODES,
                  hermite_nodes: int = HERMITE_NODES) -> np.ndarray:
        """int Gamma(z, zeta) g(zeta) dzeta over tau in [t - s_max, t]:
        int_0^s_max E_{w ~ N(0, C(s))}[g(e^{-sB}(x - w), t - s)] ds (det e^{-sB} = 1)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        n = self.space_dimension
        s_max = np.broadcast_to(np.asarray(s_max, dtype=float), (len(z),))
        t_nodes, t_weights = np.polynomial.legendre.leggauss(time_nodes)
        y1, w1 = np.polynomial.hermite_e.hermegauss(hermite_nodes)
        w1 = w1 / np.sqrt(2.0 * np.pi)
        grids = np.meshgrid(*([y1] * n), indexing="ij")
        y = np.stack([g_.ravel() for g_ in grids], axis=-1)                  # (Q, n)
        wy = np.prod(np.meshgrid(*([w1] * n), indexing="ij"), axis=0).ravel()  # (Q,)
        s = 0.5 * s_max[:, None] * (t_nodes[None, :] + 1.0)                 # (P, K)
        ws = 0.5 * s_max[:, None] * t_weights[None, :]
        chol = np.linalg.cholesky(self.covariance(s))                       # (P, K, n, n)
        w = np.einsum("pkij,qj->pkqi", chol, y)                               # (P, K, Q, n)
        x = z[:, None, None, :n] - w
        xi = self.transport(-s[:, :, None], x)
        tau = np.broadcast_to((z[:, n][:, None] - s)[:, :, None], xi.shape[:-1])
        pts = np.concatenate([xi, tau[..., None]], axis=-1)
        vals = np.asarray(g(pts.reshape(-1, n + 1)), dtype=float).reshape(pts.shape[:-1])
        return np.einsum("pkq,pk,q->p", vals, ws, wy)


# ---------- Model operators ----------
@dataclass(frozen=True, eq=False)
class ModelOperator:
    name: str
    variables: Tuple[str, ...]
    generators: Tuple[VectorField, ...]
    coefficients: CoefficientField
    kernel: Optional[GaussianKernel] = None
    settings: LabSettings = field(default=DEFAULT_SETTINGS)
    description: str = ""

    def __post_init__(self):
        if len(self.variables) != self.dimension:
            raise InputError(f"Model {self.name}: {len(self.variables)} variable names for dimension {self.dimension}")
        if self.coefficients.m != self.m:
            raise InputError(f"Model {self.name}: coefficient matrix size {self.coefficients.m} for {self.m} fields")

    @property
    def dimension(self) -> int:
        return self.generators[0].dimension

    @property
    def m(self) -> int:
        return len(self.generators) - 1

    @property
    def origin(self) -> np.ndarray:
        return np.zeros(self.dimension)

    @property
    def drift(self) -> VectorField:
        return self.generators[DRIFT]

    def with_settings(self, settings: LabSettings) -> "ModelOperator":
        return replace(self, settings=settings)

    def with_coefficients(self, coefficients: CoefficientField) -> "ModelOperator":
        kernel = self.kernel if coefficients.is_constant and np.allclose(coefficients.at(self.origin), np.eye(self.m)) else None
        return replace(self, coefficients=coefficients, kernel=kernel)

    def frozen_at(self, point) -> "ModelOperator":
        return replace(self, coefficients=self.coefficients.frozen(point))

    def chart(self, z=None, radius: Optional[float] = None) -> ExpChart:
        key = tuple(np.zeros(self.dimension) if z is None else np.asarray(z, dtype=float))
        return _cached_chart(self, key, radius)

    @property
    def q(self) -> int:
        return self.chart().q

    def function(self, text: str) -> ScalarExpression:
        return parse_function(text, self.variables)

    def apply(self, u: ScalarFunction, points, coefficients: Optional[CoefficientField] = None,
              scale=1.0) -> np.ndarray:
        """L u = sum a_ij X_i X_j u - X_0 u at the points; exact for polynomial u.

        Otherwise difference steps are jet_step * scale along X_i and jet_step * scale^2 along X_0;
        scale may be per point.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a = (coefficients or self.coefficients)(pts)
        gens = self.generators
        poly = _exact_polynomial(u)
        out = np.zeros(len(pts))
        if poly is not None:
            first = [gens[j].apply(poly) for j in range(1, self.m + 1)]
            for i in range(1, self.m + 1):
                for j in range(1, self.m + 1):
                    if np.any(a[:, i - 1, j - 1]):
                        out += a[:, i - 1, j - 1] * gens[i].apply(first[j - 1])(pts)
            return out - gens[DRIFT].apply(poly)(pts)
        scale = np.asarray(scale, dtype=float)
        h = self.settings.jet_step * scale
        for i in range(1, self.m + 1):
            for j in range(1, self.m + 1):
                if not np.any(a[:, i - 1, j - 1]):
                    continue
                if i == j:
                    d2 = second_along(u, gens[i], pts, h, self.settings)
                else:
                    d2 = mixed_along(u, gens[i], gens[j], pts, h, self.settings)
                out += a[:, i - 1, j - 1] * d2
        if not self.drift.is_zero():
            out -= derivative_along(u, self.drift, pts, self.settings.jet_step * scale**2, self.settings)
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "variables": list(self.variables),
            "m": self.m,
            "coefficients": self.coefficients.to_dict(),
            "has_kernel": self.kernel is not None,
        }


@lru_cache(maxsize=64)
def _cached_chart(model: ModelOperator, z: Tuple[float, ...], radius: Optional[float]) -> ExpChart:
    return ExpChart.build(model.generators, z, model.settings, radius)


# ---------- Cylinders and cut-offs ----------
CUTOFF_INNER = 0.75
CUTOFF_KINDS = ("regularized", "smooth")


def smoothstep_down(rho, lo: float, hi: float) -> np.ndarray:
    """1 on [0, lo], 0 on [hi, inf), quintic in between (C^2)."""
    u = np.clip((np.asarray(rho, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


@dataclass(frozen=True)
class Cylinder:
    """H_R(z0) = {zeta : d_L(z0, zeta) < R} through the chart at z0."""

    center: Tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not 0.0 < self.radius <= 1.0:
            raise InputError(f"Cylinder radius must lie in (0, 1], got {self.radius}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    def distance(self, chart: ExpChart, points) -> Tuple[np.ndarray, np.ndarray]:
        return chart.rebase(self.center).quasi_distance_batch(points)

    def contains(self, chart: ExpChart, points) -> np.ndarray:
        d, ok = self.distance(chart, points)
        return ok & (d < self.radius)

    def sample(self, chart: ExpChart, count: int, rng: np.random.Generator,
               inner: float = 0.0, outer: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
        """Points with inner*R <= d_L < outer*R; returns (points, chart coordinates)."""
        local = chart.rebase(self.center)
        h = local.sample_coordinates(count, rng, 1.0)
        unit = local.dilation(h, 1.0 / np.maximum(local.gauge(h), 1e-300))
        levels = self.radius * (inner + (outer - inner) * rng.uniform(0.0, 1.0, size=count))
        h = local.dilation(unit, levels)
        pts, _ = local.e_map_batch(h, enforce_radius=False)
        return pts, h


@dataclass(frozen=True)
class CutOff:
    """eta_R = chi(G(Log zeta)) for a smooth homogeneous gauge G.

    kind "regularized": d_L - R/8 <= G <= d_L, so eta_R = 1 on H_{3R/4} and eta_R = 0 outside H_R.
    kind "smooth": G = N, the lcm-power norm (N <= d_L <= n N); eta_R = 1 on H_{3R/4}, support in
    {N < R}. Its derivatives have no thin spikes, which quadrature needs.
    """

    chart: ExpChart
    radius: float
    kind: str = "regularized"

    def __post_init__(self):
        if self.kind not in CUTOFF_KINDS:
            raise InputError(f"Cut-off kind must be one of {CUTOFF_KINDS}, got {self.kind!r}")

    @property
    def epsilon(self) -> float:
        return 1.0 / (8.0 * self.chart.dimension)

    @property
    def outer(self) -> float:
        if self.kind == "smooth":
            return self.radius
        return self.radius * (1.0 - self.chart.dimension * self.epsilon)

    def regularized_gauge(self, h) -> np.ndarray:
        h = np.atleast_2d(np.asarray(h, dtype=float))
        deg = np.asarray(self.chart.degrees, dtype=float)
        eps = (self.epsilon * self.radius) ** deg
        return np.sum((h**2 + eps**2) ** (0.5 / deg) - eps ** (1.0 / deg), axis=-1)

    def gauge_of(self, h) -> np.ndarray:
        if self.kind == "smooth":
            return self.chart.smooth_gauge(np.atleast_2d(np.asarray(h, dtype=float)))
        return self.regularized_gauge(h)

    def from_coordinates(self, h) -> np.ndarray:
        return smoothstep_down(self.gauge_of(h), CUTOFF_INNER * self.radius, self.outer)

    def support_box(self) -> np.ndarray:
        """Half-widths of a chart-coordinate box containing the support."""
        deg = np.asarray(self.chart.degrees, dtype=float)
        if self.kind == "smooth":
            return self.radius**deg
        return (self.radius * (1.0 - self.chart.dimension * self.epsilon + self.epsilon)) ** deg

    def __call__(self, points, initial=None) -> np.ndarray:
        h, ok, _ = self.chart.log_map_from(self.chart.base_point, points, initial)
        out = self.from_coordinates(h)
        out[~ok] = 0.0
        return out


def cutoff(radius: float, chart: ExpChart, kind: str = "regularized") -> CutOff:
    if not 0.0 < radius <= 1.0:
        raise InputError(f"Cut-off radius must lie in (0, 1], got {radius}")
    return CutOff(chart.widened(max(chart.radius, 2.0 * radius)), radius, kind)


# ---------- Registry ----------
def _field(n: int, comps: Dict[int, Polynomial]) -> VectorField:
    return VectorField(tuple(comps.get(j, Polynomial.zero(n)) for j in range(n)))


def _heat_1d(settings):
    one = lambda n: Polynomial.constant(n, 1.0)
    gens = (_field(2, {1: one(2)}), _field(2, {0: one(2)}))
    kernel = GaussianKernel(np.zeros((1, 1)), np.eye(1))
    return ModelOperator("heat-1d", ("x", "t"), gens, CoefficientField.identity(1), kernel, settings,
                         "d_xx - d_t")


def _euclidean_heat(settings):
    one = Polynomial.constant(3, 1.0)
    gens = (_field(3, {2: one}), _field(3, {0: one}), _field(3, {1: one}))
    kernel = GaussianKernel(np.zeros((2, 2)), np.eye(2))
    return ModelOperator("euclidean-heat", ("x", "y", "t"), gens, CoefficientField.identity(2), kernel, settings,
                         "d_xx + d_yy - d_t")


def _kolmogorov(settings):
    one = Polynomial.constant(3, 1.0)
    x = Polynomial.variable(3, 0)
    gens = (_field(3, {1: x, 2: one}), _field(3, {0: one}))
    kernel = GaussianKernel(np.array([[0.0, 0.0], [1.0, 0.0]]), np.diag([1.0, 0.0]))
    return ModelOperator("kolmogorov", ("x", "y", "t"), gens, CoefficientField.identity(1), kernel, settings,
                         "d_xx - x d_y - d_t")


def _heisenberg_time(settings):
    one = Polynomial.constant(4, 1.0)
    x1 = Polynomial.variable(4, 0)
    x2 = Polynomial.variable(4, 1)
    gens = (
        _field(4, {3: one}),
        _field(4, {0: one, 2: x2 * -0.5}),
        _field(4, {1: one, 2: x1 * 0.5}),
    )
    return ModelOperator("heisenberg-time", ("x1", "x2", "x3", "t"), gens, CoefficientField.identity(2), None,
                         settings, "X1^2 + X2^2 - d_t on the Heisenberg group")


MODELS: Dict[str, Callable[[LabSettings], ModelOperator]] = {
    "heat-1d": _heat_1d,
    "euclidean-heat": _euclidean_heat,
    "kolmogorov": _kolmogorov,
    "heisenberg-time": _heisenberg_time,
}


def get_model(name: str, settings: LabSettings = DEFAULT_SETTINGS) -> ModelOperator:
    try:
        return MODELS[name](settings)
    except KeyError:
        raise InputError(f"Unknown model {name!r}; shipped models: {', '.join(sorted(MODELS))}") from None


def model_from_dict(raw: dict, name: str = "custom", settings: LabSettings = DEFAULT_SETTINGS) -> ModelOperator:
    gens = fields_from_dict(raw)
    n = gens[0].dimension
    variables = tuple(raw.get("variables") or default_variables(n))
    m = len(gens) - 1
    block = raw.get("coefficients")
    if block is None:
        coeffs = CoefficientField.identity(m)
    elif all(isinstance(v, (int, float)) for row in block for v in row):
        coeffs = CoefficientField.from_matrix(block)
    else:
        coeffs = CoefficientField.from_strings(block, variables)
    kernel = None
    if "kernel" in raw:
        try:
            kernel = GaussianKernel(np.asarray(raw["kernel"]["drift"], float), np.asarray(raw["kernel"]["diffusion"], float))
        except KeyError as exc:
            raise InputError("Kernel block needs 'drift' and 'diffusion' matrices") from exc
    return ModelOperator(str(raw.get("name", name)), variables, gens, coeffs, kernel, settings,
                         str(raw.get("description", "")))


def load_model(name_or_path: str, settings: LabSettings = DEFAULT_SETTINGS) -> ModelOperator:
    if name_or_path in MODELS:
        return get_model(name_or_path, settings)
    return model_from_dict(read_field_file(name_or_path), name=str(name_or_path), settings=settings)


# ---------- Kolmogorov kernel ----------
@lru_cache(maxsize=8)
def _kolmogorov_chart(settings: LabSettings) -> ExpChart:
    return get_model("kolmogorov", settings).chart(radius=10.0)


def kolmogorov_gamma(z, zeta, settings: LabSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Gamma(z, zeta) = sqrt(3)/(2 pi s^2) exp(-w1^2/s + 3 w1 w2/s^2 - 3 w2^2/s^3) for s = t - tau > 0,
    w1 = x - xi, w2 = y - eta - xi s; zero for s <= 0.

    Raises SingularEvaluationError when d_L(zeta, z) < pole_tol.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    z, zeta = np.broadcast_arrays(z, zeta)
    d, ok = _kolmogorov_chart(settings).quasi_distance_batch(z, zeta)
    if np.any(ok & (d < settings.pole_tol)):
        raise SingularEvaluationError(f"Kernel evaluated within d_L < {settings.pole_tol:g} of its pole")
    s = z[:, 2] - zeta[:, 2]
    out = np.zeros(len(z))
    live = s > 0
    sl = s[live]
    w1 = z[live, 0] - zeta[live, 0]
    w2 = z[live, 1] - zeta[live, 1] - zeta[live, 0] * sl
    out[live] = np.sqrt(3.0) / (2.0 * np.pi * sl**2) * np.exp(-w1**2 / sl + 3.0 * w1 * w2 / sl**2 - 3.0 * w2**2 / sl**3)
    return out
