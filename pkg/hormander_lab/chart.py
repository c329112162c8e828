"""
chart.py

The exponential chart E(z, h) built from composite flows of a graded basis, its Newton
inverse, the gauge quasi-distance and the anisotropic dilations.

Run:
  chart = ExpChart.build(generators, z)
  h = chart.log_map(zeta)
  d = chart.quasi_distance(zeta)
  zr = chart.dilate(0.5, zeta)
"""

import json
import logging
from dataclasses import dataclass, field
from math import lcm
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_SETTINGS, LabSettings
from .errors import ChartRadiusError, FlowEscapeError, InputError, OutOfChartError, RankDeficientError
from .flows import exp_star_batch
from .vectorfields import (DRIFT, BasisEntry, CommutatorWord, GradedBasis, VectorField, build_filtration,
                           numerical_rank, select_graded_basis)

log = logging.getLogger(__name__)

JAC_STEP = 1e-6


# ---------- Gauges and dilations ----------
def gauge(h, degrees: Sequence[int]) -> np.ndarray:
    """sum_i |h_i|^(1/deg_i); works on (n,) or (P, n)."""
    h = np.asarray(h, dtype=float)
    return np.sum(np.abs(h) ** (1.0 / np.asarray(degrees, dtype=float)), axis=-1)


def smooth_gauge(h, degrees: Sequence[int]) -> np.ndarray:
    """(sum_i |h_i|^(2D/deg_i))^(1/2D), D = lcm of the degrees; smooth off 0, N <= gauge <= n N."""
    deg = np.asarray(degrees, dtype=float)
    big = lcm(*[int(d) for d in degrees])
    h = np.asarray(h, dtype=float)
    return np.sum(np.abs(h) ** (2.0 * big / deg), axis=-1) ** (1.0 / (2.0 * big))


def dilation(h, r, degrees: Sequence[int]) -> np.ndarray:
    """delta_r(h): the degree-d coordinate scales by r^d."""
    h = np.asarray(h, dtype=float)
    r = np.asarray(r, dtype=float)
    if r.ndim:
        r = r[..., None]
    return h * r ** np.asarray(degrees, dtype=float)


# ---------- Chart ----------
@dataclass(frozen=True)
class ExpChart:
    basis: GradedBasis
    base_point: Tuple[float, ...]
    settings: LabSettings = field(default=DEFAULT_SETTINGS)
    radius: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "base_point", tuple(float(v) for v in self.base_point))
        if len(self.base_point) != self.basis.size:
            raise InputError(f"Base point has {len(self.base_point)} coordinates, basis has {self.basis.size} entries")
        if self.radius is None:
            object.__setattr__(self, "radius", self.settings.chart_radius)

    @classmethod
    def build(cls, generators: Sequence[VectorField], z, settings: LabSettings = DEFAULT_SETTINGS,
              radius: Optional[float] = None) -> "ExpChart":
        filt = build_filtration(generators, z, settings=settings)
        basis = select_graded_basis(filt, settings)
        return cls(basis, tuple(np.asarray(z, dtype=float)), settings, radius)

    @classmethod
    def from_dict(cls, raw: dict, generators: Sequence[VectorField],
                  settings: LabSettings = DEFAULT_SETTINGS) -> "ExpChart":
        """Rebuild a chart from its to_dict() dump; the basis words are re-evaluated on `generators`."""
        missing = [k for k in ("base_point", "words") if k not in raw]
        if missing:
            raise InputError(f"Chart dump lacks {missing}")
        integrator = raw.get("integrator", {})
        settings = settings.replace(**{k: integrator[k] for k in
                                       ("flow_integrator", "steps_per_unit", "log_tol", "max_newton")
                                       if k in integrator})
        point = np.asarray(raw["base_point"], dtype=float)
        words = [CommutatorWord.parse(label) for label in raw["words"]]
        entries = tuple(BasisEntry(w, w.evaluate(generators)) for w in words)
        if "degrees" in raw and [w.degree for w in words] != [int(d) for d in raw["degrees"]]:
            raise InputError(f"Chart dump degrees {raw['degrees']} disagree with its words")
        if len(entries) != point.size:
            raise InputError(f"Chart dump has {len(entries)} words for a {point.size}-dimensional base point")
        matrix = np.stack([e.field(point) for e in entries], axis=-1)
        rank = numerical_rank(matrix.T, settings.rank_tol)
        if rank < point.size:
            raise RankDeficientError(f"Dumped basis spans rank {rank} of {point.size} at {tuple(point)}",
                                     rank, point.size)
        basis = GradedBasis(tuple(point), tuple(generators), entries,
                            float(raw.get("condition_number", np.linalg.cond(matrix))))
        log.info("Loaded chart at %s with words %s", tuple(point), raw["words"])
        return cls(basis, tuple(point), settings, raw.get("radius"))

    def rebase(self, z) -> "ExpChart":
        """Same basis words, new base point."""
        return ExpChart(self.basis, tuple(np.asarray(z, dtype=float)), self.settings, self.radius)

    def widened(self, radius: float) -> "ExpChart":
        return ExpChart(self.basis, self.base_point, self.settings, radius)

    # ---------- properties ----------
    @property
    def dimension(self) -> int:
        return self.basis.size

    @property
    def degrees(self) -> Tuple[int, ...]:
        return self.basis.degrees

    @property
    def q(self) -> int:
        return self.basis.q

    @property
    def generators(self) -> Tuple[VectorField, ...]:
        return self.basis.generators

    @property
    def application_order(self) -> Tuple[int, ...]:
        """Basis indices in the order their factors act: last entry first, the drift factor outermost."""
        rest = [k for k in reversed(range(self.dimension)) if self.basis.words[k].leaves() != (DRIFT,)]
        drift = [k for k in range(self.dimension) if self.basis.words[k].leaves() == (DRIFT,)]
        return tuple(rest + drift)

    def gauge(self, h) -> np.ndarray:
        return gauge(h, self.degrees)

    def smooth_gauge(self, h) -> np.ndarray:
        return smooth_gauge(h, self.degrees)

    def dilation(self, h, r) -> np.ndarray:
        return dilation(h, r, self.degrees)

    # ---------- E and Log ----------
    def e_map_from(self, base_points, h) -> Tuple[np.ndarray, np.ndarray]:
        """E(z_p, h_p) for per-point base points; returns (points, ok mask). No radius check."""
        h = np.atleast_2d(np.asarray(h, dtype=float))
        pts = np.broadcast_to(np.atleast_2d(np.asarray(base_points, dtype=float)), h.shape).copy()
        ok = np.ones(len(h), dtype=bool)
        for k in self.application_order:
            col = h[:, k]
            if not np.any(col):
                continue
            pts, step_ok = exp_star_batch(col, self.basis.words[k], pts, self.generators, self.settings)
            ok &= step_ok
        return pts, ok

    def e_map_batch(self, h, enforce_radius: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        h = np.atleast_2d(np.asarray(h, dtype=float))
        if h.shape[1] != self.dimension:
            raise InputError(f"Chart coordinates need {self.dimension} entries")
        pts, ok = self.e_map_from(self.base_point, h)
        if enforce_radius:
            ok &= self.gauge(h) <= self.radius
        return pts, ok

    def e_map(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        g = float(np.max(self.gauge(np.atleast_2d(h))))
        if g > self.radius:
            raise ChartRadiusError(f"Gauge {g:.4g} of chart coordinates exceeds chart radius {self.radius:g}")
        pts, ok = self.e_map_batch(h, enforce_radius=False)
        if not np.all(ok):
            raise FlowEscapeError("Chart map left the flow domain")
        return pts[0] if h.ndim == 1 else pts

    def log_map_from(self, base_points, zeta, initial=None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Damped Newton for E(z_p, h) = zeta_p from h = 0 (or initial); returns (h, converged mask, residuals)."""
        settings = self.settings
        target = np.atleast_2d(np.asarray(zeta, dtype=float))
        base = np.broadcast_to(np.atleast_2d(np.asarray(base_points, dtype=float)), target.shape).copy()
        n = self.dimension
        h = np.zeros_like(target) if initial is None else np.array(np.broadcast_to(initial, target.shape), dtype=float)

        def residual(hh, rows):
            pts, ok = self.e_map_from(base[rows], hh)
            res = pts - target[rows]
            res[~ok] = np.inf
            return res

        res = residual(h, np.arange(len(h)))
        norm = np.linalg.norm(res, axis=1)
        active = norm >= settings.log_tol
        for _ in range(settings.max_newton):
            if not np.any(active):
                break
            rows = np.flatnonzero(active)
            jac = np.empty((len(rows), n, n))
            for k in range(n):
                step = np.zeros((len(rows), n))
                step[:, k] = JAC_STEP
                jac[:, :, k] = (residual(h[rows] + step, rows) - residual(h[rows] - step, rows)) / (2.0 * JAC_STEP)
            jac = np.nan_to_num(jac, nan=0.0, posinf=0.0, neginf=0.0)
            try:
                delta = np.linalg.solve(jac, res[rows][..., None])[..., 0]
            except np.linalg.LinAlgError:
                delta = np.einsum("pij,pj->pi", np.linalg.pinv(jac), res[rows])
            factor = np.ones(len(rows))
            pending = np.ones(len(rows), dtype=bool)
            for _halving in range(30):
                sel = np.flatnonzero(pending)
                if not len(sel):
                    break
                trial = h[rows[sel]] - factor[sel, None] * delta[sel]
                trial_res = residual(trial, rows[sel])
                trial_norm = np.linalg.norm(trial_res, axis=1)
                better = trial_norm < norm[rows[sel]]
                accept = sel[better]
                h[rows[accept]] = trial[better]
                res[rows[accept]] = trial_res[better]
                norm[rows[accept]] = trial_norm[better]
                pending[accept] = False
                factor[sel[~better]] *= 0.5
            stalled = rows[pending]
            active[stalled] = False
            active[rows] &= norm[rows] >= settings.log_tol
        converged = norm < settings.log_tol
        if np.any(converged):
            # one polishing step
            rows = np.flatnonzero(converged)
            jac = np.empty((len(rows), n, n))
            for k in range(n):
                step = np.zeros((len(rows), n))
                step[:, k] = JAC_STEP
                jac[:, :, k] = (residual(h[rows] + step, rows) - residual(h[rows] - step, rows)) / (2.0 * JAC_STEP)
            delta = np.einsum("pij,pj->pi", np.linalg.pinv(jac), res[rows])
            trial = h[rows] - delta
            trial_norm = np.linalg.norm(residual(trial, rows), axis=1)
            keep = trial_norm <= norm[rows]
            h[rows[keep]] = trial[keep]
            norm[rows[keep]] = trial_norm[keep]
        return h, converged, norm

    def log_map_batch(self, zeta) -> Tuple[np.ndarray, np.ndarray]:
        h, ok, _ = self.log_map_from(self.base_point, zeta)
        return h, ok

    def log_map(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        h, ok, norm = self.log_map_from(self.base_point, zeta)
        if not np.all(ok):
            worst = float(np.max(norm))
            raise OutOfChartError(f"Newton inversion did not reach {self.settings.log_tol:g} (residual {worst:.3g})", worst)
        return h[0] if zeta.ndim == 1 else h

    # ---------- Distance and dilation ----------
    def quasi_distance(self, zeta) -> float:
        return float(self.gauge(self.log_map(np.asarray(zeta, dtype=float))))

    def quasi_distance_batch(self, zeta, base_points=None) -> Tuple[np.ndarray, np.ndarray]:
        """d(z_p, zeta_p) with per-point bases (default: the chart base); returns (distances, ok)."""
        base = self.base_point if base_points is None else base_points
        h, ok, _ = self.log_map_from(base, zeta)
        d = self.gauge(h)
        d[~ok] = np.nan
        return d, ok

    def dilate(self, r: float, zeta) -> np.ndarray:
        if r <= 0:
            raise InputError(f"Dilation factor must be positive, got {r}")
        zeta = np.asarray(zeta, dtype=float)
        h = self.log_map(zeta)
        pts, ok = self.e_map_batch(self.dilation(h, r), enforce_radius=False)
        if not np.all(ok):
            raise FlowEscapeError("Dilated point left the flow domain")
        return pts[0] if zeta.ndim == 1 else pts

    # ---------- Diagnostics ----------
    def jacobian_at_origin(self) -> np.ndarray:
        n = self.dimension
        jac = np.empty((n, n))
        for k in range(n):
            step = np.zeros(n)
            step[k] = JAC_STEP
            plus, _ = self.e_map_batch(step, enforce_radius=False)
            minus, _ = self.e_map_batch(-step, enforce_radius=False)
            jac[:, k] = (plus[0] - minus[0]) / (2.0 * JAC_STEP)
        return jac

    def jacobian_defect(self) -> float:
        """max-norm of B^-1 J - I, B the basis fields at the base point."""
        b = self.basis.matrix(np.asarray(self.base_point))
        return float(np.max(np.abs(np.linalg.solve(b, self.jacobian_at_origin()) - np.eye(self.dimension))))

    def sample_coordinates(self, count: int, rng: np.random.Generator, radius: Optional[float] = None) -> np.ndarray:
        """Chart coordinates with gauge at most radius: random directions, dilated onto random gauge levels."""
        radius = self.radius if radius is None else radius
        raw = rng.uniform(-1.0, 1.0, size=(count, self.dimension))
        unit = self.dilation(raw, 1.0 / np.maximum(self.gauge(raw), 1e-300))
        levels = radius * rng.uniform(0.0, 1.0, size=count)
        return self.dilation(unit, levels)

    def round_trip_error(self, count: int, rng: np.random.Generator, radius: Optional[float] = None) -> dict:
        h = self.sample_coordinates(count, rng, radius)
        pts, ok = self.e_map_batch(h, enforce_radius=False)
        back, conv = self.log_map_batch(pts[ok])
        err = np.max(np.abs(back - h[ok]), axis=1)
        return {
            "samples": int(count),
            "max_error": float(np.max(err[conv])) if np.any(conv) else float("nan"),
            "failures": int(np.sum(~conv) + np.sum(~ok)),
        }

    def to_dict(self) -> dict:
        out = self.basis.to_dict()
        out["base_point"] = list(self.base_point)
        out["radius"] = self.radius
        out["integrator"] = {
            "flow_integrator": self.settings.flow_integrator,
            "steps_per_unit": self.settings.steps_per_unit,
            "log_tol": self.settings.log_tol,
            "max_newton": self.settings.max_newton,
        }
        return out


def load_chart(path, generators: Sequence[VectorField], settings: LabSettings = DEFAULT_SETTINGS) -> ExpChart:
    """Read a chart dump: a bare to_dict() object or a report whose result carries one under "chart"."""
    path = Path(path).expanduser().resolve()
    if not path.exists():
        raise InputError(f"Chart file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"Chart file {path} is not JSON: {exc}") from exc
    if isinstance(raw, dict) and "result" in raw:
        raw = raw["result"]
    if isinstance(raw, dict) and "chart" in raw:
        raw = raw["chart"]
    if not isinstance(raw, dict):
        raise InputError(f"Chart file {path} holds no chart object")
    return ExpChart.from_dict(raw, generators, settings)


# ---------- Quasi-metric samplers ----------
def quasi_triangle_constant(chart: ExpChart, samples: int, rng: np.random.Generator,
                            radius: Optional[float] = None) -> dict:
    """Empirical C_d in d(x,z) <= C_d (d(x,y) + d(y,z)) over random triples near the chart base."""
    radius = chart.radius / 2.0 if radius is None else radius
    pts = []
    for _ in range(3):
        p, ok = chart.e_map_batch(chart.sample_coordinates(samples, rng, radius), enforce_radius=False)
        pts.append(p)
    x, y, z = pts
    dxz, ok1 = chart.quasi_distance_batch(z, x)
    dxy, ok2 = chart.quasi_distance_batch(y, x)
    dyz, ok3 = chart.quasi_distance_batch(z, y)
    ok = ok1 & ok2 & ok3 & ((dxy + dyz) > 0)
    ratio = dxz[ok] / (dxy[ok] + dyz[ok])
    return {"samples": int(samples), "used": int(np.sum(ok)), "C_d": float(np.max(ratio)) if len(ratio) else float("nan")}


def quasi_symmetry_constant(chart: ExpChart, samples: int, rng: np.random.Generator,
                            radius: Optional[float] = None) -> dict:
    radius = chart.radius / 2.0 if radius is None else radius
    x, _ = chart.e_map_batch(chart.sample_coordinates(samples, rng, radius), enforce_radius=False)
    y, _ = chart.e_map_batch(chart.sample_coordinates(samples, rng, radius), enforce_radius=False)
    dxy, ok1 = chart.quasi_distance_batch(y, x)
    dyx, ok2 = chart.quasi_distance_batch(x, y)
    ok = ok1 & ok2 & (dxy > 0) & (dyx > 0)
    ratio = dxy[ok] / dyx[ok]
    c_s = float(max(np.max(ratio), 1.0 / np.min(ratio))) if len(ratio) else float("nan")
    return {"samples": int(samples), "used": int(np.sum(ok)), "C_s": c_s}
