"""
flows.py

Integral curves of polynomial fields and the iterated flow commutators that realize
bracket directions using generator flows only.

A flow sequence is a list of (generator index, time) pairs in application order:
the first pair moves the point first.
"""

import logging
from functools import lru_cache
from math import factorial
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import DEFAULT_SETTINGS, LabSettings
from .errors import FlowEscapeError, InputError
from .polynomial import Polynomial
from .vectorfields import CommutatorWord, VectorField, leaf_degree, lie_bracket

log = logging.getLogger(__name__)

FlowSequence = List[Tuple[int, Union[float, np.ndarray]]]


# ---------- Single-field flows ----------
@lru_cache(maxsize=256)
def lie_series(x: VectorField, max_order: int) -> Optional[Tuple[Tuple[Polynomial, ...], ...]]:
    """Per coordinate j, the polynomials X^k x_j / k! for k = 0.. until they vanish.

    None when some coordinate needs more than max_order terms (no exact series).
    """
    n = x.dimension
    out = []
    for j in range(n):
        terms = []
        current = Polynomial.variable(n, j)
        k = 0
        while not current.is_zero():
            if k > max_order:
                return None
            terms.append(current * (1.0 / factorial(k)))
            current = x.apply(current)
            k += 1
        out.append(tuple(terms))
    return tuple(out)


def _escaped(pts: np.ndarray, bound: float) -> np.ndarray:
    return ~np.all(np.isfinite(pts), axis=1) | (np.linalg.norm(np.nan_to_num(pts, nan=np.inf), axis=1) > bound)


def _rk4(x: VectorField, s: np.ndarray, pts: np.ndarray, settings: LabSettings) -> Tuple[np.ndarray, np.ndarray]:
    nsteps = max(1, int(np.ceil(np.max(np.abs(s)) * settings.steps_per_unit)))
    dt = (s / nsteps)[:, None]
    y = pts.copy()
    ok = np.ones(len(y), dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(nsteps):
            k1 = x(y)
            k2 = x(y + 0.5 * dt * k1)
            k3 = x(y + 0.5 * dt * k2)
            k4 = x(y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            bad = _escaped(y, settings.blowup_bound)
            if np.any(bad):
                ok &= ~bad
                y[bad] = pts[bad]
    return y, ok


def flow_batch(x: VectorField, s, points, settings: LabSettings = DEFAULT_SETTINGS) -> Tuple[np.ndarray, np.ndarray]:
    """exp(s X)(z) for a batch of points; s is a scalar or one time per point.

    Returns (end points, ok mask). Escaped trajectories keep their start point and ok=False.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != x.dimension:
        raise InputError(f"Point dimension {pts.shape[1]} does not match field dimension {x.dimension}")
    times = np.broadcast_to(np.asarray(s, dtype=float), (len(pts),)).copy()
    if not np.any(times):
        return pts.copy(), np.ones(len(pts), dtype=bool)
    series = lie_series(x, settings.lie_series_max) if settings.flow_integrator == "auto" else None
    if series is None:
        return _rk4(x, times, pts, settings)
    out = np.empty_like(pts)
    with np.errstate(over="ignore", invalid="ignore"):
        for j, terms in enumerate(series):
            acc = np.zeros(len(pts))
            for k, poly in enumerate(terms):
                acc = acc + poly(pts) * times**k
            out[:, j] = acc
    ok = ~_escaped(out, settings.blowup_bound)
    out[~ok] = pts[~ok]
    return out, ok


def flow(x: VectorField, s, z, settings: LabSettings = DEFAULT_SETTINGS) -> np.ndarray:
    pts = np.asarray(z, dtype=float)
    out, ok = flow_batch(x, s, pts, settings)
    if not np.all(ok):
        raise FlowEscapeError(f"Flow left the ball of radius {settings.blowup_bound:g}", time=float(np.max(np.abs(s))))
    return out[0] if pts.ndim == 1 else out


# ---------- Composite flows ----------
def invert_sequence(seq: FlowSequence) -> FlowSequence:
    return [(i, -t) for i, t in reversed(seq)]


def composite_sequence(a, leaves: Sequence[int]) -> FlowSequence:
    """C_l(a; S_1..S_l) for a >= 0.

    C_1 = exp(a^d1 S_1); C_l = C_{l-1}(S_2..)^-1 exp(-a^d1 S_1) C_{l-1}(S_2..) exp(a^d1 S_1).
    """
    if not leaves:
        raise InputError("Composite flow needs at least one generator")
    head = (leaves[0], a ** leaf_degree(leaves[0]))
    if len(leaves) == 1:
        return [head]
    inner = composite_sequence(a, leaves[1:])
    return [head] + inner + [(leaves[0], -head[1])] + invert_sequence(inner)


def run_sequence(
    seq: FlowSequence,
    generators: Sequence[VectorField],
    points,
    settings: LabSettings = DEFAULT_SETTINGS,
) -> Tuple[np.ndarray, np.ndarray]:
    pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
    ok = np.ones(len(pts), dtype=bool)
    for index, t in seq:
        if index >= len(generators):
            raise InputError(f"Generator {index} does not exist")
        pts, step_ok = flow_batch(generators[index], t, pts, settings)
        ok &= step_ok
    return pts, ok


def composite_flow_batch(
    a,
    leaves: Sequence[int],
    points,
    generators: Sequence[VectorField],
    settings: LabSettings = DEFAULT_SETTINGS,
) -> Tuple[np.ndarray, np.ndarray]:
    """Negative a runs the inverse of C_l(|a|)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.broadcast_to(np.asarray(a, dtype=float), (len(pts),))
    out = pts.copy()
    ok = np.ones(len(pts), dtype=bool)
    for negative in (False, True):
        mask = (a < 0) if negative else (a >= 0)
        if not np.any(mask):
            continue
        seq = composite_sequence(np.abs(a[mask]), leaves)
        if negative:
            seq = invert_sequence(seq)
        out[mask], ok[mask] = run_sequence(seq, generators, pts[mask], settings)
    return out, ok


def composite_flow(a: float, leaves: Sequence[int], z, generators: Sequence[VectorField],
                   settings: LabSettings = DEFAULT_SETTINGS) -> np.ndarray:
    pts = np.asarray(z, dtype=float)
    out, ok = composite_flow_batch(a, leaves, pts, generators, settings)
    if not np.all(ok):
        raise FlowEscapeError(f"Composite flow C_{len(leaves)}({a:g}) escaped")
    return out[0] if pts.ndim == 1 else out


def exp_star_batch(sigma, word: CommutatorWord, points, generators: Sequence[VectorField],
                   settings: LabSettings = DEFAULT_SETTINGS) -> Tuple[np.ndarray, np.ndarray]:
    sigma = np.asarray(sigma, dtype=float)
    a = np.sign(sigma) * np.abs(sigma) ** (1.0 / word.degree)
    return composite_flow_batch(a, word.leaves(), points, generators, settings)


def exp_star(sigma: float, word: CommutatorWord, z, generators: Sequence[VectorField],
             settings: LabSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """C_l(sigma^(1/d); leaves of word)(z), d the word degree; sigma < 0 runs the swapped commutator."""
    pts = np.asarray(z, dtype=float)
    out, ok = exp_star_batch(sigma, word, pts, generators, settings)
    if not np.all(ok):
        raise FlowEscapeError(f"exp*({sigma:g} {word.label()}) escaped")
    return out[0] if pts.ndim == 1 else out


def flow_commutator_defect(x1: VectorField, x2: VectorField, a: float, z,
                           settings: LabSettings = DEFAULT_SETTINGS) -> float:
    """|exp(-aX2)exp(-aX1)exp(aX2)exp(aX1)(z) - exp(a^2 [X1,X2])(z)|."""
    gens = (x1, x2)
    end, _ = run_sequence([(0, a), (1, a), (0, -a), (1, -a)], gens, z, settings)
    target = flow(lie_bracket(x1, x2), a * a, np.asarray(z, dtype=float), settings)
    return float(np.linalg.norm(end[0] - target))
