"""
polynomial.py

Multivariate polynomials with real coefficients: the coefficient ring of the vector fields.
Arithmetic runs on sympy.Poly over QQ, so binary float coefficients combine exactly;
the canonical term tuple (sorted, merged, zeros dropped) drives numpy evaluation.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from .errors import InputError

Exponents = Tuple[int, ...]
Number = Union[int, float]


@lru_cache(maxsize=None)
def ring_symbols(dimension: int) -> Tuple[sp.Symbol, ...]:
    return tuple(sp.symbols(f"z0:{dimension}"))


def _rational(value) -> sp.Rational:
    return sp.Rational(float(value))


def _to_poly(dimension: int, items) -> sp.Poly:
    rep = {}
    for exps, coeff in items:
        key = tuple(int(e) for e in exps)
        if len(key) != dimension:
            raise InputError(f"Exponent {key} does not match dimension {dimension}")
        if any(e < 0 for e in key):
            raise InputError(f"Negative exponent in {key}")
        rep[key] = rep.get(key, sp.Integer(0)) + _rational(coeff)
    rep = {k: c for k, c in rep.items() if c != 0}
    gens = ring_symbols(dimension)
    if not rep:
        return sp.Poly(0, *gens, domain=sp.QQ)
    return sp.Poly.from_dict(rep, *gens, domain=sp.QQ)


def _terms(poly: sp.Poly) -> Tuple[Tuple[Exponents, float], ...]:
    return tuple(sorted((tuple(m), float(c)) for m, c in poly.terms() if c != 0))


@dataclass(frozen=True)
class Polynomial:
    dimension: int
    terms: Tuple[Tuple[Exponents, float], ...] = ()
    poly: sp.Poly = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.poly is None:
            object.__setattr__(self, "poly", _to_poly(self.dimension, self.terms))
        elif len(self.poly.gens) != self.dimension:
            raise InputError(f"Poly has {len(self.poly.gens)} generators, expected {self.dimension}")
        object.__setattr__(self, "terms", _terms(self.poly))

    @classmethod
    def _wrap(cls, dimension: int, poly: sp.Poly) -> "Polynomial":
        return cls(dimension, (), poly)

    # ---------- constructors ----------
    @classmethod
    def zero(cls, dimension: int) -> "Polynomial":
        return cls(dimension, ())

    @classmethod
    def constant(cls, dimension: int, value: Number) -> "Polynomial":
        return cls(dimension, (((0,) * dimension, value),))

    @classmethod
    def variable(cls, dimension: int, index: int, power: int = 1) -> "Polynomial":
        exps = [0] * dimension
        exps[index] = power
        return cls(dimension, ((tuple(exps), 1.0),))

    @classmethod
    def from_mapping(cls, dimension: int, mapping: Mapping[Sequence[int], Number]) -> "Polynomial":
        return cls(dimension, tuple(mapping.items()))

    @classmethod
    def from_sympy(cls, expr, symbols: Sequence[sp.Symbol]) -> "Polynomial":
        poly = sp.Poly(sp.expand(expr), *symbols)
        return cls(len(symbols), tuple((m, float(c)) for m, c in poly.terms()))

    # ---------- queries ----------
    def is_zero(self) -> bool:
        return self.poly.is_zero

    def degree(self) -> int:
        return 0 if self.poly.is_zero else int(self.poly.total_degree())

    def coefficient(self, exponents: Sequence[int]) -> float:
        return float(self.poly.nth(*(int(e) for e in exponents)))

    def to_sympy(self, symbols: Sequence[sp.Symbol]):
        return self.poly.as_expr().subs(dict(zip(self.poly.gens, symbols)), simultaneous=True)

    # ---------- arithmetic ----------
    def _coerce(self, other) -> sp.Poly:
        if isinstance(other, (int, float)):
            return Polynomial.constant(self.dimension, other).poly
        if not isinstance(other, Polynomial):
            return NotImplemented
        if self.dimension != other.dimension:
            raise InputError(f"Dimension mismatch: {self.dimension} vs {other.dimension}")
        return other.poly

    def __add__(self, other):
        rhs = self._coerce(other)
        if rhs is NotImplemented:
            return rhs
        return Polynomial._wrap(self.dimension, self.poly + rhs)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._wrap(self.dimension, -self.poly)

    def __sub__(self, other):
        rhs = self._coerce(other)
        if rhs is NotImplemented:
            return rhs
        return Polynomial._wrap(self.dimension, self.poly - rhs)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial._wrap(self.dimension, self.poly.mul_ground(_rational(other)))
        rhs = self._coerce(other)
        if rhs is NotImplemented:
            return rhs
        return Polynomial._wrap(self.dimension, self.poly * rhs)

    __rmul__ = __mul__

    def derivative(self, index: int) -> "Polynomial":
        return Polynomial._wrap(self.dimension, self.poly.diff(self.poly.gens[index]))

    def compose(self, substitutions: Sequence["Polynomial"]) -> "Polynomial":
        """p(s_0(z), ..., s_{n-1}(z)) for polynomial substitutions s_j of one common dimension."""
        if len(substitutions) != self.dimension:
            raise InputError(f"Composition needs {self.dimension} substitutions, got {len(substitutions)}")
        dims = {s.dimension for s in substitutions}
        if len(dims) != 1:
            raise InputError("Substitutions must share one dimension")
        target = dims.pop()
        gens = ring_symbols(target)
        expr = self.poly.as_expr().subs({g: s.poly.as_expr() for g, s in zip(self.poly.gens, substitutions)},
                                        simultaneous=True)
        return Polynomial._wrap(target, sp.Poly(sp.expand(expr), *gens, domain=sp.QQ))

    # ---------- evaluation ----------
    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dimension:
            raise InputError(f"Point dimension {pts.shape[-1]} does not match polynomial dimension {self.dimension}")
        out = np.zeros(pts.shape[:-1])
        for exps, c in self.terms:
            term = np.full(pts.shape[:-1], c)
            for j, e in enumerate(exps):
                if e == 1:
                    term = term * pts[..., j]
                elif e:
                    term = term * pts[..., j] ** e
            out = out + term
        return out

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for exps, c in self.terms:
            mono = "*".join(f"x{j}^{e}" if e > 1 else f"x{j}" for j, e in enumerate(exps) if e)
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(parts) + ")"
