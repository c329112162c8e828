"""
expressions.py

Small expression grammar for test functions and coefficients: + - * / ^ **, sin, cos,
exp, log, sqrt, abs and the model's coordinate names. Polynomial expressions also
carry an exact Polynomial so derivatives along fields stay symbolic.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from .errors import InputError
from .polynomial import Polynomial

ALLOWED_FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
    "pi": sp.pi,
    "E": sp.E,
}


@dataclass(frozen=True)
class ScalarExpression:
    text: str
    variables: tuple
    expr: sp.Expr

    @property
    def symbols(self):
        return tuple(sp.Symbol(v) for v in self.variables)

    @property
    def polynomial(self) -> Optional[Polynomial]:
        if self.expr.is_polynomial(*self.symbols):
            return Polynomial.from_sympy(self.expr, self.symbols)
        return None

    @cached_property
    def _compiled(self):
        return sp.lambdify(self.symbols, self.expr, modules="numpy")

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        value = self._compiled(*[pts[..., j] for j in range(len(self.variables))])
        return np.broadcast_to(np.asarray(value, dtype=float), pts.shape[:-1]).copy()

    def __str__(self):
        return self.text


def parse_function(text: str, variables: Sequence[str]) -> ScalarExpression:
    names = {v: sp.Symbol(v) for v in variables}
    local = dict(ALLOWED_FUNCTIONS)
    local.update(names)
    try:
        expr = parse_expr(text, local_dict=local, global_dict={"__builtins__": {}, "Integer": sp.Integer,
                                                                  "Float": sp.Float, "Rational": sp.Rational,
                                                                  "Symbol": sp.Symbol, "Function": sp.Function},
                          transformations=standard_transformations + (convert_xor,))
    except (SyntaxError, TypeError, NameError, sp.SympifyError) as exc:
        raise InputError(f"Could not parse function {text!r}: {exc}") from exc
    undefined = sorted(str(f.func) for f in expr.atoms(sp.core.function.AppliedUndef))
    if undefined:
        raise InputError(f"Unknown functions in {text!r}: {', '.join(undefined)}")
    unknown = sorted(str(s) for s in expr.free_symbols if str(s) not in names)
    if unknown:
        raise InputError(f"Unknown names in {text!r}: {', '.join(unknown)}; variables are {', '.join(variables)}")
    return ScalarExpression(text, tuple(variables), expr)


def default_variables(dimension: int) -> tuple:
    return tuple(f"x{j}" for j in range(dimension))
