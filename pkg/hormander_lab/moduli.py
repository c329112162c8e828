"""
moduli.py

Moduli of continuity omega(r) and their Dini integrals.

Run:
  w = parse_modulus("pow:0.5")       # also "log", "zero", "expr:r/(1+r)", "file:omega.csv"
  dini_integral(w, 0.0, 1.0)         # DiniResult(value=2.0, divergent=False)
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import InputError
from .reports import read_table

log = logging.getLogger(__name__)

KINDS = ("zero", "power", "log", "custom", "sampled")
CELL_RATIO = 0.5
CELL_NODES = 8
MAX_CELLS = 400


@dataclass(frozen=True)
class DiniResult:
    value: float
    divergent: bool = False


@dataclass(frozen=True)
class ModulusOfContinuity:
    kind: str
    alpha: float = 1.0
    scale: float = 1.0
    function: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    samples: Tuple[Tuple[float, float], ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"Unknown modulus kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind == "power" and not 0.0 < self.alpha <= 1.0:
            raise InputError(f"Power modulus exponent must lie in (0, 1], got {self.alpha}")
        if self.scale < 0:
            raise InputError("Modulus scale must be nonnegative")
        if self.kind == "custom" and self.function is None:
            raise InputError("A custom modulus needs a function")
        if self.kind == "sampled":
            pts = sorted((float(r), float(w)) for r, w in self.samples)
            if len(pts) < 2:
                raise InputError("A sampled modulus needs at least two samples")
            r = np.array([p[0] for p in pts])
            w = np.array([p[1] for p in pts])
            if np.any(r <= 0) or np.any(w < 0):
                raise InputError("Sampled modulus needs r > 0 and omega >= 0")
            if np.any(np.diff(w) < 0):
                raise InputError("Sampled modulus must be nondecreasing in r")
            object.__setattr__(self, "samples", tuple(pts))
        if not self.label:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self) -> str:
        if self.kind == "power":
            return f"pow:{self.alpha:g}" + (f":{self.scale:g}" if self.scale != 1.0 else "")
        if self.kind == "log":
            return "log" + (f":{self.scale:g}" if self.scale != 1.0 else "")
        return self.kind

    # ---------- constructors ----------
    @classmethod
    def zero(cls) -> "ModulusOfContinuity":
        return cls("zero", scale=0.0)

    @classmethod
    def power(cls, alpha: float, scale: float = 1.0) -> "ModulusOfContinuity":
        return cls("power", alpha=alpha, scale=scale)

    @classmethod
    def logarithmic(cls, scale: float = 1.0) -> "ModulusOfContinuity":
        return cls("log", scale=scale)

    @classmethod
    def sampled(cls, radii, values, label: str = "") -> "ModulusOfContinuity":
        return cls("sampled", samples=tuple(zip(np.asarray(radii, float).tolist(), np.asarray(values, float).tolist())),
                   label=label)

    # ---------- evaluation ----------
    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise InputError("Modulus evaluated at negative radius")
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "power":
            return self.scale * r**self.alpha
        if self.kind == "log":
            with np.errstate(divide="ignore"):
                out = self.scale / np.log(math.e / np.where(r > 0, r, 1.0))
            return np.where(r > 0, out, 0.0)
        if self.kind == "custom":
            return self.scale * np.asarray(self.function(r), dtype=float)
        return self._interpolate(r)

    def _interpolate(self, r: np.ndarray) -> np.ndarray:
        # log-log interpolation; power-law extrapolation below the first sample
        rs = np.array([p[0] for p in self.samples])
        ws = np.array([p[1] for p in self.samples])
        out = np.interp(r, rs, ws)
        positive = ws > 0
        if np.all(positive):
            with np.errstate(divide="ignore"):
                lr = np.log(np.where(r > 0, r, rs[0]))
            inside = (r >= rs[0]) & (r <= rs[-1])
            out = np.where(inside, np.exp(np.interp(lr, np.log(rs), np.log(ws))), out)
            slope = (np.log(ws[1]) - np.log(ws[0])) / (np.log(rs[1]) - np.log(rs[0]))
            below = (r < rs[0]) & (r > 0)
            out = np.where(below, ws[0] * (np.where(r > 0, r, 1.0) / rs[0]) ** slope, out)
        else:
            below = r < rs[0]
            out = np.where(below, ws[0] * r / rs[0], out)
        out = np.where(r > rs[-1], ws[-1], out)
        return np.where(r > 0, out, 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "scale": self.scale, "label": self.label}


def parse_modulus(text: str) -> ModulusOfContinuity:
    """zero | pow:alpha[:scale] | log[:scale] | expr:<expression in r> | file:<csv or xlsx with columns r, omega>."""
    text = (text or "").strip()
    head, _, rest = text.partition(":")
    head = head.lower()
    try:
        if head in ("zero", "0", "const", "constant"):
            return ModulusOfContinuity.zero()
        if head in ("pow", "power"):
            parts = rest.split(":")
            return ModulusOfContinuity.power(float(parts[0]), float(parts[1]) if len(parts) > 1 else 1.0)
        if head == "log":
            return ModulusOfContinuity.logarithmic(float(rest) if rest else 1.0)
    except ValueError as exc:
        raise InputError(f"Bad modulus {text!r}: {exc}") from exc
    if head == "expr":
        from .expressions import parse_function

        fn = parse_function(rest, ("r",))
        return ModulusOfContinuity("custom", function=lambda r: fn(np.asarray(r, float)[..., None]), label=text)
    if head == "file":
        path = Path(rest).expanduser()
        df = read_table(path)
        cols = {c.lower(): c for c in df.columns}
        if "r" not in cols or "omega" not in cols:
            raise InputError(f"{path} needs columns 'r' and 'omega'")
        return ModulusOfContinuity.sampled(df[cols["r"]], df[cols["omega"]], label=text)
    raise InputError(f"Unknown modulus {text!r}")


# ---------- Integrals ----------
def _cells(omega: ModulusOfContinuity, a: float, b: float, weight: Callable[[np.ndarray], np.ndarray]) -> DiniResult:
    """int_a^b omega(r) weight(r) dr over cells [b rho^(k+1), b rho^k], Gauss-Legendre in log r."""
    nodes, wts = np.polynomial.legendre.leggauss(CELL_NODES)
    total = 0.0
    hi = b
    contributions = []
    for _ in range(MAX_CELLS):
        lo = max(a, hi * CELL_RATIO)
        if lo >= hi:
            break
        la, lb = math.log(lo), math.log(hi)
        s = 0.5 * (lb - la) * nodes + 0.5 * (lb + la)
        r = np.exp(s)
        part = float(0.5 * (lb - la) * np.sum(wts * omega(r) * weight(r) * r))
        total += part
        contributions.append(part)
        hi = lo
        if a == 0.0 and len(contributions) > 20:
            recent = contributions[-10:]
            if abs(part) <= 1e-15 * max(abs(total), 1e-300):
                break
            if min(abs(c) for c in recent) > 0 and recent[-1] >= 0.95 * recent[0]:
                return DiniResult(math.inf, True)
        if hi <= a:
            break
    if a == 0.0 and contributions and abs(contributions[-1]) > 1e-8 * max(abs(total), 1e-300):
        return DiniResult(math.inf, True)
    return DiniResult(total)


def dini_integral(omega: ModulusOfContinuity, a: float, b: float) -> DiniResult:
    """int_a^b omega(r)/r dr for 0 <= a < b <= 1; a divergent integral at 0 is flagged."""
    if not (0.0 <= a <= b <= 1.0):
        raise InputError(f"Dini integral needs 0 <= a <= b <= 1, got a={a}, b={b}")
    if a == b or omega.kind == "zero":
        return DiniResult(0.0)
    if omega.kind == "power":
        return DiniResult(omega.scale * (b**omega.alpha - a**omega.alpha) / omega.alpha)
    if omega.kind == "log":
        if a == 0.0:
            return DiniResult(math.inf, True)
        return DiniResult(omega.scale * (math.log(1.0 - math.log(a)) - math.log(1.0 - math.log(b))))
    return _cells(omega, a, b, lambda r: 1.0 / r)


def tail_integral(omega: ModulusOfContinuity, d: float) -> float:
    """int_d^1 omega(r)/r^2 dr for 0 < d <= 1."""
    if not 0.0 < d <= 1.0:
        raise InputError(f"Tail integral needs 0 < d <= 1, got {d}")
    if d == 1.0 or omega.kind == "zero":
        return 0.0
    if omega.kind == "power":
        if omega.alpha == 1.0:
            return -omega.scale * math.log(d)
        return omega.scale * (d ** (omega.alpha - 1.0) - 1.0) / (1.0 - omega.alpha)
    return _cells(omega, d, 1.0, lambda r: 1.0 / r**2).value


def dini_bound_shape(omega: ModulusOfContinuity, d: float, sup_u: float, sup_f: float) -> float:
    """d sup|u| + d sup|f| + int_0^d omega/r + d int_d^1 omega/r^2."""
    d = min(max(d, 1e-300), 1.0)
    return d * sup_u + d * sup_f + dini_integral(omega, 0.0, d).value + d * tail_integral(omega, d)
