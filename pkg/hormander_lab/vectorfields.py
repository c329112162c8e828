"""
vectorfields.py

Polynomial vector fields, exact Lie brackets, the Hormander filtration and the
degree-ordered basis of commutator words.

Run:
  gens = load_fields("fields.json")          # index 0 is the drift X0
  filt = build_filtration(gens, z, s_max=6)
  basis = select_graded_basis(filt)          # basis.q, basis.degrees
"""

import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from .config import DEFAULT_SETTINGS, LabSettings
from .errors import InputError, NumericError, RankDeficientError
from .polynomial import Polynomial

log = logging.getLogger(__name__)

DRIFT = 0


@dataclass(frozen=True)
class VectorField:
    """X = sum_j b_j(z) d_j with polynomial b_j."""

    coefficients: Tuple[Polynomial, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        if not self.coefficients:
            raise InputError("A vector field needs at least one coefficient")
        dims = {c.dimension for c in self.coefficients}
        if dims != {len(self.coefficients)}:
            raise InputError(f"Coefficient dimensions {sorted(dims)} do not match field size {len(self.coefficients)}")

    @property
    def dimension(self) -> int:
        return len(self.coefficients)

    @classmethod
    def zero(cls, dimension: int) -> "VectorField":
        return cls(tuple(Polynomial.zero(dimension) for _ in range(dimension)))

    @classmethod
    def coordinate(cls, dimension: int, index: int) -> "VectorField":
        return cls(tuple(Polynomial.constant(dimension, 1.0 if j == index else 0.0) for j in range(dimension)))

    @classmethod
    def from_sympy(cls, components: Sequence, symbols: Sequence[sp.Symbol]) -> "VectorField":
        if len(components) != len(symbols):
            raise InputError("One component per coordinate is required")
        return cls(tuple(Polynomial.from_sympy(sp.sympify(c), symbols) for c in components))

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coefficients)

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.stack([c(pts) for c in self.coefficients], axis=-1)

    def apply(self, poly: Polynomial) -> Polynomial:
        if poly.dimension != self.dimension:
            raise InputError(f"Function dimension {poly.dimension} does not match field dimension {self.dimension}")
        out = Polynomial.zero(self.dimension)
        for j, b in enumerate(self.coefficients):
            if not b.is_zero():
                out = out + b * poly.derivative(j)
        return out

    def _check(self, other: "VectorField"):
        if self.dimension != other.dimension:
            raise InputError(f"Dimension mismatch: {self.dimension} vs {other.dimension}")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(tuple(a + b for a, b in zip(self.coefficients, other.coefficients)))

    def __neg__(self) -> "VectorField":
        return VectorField(tuple(-a for a in self.coefficients))

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + (-other)

    def scale(self, factor: float) -> "VectorField":
        return VectorField(tuple(a * float(factor) for a in self.coefficients))


def lie_bracket(x: VectorField, y: VectorField) -> VectorField:
    # [X,Y]^k = X(Y^k) - Y(X^k)
    x._check(y)
    return VectorField(tuple(x.apply(yk) - y.apply(xk) for xk, yk in zip(x.coefficients, y.coefficients)))


def leaf_degree(index: int) -> int:
    return 2 if index == DRIFT else 1


@dataclass(frozen=True)
class CommutatorWord:
    """Binary bracket tree over generator indices; leaf 0 is the drift."""

    leaf: Optional[int] = None
    left: Optional["CommutatorWord"] = None
    right: Optional["CommutatorWord"] = None
    degree: int = 0

    def __post_init__(self):
        if self.leaf is not None:
            if self.left is not None or self.right is not None:
                raise InputError("A leaf word has no children")
            if self.leaf < 0:
                raise InputError(f"Negative generator index {self.leaf}")
            expected = leaf_degree(self.leaf)
        else:
            if self.left is None or self.right is None:
                raise InputError("A bracket word needs two children")
            expected = self.left.degree + self.right.degree
        if self.degree == 0:
            object.__setattr__(self, "degree", expected)
        elif self.degree != expected:
            raise InputError(f"Stored degree {self.degree} differs from leaf-degree sum {expected}")

    @classmethod
    def generator(cls, index: int) -> "CommutatorWord":
        return cls(leaf=index)

    @classmethod
    def bracket(cls, left: "CommutatorWord", right: "CommutatorWord") -> "CommutatorWord":
        return cls(left=left, right=right)

    @classmethod
    def nested(cls, leaves: Sequence[int]) -> "CommutatorWord":
        """Right-nested word [S1,[S2,[...,S_l]]]."""
        if not leaves:
            raise InputError("Empty word")
        word = cls.generator(leaves[-1])
        for index in reversed(leaves[:-1]):
            word = cls.bracket(cls.generator(index), word)
        return word

    @classmethod
    def parse(cls, label: str) -> "CommutatorWord":
        """Inverse of label(): 'X1' or '[X1,[X1,X0]]'."""
        text = label.replace(" ", "")

        def read(pos: int) -> Tuple["CommutatorWord", int]:
            if text.startswith("X", pos):
                end = pos + 1
                while end < len(text) and text[end].isdigit():
                    end += 1
                if end == pos + 1:
                    raise InputError(f"Missing generator index in word {label!r}")
                return cls.generator(int(text[pos + 1:end])), end
            if text.startswith("[", pos):
                left, pos = read(pos + 1)
                if not text.startswith(",", pos):
                    raise InputError(f"Expected ',' at {pos} in word {label!r}")
                right, pos = read(pos + 1)
                if not text.startswith("]", pos):
                    raise InputError(f"Expected ']' at {pos} in word {label!r}")
                return cls.bracket(left, right), pos + 1
            raise InputError(f"Cannot read word {label!r} at position {pos}")

        word, end = read(0)
        if end != len(text):
            raise InputError(f"Trailing text in word {label!r}")
        return word

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    def leaves(self) -> Tuple[int, ...]:
        if self.is_leaf:
            return (self.leaf,)
        return self.left.leaves() + self.right.leaves()

    def length(self) -> int:
        return len(self.leaves())

    def label(self) -> str:
        if self.is_leaf:
            return f"X{self.leaf}"
        return f"[{self.left.label()},{self.right.label()}]"

    def sort_key(self):
        return (self.degree, self.leaves())

    def evaluate(self, generators: Sequence[VectorField]) -> VectorField:
        if self.is_leaf:
            if self.leaf >= len(generators):
                raise InputError(f"Word {self.label()} uses generator {self.leaf} but only {len(generators)} exist")
            return generators[self.leaf]
        return lie_bracket(self.left.evaluate(generators), self.right.evaluate(generators))

    def __str__(self):
        return self.label()


# ---------- Black-box derivatives ----------
ScalarFunction = Union[Polynomial, Callable[[np.ndarray], np.ndarray]]


def apply_field(x: VectorField, f: ScalarFunction, z, settings: LabSettings = DEFAULT_SETTINGS) -> Union[float, np.ndarray]:
    """sum_j b_j(z) d_j f(z); exact for Polynomial f, central differences otherwise.

    Accepts a single point (n,) or a batch (P, n).
    """
    pts = np.asarray(z, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != x.dimension:
        raise InputError(f"Point dimension {pts.shape[-1]} does not match field dimension {x.dimension}")
    if isinstance(f, Polynomial):
        out = x.apply(f)(pts)
    else:
        b = x(pts)
        h = settings.h_fd_factor * (1.0 + np.linalg.norm(pts, axis=1))
        out = np.zeros(len(pts))
        for j in range(x.dimension):
            active = b[:, j] != 0.0
            if not np.any(active):
                continue
            step = np.zeros_like(pts)
            step[:, j] = h
            fp = np.asarray(f(pts + step), dtype=float)
            fm = np.asarray(f(pts - step), dtype=float)
            if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
                raise NumericError(f"Non-finite function values near {pts[0].tolist()}")
            out = out + b[:, j] * (fp - fm) / (2.0 * h)
    return float(out[0]) if single else out


# ---------- Filtration and basis ----------
def numerical_rank(vectors: np.ndarray, rank_tol: float) -> int:
    mat = np.atleast_2d(np.asarray(vectors, dtype=float))
    if mat.size == 0:
        return 0
    sigma = np.linalg.svd(mat, compute_uv=False)
    if sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma / sigma[0] > rank_tol))


@dataclass(frozen=True)
class Filtration:
    base_point: Tuple[float, ...]
    generators: Tuple[VectorField, ...]
    layers: Tuple[Tuple[Tuple[CommutatorWord, VectorField], ...], ...]
    ranks: Tuple[int, ...]
    step: int
    full_rank: bool
    s_max: int = 0

    @property
    def dimension(self) -> int:
        return len(self.base_point)

    def summary(self) -> str:
        if self.full_rank:
            return f"Hormander condition holds at step {self.step}"
        text = f"Hormander condition fails up to s_max={self.s_max} (rank {self.ranks[-1]} of {self.dimension})"
        if self.step < self.s_max:
            text += f"; no new brackets after depth {self.step}"
        return text


def build_filtration(
    generators: Sequence[VectorField],
    z,
    s_max: Optional[int] = None,
    settings: LabSettings = DEFAULT_SETTINGS,
) -> Filtration:
    """Layers V_1, V_2 = V_1 + [V_1,V_1] + X0, V_{j+1} = V_j + [V_1, V_j] until full rank at z."""
    gens = tuple(generators)
    if not gens:
        raise InputError("At least one vector field is required")
    s_max = settings.s_max if s_max is None else s_max
    if s_max < 1:
        raise InputError("s_max must be >= 1")
    n = gens[0].dimension
    for g in gens:
        if g.dimension != n:
            raise InputError("All vector fields must share one dimension")
    point = np.asarray(z, dtype=float)
    if point.shape != (n,):
        raise InputError(f"Base point must have {n} coordinates")

    def rank_of(entries):
        if not entries:
            return 0
        return numerical_rank(np.stack([f(point) for _, f in entries]), settings.rank_tol)

    first = [(CommutatorWord.generator(i), g) for i, g in enumerate(gens) if i != DRIFT and not g.is_zero()]
    layers = [first]
    ranks = [rank_of(first)]
    newest = first
    while ranks[-1] < n and len(layers) < s_max:
        current = list(layers[-1])
        added = []
        if len(layers) == 1:
            for a in range(len(first)):
                for b in range(a + 1, len(first)):
                    (wa, fa), (wb, fb) = first[a], first[b]
                    added.append((CommutatorWord.bracket(wa, wb), lie_bracket(fa, fb)))
            if len(gens) > DRIFT and not gens[DRIFT].is_zero():
                added.append((CommutatorWord.generator(DRIFT), gens[DRIFT]))
        else:
            for w1, f1 in first:
                for w, f in newest:
                    if w == w1:
                        continue
                    added.append((CommutatorWord.bracket(w1, w), lie_bracket(f1, f)))
        added = [(w, f) for w, f in added if not f.is_zero()]
        current.extend(added)
        layers.append(current)
        ranks.append(rank_of(current))
        newest = added
        log.debug("Layer %d: %d words, rank %d", len(layers), len(current), ranks[-1])
        if not added and len(layers) > 2:
            break
    full = ranks[-1] == n
    filt = Filtration(
        base_point=tuple(point.tolist()),
        generators=gens,
        layers=tuple(tuple(layer) for layer in layers),
        ranks=tuple(ranks),
        step=len(layers),
        full_rank=full,
        s_max=s_max,
    )
    log.info(filt.summary())
    return filt


@dataclass(frozen=True)
class BasisEntry:
    word: CommutatorWord
    field: VectorField

    @property
    def degree(self) -> int:
        return self.word.degree


@dataclass(frozen=True)
class GradedBasis:
    base_point: Tuple[float, ...]
    generators: Tuple[VectorField, ...]
    entries: Tuple[BasisEntry, ...]
    condition_number: float = field(default=1.0)

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(e.degree for e in self.entries)

    @property
    def q(self) -> int:
        return int(sum(self.degrees))

    @property
    def words(self) -> Tuple[CommutatorWord, ...]:
        return tuple(e.word for e in self.entries)

    def matrix(self, points) -> np.ndarray:
        """Columns are the basis fields evaluated at the point(s)."""
        pts = np.asarray(points, dtype=float)
        return np.stack([e.field(pts) for e in self.entries], axis=-1)

    def index_of(self, word: CommutatorWord) -> int:
        for k, e in enumerate(self.entries):
            if e.word == word:
                return k
        raise InputError(f"Word {word.label()} is not in the basis")

    def to_dict(self) -> dict:
        return {
            "base_point": list(self.base_point),
            "words": [e.word.label() for e in self.entries],
            "leaves": [list(e.word.leaves()) for e in self.entries],
            "degrees": list(self.degrees),
            "q": self.q,
            "condition_number": self.condition_number,
        }


def select_graded_basis(filtration: Filtration, settings: LabSettings = DEFAULT_SETTINGS) -> GradedBasis:
    n = filtration.dimension
    point = np.asarray(filtration.base_point)
    candidates = sorted(filtration.layers[-1], key=lambda wf: wf[0].sort_key())
    kept: List[BasisEntry] = []
    vectors: List[np.ndarray] = []
    rank = 0
    for word, vf in candidates:
        trial = vectors + [vf(point)]
        r = numerical_rank(np.stack(trial), settings.rank_tol)
        if r > rank:
            kept.append(BasisEntry(word, vf))
            vectors = trial
            rank = r
        if rank == n:
            break
    if rank < n:
        where = list(filtration.base_point)
        raise RankDeficientError(f"Filtration spans rank {rank} of {n} at {where} up to s_max={filtration.s_max}", rank, n)
    mat = np.stack(vectors, axis=1)
    cond = float(np.linalg.cond(mat))
    basis = GradedBasis(filtration.base_point, filtration.generators, tuple(kept), cond)
    log.info("Basis %s, q=%d, cond=%.3g", [e.word.label() for e in kept], basis.q, cond)
    return basis


# ---------- Field files ----------
def _polynomial_from_terms(dimension: int, terms) -> Polynomial:
    if terms is None:
        return Polynomial.zero(dimension)
    if isinstance(terms, (int, float)):
        return Polynomial.constant(dimension, terms)
    items = []
    for t in terms:
        try:
            items.append((tuple(t["exponents"]), float(t["coeff"])))
        except (KeyError, TypeError) as exc:
            raise InputError(f"Bad coefficient term {t!r}: expected {{exponents, coeff}}") from exc
    return Polynomial(dimension, tuple(items))


def fields_from_dict(raw: dict) -> Tuple[VectorField, ...]:
    try:
        dimension = int(raw["dimension"])
        entries = raw["fields"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError("Field file needs 'dimension' and 'fields'") from exc
    gens = []
    for k, entry in enumerate(entries):
        if entry is None:
            gens.append(VectorField.zero(dimension))
            continue
        if len(entry) != dimension:
            raise InputError(f"Field {k} has {len(entry)} coefficients, expected {dimension}")
        gens.append(VectorField(tuple(_polynomial_from_terms(dimension, c) for c in entry)))
    if not gens:
        raise InputError("Field file lists no fields")
    return tuple(gens)


def read_field_file(path) -> dict:
    path = Path(path).expanduser().resolve()
    if not path.exists():
        raise InputError(f"Field file not found: {path}")
    try:
        if path.suffix.lower() == ".toml":
            with path.open("rb") as fh:
                return tomllib.load(fh)
        return json.loads(path.read_text())
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"Could not parse {path}: {exc}") from exc


def load_fields(path) -> Tuple[VectorField, ...]:
    return fields_from_dict(read_field_file(path))
