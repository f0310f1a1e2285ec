"""Sparse multivariate polynomial arithmetic over named variables.

Polynomials are stored as maps from exponent tuples to float coefficients
over an ordered ambient variable list.  Everything downstream (dynamics,
SOS targets, certificates) is built from this representation.  Monomial
order is graded lexicographic and fixed globally so that compiled conic
problems and file exports are bit-reproducible.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass

import numpy as np

# Coefficients below this are dropped after every normalization pass.
CLEANUP_EPS = 1e-12

# A monomial is a tuple of non-negative integer exponents, one per
# ambient variable; its total degree is the sum.
Monomial = tuple


class StructureError(ValueError):
    """Structural misuse: mismatched variable lists, bad dimensions."""


def grlex_key(expo):
    """Sort key for graded lexicographic order (degree, then x1-major)."""
    return (sum(expo), tuple(-e for e in expo))


def monomial_basis(dim: int, max_degree: int) -> list[Monomial]:
    """All monomials of total degree <= max_degree, graded lex order.

    Count is C(dim + max_degree, dim).
    """
    if dim < 1 or max_degree < 0:
        raise StructureError(f"bad basis request dim={dim} max_degree={max_degree}")
    out = []
    for d in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), d):
            expo = [0] * dim
            for i in combo:
                expo[i] += 1
            out.append(tuple(expo))
    return out


class Polynomial:
    """Immutable-by-convention sparse polynomial.

    vars:  ordered tuple of variable names (the ambient list)
    terms: dict mapping exponent tuple -> float coefficient
    """

    __slots__ = ("vars", "terms")

    def __init__(self, variables, terms=None):
        self.vars = tuple(variables)
        nv = len(self.vars)
        merged: dict = {}
        for expo, coef in (terms or {}).items():
            if len(expo) != nv:
                raise StructureError(
                    f"exponent tuple {expo} has length {len(expo)}, ambient dim {nv}")
            key = tuple(int(e) for e in expo)
            if any(e < 0 for e in key):
                raise StructureError(f"negative exponent in {expo}")
            merged[key] = merged.get(key, 0.0) + float(coef)
        self.terms = {e: c for e, c in merged.items() if abs(c) >= CLEANUP_EPS}

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, variables):
        return cls(variables, {})

    @classmethod
    def constant(cls, variables, value):
        return cls(variables, {tuple([0] * len(tuple(variables))): value})

    @classmethod
    def var(cls, variables, name):
        variables = tuple(variables)
        if name not in variables:
            raise StructureError(f"unknown variable {name!r}")
        expo = [0] * len(variables)
        expo[variables.index(name)] = 1
        return cls(variables, {tuple(expo): 1.0})

    # -- structure ----------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self):
        """Total degree; -inf sentinel for the zero polynomial."""
        if not self.terms:
            return float("-inf")
        return max(sum(e) for e in self.terms)

    def degree_in(self, name: str) -> int:
        i = self._index(name)
        return max((e[i] for e in self.terms), default=0)

    def support(self) -> set:
        """Names of variables that actually appear."""
        out = set()
        for expo in self.terms:
            for i, e in enumerate(expo):
                if e:
                    out.add(self.vars[i])
        return out

    def _index(self, name: str) -> int:
        try:
            return self.vars.index(name)
        except ValueError:
            raise StructureError(f"unknown variable {name!r} in {self.vars}") from None

    def _check_same_vars(self, other: "Polynomial"):
        if self.vars != other.vars:
            raise StructureError(
                f"ambient variable lists differ: {self.vars} vs {other.vars}")

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.vars, other)
        self._check_same_vars(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(self.vars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.vars, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.vars, {e: c * other for e, c in self.terms.items()})
        self._check_same_vars(other)
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0.0) + c1 * c2
        return Polynomial(self.vars, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise StructureError("negative power")
        result = Polynomial.constant(self.vars, 1.0)
        for _ in range(n):
            result = result * self
        return result

    def __eq__(self, other):
        return (isinstance(other, Polynomial)
                and self.vars == other.vars and self.terms == other.terms)

    __hash__ = None

    # -- calculus and evaluation ---------------------------------------
    def partial_derivative(self, name: str) -> "Polynomial":
        i = self._index(name)
        out = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            key = e[:i] + (e[i] - 1,) + e[i + 1:]
            out[key] = out.get(key, 0.0) + c * e[i]
        return Polynomial(self.vars, out)

    def fix_var(self, name: str, value: float) -> "Polynomial":
        """Substitute one variable by a constant; ambient is unchanged.

        Terms are folded in graded-lex order so equal inputs give
        bit-identical outputs regardless of dict history.
        """
        i = self._index(name)
        out: dict = {}
        for e in sorted(self.terms, key=grlex_key):
            c = self.terms[e]
            key = e[:i] + (0,) + e[i + 1:]
            out[key] = out.get(key, 0.0) + c * value ** e[i]
        return Polynomial(self.vars, out)

    def evaluate(self, point) -> float:
        point = np.asarray(point, dtype=float)
        if point.shape != (len(self.vars),):
            raise StructureError(
                f"point of length {point.size}, ambient dim {len(self.vars)}")
        total = 0.0
        for e, c in self.terms.items():
            m = c
            for xi, ei in zip(point, e):
                if ei:
                    m *= xi ** ei
            total += m
        return total

    def exponent_arrays(self):
        """(E, C) with E integer (n_terms, dim) and C (n_terms,) for batch eval."""
        if not self.terms:
            return (np.zeros((0, len(self.vars)), dtype=np.int64),
                    np.zeros(0, dtype=float))
        items = sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))
        E = np.array([e for e, _ in items], dtype=np.int64)
        C = np.array([c for _, c in items], dtype=float)
        return E, C

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at a (batch, dim) array of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != len(self.vars):
            raise StructureError(f"bad batch shape {points.shape}")
        E, C = self.exponent_arrays()
        if len(C) == 0:
            return np.zeros(points.shape[0])
        return (points[:, None, :] ** E[None, :, :]).prod(axis=2) @ C

    def substitute_affine(self, amap: "AffineMap") -> "Polynomial":
        """q with q(y) = p(scale*y + offset), expanded exactly."""
        if amap.dim != len(self.vars):
            raise StructureError(
                f"map dim {amap.dim} vs ambient dim {len(self.vars)}")
        nv = len(self.vars)
        out: dict = {}
        for expo, coef in self.terms.items():
            acc = {tuple([0] * nv): coef}
            for ci, e in enumerate(expo):
                if e == 0:
                    continue
                s = float(amap.scale[ci])
                o = float(amap.offset[ci])
                uni = [(k, math.comb(e, k) * s ** k * o ** (e - k))
                       for k in range(e + 1)]
                nxt: dict = {}
                for base, bc in acc.items():
                    for k, uc in uni:
                        if uc == 0.0:
                            continue
                        key = base[:ci] + (k,) + base[ci + 1:]
                        nxt[key] = nxt.get(key, 0.0) + bc * uc
                acc = nxt
            for key, val in acc.items():
                out[key] = out.get(key, 0.0) + val
        return Polynomial(self.vars, out)

    # -- printing -------------------------------------------------------
    def to_str(self) -> str:
        """Canonical text form; parse_poly inverts it exactly."""
        if not self.terms:
            return "0"
        parts = []
        for expo in sorted(self.terms, key=grlex_key):
            coef = self.terms[expo]
            factors = [repr(abs(coef))]
            for name, e in zip(self.vars, expo):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            body = "*".join(factors)
            if not parts:
                parts.append(body if coef >= 0 else "-" + body)
            else:
                parts.append(("+ " if coef >= 0 else "- ") + body)
        return " ".join(parts)

    def __repr__(self):
        return f"Polynomial({self.vars}, {self.to_str()!r})"


# -- module-level operation aliases (the public op surface) -------------

def multiply(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def partial_derivative(p: Polynomial, name: str) -> Polynomial:
    return p.partial_derivative(name)


def evaluate(p: Polynomial, point) -> float:
    return p.evaluate(point)


def substitute_affine(p: Polynomial, amap: "AffineMap") -> Polynomial:
    return p.substitute_affine(amap)


@dataclass(frozen=True)
class AffineMap:
    """Per-coordinate map y -> scale*y + offset; scale must be nonzero."""

    scale: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        if self.scale.shape != self.offset.shape or self.scale.ndim != 1:
            raise StructureError("scale/offset shape mismatch")
        if np.any(self.scale == 0.0):
            raise StructureError("zero scale entry")

    @property
    def dim(self) -> int:
        return self.scale.size

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(np.ones(dim), np.zeros(dim))

    def apply(self, points):
        return np.asarray(points, dtype=float) * self.scale + self.offset

    def inverse(self) -> "AffineMap":
        return AffineMap(1.0 / self.scale, -self.offset / self.scale)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; degenerate (lower >= upper) coordinates rejected."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise StructureError("box bound shape mismatch")
        if not np.all(self.lower < self.upper):
            raise StructureError(
                f"degenerate box: lower {self.lower} not < upper {self.upper}")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, points, tol: float = 0.0):
        pts = np.asarray(points, dtype=float)
        inside = ((pts >= self.lower - tol) & (pts <= self.upper + tol))
        return inside.all(axis=-1)

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(other.lower >= self.lower)
                    and np.all(other.upper <= self.upper))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def concat(self, other: "Box") -> "Box":
        return Box(np.concatenate([self.lower, other.lower]),
                   np.concatenate([self.upper, other.upper]))

    def unit_map(self) -> AffineMap:
        """Map with original = apply(normalized), normalized box [-1,1]^dim."""
        return AffineMap((self.upper - self.lower) / 2.0,
                         (self.upper + self.lower) / 2.0)


def box_integral(p: Polynomial, box: Box) -> float:
    """Exact Lebesgue integral of p over the box via monomial moments."""
    if box.dim != len(p.vars):
        raise StructureError(f"box dim {box.dim} vs ambient dim {len(p.vars)}")
    total = 0.0
    for expo, coef in p.terms.items():
        m = coef
        for lo, hi, e in zip(box.lower, box.upper, expo):
            m *= (hi ** (e + 1) - lo ** (e + 1)) / (e + 1)
        total += m
    return total


# -- textual syntax ------------------------------------------------------
# Terms like `3.5*x1^2*x2 - 0.25*x1`; identifiers must belong to the
# ambient variable list.

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_]\w*)"
    r"|(?P<op>[\^*+()-]))")


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise StructureError(f"cannot tokenize {text[pos:pos+20]!r}")
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
    return out


def parse_poly(text: str, variables) -> Polynomial:
    """Parse the textual syntax into a Polynomial over `variables`.

    Unknown identifiers are rejected.
    """
    variables = tuple(variables)
    tokens = _tokenize(text)
    nv = len(variables)
    terms: dict = {}
    i = 0

    def parse_factor(i):
        kind, val = tokens[i]
        if kind == "num":
            return float(val), tuple([0] * nv), i + 1
        if kind == "id":
            if val not in variables:
                raise StructureError(f"unknown identifier {val!r}")
            expo = [0] * nv
            power = 1
            j = i + 1
            if j < len(tokens) and tokens[j] == ("op", "^"):
                if j + 1 >= len(tokens):
                    raise StructureError("dangling '^' at end of input")
                kind2, val2 = tokens[j + 1]
                if kind2 != "num" or "." in val2 or "e" in val2.lower():
                    raise StructureError(f"bad exponent {val2!r}")
                power = int(val2)
                j += 2
            expo[variables.index(val)] = power
            return 1.0, tuple(expo), j
        raise StructureError(f"unexpected token {val!r}")

    while i < len(tokens):
        sign = 1.0
        while i < len(tokens) and tokens[i][0] == "op" and tokens[i][1] in "+-":
            if tokens[i][1] == "-":
                sign = -sign
            i += 1
        if i >= len(tokens):
            raise StructureError("dangling sign at end of input")
        coef, expo, i = parse_factor(i)
        coef *= sign
        while i < len(tokens) and tokens[i] == ("op", "*"):
            c2, e2, i = parse_factor(i + 1)
            coef *= c2
            expo = tuple(a + b for a, b in zip(expo, e2))
        terms[expo] = terms.get(expo, 0.0) + coef
    if not tokens and text.strip() not in ("", "0"):
        raise StructureError(f"cannot parse {text!r}")
    return Polynomial(variables, terms)
