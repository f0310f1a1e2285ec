"""Sum-of-squares programs over named polynomial decision variables.

A program collects decision polynomials (each a dense coefficient
vector over its own variable subset), nonnegativity constraints of the
form  target(z) >= 0 on a semialgebraic domain, and a linear objective
built from box integrals of decisions.  putinar_expand turns one
constraint into equality rows by matching monomial coefficients in

    target(z) = sigma_0(z) + sum_l g_l(z) sigma_l(z)

with sigma_0 a Gram form over the degree-r basis and each multiplier a
Gram form over the degree-(r-1) basis.  Targets are built lazily (a
thunk producing the affine form) so that building a program and asking
for its block dimensions never materializes coefficient data; only
compile() does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProblem, ConstraintSpan, svec_len
from .poly import Box, Polynomial, StructureError, grlex_key, monomial_basis


@dataclass
class DecisionPoly:
    """Dense polynomial decision variable over its own variable subset."""

    name: str
    var_names: tuple
    degree: int
    offset: int = 0

    @property
    def n_slots(self) -> int:
        return math.comb(len(self.var_names) + self.degree, self.degree)

    def basis(self) -> list:
        return monomial_basis(len(self.var_names), self.degree)

    def as_affine(self, ambient: tuple) -> "AffinePoly":
        pos = []
        for v in self.var_names:
            if v not in ambient:
                raise StructureError(f"decision {self.name!r} uses {v!r} "
                                     f"outside the program ambient")
            pos.append(ambient.index(v))
        zero = [0] * len(ambient)
        lin = {}
        for k, expo in enumerate(self.basis()):
            full = list(zero)
            for p, e in zip(pos, expo):
                full[p] = e
            lin[self.offset + k] = Polynomial(ambient, {tuple(full): 1.0})
        return AffinePoly(ambient, lin, Polynomial.zero(ambient))

    def assemble(self, values: np.ndarray) -> Polynomial:
        """Concrete polynomial from a slice of the free-variable vector."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_slots,):
            raise StructureError(
                f"decision {self.name!r} wants {self.n_slots} values, "
                f"got {values.shape}")
        terms = {}
        for expo, v in zip(self.basis(), values.tolist()):
            if v != 0.0:
                terms[expo] = v
        return Polynomial(self.var_names, terms)


class AffinePoly:
    """Polynomial whose coefficients are affine in the decision vector.

    lin maps a global decision index to the polynomial multiplying that
    decision entry; const is the decision-independent part.  All pieces
    share one ambient variable list.
    """

    __slots__ = ("vars", "lin", "const")

    def __init__(self, variables, lin: dict, const: Polynomial):
        self.vars = tuple(variables)
        if const.vars != self.vars:
            raise StructureError("constant part has a different ambient")
        self.lin = {}
        for idx, p in lin.items():
            if p.vars != self.vars:
                raise StructureError("linear part has a different ambient")
            if not p.is_zero:
                self.lin[idx] = p
        self.const = const

    @classmethod
    def wrap(cls, p: Polynomial) -> "AffinePoly":
        return cls(p.vars, {}, p)

    def _coerce(self, other) -> "AffinePoly":
        if isinstance(other, AffinePoly):
            if other.vars != self.vars:
                raise StructureError("mixed ambients in affine arithmetic")
            return other
        if isinstance(other, Polynomial):
            return AffinePoly.wrap(other)
        if isinstance(other, (int, float)):
            return AffinePoly.wrap(Polynomial.constant(self.vars, float(other)))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        lin = dict(self.lin)
        for idx, p in o.lin.items():
            lin[idx] = lin[idx] + p if idx in lin else p
        return AffinePoly(self.vars, lin, self.const + o.const)

    __radd__ = __add__

    def __neg__(self):
        return AffinePoly(self.vars, {i: -p for i, p in self.lin.items()},
                          -self.const)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def mul_poly(self, p: Polynomial) -> "AffinePoly":
        return AffinePoly(self.vars, {i: q * p for i, q in self.lin.items()},
                          self.const * p)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return AffinePoly(self.vars,
                              {i: p * other for i, p in self.lin.items()},
                              self.const * other)
        if isinstance(other, Polynomial):
            return self.mul_poly(other)
        return NotImplemented

    __rmul__ = __mul__

    def partial_derivative(self, name: str) -> "AffinePoly":
        return AffinePoly(
            self.vars,
            {i: p.partial_derivative(name) for i, p in self.lin.items()},
            self.const.partial_derivative(name))

    def fix_var(self, name: str, value: float) -> "AffinePoly":
        return AffinePoly(
            self.vars,
            {i: p.fix_var(name, value) for i, p in self.lin.items()},
            self.const.fix_var(name, value))

    @property
    def degree(self) -> float:
        d = self.const.degree
        for p in self.lin.values():
            d = max(d, p.degree)
        return d

    def assemble(self, free: np.ndarray) -> Polynomial:
        out = self.const
        for idx, p in self.lin.items():
            v = float(free[idx])
            if v != 0.0:
                out = out + p * v
        return out


@dataclass(frozen=True)
class SemialgebraicDomain:
    """Ordered variables, optional bounding box, Putinar generators."""

    var_names: tuple
    box: Box | None
    generators: tuple

    @property
    def dim(self) -> int:
        return len(self.var_names)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.box is not None:
            return self.box.sample(rng, n)
        return rng.uniform(-1.0, 1.0, size=(n, self.dim))


def box_domain(state_names, state_box: Box, time_var: str | None = None) -> SemialgebraicDomain:
    """Box x optional unit time interval, with the redundant ball generator.

    Generators, in order: t(1-t) when timed, (x-l)(u-x) per coordinate,
    then R^2 - |z|^2 over all domain variables where R^2 sums each
    coordinate's max squared bound (the time factor contributes 1).
    """
    state_names = tuple(state_names)
    if len(state_names) != state_box.dim:
        raise StructureError("state names do not match the box dimension")
    names = ((time_var,) + state_names) if time_var else state_names
    lower = state_box.lower
    upper = state_box.upper
    if time_var:
        lower = np.concatenate([[0.0], lower])
        upper = np.concatenate([[1.0], upper])
    gens = []
    for ci, name in enumerate(names):
        l, u = float(lower[ci]), float(upper[ci])
        x = Polynomial.var(names, name)
        gens.append((x - l) * (u - x))
    r2 = float(np.maximum(lower ** 2, upper ** 2).sum())
    ball = Polynomial.constant(names, r2)
    for name in names:
        x = Polynomial.var(names, name)
        ball = ball - x * x
    gens.append(ball)
    return SemialgebraicDomain(names, Box(lower, upper), tuple(gens))


def free_domain(names) -> SemialgebraicDomain:
    """No generators: certificates over this domain are plain SOS."""
    return SemialgebraicDomain(tuple(names), None, ())


@dataclass
class SosConstraint:
    """target(z) >= 0 on domain, certified at Putinar order `order`.

    The thunk defers coefficient materialization; `degree` is the
    declared structural degree used to size the certificate.
    """

    name: str
    domain: SemialgebraicDomain
    degree: int
    thunk: object
    order: int = 0

    def __post_init__(self):
        if self.order == 0:
            self.order = max(1, -(-self.degree // 2))
        self._target = None

    @property
    def target(self) -> AffinePoly:
        if self._target is None:
            t = self.thunk()
            if isinstance(t, Polynomial):
                t = AffinePoly.wrap(t)
            self._target = t
        return self._target

    def psd_dims(self) -> list:
        k, r = self.domain.dim, self.order
        dims = [math.comb(k + r, k)]
        if r >= 1:
            dims += [math.comb(k + r - 1, k)] * len(self.domain.generators)
        return dims

    @property
    def n_rows(self) -> int:
        return math.comb(self.domain.dim + 2 * self.order, self.domain.dim)


class SosProgram:
    """Decision polynomials, SOS constraints, box-integral objective."""

    def __init__(self, ambient):
        self.ambient = tuple(ambient)
        if len(set(self.ambient)) != len(self.ambient):
            raise StructureError("duplicate ambient variable")
        self.decisions: list = []
        self.constraints: list = []
        self.objective_terms: list = []
        self._by_name: dict = {}
        self.n_free = 0

    def _check_subset(self, what: str, names: tuple):
        pos = []
        for v in names:
            if v not in self.ambient:
                raise StructureError(f"{what} uses unknown variable {v!r}")
            pos.append(self.ambient.index(v))
        if pos != sorted(pos):
            raise StructureError(f"{what} lists variables out of ambient order")

    def add_decision(self, name: str, var_names, degree: int) -> DecisionPoly:
        if name in self._by_name:
            raise StructureError(f"duplicate decision {name!r}")
        var_names = tuple(var_names)
        self._check_subset(f"decision {name!r}", var_names)
        dp = DecisionPoly(name, var_names, degree, offset=self.n_free)
        self.n_free += dp.n_slots
        self.decisions.append(dp)
        self._by_name[name] = dp
        return dp

    def decision(self, name: str) -> DecisionPoly:
        return self._by_name[name]

    def add_constraint(self, name: str, domain: SemialgebraicDomain,
                       degree: int, thunk) -> SosConstraint:
        if any(c.name == name for c in self.constraints):
            raise StructureError(f"duplicate constraint {name!r}")
        self._check_subset(f"constraint {name!r}", domain.var_names)
        c = SosConstraint(name, domain, degree, thunk)
        self.constraints.append(c)
        return c

    def add_objective_integral(self, decision_name: str, box: Box):
        dp = self.decision(decision_name)
        if box.dim != len(dp.var_names):
            raise StructureError(
                f"objective box dim {box.dim} vs decision dim {len(dp.var_names)}")
        self.objective_terms.append((decision_name, box))

    def materialize_objective(self):
        """(idx, val) arrays: the linear functional sum of box integrals."""
        acc: dict = {}
        for name, box in self.objective_terms:
            dp = self.decision(name)
            E = np.array(dp.basis(), dtype=np.int64)
            lo = box.lower[None, :]
            hi = box.upper[None, :]
            moments = ((hi ** (E + 1) - lo ** (E + 1)) / (E + 1)).prod(axis=1)
            for k, v in enumerate(moments.tolist()):
                acc[dp.offset + k] = acc.get(dp.offset + k, 0.0) + v
        idx = np.array(sorted(acc), dtype=np.int64)
        val = np.array([acc[i] for i in idx.tolist()], dtype=float)
        return idx, val


@dataclass
class ExpandedConstraint:
    name: str
    psd_dims: list
    n_rows: int
    af_r: np.ndarray
    af_c: np.ndarray
    af_v: np.ndarray
    ag_r: np.ndarray
    ag_b: np.ndarray
    ag_k: np.ndarray
    ag_v: np.ndarray
    rhs: np.ndarray


class _RowIndex:
    """Monomial-tuple -> row lookup, vectorized via radix codes."""

    def __init__(self, k: int, max_deg: int):
        self.basis = monomial_basis(k, max_deg)
        self.k = k
        base = max_deg + 2
        self.radix = None
        if k == 0 or base ** k < 2 ** 62:
            self.radix = base ** np.arange(k, dtype=np.int64)
            codes = np.array(self.basis, dtype=np.int64).reshape(len(self.basis), k) @ self.radix
            self.order = np.argsort(codes, kind="stable").astype(np.int64)
            self.sorted_codes = codes[self.order]
        else:
            self.table = {e: i for i, e in enumerate(self.basis)}

    def lookup_array(self, E: np.ndarray) -> np.ndarray:
        if self.radix is not None:
            codes = E @ self.radix
            pos = np.searchsorted(self.sorted_codes, codes)
            if (pos >= len(self.sorted_codes)).any() or \
                    (self.sorted_codes[np.minimum(pos, len(self.sorted_codes) - 1)] != codes).any():
                raise StructureError("internal: monomial outside row basis")
            return self.order[pos]
        return np.array([self.table[tuple(row)] for row in E.tolist()],
                        dtype=np.int64)

    def lookup_one(self, expo: tuple) -> int:
        if self.radix is not None:
            return int(self.lookup_array(
                np.array([expo], dtype=np.int64).reshape(1, self.k))[0])
        return self.table[expo]


def _pair_indices(p: int):
    """Column-major upper-triangle (i, j) enumeration, i <= j."""
    j_arr = np.repeat(np.arange(p, dtype=np.int64), np.arange(1, p + 1))
    i_arr = np.concatenate([np.arange(j + 1, dtype=np.int64) for j in range(p)])
    return i_arr, j_arr


def putinar_expand(c: SosConstraint) -> ExpandedConstraint:
    """Equality rows and Gram blocks certifying one constraint."""
    target = c.target
    dom = c.domain
    k, r = dom.dim, c.order
    amb = target.vars
    try:
        amb_pos = [amb.index(v) for v in dom.var_names]
    except ValueError as exc:
        raise StructureError(
            f"constraint {c.name!r}: domain variable missing from target "
            f"ambient") from exc
    comp = [i for i in range(len(amb)) if i not in amb_pos]
    two_r = 2 * r

    def localize(expo: tuple) -> tuple:
        for q in comp:
            if expo[q]:
                raise StructureError(
                    f"constraint {c.name!r}: target uses variable "
                    f"{amb[q]!r} outside its domain")
        local = tuple(expo[p] for p in amb_pos)
        if sum(local) > two_r:
            raise StructureError(
                f"constraint {c.name!r}: target degree {sum(local)} "
                f"exceeds certificate degree {two_r}")
        return local

    rows = _RowIndex(k, two_r)
    n_rows = len(rows.basis)

    af_r, af_c, af_v = [], [], []
    for idx, p in sorted(target.lin.items()):
        for expo in sorted(p.terms, key=grlex_key):
            af_r.append(rows.lookup_one(localize(expo)))
            af_c.append(idx)
            af_v.append(p.terms[expo])
    rhs = np.zeros(n_rows)
    for expo, coef in target.const.terms.items():
        rhs[rows.lookup_one(localize(expo))] -= coef

    psd_dims = c.psd_dims()
    weights = [Polynomial.constant(dom.var_names, 1.0)]
    if r >= 1:
        weights += [g for g in dom.generators]
    gr, gb, gk, gv = [], [], [], []
    for b, (dim, g) in enumerate(zip(psd_dims, weights)):
        deg = r if b == 0 else r - 1
        B = np.array(monomial_basis(k, deg), dtype=np.int64).reshape(-1, k)
        i_arr, j_arr = _pair_indices(dim)
        Epair = B[i_arr] + B[j_arr]
        factor = np.where(i_arr == j_arr, 1.0, 2.0)
        svec = np.arange(svec_len(dim), dtype=np.int64)
        for gexpo in sorted(g.terms, key=grlex_key):
            gc = g.terms[gexpo]
            gr.append(rows.lookup_array(Epair + np.array(gexpo, dtype=np.int64)))
            gb.append(np.full(svec.size, b, dtype=np.int64))
            gk.append(svec)
            gv.append(-factor * gc)
    cat = (lambda parts, dt: np.concatenate(parts).astype(dt) if parts
           else np.zeros(0, dtype=dt))
    return ExpandedConstraint(
        c.name, psd_dims, n_rows,
        np.array(af_r, dtype=np.int64), np.array(af_c, dtype=np.int64),
        np.array(af_v, dtype=float),
        cat(gr, np.int64), cat(gb, np.int64), cat(gk, np.int64),
        cat(gv, float), rhs)


def compile(prog: SosProgram) -> ConicProblem:
    """Assemble every constraint into one equality-form conic problem.

    Output triplets are canonically sorted, so compiling the same
    program twice gives identical data.
    """
    row_off = 0
    blk_off = 0
    psd_dims: list = []
    spans: list = []
    af_parts, ag_parts, rhs_parts = [], [], []
    for c in prog.constraints:
        ex = putinar_expand(c)
        af_parts.append((ex.af_r + row_off, ex.af_c, ex.af_v))
        ag_parts.append((ex.ag_r + row_off, ex.ag_b + blk_off, ex.ag_k, ex.ag_v))
        rhs_parts.append(ex.rhs)
        spans.append(ConstraintSpan(c.name, row_off, row_off + ex.n_rows,
                                    blk_off, blk_off + len(ex.psd_dims)))
        row_off += ex.n_rows
        blk_off += len(ex.psd_dims)
        psd_dims.extend(ex.psd_dims)
    obj_idx, obj_val = prog.materialize_objective()
    cat = (lambda parts, i, dt: np.concatenate([p[i] for p in parts]).astype(dt)
           if parts else np.zeros(0, dtype=dt))
    problem = ConicProblem(
        prog.n_free, tuple(psd_dims), obj_idx, obj_val,
        cat(af_parts, 0, np.int64), cat(af_parts, 1, np.int64),
        cat(af_parts, 2, float),
        cat(ag_parts, 0, np.int64), cat(ag_parts, 1, np.int64),
        cat(ag_parts, 2, np.int64), cat(ag_parts, 3, float),
        np.concatenate(rhs_parts) if rhs_parts else np.zeros(0),
        tuple(spans))
    return problem.canonical()


def max_block_dim(prog: SosProgram) -> int:
    """Largest Gram block the program would compile to; purely combinatorial."""
    best = 0
    for c in prog.constraints:
        best = max(best, max(c.psd_dims()))
    return best
