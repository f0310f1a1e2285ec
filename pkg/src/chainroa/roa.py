"""Finite-horizon region-of-attraction outer approximations.

Either mode produces a linear SOS program whose feasible points give
certified outer approximations of the set of initial states that stay
in the state box and reach the target box at the final time.  Time is
rescaled to [0,1], so dynamics enter multiplied by the horizon.

Dense mode uses one value function v(t, x) over the full state:

    w >= v(0,.) + 1        on X
    -dv/dt - grad v . f >= 0   on [0,1] x X
    v(1,.) >= 0            on the target box
    w >= 0                 on X,   minimizing integral of w.

Sparse mode splits v along the consecutive-block cliques Y_j: cliques
j < K carry v_j1(t, block j) + v_j2(t, block j+1) coupled through a
slack u_j(t, block j+1), the last clique carries a joint v_K over both
final blocks.  The flow inequality of clique j only sees block j's
dynamics; the part of the coupling term that depends on block j+2
variables moves to the next clique via u_j:

    u_j - d(v_j1 + v_j2)/dt - grad_{x_j} v_j1 . f_j >= 0   on [0,1] x Y_j
    -u_j - grad_{x_j+1} v_j2 . f_j+1 >= 0                  on [0,1] x Y_j+1

A state belongs to the sparse approximation when every clique clause
v_j1(0, x_j) + v_j2(0, x_j+1) and the final v_K(0, .) are nonnegative.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProblem, ConicSolution, SolveOptions, solve
from .poly import Polynomial, StructureError, parse_poly
from .sos import SosProgram, box_domain, compile as compile_program
from .system import (ChainSystem, normalize, system_from_json, system_to_json,
                     validate_chain)

CERT_FORMAT = "chainroa-certificate/1"
MODES = ("dense", "sparse")


class CertificateUnavailable(RuntimeError):
    """Raised when no certificate can be extracted from a solve."""


def _check_degree(degree: int):
    if degree < 2 or degree % 2:
        raise StructureError(f"certificate degree must be even >= 2, got {degree}")


def _ambient(sys: ChainSystem) -> tuple:
    return ("t",) + sys.var_names


def _grad_dot(av, names, dynamics, horizon: float):
    """grad of an affine form along the given coordinates, dotted with f."""
    out = None
    for name, f in zip(names, dynamics):
        term = av.partial_derivative(name).mul_poly(f * horizon)
        out = term if out is None else out + term
    return out


def _max_fdeg(rows) -> int:
    """Largest dynamics degree, with zero polynomials counting as 0."""
    best = 0
    for fs in rows:
        for f in fs:
            d = f.degree
            if d > best:
                best = int(d)
    return best


def _embed(sys: ChainSystem, ambient: tuple):
    """Dynamics lifted to the timed ambient, block by block."""
    lifted = []
    for fs in sys.dynamics:
        row = []
        for f in fs:
            terms = {(0,) + e: c for e, c in f.terms.items()}
            row.append(Polynomial(ambient, terms))
        lifted.append(tuple(row))
    return lifted


def build_dense(sys: ChainSystem, degree: int) -> SosProgram:
    """One value function over the whole state; exponential-size blocks."""
    _check_degree(degree)
    amb = _ambient(sys)
    prog = SosProgram(amb)
    names = sys.var_names
    v = prog.add_decision("v", amb, degree)
    w = prog.add_decision("w", names, degree)
    lie_deg = degree - 1 + max(_max_fdeg(sys.dynamics), 1)
    f_all = [f for fs in _embed(sys, amb) for f in fs]
    timed = box_domain(names, sys.state_box, time_var="t")
    plain = box_domain(names, sys.state_box)
    final = box_domain(names, sys.target_box)
    T = sys.horizon

    prog.add_constraint(
        "init", plain, degree,
        lambda: w.as_affine(amb) - v.as_affine(amb).fix_var("t", 0.0) - 1.0)
    prog.add_constraint(
        "flow", timed, lie_deg,
        lambda: -(v.as_affine(amb).partial_derivative("t"))
        - _grad_dot(v.as_affine(amb), names, f_all, T))
    prog.add_constraint(
        "final", final, degree,
        lambda: v.as_affine(amb).fix_var("t", 1.0))
    prog.add_constraint(
        "wpos", plain, degree,
        lambda: w.as_affine(amb))
    prog.add_objective_integral("w", sys.state_box)
    return prog


def build_sparse(sys: ChainSystem, degree: int) -> SosProgram:
    """Clique-split value functions; block sizes stay polynomial in N."""
    _check_degree(degree)
    cliques = validate_chain(sys)
    K = len(cliques)
    amb = _ambient(sys)
    prog = SosProgram(amb)
    lifted = _embed(sys, amb)
    T = sys.horizon
    fdeg = [_max_fdeg([fs]) for fs in sys.dynamics]

    def block_names(i):
        return sys.blocks[i].var_names

    def clique_domains(cl):
        sub_box = cl.box
        sub_tgt = cl.target
        return (box_domain(cl.var_names, sub_box, time_var="t"),
                box_domain(cl.var_names, sub_box),
                box_domain(cl.var_names, sub_tgt))

    if K == 1:
        cl = cliques[0]
        timed, plain, final = clique_domains(cl)
        tamb = ("t",) + cl.var_names
        v1 = prog.add_decision("v1", tamb, degree)
        w1 = prog.add_decision("w1", cl.var_names, degree)
        flow_deg = degree - 1 + max(max(fdeg), 1)
        f_all = [f for fs in lifted for f in fs]
        prog.add_constraint(
            "init_1", plain, degree,
            lambda: w1.as_affine(amb) - v1.as_affine(amb).fix_var("t", 0.0) - 1.0)
        prog.add_constraint(
            "flow_1", timed, flow_deg,
            lambda: -(v1.as_affine(amb).partial_derivative("t"))
            - _grad_dot(v1.as_affine(amb), cl.var_names, f_all, T))
        prog.add_constraint(
            "final_1", final, degree,
            lambda: v1.as_affine(amb).fix_var("t", 1.0))
        prog.add_constraint("wpos_1", plain, degree,
                            lambda: w1.as_affine(amb))
        prog.add_objective_integral("w1", cl.box)
        return prog

    # clique j couples blocks j-1 and j (0-based); decisions first
    vs1, vs2, us, ws = {}, {}, {}, {}
    for j in range(1, K):
        bj, bj1 = block_names(j - 1), block_names(j)
        vs1[j] = prog.add_decision(f"v{j}_1", ("t",) + bj, degree)
        vs2[j] = prog.add_decision(f"v{j}_2", ("t",) + bj1, degree)
        us[j] = prog.add_decision(f"u{j}", ("t",) + bj1, degree)
    vK = prog.add_decision(f"v{K}", ("t",) + cliques[K - 1].var_names, degree)
    for j in range(1, K):
        ws[j] = prog.add_decision(f"w{j}", cliques[j - 1].var_names, degree)
    wK = prog.add_decision(f"w{K}", cliques[K - 1].var_names, degree)

    for j in range(1, K):
        cl = cliques[j - 1]
        nxt = cliques[j]
        timed, plain, final = clique_domains(cl)
        timed_next = box_domain(nxt.var_names, nxt.box, time_var="t")
        bj, bj1 = block_names(j - 1), block_names(j)
        v1, v2, u, w = vs1[j], vs2[j], us[j], ws[j]

        prog.add_constraint(
            f"init_{j}", plain, degree,
            lambda v1=v1, v2=v2, w=w:
            w.as_affine(amb) - v1.as_affine(amb).fix_var("t", 0.0)
            - v2.as_affine(amb).fix_var("t", 0.0) - 1.0)
        prog.add_constraint(
            f"final_{j}", final, degree,
            lambda v1=v1, v2=v2:
            v1.as_affine(amb).fix_var("t", 1.0)
            + v2.as_affine(amb).fix_var("t", 1.0))
        flow_deg = max(degree, degree - 1 + max(fdeg[j - 1], 1))
        prog.add_constraint(
            f"flow_{j}", timed, flow_deg,
            lambda v1=v1, v2=v2, u=u, j=j, bj=bj:
            u.as_affine(amb)
            - v1.as_affine(amb).partial_derivative("t")
            - v2.as_affine(amb).partial_derivative("t")
            - _grad_dot(v1.as_affine(amb), bj, lifted[j - 1], T))
        couple_deg = max(degree, degree - 1 + max(fdeg[j], 1))
        prog.add_constraint(
            f"couple_{j}", timed_next, couple_deg,
            lambda v2=v2, u=u, j=j, bj1=bj1:
            -(u.as_affine(amb))
            - _grad_dot(v2.as_affine(amb), bj1, lifted[j], T))
        prog.add_constraint(f"wpos_{j}", plain, degree,
                            lambda w=w: w.as_affine(amb))
        prog.add_objective_integral(f"w{j}", cl.box)

    cl = cliques[K - 1]
    timed, plain, final = clique_domains(cl)
    f_last = list(lifted[K - 1]) + list(lifted[K])
    last_names = block_names(K - 1) + block_names(K)
    flow_deg = max(degree, degree - 1 + max(fdeg[K - 1], fdeg[K], 1))
    prog.add_constraint(
        f"init_{K}", plain, degree,
        lambda: wK.as_affine(amb) - vK.as_affine(amb).fix_var("t", 0.0) - 1.0)
    prog.add_constraint(
        f"final_{K}", final, degree,
        lambda: vK.as_affine(amb).fix_var("t", 1.0))
    prog.add_constraint(
        f"flow_{K}", timed, flow_deg,
        lambda: -(vK.as_affine(amb).partial_derivative("t"))
        - _grad_dot(vK.as_affine(amb), last_names, f_last, T))
    prog.add_constraint(f"wpos_{K}", plain, degree,
                        lambda: wK.as_affine(amb))
    prog.add_objective_integral(f"w{K}", cl.box)
    return prog


def clause_structure(sys: ChainSystem, mode: str) -> list:
    """Groups of value-function names whose t=0 sum must be nonnegative."""
    if mode == "dense":
        return [("v",)]
    K = sys.n_blocks - 1
    if K == 1:
        return [("v1",)]
    return [(f"v{j}_1", f"v{j}_2") for j in range(1, K)] + [(f"v{K}",)]


# pass/fail margin for membership checks; absorbs conic solver noise at
# points sitting exactly on the level-set boundary
MARGIN_TOL = 1e-6


@dataclass(frozen=True)
class Membership:
    in_domain: bool
    value: float
    tol: float = MARGIN_TOL

    @property
    def inside(self) -> bool:
        return self.in_domain and self.value >= -self.tol


@dataclass
class RoaCertificate:
    """Solved value functions plus everything needed to query them.

    Polynomials live in normalized coordinates; scale/offset map a
    point of the original system into them (z = (x - offset) / scale).
    """

    mode: str
    degree: int
    status: str
    objective: float
    system: ChainSystem
    scale: np.ndarray
    offset: np.ndarray
    polys: dict
    clause_groups: list

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)
        if self.mode not in MODES:
            raise StructureError(f"unknown mode {self.mode!r}")
        for group in self.clause_groups:
            for name in group:
                if name not in self.polys:
                    raise StructureError(f"clause references unknown {name!r}")

    def _columns(self, name: str) -> list:
        p = self.polys[name]
        return [self.system.var_names.index(v) for v in p.vars if v != "t"]

    def clause_values(self, points: np.ndarray) -> np.ndarray:
        """(n_clauses, batch) initial-time clause values, original coords."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.system.dim:
            raise StructureError(
                f"points have dim {points.shape[1]}, system dim {self.system.dim}")
        z = (points - self.offset) / self.scale
        rows = []
        for group in self.clause_groups:
            total = np.zeros(points.shape[0])
            for name in group:
                p0 = self.polys[name].fix_var("t", 0.0)
                cols = self._columns(name)
                local = np.concatenate(
                    [np.zeros((points.shape[0], 1)), z[:, cols]], axis=1)
                total = total + p0.evaluate_many(local)
            rows.append(total)
        return np.vstack(rows)


def member_many(cert: RoaCertificate, points: np.ndarray):
    """(in_domain, margin) arrays for a batch of original-coordinate points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != cert.system.dim:
        raise StructureError(
            f"points have dim {points.shape[1]}, system dim {cert.system.dim}")
    in_domain = cert.system.state_box.contains(points, tol=0.0)
    margins = cert.clause_values(points).min(axis=0)
    return in_domain, margins


def member(cert: RoaCertificate, point, tol: float = MARGIN_TOL) -> Membership:
    """Query one point; outside the state box the value is not meaningful."""
    in_domain, margins = member_many(cert, np.asarray(point, dtype=float)[None, :])
    if not in_domain[0]:
        return Membership(False, float("nan"), tol)
    return Membership(True, float(margins[0]), tol)


def extract(prog: SosProgram, solution: ConicSolution, sys: ChainSystem,
            maps, mode: str, degree: int) -> RoaCertificate:
    """Read the decision polynomials out of a successful solve."""
    if not solution.ok:
        detail = solution.info.get("diagnostic", "")
        if solution.status == "infeasible":
            advice = ("the relaxation is infeasible at this degree; "
                      "raise --degree")
        else:
            advice = ("no usable solver output; raise --degree, relax "
                      "tolerances, or switch backend")
        raise CertificateUnavailable(
            f"solver status {solution.status!r}: {advice}"
            + (f" ({detail})" if detail else ""))
    polys = {}
    for dp in prog.decisions:
        vals = solution.free[dp.offset:dp.offset + dp.n_slots]
        polys[dp.name] = dp.assemble(vals)
    if maps is None:
        scale = np.ones(sys.dim)
        offset = np.zeros(sys.dim)
    else:
        scale = np.concatenate([m.scale for m in maps])
        offset = np.concatenate([m.offset for m in maps])
    return RoaCertificate(
        mode=mode, degree=degree, status=solution.status,
        objective=float(solution.objective), system=sys,
        scale=scale, offset=offset, polys=polys,
        clause_groups=clause_structure(sys, mode))


@dataclass
class RoaResult:
    certificate: RoaCertificate | None
    program: SosProgram
    problem: ConicProblem
    solution: ConicSolution
    timings: dict = field(default_factory=dict)


def solve_roa(sys: ChainSystem, mode: str, degree: int,
              options: SolveOptions | None = None,
              require_certificate: bool = True) -> RoaResult:
    """Normalize, build, compile, solve, extract; the one-call pipeline."""
    if mode not in MODES:
        raise StructureError(f"mode must be one of {MODES}, got {mode!r}")
    timings = {}
    t0 = time.perf_counter()
    nsys, maps, _ = normalize(sys)
    build = build_dense if mode == "dense" else build_sparse
    prog = build(nsys, degree)
    timings["build"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    problem = compile_program(prog)
    timings["compile"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    solution = solve(problem, options)
    timings["solve"] = time.perf_counter() - t0
    cert = None
    if solution.ok:
        cert = extract(prog, solution, sys, maps, mode, degree)
    elif require_certificate:
        extract(prog, solution, sys, maps, mode, degree)  # raises with advice
    return RoaResult(cert, prog, problem, solution, timings)


# -- certificate files -------------------------------------------------------

def save_certificate(cert: RoaCertificate, path: str):
    with open(path, "w") as fh:
        fh.write(CERT_FORMAT + "\n")
        fh.write(f"mode={cert.mode}\n")
        fh.write(f"degree={cert.degree}\n")
        fh.write(f"status={cert.status}\n")
        fh.write(f"objective={cert.objective!r}\n")
        fh.write("scale=" + ",".join(repr(float(s)) for s in cert.scale) + "\n")
        fh.write("offset=" + ",".join(repr(float(o)) for o in cert.offset) + "\n")
        fh.write("system=" + json.dumps(system_to_json(cert.system),
                                        separators=(",", ":")) + "\n")
        fh.write("clauses=" + ";".join("+".join(g) for g in cert.clause_groups)
                 + "\n")
        for name in sorted(cert.polys):
            p = cert.polys[name]
            fh.write(f"poly {name} {','.join(p.vars)} : {p.to_str()}\n")


def load_certificate(path: str) -> RoaCertificate:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CERT_FORMAT:
        raise StructureError(f"not a certificate file: {path}")
    fields = {}
    polys = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("poly "):
            head, text = line.split(" : ", 1)
            _, name, varcsv = head.split(" ", 2)
            polys[name] = parse_poly(text, tuple(varcsv.split(",")))
        else:
            key, val = line.split("=", 1)
            fields[key] = val
    sys = system_from_json(json.loads(fields["system"]))
    clause_groups = [tuple(g.split("+")) for g in fields["clauses"].split(";")]
    return RoaCertificate(
        mode=fields["mode"], degree=int(fields["degree"]),
        status=fields["status"], objective=float(fields["objective"]),
        system=sys,
        scale=np.array([float(s) for s in fields["scale"].split(",")]),
        offset=np.array([float(o) for o in fields["offset"].split(",")]),
        polys=polys, clause_groups=clause_groups)
