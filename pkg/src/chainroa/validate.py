"""Empirical certification of solved level sets.

Nothing here trusts the solver.  The soundness sweep compares the level
set against integrated trajectories (the containment guarantee restated
testably), the residual and identity sweeps re-check the certified
algebra at sampled points, and volumes are plain Monte Carlo.  All
sweeps are deterministic given (seed, n_samples).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProblem, ConicSolution
from .dynamics import classify_many
from .poly import Box, Polynomial, StructureError, monomial_basis
from .roa import MARGIN_TOL, RoaCertificate, member_many
from .sos import SosProgram
from .system import ChainSystem

GRID_FORMAT = "chainroa-grid/1"
REPORT_FORMAT = "chainroa-report/1"


@dataclass
class ValidationReport:
    """Aggregated sweep results; zero violations is the pass condition."""

    samples: int = 0
    witnesses: int = 0
    violations: int = 0
    worst_margin: float = float("nan")
    witness_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    residual_minima: dict = field(default_factory=dict)
    volume: float | None = None
    volume_se: float | None = None
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        ok_res = all(v >= -MARGIN_TOL for v in self.residual_minima.values())
        return self.violations == 0 and ok_res


def soundness_sweep(cert: RoaCertificate, sys: ChainSystem, n_samples: int,
                    seed: int, h: float | None = None,
                    tol: float = MARGIN_TOL) -> ValidationReport:
    """Check that every integration-confirmed ROA sample is in the level set.

    A sample only counts as a witness if halving the step preserves its
    reached_target classification, which guards against integration
    error near the ROA boundary.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(int(seed))
    pts = sys.state_box.sample(rng, int(n_samples))
    if h is None:
        h = sys.horizon / 10_000
    statuses, _ = classify_many(sys, pts, h)
    reached = np.flatnonzero([s == "reached_target" for s in statuses])
    if len(reached):
        again, _ = classify_many(sys, pts[reached], h / 2.0)
        confirmed = reached[[s == "reached_target" for s in again]]
    else:
        confirmed = reached
    witnesses = pts[confirmed]
    worst = float("nan")
    bad_pts = np.zeros((0, sys.dim))
    if len(witnesses):
        _, margins = member_many(cert, witnesses)
        worst = float(margins.min())
        bad_pts = witnesses[margins < -tol]
    return ValidationReport(
        samples=int(n_samples), witnesses=len(witnesses),
        violations=len(bad_pts), worst_margin=worst, witness_points=bad_pts,
        timings={"soundness": time.perf_counter() - t0})


def free_values(cert: RoaCertificate, prog: SosProgram) -> np.ndarray:
    """Rebuild the decision vector the certificate was assembled from."""
    y = np.zeros(prog.n_free)
    for dp in prog.decisions:
        p = cert.polys.get(dp.name)
        if p is None or p.vars != dp.var_names:
            raise StructureError(
                f"certificate does not carry decision {dp.name!r} of the program")
        slots = {e: k for k, e in enumerate(dp.basis())}
        for expo, coef in p.terms.items():
            if expo not in slots:
                raise StructureError(
                    f"certificate polynomial {dp.name!r} exceeds degree "
                    f"{dp.degree}")
            y[dp.offset + slots[expo]] = coef
    return y


def _embed(points: np.ndarray, local_names, ambient) -> np.ndarray:
    pos = [ambient.index(v) for v in local_names]
    out = np.zeros((len(points), len(ambient)))
    out[:, pos] = points
    return out


def residual_sweep(cert: RoaCertificate, prog: SosProgram, n_samples: int,
                   seed: int) -> dict:
    """Minimum of each constraint's target over sampled domain points.

    The targets are the nonnegativity conditions the certificate
    promises; a minimum below -1e-6 flags an unsound certificate
    regardless of what the solver reported.
    """
    y = free_values(cert, prog)
    rng = np.random.default_rng(int(seed))
    out = {}
    for c in prog.constraints:
        pts = c.domain.sample(rng, int(n_samples))
        target = c.target.assemble(y)
        vals = target.evaluate_many(_embed(pts, c.domain.var_names, target.vars))
        out[c.name] = float(vals.min())
    return out


def certificate_identity(prog: SosProgram, problem: ConicProblem,
                         solution: ConicSolution, n_samples: int,
                         seed: int) -> dict:
    """Max gap between each target and its generator-weighted Gram sum.

    Re-derives target(z) = sum_b g_b(z) * basis(z)' Q_b basis(z) at
    sampled points straight from the solution matrices; a large gap
    means the conic transcription and the algebra disagree.
    """
    if len(problem.spans) != len(prog.constraints):
        raise StructureError("problem was not compiled from this program")
    y = solution.free
    rng = np.random.default_rng(int(seed))
    out = {}
    for span, c in zip(problem.spans, prog.constraints):
        if span.name != c.name:
            raise StructureError("problem was not compiled from this program")
        pts = c.domain.sample(rng, int(n_samples))
        target = c.target.assemble(y)
        tvals = target.evaluate_many(_embed(pts, c.domain.var_names, target.vars))
        k, r = c.domain.dim, c.order
        weights = [Polynomial.constant(c.domain.var_names, 1.0)]
        if r >= 1:
            weights += list(c.domain.generators)
        total = np.zeros(len(pts))
        for b in range(span.block0, span.block1):
            lb = b - span.block0
            deg = r if lb == 0 else r - 1
            B = np.array(monomial_basis(k, deg), dtype=np.int64).reshape(-1, k)
            phi = (pts[:, None, :] ** B[None, :, :]).prod(axis=2)
            quad = np.einsum("ni,ij,nj->n", phi, solution.blocks[b], phi)
            total += weights[lb].evaluate_many(pts) * quad
        out[c.name] = float(np.abs(tvals - total).max())
    return out


def mc_volume(cert: RoaCertificate, n_samples: int, seed: int,
              tol: float = MARGIN_TOL):
    """(volume estimate, binomial standard error) of the level set in X."""
    rng = np.random.default_rng(int(seed))
    pts = cert.system.state_box.sample(rng, int(n_samples))
    _, margins = member_many(cert, pts)
    frac = float(np.mean(margins >= -tol))
    vol = cert.system.state_box.volume
    se = vol * math.sqrt(frac * (1.0 - frac) / int(n_samples))
    return frac * vol, se


# -- grid export ------------------------------------------------------------


def grid_export(cert: RoaCertificate, resolution, slice_values: dict,
                path: str):
    """Regular membership-margin grid over at most 3 free axes.

    Variables listed in slice_values are pinned; the rest are the free
    axes, swept over their state-box interval.  Rows are emitted in
    C order (first axis slowest).
    """
    sys = cert.system
    names = sys.var_names
    slice_values = {k: float(v) for k, v in (slice_values or {}).items()}
    for k in slice_values:
        if k not in names:
            raise StructureError(f"slice variable {k!r} not in the system")
    free = [v for v in names if v not in slice_values]
    if not free:
        raise StructureError("grid needs at least one free axis")
    if len(free) > 3:
        raise StructureError(
            f"{len(free)} free axes; pin all but at most 3 via slice values")
    if isinstance(resolution, int):
        res = [resolution] * len(free)
    else:
        res = [int(r) for r in resolution]
        if len(res) != len(free):
            raise StructureError("one resolution per free axis required")
    if any(r < 2 for r in res):
        raise StructureError("resolution must be at least 2 per free axis")

    box = sys.state_box
    pos = {v: i for i, v in enumerate(names)}
    axes = [np.linspace(box.lower[pos[v]], box.upper[pos[v]], r)
            for v, r in zip(free, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.zeros((mesh[0].size, sys.dim))
    for v, m in zip(free, mesh):
        pts[:, pos[v]] = m.reshape(-1)
    for v, val in slice_values.items():
        pts[:, pos[v]] = val
    _, margins = member_many(cert, pts)

    with open(path, "w") as fh:
        fh.write(f"# {GRID_FORMAT}\n")
        fh.write(f"# mode: {cert.mode}\n")
        fh.write(f"# degree: {cert.degree}\n")
        fh.write("# axes: " + " ".join(free) + "\n")
        for v, r in zip(free, res):
            fh.write(f"# axis: {v} {float(box.lower[pos[v]])!r} "
                     f"{float(box.upper[pos[v]])!r} {r}\n")
        for v in names:
            if v in slice_values:
                fh.write(f"# slice: {v} {slice_values[v]!r}\n")
        fh.write("# columns: " + " ".join(free) + " margin\n")
        coords = np.column_stack([m.reshape(-1) for m in mesh])
        for row, margin in zip(coords, margins):
            fh.write(" ".join(repr(float(v)) for v in row)
                     + f" {float(margin)!r}\n")


def load_grid(path: str) -> dict:
    """Parse a grid file back into header fields and a data matrix."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"# {GRID_FORMAT}":
        raise StructureError(f"not a {GRID_FORMAT} file: {path}")
    head = {"axes": [], "axis": {}, "slice": {}}
    rows = []
    for ln in lines[1:]:
        if ln.startswith("# mode: "):
            head["mode"] = ln.split(": ", 1)[1]
        elif ln.startswith("# degree: "):
            head["degree"] = int(ln.split(": ", 1)[1])
        elif ln.startswith("# axes: "):
            head["axes"] = ln.split(": ", 1)[1].split()
        elif ln.startswith("# axis: "):
            name, lo, hi, r = ln.split(": ", 1)[1].split()
            head["axis"][name] = (float(lo), float(hi), int(r))
        elif ln.startswith("# slice: "):
            name, val = ln.split(": ", 1)[1].split()
            head["slice"][name] = float(val)
        elif ln.startswith("#"):
            continue
        else:
            rows.append([float(v) for v in ln.split()])
    data = np.array(rows)
    want = int(np.prod([head["axis"][v][2] for v in head["axes"]]))
    if data.shape[0] != want or data.shape[1] != len(head["axes"]) + 1:
        raise StructureError(f"grid data shape {data.shape} does not match header")
    head["data"] = data
    return head


# -- report serialization ----------------------------------------------------


def report_to_json(report: ValidationReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "samples": report.samples,
        "witnesses": report.witnesses,
        "violations": report.violations,
        "worst_margin": report.worst_margin,
        "witness_points": [[float(v) for v in row]
                           for row in np.atleast_2d(report.witness_points)
                           if len(row)],
        "residual_minima": {k: float(v)
                            for k, v in report.residual_minima.items()},
        "volume": report.volume,
        "volume_se": report.volume_se,
        "passed": report.passed,
        "timings": {k: float(v) for k, v in report.timings.items()},
    }


def save_report(report: ValidationReport, path: str):
    with open(path, "w") as fh:
        json.dump(report_to_json(report), fh, indent=2)
        fh.write("\n")


def format_report(report: ValidationReport) -> str:
    lines = [
        f"samples             {report.samples}",
        f"confirmed witnesses {report.witnesses}",
        f"violations          {report.violations}",
        f"worst margin        {report.worst_margin:.3e}",
    ]
    for name, v in sorted(report.residual_minima.items()):
        lines.append(f"residual min        {name}: {v:.3e}")
    if report.volume is not None:
        lines.append(f"volume              {report.volume:.6f}"
                     f" +- {report.volume_se:.6f}")
    for k, v in report.timings.items():
        lines.append(f"time [{k}]          {v:.2f} s")
    lines.append("PASS" if report.passed else "FAIL")
    return "\n".join(lines)
