"""Equality-form semidefinite problems: container, exports, solving.

A problem is   min  obj . y
              s.t.  A_free y + A_gram q = rhs,   q = (svec of PSD blocks)

with y free.  Gram entries are addressed by (block, row <= col) in
column-major upper-triangle order; off-diagonal row coefficients carry
the symmetry factor 2, so a row reads  sum_c a_c y_c + sum_{k<=l}
w_kl Q_kl = rhs  with w_kl including that factor.

Backends (Clarabel interior-point, SCS splitting) receive the problem
in slack form over (y, scaled svec of the Q blocks); the certificate
is read off the primal variables and all feasibility diagnostics are
recomputed here, never trusted from the backend.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import lsqr

from .poly import StructureError

NATIVE_FORMAT = "chainroa-conic/1"
SDPA_MAGIC = "chainroa-sdpa/1"

# Post-ingestion acceptance thresholds for optimal/near_optimal (scaled data).
RESIDUAL_TOL = 1e-6
EIG_TOL = -1e-7


def svec_len(p: int) -> int:
    return p * (p + 1) // 2


def svec_index(i: int, j: int) -> int:
    """Column-major upper-triangle position of entry (i <= j)."""
    if i > j:
        raise StructureError(f"svec entry wants row <= col, got ({i},{j})")
    return j * (j + 1) // 2 + i


@dataclass(frozen=True)
class ConstraintSpan:
    """Row/block ranges contributed by one SOS constraint."""

    name: str
    row0: int
    row1: int
    block0: int
    block1: int


@dataclass
class ConicProblem:
    n_free: int
    psd_dims: tuple
    obj_idx: np.ndarray
    obj_val: np.ndarray
    af_r: np.ndarray
    af_c: np.ndarray
    af_v: np.ndarray
    ag_r: np.ndarray
    ag_b: np.ndarray
    ag_k: np.ndarray
    ag_v: np.ndarray
    rhs: np.ndarray
    spans: tuple = ()

    def __post_init__(self):
        self.psd_dims = tuple(int(p) for p in self.psd_dims)
        for name in ("obj_idx", "af_r", "af_c", "ag_r", "ag_b", "ag_k"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        for name in ("obj_val", "af_v", "ag_v", "rhs"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.spans = tuple(self.spans)
        m = self.m
        if self.obj_idx.size and not (self.obj_idx < self.n_free).all():
            raise StructureError("objective index out of range")
        for arr, hi, what in ((self.af_r, m, "row"), (self.af_c, self.n_free, "col"),
                              (self.ag_r, m, "row"), (self.ag_b, len(self.psd_dims), "block")):
            if arr.size and (arr.min() < 0 or arr.max() >= hi):
                raise StructureError(f"equality {what} index out of range")
        if self.ag_k.size:
            caps = np.array([svec_len(p) for p in self.psd_dims], dtype=np.int64)
            if (self.ag_k < 0).any() or (self.ag_k >= caps[self.ag_b]).any():
                raise StructureError("gram svec index out of range")
        self._mats = None

    @property
    def m(self) -> int:
        return self.rhs.size

    @property
    def n_gram(self) -> int:
        return int(sum(svec_len(p) for p in self.psd_dims))

    def block_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([svec_len(p) for p in self.psd_dims])]).astype(np.int64)

    def objective_dense(self) -> np.ndarray:
        c = np.zeros(self.n_free)
        np.add.at(c, self.obj_idx, self.obj_val)
        return c

    def matrices(self):
        """(A_free, A_gram) as CSR with gram columns in global svec order."""
        if self._mats is None:
            off = self.block_offsets()
            af = sparse.csr_matrix(
                (self.af_v, (self.af_r, self.af_c)), shape=(self.m, self.n_free))
            ag = sparse.csr_matrix(
                (self.ag_v, (self.ag_r, off[self.ag_b] + self.ag_k)),
                shape=(self.m, self.n_gram))
            self._mats = (af, ag)
        return self._mats

    def canonical(self) -> "ConicProblem":
        """Same problem with triplets in (row, col) sorted order."""
        fo = np.lexsort((self.af_c, self.af_r))
        go = np.lexsort((self.ag_k, self.ag_b, self.ag_r))
        oo = np.argsort(self.obj_idx, kind="stable")
        return ConicProblem(
            self.n_free, self.psd_dims,
            self.obj_idx[oo], self.obj_val[oo],
            self.af_r[fo], self.af_c[fo], self.af_v[fo],
            self.ag_r[go], self.ag_b[go], self.ag_k[go], self.ag_v[go],
            self.rhs, self.spans)

    def __eq__(self, other):
        if not isinstance(other, ConicProblem):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return (a.n_free == b.n_free and a.psd_dims == b.psd_dims
                and all(np.array_equal(getattr(a, f), getattr(b, f))
                        for f in ("obj_idx", "obj_val", "af_r", "af_c", "af_v",
                                  "ag_r", "ag_b", "ag_k", "ag_v", "rhs"))
                and a.spans == b.spans)


@dataclass
class ConicSolution:
    status: str  # optimal | near_optimal | infeasible | unbounded | failed
    free: np.ndarray | None = None
    blocks: list | None = None
    objective: float = float("nan")
    max_residual: float = float("nan")
    min_eig: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")


@dataclass
class SolveOptions:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iters: int = 200          # interior-point iteration cap
    scs_max_iters: int = 50_000   # first-order sweeps per IPM-style "iteration" budget
    scs_eps: float = 1e-7
    scs_time_limit: float = 600.0  # seconds; the repair step finishes the job
    backend: str = "auto"         # auto | clarabel | scs
    threads: int = 0              # 0 = leave backend defaults
    verbose: bool = False
    polish: bool = True


# Auto-selection: Clarabel materializes dense svec(p)^2 scaling blocks
# per PSD cone plus a factorization with comparable fill, so its memory
# is a small multiple of sum svec(p_b)^2 doubles; the budget keeps that
# under a few GB.  Beyond it fall through to SCS with its direct KKT
# factorization, whose fill stays modest for these chain-structured
# problems; the conjugate-gradient fallback is reserved for systems too
# large to factor at all (its per-sweep cost is otherwise far worse).
CLARABEL_SCALING_BUDGET = 3.0e7
CLARABEL_MAX_ROWS = 300_000
SCS_INDIRECT_THRESHOLD = 5e6


def _choose_backend(p: ConicProblem, opts: SolveOptions) -> str:
    if opts.backend != "auto":
        return opts.backend
    scaling = sum(svec_len(d) ** 2 for d in p.psd_dims)
    if scaling <= CLARABEL_SCALING_BUDGET and p.m <= CLARABEL_MAX_ROWS:
        return "clarabel"
    return "scs"


def _primal_data(p: ConicProblem):
    """Slack-form data: min q.x over x = (y, vs) with vs the scaled svec
    of the Gram blocks (vs_ij = sqrt(2) Q_ij off-diagonal).

    Rows: the m equalities (zero cone) followed by -vs + s = 0 with s
    in the backend's PSD cone, which pins vs to the cone.
    """
    off = p.block_offsets()
    rt2 = math.sqrt(2.0)
    i_idx, j_idx = _svec_ij(p)
    diag = i_idx == j_idx
    gcols = p.n_free + off[p.ag_b] + p.ag_k
    # row coefficient v acts on plain Q entries; on scaled entries the
    # off-diagonal coefficient becomes v / sqrt(2)
    gvals = np.where(diag, p.ag_v, p.ag_v / rt2)
    ng = p.n_gram
    n = p.n_free + ng
    eq = sparse.coo_matrix(
        (np.concatenate([p.af_v, gvals]),
         (np.concatenate([p.af_r, p.ag_r]), np.concatenate([p.af_c, gcols]))),
        shape=(p.m, n))
    pin = sparse.hstack(
        [sparse.coo_matrix((ng, p.n_free)),
         -sparse.identity(ng, format="coo")], format="coo")
    A = sparse.vstack([eq, pin], format="csc")
    b = np.concatenate([p.rhs, np.zeros(ng)])
    q = np.zeros(n)
    np.add.at(q, p.obj_idx, p.obj_val)
    return A, b, q


def _svec_ij(p: ConicProblem):
    """(i, j) of each gram triplet's svec position (column-major UT)."""
    j = np.floor((np.sqrt(8.0 * p.ag_k + 1.0) - 1.0) / 2.0).astype(np.int64)
    # guard against float rounding at triangular-number boundaries
    j += (p.ag_k >= (j + 1) * (j + 2) // 2).astype(np.int64)
    j -= (p.ag_k < j * (j + 1) // 2).astype(np.int64)
    i = p.ag_k - j * (j + 1) // 2
    return i, j


def _triangle_ij(dim: int):
    """(i, j) arrays of the upper triangle in svec (column-major) order."""
    j = np.repeat(np.arange(dim), np.arange(1, dim + 1))
    i = np.arange(svec_len(dim)) - j * (j + 1) // 2
    return i, j


def _blocks_from_scaled_svec(p: ConicProblem, vec: np.ndarray) -> list:
    """Dense symmetric blocks from a backend primal vector (scaled svec)."""
    out = []
    off = p.block_offsets()
    rt2 = math.sqrt(2.0)
    for b, dim in enumerate(p.psd_dims):
        seg = vec[off[b]:off[b + 1]]
        i, j = _triangle_ij(dim)
        vals = np.where(i == j, seg, seg / rt2)
        Q = np.zeros((dim, dim))
        Q[i, j] = vals
        Q[j, i] = vals
        out.append(Q)
    return out


def _solve_clarabel(p: ConicProblem, opts: SolveOptions):
    import clarabel

    A, b, q = _primal_data(p)
    n = A.shape[1]
    P = sparse.csc_matrix((n, n))
    cones = [clarabel.ZeroConeT(p.m)] if p.m else []
    cones += [clarabel.PSDTriangleConeT(d) for d in p.psd_dims]
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.max_iter = opts.max_iters
    settings.tol_feas = opts.tol_feas
    settings.tol_gap_abs = opts.tol_gap
    settings.tol_gap_rel = opts.tol_gap
    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    x = np.asarray(sol.x)
    # a max-iterations point still carries a candidate certificate; the
    # ingestion diagnostics decide whether it survives
    mapping = {
        "Solved": "optimal",
        "AlmostSolved": "near_optimal",
        "MaxIterations": "near_optimal",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "unbounded",
        "AlmostDualInfeasible": "unbounded",
    }
    mapped = mapping.get(status, "failed")
    info = {"backend": "clarabel", "backend_status": status,
            "iterations": sol.iterations, "solve_time": sol.solve_time}
    return mapped, x, info


def _scs_pin_perm(p: ConicProblem) -> np.ndarray:
    """Row order adapting the cone rows to SCS's svec convention.

    We store triangles column-major by upper index (i <= j); SCS reads
    PSD slacks column-major by lower index (i >= j).  The orders agree
    up to dim 2 and diverge from dim 3 on, so the pin rows must be
    permuted or SCS silently solves a differently-wired problem.
    """
    parts = []
    off = p.block_offsets()
    for b, dim in enumerate(p.psd_dims):
        idx = np.empty(svec_len(dim), dtype=np.int64)
        k = 0
        for j in range(dim):
            for i in range(j, dim):
                idx[k] = i * (i + 1) // 2 + j
                k += 1
        parts.append(off[b] + idx)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def _solve_scs(p: ConicProblem, opts: SolveOptions):
    import scs

    A, b, q = _primal_data(p)
    if p.n_gram:
        pin = A[p.m:].tocsr()[_scs_pin_perm(p)]
        A = sparse.vstack([A[:p.m], pin], format="csc")
    use_indirect = (p.n_free + p.n_gram + p.m) > SCS_INDIRECT_THRESHOLD
    cone = {}
    if p.m:
        cone["z"] = p.m
    if p.psd_dims:
        cone["s"] = list(p.psd_dims)
    solver = scs.SCS(
        dict(A=A, b=b, c=q),
        cone,
        verbose=opts.verbose,
        use_indirect=use_indirect,
        max_iters=opts.scs_max_iters,
        eps_abs=opts.scs_eps,
        eps_rel=opts.scs_eps,
        eps_infeas=1e-7,
        time_limit_secs=opts.scs_time_limit,
    )
    out = solver.solve()
    status = out["info"]["status"]
    # inaccurate variants name their stopping reason in a suffix
    if status == "solved":
        mapped = "optimal"
    elif status.startswith("solved"):
        mapped = "near_optimal"
    elif status.startswith("infeasible"):
        mapped = "infeasible"
    elif status.startswith("unbounded"):
        mapped = "unbounded"
    else:
        mapped = "failed"
    x = np.asarray(out["x"]) if out["x"] is not None else None
    info = {"backend": "scs", "backend_status": status,
            "iterations": out["info"]["iter"],
            "solve_time": out["info"]["solve_time"] / 1e3,
            "indirect": use_indirect}
    return mapped, x, info


class _EqProjector:
    """Least-norm corrections onto the equality manifold.

    Backend solutions satisfy the equalities only to solver tolerance;
    the reconstruction identity wants far better.  Corrections are
    tiny (solver-residual sized), so PSD-ness degrades at most by that
    amount, which the eigenvalue check still guards.

    Works in scaled-svec coordinates (off-diagonals carry sqrt(2)), where
    Euclidean distance equals Frobenius distance on the blocks; the
    eigenvalue clip is a projection in the same metric, so alternating
    the two repairs is a genuine alternating-projection scheme.

    The normal-equations factorization of A A' (m x m, built once) makes
    repeated projections cheap; LSQR is the fallback when the
    factorization fails.
    """

    def __init__(self, p: ConicProblem):
        self.p = p
        af, _ = p.matrices()
        off = p.block_offsets()
        rt2 = math.sqrt(2.0)
        i_idx, j_idx = _svec_ij(p)
        gvals = np.where(i_idx == j_idx, p.ag_v, p.ag_v / rt2)
        ag_s = sparse.csr_matrix(
            (gvals, (p.ag_r, off[p.ag_b] + p.ag_k)), shape=(p.m, p.n_gram))
        self.A = sparse.hstack([af, ag_s], format="csr")
        self.solve_normal = None
        if p.m:
            try:
                gram = (self.A @ self.A.T).tocsc()
                gram += sparse.identity(p.m, format="csc") * 1e-12
                self.solve_normal = sparse.linalg.factorized(gram)
            except Exception:
                self.solve_normal = None

    def project(self, free: np.ndarray, qs: np.ndarray):
        x = np.concatenate([free, qs])
        for _ in range(3):  # refinement vs factorization regularization
            resid = self.p.rhs - self.A @ x
            if not resid.size or np.abs(resid).max() < 1e-12:
                break
            if self.solve_normal is not None:
                x = x + self.A.T @ self.solve_normal(resid)
            else:
                out = lsqr(self.A, resid, atol=1e-14, btol=1e-14,
                           iter_lim=2000)
                x = x + out[0]
        return x[:self.p.n_free], x[self.p.n_free:]


def _polish(p: ConicProblem, free: np.ndarray, qvec: np.ndarray):
    """Frobenius-least-norm equality repair of a plain-svec candidate."""
    blocks = _svec_to_blocks(p, qvec)
    f, qs = _EqProjector(p).project(free, _blocks_to_scaled_svec(p, blocks))
    return f, _gram_to_svec(p, _blocks_from_scaled_svec(p, qs))


def _psd_clip(blocks):
    """Project each block onto the PSD cone; True if anything moved."""
    out, clipped = [], False
    for Q in blocks:
        w, V = np.linalg.eigh(Q) if Q.size else (np.zeros(0), None)
        if w.size and w[0] < 0.0:
            Q = (V * np.maximum(w, 0.0)) @ V.T
            Q = (Q + Q.T) / 2.0
            clipped = True
        out.append(Q)
    return out, clipped


def _gram_to_svec(p: ConicProblem, blocks) -> np.ndarray:
    q = np.zeros(p.n_gram)
    off = p.block_offsets()
    for b, dim in enumerate(p.psd_dims):
        Q = np.asarray(blocks[b])
        if Q.shape != (dim, dim):
            raise StructureError(f"block {b} has shape {Q.shape}, want ({dim},{dim})")
        i, j = _triangle_ij(dim)
        q[off[b]:off[b + 1]] = Q[i, j]
    return q


def _blocks_to_scaled_svec(p: ConicProblem, blocks) -> np.ndarray:
    qs = np.zeros(p.n_gram)
    off = p.block_offsets()
    rt2 = math.sqrt(2.0)
    for b, dim in enumerate(p.psd_dims):
        Q = np.asarray(blocks[b])
        if Q.shape != (dim, dim):
            raise StructureError(f"block {b} has shape {Q.shape}, want ({dim},{dim})")
        i, j = _triangle_ij(dim)
        qs[off[b]:off[b + 1]] = np.where(i == j, Q[i, j], rt2 * Q[i, j])
    return qs


def _svec_to_blocks(p: ConicProblem, q: np.ndarray) -> list:
    out = []
    off = p.block_offsets()
    for b, dim in enumerate(p.psd_dims):
        seg = q[off[b]:off[b + 1]]
        i, j = _triangle_ij(dim)
        Q = np.zeros((dim, dim))
        Q[i, j] = seg
        Q[j, i] = seg
        out.append(Q)
    return out


def ingest(p: ConicProblem, raw: dict) -> ConicSolution:
    """Build a solution from backend output, recomputing all diagnostics.

    raw: {"status": candidate status, "free": array, "blocks": [dense symmetric]}.
    The residual and eigenvalue floors decide whether a claimed
    optimal/near_optimal status survives.
    """
    status = raw.get("status", "failed")
    info = dict(raw.get("info", {}))
    if status in ("infeasible", "unbounded", "failed") and raw.get("free") is None:
        return ConicSolution(status=status, info=info)
    free = np.asarray(raw["free"], dtype=float)
    blocks = [np.asarray(B, dtype=float) for B in raw.get("blocks", [])]
    if free.shape != (p.n_free,):
        raise StructureError(f"free vector shape {free.shape}, want ({p.n_free},)")
    if len(blocks) != len(p.psd_dims):
        raise StructureError(f"{len(blocks)} blocks, want {len(p.psd_dims)}")
    qvec = _gram_to_svec(p, blocks)
    af, ag = p.matrices()
    resid = af @ free + ag @ qvec - p.rhs
    max_residual = float(np.abs(resid).max()) if resid.size else 0.0
    min_eig = 0.0
    for Q in blocks:
        if Q.size:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(Q)[0]))
    objective = float(p.objective_dense() @ free)
    if status in ("optimal", "near_optimal"):
        if max_residual > RESIDUAL_TOL or min_eig < EIG_TOL:
            info["diagnostic"] = (
                f"backend claimed {status} but recomputed residual "
                f"{max_residual:.3e} / min eigenvalue {min_eig:.3e} "
                f"violate ({RESIDUAL_TOL:.0e}, {EIG_TOL:.0e})")
            status = "failed"
    return ConicSolution(status=status, free=free, blocks=blocks,
                         objective=objective, max_residual=max_residual,
                         min_eig=min_eig, info=info)


def solve(p: ConicProblem, opts: SolveOptions | None = None) -> ConicSolution:
    """Solve via the selected backend; never raises on solver failure."""
    opts = opts or SolveOptions()
    if opts.threads > 0:
        # best effort: backends read OMP settings at solve time
        os.environ["OMP_NUM_THREADS"] = str(opts.threads)
    backend = _choose_backend(p, opts)
    try:
        if backend == "clarabel":
            mapped, x, info = _solve_clarabel(p, opts)
        elif backend == "scs":
            mapped, x, info = _solve_scs(p, opts)
        else:
            raise StructureError(f"unknown backend {backend!r}")
    except StructureError:
        raise
    except Exception as exc:  # backend crash -> failed status, never a crash
        return ConicSolution(status="failed",
                             info={"backend": backend, "error": repr(exc)})
    if mapped in ("infeasible", "unbounded") or x is None:
        return ConicSolution(status=mapped if mapped != "failed" else "failed",
                             info=info)
    free = x[:p.n_free]
    blocks = _blocks_from_scaled_svec(p, x[p.n_free:])
    raw = ingest(p, {"status": mapped, "free": free, "blocks": blocks,
                     "info": info})
    if raw.status == mapped or not opts.polish or \
            mapped not in ("optimal", "near_optimal"):
        return raw
    # The backend's claim failed a recomputed gate.  Repair by
    # Douglas-Rachford between the equality manifold and the PSD cone,
    # run in the scaled-svec coordinates where the eigenvalue clip is a
    # true metric projection.  Every few rounds the shadow candidate
    # project(clip(z)) goes through ingest; the first one passing both
    # gates is returned.  Interior-point outputs repair in a handful of
    # rounds, first-order outputs in ~100.
    proj = _EqProjector(p)
    zf = free
    zq = _blocks_to_scaled_svec(p, blocks)
    last = math.inf
    stalled = 0
    for it in range(300):
        blocks_u, _ = _psd_clip(_blocks_from_scaled_svec(p, zq))
        uq = _blocks_to_scaled_svec(p, blocks_u)
        wf, wq = proj.project(zf, 2.0 * uq - zq)
        zf = zf + 1.5 * (wf - zf)
        zq = zq + 1.5 * (wq - uq)
        if it % 5 == 0 or it == 299:
            blocks_c, _ = _psd_clip(_blocks_from_scaled_svec(p, zq))
            cf, cq = proj.project(zf, _blocks_to_scaled_svec(p, blocks_c))
            cand = ingest(p, {"status": mapped, "free": cf,
                              "blocks": _blocks_from_scaled_svec(p, cq),
                              "info": dict(info, polished=True,
                                           polish_rounds=it + 1)})
            if cand.status == mapped:
                return cand
            viol = max(-cand.min_eig, 0.0) + max(cand.max_residual, 0.0)
            if viol < 0.995 * last:
                stalled = 0
            else:
                stalled += 1
                if stalled >= 5:
                    break
            last = min(last, viol)
    return raw


# -- exports ---------------------------------------------------------------

def _write_json_array(fh, values, fmt):
    fh.write("[")
    n = len(values)
    for start in range(0, n, 65536):
        chunk = values[start:start + 65536]
        text = ",".join(fmt(v) for v in chunk.tolist())
        if start:
            fh.write(",")
        fh.write(text)
    fh.write("]")


def _export_native(p: ConicProblem, fh):
    intf, fltf = str, repr
    fh.write('{"format":"%s","n_free":%d,"psd_dims":%s' % (
        NATIVE_FORMAT, p.n_free, json.dumps(list(p.psd_dims), separators=(",", ":"))))
    fh.write(',"objective":{"idx":')
    _write_json_array(fh, p.obj_idx, intf)
    fh.write(',"val":')
    _write_json_array(fh, p.obj_val, fltf)
    fh.write('},"equalities":{"rhs":')
    _write_json_array(fh, p.rhs, fltf)
    fh.write(',"free":{"row":')
    _write_json_array(fh, p.af_r, intf)
    fh.write(',"col":')
    _write_json_array(fh, p.af_c, intf)
    fh.write(',"val":')
    _write_json_array(fh, p.af_v, fltf)
    fh.write('},"gram":{"row":')
    _write_json_array(fh, p.ag_r, intf)
    fh.write(',"block":')
    _write_json_array(fh, p.ag_b, intf)
    fh.write(',"svec":')
    _write_json_array(fh, p.ag_k, intf)
    fh.write(',"val":')
    _write_json_array(fh, p.ag_v, fltf)
    fh.write('}},"spans":')
    spans = [{"name": s.name, "row0": s.row0, "row1": s.row1,
              "block0": s.block0, "block1": s.block1} for s in p.spans]
    fh.write(json.dumps(spans, separators=(",", ":")))
    fh.write("}")


def _import_native(text: str) -> ConicProblem:
    doc = json.loads(text)
    if doc.get("format") != NATIVE_FORMAT:
        raise StructureError(f"unsupported conic format {doc.get('format')!r}")
    eq = doc["equalities"]
    spans = tuple(ConstraintSpan(s["name"], s["row0"], s["row1"],
                                 s["block0"], s["block1"]) for s in doc["spans"])
    return ConicProblem(
        doc["n_free"], tuple(doc["psd_dims"]),
        np.array(doc["objective"]["idx"], dtype=np.int64),
        np.array(doc["objective"]["val"], dtype=float),
        np.array(eq["free"]["row"], dtype=np.int64),
        np.array(eq["free"]["col"], dtype=np.int64),
        np.array(eq["free"]["val"], dtype=float),
        np.array(eq["gram"]["row"], dtype=np.int64),
        np.array(eq["gram"]["block"], dtype=np.int64),
        np.array(eq["gram"]["svec"], dtype=np.int64),
        np.array(eq["gram"]["val"], dtype=float),
        np.array(eq["rhs"], dtype=float),
        spans)


def _export_sdpa(p: ConicProblem, fh):
    """SDPA sparse format; our problem is its dual side.

    Free variables split as y = y+ - y- across two nonnegative diagonal
    blocks; Gram entry values are stored unscaled (the row coefficient
    divided by the symmetry factor).  Comment lines carry the metadata
    needed for an exact round-trip.
    """
    q = p.canonical()
    fh.write(f'"{SDPA_MAGIC} n_free={q.n_free}\n')
    spans = [{"name": s.name, "row0": s.row0, "row1": s.row1,
              "block0": s.block0, "block1": s.block1} for s in q.spans]
    fh.write('"spans=' + json.dumps(spans, separators=(",", ":")) + "\n")
    fh.write(f"{q.m}\n")
    fh.write(f"{2 + len(q.psd_dims)}\n")
    sizes = [f"-{q.n_free}", f"-{q.n_free}"] + [str(d) for d in q.psd_dims]
    fh.write(" ".join(sizes) + "\n")
    fh.write(" ".join(repr(float(v)) for v in q.rhs.tolist()) + "\n")
    # F0 carries the objective on the two diagonal blocks
    obj = {}
    for c, v in zip(q.obj_idx.tolist(), q.obj_val.tolist()):
        obj[c] = obj.get(c, 0.0) + v
    for c in sorted(obj):
        if obj[c] == 0.0:
            continue
        fh.write(f"0 1 {c+1} {c+1} {repr(-obj[c])}\n")
        fh.write(f"0 2 {c+1} {c+1} {repr(obj[c])}\n")
    # constraint matrices: free entries then gram entries, row-major
    fo = np.lexsort((q.af_c, q.af_r))
    for t in fo.tolist():
        r, c, v = int(q.af_r[t]), int(q.af_c[t]), float(q.af_v[t])
        fh.write(f"{r+1} 1 {c+1} {c+1} {repr(v)}\n")
        fh.write(f"{r+1} 2 {c+1} {c+1} {repr(-v)}\n")
    i_idx, j_idx = _svec_ij(q)
    go = np.lexsort((q.ag_k, q.ag_b, q.ag_r))
    for t in go.tolist():
        r, b = int(q.ag_r[t]), int(q.ag_b[t])
        i, j, v = int(i_idx[t]), int(j_idx[t]), float(q.ag_v[t])
        stored = v if i == j else v / 2.0
        fh.write(f"{r+1} {b+3} {i+1} {j+1} {repr(stored)}\n")


def _import_sdpa(text: str) -> ConicProblem:
    lines = text.splitlines()
    pos = 0
    n_free = None
    spans = ()
    while pos < len(lines) and lines[pos][:1] in ('"', "*"):
        line = lines[pos].lstrip('"*').strip()
        if line.startswith(SDPA_MAGIC):
            n_free = int(line.split("n_free=")[1])
        elif line.startswith("spans="):
            spans = tuple(ConstraintSpan(s["name"], s["row0"], s["row1"],
                                         s["block0"], s["block1"])
                          for s in json.loads(line[len("spans="):]))
        pos += 1
    if n_free is None:
        raise StructureError("not a chainroa SDPA export (magic comment missing)")
    m = int(lines[pos]); pos += 1
    nblocks = int(lines[pos]); pos += 1
    sizes = lines[pos].split(); pos += 1
    if len(sizes) != nblocks or int(sizes[0]) != -n_free or int(sizes[1]) != -n_free:
        raise StructureError("unexpected SDPA block layout")
    psd_dims = tuple(int(s) for s in sizes[2:])
    rhs = np.array([float(v) for v in lines[pos].split()], dtype=float); pos += 1
    if rhs.size != m:
        raise StructureError("rhs length mismatch")
    obj: dict = {}
    af, ag = [], []
    for line in lines[pos:]:
        line = line.strip()
        if not line:
            continue
        mat_s, blk_s, i_s, j_s, v_s = line.split()
        mat, blk, i, j, v = int(mat_s), int(blk_s), int(i_s) - 1, int(j_s) - 1, float(v_s)
        if mat == 0:
            if blk == 1:
                obj[i] = -v
            continue
        r = mat - 1
        if blk == 1:
            af.append((r, i, v))
        elif blk == 2:
            continue  # mirror of block 1
        else:
            b = blk - 3
            val = v if i == j else 2.0 * v
            ag.append((r, b, svec_index(i, j), val))
    af_arr = np.array(af, dtype=float).reshape(-1, 3)
    ag_arr = np.array(ag, dtype=float).reshape(-1, 4)
    keys = sorted(obj)
    return ConicProblem(
        n_free, psd_dims,
        np.array(keys, dtype=np.int64),
        np.array([obj[k] for k in keys], dtype=float),
        af_arr[:, 0].astype(np.int64), af_arr[:, 1].astype(np.int64), af_arr[:, 2],
        ag_arr[:, 0].astype(np.int64), ag_arr[:, 1].astype(np.int64),
        ag_arr[:, 2].astype(np.int64), ag_arr[:, 3],
        rhs, spans)


def export(p: ConicProblem, fmt: str) -> bytes:
    """Serialize; export . import is the identity on problems."""
    buf = io.StringIO()
    if fmt == "native-json":
        _export_native(p, buf)
    elif fmt == "sdpa-sparse":
        _export_sdpa(p, buf)
    else:
        raise StructureError(f"unknown export format {fmt!r}")
    return buf.getvalue().encode()


def export_to(p: ConicProblem, fmt: str, path: str):
    with open(path, "w") as fh:
        if fmt == "native-json":
            _export_native(p, fh)
        elif fmt == "sdpa-sparse":
            _export_sdpa(p, fh)
        else:
            raise StructureError(f"unknown export format {fmt!r}")


def import_problem(data: bytes | str, fmt: str) -> ConicProblem:
    text = data.decode() if isinstance(data, bytes) else data
    if fmt == "native-json":
        return _import_native(text)
    if fmt == "sdpa-sparse":
        return _import_sdpa(text)
    raise StructureError(f"unknown export format {fmt!r}")
