"""Conic container, both solver backends, ingestion diagnostics, exports."""

import numpy as np
import pytest

from chainroa import conic
from chainroa.conic import (ConicProblem, SolveOptions, export, import_problem,
                            ingest, solve, svec_index, svec_len)
from chainroa.poly import StructureError


def trivial_lp():
    # min x  s.t.  x = 1
    return ConicProblem(
        n_free=1, psd_dims=(),
        obj_idx=[0], obj_val=[1.0],
        af_r=[0], af_c=[0], af_v=[1.0],
        ag_r=[], ag_b=[], ag_k=[], ag_v=[],
        rhs=[1.0])


def psd_scalar_infeasible():
    # 1x1 PSD block with equality Q_11 = -1
    return ConicProblem(
        n_free=0, psd_dims=(1,),
        obj_idx=[], obj_val=[],
        af_r=[], af_c=[], af_v=[],
        ag_r=[0], ag_b=[0], ag_k=[0], ag_v=[1.0],
        rhs=[-1.0])


def psd_scalar_feasible():
    # min y  s.t.  y - Q_11 = 0, Q PSD  ->  y >= 0, optimum 0
    return ConicProblem(
        n_free=1, psd_dims=(1,),
        obj_idx=[0], obj_val=[1.0],
        af_r=[0], af_c=[0], af_v=[1.0],
        ag_r=[0], ag_b=[0], ag_k=[0], ag_v=[-1.0],
        rhs=[0.0])


def test_svec_index_round_trip():
    for p in range(1, 40):
        seen = []
        for j in range(p):
            for i in range(j + 1):
                seen.append(svec_index(i, j))
        assert seen == list(range(svec_len(p)))


def test_svec_index_rejects_lower_triangle():
    with pytest.raises(StructureError):
        svec_index(3, 1)


def test_index_validation():
    with pytest.raises(StructureError):
        ConicProblem(1, (), [2], [1.0], [], [], [], [], [], [], [], [0.0])
    with pytest.raises(StructureError):
        ConicProblem(0, (2,), [], [], [], [], [], [0], [0], [3], [1.0], [0.0])


@pytest.mark.parametrize("backend", ["clarabel", "scs"])
def test_trivial_lp_both_backends(backend):
    sol = solve(trivial_lp(), SolveOptions(backend=backend))
    assert sol.status == "optimal"
    assert abs(sol.objective - 1.0) < 1e-6
    assert abs(sol.free[0] - 1.0) < 1e-6
    assert sol.max_residual < 1e-6


@pytest.mark.parametrize("backend", ["clarabel", "scs"])
def test_psd_scalar_infeasible_both_backends(backend):
    sol = solve(psd_scalar_infeasible(), SolveOptions(backend=backend))
    assert sol.status == "infeasible"
    assert sol.free is None


@pytest.mark.parametrize("backend", ["clarabel", "scs"])
def test_psd_scalar_feasible(backend):
    sol = solve(psd_scalar_feasible(), SolveOptions(backend=backend))
    assert sol.status == "optimal"
    assert abs(sol.objective) < 1e-6
    assert sol.min_eig > -1e-9


def test_unbounded_reported():
    # min -x s.t. x - Q_11 = 0: x can grow with Q
    p = ConicProblem(
        n_free=1, psd_dims=(1,),
        obj_idx=[0], obj_val=[-1.0],
        af_r=[0], af_c=[0], af_v=[1.0],
        ag_r=[0], ag_b=[0], ag_k=[0], ag_v=[-1.0],
        rhs=[0.0])
    sol = solve(p, SolveOptions(backend="clarabel"))
    assert sol.status == "unbounded"


def test_ingest_recomputes_and_downgrades():
    p = trivial_lp()
    good = ingest(p, {"status": "optimal", "free": [1.0], "blocks": []})
    assert good.status == "optimal" and good.max_residual == 0.0
    bad = ingest(p, {"status": "optimal", "free": [1.0 + 1e-3], "blocks": []})
    assert bad.status == "failed"
    assert "residual" in bad.info["diagnostic"]


def test_ingest_eigenvalue_floor():
    p = psd_scalar_feasible()
    ok = ingest(p, {"status": "optimal", "free": [1.0], "blocks": [[[1.0]]]})
    assert ok.status == "optimal"
    bad = ingest(p, {"status": "optimal", "free": [-1e-3],
                     "blocks": [[[-1e-3]]]})
    assert bad.status == "failed"
    assert bad.min_eig == pytest.approx(-1e-3)


def test_ingest_shape_checks():
    with pytest.raises(StructureError):
        ingest(trivial_lp(), {"status": "optimal", "free": [1.0, 2.0],
                              "blocks": []})
    with pytest.raises(StructureError):
        ingest(psd_scalar_feasible(), {"status": "optimal", "free": [0.0],
                                       "blocks": []})


def random_problem(rng, n_free=4, dims=(3, 2), m=6):
    nnz_f = m * 2
    nnz_g = m * 3
    caps = [svec_len(d) for d in dims]
    b = rng.integers(0, len(dims), size=nnz_g)
    return ConicProblem(
        n_free, dims,
        np.arange(n_free), rng.normal(size=n_free),
        rng.integers(0, m, size=nnz_f), rng.integers(0, n_free, size=nnz_f),
        rng.normal(size=nnz_f),
        rng.integers(0, m, size=nnz_g), b,
        np.array([rng.integers(0, caps[bi]) for bi in b]),
        rng.normal(size=nnz_g),
        rng.normal(size=m))


def test_native_export_round_trip_identity():
    rng = np.random.default_rng(7)
    for trial in range(5):
        p = random_problem(rng).canonical()
        blob = export(p, "native-json")
        q = import_problem(blob, "native-json")
        assert q == p
        assert export(q, "native-json") == blob


def test_sdpa_export_round_trip_identity():
    rng = np.random.default_rng(8)
    for trial in range(5):
        p = random_problem(rng).canonical()
        blob = export(p, "sdpa-sparse")
        q = import_problem(blob, "sdpa-sparse")
        assert q == p
        assert export(q, "sdpa-sparse") == blob


def test_export_rejects_unknown_format():
    with pytest.raises(StructureError):
        export(trivial_lp(), "mps")
    with pytest.raises(StructureError):
        import_problem(b"{}", "mps")


def test_import_rejects_wrong_version():
    blob = export(trivial_lp(), "native-json").replace(b"/1", b"/9")
    with pytest.raises(StructureError):
        import_problem(blob, "native-json")


def test_sdpa_requires_magic_comment():
    with pytest.raises(StructureError):
        import_problem("3\n1\n2\n1.0 1.0 1.0\n", "sdpa-sparse")


def test_equality_semantics_preserved_by_exports():
    # residuals of a fixed candidate must be identical across a round trip
    rng = np.random.default_rng(9)
    p = random_problem(rng)
    y = rng.normal(size=p.n_free)
    blocks = []
    for d in p.psd_dims:
        M = rng.normal(size=(d, d))
        blocks.append(M + M.T)
    before = ingest(p, {"status": "failed", "free": y, "blocks": blocks})
    for fmt in ("native-json", "sdpa-sparse"):
        q = import_problem(export(p, fmt), fmt)
        after = ingest(q, {"status": "failed", "free": y, "blocks": blocks})
        assert after.max_residual == pytest.approx(before.max_residual, rel=1e-12)
        assert after.objective == pytest.approx(before.objective, rel=1e-12)


def test_polish_tightens_residual():
    # start from a deliberately sloppy point; projection must repair it
    p = psd_scalar_feasible()
    free = np.array([0.5])
    q = np.array([0.498])
    f2, q2 = conic._polish(p, free, q)
    assert abs(f2[0] - q2[0]) < 1e-10


def test_solution_ok_flag():
    from chainroa.conic import ConicSolution
    assert ConicSolution(status="optimal").ok
    assert ConicSolution(status="near_optimal").ok
    assert not ConicSolution(status="failed").ok
    assert not ConicSolution(status="infeasible").ok
