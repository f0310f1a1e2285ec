import math

import numpy as np
import pytest

from chainroa.poly import (
    AffineMap,
    Box,
    CLEANUP_EPS,
    Polynomial,
    StructureError,
    box_integral,
    monomial_basis,
    multiply,
    parse_poly,
    partial_derivative,
)


def P(text, variables=("x",)):
    return parse_poly(text, variables)


def random_poly(rng, variables, degree):
    basis = monomial_basis(len(variables), degree)
    terms = {e: rng.uniform(-2, 2) for e in basis if rng.random() < 0.6}
    return Polynomial(variables, terms)


def test_multiply_difference_of_squares():
    p = P("1.0*x + 1.0")
    q = P("1.0*x - 1.0")
    assert multiply(p, q) == P("1.0*x^2 - 1.0")


def test_multiply_by_zero_annihilates():
    p = P("3.0*x^2 - 1.0*x")
    assert multiply(p, Polynomial.zero(("x",))).is_zero


def test_multiply_identity():
    p = parse_poly("1.0*x^2 + 1.0*x^2*y^2", ("x", "y"))
    one = Polynomial.constant(("x", "y"), 1.0)
    assert multiply(p, one) == p


def test_multiply_mismatched_vars_rejected():
    with pytest.raises(StructureError):
        multiply(P("1.0*x"), parse_poly("1.0*y", ("y",)))


def test_partial_derivative_power_rule():
    p = parse_poly("1.0*x^2*y", ("x", "y"))
    assert partial_derivative(p, "x") == parse_poly("2.0*x*y", ("x", "y"))
    assert partial_derivative(p, "y") == parse_poly("1.0*x^2", ("x", "y"))


def test_partial_derivative_constant_in_var():
    p = parse_poly("1.0*x^2", ("x", "y"))
    assert partial_derivative(p, "y").is_zero


def test_partial_derivative_time_generator():
    t = Polynomial.var(("t",), "t")
    p = t * (1.0 - t)
    assert p.partial_derivative("t") == P("1.0 - 2.0*t", ("t",))


def test_partial_derivative_unknown_var():
    with pytest.raises(StructureError):
        P("1.0*x").partial_derivative("z")


def test_evaluate_bicylinder_rhs():
    # (x1^2 + x2^2 - 0.25)*x1 at the equilibrium and at a zero of the factor
    f = parse_poly("1.0*x1^3 + 1.0*x1*x2^2 - 0.25*x1", ("x1", "x2", "x3"))
    assert f.evaluate([0.0, 0.0, 0.0]) == 0.0
    assert abs(f.evaluate([0.5, 0.0, 0.0])) < 1e-15


def test_evaluate_arithmetic():
    assert P("1.0*x^2 + 1.0").evaluate([2.0]) == 5.0


def test_evaluate_dimension_mismatch():
    with pytest.raises(StructureError):
        P("1.0*x").evaluate([1.0, 2.0])


def test_substitute_affine_scaling():
    p = P("1.0*x^2")
    q = p.substitute_affine(AffineMap([2.0], [0.0]))
    assert q == P("4.0*x^2")


def test_substitute_affine_identity():
    rng = np.random.default_rng(3)
    p = random_poly(rng, ("x", "y"), 4)
    assert p.substitute_affine(AffineMap.identity(2)) == p


def test_substitute_affine_time_scale():
    p = P("1.0*t", ("t",))
    assert p.substitute_affine(AffineMap([100.0], [0.0])) == P("100.0*t", ("t",))


def test_substitute_affine_matches_pointwise():
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = random_poly(rng, ("x", "y", "z"), 5)
        amap = AffineMap(rng.uniform(0.5, 2.0, 3), rng.uniform(-1, 1, 3))
        q = p.substitute_affine(amap)
        for _ in range(5):
            y = rng.uniform(-1, 1, 3)
            ref = p.evaluate(amap.apply(y))
            got = q.evaluate(y)
            assert got == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_substitute_affine_round_trip_coefficients():
    rng = np.random.default_rng(7)
    for _ in range(10):
        p = random_poly(rng, ("x", "y"), 6)
        amap = AffineMap(rng.uniform(0.5, 3.0, 2), rng.uniform(-2, 2, 2))
        back = p.substitute_affine(amap).substitute_affine(amap.inverse())
        for e, c in p.terms.items():
            assert back.terms.get(e, 0.0) == pytest.approx(c, rel=1e-9, abs=1e-9)


def test_box_integral_closed_forms():
    box1 = Box([-1.0], [1.0])
    assert box_integral(P("1.0*x^2"), box1) == pytest.approx(2.0 / 3.0)
    assert box_integral(P("1.0*x"), box1) == 0.0
    box2 = Box([-1.0, -1.0], [1.0, 1.0])
    one = Polynomial.constant(("x", "y"), 1.0)
    assert box_integral(one, box2) == pytest.approx(4.0)


def test_box_integral_against_midpoint_rule_1d():
    rng = np.random.default_rng(41)
    box = Box([-1.0], [1.0])
    n = 10_000
    h = 2.0 / n
    grid = (np.linspace(-1.0, 1.0, n, endpoint=False) + h / 2).reshape(-1, 1)
    for _ in range(10):
        p = random_poly(rng, ("x",), 6)
        exact = box_integral(p, box)
        if abs(exact) < 0.1:
            continue
        quad = p.evaluate_many(grid).sum() * h
        assert exact == pytest.approx(quad, rel=1e-4)


def test_box_integral_against_midpoint_rule_2d():
    # Midpoint error scales with the second derivative, so keep the test
    # family mild enough that 1e4 cells reach 1e-4 relative accuracy.
    rng = np.random.default_rng(5)
    box = Box([-1.0, -0.5], [1.0, 1.5])
    cells = 100  # 100x100 = 1e4 midpoint cells
    xs = np.linspace(box.lower[0], box.upper[0], cells, endpoint=False)
    ys = np.linspace(box.lower[1], box.upper[1], cells, endpoint=False)
    h = 2.0 / cells
    grid = np.stack(np.meshgrid(xs + h / 2, ys + h / 2), axis=-1).reshape(-1, 2)
    for _ in range(10):
        terms = {e: rng.uniform(0.5, 2.0)
                 for e in monomial_basis(2, 3) if rng.random() < 0.6}
        terms[(0, 0)] = rng.uniform(1.0, 2.0)
        p = Polynomial(("x", "y"), terms)
        quad = p.evaluate_many(grid).sum() * h * h
        exact = box_integral(p, box)
        assert exact == pytest.approx(quad, rel=1e-4)


def test_degenerate_box_rejected():
    with pytest.raises(StructureError):
        Box([1.0], [1.0])


def test_monomial_basis_counts():
    assert len(monomial_basis(4, 2)) == 15
    assert len(monomial_basis(21, 4)) == 12650
    assert monomial_basis(1, 0) == [(0,)]


def test_monomial_basis_graded_lex():
    basis = monomial_basis(2, 2)
    assert basis == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_product_evaluation_property():
    rng = np.random.default_rng(17)
    for _ in range(10):
        dim = int(rng.integers(1, 5))
        variables = tuple(f"x{i+1}" for i in range(dim))
        p = random_poly(rng, variables, int(rng.integers(0, 7)))
        q = random_poly(rng, variables, int(rng.integers(0, 7)))
        pq = multiply(p, q)
        pts = rng.uniform(-1, 1, (10, dim))
        for pt in pts:
            ref = p.evaluate(pt) * q.evaluate(pt)
            assert pq.evaluate(pt) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_derivative_against_finite_differences():
    rng = np.random.default_rng(23)
    h = 1e-5
    for _ in range(5):
        dim = int(rng.integers(1, 4))
        variables = tuple(f"x{i+1}" for i in range(dim))
        p = random_poly(rng, variables, 5)
        for vi, name in enumerate(variables):
            dp = p.partial_derivative(name)
            for pt in rng.uniform(-1, 1, (20, dim)):
                up, dn = pt.copy(), pt.copy()
                up[vi] += h
                dn[vi] -= h
                fd = (p.evaluate(up) - p.evaluate(dn)) / (2 * h)
                assert dp.evaluate(pt) == pytest.approx(fd, abs=1e-6)


def test_cleanup_threshold():
    p = Polynomial(("x",), {(1,): 1e-13, (0,): 1.0})
    assert p.terms == {(0,): 1.0}
    q = P("1.0*x") - P("1.0*x")
    assert q.is_zero
    assert q.degree == float("-inf")
    assert abs(CLEANUP_EPS - 1e-12) == 0.0


def test_degree_tracking():
    p = parse_poly("1.0*x^2*y + 1.0", ("x", "y"))
    assert p.degree == 3
    assert p.degree_in("x") == 2
    assert p.degree_in("y") == 1
    q = random_poly(np.random.default_rng(1), ("x",), 3)
    r = random_poly(np.random.default_rng(2), ("x",), 4)
    if not q.is_zero and not r.is_zero:
        assert (q * r).degree == q.degree + r.degree


def test_parser_rejects_unknown_identifier():
    with pytest.raises(StructureError):
        parse_poly("1.0*x1 + 1.0*foo", ("x1",))


def test_parser_round_trip():
    rng = np.random.default_rng(29)
    variables = ("x1", "x2", "t")
    for _ in range(20):
        p = random_poly(rng, variables, 5)
        assert parse_poly(p.to_str(), variables) == p


def test_parser_accepts_caret_power_terms():
    p = parse_poly("3.5*x1^2*x2 - 0.25*x1", ("x1", "x2"))
    assert p.terms == {(2, 1): 3.5, (1, 0): -0.25}
    assert parse_poly("0", ("x1",)).is_zero


def test_evaluate_many_matches_scalar():
    rng = np.random.default_rng(31)
    p = random_poly(rng, ("x", "y"), 4)
    pts = rng.uniform(-1, 1, (50, 2))
    batch = p.evaluate_many(pts)
    for i, pt in enumerate(pts):
        assert batch[i] == pytest.approx(p.evaluate(pt), rel=1e-12, abs=1e-12)
