from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resilient_ncs import lmi
from resilient_ncs.errors import DimensionMismatch, Infeasible, MissingVariable


def lyapunov_problem(A, delta=1e-6):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    P = lmi.symmetric("P", n)
    dec = lmi.BlockExpr([n]).add_quadratic(0, 0, P, A, A).add_term(0, 0, P, scale=-1.0)
    pos = lmi.BlockExpr([n]).add_term(0, 0, P)
    return lmi.FeasibilityProblem([P], [lmi.Constraint(dec, lmi.NSD, "decrease"),
                                        lmi.Constraint(pos, lmi.PSD, "P>0")], delta), P


def test_evaluate_constant():
    e = lmi.BlockExpr([2]).add_constant(0, 0, -np.eye(2))
    assert np.array_equal(lmi.evaluate(e, {}), -np.eye(2))


def test_evaluate_scalar_lyapunov():
    X = lmi.symmetric("X", 1)
    e = lmi.BlockExpr([1]).add_quadratic(0, 0, X, [[0.5]], [[0.5]]).add_term(0, 0, X, scale=-1.0)
    assert lmi.evaluate(e, {X: np.eye(1)})[0, 0] == pytest.approx(-0.75, abs=1e-15)


def test_evaluate_slack_expression_against_hand_expansion():
    rng = np.random.default_rng(1)
    mask = np.array([[False, False], [True, False]])
    Xi = lmi.rectangular("Xi", 2, 2, mask)
    P = lmi.symmetric("P", 2)
    E = rng.normal(size=(2, 2))
    e = lmi.BlockExpr([2]).add_term(0, 0, Xi, right=E, scale=2.0).add_term(0, 0, P, scale=-1.0)
    xi = rng.normal(size=(2, 2))
    xi[1, 0] = 0.0
    p = rng.normal(size=(2, 2))
    p = p + p.T
    want = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            want[i, j] = sum(xi[i, k] * E[k, j] + xi[j, k] * E[k, i] for k in range(2)) - p[i, j]
    assert np.allclose(lmi.evaluate(e, {Xi: xi, P: p}), want, atol=1e-14)


def test_evaluate_offdiagonal_cell_fills_both_triangles():
    X = lmi.rectangular("X", 2, 1)
    e = lmi.BlockExpr([2, 1]).add_term(1, 0, X, transpose=True)
    val = np.array([[1.0], [2.0]])
    out = lmi.evaluate(e, {X: val})
    assert np.array_equal(out[:2, 2:], val) and np.array_equal(out[2:, :2], val.T)


def test_evaluate_missing_variable():
    X = lmi.scalar("x")
    with pytest.raises(MissingVariable):
        lmi.evaluate(lmi.BlockExpr([1]).add_identity(0, X), {})


def test_dimension_checks():
    X = lmi.symmetric("X", 2)
    with pytest.raises(DimensionMismatch):
        lmi.BlockExpr([3]).add_term(0, 0, X)
    with pytest.raises(DimensionMismatch):
        lmi.rectangular("R", 2, 2, np.zeros((3, 3), bool))


def test_undeclared_variable_rejected():
    X = lmi.scalar("x")
    with pytest.raises(MissingVariable):
        lmi.FeasibilityProblem([], [lmi.Constraint(lmi.BlockExpr([1]).add_identity(0, X), lmi.NSD, "c")])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_evaluate_is_affine(seed):
    rng = np.random.default_rng(seed)
    X = lmi.symmetric("X", 2)
    Y = lmi.rectangular("Y", 2, 3)
    C = rng.normal(size=(5, 5))
    e = lmi.BlockExpr([2, 3]).add_constant(0, 0, C[:2, :2] + C[:2, :2].T)
    e.add_quadratic(0, 0, X, rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
    e.add_term(0, 1, Y, left=rng.normal(size=(2, 2)), right=rng.normal(size=(3, 3)))
    e.add_constant(1, 1, np.eye(3))

    def draw():
        x = rng.normal(size=(2, 2))
        return {X: x + x.T, Y: rng.normal(size=(2, 3))}

    a1, a2 = draw(), draw()
    summed = {X: a1[X] + a2[X], Y: a1[Y] + a2[Y]}
    const = e.constant_part()
    lhs = lmi.evaluate(e, summed)
    rhs = lmi.evaluate(e, a1) + lmi.evaluate(e, a2) - const
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_interval_feasibility():
    x = lmi.symmetric("x", 1)
    upper = lmi.BlockExpr([1]).add_term(0, 0, x)
    lower = lmi.BlockExpr([1]).add_term(0, 0, x).add_constant(0, 0, [[2.0]])
    prob = lmi.FeasibilityProblem([x], [lmi.Constraint(upper, lmi.NSD, "x<=0"),
                                        lmi.Constraint(lower, lmi.PSD, "x>=-2")], 1e-6)
    a = lmi.solve_feasibility(prob)
    val = a[x][0, 0]
    assert -2 + 1e-6 - 1e-9 <= val <= -1e-6 + 1e-9
    assert lmi.verify(prob, a).passed


def test_lyapunov_feasible_and_infeasible():
    prob, P = lyapunov_problem(np.diag([0.5, 0.9]))
    a = lmi.solve_feasibility(prob)
    assert lmi.verify(prob, a).passed
    prob, _ = lyapunov_problem([[1.1]])
    with pytest.raises(Infeasible) as info:
        lmi.solve_feasibility(prob)
    assert "decrease" in str(info.value) or "P>0" in str(info.value)


def test_verify_sign_flip_and_perturbation():
    prob, P = lyapunov_problem(np.diag([0.5, 0.9]))
    rep = lmi.verify(prob, {P: -np.eye(2)})
    check = {c.name: c for c in rep.checks}
    assert not check["P>0"].passed and check["P>0"].worst_eigenvalue == pytest.approx(-1.0)
    delta = prob.delta
    # decrease eigenvalues are -0.75 p1 and -0.19 p2: make the second one tight
    a = {P: np.diag([1.0, delta / 0.19])}
    rep = lmi.verify(prob, a)
    assert rep.passed
    bumped = {P: np.diag([1.0, delta / 0.19 - 2 * delta])}
    rep = lmi.verify(prob, bumped)
    by_enum = {c.name for c in prob.constraints
               if (np.linalg.eigvalsh(lmi.evaluate(c.expr, bumped))[0 if c.sense == lmi.PSD else -1]
                   * (1 if c.sense == lmi.PSD else -1)) < delta - 1e-9}
    assert set(rep.failed()) == by_enum == {"decrease"}


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solve_then_verify_roundtrip(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    A *= 0.9 / max(abs(np.linalg.eigvals(A)))
    prob, _ = lyapunov_problem(A)
    assert lmi.verify(prob, lmi.solve_feasibility(prob)).passed


def test_zero_mask_preserved():
    mask = np.array([[False, False], [True, False]])
    R = lmi.rectangular("R", 2, 2, mask)
    e = lmi.BlockExpr([2, 2]).add_constant(0, 0, -np.eye(2)).add_constant(1, 1, -np.eye(2))
    e.add_term(0, 1, R)
    prob = lmi.FeasibilityProblem([R], [lmi.Constraint(e, lmi.NSD, "c")])
    a = lmi.solve_feasibility(prob)
    assert a[R][1, 0] == 0.0
    assert not lmi.Variable.check_value(R, np.ones((2, 2))) == []


def test_best_margin_grades_infeasibility():
    prob, P = lyapunov_problem([[1.1]], delta=0.0)
    _, t = lmi.best_margin(prob, [P])
    # with trace(P) = 1 the best margin is (1 - 1.21) / 2 split between both constraints
    assert t < 0
    prob, P = lyapunov_problem([[0.5]], delta=0.0)
    _, t = lmi.best_margin(prob, [P])
    assert t > 0
