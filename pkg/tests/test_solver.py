"""Regularized two-phase solver: ramp, Picard iteration, continuation."""
from __future__ import annotations

import numpy as np
import pytest

from condjump.field import CoefficientModel, build_grid, node_mesh, sample_field
from condjump.solver import (
    PicardNonConvergenceError,
    Solution,
    TwoPhaseProblem,
    boundary_field,
    continuation_solve,
    eps_floor,
    picard_solve,
    smoothed_heaviside,
    weak_residual,
)


def constant_problem(aplus=2.0, aminus=1.0):
    return TwoPhaseProblem(
        aplus=CoefficientModel(kind="constant", a0=aplus, lam=0.4),
        aminus=CoefficientModel(kind="constant", a0=aminus, lam=0.4),
        boundary=lambda x, y: np.where(x > 0.0, x / aplus, x / aminus),
        lam=0.4,
    )


def hoelder_problem():
    kw = dict(lam=0.4, c=0.25, alpha=0.5, x0=(0.3, 0.2))
    return TwoPhaseProblem(
        aplus=CoefficientModel(kind="hoelder", a0=2.0, **kw),
        aminus=CoefficientModel(kind="hoelder", a0=1.0, **kw),
        boundary=lambda x, y: np.where(x > 0.0, 0.5 * x, x),
        lam=0.4,
    )


def test_smoothed_heaviside_ramp():
    s = np.array([-1.0, -1e-9, 0.0, 0.05, 0.1, 0.2, 5.0])
    vals = smoothed_heaviside(0.1, s)
    np.testing.assert_allclose(vals, [0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        smoothed_heaviside(0.0, s)


def test_problem_validation():
    good = CoefficientModel(kind="constant", a0=1.0, lam=0.4)
    with pytest.raises(ValueError, match="lambda"):
        TwoPhaseProblem(aplus=good, aminus=good, boundary=lambda x, y: x, lam=0.0)
    weak = CoefficientModel(kind="constant", a0=1.0, lam=0.2)
    with pytest.raises(ValueError, match="ellipticity"):
        TwoPhaseProblem(aplus=weak, aminus=good, boundary=lambda x, y: x, lam=0.4)


def test_boundary_field_samples_callable():
    g = build_grid(2, 1.0, 16)
    problem = constant_problem()
    bf = boundary_field(problem, g)
    X, Y = node_mesh(g)
    np.testing.assert_array_equal(bf.values, np.where(X > 0.0, 0.5 * X, X))


def test_eps_floor_and_schedule_validation():
    g = build_grid(2, 1.0, 64)
    assert eps_floor(g) == 2.0 * g.h
    problem = constant_problem()
    with pytest.raises(ValueError, match="nonempty"):
        continuation_solve(problem, g, [])
    with pytest.raises(ValueError, match="decreasing"):
        continuation_solve(problem, g, [0.1, 0.1])
    with pytest.raises(ValueError, match="floor"):
        continuation_solve(problem, g, [0.1, g.h])
    with pytest.raises(ValueError, match="floor"):
        picard_solve(problem, g, 0.5 * g.h)


def test_picard_reports_iterate_history_on_failure():
    g = build_grid(2, 1.0, 32)
    with pytest.raises(PicardNonConvergenceError) as err:
        picard_solve(constant_problem(), g, 8.0 * g.h, max_iters=1)
    assert len(err.value.history) == 1
    assert err.value.history[0] > 0.0


def test_two_plane_solve_accuracy_and_extrapolation():
    g = build_grid(2, 1.0, 64)
    problem = constant_problem()
    schedule = [8.0 * g.h, 4.0 * g.h, 2.0 * g.h]
    sol = continuation_solve(problem, g, schedule)
    X = node_mesh(g)[0]
    exact = np.where(X > 0.0, 0.5 * X, X)
    err_limit = float(np.max(np.abs(sol.audit_field().values - exact)))
    err_final = float(np.max(np.abs(sol.u.values - exact)))
    assert err_limit <= 0.5 * g.h**0.9
    # the stage extrapolation strips part of the ramp bias
    assert err_limit < err_final
    assert sol.max_principle_excess <= 1e-10
    assert len(sol.picard_iters) == len(schedule)
    assert sol.residual <= 1e-8


def test_single_stage_solution_has_no_separate_limit():
    g = build_grid(2, 1.0, 32)
    sol = continuation_solve(constant_problem(), g, [4.0 * g.h])
    np.testing.assert_array_equal(sol.audit_field().values, sol.u.values)


def test_continuation_solve_is_deterministic():
    g = build_grid(2, 1.0, 32)
    problem = hoelder_problem()
    schedule = [8.0 * g.h, 4.0 * g.h, 2.0 * g.h]
    a = continuation_solve(problem, g, schedule)
    b = continuation_solve(problem, g, schedule)
    assert np.array_equal(a.u.values, b.u.values)
    assert np.array_equal(a.audit_field().values, b.audit_field().values)
    assert a.picard_iters == b.picard_iters


def test_weak_residual_small_on_solution_and_zero_on_zero():
    g = build_grid(2, 1.0, 32)
    problem = constant_problem()
    sol = picard_solve(problem, g, 4.0 * g.h)
    assert weak_residual(sol.u, problem, sol.epsilon_final) <= 1e-8
    zero = sample_field(g, lambda x, y: np.zeros_like(x))
    assert weak_residual(zero, problem, 4.0 * g.h) == 0.0


def test_solution_respects_boundary_range():
    g = build_grid(2, 1.0, 32)
    problem = hoelder_problem()
    sol = continuation_solve(problem, g, [8.0 * g.h, 4.0 * g.h, 2.0 * g.h])
    bf = boundary_field(problem, g)
    assert sol.u.values.max() <= bf.values.max() + 1e-10
    assert sol.u.values.min() >= bf.values.min() - 1e-10
