"""Config grammar, model-string parsing and the experiment dataclass."""
from __future__ import annotations

import numpy as np
import pytest

from condjump.config import (
    ExperimentConfig,
    Lcg,
    boundary_callable,
    build_problem,
    eps_schedule_for,
    grid_for,
    load_config,
    parse_boundary_spec,
    parse_coefficient,
    parse_config_text,
    parse_matrix,
)
from condjump.field import build_grid, node_mesh

MINIMAL = """
# comment-only lines and blanks are skipped
name = demo
grid.dim = 2
grid.cells = 64
problem.manufactured = true
audits = acf,perimeter
audit.acf.rmin = 0.2   # trailing comments too
"""


def test_parse_config_text_grammar():
    entries = parse_config_text(MINIMAL)
    assert entries["name"] == "demo"
    assert entries["audit.acf.rmin"] == "0.2"
    with pytest.raises(ValueError, match="key = value"):
        parse_config_text("just some words\n")
    with pytest.raises(ValueError, match="duplicate"):
        parse_config_text("a = 1\na = 2\n")
    with pytest.raises(ValueError, match="empty key"):
        parse_config_text("= 3\n")


def test_load_config_from_text_and_defaults():
    cfg = load_config(MINIMAL)
    assert cfg.name == "demo"
    assert cfg.cells == 64
    assert cfg.manufactured is True
    assert cfg.audits == ("acf", "perimeter")
    assert cfg.audit_params == {"acf": {"rmin": "0.2"}}
    assert cfg.lam == 0.4  # default band
    assert cfg.eps_schedule == "8h,4h,2h"


def test_load_config_from_path(tmp_path):
    path = tmp_path / "demo.cfg"
    path.write_text(MINIMAL)
    assert load_config(str(path)).raw == load_config(MINIMAL).raw


def test_unknown_audit_rejected_before_any_solve():
    with pytest.raises(ValueError, match="unknown audit"):
        load_config(MINIMAL.replace("acf,perimeter", "acf,spectral"))
    with pytest.raises(ValueError, match="unknown audit 'spectral'"):
        ExperimentConfig(name="x", raw={}, audits=("acf", "spectral"))


def test_malformed_audit_param_key():
    with pytest.raises(ValueError, match="audit.<name>.<param>"):
        load_config("audit.acf = 0.2\nname = x\n")


def test_parse_coefficient_kinds():
    const = parse_coefficient("constant:2.0", 0.4)
    assert const.kind == "constant" and const.a0 == 2.0
    hoel = parse_coefficient("hoelder:a0=1.0,c=0.25,alpha=0.5,x0=0.3:0.2", 0.4)
    assert hoel.kind == "hoelder"
    assert hoel.x0 == (0.3, 0.2)
    np.testing.assert_allclose(
        hoel.evaluate(np.array([[0.3, 0.2]])), [1.0], rtol=1e-14
    )
    with pytest.raises(ValueError, match="unknown coefficient"):
        parse_coefficient("cubic:1.0", 0.4)
    with pytest.raises(ValueError, match="key=value"):
        parse_coefficient("hoelder:a0", 0.4)


def test_parse_matrix_kinds():
    eye = parse_matrix("identity", 0.4, 2)
    assert eye.is_identity(build_grid(2, 1.0, 16))
    diag = parse_matrix("constant:2.0,0.0;0.0,1.0", 0.4, 2)
    assert diag.matrix == ((2.0, 0.0), (0.0, 1.0))
    hoel = parse_matrix("hoelder:c=0.25|alpha=0.5|x0=0.0:0.0|S=0.0,1.0;1.0,0.0", 0.4, 2)
    assert hoel.kind == "hoelder" and hoel.S == ((0.0, 1.0), (1.0, 0.0))
    with pytest.raises(ValueError, match="unknown matrix"):
        parse_matrix("rotation:0.5", 0.4, 2)


def test_boundary_specs_and_slopes():
    g = build_grid(2, 1.0, 32)
    ap = parse_coefficient("constant:2.0", 0.4)
    am = parse_coefficient("constant:1.0", 0.4)
    fn = boundary_callable(parse_boundary_spec("twoplane:beta=1.0,nu=1:0", 2), ap, am, 2)
    X, Y = node_mesh(g)
    np.testing.assert_allclose(fn(X, Y), np.where(X > 0.0, 0.5 * X, X), atol=1e-14)
    lin = boundary_callable(parse_boundary_spec("linear:0:1", 2), ap, am, 2)
    np.testing.assert_allclose(lin(X, Y), Y, atol=1e-14)
    sad = boundary_callable(parse_boundary_spec("saddle", 2), ap, am, 2)
    np.testing.assert_allclose(sad(X, Y), X * Y, atol=1e-14)
    with pytest.raises(ValueError, match="components"):
        parse_boundary_spec("twoplane:beta=1.0,nu=1:0:0", 2)
    with pytest.raises(ValueError, match="unknown boundary"):
        parse_boundary_spec("cubic", 2)


def test_build_problem_with_and_without_matrix():
    cfg = load_config(MINIMAL)
    problem = build_problem(cfg)
    assert problem.matrixP is None
    cfg2 = load_config(MINIMAL + "problem.matrix = constant:2.0,0.0;0.0,1.0\n")
    assert build_problem(cfg2).matrixP is not None


def test_grid_override_and_eps_schedule():
    cfg = load_config(MINIMAL)
    g = grid_for(cfg)
    assert g.cells_per_side == 64
    assert grid_for(cfg, 128).cells_per_side == 128
    sched = eps_schedule_for(cfg, g)
    np.testing.assert_allclose(sched, [8.0 * g.h, 4.0 * g.h, 2.0 * g.h])
    cfg_abs = load_config(MINIMAL + "solver.eps_schedule = 0.5,0.25\n")
    np.testing.assert_allclose(eps_schedule_for(cfg_abs, g), [0.5, 0.25])
    # absolute values below the floor are lifted to it
    cfg_low = load_config(MINIMAL + "solver.eps_schedule = 1e-9\n")
    np.testing.assert_allclose(eps_schedule_for(cfg_low, g), [2.0 * g.h])


def test_lcg_recurrence_and_uniforms():
    rng = Lcg(1)
    first = rng.next_u64()
    assert first == (6364136223846793005 * 1 + 1442695040888963407) % 2**64
    rng2 = Lcg(1)
    assert rng2.next_u64() == first  # same seed, same stream
    vals = [Lcg(7).uniform() for _ in range(1)] + [rng.uniform() for _ in range(100)]
    assert all(0.0 <= v < 1.0 for v in vals)
    lo, hi = 2.0, 3.5
    assert lo <= Lcg(3).uniform_in(lo, hi) < hi
