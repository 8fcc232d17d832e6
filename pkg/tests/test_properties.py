"""Property checks for scaling laws and numeric invariants."""

from __future__ import annotations

import numpy as np
from hypothesis import given, settings, strategies as st

from condjump.acf import acf_phi, modulus_psi_g
from condjump.config import Lcg
from condjump.field import (
    ModulusOfContinuity,
    ScalarField,
    build_grid,
    l2_ball_norm,
    sample_field,
)
from condjump.report import fmt12
from condjump.solver import smoothed_heaviside

GRID = build_grid(2, 1.0, 32)
UPLUS = sample_field(GRID, lambda x, y: np.maximum(x, 0.0) * (1.0 + 0.3 * y))
UMINUS = sample_field(GRID, lambda x, y: np.maximum(-x, 0.0))

finite_floats = st.floats(
    min_value=-1e12, max_value=1e12, allow_nan=False, allow_infinity=False
)


@given(
    eps=st.floats(min_value=1e-8, max_value=10.0),
    s=st.lists(st.floats(min_value=-100.0, max_value=100.0), min_size=1, max_size=20),
)
def test_ramp_is_a_clamp(eps, s):
    vals = smoothed_heaviside(eps, np.array(s))
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    order = np.argsort(s)
    assert np.all(np.diff(vals[order]) >= 0.0)
    assert smoothed_heaviside(eps, 0.0) == 0.0
    assert smoothed_heaviside(eps, eps) == 1.0


@given(scale=st.floats(min_value=1e-6, max_value=1e6))
def test_l2_ball_norm_absolute_homogeneity(scale):
    base = l2_ball_norm(UPLUS, (0.0, 0.0), 0.5)
    scaled = ScalarField(GRID, scale * UPLUS.values)
    np.testing.assert_allclose(
        l2_ball_norm(scaled, (0.0, 0.0), 0.5), scale * base, rtol=1e-12
    )


@given(scale=st.floats(min_value=1e-3, max_value=1e3))
def test_energy_product_quartic_scaling(scale):
    base = acf_phi(UPLUS, UMINUS, (0.0, 0.0), 0.5)
    phi = acf_phi(
        ScalarField(GRID, scale * UPLUS.values),
        ScalarField(GRID, scale * UMINUS.values),
        (0.0, 0.0),
        0.5,
    )
    np.testing.assert_allclose(phi, scale**4 * base, rtol=1e-10)


@given(value=finite_floats)
def test_fmt12_parses_back(value):
    text = fmt12(value)
    assert "," not in text
    assert np.isclose(float(text), value, rtol=1e-11, atol=1e-300)


@given(value=finite_floats)
def test_fmt12_is_idempotent(value):
    once = fmt12(value)
    assert fmt12(float(once)) == once


@given(seed=st.integers(min_value=0, max_value=2**64 - 1))
@settings(max_examples=30)
def test_lcg_streams_are_deterministic_and_bounded(seed):
    a, b = Lcg(seed), Lcg(seed)
    xs = [a.uniform() for _ in range(8)]
    assert xs == [b.uniform() for _ in range(8)]
    assert all(0.0 <= x < 1.0 for x in xs)


@given(
    omega0=st.floats(min_value=0.0, max_value=10.0),
    alpha=st.floats(min_value=0.05, max_value=1.0),
    r=st.floats(min_value=1e-4, max_value=0.999),
)
def test_modulus_psi_dominates_omega(omega0, alpha, r):
    mod = ModulusOfContinuity(omega0, alpha)
    psi, g = modulus_psi_g(mod, r)
    assert psi >= mod.omega(r) - 1e-15
    assert g >= 0.0
