"""End-to-end acceptance checks for the shipped experiment battery.

Each test verifies one advertised guarantee of the package at its stated
tolerance and records a single PASS/FAIL line (printed and repeated in the
terminal summary).  Grids follow the battery convention: a radius-1 box
with N cells per side has h = 2/N, so N = 128, 256, 512 gives
h = 1/64, 1/128, 1/256.
"""
from __future__ import annotations

import numpy as np

from condjump.acf import _split_phases, acf_phi, friedland_hayman_check
from condjump.blowup import TwoPlane, flatness_cascade, graph_envelope_check
from condjump.cli import AUDIT_RUNNERS
from condjump.field import ScalarField, build_grid, node_mesh
from condjump.freeboundary import classify_point, extract_level_set

GRIDS = (128, 256, 512)
SOLVED_2D = (
    "hoelder_solved_2d.cfg",
    "matrix_diag_2d.cfg",
    "matrix_identity_2d.cfg",
    "matrix_nonprop_2d.cfg",
    "twoplane_solved_2d.cfg",
)


def _run(ctx, audit, **overrides):
    params = dict(ctx.cfg.audit_params.get(audit, {}))
    params.update(overrides)
    return AUDIT_RUNNERS[audit](ctx, params)


def _order(hs, errs):
    """Least-squares slope of log(err) against log(h) (3-point fit)."""
    return float(np.polyfit(np.log(np.asarray(hs)), np.log(np.asarray(errs)), 1)[0])


def _exact_two_plane(grid):
    X = node_mesh(grid)[0]
    return np.where(X > 0.0, 0.5 * X, X)


def test_two_plane_reproduction(solve_cache, criterion):
    """Solved two-plane agrees with the exact profile at first order near the
    interface and nearly second order away from it."""
    hs, near, far = [], [], []
    for cells in GRIDS:
        ctx = solve_cache("twoplane_solved_2d.cfg", cells)
        X = node_mesh(ctx.grid)[0]
        err = np.abs(ctx.field.audit_field().values - _exact_two_plane(ctx.grid))
        band = np.abs(X) <= 0.25
        hs.append(ctx.grid.h)
        near.append(float(np.max(err[band])))
        far.append(float(np.max(err[~band])))
    hs, near, far = np.array(hs), np.array(near), np.array(far)
    p_near, p_far = _order(hs, near), _order(hs, far)
    ok = (
        bool(np.all(near <= 0.5 * hs**0.9))
        and bool(np.all(far <= 5.0 * hs**1.8))
        and abs(p_near - 0.9) <= 0.2
        and abs(p_far - 1.8) <= 0.2
    )
    criterion(
        "two-plane reproduction", ok,
        "orders near/far %.2f/%.2f, worst near %.2e vs %.2e" % (p_near, p_far, near[0], 0.5 * hs[0] ** 0.9),
    )


def test_energy_product_constancy(battery_reports, criterion):
    """On the exact two-plane the radial energy product is flat and matches
    the closed form pi^2/16 for slopes (2, 1, 1)."""
    rep = battery_reports["twoplane_exact_2d.cfg"]
    acf = {r.name: r for r in rep.audits}["acf"]
    target = np.pi**2 / 16.0
    spread = acf.metrics["phi_spread"]
    mean = acf.metrics["phi_mean"]
    ok = spread <= 0.04 and abs(mean - target) <= 0.04 * target
    criterion(
        "energy product constancy", ok,
        "spread %.3g, mean %.6g vs %.6g" % (spread, mean, target),
    )


def test_energy_product_monotonicity(solve_cache, criterion):
    """Corrected product is monotone for the Hoelder-coefficient solve and
    the empirical fixing constant does not grow under refinement."""
    verdicts, cbars = [], []
    for cells in GRIDS:
        res = _run(solve_cache("hoelder_solved_2d.cfg", cells), "acf")
        verdicts.append(res.verdict)
        cbars.append(res.metrics["min_cbar"])
    ok = verdicts[1] == "PASS" and all(
        b <= a + 1e-12 for a, b in zip(cbars, cbars[1:])
    )
    criterion(
        "energy product monotonicity", ok,
        "verdicts %s, min fixing constants %s" % (",".join(verdicts), ["%.3g" % c for c in cbars]),
    )


def test_cap_sum_lower_bound(battery_reports, solve_cache, criterion):
    """Cap characteristics satisfy beta+ + beta- >= 2 - 8h/r on every
    audited radius of every planar case, with equality on the two-plane."""
    margins = {}
    for fname, rep in battery_reports.items():
        for res in rep.audits:
            if res.name == "fh" and res.verdict != "NA":
                margins[fname] = res.metrics["min_margin"]
    ctx = solve_cache("twoplane_exact_2d.cfg")
    g = ctx.grid
    rmax = g.radius - 2.0 * g.h
    radii = np.linspace(max(8.0 * g.h, rmax / 8.0), rmax, 8)
    fh = friedland_hayman_check(ctx.field, (0.0, 0.0), radii)
    equality = bool(np.all(np.abs(fh.beta_sums - 2.0) <= fh.tolerances))
    ok = len(margins) >= 6 and all(m >= 0.0 for m in margins.values()) and equality
    criterion(
        "cap characteristic sum", ok,
        "%d cases, worst margin %.3g, two-plane max |sum-2| %.2e" % (
            len(margins), min(margins.values()), float(np.max(np.abs(fh.beta_sums - 2.0)))),
    )


def test_interface_measure_family(battery_reports, criterion):
    """All 16 bump pairings against the solved Hoelder interface stay
    nonnegative and two-sided symmetric within 5e-3."""
    rep = battery_reports["hoelder_solved_2d.cfg"]
    mu = {r.name: r for r in rep.audits}["mu"]
    ok = (
        mu.metrics["count"] == 16
        and mu.metrics["min_margin"] >= -5e-3
        and mu.metrics["max_defect"] <= 5e-3
    )
    criterion(
        "interface measure family", ok,
        "margin %.3g, defect %.3g over %d bumps" % (
            mu.metrics["min_margin"], mu.metrics["max_defect"], int(mu.metrics["count"])),
    )


def test_flux_balance(battery_reports, solve_cache, criterion):
    """Two-sided flux mismatch is small at the shipped grids and decays
    under refinement with order at least 0.8."""
    exact = {r.name: r for r in battery_reports["twoplane_exact_2d.cfg"].audits}["flux"]
    solved = {r.name: r for r in battery_reports["hoelder_solved_2d.cfg"].audits}["flux"]
    eps_for = {128: "0.08,0.05,0.032", 256: "0.04,0.025,0.016", 512: "0.02,0.0125,0.008"}
    hs, mis = [], []
    for cells in GRIDS:
        ctx = solve_cache("twoplane_exact_2d.cfg", cells)
        res = _run(ctx, "flux", eps=eps_for[cells], eta_radius="0.3")
        hs.append(ctx.grid.h)
        mis.append(res.metrics["mismatch"])
    order = _order(hs, mis)
    ok = (
        exact.metrics["mismatch"] <= 0.02
        and solved.metrics["mismatch"] <= 0.05
        and all(b < a for a, b in zip(mis, mis[1:]))
        and order >= 0.8
    )
    criterion(
        "flux balance", ok,
        "exact %.3g, solved %.3g, refinement order %.2f" % (
            exact.metrics["mismatch"], solved.metrics["mismatch"], order),
    )


def test_flatness_cascade_rotated(criterion):
    """Deficits of the flatness iteration on a rotated two-plane decay under
    the geometric bound and the zero set stays inside the drift envelope."""
    theta = np.deg2rad(30.0)
    nu_true = np.array([np.cos(theta), np.sin(theta)])
    g = build_grid(2, 1.0, 256)
    X, Y = node_mesh(g)
    t = X * nu_true[0] + Y * nu_true[1]
    field = ScalarField(g, np.where(t > 0.0, 0.5 * t, t))
    th0 = np.deg2rad(33.0)
    initial = TwoPlane(
        beta=1.0, nu=(np.cos(th0), np.sin(th0)), z=(0.0, 0.0), aplus_z=2.0, aminus_z=1.0
    )
    trace = flatness_cascade(field, (0.0, 0.0), initial, rbar=0.5, alpha=0.5, K=3)
    curve = extract_level_set(field, 0.0)
    env = graph_envelope_check(
        curve, nu_true, Cenv=2.0, beta=1.0, alpha=0.5,
        eps=max(trace.entries[0][2], 1e-14), slack=2.0 * g.h,
    )
    nu_final = np.asarray(trace.entries[-1][1])
    ok = (
        trace.verdict == "PASS"
        and env.verdict == "PASS"
        and float(nu_final @ nu_true) >= 0.9999
        and 0.0 < trace.c0_empirical <= 5.0
    )
    criterion(
        "flatness cascade", ok,
        "deficit %.2e -> %.2e, empirical drift constant %.3g" % (
            trace.entries[0][2], trace.entries[-1][2], trace.c0_empirical),
    )


def test_degeneracy_dichotomy(battery_reports, criterion):
    """The radial energy product separates the branching two-plane point
    from the saddle by orders of magnitude, and the labels agree."""
    g = build_grid(2, 1.0, 256)
    X, Y = node_mesh(g)
    u_plane = ScalarField(g, np.where(X > 0.0, 0.5 * X, X))
    u_saddle = ScalarField(g, X * Y)
    radii = np.linspace(0.1, 0.5, 9)
    pp, pm = _split_phases(u_plane)
    sp, sm = _split_phases(u_saddle)
    phi_plane = min(acf_phi(pp, pm, (0.0, 0.0), r) for r in radii)
    phi_saddle = min(acf_phi(sp, sm, (0.0, 0.0), r) for r in radii)
    ratio = phi_plane / phi_saddle
    label_plane = classify_point(u_plane, (0.0, 0.0), threshold_factor=0.25).label
    label_saddle = classify_point(u_saddle, (0.0, 0.0), threshold_factor=0.25).label
    battery = {
        name: {r.name: r.verdict for r in rep.audits}.get("classify")
        for name, rep in battery_reports.items()
        if name in ("twoplane_exact_2d.cfg", "saddle_2d.cfg")
    }
    ok = (
        ratio >= 100.0
        and label_plane == "Nondegenerate"
        and label_saddle == "Degenerate"
        and all(v == "PASS" for v in battery.values())
    )
    criterion(
        "degeneracy dichotomy", ok,
        "product ratio %.3g, labels %s/%s" % (ratio, label_plane, label_saddle),
    )


def test_gradient_bound_refinement(solve_cache, criterion):
    """The interior gradient ratio of every solved planar case moves less
    than 10% across h = 1/64 -> 1/256."""
    spreads = {}
    for name in SOLVED_2D:
        ratios = [
            _run(solve_cache(name, cells), "lipschitz").metrics["ratio"]
            for cells in GRIDS
        ]
        spreads[name] = (max(ratios) - min(ratios)) / max(ratios)
    worst = max(spreads.values())
    ok = worst <= 0.10
    criterion(
        "gradient bound stability", ok,
        "worst relative spread %.3g over %d cases" % (worst, len(spreads)),
    )


def test_matrix_reduction_and_audit(battery_reports, criterion):
    """Identity matrix factor reproduces the scalar solve bitwise, the
    anisotropic diag(2,1) audit passes, non-proportional data is refused."""
    ident = {r.name: r for r in battery_reports["matrix_identity_2d.cfg"].audits}
    diag = {r.name: r for r in battery_reports["matrix_diag_2d.cfg"].audits}
    nonprop = {r.name: r for r in battery_reports["matrix_nonprop_2d.cfg"].audits}
    reduction = ident["matrix_reduction"]
    ok = (
        reduction.verdict == "PASS"
        and reduction.metrics["bit_identical"] == 1.0
        and reduction.metrics["max_abs_diff"] == 0.0
        and diag["matrix"].verdict == "PASS"
        and nonprop["matrix"].verdict == "NA"
        and "proportional" in nonprop["matrix"].note
    )
    criterion(
        "matrix reduction and audit", ok,
        "reduction %s, diag %s, nonprop %s" % (
            reduction.verdict, diag["matrix"].verdict, nonprop["matrix"].verdict),
    )
