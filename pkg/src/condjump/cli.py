"""Command line driver: solve two-phase problems and run numerical audits.

Subcommands
-----------
solve    solve the configured problem and run its configured audits
acf      radial energy-product audits (monotonicity, cap characteristics)
fb       free boundary audits (interface measure, flux balance, dichotomy,
         gradient bound, perimeter)
blowup   rescaling audits (two-plane fit, flatness cascade, graph envelope)
matrix   matrix-extension audits (proportionality gate, monotonicity,
         identity reduction)
suite    run every packaged experiment config
report   re-emit a stored report.json (csv, text, figures)

Common flags: --config <path>, --out <dir>, --grid-sweep h1,h2,... and
--seed <u64>.  Exit status is 0 when no audit reports FAIL, 1 when at
least one does, 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from condjump import acf as acf_mod
from condjump import blowup as blowup_mod
from condjump import freeboundary as fb_mod
from condjump import matrixext as mx_mod
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
)
from condjump.field import ScalarField, dump_field
from condjump.report import AuditResult, RunReport, emit_report, load_report
from condjump.solver import TwoPhaseProblem, boundary_field, continuation_solve

SUBCOMMAND_AUDITS = {
    "solve": None,  # run the audits configured in the experiment file
    "acf": ("acf", "fh"),
    "fb": ("mu", "flux", "classify", "lipschitz", "perimeter"),
    "blowup": ("fit", "cascade", "envelope"),
    "matrix": ("matrix", "matrix_reduction"),
}

# per-audit scalar metrics copied into grid refinement table rows
SWEEP_METRICS = {
    "acf": ("min_cbar", "phi_spread"),
    "fh": ("min_margin",),
    "mu": ("min_margin", "max_defect"),
    "flux": ("mismatch",),
    "classify": ("labels",),
    "lipschitz": ("ratio",),
    "perimeter": ("perimeter",),
    "fit": ("deficit", "beta"),
    "cascade": ("c0_empirical",),
    "envelope": ("worst_excess",),
    "matrix": ("kappa",),
    "matrix_reduction": ("max_abs_diff",),
}


@dataclass
class RunContext:
    cfg: ExperimentConfig
    grid: object
    problem: TwoPhaseProblem
    field: object  # Solution or ScalarField
    rng: Lcg


def _pfloat(params: dict, key: str, default: float) -> float:
    return float(params[key]) if key in params else default


def _pint(params: dict, key: str, default: int) -> int:
    return int(params[key]) if key in params else default


def _ppoint(params: dict, key: str, dim: int):
    if key not in params:
        return np.zeros(dim)
    vals = np.array([float(v) for v in params[key].split(":")], dtype=float)
    if vals.size != dim:
        raise ValueError("point %r has %d components, grid is %d-d" % (key, vals.size, dim))
    return vals


def _eps_values(spec: str, grid) -> list:
    values = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        values.append(float(item[:-1]) * grid.h if item.endswith("h") else float(item))
    return values


def _array_table(header, columns) -> dict:
    rows = [list(row) for row in zip(*columns)]
    return {"header": list(header), "rows": rows}


def _audit_acf(ctx: RunContext, params: dict) -> AuditResult:
    g = ctx.grid
    z = _ppoint(params, "z", g.dim)
    radii = None
    if "rmin" in params or "rmax" in params:
        rmin = _pfloat(params, "rmin", max(6.0 * g.h, (g.radius - 2 * g.h) / 8.0))
        rmax = _pfloat(params, "rmax", g.radius - 2 * g.h)
        radii = np.linspace(rmin, rmax, _pint(params, "count", 12))
    cbar = float(params["cbar"]) if "cbar" in params else None
    rep = acf_mod.monotonicity_audit(
        ctx.field,
        problem=ctx.problem,
        z=z,
        radii=radii,
        cbar=cbar,
        c0=_pfloat(params, "c0", 10.0),
        tol_factor=_pfloat(params, "tol_factor", 1.0),
    )
    phi_max = float(np.max(rep.phi))
    spread = float((np.max(rep.phi) - np.min(rep.phi)) / phi_max) if phi_max > 0 else 0.0
    table = _array_table(
        ("r", "Iplus", "Iminus", "phi", "phi_corrected", "beta_plus", "beta_minus"),
        (rep.radii, rep.Iplus, rep.Iminus, rep.phi, rep.phi_corrected, rep.beta_plus, rep.beta_minus),
    )
    return AuditResult(
        name="acf",
        verdict=rep.verdict,
        metrics={
            "cbar": rep.cbar,
            "delta_tol": rep.delta_tol,
            "min_cbar": rep.min_cbar,
            "phi_mean": float(np.mean(rep.phi)),
            "phi_spread": spread,
            "prop_ratio_max": rep.prop_ratio_max,
        },
        tables={"radial": table},
        figures=[
            {"name": "phi", "kind": "lines", "table": "radial", "x": "r",
             "ys": ["phi", "phi_corrected"], "ylabel": "product"},
            {"name": "caps", "kind": "lines", "table": "radial", "x": "r",
             "ys": ["beta_plus", "beta_minus"], "ylabel": "cap characteristic"},
        ],
    )


def _audit_fh(ctx: RunContext, params: dict) -> AuditResult:
    g = ctx.grid
    if g.dim != 2:
        return AuditResult(
            name="fh", verdict="NA", note="cap characteristics are a planar diagnostic"
        )
    z = _ppoint(params, "z", 2)
    rmax = _pfloat(params, "rmax", g.radius - 2 * g.h)
    rmin = _pfloat(params, "rmin", max(8.0 * g.h, rmax / 8.0))
    radii = np.linspace(rmin, rmax, _pint(params, "count", 8))
    field_u = ctx.field.audit_field() if hasattr(ctx.field, "audit_field") else ctx.field
    rep = acf_mod.friedland_hayman_check(field_u, z, radii)
    margins = rep.beta_sums - (2.0 - rep.tolerances)
    finite = margins[np.isfinite(margins)]
    min_margin = float(np.min(finite)) if finite.size else float("nan")
    table = _array_table(("r", "beta_sum", "tolerance"), (rep.radii, rep.beta_sums, rep.tolerances))
    return AuditResult(
        name="fh",
        verdict=rep.verdict,
        metrics={"min_margin": min_margin},
        tables={"caps": table},
        figures=[{"name": "betasum", "kind": "lines", "table": "caps", "x": "r",
                  "ys": ["beta_sum"], "ylabel": "beta+ + beta-"}],
        note=rep.note,
    )


def _random_bumps(field_u: ScalarField, count: int, radius: float, rng: Lcg) -> list:
    curve = fb_mod.extract_level_set(field_u, 0.0)
    verts = curve.vertices()
    if verts.shape[0] == 0:
        raise ValueError("zero set is empty; cannot place a random bump family")
    g = field_u.grid
    bumps = []
    attempts = 0
    while len(bumps) < count and attempts < 50 * count:
        attempts += 1
        v = verts[int(rng.uniform() * verts.shape[0]) % verts.shape[0]]
        r = radius * (0.6 + 0.4 * rng.uniform())
        if float(np.max(np.abs(v))) + r <= g.radius - 2.0 * g.h:
            bumps.append(fb_mod.BumpTest(center=tuple(float(c) for c in v), radius=r))
    if len(bumps) < count:
        raise ValueError("could not place %d bumps inside the domain" % count)
    return bumps


def _audit_mu(ctx: RunContext, params: dict) -> AuditResult:
    field_u = ctx.field.audit_field() if hasattr(ctx.field, "audit_field") else ctx.field
    count = _pint(params, "count", 12)
    radius = _pfloat(params, "radius", min(0.25 * ctx.grid.radius, 32.0 * ctx.grid.h))
    if params.get("mode", "arclength") == "random":
        bumps = _random_bumps(field_u, count, radius, ctx.rng)
    else:
        bumps = fb_mod.default_bump_family(field_u, count=count, radius=radius)
    rep = fb_mod.mu_audit(
        ctx.field, ctx.problem, bumps=bumps, tol_factor=_pfloat(params, "tol_factor", 0.1)
    )
    centers = np.asarray(rep.centers, dtype=float)
    cols = [centers[:, a] for a in range(centers.shape[1])]
    header = ["c%d" % (a + 1) for a in range(centers.shape[1])] + ["margin", "defect"]
    table = _array_table(header, cols + [rep.margins, rep.defects])
    return AuditResult(
        name="mu",
        verdict=rep.verdict,
        metrics={
            "count": len(bumps),
            "min_margin": float(np.min(rep.margins)),
            "max_defect": float(np.max(rep.defects)),
            "tolerance": rep.tolerance,
        },
        tables={"bumps": table},
    )


def _audit_flux(ctx: RunContext, params: dict) -> AuditResult:
    g = ctx.grid
    center = _ppoint(params, "eta_center", g.dim)
    eta = fb_mod.BumpTest(
        center=tuple(float(c) for c in center),
        radius=_pfloat(params, "eta_radius", min(0.3 * g.radius, 48.0 * g.h)),
    )
    eps_list = _eps_values(params.get("eps", "6h,4h,2.5h"), g)
    rep = fb_mod.flux_balance(ctx.field, ctx.problem, eta, eps_list)
    tol = _pfloat(params, "tol", 0.05)
    verdict = "PASS" if np.isfinite(rep.mismatch) and rep.mismatch <= tol else "FAIL"
    table = _array_table(
        ("eps", "plus_flux", "minus_flux"),
        (rep.eps_used, rep.plus_integrals, rep.minus_integrals),
    )
    return AuditResult(
        name="flux",
        verdict=verdict,
        metrics={
            "mismatch": rep.mismatch,
            "plus_limit": rep.plus_limit,
            "minus_limit": rep.minus_limit,
            "tol": tol,
        },
        tables={"levels": table},
        figures=[{"name": "levels", "kind": "lines", "table": "levels", "x": "eps",
                  "ys": ["plus_flux", "minus_flux"], "ylabel": "one-sided flux"}],
        note="; ".join(rep.notes) if rep.notes else rep.caveat,
    )


def _audit_classify(ctx: RunContext, params: dict) -> AuditResult:
    g = ctx.grid
    points = []
    for chunk in params.get("points", ":".join(["0"] * g.dim)).split(";"):
        points.append(np.array([float(v) for v in chunk.split(":")], dtype=float))
    expected = [s.strip() for s in params["expected"].split(";")] if "expected" in params else None
    factor = _pfloat(params, "threshold_factor", 0.05)
    if params.get("snap", "false").lower() == "true":
        # classify the nearest point of the computed interface instead of
        # the configured coordinates (solved interfaces drift off markers)
        field_u = ctx.field.audit_field() if hasattr(ctx.field, "audit_field") else ctx.field
        verts = fb_mod.extract_level_set(field_u, 0.0).vertices()
        points = [verts[np.argmin(np.sum((verts - z) ** 2, axis=1))] for z in points]
    labels = []
    rows = []
    for idx, z in enumerate(points):
        rep = fb_mod.classify_point(ctx.field, z, threshold_factor=factor)
        labels.append(rep.label)
        for r, q in zip(rep.radii, rep.q):
            rows.append([idx, float(r), float(q), rep.threshold])
    verdict = "NA"
    if expected is not None:
        if len(expected) != len(points):
            raise ValueError("expected %d labels, got %d" % (len(points), len(expected)))
        verdict = "PASS" if labels == expected else "FAIL"
    return AuditResult(
        name="classify",
        verdict=verdict,
        metrics={"labels": ";".join(labels), "threshold_factor": factor},
        tables={"profiles": {"header": ["point", "r", "q", "threshold"], "rows": rows}},
    )


def _audit_lipschitz(ctx: RunContext, params: dict) -> AuditResult:
    rep = fb_mod.lipschitz_audit(ctx.field, half_width=_pfloat(params, "half_width", 0.5))
    return AuditResult(
        name="lipschitz",
        verdict="PASS" if np.isfinite(rep.ratio) else "FAIL",
        metrics={
            "ratio": rep.ratio,
            "sup_grad": rep.sup_grad,
            "dist": rep.dist,
            "norm": rep.norm,
        },
    )


def _audit_perimeter(ctx: RunContext, params: dict) -> AuditResult:
    field_u = ctx.field.audit_field() if hasattr(ctx.field, "audit_field") else ctx.field
    measure = fb_mod.perimeter_diagnostic(field_u)
    tables = {}
    figures = []
    if measure > 0.0 and ctx.grid.dim == 2:
        curve = fb_mod.extract_level_set(field_u, 0.0)
        rows = []
        for sid, seg in enumerate(curve.segments):
            for vertex in np.asarray(seg):
                rows.append([sid, float(vertex[0]), float(vertex[1])])
        tables["zeroset"] = {"header": ["segment", "x1", "x2"], "rows": rows}
        figures.append({"name": "zeroset", "kind": "polylines", "table": "zeroset"})
    return AuditResult(
        name="perimeter",
        verdict="PASS",
        metrics={"perimeter": measure},
        tables=tables,
        figures=figures,
        note=fb_mod.PERIMETER_CAVEAT,
    )


def _coeffs_at(problem: TwoPhaseProblem, z: np.ndarray) -> tuple:
    ap = float(problem.aplus.evaluate(z[None, :])[0])
    am = float(problem.aminus.evaluate(z[None, :])[0])
    return ap, am


def _fit_plane(ctx: RunContext, z: np.ndarray, r: float, ap: float, am: float):
    """Two-plane fit of the rescaled field, with the slope mapped back to
    the physical scale: rescale normalizes by ||u|| r^(-n/2), so the fitted
    slope must be multiplied by ||u|| / r^(n/2+1)."""
    from condjump.field import l2_ball_norm

    field_u = ctx.field.audit_field() if hasattr(ctx.field, "audit_field") else ctx.field
    v = blowup_mod.rescale(field_u, z, r)
    plane, deficit = blowup_mod.fit_two_plane(v, ap, am)
    norm = l2_ball_norm(field_u, z, r)
    beta_physical = plane.beta * norm / r ** (ctx.grid.dim / 2.0 + 1.0)
    return plane, deficit, beta_physical


def _audit_fit(ctx: RunContext, params: dict) -> AuditResult:
    g = ctx.grid
    z = _ppoint(params, "z", g.dim)
    r = _pfloat(params, "r", g.radius)
    ap, am = _coeffs_at(ctx.problem, z)
    plane, deficit, beta_physical = _fit_plane(ctx, z, r, ap, am)
    tol = _pfloat(params, "tol", 0.1)
    metrics = {
        "beta": plane.beta,
        "beta_physical": beta_physical,
        "deficit": deficit,
        "tol": tol,
    }
    for a, c in enumerate(plane.nu):
        metrics["nu%d" % (a + 1)] = c
    return AuditResult(
        name="fit",
        verdict="PASS" if deficit <= tol else "FAIL",
        metrics=metrics,
    )


def _initial_plane(ctx: RunContext, params: dict, z: np.ndarray):
    ap, am = _coeffs_at(ctx.problem, z)
    ap = _pfloat(params, "aplus_z", ap)
    am = _pfloat(params, "aminus_z", am)
    if "beta" in params and "nu" in params:
        nu = np.array([float(v) for v in params["nu"].split(":")], dtype=float)
        nu = nu / np.sqrt(np.sum(nu**2))
        return blowup_mod.TwoPlane(
            beta=float(params["beta"]), nu=tuple(nu), z=tuple(z), aplus_z=ap, aminus_z=am
        )
    plane, _, beta_physical = _fit_plane(ctx, z, min(1.0, ctx.grid.radius), ap, am)
    return blowup_mod.TwoPlane(
        beta=beta_physical, nu=plane.nu, z=tuple(z), aplus_z=ap, aminus_z=am
    )


def _audit_cascade(ctx: RunContext, params: dict) -> AuditResult:
    g = ctx.grid
    z = _ppoint(params, "z", g.dim)
    initial = _initial_plane(ctx, params, z)
    trace = blowup_mod.flatness_cascade(
        ctx.field,
        z,
        initial,
        rbar=_pfloat(params, "rbar", 0.25),
        alpha=_pfloat(params, "alpha", 0.5),
        K=_pint(params, "K", 4),
    )
    rows = []
    for (k, nu, deficit), bound in zip(trace.entries, trace.bounds):
        rows.append([k] + [float(c) for c in nu] + [deficit, float(bound)])
    header = ["k"] + ["nu%d" % (a + 1) for a in range(g.dim)] + ["deficit", "bound"]
    return AuditResult(
        name="cascade",
        verdict=trace.verdict,
        metrics={
            "eps": trace.eps,
            "c0_empirical": trace.c0_empirical,
            "steps": len(trace.entries),
            "truncated": trace.truncated,
        },
        tables={"trace": {"header": header, "rows": rows}},
        figures=[{"name": "deficits", "kind": "lines", "table": "trace", "x": "k",
                  "ys": ["deficit", "bound"], "logy": True}],
        note=trace.note,
    )


def _audit_envelope(ctx: RunContext, params: dict) -> AuditResult:
    g = ctx.grid
    z = _ppoint(params, "z", g.dim)
    initial = _initial_plane(ctx, params, z)
    field_u = ctx.field.audit_field() if hasattr(ctx.field, "audit_field") else ctx.field
    v = blowup_mod.rescale(field_u, z, min(1.0, g.radius))
    _, deficit = blowup_mod.fit_two_plane(v, initial.aplus_z, initial.aminus_z)
    curve = fb_mod.extract_level_set(field_u, 0.0)
    rep = blowup_mod.graph_envelope_check(
        curve,
        np.asarray(initial.nu),
        Cenv=_pfloat(params, "Cenv", 2.0),
        beta=initial.beta,
        alpha=_pfloat(params, "alpha", 0.5),
        eps=max(deficit, _pfloat(params, "eps_floor", 1e-14)),
        origin=z,
        slack=_pfloat(params, "slack", 2.0 * g.h),
    )
    return AuditResult(
        name="envelope",
        verdict=rep.verdict,
        metrics={
            "coefficient": rep.coefficient,
            "slack": rep.slack,
            "worst_excess": rep.worst_excess,
            "violations": len(rep.violations),
        },
    )


def _matrix_rows(params: dict, key: str):
    if key not in params:
        return None
    return np.array([[float(v) for v in row.split(",")] for row in params[key].split(";")])


def _audit_matrix(ctx: RunContext, params: dict) -> AuditResult:
    g = ctx.grid
    z = _ppoint(params, "z", g.dim)
    if ctx.problem.matrixP is not None:
        ctx.problem.matrixP.validate_on(g)
    radii = None
    if "rmin" in params or "rmax" in params:
        radii = np.linspace(
            _pfloat(params, "rmin", 8.0 * g.h),
            _pfloat(params, "rmax", g.radius - 2 * g.h),
            _pint(params, "count", 10),
        )
    rep = mx_mod.acf_matrix_audit(
        ctx.field,
        ctx.problem,
        z,
        radii=radii,
        cbar=float(params["cbar"]) if "cbar" in params else None,
        c0=_pfloat(params, "c0", 10.0),
        tol_factor=_pfloat(params, "tol_factor", 1.0),
        aplus_matrix=_matrix_rows(params, "aplus_matrix"),
        aminus_matrix=_matrix_rows(params, "aminus_matrix"),
        affine_diagnostic=params.get("affine", "false").lower() == "true",
    )
    tables = {}
    figures = []
    if rep.radial is not None:
        cols = [rep.radial.radii, rep.radial.phi, rep.radial.phi_corrected]
        header = ["r", "phi", "phi_corrected"]
        if rep.affine_phi is not None:
            cols.append(rep.affine_phi)
            header.append("phi_affine")
        tables["radial"] = _array_table(header, cols)
        figures.append({"name": "phi", "kind": "lines", "table": "radial", "x": "r",
                        "ys": header[1:], "ylabel": "product"})
    metrics = {"kappa": rep.kappa}
    if rep.radial is not None:
        metrics["min_cbar"] = rep.radial.min_cbar
        metrics["delta_tol"] = rep.radial.delta_tol
    return AuditResult(
        name="matrix", verdict=rep.verdict, metrics=metrics,
        tables=tables, figures=figures, note=rep.note,
    )


def _audit_matrix_reduction(ctx: RunContext, params: dict) -> AuditResult:
    if not hasattr(ctx.field, "audit_field"):
        return AuditResult(
            name="matrix_reduction", verdict="NA",
            note="reduction check needs a solved field",
        )
    P = ctx.problem.matrixP
    if P is None or not P.is_identity(ctx.grid):
        return AuditResult(
            name="matrix_reduction", verdict="NA",
            note="reduction check needs the identity matrix factor",
        )
    twin = TwoPhaseProblem(
        aplus=ctx.problem.aplus,
        aminus=ctx.problem.aminus,
        boundary=ctx.problem.boundary,
        lam=ctx.problem.lam,
    )
    schedule = eps_schedule_for(ctx.cfg, ctx.grid)
    sol = continuation_solve(
        twin, ctx.grid, schedule, tol=ctx.cfg.solver_tol, max_iters=ctx.cfg.max_iters
    )
    same = bool(np.array_equal(ctx.field.u.values, sol.u.values))
    if ctx.field.limit is not None and sol.limit is not None:
        same = same and bool(np.array_equal(ctx.field.limit.values, sol.limit.values))
    diff = float(np.max(np.abs(ctx.field.u.values - sol.u.values)))
    return AuditResult(
        name="matrix_reduction",
        verdict="PASS" if same else "FAIL",
        metrics={
            "bit_identical": same,
            "max_abs_diff": diff,
            "iters_matrix": ";".join(str(i) for i in ctx.field.picard_iters),
            "iters_scalar": ";".join(str(i) for i in sol.picard_iters),
        },
    )


AUDIT_RUNNERS = {
    "acf": _audit_acf,
    "fh": _audit_fh,
    "mu": _audit_mu,
    "flux": _audit_flux,
    "classify": _audit_classify,
    "lipschitz": _audit_lipschitz,
    "perimeter": _audit_perimeter,
    "fit": _audit_fit,
    "cascade": _audit_cascade,
    "envelope": _audit_envelope,
    "matrix": _audit_matrix,
    "matrix_reduction": _audit_matrix_reduction,
}


def _solve_case(cfg: ExperimentConfig, cells: int | None = None):
    """Build grid and problem, then solve or sample the manufactured field."""
    grid = grid_for(cfg, cells)
    problem = build_problem(cfg)
    if cfg.manufactured:
        field = boundary_field(problem, grid)
        solve_info = {
            "manufactured": True,
            "max_abs": float(np.max(np.abs(field.values))),
        }
        return grid, problem, field, solve_info
    schedule = eps_schedule_for(cfg, grid)
    sol = continuation_solve(problem, grid, schedule, tol=cfg.solver_tol, max_iters=cfg.max_iters)
    solve_info = {
        "manufactured": False,
        "eps_final": sol.epsilon_final,
        "stages": len(sol.picard_iters),
        "picard_iters": ";".join(str(i) for i in sol.picard_iters),
        "residual": sol.residual,
        "max_principle_excess": sol.max_principle_excess,
    }
    return grid, problem, sol, solve_info


def _run_audits(ctx: RunContext, names, timing: dict) -> list:
    results = []
    for name in names:
        params = ctx.cfg.audit_params.get(name, {})
        t0 = time.perf_counter()
        try:
            result = AUDIT_RUNNERS[name](ctx, params)
        except ValueError as err:
            result = AuditResult(name=name, verdict="NA", note=str(err))
        timing["audit:" + name] = time.perf_counter() - t0
        results.append(result)
    return results


def run_experiment(
    cfg: ExperimentConfig,
    audit_names=None,
    out: str | None = None,
    sweep_cells=None,
    seed: int | None = None,
    emit: bool = True,
    formats=("json", "csv", "text"),
    figures: bool = True,
) -> RunReport:
    """Solve one configured case, run its audits and emit the report."""
    names = tuple(audit_names) if audit_names is not None else cfg.audits
    for name in names:
        if name not in AUDIT_RUNNERS:
            raise ValueError(
                "unknown audit %r; known audits: %s" % (name, ", ".join(AUDIT_RUNNERS))
            )
    timing: dict = {}
    t0 = time.perf_counter()
    grid, problem, field, solve_info = _solve_case(cfg)
    timing["solve"] = time.perf_counter() - t0
    rng = Lcg(seed if seed is not None else cfg.seed)
    ctx = RunContext(cfg=cfg, grid=grid, problem=problem, field=field, rng=rng)
    audits = _run_audits(ctx, names, timing)
    solve_info["h"] = grid.h
    solve_info["cells"] = grid.cells_per_side

    refinement = []
    for cells in sweep_cells or ():
        if cells == grid.cells_per_side:
            sgrid, saudits = grid, audits
        else:
            t0 = time.perf_counter()
            sgrid, sproblem, sfield, _ = _solve_case(cfg, cells)
            timing["sweep:%d:solve" % cells] = time.perf_counter() - t0
            sctx = RunContext(
                cfg=cfg, grid=sgrid, problem=sproblem, field=sfield,
                rng=Lcg(seed if seed is not None else cfg.seed),
            )
            saudits = _run_audits(sctx, names, {})
        row = {"h": sgrid.h, "cells": cells}
        for result in saudits:
            for key in SWEEP_METRICS.get(result.name, ()):
                if key in result.metrics:
                    row["%s.%s" % (result.name, key)] = result.metrics[key]
        refinement.append(row)

    report = RunReport(
        name=cfg.name,
        config=dict(cfg.raw),
        audits=audits,
        solve=solve_info,
        timing=timing,
        refinement=refinement,
    )
    if emit:
        outdir = out if out is not None else os.path.join(cfg.out, cfg.name)
        emit_report(report, outdir, formats=formats, figures=figures)
        field_u = field.audit_field() if hasattr(field, "audit_field") else field
        dump_field(field_u, os.path.join(outdir, "field.txt"))
    return report


def _parse_sweep(spec: str, radius: float) -> list:
    cells = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "/" in item:
            num, den = item.split("/", 1)
            h = float(num) / float(den)
            cells.append(int(round(2.0 * radius / h)))
        else:
            cells.append(int(item))
    if not cells:
        raise ValueError("empty grid sweep")
    return cells


def _packaged_configs() -> list:
    from importlib import resources

    root = resources.files("condjump").joinpath("configs")
    out = []
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".cfg"):
            out.append((entry.name, entry.read_text(encoding="utf-8")))
    return out


def _print_report(report: RunReport):
    for line in report.verdict_lines():
        print("%s: %s" % (report.name, line))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="condjump",
        description="Two-phase conductivity-jump solver and audit driver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("solve", "solve the configured problem and run its audits"),
        ("acf", "radial energy-product audits"),
        ("fb", "free boundary audits"),
        ("blowup", "rescaling audits"),
        ("matrix", "matrix-extension audits"),
        ("suite", "run every packaged experiment config"),
        ("report", "re-emit a stored report.json"),
    ):
        p = sub.add_parser(name, help=blurb)
        if name == "report":
            p.add_argument("--config", required=True, help="path to a stored report.json")
        elif name == "suite":
            p.add_argument("--config", default=None, help="ignored; the suite is packaged")
        else:
            p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--grid-sweep", default=None, help="comma list of h values or cell counts")
        p.add_argument("--seed", type=int, default=None, help="64-bit seed for randomized audits")
    args = parser.parse_args(argv)

    try:
        if args.command == "report":
            report = load_report(args.config)
            outdir = args.out if args.out is not None else os.path.dirname(args.config) or "."
            emit_report(report, outdir)
            _print_report(report)
            return 1 if report.failed() else 0

        if args.command == "suite":
            out_root = args.out or "runs"
            failed = False
            for fname, text in _packaged_configs():
                cfg = load_config(text)
                sweep = _parse_sweep(args.grid_sweep, cfg.radius) if args.grid_sweep else None
                report = run_experiment(
                    cfg,
                    out=os.path.join(out_root, cfg.name),
                    sweep_cells=sweep,
                    seed=args.seed,
                )
                _print_report(report)
                failed = failed or report.failed()
            return 1 if failed else 0

        cfg = load_config(args.config)
        sweep = _parse_sweep(args.grid_sweep, cfg.radius) if args.grid_sweep else None
        report = run_experiment(
            cfg,
            audit_names=SUBCOMMAND_AUDITS[args.command],
            out=args.out,
            sweep_cells=sweep,
            seed=args.seed,
        )
        _print_report(report)
        return 1 if report.failed() else 0
    except (ValueError, OSError) as err:
        print("error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
