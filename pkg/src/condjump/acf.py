"""Weighted energy densities and the two-phase monotonicity audit.

For a point z and radius r the weighted Dirichlet energy is

    I(r, z, v) = integral over B_r(z) of |grad v|^2 * |x - z|^(2-n),

so the weight is identically 1 in dimension 2 and 1/|x - z| in dimension 3.
The two-phase product

    Phi(r) = r^(-4) * I(r, z, u+) * I(r, z, u-)

is the quantity audited for monotonicity.  With Hoelder coefficients Phi
itself may lose monotonicity at a rate controlled by the coefficient
modulus; the corrected product exp(cbar * g(r)) * Phi(r) restores it, where
g is the integrated modulus factor produced by :func:`modulus_psi_g`.

The audit works on a discrete grid, so exact monotonicity cannot be
demanded: cells straddling the interface contribute O(h^(1/2)) noise to the
energies.  The verdict therefore tolerates decreases up to
``tol_factor * sqrt(h) * max(Phi)``.

Spherical caps (dimension 2 only) are measured by sampling the circle of
radius r and locating arcs where the phase is positive.  The cap
characteristic of an arc of opening theta is beta = pi / theta, and the
associated eigenvalue is lambda = beta^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from condjump.field import (
    ModulusOfContinuity,
    ScalarField,
    cell_ball_weights,
    cell_center_mesh,
    cell_gradient,
    interpolate,
    l2_ball_norm,
    require_ball_inside,
)

MIN_CIRCLE_SAMPLES = 64
CBAR_SEARCH_MAX = 1e8


class EmptyCapError(ValueError):
    """Raised when a requested spherical cap contains no positivity set."""


@dataclass
class CapResult:
    """Largest positive arc of one phase on a circle.

    theta is the arc opening angle, beta = pi / theta the cap characteristic
    and lam = beta^2 the cap eigenvalue.  arcs counts the disjoint positive
    arcs found (multi-arc configurations keep only the largest).  degenerate
    flags arcs thinner than the angular resolution of the grid.
    """

    beta: float
    theta: float
    lam: float
    arcs: int
    degenerate: bool


@dataclass
class FriedlandHaymanResult:
    radii: np.ndarray
    beta_sums: np.ndarray
    tolerances: np.ndarray
    verdict: str
    note: str = ""


@dataclass
class RadialReport:
    """Radial profile of the two-phase energies around a point.

    beta arrays are populated in dimension 2 and hold NaN where a phase has
    no positivity set on the corresponding circle.  The audit fields record
    the monotonicity verdict for the corrected product, the tolerance used,
    the largest fixing constant diagnostics and the product-to-norm ratio.
    """

    z: tuple
    radii: np.ndarray
    Iplus: np.ndarray
    Iminus: np.ndarray
    phi: np.ndarray
    phi_corrected: np.ndarray
    beta_plus: np.ndarray
    beta_minus: np.ndarray
    cbar: float
    verdict: str = ""
    delta_tol: float = 0.0
    min_cbar: float = 0.0
    prop_ratio: np.ndarray = dataclass_field(default_factory=lambda: np.zeros(0))
    prop_ratio_max: float = 0.0

    def to_csv(self, target) -> None:
        """Write one row per radius with a fixed header line."""
        header = "r,Iplus,Iminus,phi,phi_corrected,beta_plus,beta_minus"
        rows = np.column_stack(
            [
                self.radii,
                self.Iplus,
                self.Iminus,
                self.phi,
                self.phi_corrected,
                self.beta_plus,
                self.beta_minus,
            ]
        )
        if hasattr(target, "write"):
            target.write(header + "\n")
            for row in rows:
                target.write(",".join("%.12e" % v for v in row) + "\n")
        else:
            with open(target, "w", encoding="ascii") as fh:
                self.to_csv(fh)


def modulus_psi_g(modulus: ModulusOfContinuity, r) -> tuple:
    """Modulus compounding factor psi and its radial integral g.

    With omega(r) = omega0 * r^alpha and D(r) = omega(r) / alpha,

        psi(r) = omega(r) + D(r) + D(r)^2
        g(r)   = integral of psi(t) dt from 0 to r.

    Both are returned; inputs may be scalars or arrays with entries in
    (0, 1).
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0.0) or np.any(r_arr >= 1.0):
        raise ValueError("modulus factors are defined for radii in (0, 1)")
    w0 = modulus.omega0
    alpha = modulus.alpha
    d = w0 * r_arr**alpha / alpha
    psi = w0 * r_arr**alpha + d + d**2
    g = (
        w0 * (1.0 + 1.0 / alpha) * r_arr ** (1.0 + alpha) / (1.0 + alpha)
        + (w0 / alpha) ** 2 * r_arr ** (1.0 + 2.0 * alpha) / (1.0 + 2.0 * alpha)
    )
    if np.isscalar(r) or np.ndim(r) == 0:
        return float(psi), float(g)
    return psi, g


def weighted_energy(u: ScalarField, z, r: float) -> float:
    """Weighted Dirichlet energy of u over the ball B_r(z).

    The integrand |grad u|^2 * |x - z|^(2-n) is accumulated over cell
    centers with partial-volume weights at the ball boundary.  The radius
    must be at least 4h so that the ball spans a few cells.
    """
    g = u.grid
    z_arr = np.asarray(z, dtype=float)
    require_ball_inside(g, z_arr, r)
    if r < 4.0 * g.h - 1e-12:
        raise ValueError("energy radius must be at least 4 grid cells")
    weights = cell_ball_weights(g, z_arr, r)
    grads = cell_gradient(u)
    dens = np.zeros(g.cell_shape)
    for a in range(g.dim):
        dens += grads[a] ** 2
    if g.dim == 3:
        centers = np.stack(cell_center_mesh(g), axis=-1)
        dist = np.sqrt(np.sum((centers - z_arr) ** 2, axis=-1))
        dens = dens / np.maximum(dist, 0.5 * g.h)
    return float(np.sum(weights * dens))


def _split_phases(u: ScalarField) -> tuple:
    uplus = ScalarField(u.grid, np.maximum(u.values, 0.0))
    uminus = ScalarField(u.grid, np.maximum(-u.values, 0.0))
    return uplus, uminus


def acf_phi(uplus: ScalarField, uminus: ScalarField, z, r: float) -> float:
    """Two-phase energy product r^(-4) * I(r, z, u+) * I(r, z, u-).

    The phases must have disjoint supports: the nodewise product
    uplus * uminus has to vanish within rounding tolerance.
    """
    if uplus.grid != uminus.grid:
        raise ValueError("phase fields must share one grid")
    overlap = uplus.values * uminus.values
    scale = max(float(np.max(np.abs(uplus.values))), 1.0) * max(
        float(np.max(np.abs(uminus.values))), 1.0
    )
    bad = np.abs(overlap) > 1e-10 * scale
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        axis = uplus.grid.axis()
        coord = np.array([axis[i] for i in idx])
        raise ValueError(
            "phase supports overlap on %d nodes, first near %s"
            % (int(np.sum(bad)), np.array2string(coord, precision=4))
        )
    ip = weighted_energy(uplus, z, r)
    im = weighted_energy(uminus, z, r)
    return float(r ** (-4.0) * ip * im)


def _largest_true_run(mask: np.ndarray) -> tuple:
    """Return (start, length, runs) of the largest circular run of True."""
    m = int(mask.size)
    if not np.any(mask):
        return 0, 0, 0
    if np.all(mask):
        return 0, m, 1
    # rotate so that index 0 is False, making runs non-wrapping
    first_false = int(np.argmin(mask))
    rolled = np.roll(mask, -first_false)
    padded = np.concatenate([[False], rolled, [False]])
    diff = np.diff(padded.astype(np.int8))
    starts = np.nonzero(diff == 1)[0]
    ends = np.nonzero(diff == -1)[0]
    lengths = ends - starts
    k = int(np.argmax(lengths))
    return (int(starts[k]) + first_false) % m, int(lengths[k]), int(len(starts))


def cap_characteristic(u: ScalarField, z, r: float, sign: int = 1) -> CapResult:
    """Cap characteristic of one phase on the circle of radius r around z.

    Dimension 2 only.  The circle is sampled with at least 64 points (more
    when the grid resolves finer detail), field values come from bilinear
    interpolation, and the largest arc where sign*u > 0 is measured.  Arc
    endpoints are refined by linear interpolation between samples.  Raises
    EmptyCapError when the phase has no positivity set on the circle.
    """
    g = u.grid
    if g.dim != 2:
        raise ValueError("cap characteristics are implemented in dimension 2")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    z_arr = np.asarray(z, dtype=float)
    require_ball_inside(g, z_arr, r)
    m = max(MIN_CIRCLE_SAMPLES, 4 * int(np.ceil(2.0 * np.pi * r / g.h)))
    angles = 2.0 * np.pi * np.arange(m) / m
    pts = z_arr + r * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    vals = sign * interpolate(u, pts)
    mask = vals > 0.0
    start, length, runs = _largest_true_run(mask)
    if length == 0:
        raise EmptyCapError(
            "phase %+d has no positivity set on the circle r=%.4g" % (sign, r)
        )
    dtheta = 2.0 * np.pi / m
    if length == m:
        theta = 2.0 * np.pi
    else:
        # refine both endpoints by the linear zero crossing between samples
        lo_out = (start - 1) % m
        hi_in = (start + length - 1) % m
        hi_out = (start + length) % m
        v_lo_out, v_lo_in = vals[lo_out], vals[start]
        v_hi_in, v_hi_out = vals[hi_in], vals[hi_out]
        ext_lo = v_lo_in / (v_lo_in - v_lo_out) if v_lo_in != v_lo_out else 0.0
        ext_hi = v_hi_in / (v_hi_in - v_hi_out) if v_hi_in != v_hi_out else 0.0
        theta = dtheta * (length - 1 + min(max(ext_lo, 0.0), 1.0) + min(max(ext_hi, 0.0), 1.0))
    theta = min(theta, 2.0 * np.pi)
    beta = np.pi / theta
    degenerate = theta < 8.0 * g.h / r
    return CapResult(
        beta=float(beta),
        theta=float(theta),
        lam=float(beta * beta),
        arcs=runs,
        degenerate=bool(degenerate),
    )


def friedland_hayman_check(u: ScalarField, z, radii) -> FriedlandHaymanResult:
    """Check beta+ + beta- >= 2 on circles, up to the grid resolution.

    The tolerance at radius r is 8h/r.  When one phase has an empty cap at
    some radius the verdict is NA and the note records the radius.
    """
    radii_arr = np.asarray(radii, dtype=float)
    sums = np.full(radii_arr.shape, np.nan)
    tols = 8.0 * u.grid.h / radii_arr
    for i, r in enumerate(radii_arr):
        try:
            cp = cap_characteristic(u, z, float(r), 1)
            cm = cap_characteristic(u, z, float(r), -1)
        except EmptyCapError as err:
            return FriedlandHaymanResult(
                radii=radii_arr,
                beta_sums=sums,
                tolerances=tols,
                verdict="NA",
                note="empty cap at r=%.4g: %s" % (r, err),
            )
        sums[i] = cp.beta + cm.beta
    ok = np.all(sums >= 2.0 - tols)
    return FriedlandHaymanResult(
        radii=radii_arr,
        beta_sums=sums,
        tolerances=tols,
        verdict="PASS" if ok else "FAIL",
    )


def _min_fixing_cbar(phi: np.ndarray, g_vals: np.ndarray, delta_tol: float) -> float:
    """Smallest cbar for which exp(cbar*g)*phi is monotone up to delta_tol."""

    def monotone(c: float) -> bool:
        corr = np.exp(c * g_vals) * phi
        return bool(np.all(np.diff(corr) >= -delta_tol))

    if monotone(0.0):
        return 0.0
    hi = 1.0
    while not monotone(hi):
        hi *= 2.0
        if hi > CBAR_SEARCH_MAX:
            return float("inf")
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if monotone(mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


def monotonicity_audit(
    u,
    problem=None,
    z=(0.0, 0.0),
    radii=None,
    cbar: float | None = None,
    c0: float = 10.0,
    tol_factor: float = 1.0,
) -> RadialReport:
    """Audit the corrected two-phase product for monotonicity in r.

    u may be a ScalarField or a solver Solution (its audit field is used).
    The phases are the positive and negative parts of u.  The correction
    exponent uses the coefficient modulus from the problem when given, and
    cbar defaults to 4*c0.  The verdict is PASS when every increment of the
    corrected product is at least -delta_tol with
    delta_tol = tol_factor * sqrt(h) * max(phi).
    """
    field_u = u.audit_field() if hasattr(u, "audit_field") else u
    grid = field_u.grid
    z_arr = np.asarray(z, dtype=float)
    if radii is None:
        r_hi = grid.radius - float(np.max(np.abs(z_arr))) - 2.0 * grid.h
        radii = np.linspace(max(6.0 * grid.h, r_hi / 8.0), r_hi, 12)
    radii_arr = np.asarray(radii, dtype=float)
    if radii_arr.size < 2 or np.any(np.diff(radii_arr) <= 0.0):
        raise ValueError("need at least two strictly increasing radii")
    if np.any(radii_arr < 4.0 * grid.h - 1e-12):
        raise ValueError("radii must be at least 4 grid cells")
    if np.any(radii_arr > grid.radius - 2.0 * grid.h + 1e-12):
        raise ValueError("radii must stay 2 cells inside the domain box")

    uplus, uminus = _split_phases(field_u)
    nr = radii_arr.size
    iplus = np.zeros(nr)
    iminus = np.zeros(nr)
    for i, r in enumerate(radii_arr):
        iplus[i] = weighted_energy(uplus, z_arr, float(r))
        iminus[i] = weighted_energy(uminus, z_arr, float(r))
    phi = radii_arr ** (-4.0) * iplus * iminus

    if problem is not None and problem.modulus is not None:
        modulus = problem.modulus
    else:
        modulus = ModulusOfContinuity(0.0, 1.0)
    _, g_vals = modulus_psi_g(modulus, np.clip(radii_arr, 1e-12, 1.0 - 1e-12))
    g_vals = np.asarray(g_vals, dtype=float)
    if cbar is None:
        cbar = 4.0 * c0
    phi_corr = np.exp(cbar * g_vals) * phi

    max_phi = float(np.max(phi))
    delta_tol = tol_factor * np.sqrt(grid.h) * max_phi
    ok = np.all(np.diff(phi_corr) >= -delta_tol)

    beta_p = np.full(nr, np.nan)
    beta_m = np.full(nr, np.nan)
    if grid.dim == 2:
        for i, r in enumerate(radii_arr):
            try:
                beta_p[i] = cap_characteristic(field_u, z_arr, float(r), 1).beta
            except EmptyCapError:
                pass
            try:
                beta_m[i] = cap_characteristic(field_u, z_arr, float(r), -1).beta
            except EmptyCapError:
                pass

    # product-to-norm ratio: phi against the squared phase norms on the
    # largest audited ball, a scale-free sanity diagnostic
    r_norm = float(radii_arr[-1])
    np_sq = l2_ball_norm(uplus, z_arr, r_norm) ** 2
    nm_sq = l2_ball_norm(uminus, z_arr, r_norm) ** 2
    denom = np_sq * nm_sq
    if denom > 0.0:
        ratio = phi * radii_arr**4 / denom
    else:
        ratio = np.zeros(nr)

    return RadialReport(
        z=tuple(float(v) for v in z_arr),
        radii=radii_arr,
        Iplus=iplus,
        Iminus=iminus,
        phi=phi,
        phi_corrected=phi_corr,
        beta_plus=beta_p,
        beta_minus=beta_m,
        cbar=float(cbar),
        verdict="PASS" if ok else "FAIL",
        delta_tol=float(delta_tol),
        min_cbar=_min_fixing_cbar(phi, g_vals, delta_tol),
        prop_ratio=ratio,
        prop_ratio_max=float(np.max(ratio)),
    )
