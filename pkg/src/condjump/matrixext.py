"""Matrix conductivities A(x) = a(x) P(x) and the generalized product audit.

The scalar solver extends to symmetric matrix coefficients when both phases
share one matrix factor P(x): the jump stays scalar, A+(x) = a+(x) P(x) and
A-(x) = a-(x) P(x).  The monotonicity audit of the two-phase energy product
carries over verbatim provided the frozen coefficient matrices at the audit
center are proportional, A+(z) = kappa A-(z); the audit refuses (verdict
NA) when proportionality fails, because the underlying statement does not
apply there.

The weighted energies keep the isotropic weight |x - z|^(2-n) of the scalar
case.  An anisotropic weight adapted to P(z) would be a plausible
alternative; the report notes this choice, and an optional diagnostic
re-evaluates the product after the affine change x -> P(z)^(-1/2) x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from condjump.acf import RadialReport, monotonicity_audit
from condjump.field import (
    CoefficientModel,
    Grid,
    ModulusOfContinuity,
    ScalarField,
    combine_moduli,
    interpolate,
    node_mesh,
)
from condjump.solver import TwoPhaseProblem


class ProportionalityFailure(ValueError):
    """A+(z) is not a scalar multiple of A-(z)."""


def _check_symmetric(mat: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(mat, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("%s must be a square matrix" % what)
    if not np.allclose(arr, arr.T, rtol=0.0, atol=1e-12 * max(1.0, np.max(np.abs(arr)))):
        raise ValueError("%s must be symmetric" % what)
    return 0.5 * (arr + arr.T)


@dataclass(frozen=True)
class MatrixModel:
    """Symmetric matrix factor P(x): constant, or identity plus a Hoelder
    bump c |x - x0|^alpha S with a fixed symmetric S.

    lam is the ellipticity band: every P(x) must satisfy
    lam I <= P(x) <= (1/lam) I, verified nodewise by eigenvalue bounds via
    validate_on(grid).
    """

    kind: str
    lam: float
    matrix: tuple = ()
    c: float = 0.0
    alpha: float = 1.0
    x0: tuple = ()
    S: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "hoelder"):
            raise ValueError(f"unknown matrix model kind {self.kind!r}")
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.kind == "constant":
            arr = _check_symmetric(np.asarray(self.matrix, dtype=float), "constant P")
            eigs = np.linalg.eigvalsh(arr)
            if eigs[0] < self.lam - 1e-12 or eigs[-1] > 1.0 / self.lam + 1e-12:
                raise ValueError(
                    "constant P eigenvalues [%g, %g] exit the band [%g, %g]"
                    % (eigs[0], eigs[-1], self.lam, 1.0 / self.lam)
                )
            object.__setattr__(
                self, "matrix", tuple(tuple(float(v) for v in row) for row in arr)
            )
        else:
            if not (0.0 < self.alpha <= 1.0):
                raise ValueError(f"hoelder alpha must lie in (0, 1], got {self.alpha}")
            s_arr = _check_symmetric(np.asarray(self.S, dtype=float), "perturbation S")
            object.__setattr__(
                self, "S", tuple(tuple(float(v) for v in row) for row in s_arr)
            )
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @property
    def dim(self) -> int:
        return len(self.matrix) if self.kind == "constant" else len(self.S)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """P at points of shape (..., dim); result shape (..., dim, dim)."""
        pts = np.asarray(points, dtype=float)
        d = pts.shape[-1]
        if d != self.dim:
            raise ValueError("point dimension %d does not match P (%d)" % (d, self.dim))
        if self.kind == "constant":
            base = np.asarray(self.matrix)
            return np.broadcast_to(base, pts.shape[:-1] + (d, d)).copy()
        x0 = np.asarray(self.x0 if self.x0 else (0.0,) * d, dtype=float)
        dist = np.sqrt(np.sum((pts - x0) ** 2, axis=-1))
        bump = self.c * dist**self.alpha
        eye = np.eye(d)
        s_arr = np.asarray(self.S)
        return eye + bump[..., None, None] * s_arr

    def is_identity(self, grid: Grid) -> bool:
        """True when P is exactly the identity at every point."""
        if self.kind == "constant":
            return bool(np.array_equal(np.asarray(self.matrix), np.eye(self.dim)))
        return self.c == 0.0 or np.all(np.asarray(self.S) == 0.0)

    def modulus(self) -> ModulusOfContinuity:
        if self.kind == "constant":
            return ModulusOfContinuity(0.0, 1.0)
        s_norm = float(np.linalg.norm(np.asarray(self.S), 2))
        return ModulusOfContinuity(abs(self.c) * s_norm, self.alpha)

    def validate_on(self, grid: Grid) -> None:
        """Check the eigenvalue band of P at every node of the grid."""
        if grid.dim != self.dim:
            raise ValueError("grid dimension %d does not match P (%d)" % (grid.dim, self.dim))
        mats = self.evaluate(np.stack(node_mesh(grid), axis=-1))
        eigs = np.linalg.eigvalsh(mats.reshape(-1, self.dim, self.dim))
        lo, hi = float(np.min(eigs)), float(np.max(eigs))
        if lo < self.lam - 1e-12 or hi > 1.0 / self.lam + 1e-12:
            raise ValueError(
                "P eigenvalue range [%g, %g] exits the band [%g, %g] on the grid"
                % (lo, hi, self.lam, 1.0 / self.lam)
            )


def matrix_problem(
    aplus: CoefficientModel,
    aminus: CoefficientModel,
    P: MatrixModel,
    boundary,
) -> TwoPhaseProblem:
    """Two-phase problem with fluxes a_eps(x, u) P(x) grad u.

    The ellipticity band is shared: lam is the smallest of the three
    models' constants.
    """
    lam = min(aplus.lam, aminus.lam, P.lam)
    return TwoPhaseProblem(
        aplus=aplus,
        aminus=aminus,
        boundary=boundary,
        lam=lam,
        modulus=combine_moduli([aplus.modulus(), aminus.modulus(), P.modulus()]),
        matrixP=P,
    )


def kappa_check(A_plus0, A_minus0) -> float:
    """Proportionality constant of the frozen matrices, or a failure.

    Returns kappa = trace(A+)/trace(A-) provided the Frobenius residual
    ||A+ - kappa A-|| is at most 1e-10 ||A+||; raises
    ProportionalityFailure naming the residual otherwise.
    """
    ap = _check_symmetric(A_plus0, "A_plus0")
    am = _check_symmetric(A_minus0, "A_minus0")
    for name, arr in (("A_plus0", ap), ("A_minus0", am)):
        if np.min(np.linalg.eigvalsh(arr)) <= 0.0:
            raise ValueError("%s must be positive definite" % name)
    kappa = float(np.trace(ap) / np.trace(am))
    residual = float(np.linalg.norm(ap - kappa * am))
    if residual > 1e-10 * float(np.linalg.norm(ap)):
        raise ProportionalityFailure(
            "A_plus(z) is not proportional to A_minus(z): residual norm %.3e" % residual
        )
    return kappa


@dataclass
class MatrixAuditReport:
    """Monotonicity audit of a matrix-problem solution.

    radial is None when the audit was refused; kappa is NaN in that case.
    affine_phi holds the optional diagnostic product after the change of
    variables x -> P(z)^(-1/2) x (NaN where the transformed ball leaves the
    grid).
    """

    verdict: str
    kappa: float
    note: str
    radial: RadialReport | None = None
    affine_phi: np.ndarray | None = None


WEIGHT_NOTE = (
    "energy weight kept isotropic |x-z|^(2-n); the P(z)-adapted anisotropic "
    "weight is a flagged alternative"
)


def _affine_phi_diagnostic(field_u: ScalarField, problem, z, radii) -> np.ndarray:
    """Product re-evaluated after x -> P(z)^(-1/2) x around z."""
    from condjump.acf import acf_phi

    g = field_u.grid
    z_arr = np.asarray(z, dtype=float)
    P_z = problem.matrixP.evaluate(z_arr)
    eigval, eigvec = np.linalg.eigh(P_z)
    sqrt_P = eigvec @ np.diag(np.sqrt(eigval)) @ eigvec.T
    stretch = float(np.max(np.sqrt(eigval)))
    pts = np.stack(node_mesh(g), axis=-1)
    mapped = z_arr + (pts @ sqrt_P.T)
    ok = np.max(np.abs(mapped)) <= g.radius
    if not ok:
        inside = np.all(np.abs(mapped) <= g.radius, axis=-1)
        mapped = np.where(inside[..., None], mapped, 0.0)
    vals = interpolate(field_u, mapped)
    v = ScalarField(g, vals)
    vplus = ScalarField(g, np.maximum(v.values, 0.0))
    vminus = ScalarField(g, np.maximum(-v.values, 0.0))
    out = np.full(len(radii), np.nan)
    for i, r in enumerate(np.asarray(radii, dtype=float)):
        if stretch * r <= g.radius - 2.0 * g.h:
            out[i] = acf_phi(vplus, vminus, (0.0,) * g.dim, float(r))
    return out


def acf_matrix_audit(
    solution,
    problem,
    z,
    radii=None,
    cbar: float | None = None,
    c0: float = 10.0,
    tol_factor: float = 1.0,
    aplus_matrix=None,
    aminus_matrix=None,
    affine_diagnostic: bool = False,
) -> MatrixAuditReport:
    """Two-phase product monotonicity audit for matrix problems.

    The frozen matrices at z default to a+(z) P(z) and a-(z) P(z); explicit
    overrides allow auditing externally supplied matrix pairs.  When the
    proportionality A+(z) = kappa A-(z) fails the audit is refused with
    verdict NA.  Otherwise the scalar audit runs unchanged on the solution
    field and the report carries kappa.
    """
    field_u = solution.audit_field() if hasattr(solution, "audit_field") else solution
    z_arr = np.asarray(z, dtype=float)
    if aplus_matrix is None or aminus_matrix is None:
        P = problem.matrixP
        if P is None:
            P_z = np.eye(field_u.grid.dim)
        else:
            P_z = P.evaluate(z_arr)
        ap_z = float(problem.aplus.evaluate(z_arr[None, :])[0])
        am_z = float(problem.aminus.evaluate(z_arr[None, :])[0])
        A_plus0 = ap_z * P_z if aplus_matrix is None else np.asarray(aplus_matrix, dtype=float)
        A_minus0 = am_z * P_z if aminus_matrix is None else np.asarray(aminus_matrix, dtype=float)
    else:
        A_plus0 = np.asarray(aplus_matrix, dtype=float)
        A_minus0 = np.asarray(aminus_matrix, dtype=float)
    try:
        kappa = kappa_check(A_plus0, A_minus0)
    except ProportionalityFailure as err:
        return MatrixAuditReport(
            verdict="NA",
            kappa=float("nan"),
            note="%s; %s" % (err, WEIGHT_NOTE),
        )
    radial = monotonicity_audit(
        field_u, problem, z=z, radii=radii, cbar=cbar, c0=c0, tol_factor=tol_factor
    )
    affine = None
    if affine_diagnostic and problem.matrixP is not None:
        affine = _affine_phi_diagnostic(field_u, problem, z_arr, radial.radii)
    return MatrixAuditReport(
        verdict=radial.verdict,
        kappa=kappa,
        note=WEIGHT_NOTE,
        radial=radial,
        affine_phi=affine,
    )
