"""Regularized solver for div(A(x,u) grad u) = 0 with a conductivity jump.

The discontinuous coefficient A(x,s) = a_-(x) + (a_+(x) - a_-(x)) H(s) is
smoothed by the piecewise-linear ramp psi(t) = clamp(t, 0, 1):

    A_eps(x,s) = a_-(x) + (a_+(x) - a_-(x)) * psi(s / eps),

so psi_eps(0) = 0 and a node sitting exactly on {u = 0} takes the minus-phase
value.  Each Picard step freezes s at the previous iterate and solves the
linear equation with a 5-point (dim 2) / 7-point (dim 3) flux stencil whose
face coefficients are harmonic means of the adjacent nodal values; the system
is symmetric positive definite and is solved by conjugate gradients at 1e-12
relative tolerance (algebraic-multigrid preconditioned when available).

Continuation drives eps down a strictly decreasing schedule with floor 2h:
a narrower ramp makes the Picard map oscillate between sign patterns.  The
one-sided ramp biases the solution by O(eps) even far from the interface (the
ramp carries a net resistance excess relative to the sharp jump), so the
continuation also records the Richardson limit of the last two stages, which
cancels the linear-in-eps bias without dropping eps below the floor.  Audits
that compare against sharp-interface profiles should prefer that limit field.

Problems carrying a matrix conductivity P(x) are assembled instead from the
cell-energy (bilinear Q1) form with 2-point Gauss quadrature and coefficients
averaged to cell centers: a standard 9-point (dim 2) scheme whose
cross-derivative couplings are symmetric by construction.  A matrix model
that is exactly the identity at every node dispatches to the scalar stencil,
so that path is bit-identical to the scalar one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from condjump.field import (
    CoefficientModel,
    Grid,
    ModulusOfContinuity,
    ScalarField,
    cell_average,
    cell_center_mesh,
    cell_gradient,
    combine_moduli,
    sample_coefficient,
    sample_field,
)

CG_RTOL = 1e-12
CG_MAXITER = 20000
EPS_FLOOR_CELLS = 2.0  # eps must span at least this many cells
AMG_MIN_UNKNOWNS = 4096  # below this a plain CG solve is cheaper than AMG setup


class SolverBreakdownError(RuntimeError):
    """Linear solver failed to reach tolerance."""


class PicardNonConvergenceError(RuntimeError):
    """Picard iteration exhausted max_iters; carries the iterate-diff history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class TwoPhaseProblem:
    """Coefficients, optional matrix model, boundary data and ellipticity."""

    aplus: CoefficientModel
    aminus: CoefficientModel
    boundary: Callable
    lam: float
    modulus: Optional[ModulusOfContinuity] = None
    matrixP: Optional[object] = None

    def __post_init__(self):
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        for name, model in (("aplus", self.aplus), ("aminus", self.aminus)):
            if model.lam < self.lam - 1e-12:
                raise ValueError(
                    f"{name} ellipticity {model.lam} is weaker than the problem's {self.lam}"
                )
        if self.modulus is None:
            moduli = [self.aplus.modulus(), self.aminus.modulus()]
            if self.matrixP is not None and hasattr(self.matrixP, "modulus"):
                moduli.append(self.matrixP.modulus())
            object.__setattr__(self, "modulus", combine_moduli(moduli))


@dataclass
class Solution:
    """Solved field plus the convergence record of the run."""

    u: ScalarField
    epsilon_final: float
    picard_iters: list
    residual: float
    iter_diffs: list = dc_field(default_factory=list)  # sup-diffs per stage
    stage_drifts: list = dc_field(default_factory=list)  # L2 drift between stages
    limit: Optional[ScalarField] = None  # Richardson limit over the last two stages
    max_principle_excess: float = 0.0

    def audit_field(self) -> ScalarField:
        """Field the audits should consume: the eps->0 limit when recorded."""
        return self.limit if self.limit is not None else self.u


def smoothed_heaviside(eps: float, s):
    """Ramp psi(s/eps): 0 for s<0, s/eps on [0, eps], 1 for s>eps."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    out = np.clip(np.asarray(s, dtype=float) / eps, 0.0, 1.0)
    return float(out) if np.isscalar(s) else out


@lru_cache(maxsize=64)
def _nodal_coefficients(problem: TwoPhaseProblem, grid: Grid):
    ap = sample_coefficient(problem.aplus, grid).values
    am = sample_coefficient(problem.aminus, grid).values
    return ap, am


def _a_eps(ap, am, u_vals, eps):
    return am + (ap - am) * np.clip(u_vals / eps, 0.0, 1.0)


def boundary_field(problem: TwoPhaseProblem, grid: Grid) -> ScalarField:
    """Boundary data g sampled over the whole grid (only the boundary ring
    enters the solve; the full sample doubles as the initial Picard iterate)."""
    return sample_field(grid, problem.boundary)


def _boundary_mask(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.node_shape, dtype=bool)
    for axis in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[axis] = 0
        mask[tuple(sl)] = True
        sl[axis] = -1
        mask[tuple(sl)] = True
    return mask


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def _interior_index(grid: Grid):
    idx = -np.ones(grid.node_shape, dtype=np.int64)
    interior = (slice(1, -1),) * grid.dim
    n_int = (grid.nodes_per_side - 2) ** grid.dim
    idx[interior] = np.arange(n_int).reshape((grid.nodes_per_side - 2,) * grid.dim)
    return idx, n_int


def _assemble_scalar(A_nodal: np.ndarray, g_vals: np.ndarray, grid: Grid):
    """Flux-form SPD system on interior nodes, harmonic-mean face coefficients."""
    dim, h = grid.dim, grid.h
    scale = h ** (dim - 2)
    idx, n_int = _interior_index(grid)
    interior = (slice(1, -1),) * dim
    idx_int = idx[interior].ravel()

    diag = np.zeros(n_int)
    b = np.zeros(n_int)
    rows, cols, vals = [], [], []
    A_int = A_nodal[interior]
    for axis in range(dim):
        for step in (+1, -1):
            nb = [slice(1, -1)] * dim
            nb[axis] = slice(2, None) if step == +1 else slice(0, -2)
            nb = tuple(nb)
            A_face = (_harmonic(A_int, A_nodal[nb]) * scale).ravel()
            diag += A_face
            nb_idx = idx[nb].ravel()
            inside = nb_idx >= 0
            rows.append(idx_int[inside])
            cols.append(nb_idx[inside])
            vals.append(-A_face[inside])
            np.add.at(b, idx_int[~inside], A_face[~inside] * g_vals[nb].ravel()[~inside])
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_int, n_int),
    ).tocsr()
    K = K + sp.diags(diag)
    return K, b


def _scalar_row_residual(A_nodal, u_vals, grid: Grid) -> np.ndarray:
    """Stencil-row residual of u at every interior node (flux imbalance)."""
    dim, h = grid.dim, grid.h
    scale = h ** (dim - 2)
    interior = (slice(1, -1),) * dim
    A_int = A_nodal[interior]
    u_int = u_vals[interior]
    r = np.zeros_like(u_int)
    for axis in range(dim):
        for step in (+1, -1):
            nb = [slice(1, -1)] * dim
            nb[axis] = slice(2, None) if step == +1 else slice(0, -2)
            nb = tuple(nb)
            r += _harmonic(A_int, A_nodal[nb]) * (u_int - u_vals[nb]) * scale
    return r


# ---------------------------------------------------------------------------
# cell-energy (Q1) assembly for matrix conductivities


def _corner_signs(dim):
    return np.array(list(itertools.product((-1.0, 1.0), repeat=dim)))


@lru_cache(maxsize=8)
def _q1_reference(dim: int):
    """Reference-cell gradient tables B_g (dim x 2^dim) at the 2^dim Gauss points."""
    signs = _corner_signs(dim)  # (2^dim, dim), corner order = C order of offsets
    gauss = _corner_signs(dim) / np.sqrt(3.0)
    tables = []
    for gpt in gauss:
        B = np.empty((dim, signs.shape[0]))
        for c, s in enumerate(signs):
            for a in range(dim):
                val = 0.5 * s[a]
                for b in range(dim):
                    if b != a:
                        val *= 0.5 * (1.0 + gpt[b] * s[b])
                B[a, c] = val
        tables.append(B)
    return tuple(tables)


def _corner_node_ids(grid: Grid):
    """Global node ids of each cell's 2^dim corners, in _corner_signs order."""
    n1 = grid.nodes_per_side
    base = np.arange(n1 - 1)
    grids = np.meshgrid(*([base] * grid.dim), indexing="ij")
    flat0 = np.zeros_like(grids[0])
    strides = [n1 ** (grid.dim - 1 - a) for a in range(grid.dim)]
    for a in range(grid.dim):
        flat0 = flat0 + grids[a] * strides[a]
    ids = []
    for offs in itertools.product((0, 1), repeat=grid.dim):
        off_flat = sum(o * s for o, s in zip(offs, strides))
        ids.append((flat0 + off_flat).ravel())
    return np.stack(ids, axis=0)  # (2^dim, n_cells)


def _assemble_matrix_energy(M_cells: np.ndarray, g_vals: np.ndarray, grid: Grid):
    """Q1 stiffness for cellwise-constant symmetric M; Dirichlet eliminated."""
    dim, h = grid.dim, grid.h
    ncorn = 2**dim
    tables = _q1_reference(dim)
    # local stiffness per cell: (h/2)^dim * sum_g (2/h)^2 B_g^T M B_g
    factor = (h / 2.0) ** dim * (2.0 / h) ** 2
    n_cells_flat = M_cells.reshape(-1, dim, dim)
    local = np.zeros((n_cells_flat.shape[0], ncorn, ncorn))
    for B in tables:
        MB = np.einsum("kab,bj->kaj", n_cells_flat, B)
        local += np.einsum("ai,kaj->kij", B, MB)
    local *= factor

    corner_ids = _corner_node_ids(grid)  # (ncorn, n_cells)
    rows = np.repeat(corner_ids[:, None, :], ncorn, axis=1).ravel()
    cols = np.repeat(corner_ids[None, :, :], ncorn, axis=0).ravel()
    vals = np.moveaxis(local, 0, -1).ravel()
    n_nodes = grid.nodes_per_side**dim
    K_full = sp.coo_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()

    bmask = _boundary_mask(grid).ravel()
    int_ids = np.flatnonzero(~bmask)
    bd_ids = np.flatnonzero(bmask)
    K_ib = K_full[int_ids][:, bd_ids]
    K = K_full[int_ids][:, int_ids]
    b = -K_ib @ g_vals.ravel()[bd_ids]
    return K, b, K_full, int_ids


def _matrix_cells(problem, grid: Grid, u_vals, eps):
    """Cellwise A_eps(x, u) P(x): nodal scalars averaged to cell centers,
    P evaluated at cell centers."""
    ap, am = _nodal_coefficients(problem, grid)
    ap_c = cell_average(ScalarField(grid, ap))
    am_c = cell_average(ScalarField(grid, am))
    u_c = cell_average(ScalarField(grid, u_vals))
    a_eps_c = _a_eps(ap_c, am_c, u_c, eps)
    pts = np.stack(cell_center_mesh(grid), axis=-1)
    P = problem.matrixP.evaluate(pts)
    return a_eps_c[..., None, None] * P


def _uses_matrix_path(problem, grid: Grid) -> bool:
    if problem.matrixP is None:
        return False
    return not problem.matrixP.is_identity(grid)


class _LinearSolver:
    """CG with an optionally reused AMG preconditioner."""

    def __init__(self):
        self._precond = None
        self._precond_n = -1

    def _build_precond(self, K):
        try:
            import pyamg

            # pin the global RNG during setup: the hierarchy's spectral
            # radius estimate starts from a random vector, and identical
            # systems must yield bitwise identical preconditioners
            state = np.random.get_state()
            np.random.seed(1234567)
            try:
                ml = pyamg.smoothed_aggregation_solver(K.tocsr(), max_coarse=64)
            finally:
                np.random.set_state(state)
            self._precond = ml.aspreconditioner(cycle="V")
        except Exception:
            inv_diag = 1.0 / K.diagonal()
            self._precond = spla.LinearOperator(K.shape, lambda x: inv_diag * x)
        self._precond_n = K.shape[0]

    def solve(self, K, b, x0=None):
        n = K.shape[0]
        if n >= AMG_MIN_UNKNOWNS and self._precond_n != n:
            self._build_precond(K)
        M = self._precond if self._precond_n == n else None
        x, info = spla.cg(K, b, x0=x0, rtol=CG_RTOL, atol=0.0, maxiter=CG_MAXITER, M=M)
        if info > 0 and M is not None:
            # stale preconditioner; rebuild once from the current matrix
            self._build_precond(K)
            x, info = spla.cg(
                K, b, x0=x, rtol=CG_RTOL, atol=0.0, maxiter=CG_MAXITER, M=self._precond
            )
        if info != 0:
            raise SolverBreakdownError(f"conjugate gradients failed (info={info})")
        return x

    def invalidate(self):
        self._precond = None
        self._precond_n = -1


def eps_floor(grid: Grid) -> float:
    return EPS_FLOOR_CELLS * grid.h


def picard_solve(
    problem: TwoPhaseProblem,
    grid: Grid,
    eps: float,
    tol: float = 1e-10,
    max_iters: int = 60,
    u0: Optional[ScalarField] = None,
    _linsolver: Optional[_LinearSolver] = None,
) -> Solution:
    """Fixed-point iteration at fixed ramp width eps."""
    if eps < eps_floor(grid) - 1e-12:
        raise ValueError(
            f"eps={eps:g} is below the floor {eps_floor(grid):g} (= 2h); "
            "the ramp must span at least two cells"
        )
    if tol <= 0:
        raise ValueError("tol must be positive")
    ap, am = _nodal_coefficients(problem, grid)
    g = boundary_field(problem, grid)
    bmask = _boundary_mask(grid)
    matrix_path = _uses_matrix_path(problem, grid)
    linsolver = _linsolver or _LinearSolver()

    u_vals = (u0.values if u0 is not None else g.values).copy()
    u_vals[bmask] = g.values[bmask]
    diffs = []
    for _ in range(max_iters):
        if matrix_path:
            M_cells = _matrix_cells(problem, grid, u_vals, eps)
            K, b, _, int_ids = _assemble_matrix_energy(M_cells, g.values, grid)
            x0 = u_vals.ravel()[int_ids]
            x = linsolver.solve(K, b, x0=x0)
            u_new = g.values.copy()
            flat = u_new.ravel()
            flat[int_ids] = x
            u_new = flat.reshape(grid.node_shape)
        else:
            A_nodal = _a_eps(ap, am, u_vals, eps)
            K, b = _assemble_scalar(A_nodal, g.values, grid)
            interior = (slice(1, -1),) * grid.dim
            x0 = u_vals[interior].ravel()
            x = linsolver.solve(K, b, x0=x0)
            u_new = g.values.copy()
            u_new[interior] = x.reshape(u_new[interior].shape)
        diffs.append(float(np.max(np.abs(u_new - u_vals))))
        u_vals = u_new
        if diffs[-1] <= tol:
            break
    else:
        raise PicardNonConvergenceError(
            f"Picard iteration did not reach tol={tol:g} in {max_iters} steps "
            f"(last diff {diffs[-1]:.3e})",
            diffs,
        )

    u = ScalarField(grid, u_vals)
    res = weak_residual(u, problem, eps)
    g_bd = g.values[bmask]
    excess = max(
        float(np.max(u_vals) - np.max(g_bd)), float(np.min(g_bd) - np.min(u_vals)), 0.0
    )
    return Solution(
        u=u,
        epsilon_final=eps,
        picard_iters=[len(diffs)],
        residual=res,
        iter_diffs=[diffs],
        max_principle_excess=excess,
    )


def continuation_solve(
    problem: TwoPhaseProblem,
    grid: Grid,
    eps_schedule,
    tol: float = 1e-10,
    max_iters: int = 60,
) -> Solution:
    """Warm-started Picard solves along a strictly decreasing eps schedule.

    Returns the final stage's Solution; stage_drifts records the L2 distance
    between consecutive stage solutions, and limit holds the Richardson
    extrapolation of the last two stages (equal to u for a 1-entry schedule).
    """
    schedule = [float(e) for e in eps_schedule]
    if not schedule:
        raise ValueError("eps schedule must be nonempty")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"eps schedule must be strictly decreasing, got {schedule}")
    if schedule[-1] < eps_floor(grid) - 1e-12:
        raise ValueError(
            f"final eps {schedule[-1]:g} is below the floor {eps_floor(grid):g}"
        )

    linsolver = _LinearSolver()
    cellvol = grid.h**grid.dim
    sols = []
    drifts = []
    iters = []
    diffs = []
    u_prev = None
    for stage, eps in enumerate(schedule):
        try:
            sol = picard_solve(
                problem, grid, eps, tol=tol, max_iters=max_iters, u0=u_prev,
                _linsolver=linsolver,
            )
        except PicardNonConvergenceError as err:
            raise PicardNonConvergenceError(
                f"continuation stage {stage} (eps={eps:g}) failed: {err}", err.history
            ) from err
        except SolverBreakdownError as err:
            raise SolverBreakdownError(
                f"continuation stage {stage} (eps={eps:g}) failed: {err}"
            ) from err
        if u_prev is not None:
            drift = float(np.sqrt(np.sum((sol.u.values - u_prev.values) ** 2) * cellvol))
            drifts.append(drift)
        sols.append(sol)
        iters.extend(sol.picard_iters)
        diffs.extend(sol.iter_diffs)
        u_prev = sol.u

    final = sols[-1]
    if len(sols) >= 2:
        e1, e2 = schedule[-2], schedule[-1]
        lim_vals = (e1 * sols[-1].u.values - e2 * sols[-2].u.values) / (e1 - e2)
        limit = ScalarField(grid, lim_vals)
    else:
        limit = final.u
    return Solution(
        u=final.u,
        epsilon_final=schedule[-1],
        picard_iters=iters,
        residual=final.residual,
        iter_diffs=diffs,
        stage_drifts=drifts,
        limit=limit,
        max_principle_excess=final.max_principle_excess,
    )


def weak_residual(u: ScalarField, problem: TwoPhaseProblem, eps: float) -> float:
    """Max hat-function residual of the discrete weak form, normalized by
    ||grad u||_L2 * h^{n/2}; identically zero fields return 0."""
    grid = u.grid
    grad_norm = float(np.sqrt(np.sum(cell_gradient(u) ** 2) * grid.h**grid.dim))
    if grad_norm == 0.0:
        return 0.0
    if _uses_matrix_path(problem, grid):
        M_cells = _matrix_cells(problem, grid, u.values, eps)
        _, _, K_full, int_ids = _assemble_matrix_energy(M_cells, u.values, grid)
        r = (K_full @ u.values.ravel())[int_ids]
        rmax = float(np.max(np.abs(r))) if r.size else 0.0
    else:
        ap, am = _nodal_coefficients(problem, grid)
        A_nodal = _a_eps(ap, am, u.values, eps)
        r = _scalar_row_residual(A_nodal, u.values, grid)
        rmax = float(np.max(np.abs(r))) if r.size else 0.0
    return rmax / (grad_norm * grid.h ** (grid.dim / 2.0))
