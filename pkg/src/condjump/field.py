"""Uniform Cartesian grids and the field primitives shared by every audit.

The computational domain is the closed box [-radius, radius]^dim.  The number
of cells per side is even, so the origin is always a node and every node
coordinate is an exact integer multiple of the spacing h; rescaling centers
and weighted energies are anchored at nodes.  Ball geometry never enters the
stencils: it appears only through quadrature weights (the fraction of each
cell inside the ball, estimated with 4^dim midpoint subsamples) and through
boundary data.

Two quadrature flavours are provided.  Node quadrature weights each node by
the portion of its dual cell (the h-box centered at the node) inside the
ball; it backs L2 norms of nodal fields.  Cell quadrature evaluates
integrands at cell centers, which is what the weighted energies use: the
center of any cell sits at offset h/2 from every surrounding node, so a
singular radial weight anchored at a node is never evaluated at its
singularity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

SUPPORTED_DIMS = (2, 3)
MIN_CELLS_PER_SIDE = 16
SUBSAMPLES_PER_AXIS = 4  # 4^dim subsamples per cell for ball fractions

SMOOTH_EXPRESSIONS: dict[str, Callable] = {
    # registry of smooth-analytic coefficient perturbations, by id
    "sine": lambda pts, c: c * np.prod(np.sin(np.pi * pts), axis=-1),
    "gauss": lambda pts, c: c * np.exp(-4.0 * np.sum(pts**2, axis=-1)),
}


@dataclass(frozen=True)
class Grid:
    """Uniform node lattice over [-radius, radius]^dim with spacing h."""

    dim: int
    radius: float
    cells_per_side: int

    @property
    def h(self) -> float:
        return 2.0 * self.radius / self.cells_per_side

    @property
    def nodes_per_side(self) -> int:
        return self.cells_per_side + 1

    @property
    def node_shape(self) -> tuple:
        return (self.nodes_per_side,) * self.dim

    @property
    def cell_shape(self) -> tuple:
        return (self.cells_per_side,) * self.dim

    def axis(self) -> np.ndarray:
        # exact integer multiples of h; origin is the middle entry
        k = np.arange(self.nodes_per_side) - self.cells_per_side // 2
        return k * self.h

    def cell_axis(self) -> np.ndarray:
        # cell centers, offset h/2 from the node lattice
        return self.axis()[:-1] + 0.5 * self.h


def build_grid(dim: int, radius: float, cells_per_side: int) -> Grid:
    """Validated Grid constructor; cells_per_side must be even and >= 16."""
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"dim must be one of {SUPPORTED_DIMS}, got {dim}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if cells_per_side % 2 != 0:
        raise ValueError(
            f"cells_per_side must be even so the origin is a node, got {cells_per_side}"
        )
    if cells_per_side < MIN_CELLS_PER_SIDE:
        raise ValueError(
            f"cells_per_side must be >= {MIN_CELLS_PER_SIDE}, got {cells_per_side}"
        )
    return Grid(dim=dim, radius=float(radius), cells_per_side=int(cells_per_side))


@lru_cache(maxsize=32)
def node_mesh(grid: Grid) -> tuple:
    """Per-axis node coordinate arrays broadcast to the full lattice."""
    ax = grid.axis()
    return tuple(np.meshgrid(*([ax] * grid.dim), indexing="ij"))


@lru_cache(maxsize=32)
def cell_center_mesh(grid: Grid) -> tuple:
    ax = grid.cell_axis()
    return tuple(np.meshgrid(*([ax] * grid.dim), indexing="ij"))


@dataclass(frozen=True)
class ScalarField:
    """Nodal values of u, a coefficient, or a test function on a Grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.node_shape:
            raise ValueError(
                f"values shape {vals.shape} does not match grid nodes {self.grid.node_shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite (NaN/Inf rejected)")
        object.__setattr__(self, "values", vals)


def sample_field(grid: Grid, fn: Callable) -> ScalarField:
    """Sample fn(x1, ..., xdim) at every node."""
    vals = np.asarray(fn(*node_mesh(grid)), dtype=float)
    vals = np.broadcast_to(vals, grid.node_shape).copy()
    return ScalarField(grid, vals)


@dataclass(frozen=True)
class ModulusOfContinuity:
    """Concave power modulus omega(r) = omega0 * r^alpha with finite Dini integral."""

    omega0: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.omega0 < 0.0:
            raise ValueError(f"omega0 must be nonnegative, got {self.omega0}")

    def omega(self, r):
        return self.omega0 * np.asarray(r, dtype=float) ** self.alpha


@dataclass(frozen=True)
class CoefficientModel:
    """Scalar conductivity model: constant, hoelder, or a registered smooth bump.

    kinds:
      constant          a(x) = a0
      hoelder           a(x) = a0 + c * |x - x0|^alpha
      smooth            a(x) = a0 + <registered expression>(x; c)
    lam is the ellipticity constant: sampled values must stay in [lam, 1/lam].
    """

    kind: str
    a0: float
    lam: float
    c: float = 0.0
    x0: tuple = ()
    alpha: float = 1.0
    expr: str = ""

    def __post_init__(self):
        if self.kind not in ("constant", "hoelder", "smooth"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.kind == "hoelder" and not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"hoelder alpha must lie in (0, 1], got {self.alpha}")
        if self.kind == "smooth" and self.expr not in SMOOTH_EXPRESSIONS:
            raise ValueError(
                f"unknown smooth expression id {self.expr!r}; "
                f"known: {sorted(SMOOTH_EXPRESSIONS)}"
            )

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., dim)."""
        pts = np.asarray(points, dtype=float)
        if self.kind == "constant":
            return np.full(pts.shape[:-1], self.a0)
        if self.kind == "hoelder":
            x0 = np.asarray(self.x0 if self.x0 else (0.0,) * pts.shape[-1])
            dist = np.sqrt(np.sum((pts - x0) ** 2, axis=-1))
            return self.a0 + self.c * dist**self.alpha
        return self.a0 + SMOOTH_EXPRESSIONS[self.expr](pts, self.c)

    def modulus(self) -> ModulusOfContinuity:
        """A modulus dominating |a(x)-a(y)| over the domain."""
        if self.kind == "constant":
            return ModulusOfContinuity(0.0, 1.0)
        if self.kind == "hoelder":
            # | |x-x0|^a - |y-x0|^a | <= |x-y|^a by concavity
            return ModulusOfContinuity(abs(self.c), self.alpha)
        # registered expressions are smooth; pi*|c|*sqrt(dim) bounds the sine
        # gradient and 4|c| the gaussian's, so take the larger Lipschitz bound
        return ModulusOfContinuity(4.0 * abs(self.c), 1.0)


def combine_moduli(moduli) -> ModulusOfContinuity:
    """Smallest closed-form power modulus dominating all of the given ones
    on radii up to 2 (the domain diameter scale)."""
    active = [m for m in moduli if m.omega0 > 0.0]
    if not active:
        return ModulusOfContinuity(0.0, 1.0)
    alpha = min(m.alpha for m in active)
    omega0 = max(m.omega0 * 2.0 ** (m.alpha - alpha) for m in active)
    return ModulusOfContinuity(omega0, alpha)


def sample_coefficient(model: CoefficientModel, grid: Grid) -> ScalarField:
    """Nodal coefficient values; rejects models leaving [lam, 1/lam] on the grid."""
    pts = np.stack(node_mesh(grid), axis=-1)
    vals = model.evaluate(pts)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if lo < model.lam - 1e-12 or hi > 1.0 / model.lam + 1e-12:
        raise ValueError(
            f"coefficient range [{lo:.6g}, {hi:.6g}] exits the ellipticity band "
            f"[{model.lam:.6g}, {1.0 / model.lam:.6g}]"
        )
    return ScalarField(grid, vals)


def gradient_field(u: ScalarField) -> np.ndarray:
    """Nodal gradient, shape (dim, *nodes): central differences in the
    interior, one-sided at the box boundary; exact on affine fields."""
    grads = np.gradient(u.values, u.grid.h, edge_order=2)
    if u.grid.dim == 1:
        grads = [grads]
    return np.stack(grads, axis=0)


def cell_gradient(u: ScalarField) -> np.ndarray:
    """Per-cell gradient, shape (dim, *cells): each component averages the
    edge differences of the cell, which is exact for fields linear on the
    cell and keeps kinks aligned with grid lines out of neighbouring cells."""
    v = u.values
    h = u.grid.h
    dim = u.grid.dim
    comps = []
    for axis in range(dim):
        d = np.diff(v, axis=axis) / h
        # average the dim-1 transverse directions down to cell shape
        for other in range(dim):
            if other == axis:
                continue
            d = 0.5 * (np.take(d, np.arange(d.shape[other] - 1), axis=other)
                       + np.take(d, np.arange(1, d.shape[other]), axis=other))
        comps.append(d)
    return np.stack(comps, axis=0)


def cell_average(u: ScalarField) -> np.ndarray:
    """Field values averaged to cell centers (midpoint sample of the
    multilinear interpolant)."""
    v = u.values
    for axis in range(u.grid.dim):
        v = 0.5 * (np.take(v, np.arange(v.shape[axis] - 1), axis=axis)
                   + np.take(v, np.arange(1, v.shape[axis]), axis=axis))
    return v


def _ball_fractions(centers_axes: list, z: np.ndarray, r: float, h: float) -> np.ndarray:
    """Fraction of each h-cell inside B_r(z); 4^dim midpoint subsamples."""
    n_sub = SUBSAMPLES_PER_AXIS
    offs = (np.arange(n_sub) + 0.5) / n_sub - 0.5  # subcell centers in units of h
    dim = len(centers_axes)
    shape = tuple(len(ax) for ax in centers_axes)
    inside = np.zeros(shape, dtype=np.int64)
    # accumulate |x - z|^2 <= r^2 over all subsample offsets, axis-separably
    sq_axes = [
        (ax[:, None] + offs[None, :] * h - z[i]) ** 2
        for i, ax in enumerate(centers_axes)
    ]
    for combo in np.ndindex(*((n_sub,) * dim)):
        sq = sq_axes[0][:, combo[0]]
        for i in range(1, dim):
            sq = sq[..., None] + sq_axes[i][:, combo[i]]
        inside += sq <= r * r
    return inside / float(n_sub**dim)


def _key(z) -> tuple:
    return tuple(float(c) for c in np.asarray(z, dtype=float).ravel())


@lru_cache(maxsize=512)
def _node_ball_weights_cached(grid: Grid, zkey: tuple, r: float) -> np.ndarray:
    z = np.asarray(zkey)
    axes = [grid.axis()] * grid.dim
    frac = _ball_fractions(axes, z, r, grid.h)
    w = frac * grid.h**grid.dim
    w.setflags(write=False)
    return w


@lru_cache(maxsize=512)
def _cell_ball_weights_cached(grid: Grid, zkey: tuple, r: float) -> np.ndarray:
    z = np.asarray(zkey)
    axes = [grid.cell_axis()] * grid.dim
    frac = _ball_fractions(axes, z, r, grid.h)
    w = frac * grid.h**grid.dim
    w.setflags(write=False)
    return w


def node_ball_weights(grid: Grid, z, r: float) -> np.ndarray:
    """Quadrature weights (volume) of each node's dual cell inside B_r(z)."""
    return _node_ball_weights_cached(grid, _key(z), float(r))


def cell_ball_weights(grid: Grid, z, r: float) -> np.ndarray:
    """Quadrature weights (volume) of each cell inside B_r(z)."""
    return _cell_ball_weights_cached(grid, _key(z), float(r))


def require_ball_inside(grid: Grid, z, r: float) -> None:
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) + r > grid.radius + 1e-12):
        raise ValueError(
            f"ball B_{r:g}({tuple(z)}) exits the domain box of radius {grid.radius:g}"
        )


def l2_ball_norm(u: ScalarField, z, r: float) -> float:
    """Midpoint-rule approximation of ||u||_{L2(B_r(z))} with node weights."""
    require_ball_inside(u.grid, z, r)
    w = node_ball_weights(u.grid, z, r)
    return float(np.sqrt(np.sum(w * u.values**2)))


def interpolate(u: ScalarField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of u at points of shape (..., dim); points
    must lie inside the closed domain box (clamped at the last cell edge)."""
    g = u.grid
    pts = np.asarray(points, dtype=float)
    if np.any(np.abs(pts) > g.radius + 1e-9):
        raise ValueError("interpolation point outside the domain box")
    t = (pts + g.radius) / g.h
    t = np.clip(t, 0.0, g.cells_per_side - 1e-12)
    i0 = np.floor(t).astype(np.int64)
    frac = t - i0
    out = np.zeros(pts.shape[:-1])
    for corner in np.ndindex(*((2,) * g.dim)):
        w = np.ones_like(out)
        idx = []
        for a, c in enumerate(corner):
            w = w * (frac[..., a] if c else 1.0 - frac[..., a])
            idx.append(i0[..., a] + c)
        out += w * u.values[tuple(idx)]
    return out


def dump_field(u: ScalarField, target) -> None:
    """Write the text dump: 'dim h radius cells' header then row-major values."""
    close = False
    if not hasattr(target, "write"):
        target = open(target, "w")
        close = True
    try:
        g = u.grid
        target.write(f"{g.dim} {g.h:.12e} {g.radius:.12e} {g.cells_per_side}\n")
        for v in u.values.ravel(order="C"):
            target.write(f"{v:.12e}\n")
    finally:
        if close:
            target.close()


def load_field(source) -> ScalarField:
    """Read a field dump produced by dump_field."""
    close = False
    if not hasattr(source, "read"):
        source = open(source)
        close = True
    try:
        header = source.readline().split()
        if len(header) != 4:
            raise ValueError("malformed field dump header (want 'dim h radius cells')")
        dim, _h, radius, cells = int(header[0]), float(header[1]), float(header[2]), int(header[3])
        grid = build_grid(dim, radius, cells)
        vals = np.loadtxt(source, dtype=float, ndmin=1)
        if vals.size != grid.nodes_per_side**dim:
            raise ValueError(
                f"field dump has {vals.size} values, expected {grid.nodes_per_side ** dim}"
            )
        return ScalarField(grid, vals.reshape(grid.node_shape, order="C"))
    finally:
        if close:
            source.close()
