"""Experiment configuration: flat dotted-key files and model-spec strings.

A config file is plain text, one `key = value` pair per line, `#` starts a
comment.  Keys are dotted paths; no nesting or includes.  Example:

    name = twoplane-2d
    grid.dim = 2
    grid.cells = 256
    problem.aplus = constant:2.0
    problem.aminus = constant:1.0
    problem.lam = 0.4
    problem.boundary = twoplane:beta=1.0,nu=1:0
    solver.eps_schedule = 8h,4h,2h
    audits = acf,fh,flux
    audit.classify.threshold_factor = 0.25

Model-spec strings:

    coefficient: constant:<a0>
                 hoelder:a0=<v>,c=<v>,alpha=<v>,x0=<v>:<v>[:<v>]
                 smooth:a0=<v>,c=<v>,expr=<sine|gauss>
    matrix P:    identity
                 constant:<row>;<row>      (entries comma-separated)
                 hoelder:c=<v>|alpha=<v>|x0=<v>:<v>|S=<row>;<row>
    boundary:    twoplane:beta=<v>,nu=<v>:<v>[:<v>]   (slopes from a+-(0))
                 linear:<v>:<v>[:<v>]                 (plain inner product)
                 saddle                               (x1*x2 [*x3])

Reproducible pseudo-randomness uses a 64-bit linear congruential generator
x -> 6364136223846793005 x + 1442695040888963407 (mod 2^64); uniforms are
(x >> 11) / 2^53.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from condjump.field import CoefficientModel, Grid, build_grid
from condjump.matrixext import MatrixModel, matrix_problem
from condjump.solver import TwoPhaseProblem, eps_floor

LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
LCG_MASK = (1 << 64) - 1

KNOWN_AUDITS = (
    "acf",
    "fh",
    "mu",
    "flux",
    "classify",
    "lipschitz",
    "perimeter",
    "fit",
    "cascade",
    "envelope",
    "matrix",
    "matrix_reduction",
)


class Lcg:
    """64-bit linear congruential generator with a documented recurrence."""

    def __init__(self, seed: int):
        self.state = int(seed) & LCG_MASK

    def next_u64(self) -> int:
        self.state = (LCG_MULTIPLIER * self.state + LCG_INCREMENT) & LCG_MASK
        return self.state

    def uniform(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()


@dataclass
class ExperimentConfig:
    """Parsed experiment: grid, problem, solver and audit settings."""

    name: str
    raw: dict
    dim: int = 2
    radius: float = 1.0
    cells: int = 256
    aplus: str = "constant:2.0"
    aminus: str = "constant:1.0"
    lam: float = 0.4
    matrix: str = ""
    boundary: str = "twoplane:beta=1.0,nu=1:0"
    manufactured: bool = False
    eps_schedule: str = "8h,4h,2h"
    solver_tol: float = 1e-10
    max_iters: int = 60
    audits: tuple = ()
    audit_params: dict = dataclass_field(default_factory=dict)
    out: str = "runs"
    seed: int = 20240801

    def __post_init__(self):
        for audit in self.audits:
            if audit not in KNOWN_AUDITS:
                raise ValueError(
                    "unknown audit %r; known audits: %s" % (audit, ", ".join(KNOWN_AUDITS))
                )


def parse_config_text(text: str) -> dict:
    """Flat dotted-key parser: `key = value` lines, # comments."""
    entries: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError("line %d is not a key = value pair: %r" % (lineno, line))
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError("line %d has an empty key" % lineno)
        if key in entries:
            raise ValueError("duplicate key %r on line %d" % (key, lineno))
        entries[key] = value.strip()
    return entries


def load_config(path_or_text) -> ExperimentConfig:
    """Build an ExperimentConfig from a file path or raw config text."""
    text = path_or_text
    if "\n" not in path_or_text and "=" not in path_or_text:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    raw = parse_config_text(text)
    audit_params: dict = {}
    for key, value in raw.items():
        if key.startswith("audit."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ValueError("audit parameter keys look like audit.<name>.<param>: %r" % key)
            audit_params.setdefault(parts[1], {})[parts[2]] = value
    audits = tuple(a.strip() for a in raw.get("audits", "").split(",") if a.strip())
    cfg = ExperimentConfig(
        name=raw.get("name", "experiment"),
        raw=raw,
        dim=int(raw.get("grid.dim", "2")),
        radius=float(raw.get("grid.radius", "1.0")),
        cells=int(raw.get("grid.cells", "256")),
        aplus=raw.get("problem.aplus", "constant:2.0"),
        aminus=raw.get("problem.aminus", "constant:1.0"),
        lam=float(raw.get("problem.lam", "0.4")),
        matrix=raw.get("problem.matrix", ""),
        boundary=raw.get("problem.boundary", "twoplane:beta=1.0,nu=1:0"),
        manufactured=raw.get("problem.manufactured", "false").lower() == "true",
        eps_schedule=raw.get("solver.eps_schedule", "8h,4h,2h"),
        solver_tol=float(raw.get("solver.tol", "1e-10")),
        max_iters=int(raw.get("solver.max_iters", "60")),
        audits=audits,
        audit_params=audit_params,
        out=raw.get("out", "runs"),
        seed=int(raw.get("seed", "20240801")),
    )
    # validate model strings eagerly so config errors precede any solve
    parse_coefficient(cfg.aplus, cfg.lam)
    parse_coefficient(cfg.aminus, cfg.lam)
    if cfg.matrix:
        parse_matrix(cfg.matrix, cfg.lam, cfg.dim)
    parse_boundary_spec(cfg.boundary, cfg.dim)
    return cfg


def _parse_kv(body: str) -> dict:
    out = {}
    for item in body.split(","):
        if not item:
            continue
        if "=" not in item:
            raise ValueError("expected key=value in model spec, got %r" % item)
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _floats(colon_list: str) -> tuple:
    return tuple(float(v) for v in colon_list.split(":") if v != "")


def parse_coefficient(spec: str, lam: float) -> CoefficientModel:
    """Parse a scalar coefficient model string."""
    kind, _, body = spec.partition(":")
    kind = kind.strip()
    if kind == "constant":
        return CoefficientModel("constant", float(body), lam)
    if kind == "hoelder":
        kv = _parse_kv(body)
        x0 = _floats(kv.get("x0", "")) if kv.get("x0") else ()
        return CoefficientModel(
            "hoelder",
            float(kv["a0"]),
            lam,
            c=float(kv.get("c", "0")),
            x0=x0,
            alpha=float(kv.get("alpha", "0.5")),
        )
    if kind == "smooth":
        kv = _parse_kv(body)
        return CoefficientModel(
            "smooth", float(kv["a0"]), lam, c=float(kv.get("c", "0")), expr=kv.get("expr", "sine")
        )
    raise ValueError("unknown coefficient spec %r" % spec)


def _parse_rows(rows: str) -> tuple:
    return tuple(tuple(float(v) for v in row.split(",")) for row in rows.split(";"))


def parse_matrix(spec: str, lam: float, dim: int) -> MatrixModel:
    """Parse a matrix factor model string."""
    kind, _, body = spec.partition(":")
    kind = kind.strip()
    if kind == "identity":
        eye = tuple(tuple(float(v) for v in row) for row in np.eye(dim))
        return MatrixModel(kind="constant", lam=lam, matrix=eye)
    if kind == "constant":
        return MatrixModel(kind="constant", lam=lam, matrix=_parse_rows(body))
    if kind == "hoelder":
        # S rows contain commas and semicolons, so pairs are |-separated here
        kv = {}
        for part in body.split("|"):
            if "=" not in part:
                raise ValueError("matrix hoelder spec needs key=value items, got %r" % part)
            k, v = part.split("=", 1)
            kv[k.strip()] = v.strip()
        x0 = _floats(kv.get("x0", "")) if kv.get("x0") else ()
        return MatrixModel(
            kind="hoelder",
            lam=lam,
            c=float(kv.get("c", "0")),
            alpha=float(kv.get("alpha", "0.5")),
            x0=x0,
            S=_parse_rows(kv["S"]),
        )
    raise ValueError("unknown matrix spec %r" % spec)


def parse_boundary_spec(spec: str, dim: int) -> dict:
    """Parse a boundary data string into a descriptor dict."""
    kind, _, body = spec.partition(":")
    kind = kind.strip()
    if kind == "twoplane":
        # nu components use colons, so parse key=value on commas, keeping colons
        kv = {}
        for item in body.split(","):
            if "=" not in item:
                raise ValueError("twoplane spec needs key=value items, got %r" % item)
            k, v = item.split("=", 1)
            kv[k.strip()] = v.strip()
        nu = _floats(kv.get("nu", "1:0"))
        if len(nu) != dim:
            raise ValueError("twoplane direction has %d components, grid is %d-d" % (len(nu), dim))
        return {"kind": "twoplane", "beta": float(kv.get("beta", "1.0")), "nu": nu}
    if kind == "linear":
        direction = _floats(body)
        if len(direction) != dim:
            raise ValueError("linear direction has %d components, grid is %d-d" % (len(direction), dim))
        return {"kind": "linear", "direction": direction}
    if kind == "saddle":
        return {"kind": "saddle"}
    raise ValueError("unknown boundary spec %r" % spec)


def boundary_callable(desc: dict, aplus: CoefficientModel, aminus: CoefficientModel, dim: int):
    """Turn a boundary descriptor into a mesh-array callable."""
    if desc["kind"] == "twoplane":
        origin = np.zeros((dim,))
        ap0 = float(aplus.evaluate(origin[None, :])[0])
        am0 = float(aminus.evaluate(origin[None, :])[0])
        nu = np.asarray(desc["nu"], dtype=float)
        nu = nu / np.sqrt(np.sum(nu**2))
        beta = desc["beta"]

        def fn(*mesh):
            t = sum(mesh[a] * nu[a] for a in range(dim))
            return beta * (np.maximum(t, 0.0) / ap0 - np.maximum(-t, 0.0) / am0)

        return fn
    if desc["kind"] == "linear":
        direction = np.asarray(desc["direction"], dtype=float)

        def fn(*mesh):
            return sum(mesh[a] * direction[a] for a in range(dim))

        return fn

    def fn(*mesh):
        out = mesh[0] * mesh[1]
        for a in range(2, dim):
            out = out * mesh[a]
        return out

    return fn


def build_problem(cfg: ExperimentConfig) -> TwoPhaseProblem:
    aplus = parse_coefficient(cfg.aplus, cfg.lam)
    aminus = parse_coefficient(cfg.aminus, cfg.lam)
    desc = parse_boundary_spec(cfg.boundary, cfg.dim)
    boundary = boundary_callable(desc, aplus, aminus, cfg.dim)
    if cfg.matrix:
        P = parse_matrix(cfg.matrix, cfg.lam, cfg.dim)
        return matrix_problem(aplus, aminus, P, boundary)
    return TwoPhaseProblem(aplus=aplus, aminus=aminus, boundary=boundary, lam=cfg.lam)


def grid_for(cfg: ExperimentConfig, cells: int | None = None) -> Grid:
    return build_grid(cfg.dim, cfg.radius, cells if cells is not None else cfg.cells)


def eps_schedule_for(cfg: ExperimentConfig, grid: Grid) -> list:
    """Eps values from the config: `8h` style multiples or absolute numbers."""
    values = []
    for item in cfg.eps_schedule.split(","):
        item = item.strip()
        if not item:
            continue
        if item.endswith("h"):
            values.append(float(item[:-1]) * grid.h)
        else:
            values.append(float(item))
    if not values:
        raise ValueError("empty eps schedule")
    floor = eps_floor(grid)
    return [max(v, floor) for v in values]
