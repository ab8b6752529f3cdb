"""Geometry generators, run configuration, error norms and benchmark sweeps."""
import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import splines
from .errors import ConfigurationError, IetiError
from .geometry import GeometryMap, Interface, MultiPatch, Patch, load_multipatch
from .ieti import IetiOptions, IetiSolver, Problem
from .splines import TensorBasis, open_knot_vector

log = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "RunReport",
    "BenchmarkProblem",
    "ManufacturedProblem",
    "parse_alpha",
    "generate_grid_multipatch",
    "generate_footprint_multipatch",
    "build_multipatch",
    "compute_l2_error",
    "run_config",
    "run_benchmark",
    "suite_configs",
    "CSV_HEADER",
    "SUITES",
]

CSV_HEADER = ("algorithm", "scaling", "preconditioner", "dofs", "multipliers",
              "h_over_H_inv", "iterations", "kappa", "l2_error", "seconds")


# ---------------------------------------------------------------------------
# model problems

class BenchmarkProblem(Problem):
    """``f = 0``, homogeneous Neumann data and ``g_D = x + y``."""

    def __init__(self):
        super().__init__(dirichlet=lambda x, y: x + y)


class ManufacturedProblem(Problem):
    """Data for the exact solution ``u = sin(pi x) sin(pi y)``."""

    def __init__(self):
        super().__init__(dirichlet=self._u, exact=self._u)

    @staticmethod
    def _u(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def patch_source(self, alpha):
        return lambda x, y: 2.0 * np.pi ** 2 * alpha * self._u(x, y)

    def patch_neumann(self, alpha):
        def flux(x, y, nx, ny):
            ux = np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
            uy = np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
            return alpha * (ux * nx + uy * ny)
        return flux


PROBLEMS = {"benchmark": BenchmarkProblem, "manufactured": ManufacturedProblem}


# ---------------------------------------------------------------------------
# generators

def parse_alpha(pattern):
    """``"constant:V"`` or ``"checkerboard:LO,HI"`` -> callable of a cell label."""
    if callable(pattern):
        return pattern
    kind, _, args = str(pattern).partition(":")
    try:
        values = [float(v) for v in args.split(",")] if args else []
    except ValueError as exc:
        raise ConfigurationError(f"bad coefficient pattern {pattern!r}") from exc
    if kind == "constant":
        value = values[0] if values else 1.0
        return lambda label: value
    if kind == "checkerboard" and len(values) == 2:
        lo, hi = values
        return lambda label: lo if sum(label) % 2 == 0 else hi
    raise ConfigurationError(f"bad coefficient pattern {pattern!r}")


def _cells_to_multipatch(cells, make_geometry, alpha, dirichlet):
    """Glue unit cells ``(i, j)`` of a lattice into a conforming multipatch.

    ``dirichlet`` is a set of ``(cell, side)`` boundary sides.
    """
    index = {c: k for k, c in enumerate(cells)}
    interfaces = []
    sides = [["neumann"] * 4 for _ in cells]
    for (i, j), k in index.items():
        right = index.get((i + 1, j))
        if right is not None:
            interfaces.append(Interface(k, 1, right, 0))
            sides[k][1] = sides[right][0] = "interface"
        top = index.get((i, j + 1))
        if top is not None:
            interfaces.append(Interface(k, 3, top, 2))
            sides[k][3] = sides[top][2] = "interface"
    for cell, side in dirichlet:
        k = index[cell]
        if sides[k][side] == "interface":
            raise ConfigurationError(f"side {side} of cell {cell} is an interface")
        sides[k][side] = "dirichlet"
    alpha = parse_alpha(alpha)
    patches = [Patch(make_geometry(c), alpha(c), tuple(s), label=c)
               for c, s in zip(cells, sides)]
    return MultiPatch(patches, interfaces)


def _discretize(mp, degree, refine, n_elements, multiplicity):
    if degree is None:
        return mp
    if degree < 1 or refine < 0:
        raise ConfigurationError("degree must be >= 1 and refinement >= 0")
    return mp.discretize(degree, n_elements=n_elements, refine=refine,
                         multiplicity=multiplicity)


def generate_grid_multipatch(nx, ny, degree=None, refine=0, alpha="constant:1",
                             dirichlet="west", extent=None, n_elements=None,
                             multiplicity=1):
    """``nx`` by ``ny`` axis-parallel patches.

    Patch ``(i, j)`` covers ``[i, i+1] x [j, j+1]`` scaled to ``extent``
    (default: unit patches).  ``dirichlet`` is ``"west"`` (the whole ``x =
    min`` side), ``"patch"`` (west side of patch ``(0, 0)`` only) or
    ``"all"``; the remaining outer sides are Neumann.
    """
    if nx < 1 or ny < 1:
        raise ConfigurationError("grid needs at least one patch per direction")
    sx, sy = (1.0, 1.0) if extent is None else (extent[0] / nx, extent[1] / ny)
    cells = [(i, j) for j in range(ny) for i in range(nx)]
    kv = open_knot_vector(1, 1)
    basis = TensorBasis((kv, kv))

    def geometry(cell):
        i, j = cell
        X, Y = np.meshgrid([i * sx, (i + 1) * sx], [j * sy, (j + 1) * sy], indexing="ij")
        return GeometryMap(basis, np.stack([X, Y], axis=-1))

    if dirichlet == "west":
        dsides = {((0, j), 0) for j in range(ny)}
    elif dirichlet == "patch":
        dsides = {((0, 0), 0)}
    elif dirichlet == "all":
        dsides = {((0, j), 0) for j in range(ny)} | {((nx - 1, j), 1) for j in range(ny)}
        dsides |= {((i, 0), 2) for i in range(nx)} | {((i, ny - 1), 3) for i in range(nx)}
    else:
        raise ConfigurationError(f"unknown Dirichlet option {dirichlet!r}")
    mp = _cells_to_multipatch(cells, geometry, alpha, dsides)
    return _discretize(mp, degree, refine, n_elements, multiplicity)


FOOTPRINT_CELLS = ([(c, r) for r in range(3) for c in range(5)]
                   + [(c, r) for r in (3, 4) for c in (0, 2, 4)])


def _footprint_warp(x, y):
    return x + 0.25 * np.sin(0.6 * y), y + 0.15 * np.sin(0.8 * x)


def generate_footprint_multipatch(degree=None, refine=0, alpha="constant:1",
                                  n_elements=None, multiplicity=1):
    """Twenty-one curved patches: a 5 x 3 sole with three two-patch toes.

    Each patch is a biquadratic Bezier image of a lattice cell under a
    smooth warp.  The bottom side of the middle sole patch is Dirichlet.
    """
    kv = open_knot_vector(2, 1)
    basis = TensorBasis((kv, kv))
    g = kv.greville()

    def geometry(cell):
        X, Y = np.meshgrid(cell[0] + g, cell[1] + g, indexing="ij")
        return GeometryMap(basis, np.stack(_footprint_warp(X, Y), axis=-1))

    mp = _cells_to_multipatch(FOOTPRINT_CELLS, geometry, alpha, {((2, 0), 2)})
    return _discretize(mp, degree, refine, n_elements, multiplicity)


# ---------------------------------------------------------------------------
# configuration and reports

@dataclass
class RunConfig:
    geometry: str = "grid:2,2"
    degree: int = 2
    refine: int = 0
    elements: int = None
    multiplicity: int = 1
    algorithm: str = "C"
    preconditioner: str = "scaled-dirichlet"
    scaling: str = "coefficient"
    tol: float = 1e-6
    max_it: int = 500
    alpha: str = "constant:1"
    problem: str = "benchmark"
    dirichlet: str = "west"
    workers: int = 1

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tolerance must be positive")
        if self.degree < 1:
            raise ConfigurationError("degree must be >= 1")
        if self.refine < 0:
            raise ConfigurationError("refinement must be >= 0")
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        self.options()  # validates algorithm / preconditioner / scaling

    def options(self):
        return IetiOptions(self.algorithm, self.preconditioner, self.scaling,
                           self.tol, self.max_it, self.workers)


@dataclass
class RunReport:
    algorithm: str
    scaling: str
    preconditioner: str
    dofs: int
    multipliers: int
    h_over_H_inv: int
    iterations: float
    kappa: float
    l2_error: float
    seconds: float
    converged: bool = True
    residuals: list = field(default_factory=list, repr=False)

    def row(self):
        return [getattr(self, name) for name in CSV_HEADER]


def build_multipatch(config):
    """Multipatch (with analysis bases) described by a :class:`RunConfig`."""
    kind, _, args = config.geometry.partition(":")
    common = dict(degree=config.degree, refine=config.refine, n_elements=config.elements,
                  multiplicity=config.multiplicity)
    if kind == "grid":
        try:
            values = [float(v) for v in args.split(",")]
            nx, ny = int(values[0]), int(values[1])
        except (ValueError, IndexError) as exc:
            raise ConfigurationError(f"bad grid spec {config.geometry!r}") from exc
        extent = tuple(values[2:4]) if len(values) == 4 else None
        return generate_grid_multipatch(nx, ny, alpha=config.alpha, extent=extent,
                                        dirichlet=config.dirichlet, **common)
    if kind == "footprint":
        return generate_footprint_multipatch(alpha=config.alpha, **common)
    mp = load_multipatch(config.geometry)
    if config.alpha and not config.alpha.startswith("constant:1"):
        rule = parse_alpha(config.alpha)
        mp = mp.with_alpha([rule(p.label or (k, 0)) for k, p in enumerate(mp.patches)])
    return mp.discretize(config.degree, n_elements=config.elements, refine=config.refine,
                         multiplicity=config.multiplicity)


def compute_l2_error(coefficients, mp, exact=None, n_quad=None):
    """``||u_h - u||_{L2}`` by Gauss quadrature on every element.

    ``exact=None`` measures ``||u_h||``.  Uses ``p + 3`` points per span.
    """
    total = 0.0
    for patch, coeffs in zip(mp.patches, coefficients):
        basis = patch.space
        (kv0, kv1), shape = basis.kvs, basis.shape
        e0 = splines.element_quadrature(kv0, n_quad or kv0.degree + 3)
        e1 = splines.element_quadrature(kv1, n_quad or kv1.degree + 3)
        C = np.asarray(coeffs, dtype=float).reshape(shape)
        i0 = e0.first[:, None] + np.arange(kv0.degree + 1)
        i1 = e1.first[:, None] + np.arange(kv1.degree + 1)
        cloc = C[i0[:, None, :, None], i1[None, :, None, :]]
        uh = np.einsum("xqa,yrc,xyac->xqyr", e0.values, e1.values, cloc, optimize=True)
        x, xu, xv = patch.geometry.evaluate_grid(e0.points.ravel(), e1.points.ravel())
        det = np.abs(xu[..., 0] * xv[..., 1] - xv[..., 0] * xu[..., 1])
        w = np.outer(e0.weights.ravel(), e1.weights.ravel()) * det
        diff = uh.reshape(w.shape)
        if exact is not None:
            diff = diff - exact(x[..., 0], x[..., 1])
        total += float(np.sum(w * diff ** 2))
    return math.sqrt(total)


def run_config(config, residual_path=None):
    """Set up and solve one configuration; raises on solver failure."""
    problem = PROBLEMS[config.problem]()
    start = time.perf_counter()
    mp = build_multipatch(config)
    solver = IetiSolver(mp, problem, config.options())
    result = solver.solve()
    seconds = time.perf_counter() - start
    l2 = (compute_l2_error(result.coefficients, mp, problem.exact)
          if problem.exact is not None else float("nan"))
    report = RunReport(config.algorithm, config.scaling, config.preconditioner,
                       solver.partition.n_global, solver.n_lambda, mp.h_over_H_inv(),
                       result.iterations, result.kappa, l2, seconds,
                       result.converged, list(result.residuals))
    if residual_path is not None:
        Path(residual_path).write_text(json.dumps(
            {"config": asdict(config), "residuals": report.residuals}, indent=1))
    return report


def _failed(config, mp_spans, reason):
    log.warning("run failed (%s): %s", config, reason)
    return RunReport(config.algorithm, config.scaling, config.preconditioner, 0, 0,
                     mp_spans, float("nan"), float("nan"), float("nan"), float("nan"),
                     converged=False)


def run_benchmark(configs, out=None, workers=1, residual_dir=None):
    """Run a sweep; failed cells become rows with ``nan`` results.

    Returns the reports in input order and writes them as CSV to ``out``.
    """
    configs = list(configs)

    def one(item):
        n, cfg = item
        path = None
        if residual_dir is not None:
            Path(residual_dir).mkdir(parents=True, exist_ok=True)
            path = Path(residual_dir) / f"run{n:03d}.json"
        try:
            return run_config(cfg, path)
        except (IetiError, np.linalg.LinAlgError) as exc:
            residuals = getattr(exc, "residuals", ())
            report = _failed(cfg, cfg.elements or 2 ** cfg.refine, exc)
            report.residuals = list(residuals)
            return report

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, enumerate(configs)))
    else:
        reports = [one(item) for item in enumerate(configs)]
    if out is not None:
        write_csv(reports, out)
    return reports


def write_csv(reports, out):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in reports:
            writer.writerow(r.row())


# ---------------------------------------------------------------------------
# suites

H_OVER_h = (9, 13, 21, 37)


def suite_configs(name, geometry="footprint", sizes=H_OVER_h, degrees=range(2, 11)):
    """Configurations of a named sweep, in CSV row order."""
    if name == "table1":
        out = []
        for n in sizes:
            for alg in ("A", "C"):
                out.append(RunConfig(geometry, 4, elements=n, algorithm=alg,
                                     preconditioner="none", scaling="multiplicity"))
                for scal in ("coefficient", "stiffness"):
                    out.append(RunConfig(geometry, 4, elements=n, algorithm=alg,
                                         scaling=scal))
        return out
    if name == "table3":
        return [RunConfig(geometry, 4, elements=n, algorithm=alg, scaling=scal,
                          alpha="checkerboard:1e-3,1e3")
                for n in sizes for alg in ("A", "C") for scal in ("coefficient", "stiffness")]
    if name == "table4":
        return [RunConfig(geometry, p, elements=sizes[0], multiplicity=max(p - 1, 1),
                          algorithm="C", scaling=scal)
                for p in degrees for scal in ("coefficient", "stiffness", "stiffness-modified")]
    if name == "convergence":
        return [RunConfig("grid:2,2,1,1", p, refine=r, problem="manufactured", dirichlet="all")
                for p in (2, 3) for r in range(1, 5)]
    raise ConfigurationError(f"unknown suite {name!r}")


SUITES = ("table1", "table3", "table4", "convergence")
