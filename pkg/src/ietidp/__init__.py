"""Dual-primal isogeometric tearing and interconnecting (IETI-DP) solvers
for patchwise constant diffusion on planar multipatch B-spline domains."""
from .errors import *  # noqa: F401,F403
from .splines import KnotVector, TensorBasis, open_knot_vector
from .geometry import (GeometryMap, Interface, MultiPatch, Patch, build_interface_pairs,
                       load_multipatch, dump_multipatch)
from .assembly import assemble_patch, partition_dofs
from .linalg import factor_spd, factor_saddle, pcg
from .ieti import IetiOptions, IetiSolver, Problem, solve_ieti, solve_monolithic
from .driver import (RunConfig, compute_l2_error, generate_footprint_multipatch,
                     generate_grid_multipatch, run_benchmark, run_config)

__version__ = "0.1.0"
