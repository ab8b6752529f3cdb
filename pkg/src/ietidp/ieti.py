"""IETI-DP / BDDC engine for multipatch B-spline discretizations.

The primal space is realized with per-patch constraint matrices ``C^(k)``
(vertex evaluations, optionally edge averages) and the energy-minimizing
primal basis, so that the torn Schur complement on ``W~ = W_Pi + W_Delta``
is block diagonal: one global coarse solve with ``S_PiPi`` plus one
constrained Neumann solve per patch.  All patch-local operations reuse
factorizations computed once in :meth:`IetiSolver.setup`.

Interface vectors of patch ``k`` are indexed like ``PatchDofs.interface``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import splines
from .assembly import (assemble_global, assemble_patch, eliminate_dirichlet,
                       interpolate_side, partition_dofs)
from .errors import ConfigurationError, SingularSaddleError, SolverError
from .geometry import build_interface_pairs
from .linalg import factor_saddle, factor_spd, pcg

__all__ = [
    "Problem",
    "IetiOptions",
    "JumpOperator",
    "PrimalSet",
    "PrimalBasis",
    "IetiSolver",
    "IetiResult",
    "build_jump_operator",
    "scaling_vector",
    "select_primal",
    "compute_primal_basis",
    "solve_ieti",
    "solve_monolithic",
    "ALGORITHMS",
    "PRECONDITIONERS",
    "SCALINGS",
]

ALGORITHMS = ("A", "C")
PRECONDITIONERS = ("none", "dirichlet", "scaled-dirichlet", "bddc")
SCALINGS = ("multiplicity", "coefficient", "stiffness", "stiffness-modified")


class Problem:
    """Right-hand side data of ``-div(alpha grad u) = f``.

    ``source(x, y)``, ``neumann(x, y, nx, ny)`` and ``dirichlet(x, y)`` are
    vectorized callables; ``None`` means zero.  Subclasses may make the data
    depend on the patch coefficient via :meth:`patch_source` and
    :meth:`patch_neumann`.
    """

    def __init__(self, source=None, neumann=None, dirichlet=None, exact=None):
        self.source = source
        self.neumann = neumann
        self.dirichlet = dirichlet
        self.exact = exact

    def patch_source(self, alpha):
        return self.source

    def patch_neumann(self, alpha):
        return self.neumann


@dataclass
class IetiOptions:
    algorithm: str = "C"
    preconditioner: str = "scaled-dirichlet"
    scaling: str = "coefficient"
    tol: float = 1e-6
    max_it: int = 500
    workers: int = 1

    def __post_init__(self):
        self.algorithm = self.algorithm.upper()
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigurationError(f"unknown preconditioner {self.preconditioner!r}")
        if self.scaling not in SCALINGS:
            raise ConfigurationError(f"unknown scaling {self.scaling!r}")
        if not self.tol > 0:
            raise ConfigurationError("tolerance must be positive")


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# jump operator and scaling

@dataclass(frozen=True, eq=False)
class JumpOperator:
    """Signed incidence rows over dual interface dofs.

    ``rows[r] = (k, i, l, j)`` couples interface position ``i`` of patch
    ``k`` (sign +1) with position ``j`` of patch ``l`` (sign -1).
    ``blocks[k]`` is the sparse ``(n_lambda, n_B^(k))`` block of patch k.
    """

    rows: tuple
    blocks: tuple
    row_interface: tuple = ()

    @property
    def n_lambda(self):
        return len(self.rows)

    def apply(self, w):
        """``B w`` for per-patch interface vectors ``w``."""
        out = np.zeros(self.n_lambda)
        for blk, wk in zip(self.blocks, w):
            out += blk @ wk
        return out

    def apply_transpose(self, lam):
        return [blk.T @ lam for blk in self.blocks]

    def scaled(self, delta):
        """Jump operator with weights: ``+delta_j^(l)`` at ``(k, i)`` and
        ``-delta_i^(k)`` at ``(l, j)``."""
        n_b = [blk.shape[1] for blk in self.blocks]
        return JumpOperator(self.rows, _blocks_from_rows(
            self.rows, n_b, lambda k, i, l, j: (delta[l][j], -delta[k][i])),
            self.row_interface)


def _blocks_from_rows(rows, n_b, weights):
    data = [([], [], []) for _ in n_b]
    for r, (k, i, l, j) in enumerate(rows):
        wk, wl = weights(k, i, l, j)
        for patch, pos, val in ((k, i, wk), (l, j, wl)):
            data[patch][0].append(val)
            data[patch][1].append(r)
            data[patch][2].append(pos)
    n_lam = len(rows)
    return tuple(sp.csr_matrix((v, (r, c)), shape=(n_lam, n))
                 for (v, r, c), n in zip(data, n_b))


def build_jump_operator(partition, pairs, restrict_to_dual=True):
    """One multiplier per coupled pair of dual dofs, ordered by
    ``(min patch, max patch, pair position)``.

    With ``restrict_to_dual=False`` primal pairs get rows as well (the full
    operator ``B`` on the torn space).
    """
    order = sorted(range(len(pairs.pairs)),
                   key=lambda n: (min(pairs.interfaces[n].patch_a, pairs.interfaces[n].patch_b),
                                  max(pairs.interfaces[n].patch_a, pairs.interfaces[n].patch_b), n))
    rows, row_interface = [], []
    for n in order:
        itf, pr = pairs.interfaces[n], pairs.pairs[n]
        a, b = itf.patch_a, itf.patch_b
        da, db = partition[a], partition[b]
        keep_a = da.dual if restrict_to_dual else da.interface
        for i, j in pr:
            if not np.isin(i, keep_a):
                continue
            pi = int(np.searchsorted(da.interface, i))
            pj = int(np.searchsorted(db.interface, j))
            if a < b:
                rows.append((a, pi, b, pj))
            else:
                rows.append((b, pj, a, pi))
            row_interface.append(n)
    n_b = [d.interface.size for d in partition.patches]
    return JumpOperator(tuple(rows), _blocks_from_rows(rows, n_b, lambda *_: (1.0, -1.0)),
                        tuple(row_interface))


def scaling_vector(strategy, mp, partition, systems=None):
    """Weights ``delta_i^(k) = rho_i^(k) / sum_l rho^(l)`` on every interface dof.

    ``systems`` holds the patch systems (or just their stiffness diagonals)
    and is needed for the stiffness-based strategies.
    """
    rho = []
    for k, (patch, dofs) in enumerate(zip(mp.patches, partition.patches)):
        n = dofs.interface.size
        if strategy == "multiplicity":
            rho.append(np.ones(n))
        elif strategy == "coefficient":
            rho.append(np.full(n, patch.alpha))
        elif strategy in ("stiffness", "stiffness-modified"):
            if systems is None:
                raise ConfigurationError("stiffness scaling needs the patch systems")
            diag = systems[k]
            diag = diag.K.diagonal() if hasattr(diag, "K") else np.asarray(diag)
            if strategy == "stiffness":
                rho.append(diag[dofs.interface])
            else:
                rho.append(np.full(n, np.median(diag)))
        else:
            raise ConfigurationError(f"unknown scaling {strategy!r}")
    total = np.zeros(partition.n_global)
    for dofs, r in zip(partition.patches, rho):
        np.add.at(total, dofs.global_index[dofs.interface], r)
    return [r / total[d.global_index[d.interface]] for d, r in zip(partition.patches, rho)]


# ---------------------------------------------------------------------------
# primal variables

@dataclass(frozen=True, eq=False)
class PrimalSet:
    """Global primal functionals and their per-patch realizations.

    ``functionals[g]`` is ``("vertex", global dof)`` or ``("edge", interface
    index)``.  ``constraints[k]`` is the ``(n_Pi^(k), n_B^(k))`` matrix
    ``C^(k)`` and ``ids[k]`` maps its rows to global primal indices.
    """

    functionals: tuple
    constraints: tuple
    ids: tuple

    @property
    def n_primal(self):
        return len(self.functionals)


def edge_average_weights(geometry, basis, side, n_quad=None):
    """Weights ``w_i`` with ``psi_E(v) = sum_i w_i c_i`` for the side dofs.

    Integrates in physical arc length with ``p+1`` Gauss points per span.
    """
    kv = basis.side_knots(side)
    ed = splines.element_quadrature(kv, n_quad or kv.degree + 1)
    _, tan = geometry.side_curve(side, ed.points.ravel())
    ds = (np.linalg.norm(tan, axis=-1) * ed.weights.ravel()).reshape(ed.points.shape)
    w = np.zeros(kv.n_basis)
    idx = ed.first[:, None] + np.arange(kv.degree + 1)[None, :]
    np.add.at(w, idx.ravel(), np.einsum("eqa,eq->ea", ed.values, ds).ravel())
    return w / ds.sum()


def select_primal(algorithm, mp, partition, pairs):
    """Vertex evaluations (Alg. A) plus edge averages (Alg. C)."""
    algorithm = algorithm.upper()
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}")
    functionals = {}
    rows = [[] for _ in mp.patches]  # (global key, {interface position: weight})
    for k, dofs in enumerate(partition.patches):
        for pos in dofs.primal_in_b:
            key = ("vertex", int(dofs.global_index[dofs.interface[pos]]))
            functionals.setdefault(key, len(functionals))
            rows[k].append((key, {int(pos): 1.0}))
    if algorithm == "C":
        for n, (itf, pr) in enumerate(pairs):
            da = partition[itf.patch_a]
            if not np.isin(pr[:, 0], da.dual).any():
                continue
            key = ("edge", n)
            functionals.setdefault(key, len(functionals))
            for k, side in ((itf.patch_a, itf.side_a), (itf.patch_b, itf.side_b)):
                patch, dofs = mp.patches[k], partition[k]
                basis = patch.space
                w = edge_average_weights(patch.geometry, basis, side)
                side_dofs = basis.side_dofs(side)
                keep = np.isin(side_dofs, dofs.interface)
                pos = np.searchsorted(dofs.interface, side_dofs[keep])
                rows[k].append((key, dict(zip(pos.tolist(), w[keep].tolist()))))

    constraints, ids = [], []
    for k, (patch, dofs) in enumerate(zip(mp.patches, partition.patches)):
        if not rows[k] and dofs.dirichlet.size == 0:
            raise ConfigurationError(
                f"patch {k} is floating and carries no primal variable")
        data, r_idx, c_idx = [], [], []
        for r, (_, entries) in enumerate(rows[k]):
            for c, v in entries.items():
                data.append(v)
                r_idx.append(r)
                c_idx.append(c)
        constraints.append(sp.csr_matrix((data, (r_idx, c_idx)),
                                         shape=(len(rows[k]), dofs.interface.size)))
        ids.append(np.array([functionals[key] for key, _ in rows[k]], dtype=int))
    ordered = tuple(sorted(functionals, key=functionals.get))
    return PrimalSet(ordered, tuple(constraints), tuple(ids))


def dual_kernel(jump, primal):
    """Orthonormal basis of ``ker F`` (one column per edge average).

    On every interface carrying an edge average the multipliers proportional
    to the edge weights satisfy ``B^T lam in range(C^T)`` with cancelling
    primal parts, so ``B~^T lam = 0``.
    """
    index = {key: g for g, key in enumerate(primal.functionals)}
    cols = []
    for n in sorted(set(jump.row_interface)):
        g = index.get(("edge", n))
        if g is None:
            continue
        lam = np.zeros(jump.n_lambda)
        for r, (k, i, _, _) in enumerate(jump.rows):
            if jump.row_interface[r] != n:
                continue
            e = int(np.flatnonzero(primal.ids[k] == g)[0])
            lam[r] = primal.constraints[k][e, i]
        cols.append(lam / np.linalg.norm(lam))
    return np.column_stack(cols) if cols else np.zeros((jump.n_lambda, 0))


# ---------------------------------------------------------------------------
# patch operators

class PatchOperator:
    """Patch blocks and cached factorizations.

    Factors ``K_II`` and the constrained Neumann matrix ``[[K, C^T], [C, 0]]``
    (``C`` acting on the interface part); afterwards only ``K_IB``,
    ``K_BB`` and the load blocks are kept.
    """

    def __init__(self, reduced, dofs, constraints=None):
        self.dofs = dofs
        K = reduced.K
        b, i = dofs.b_in_free, dofs.i_in_free
        self.n_free = K.shape[0]
        self.n_i = i.size
        K_II = K[i][:, i].tocsc()
        self.K_IB = K[i][:, b].tocsr()
        self.K_BB = K[b][:, b].tocsr()
        self.f_I = reduced.f[i]
        self.f_B = reduced.f[b]
        self.kii = factor_spd(K_II)
        self.saddle = None
        if constraints is not None:
            self._factor_constrained(K, constraints)

    @property
    def n_b(self):
        return self.dofs.interface.size

    def schur_apply(self, w):
        """``S w = K_BB w - K_BI K_II^{-1} K_IB w`` (one Dirichlet solve)."""
        w = np.asarray(w, dtype=float)
        if self.n_i == 0:
            return self.K_BB @ w
        x = self.kii.solve(-(self.K_IB @ w))
        return self.K_BB @ w + self.K_IB.T @ x

    def schur_rhs(self):
        """``g = f_B - K_BI K_II^{-1} f_I``."""
        if self.n_i == 0:
            return self.f_B.copy()
        return self.f_B - self.K_IB.T @ self.kii.solve(self.f_I)

    def _factor_constrained(self, K, C):
        C = sp.csr_matrix(C)
        C_full = sp.csr_matrix((C.data, self.dofs.b_in_free[C.indices], C.indptr),
                               shape=(C.shape[0], self.n_free))
        try:
            self.saddle = factor_saddle(K, C_full)
        except SingularSaddleError as exc:
            raise SingularSaddleError(
                f"primal set does not control the patch kernel: {exc}") from exc

    def constrained_solve(self, f_b, rhs_mu=None):
        """Interface part of the constrained Neumann solve with load ``f_b``."""
        f_b = np.asarray(f_b, dtype=float)
        rhs = np.zeros((self.n_free,) + f_b.shape[1:])
        rhs[self.dofs.b_in_free] = f_b
        x, mu = self.saddle.solve(rhs, rhs_mu)
        return x[self.dofs.b_in_free], mu

    def recover_interior(self, u_b):
        if self.n_i == 0:
            return np.zeros(0)
        return self.kii.solve(self.f_I - self.K_IB @ u_b)


@dataclass(frozen=True, eq=False)
class PrimalBasis:
    """Energy-minimizing primal basis ``Phi^(k)`` and the coarse matrix."""

    phi: tuple
    mu: tuple
    local_coarse: tuple
    S_PiPi: np.ndarray
    coarse: object


def compute_primal_basis(operators, primal):
    """Solve the K-based saddle systems with unit constraint right-hand sides.

    ``S_PiPi^(k)[i, j] = -(mu_i)_j`` reuses the Lagrange multipliers.
    """
    phi, mus, local = [], [], []
    n_pi = primal.n_primal
    S = np.zeros((n_pi, n_pi))
    for op, ids in zip(operators, primal.ids):
        m = ids.size
        if m == 0:
            phi.append(np.zeros((op.n_b, 0)))
            mus.append(np.zeros((0, 0)))
            local.append(np.zeros((0, 0)))
            continue
        x, mu = op.constrained_solve(np.zeros((op.n_b, m)), np.eye(m))
        phi.append(x)
        mus.append(mu)
        s_loc = -mu.T
        local.append(s_loc)
        S[np.ix_(ids, ids)] += s_loc
    S = 0.5 * (S + S.T)
    return PrimalBasis(tuple(phi), tuple(mus), tuple(local), S, factor_spd(S))


# ---------------------------------------------------------------------------
# solver

@dataclass
class IetiResult:
    coefficients: list
    iterations: int
    kappa: float
    residuals: list
    converged: bool
    n_multipliers: int
    n_dofs: int
    multipliers: np.ndarray = field(default=None, repr=False)


def _global_dirichlet_values(mp, partition, problem):
    values = np.zeros(partition.n_global)
    assigned = np.zeros(partition.n_global, dtype=bool)
    g = problem.dirichlet
    for patch, dofs in zip(mp.patches, partition.patches):
        for side in patch.sides_with("dirichlet"):
            if g is None:
                idx = patch.space.side_dofs(side)
                assigned[dofs.global_index[idx]] = True
                continue
            idx, vals = interpolate_side(patch.geometry, patch.space, side, g)
            values[dofs.global_index[idx]] = vals
            assigned[dofs.global_index[idx]] = True
    missing = np.flatnonzero(partition.global_dirichlet & ~assigned)
    if missing.size and g is not None:
        # corners made Dirichlet through a neighbour: interpolatory, so evaluate
        for patch, dofs in zip(mp.patches, partition.patches):
            for (c1, c2), idx in patch.space.corner_dofs().items():
                gi = dofs.global_index[idx]
                if gi in missing and not assigned[gi]:
                    x = patch.geometry.map_point((float(c1), float(c2)))
                    values[gi] = float(g(np.array([x[0]]), np.array([x[1]]))[0])
                    assigned[gi] = True
    return values


def _assemble_one(patch, problem):
    return assemble_patch(patch.geometry, patch.space, patch.alpha,
                          source=problem.patch_source(patch.alpha),
                          neumann=problem.patch_neumann(patch.alpha),
                          neumann_sides=patch.sides_with("neumann"))


def _assemble_all(mp, problem, workers=1):
    return _pmap(lambda patch: _assemble_one(patch, problem), mp.patches, workers)


class IetiSolver:
    """Set up once, then apply ``F``, ``M_sD^{-1}``, ``M_BDDC^{-1}`` or solve."""

    def __init__(self, mp, problem=None, options=None, **kwargs):
        if not mp.has_dirichlet:
            raise ConfigurationError("a nonempty Dirichlet boundary is required")
        self.mp = mp
        self.problem = problem if problem is not None else Problem()
        self.options = options if options is not None else IetiOptions(**kwargs)
        self.setup()

    # -- setup ------------------------------------------------------------
    def setup(self):
        mp, opts = self.mp, self.options
        self.pairs = build_interface_pairs(mp)
        self.partition = partition_dofs(mp, self.pairs)
        self.dirichlet_values = _global_dirichlet_values(mp, self.partition, self.problem)
        self.primal = select_primal(opts.algorithm, mp, self.partition, self.pairs)

        def make_op(k):
            patch, dofs = mp.patches[k], self.partition[k]
            system = _assemble_one(patch, self.problem)
            red = eliminate_dirichlet(system, dofs.dirichlet,
                                      self.dirichlet_values[dofs.global_index[dofs.dirichlet]])
            return PatchOperator(red, dofs, self.primal.constraints[k]), system.K.diagonal()

        built = _pmap(make_op, range(len(mp)), opts.workers)
        self.operators = [op for op, _ in built]
        self.stiffness_diagonals = [diag for _, diag in built]
        self.basis = compute_primal_basis(self.operators, self.primal)
        self.jump = build_jump_operator(self.partition, self.pairs)
        self.delta = scaling_vector(opts.scaling, mp, self.partition, self.stiffness_diagonals)
        self.scaled_jump = self.jump.scaled(self.delta)
        self.g = [op.schur_rhs() for op in self.operators]
        self.kernel = dual_kernel(self.jump, self.primal)

        # assembled interface numbering for the BDDC path
        gids = np.unique(np.concatenate(
            [d.global_index[d.interface] for d in self.partition.patches] + [np.zeros(0, int)]))
        self.interface_global = gids
        self.restrictions = [np.searchsorted(gids, d.global_index[d.interface])
                             for d in self.partition.patches]

    @property
    def n_lambda(self):
        return self.jump.n_lambda

    @property
    def n_interface(self):
        return self.interface_global.size

    # -- building blocks ----------------------------------------------------
    def schur_apply(self, k, w):
        return self.operators[k].schur_apply(w)

    def assemble_primal(self, f):
        """``I~^T``: per-patch functionals -> ``(f_Pi, [f_Delta^(k)])``."""
        f_pi = np.zeros(self.primal.n_primal)
        for phi, ids, fk in zip(self.basis.phi, self.primal.ids, f):
            np.add.at(f_pi, ids, phi.T @ fk)
        return f_pi, [np.asarray(fk, dtype=float) for fk in f]

    def embed(self, w_pi, w_delta):
        """``I~``: ``(w_Pi, [w_Delta^(k)])`` -> per-patch interface vectors."""
        return [phi @ w_pi[ids] + wd
                for phi, ids, wd in zip(self.basis.phi, self.primal.ids, w_delta)]

    def apply_Stilde_inv(self, f_pi, f_delta):
        w_pi = self.basis.coarse.solve(f_pi) if f_pi.size else f_pi.copy()
        w_delta = _pmap(lambda k: self.operators[k].constrained_solve(f_delta[k])[0],
                        range(len(self.operators)), self.options.workers)
        return w_pi, w_delta

    def _stilde_inv_torn(self, f):
        """``I~ S~^{-1} I~^T`` on per-patch functionals."""
        return self.embed(*self.apply_Stilde_inv(*self.assemble_primal(f)))

    # -- IETI-DP operators --------------------------------------------------
    def apply_F(self, lam):
        lam = np.asarray(lam, dtype=float)
        f = self.jump.apply_transpose(lam)
        return self.jump.apply(self._stilde_inv_torn(f))

    def assemble_rhs_d(self):
        return self.jump.apply(self._stilde_inv_torn(self.g))

    def project(self, lam):
        """Orthogonal projection onto ``range(F)``."""
        if self.kernel.shape[1] == 0:
            return lam
        return lam - self.kernel @ (self.kernel.T @ lam)

    def apply_F_projected(self, lam):
        return self.project(self.apply_F(lam))

    def _projected(self, precond):
        if self.kernel.shape[1] == 0:
            return precond
        if precond is None:
            return self.project
        return lambda r: self.project(precond(self.project(r)))

    def _apply_dirichlet(self, jump, r):
        w = jump.apply_transpose(np.asarray(r, dtype=float))
        s = _pmap(lambda k: self.schur_apply(k, w[k]), range(len(w)), self.options.workers)
        return jump.apply(s)

    def apply_MsD(self, r):
        """Scaled Dirichlet preconditioner ``B_D S B_D^T r``."""
        return self._apply_dirichlet(self.scaled_jump, r)

    def apply_MD(self, r):
        """Unscaled Dirichlet preconditioner ``B S B^T r``."""
        return self._apply_dirichlet(self.jump, r)

    # -- BDDC on the assembled Schur complement -----------------------------
    def apply_Shat(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(self.n_interface)
        for k, idx in enumerate(self.restrictions):
            np.add.at(out, idx, self.schur_apply(k, u[idx]))
        return out

    def assemble_ghat(self):
        out = np.zeros(self.n_interface)
        for gk, idx in zip(self.g, self.restrictions):
            np.add.at(out, idx, gk)
        return out

    def apply_MBDDC(self, r):
        """``R~_D^T S~^{-1} R~_D r`` with the delta-weighted restrictions."""
        r = np.asarray(r, dtype=float)
        f = [d * r[idx] for d, idx in zip(self.delta, self.restrictions)]
        w = self._stilde_inv_torn(f)
        out = np.zeros(self.n_interface)
        for d, idx, wk in zip(self.delta, self.restrictions, w):
            np.add.at(out, idx, d * wk)
        return out

    # -- dense versions for small-instance checks ---------------------------
    def dense(self, apply, n):
        eye = np.eye(n)
        return np.column_stack([apply(eye[:, j]) for j in range(n)])

    # -- solve ---------------------------------------------------------------
    def _finish(self, u_b):
        coeffs = []
        for patch, dofs, op, ub in zip(self.mp.patches, self.partition.patches,
                                       self.operators, u_b):
            u = np.zeros(patch.space.size)
            u[dofs.dirichlet] = self.dirichlet_values[dofs.global_index[dofs.dirichlet]]
            u[dofs.interface] = ub
            u[dofs.interior] = op.recover_interior(ub)
            coeffs.append(u)
        return coeffs

    def solve(self):
        opts = self.options
        if opts.preconditioner == "bddc":
            res = pcg(self.apply_Shat, self.apply_MBDDC, self.assemble_ghat(),
                      tol=opts.tol, max_it=opts.max_it)
            if not res.converged:
                raise SolverError("PCG did not converge", res.residuals)
            u_b = [res.x[idx] for idx in self.restrictions]
            lam = None
        else:
            precond = {"none": None, "dirichlet": self.apply_MD,
                       "scaled-dirichlet": self.apply_MsD}[opts.preconditioner]
            d = self.assemble_rhs_d()
            res = pcg(self.apply_F_projected, self._projected(precond),
                      self.project(d), tol=opts.tol, max_it=opts.max_it)
            if not res.converged:
                raise SolverError("PCG did not converge", res.residuals)
            lam = res.x
            rhs = [gk - bk for gk, bk in zip(self.g, self.jump.apply_transpose(lam))]
            u_b = self._stilde_inv_torn(rhs)
        return IetiResult(self._finish(u_b), res.iterations, res.kappa, res.residuals,
                          res.converged, self.n_lambda, self.partition.n_free, lam)

    def interface_jump(self, coefficients):
        """``B u_B`` for full per-patch coefficient vectors."""
        return self.jump.apply([c[d.interface] for c, d in
                                zip(coefficients, self.partition.patches)])


def solve_ieti(mp, problem=None, **options):
    """Convenience wrapper: set up an :class:`IetiSolver` and solve."""
    return IetiSolver(mp, problem, IetiOptions(**options)).solve()


def solve_monolithic(mp, problem=None):
    """Reference solution from the globally assembled system."""
    problem = problem if problem is not None else Problem()
    pairs = build_interface_pairs(mp)
    partition = partition_dofs(mp, pairs)
    systems = _assemble_all(mp, problem)
    values = _global_dirichlet_values(mp, partition, problem)
    glob = assemble_global(systems, partition)
    dirichlet = np.flatnonzero(partition.global_dirichlet)
    red = eliminate_dirichlet(glob, dirichlet, values[dirichlet])
    u = np.zeros(partition.n_global)
    u[dirichlet] = values[dirichlet]
    u[red.free] = factor_spd(red.K).solve(red.f)
    return [u[d.global_index] for d in partition.patches]
