"""Per-patch Galerkin assembly, Dirichlet elimination and dof partitioning."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import splines
from .errors import AssemblyError

__all__ = [
    "PatchSystem",
    "ReducedSystem",
    "PatchDofs",
    "DofPartition",
    "assemble_patch",
    "dirichlet_dofs",
    "interpolate_side",
    "eliminate_dirichlet",
    "partition_dofs",
    "assemble_global",
]


@dataclass(frozen=True, eq=False)
class PatchSystem:
    """Stiffness matrix and load vector over all dofs of one patch."""

    K: sp.csr_matrix
    f: np.ndarray


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """Patch system with Dirichlet dofs removed.

    ``K`` and ``f`` are indexed by ``free``; ``f`` already contains the
    lifting ``-K_fd u_d``.
    """

    K: sp.csr_matrix
    f: np.ndarray
    free: np.ndarray
    dirichlet: np.ndarray
    dirichlet_values: np.ndarray


def _metric(geometry, u, v, alpha):
    x, xu, xv = geometry.evaluate_grid(u, v)
    det = xu[..., 0] * xv[..., 1] - xv[..., 0] * xu[..., 1]
    if np.any(det <= 0.0):
        raise AssemblyError(f"non-positive Jacobian determinant (min {det.min():.3e})")
    # rows of J^{-1}
    r0 = np.stack([xv[..., 1], -xv[..., 0]], axis=-1) / det[..., None]
    r1 = np.stack([-xu[..., 1], xu[..., 0]], axis=-1) / det[..., None]
    jinv = np.stack([r0, r1], axis=-2)
    metric = alpha * det[..., None, None] * np.einsum("...ik,...jk->...ij", jinv, jinv)
    return x, det, metric


def _tensor_term(a0, b0, a1, b1, g):
    tmp = np.einsum("yrc,yrd,xqyr->xqycd", a1, b1, g, optimize=True)
    return np.einsum("xqa,xqb,xqycd->xyacbd", a0, b0, tmp, optimize=True)


def assemble_patch(geometry, basis, alpha=1.0, source=None, neumann=None,
                   neumann_sides=(), n_quad=None):
    """Assemble ``K_ij = int alpha grad N_j . grad N_i`` and the load vector.

    Parameters
    ----------
    geometry : GeometryMap
    basis : TensorBasis
        Analysis basis; its knots must contain the geometry breakpoints.
    alpha : float
        Patchwise constant diffusion coefficient.
    source : callable, optional
        ``f(x, y)`` evaluated on arrays.
    neumann : callable, optional
        ``g(x, y, nx, ny)``; integrated over ``neumann_sides``.
    n_quad : int, optional
        Gauss points per span and direction (default ``p + 1``).
    """
    kv0, kv1 = basis.kvs
    q0 = n_quad or kv0.degree + 1
    q1 = n_quad or kv1.degree + 1
    e0 = splines.element_quadrature(kv0, q0)
    e1 = splines.element_quadrature(kv1, q1)
    E0, E1 = e0.points.shape[0], e1.points.shape[0]
    _, m2 = basis.shape

    x, det, metric = _metric(geometry, e0.points.ravel(), e1.points.ravel(), alpha)
    w = np.outer(e0.weights.ravel(), e1.weights.ravel())
    metric = (metric * w[..., None, None]).reshape(E0, q0, E1, q1, 2, 2)

    V0, D0, V1, D1 = e0.values, e0.derivs, e1.values, e1.derivs
    kloc = (_tensor_term(D0, D0, V1, V1, metric[..., 0, 0])
            + _tensor_term(D0, V0, V1, D1, metric[..., 0, 1])
            + _tensor_term(V0, D0, D1, V1, metric[..., 1, 0])
            + _tensor_term(V0, V0, D1, D1, metric[..., 1, 1]))

    n0, n1 = kv0.degree + 1, kv1.degree + 1
    i0 = e0.first[:, None] + np.arange(n0)[None, :]  # (E0, n0)
    i1 = e1.first[:, None] + np.arange(n1)[None, :]
    glob = i0[:, None, :, None] * m2 + i1[None, :, None, :]  # (E0, E1, n0, n1)
    rows = np.broadcast_to(glob[..., :, :, None, None], kloc.shape)
    cols = np.broadcast_to(glob[..., None, None, :, :], kloc.shape)
    K = sp.coo_matrix((kloc.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(basis.size, basis.size)).tocsr()
    K.sum_duplicates()

    f = np.zeros(basis.size)
    if source is not None:
        fx = source(x[..., 0], x[..., 1]) * det * w
        fx = np.broadcast_to(fx, det.shape).reshape(E0, q0, E1, q1)
        floc = np.einsum("xqa,yrc,xqyr->xyac", V0, V1, fx, optimize=True)
        np.add.at(f, glob.ravel(), floc.ravel())
    if neumann is not None:
        for side in neumann_sides:
            _add_neumann(f, geometry, basis, side, neumann)
    return PatchSystem(K, f)


def _outward(side, tangent):
    tx, ty = tangent[..., 0], tangent[..., 1]
    if side in (1, 2):
        n = np.stack([ty, -tx], axis=-1)
    else:
        n = np.stack([-ty, tx], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _add_neumann(f, geometry, basis, side, flux):
    kv = basis.side_knots(side)
    ed = splines.element_quadrature(kv, kv.degree + 1)
    pts, tan = geometry.side_curve(side, ed.points.ravel())
    ds = np.linalg.norm(tan, axis=-1) * ed.weights.ravel()
    normal = _outward(side, tan)
    g = flux(pts[:, 0], pts[:, 1], normal[:, 0], normal[:, 1]) * ds
    g = np.broadcast_to(g, ds.shape).reshape(ed.points.shape)
    loc = np.einsum("eqa,eq->ea", ed.values, g)
    side_dofs = basis.side_dofs(side)
    idx = ed.first[:, None] + np.arange(kv.degree + 1)[None, :]
    np.add.at(f, side_dofs[idx].ravel(), loc.ravel())


def dirichlet_dofs(basis, sides):
    """Flat indices of all basis functions on the given sides."""
    if not sides:
        return np.zeros(0, dtype=int)
    return np.unique(np.concatenate([basis.side_dofs(s) for s in sides]))


def interpolate_side(geometry, basis, side, func):
    """Side coefficients interpolating ``func(x, y)`` at the Greville points."""
    kv = basis.side_knots(side)
    t = kv.greville()
    pts, _ = geometry.side_curve(side, t)
    rhs = np.broadcast_to(func(pts[:, 0], pts[:, 1]), t.shape).astype(float)
    coll = splines.collocation_matrix(kv, t)
    return basis.side_dofs(side), np.linalg.solve(coll, rhs)


def eliminate_dirichlet(system, dofs, values=None):
    """Remove Dirichlet rows/columns and move the lifting to the right-hand side."""
    n = system.K.shape[0]
    dofs = np.asarray(dofs, dtype=int)
    if values is None:
        values = np.zeros(dofs.size)
    values = np.asarray(values, dtype=float)
    mask = np.ones(n, dtype=bool)
    mask[dofs] = False
    free = np.flatnonzero(mask)
    K = system.K.tocsr()
    Kff = K[free][:, free].tocsr()
    f = system.f[free] - K[free][:, dofs] @ values
    return ReducedSystem(Kff, f, free, dofs, values)


@dataclass(frozen=True, eq=False)
class PatchDofs:
    """Index sets of one patch (local flat indices, sorted).

    ``b_in_free``/``i_in_free`` locate interface/interior dofs in the
    ``free`` ordering; ``primal_in_b`` locates primal dofs within
    ``interface``.
    """

    free: np.ndarray
    dirichlet: np.ndarray
    interface: np.ndarray
    interior: np.ndarray
    primal: np.ndarray
    dual: np.ndarray
    global_index: np.ndarray

    @property
    def b_in_free(self):
        return np.searchsorted(self.free, self.interface)

    @property
    def i_in_free(self):
        return np.searchsorted(self.free, self.interior)

    @property
    def primal_in_b(self):
        return np.searchsorted(self.interface, self.primal)


@dataclass(frozen=True, eq=False)
class DofPartition:
    patches: tuple
    n_global: int
    global_dirichlet: np.ndarray
    multiplicity: np.ndarray

    def __getitem__(self, k):
        return self.patches[k]

    def __len__(self):
        return len(self.patches)

    @property
    def n_free(self):
        return int(np.count_nonzero(~self.global_dirichlet))


def partition_dofs(mp, pairs):
    """Split every patch's dofs into Dirichlet / interior / interface,
    and interface into primal (vertex) / dual.

    Global dofs are the connected components of the pair graph.  A global
    dof is Dirichlet when any of its copies lies on a Dirichlet side, so a
    corner shared by a Dirichlet side and an interface side is eliminated
    on every patch.
    """
    sizes = [p.space.size for p in mp.patches]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n_total = int(offsets[-1])
    rows, cols = [], []
    for itf, pr in pairs:
        rows.append(offsets[itf.patch_a] + pr[:, 0])
        cols.append(offsets[itf.patch_b] + pr[:, 1])
    if rows:
        rows, cols = np.concatenate(rows), np.concatenate(cols)
    else:
        rows = cols = np.zeros(0, dtype=int)
    graph = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n_total, n_total))
    n_global, labels = connected_components(graph, directed=False)
    # renumber components by first appearance for a stable ordering
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(np.argsort(first))
    labels = order[labels]

    local_dirichlet = np.zeros(n_total, dtype=bool)
    local_interface = np.zeros(n_total, dtype=bool)
    for k, patch in enumerate(mp.patches):
        basis = patch.space
        sl = slice(offsets[k], offsets[k + 1])
        local_dirichlet[sl] = basis.boundary_mask(patch.sides_with("dirichlet"))
        local_interface[sl] = basis.boundary_mask(patch.sides_with("interface"))
    global_dirichlet = np.zeros(n_global, dtype=bool)
    global_dirichlet[labels[local_dirichlet]] = True
    multiplicity = np.bincount(labels, minlength=n_global)

    result = []
    for k, patch in enumerate(mp.patches):
        basis = patch.space
        gidx = labels[offsets[k]:offsets[k + 1]]
        is_dir = global_dirichlet[gidx]
        is_itf = local_interface[offsets[k]:offsets[k + 1]] & ~is_dir
        corners = np.zeros(basis.size, dtype=bool)
        corners[list(basis.corner_dofs().values())] = True
        result.append(PatchDofs(
            free=np.flatnonzero(~is_dir),
            dirichlet=np.flatnonzero(is_dir),
            interface=np.flatnonzero(is_itf),
            interior=np.flatnonzero(~is_dir & ~is_itf),
            primal=np.flatnonzero(is_itf & corners),
            dual=np.flatnonzero(is_itf & ~corners),
            global_index=gidx,
        ))
    return DofPartition(tuple(result), int(n_global), global_dirichlet, multiplicity)


def assemble_global(systems, partition):
    """Monolithic ``sum_k A K^(k) A^T`` over all global dofs (Dirichlet included)."""
    n = partition.n_global
    K = sp.csr_matrix((n, n))
    f = np.zeros(n)
    for system, dofs in zip(systems, partition.patches):
        g = dofs.global_index
        coo = system.K.tocoo()
        K = K + sp.csr_matrix((coo.data, (g[coo.row], g[coo.col])), shape=(n, n))
        np.add.at(f, g, system.f)
    return PatchSystem(K.tocsr(), f)
