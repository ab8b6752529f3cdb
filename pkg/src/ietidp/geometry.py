"""Patch geometry maps and conforming multipatch topology."""
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import splines
from .errors import (ConfigurationError, NonConformingInterfaceError,
                     SingularGeometryError)
from .splines import KnotVector, TensorBasis, open_knot_vector

__all__ = [
    "GeometryMap",
    "Patch",
    "Interface",
    "MultiPatch",
    "InterfacePairs",
    "build_interface_pairs",
    "identity_map",
    "bilinear_map",
    "load_multipatch",
    "dump_multipatch",
    "SIDE_TAGS",
]

SIDE_TAGS = ("dirichlet", "neumann", "interface")
_MATCH_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GeometryMap:
    """B-spline map from the unit square to the plane.

    ``control_points`` has shape ``(M1, M2, 2)``.
    """

    basis: TensorBasis
    control_points: np.ndarray

    def __post_init__(self):
        cp = np.array(self.control_points, dtype=float)
        if cp.shape != self.basis.shape + (2,):
            raise ValueError(f"control points must have shape {self.basis.shape + (2,)}")
        cp.setflags(write=False)
        object.__setattr__(self, "control_points", cp)

    def map_point(self, xi):
        idx, vals, _ = splines.tensor_eval(self.basis, xi)
        return vals @ self.control_points.reshape(-1, 2)[idx]

    def jacobian(self, xi):
        """Return ``(J, det J)`` with ``J[r, s] = d x_r / d xi_s``."""
        idx, _, grads = splines.tensor_eval(self.basis, xi)
        jac = self.control_points.reshape(-1, 2)[idx].T @ grads
        det = float(np.linalg.det(jac))
        if det <= 0.0:
            raise SingularGeometryError(f"det(J) = {det:.3e} at {tuple(xi)}")
        return jac, det

    def evaluate_grid(self, u, v):
        """Points and parametric derivatives on the tensor grid ``u x v``.

        Returns ``x, x_u, x_v`` each of shape ``(len(u), len(v), 2)``.
        """
        k1, k2 = self.basis.kvs
        bu = splines.collocation_matrix(k1, u)
        bv = splines.collocation_matrix(k2, v)
        du = splines.collocation_matrix(k1, u, derivative=True)
        dv = splines.collocation_matrix(k2, v, derivative=True)
        cp = self.control_points
        x = np.einsum("ui,ijc,vj->uvc", bu, cp, bv)
        xu = np.einsum("ui,ijc,vj->uvc", du, cp, bv)
        xv = np.einsum("ui,ijc,vj->uvc", bu, cp, dv)
        return x, xu, xv

    def side_control_points(self, side):
        return self.control_points.reshape(-1, 2)[self.basis.side_dofs(side)]

    def side_curve(self, side, t):
        """Physical points and tangents ``dx/dt`` along a side."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        const = np.array([0.0 if side in (0, 2) else 1.0])
        if side in (0, 1):
            x, _, xv = self.evaluate_grid(const, t)
            return x[0], xv[0]
        x, xu, _ = self.evaluate_grid(t, const)
        return x[:, 0], xu[:, 0]

    def insert_knots(self, direction, values):
        """Same map on a basis with ``values`` inserted in one direction."""
        kvs = list(self.basis.kvs)
        cp = np.moveaxis(self.control_points, direction, 0)
        kv = kvs[direction]
        for t in np.atleast_1d(values):
            kv, cp = splines.insert_knot(kv, cp, t)
        kvs[direction] = kv
        return GeometryMap(TensorBasis(tuple(kvs)), np.moveaxis(cp, 0, direction))

    def refined(self, times=1):
        """Uniform h-refinement in both directions; the map is unchanged."""
        geo = self
        for _ in range(times):
            for d in (0, 1):
                bp = geo.basis.kvs[d].breakpoints
                geo = geo.insert_knots(d, 0.5 * (bp[:-1] + bp[1:]))
        return geo


def identity_map(degree=1, x_range=(0.0, 1.0), y_range=(0.0, 1.0), n_elements=1):
    """Axis-parallel rectangle with control points at the Greville abscissae."""
    kvs = (open_knot_vector(degree, n_elements), open_knot_vector(degree, n_elements))
    g1, g2 = (kv.greville() for kv in kvs)
    X, Y = np.meshgrid(x_range[0] + (x_range[1] - x_range[0]) * g1,
                       y_range[0] + (y_range[1] - y_range[0]) * g2, indexing="ij")
    return GeometryMap(TensorBasis(kvs), np.stack([X, Y], axis=-1))


def bilinear_map(corners):
    """Degree-1 single-element patch; corners ordered (0,0), (1,0), (0,1), (1,1)."""
    c = np.asarray(corners, dtype=float)
    kv = open_knot_vector(1, 1)
    cp = np.array([[c[0], c[2]], [c[1], c[3]]])
    return GeometryMap(TensorBasis((kv, kv)), cp)


@dataclass(frozen=True, eq=False)
class Patch:
    """Geometry, diffusion coefficient and side tags of one patch.

    ``basis`` is the analysis basis; when ``None`` the geometry basis is used.
    """

    geometry: GeometryMap
    alpha: float = 1.0
    sides: tuple = ("neumann", "neumann", "neumann", "neumann")
    basis: TensorBasis = None
    label: tuple = None

    def __post_init__(self):
        sides = tuple(s.lower() for s in self.sides)
        if len(sides) != 4 or any(s not in SIDE_TAGS for s in sides):
            raise ConfigurationError(f"invalid side tags {self.sides}")
        if not self.alpha > 0.0:
            raise ConfigurationError("diffusion coefficient must be positive")
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def space(self):
        return self.basis if self.basis is not None else self.geometry.basis

    def sides_with(self, tag):
        return [s for s in range(4) if self.sides[s] == tag]


@dataclass(frozen=True)
class Interface:
    patch_a: int
    side_a: int
    patch_b: int
    side_b: int
    reversed: bool = False


@dataclass(frozen=True, eq=False)
class MultiPatch:
    """Collection of patches glued along full, knot-matched sides."""

    patches: tuple
    interfaces: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        object.__setattr__(self, "interfaces", tuple(self.interfaces))
        self._check_topology()

    def __len__(self):
        return len(self.patches)

    def _check_topology(self):
        seen = {}
        for n, itf in enumerate(self.interfaces):
            for k, s in ((itf.patch_a, itf.side_a), (itf.patch_b, itf.side_b)):
                if not (0 <= k < len(self.patches)) or s not in range(4):
                    raise ConfigurationError(f"interface {n} refers to a missing side")
                if (k, s) in seen:
                    raise ConfigurationError(f"side {s} of patch {k} glued twice")
                seen[(k, s)] = n
                if self.patches[k].sides[s] != "interface":
                    raise ConfigurationError(
                        f"side {s} of patch {k} is glued but tagged {self.patches[k].sides[s]!r}")
        for k, patch in enumerate(self.patches):
            for s in patch.sides_with("interface"):
                if (k, s) not in seen:
                    raise ConfigurationError(f"side {s} of patch {k} tagged interface but not glued")
        for itf in self.interfaces:
            _check_conforming(self.patches[itf.patch_a].geometry, itf.side_a,
                              self.patches[itf.patch_b].geometry, itf.side_b, itf.reversed)

    @property
    def has_dirichlet(self):
        return any("dirichlet" in p.sides for p in self.patches)

    def discretize(self, degree, n_elements=None, refine=0, multiplicity=1):
        """Attach analysis bases of the given degree to every patch.

        Each geometry knot span is split into ``2**refine`` equal spans, or,
        if ``n_elements`` is given, into as many spans as needed to obtain
        ``n_elements`` spans per direction.  Interior knots get the given
        multiplicity.
        """
        patches = []
        for patch in self.patches:
            kvs = []
            for kv in patch.geometry.basis.kvs:
                bp = kv.breakpoints
                n_geo = bp.size - 1
                if n_elements is None:
                    sub = 2 ** int(refine)
                else:
                    if n_elements % n_geo:
                        raise ConfigurationError(
                            f"{n_elements} elements cannot subdivide {n_geo} geometry spans")
                    sub = n_elements // n_geo
                fine = np.concatenate([np.linspace(bp[e], bp[e + 1], sub + 1)[:-1]
                                       for e in range(n_geo)] + [bp[-1:]])
                kvs.append(open_knot_vector(degree, multiplicity=multiplicity, breakpoints=fine))
            patches.append(replace(patch, basis=TensorBasis(tuple(kvs))))
        return MultiPatch(patches, self.interfaces)

    def with_alpha(self, alphas):
        return MultiPatch([replace(p, alpha=a) for p, a in zip(self.patches, alphas)],
                          self.interfaces)

    def h_over_H_inv(self):
        """Largest per-direction span count over all analysis bases."""
        return max(kv.n_elements for p in self.patches for kv in p.space.kvs)


def _check_conforming(ga, sa, gb, sb, reverse):
    ka = ga.basis.side_knots(sa)
    kb = gb.basis.side_knots(sb)
    if not ka.matches(kb, reverse=reverse):
        raise NonConformingInterfaceError(
            f"knot vectors differ across interface (sides {sa}/{sb})")
    pa = ga.side_control_points(sa)
    pb = gb.side_control_points(sb)
    if reverse:
        pb = pb[::-1]
    scale = max(1.0, float(np.abs(pa).max()))
    if np.abs(pa - pb).max() > _MATCH_TOL * scale:
        raise NonConformingInterfaceError(
            f"control points differ across interface (sides {sa}/{sb})")


@dataclass(frozen=True, eq=False)
class InterfacePairs:
    """Matched local dof indices per interface, aligned with ``mp.interfaces``.

    ``pairs[n]`` is an ``(m, 2)`` integer array of flat indices
    ``(i in patch_a, j in patch_b)``.
    """

    interfaces: tuple
    pairs: tuple

    def __iter__(self):
        return iter(zip(self.interfaces, self.pairs))

    def __len__(self):
        return len(self.pairs)


def build_interface_pairs(mp):
    """Coupled coefficient indices for every interface of ``mp``."""
    pairs = []
    for itf in mp.interfaces:
        ba = mp.patches[itf.patch_a].space
        bb = mp.patches[itf.patch_b].space
        if not ba.side_knots(itf.side_a).matches(bb.side_knots(itf.side_b), reverse=itf.reversed):
            raise NonConformingInterfaceError(
                f"analysis knot vectors differ on interface {itf}")
        ia = ba.side_dofs(itf.side_a)
        ib = bb.side_dofs(itf.side_b)
        if itf.reversed:
            ib = ib[::-1]
        pairs.append(np.column_stack([ia, ib]))
    return InterfacePairs(tuple(mp.interfaces), tuple(pairs))


# ---------------------------------------------------------------------------
# JSON file format.  Control points are listed with the xi1 index running
# fastest; "sides" follows the order xi1=0, xi1=1, xi2=0, xi2=1.

def load_multipatch(source):
    """Read a multipatch from a JSON path, JSON string or parsed dict."""
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            data = json.loads(text)
        else:
            with open(text) as fh:
                data = json.load(fh)
    patches = []
    for entry in data["patches"]:
        p1, p2 = entry["degree"]
        kvs = (KnotVector(entry["knots"][0], p1), KnotVector(entry["knots"][1], p2))
        basis = TensorBasis(kvs)
        m1, m2 = basis.shape
        cp = np.asarray(entry["control_points"], dtype=float)
        if cp.shape != (m1 * m2, 2):
            raise ConfigurationError(f"expected {m1 * m2} control points, got {cp.shape[0]}")
        cp = cp.reshape(m2, m1, 2).transpose(1, 0, 2)
        patches.append(Patch(GeometryMap(basis, cp), entry.get("alpha", 1.0),
                             tuple(entry["sides"])))
    interfaces = [Interface(int(i["patch_a"]), int(i["side_a"]), int(i["patch_b"]),
                            int(i["side_b"]), bool(i.get("reversed", False)))
                  for i in data.get("interfaces", [])]
    return MultiPatch(patches, interfaces)


def dump_multipatch(mp, path=None):
    """Serialize the geometry part of ``mp``; returns the dict."""
    data = {"patches": [], "interfaces": []}
    for patch in mp.patches:
        geo = patch.geometry
        data["patches"].append({
            "degree": list(geo.basis.degrees),
            "knots": [kv.knots.tolist() for kv in geo.basis.kvs],
            "control_points": geo.control_points.transpose(1, 0, 2).reshape(-1, 2).tolist(),
            "alpha": patch.alpha,
            "sides": list(patch.sides),
        })
    for itf in mp.interfaces:
        data["interfaces"].append({"patch_a": itf.patch_a, "side_a": itf.side_a,
                                   "patch_b": itf.patch_b, "side_b": itf.side_b,
                                   "reversed": itf.reversed})
    if path is not None:
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)
    return data
