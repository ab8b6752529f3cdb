"""Univariate and tensor-product B-spline bases on open knot vectors.

Evaluation follows the Cox-de Boor recursion in its triangular form (all
``p+1`` non-vanishing functions of a span at once).  Knot insertion uses
Boehm's algorithm, which is what h-refinement of geometry and analysis
bases is built on.

Basis functions are indexed from zero.  ``eval_basis`` returns the knot span
index ``s``; the non-vanishing functions at ``t`` are ``s-p, ..., s``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import KnotVectorError, RefinementError, SplineDomainError

__all__ = [
    "KnotVector",
    "TensorBasis",
    "open_knot_vector",
    "find_span",
    "eval_basis",
    "eval_derivs",
    "eval_spline",
    "collocation_matrix",
    "insert_knot",
    "refine_uniform",
    "derivative_spline",
    "element_quadrature",
    "tensor_eval",
    "SIDE_NAMES",
]

# side numbering: xi1=0, xi1=1, xi2=0, xi2=1
SIDE_NAMES = ("west", "east", "south", "north")

_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector on [0, 1] together with its degree."""

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float)
        p = int(self.degree)
        if p < 0:
            raise KnotVectorError("degree must be non-negative")
        if knots.ndim != 1 or knots.size < 2 * (p + 1):
            raise KnotVectorError("need at least 2(p+1) knots")
        if np.any(np.diff(knots) < 0):
            raise KnotVectorError("knots must be non-decreasing")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise KnotVectorError("knot vector must span [0, 1]")
        values, counts = np.unique(knots, return_counts=True)
        if counts[0] != p + 1 or counts[-1] != p + 1:
            raise KnotVectorError("end knots must have multiplicity p+1")
        if p > 0 and np.any(counts[1:-1] > p):
            raise KnotVectorError("interior knot multiplicity exceeds p")
        if p == 0 and np.any(counts[1:-1] > 1):
            raise KnotVectorError("interior knot multiplicity exceeds 1")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "degree", p)

    @property
    def n_basis(self):
        return self.knots.size - self.degree - 1

    @property
    def breakpoints(self):
        return np.unique(self.knots)

    @property
    def n_elements(self):
        return self.breakpoints.size - 1

    def multiplicity(self, t):
        return int(np.count_nonzero(self.knots == t))

    def greville(self):
        """Greville abscissae, one per basis function."""
        p = self.degree
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        k = self.knots
        return np.array([k[i + 1:i + p + 1].mean() for i in range(self.n_basis)])

    def reversed(self):
        """Knot vector of the reparametrization t -> 1 - t."""
        return KnotVector(1.0 - self.knots[::-1], self.degree)

    def matches(self, other, reverse=False, tol=1e-12):
        other_knots = other.reversed().knots if reverse else other.knots
        return (self.degree == other.degree
                and self.knots.size == other_knots.size
                and np.allclose(self.knots, other_knots, atol=tol, rtol=0.0))

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, knots={self.knots.tolist()})"


def open_knot_vector(degree, n_elements=1, multiplicity=1, breakpoints=None):
    """Uniform (or given-breakpoint) open knot vector.

    >>> open_knot_vector(2, 2).knots.tolist()
    [0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]
    """
    if breakpoints is None:
        breakpoints = np.linspace(0.0, 1.0, n_elements + 1)
    breakpoints = np.asarray(breakpoints, dtype=float)
    interior = np.repeat(breakpoints[1:-1], multiplicity)
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    return KnotVector(knots, degree)


def find_span(kv, t):
    """Index ``s`` with ``knots[s] <= t < knots[s+1]``.

    At ``t = 1`` the last non-empty span is returned.
    """
    t = float(t)
    if not (-_TOL <= t <= 1.0 + _TOL):
        raise SplineDomainError(f"parameter {t} outside [0, 1]")
    p = kv.degree
    n = kv.n_basis
    if t >= kv.knots[n]:
        return n - 1
    if t <= kv.knots[p]:
        return p
    return int(np.searchsorted(kv.knots, t, side="right")) - 1


def _basis_at_span(knots, p, span, t):
    values = np.zeros(p + 1)
    values[0] = 1.0
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    for j in range(1, p + 1):
        left[j] = t - knots[span + 1 - j]
        right[j] = knots[span + j] - t
        saved = 0.0
        for r in range(j):
            denom = right[r + 1] + left[j - r]
            temp = values[r] / denom if denom != 0.0 else 0.0
            values[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        values[j] = saved
    return values


def eval_basis(kv, t):
    """Values of the ``p+1`` basis functions that do not vanish at ``t``."""
    span = find_span(kv, t)
    t = min(max(float(t), 0.0), 1.0)
    return span, _basis_at_span(kv.knots, kv.degree, span, t)


def eval_derivs(kv, t, order=1):
    """First derivatives of the non-vanishing basis functions at ``t``."""
    if order != 1:
        raise NotImplementedError("only first derivatives are supported")
    span = find_span(kv, t)
    t = min(max(float(t), 0.0), 1.0)
    p = kv.degree
    ders = np.zeros(p + 1)
    if p == 0:
        return ders
    k = kv.knots
    lower = _basis_at_span(k, p - 1, span, t)  # N_{span-p+1..span, p-1}
    for a in range(p + 1):
        i = span - p + a
        # N'_{i,p} = p/(k[i+p]-k[i]) N_{i,p-1} - p/(k[i+p+1]-k[i+1]) N_{i+1,p-1}
        if a >= 1:
            denom = k[i + p] - k[i]
            if denom > 0.0:
                ders[a] += p / denom * lower[a - 1]
        if a <= p - 1:
            denom = k[i + p + 1] - k[i + 1]
            if denom > 0.0:
                ders[a] -= p / denom * lower[a]
    return ders


def eval_spline(kv, coeffs, t):
    """Evaluate the spline ``sum_i coeffs[i] N_i(t)`` (coeffs may be vector valued)."""
    coeffs = np.asarray(coeffs, dtype=float)
    span, vals = eval_basis(kv, t)
    p = kv.degree
    return np.tensordot(vals, coeffs[span - p:span + 1], axes=(0, 0))


def collocation_matrix(kv, points, derivative=False):
    """Dense matrix ``A[q, i] = N_i(points[q])`` (or ``N_i'``)."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    mat = np.zeros((points.size, kv.n_basis))
    p = kv.degree
    for q, t in enumerate(points):
        if derivative:
            span = find_span(kv, t)
            vals = eval_derivs(kv, t)
        else:
            span, vals = eval_basis(kv, t)
        mat[q, span - p:span + 1] = vals
    return mat


def insert_knot(kv, coeffs, t_new):
    """Insert ``t_new`` once (Boehm).  The represented spline is unchanged."""
    t_new = float(t_new)
    if not (0.0 < t_new < 1.0):
        raise RefinementError("inserted knot must lie in (0, 1)")
    p = kv.degree
    if kv.multiplicity(t_new) + 1 > max(p, 1):
        raise RefinementError(f"multiplicity of {t_new} would exceed p={p}")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != kv.n_basis:
        raise ValueError("coefficient count does not match basis size")
    k = kv.knots
    span = find_span(kv, t_new)
    new = np.empty((coeffs.shape[0] + 1,) + coeffs.shape[1:])
    new[:span - p + 1] = coeffs[:span - p + 1]
    new[span + 1:] = coeffs[span:]
    for i in range(span - p + 1, span + 1):
        a = (t_new - k[i]) / (k[i + p] - k[i])
        new[i] = a * coeffs[i] + (1.0 - a) * coeffs[i - 1]
    knots = np.insert(k, span + 1, t_new)
    return KnotVector(knots, p), new


def refine_uniform(kv, coeffs=None, times=1):
    """Insert all element midpoints ``times`` times over."""
    if coeffs is None:
        coeffs = np.zeros(kv.n_basis)
    for _ in range(times):
        bp = kv.breakpoints
        for t in 0.5 * (bp[:-1] + bp[1:]):
            kv, coeffs = insert_knot(kv, coeffs, t)
    return kv, coeffs


def derivative_spline(kv, coeffs):
    """Knot vector and coefficients of the derivative spline (degree p-1).

    ``c'_i = p (c_{i+1} - c_i) / (xi_{i+p+1} - xi_{i+1})``.
    """
    p = kv.degree
    if p == 0:
        raise ValueError("degree-0 splines have no spline derivative")
    coeffs = np.asarray(coeffs, dtype=float)
    k = kv.knots
    denom = k[p + 1:p + kv.n_basis] - k[1:kv.n_basis]
    diff = np.diff(coeffs, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(denom > 0.0, p / np.where(denom > 0.0, denom, 1.0), 0.0)
    new = diff * scale.reshape((-1,) + (1,) * (coeffs.ndim - 1))
    return KnotVector(k[1:-1], p - 1), new


@dataclass(frozen=True, eq=False)
class ElementData:
    """Per-element quadrature data of one direction.

    ``first[e]`` is the index of the first non-vanishing basis function on
    element ``e``; ``values``/``derivs`` have shape ``(n_el, n_q, p+1)``.
    """

    first: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    bounds: np.ndarray


def element_quadrature(kv, n_points=None):
    """Gauss-Legendre data on every non-empty knot span."""
    p = kv.degree
    if n_points is None:
        n_points = p + 1
    gx, gw = np.polynomial.legendre.leggauss(n_points)
    bp = kv.breakpoints
    n_el = bp.size - 1
    points = np.empty((n_el, n_points))
    weights = np.empty((n_el, n_points))
    values = np.empty((n_el, n_points, p + 1))
    derivs = np.empty((n_el, n_points, p + 1))
    first = np.empty(n_el, dtype=int)
    for e in range(n_el):
        a, b = bp[e], bp[e + 1]
        pts = 0.5 * (b - a) * gx + 0.5 * (a + b)
        points[e] = pts
        weights[e] = 0.5 * (b - a) * gw
        span = find_span(kv, 0.5 * (a + b))
        first[e] = span - p
        for q, t in enumerate(pts):
            values[e, q] = _basis_at_span(kv.knots, p, span, t)
            derivs[e, q] = eval_derivs(kv, t)
    bounds = np.column_stack([bp[:-1], bp[1:]])
    return ElementData(first, points, weights, values, derivs, bounds)


@dataclass(frozen=True, eq=False)
class TensorBasis:
    """Tensor product of two univariate bases.

    Coefficients live on an ``(M1, M2)`` grid flattened in C order, i.e. the
    multi-index ``(i1, i2)`` maps to ``i1 * M2 + i2``.
    """

    kvs: tuple

    def __post_init__(self):
        kvs = tuple(self.kvs)
        if len(kvs) != 2 or not all(isinstance(k, KnotVector) for k in kvs):
            raise TypeError("TensorBasis needs two KnotVector objects")
        object.__setattr__(self, "kvs", kvs)

    @property
    def shape(self):
        return (self.kvs[0].n_basis, self.kvs[1].n_basis)

    @property
    def size(self):
        m1, m2 = self.shape
        return m1 * m2

    @property
    def degrees(self):
        return (self.kvs[0].degree, self.kvs[1].degree)

    def ravel(self, i1, i2):
        return np.ravel_multi_index((i1, i2), self.shape)

    def unravel(self, flat):
        return np.unravel_index(flat, self.shape)

    def side_dofs(self, side):
        """Flat indices of the basis functions on a side, in increasing
        order of the along-side parameter."""
        m1, m2 = self.shape
        grid = np.arange(self.size).reshape(m1, m2)
        return {0: grid[0, :], 1: grid[-1, :], 2: grid[:, 0], 3: grid[:, -1]}[side].copy()

    def side_knots(self, side):
        """Knot vector running along a side."""
        return self.kvs[1] if side in (0, 1) else self.kvs[0]

    def corner_dofs(self):
        m1, m2 = self.shape
        return {(0, 0): self.ravel(0, 0), (1, 0): self.ravel(m1 - 1, 0),
                (0, 1): self.ravel(0, m2 - 1), (1, 1): self.ravel(m1 - 1, m2 - 1)}

    def boundary_mask(self, sides):
        mask = np.zeros(self.size, dtype=bool)
        for s in sides:
            mask[self.side_dofs(s)] = True
        return mask


def tensor_eval(tb, point):
    """Non-vanishing tensor basis functions at a parameter point.

    Returns ``(indices, values, gradients)`` with ``gradients`` of shape
    ``(n, 2)`` holding parametric partial derivatives.
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (2,) or np.any(point < -_TOL) or np.any(point > 1.0 + _TOL):
        raise SplineDomainError(f"point {point} outside the unit square")
    (k1, k2) = tb.kvs
    s1, v1 = eval_basis(k1, point[0])
    s2, v2 = eval_basis(k2, point[1])
    d1 = eval_derivs(k1, point[0])
    d2 = eval_derivs(k2, point[1])
    i1 = np.arange(s1 - k1.degree, s1 + 1)
    i2 = np.arange(s2 - k2.degree, s2 + 1)
    I1, I2 = np.meshgrid(i1, i2, indexing="ij")
    idx = tb.ravel(I1.ravel(), I2.ravel())
    values = np.outer(v1, v2).ravel()
    grads = np.column_stack([np.outer(d1, v2).ravel(), np.outer(v1, d2).ravel()])
    return idx, values, grads

