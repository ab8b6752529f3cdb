"""Direct factorizations and the preconditioned CG driver.

The sparse factorizations are thin wrappers around SuperLU.  For SPD
matrices SuperLU is run with a symmetric fill-reducing ordering and no
row pivoting, which makes it a (non-symmetric storage) Cholesky-type
factorization whose pivots are the ``D`` of ``LDL^T``; a non-positive
pivot therefore certifies that the matrix is not SPD.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IndefiniteError, NotSPDError, SingularSaddleError

__all__ = [
    "SymmetricFactorization",
    "SaddleFactorization",
    "factor_spd",
    "solve_spd",
    "factor_saddle",
    "solve_saddle",
    "PCGResult",
    "pcg",
    "lanczos_extremes",
    "dense_condition_number",
]


@dataclass(frozen=True, eq=False)
class SymmetricFactorization:
    n: int
    _solve: object = field(repr=False)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros_like(b)
        return self._solve(b)


def factor_spd(A):
    """Factor a symmetric positive definite matrix (dense or sparse)."""
    n = A.shape[0]
    if n == 0:
        return SymmetricFactorization(0, None)
    if sp.issparse(A):
        A = sp.csc_matrix(A)
        try:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NotSPDError(str(exc)) from exc
        pivots = lu.U.diagonal()
        if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(pivots <= 0.0):
            raise NotSPDError("non-positive pivot encountered")
        return SymmetricFactorization(n, lu.solve)
    A = np.asarray(A, dtype=float)
    try:
        cf = sla.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(str(exc)) from exc
    return SymmetricFactorization(n, lambda b: sla.cho_solve(cf, b))


def solve_spd(fac, b):
    return fac.solve(b)


@dataclass(frozen=True, eq=False)
class SaddleFactorization:
    """LU factorization of ``[[K, C^T], [C, 0]]``."""

    n: int
    m: int
    _lu: object = field(repr=False)

    def solve(self, rhs_x, rhs_mu=None):
        rhs_x = np.asarray(rhs_x, dtype=float)
        shape = (self.m,) + rhs_x.shape[1:]
        rhs_mu = np.zeros(shape) if rhs_mu is None else np.asarray(rhs_mu, dtype=float)
        sol = self._lu.solve(np.concatenate([rhs_x, rhs_mu]))
        return sol[:self.n], sol[self.n:]


_PIVOT_TOL = 1e-13


def factor_saddle(K, C):
    """Factor the constrained Neumann system.  ``C`` must have full row rank
    and ``ker K`` must intersect ``ker C`` trivially."""
    K = sp.csr_matrix(K)
    C = sp.csr_matrix(C)
    n, m = K.shape[0], C.shape[0]
    if C.shape[1] != n:
        raise ValueError("constraint matrix has wrong number of columns")
    A = sp.bmat([[K, C.T], [C, None]], format="csc") if m else sp.csc_matrix(K)
    # A symmetric ordering with static pivots keeps the fill close to that of
    # K; fall back to threshold partial pivoting when a pivot is too small.
    for kwargs in (dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                        options={"SymmetricMode": True}), {}):
        try:
            lu = spla.splu(A, **kwargs)
        except RuntimeError:
            continue
        udiag = np.abs(lu.U.diagonal())
        if udiag.min() > _PIVOT_TOL * udiag.max():
            return SaddleFactorization(n, m, lu)
    raise SingularSaddleError("saddle point matrix is numerically singular")


def solve_saddle(fac, rhs_x, rhs_mu=None):
    return fac.solve(rhs_x, rhs_mu)


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    kappa: float
    residuals: list
    converged: bool
    eig_min: float = float("nan")
    eig_max: float = float("nan")


def lanczos_extremes(alphas, betas):
    """Extreme eigenvalues of the Lanczos matrix built from CG coefficients.

    ``alphas[k]`` are the step lengths, ``betas[k]`` the ratios
    ``(r_{k+1}, s_{k+1}) / (r_k, s_k)``.
    """
    k = len(alphas)
    if k == 0:
        return float("nan"), float("nan")
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas[:k - 1], dtype=float)
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    ev = sla.eigvalsh_tridiagonal(diag, off) if k > 1 else diag
    return float(ev.min()), float(ev.max())


def pcg(apply_A, apply_M, b, tol=1e-6, max_it=500, x0=None):
    """Preconditioned conjugate gradients with Lanczos condition estimate.

    Stops when ``||r_k|| <= tol * ||r_0||``.  ``apply_M`` applies the
    preconditioner (an approximate inverse); pass ``None`` for the identity.
    """
    b = np.asarray(b, dtype=float)
    if apply_M is None:
        apply_M = lambda r: r.copy()  # noqa: E731
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    r0 = np.linalg.norm(r)
    residuals = [float(r0)]
    if r0 == 0.0:
        return PCGResult(x, 0, 1.0, residuals, True, 1.0, 1.0)

    alphas, betas = [], []
    p = None
    rs_old = None
    converged = False
    it = 0
    while it < max_it:
        s = apply_M(r)
        rs = float(r @ s)
        if rs <= 0.0:
            raise IndefiniteError(f"preconditioner not positive: (r, Mr) = {rs:.3e}")
        if p is None:
            p = s
        else:
            beta = rs / rs_old
            betas.append(beta)
            p = s + beta * p
        Ap = apply_A(p)
        curv = float(p @ Ap)
        if curv <= 0.0:
            raise IndefiniteError(f"non-positive curvature p^T A p = {curv:.3e}")
        alpha = rs / curv
        alphas.append(alpha)
        x = x + alpha * p
        r = r - alpha * Ap
        rs_old = rs
        it += 1
        residuals.append(float(np.linalg.norm(r)))
        if residuals[-1] <= tol * r0:
            converged = True
            break
    lo, hi = lanczos_extremes(alphas, betas)
    return PCGResult(x, it, hi / lo, residuals, converged, lo, hi)


def dense_condition_number(A, M=None, drop_zero=1e-9):
    """Ratio of extreme eigenvalues of ``M A`` for SPD ``M`` (oracle helper).

    Eigenvalues below ``drop_zero`` times the largest are treated as the
    kernel and ignored.
    """
    A = np.asarray(A, dtype=float)
    if M is None:
        ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    else:
        L = np.linalg.cholesky(0.5 * (np.asarray(M) + np.asarray(M).T))
        ev = np.linalg.eigvalsh(L.T @ A @ L)
    ev = ev[ev > drop_zero * ev.max()]
    return float(ev.max() / ev.min())
