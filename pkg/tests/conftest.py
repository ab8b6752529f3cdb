import numpy as np
import pytest
import scipy.linalg as sla

from ietidp.assembly import eliminate_dirichlet
from ietidp.driver import BenchmarkProblem, generate_grid_multipatch
from ietidp.ieti import IetiOptions, IetiSolver, _assemble_all

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def dense_schur(solver, k):
    """Dense ``S^(k)`` by explicit elimination, independent of the solver's
    cached factorizations."""
    dofs = solver.partition[k]
    system = _assemble_all(solver.mp, solver.problem)[k]
    K = eliminate_dirichlet(system, dofs.dirichlet).K.toarray()
    b, i = dofs.b_in_free, dofs.i_in_free
    K_BB, K_BI, K_II = K[np.ix_(b, b)], K[np.ix_(b, i)], K[np.ix_(i, i)]
    if i.size == 0:
        return K_BB
    return K_BB - K_BI @ np.linalg.solve(K_II, K_BI.T)


class DenseModel:
    """Dense FETI-DP operators built from the null space of the primal
    continuity constraints.

    The partially assembled space is ``{w : C^(k) w^(k) equal for all copies of
    each primal functional}``; no primal basis or saddle solve is involved.
    """

    def __init__(self, solver):
        self.solver = solver
        n_b = [op.n_b for op in solver.operators]
        self.offsets = np.concatenate([[0], np.cumsum(n_b)])
        n = int(self.offsets[-1])
        self.S = sla.block_diag(*[dense_schur(solver, k) for k in range(len(n_b))])
        rows = []
        owner = {}
        for k, (C, ids) in enumerate(zip(solver.primal.constraints, solver.primal.ids)):
            C = C.toarray()
            for r, g in enumerate(ids):
                row = np.zeros(n)
                row[self.offsets[k]:self.offsets[k + 1]] = C[r]
                if g in owner:
                    rows.append(row - owner[g])
                else:
                    owner[g] = row
        G = np.array(rows) if rows else np.zeros((0, n))
        self.N = sla.null_space(G) if rows else np.eye(n)
        self.B = np.hstack([blk.toarray() for blk in solver.jump.blocks])
        self.BD = np.hstack([blk.toarray() for blk in solver.scaled_jump.blocks])
        self.Stilde = self.N.T @ self.S @ self.N
        Bt = self.B @ self.N
        self.F = Bt @ np.linalg.solve(self.Stilde, Bt.T)
        self.MsD = self.BD @ self.S @ self.BD.T


def make_solver(nx=2, ny=1, degree=2, n_elements=2, algorithm="C", scaling="coefficient",
                alpha="constant:1", preconditioner="scaled-dirichlet", dirichlet="west",
                problem=None, **kwargs):
    mp = generate_grid_multipatch(nx, ny, degree, n_elements=n_elements, alpha=alpha,
                                  dirichlet=dirichlet)
    opts = IetiOptions(algorithm, preconditioner, scaling, **kwargs)
    return IetiSolver(mp, problem if problem is not None else BenchmarkProblem(), opts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
