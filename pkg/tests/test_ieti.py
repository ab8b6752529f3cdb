"""Tests for the IETI-DP / BDDC engine."""
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DenseModel, dense_schur, make_solver
from ietidp.assembly import PatchDofs, ReducedSystem, partition_dofs
from ietidp.driver import (BenchmarkProblem, ManufacturedProblem, compute_l2_error,
                           generate_grid_multipatch)
from ietidp.errors import ConfigurationError, SolverError
from ietidp.geometry import (Interface, MultiPatch, Patch, build_interface_pairs, identity_map)
from ietidp.ieti import (IetiOptions, IetiSolver, JumpOperator, PatchOperator, Problem,
                         build_jump_operator, edge_average_weights, scaling_vector,
                         select_primal, solve_ieti, solve_monolithic)
from ietidp.splines import KnotVector, TensorBasis

STRATEGIES = ("multiplicity", "coefficient", "stiffness", "stiffness-modified")


def setup(mp):
    pairs = build_interface_pairs(mp)
    return pairs, partition_dofs(mp, pairs)


def continuous_restriction(mp, partition, rng):
    u = rng.standard_normal(partition.n_global)
    return [u[d.global_index[d.interface]] for d in partition.patches]


class TestJumpOperator:
    def test_two_patch_alg_a_has_one_row(self):
        mp = generate_grid_multipatch(2, 1, 1, n_elements=2)
        pairs, part = setup(mp)
        jump = build_jump_operator(part, pairs)
        assert jump.n_lambda == 1
        assert jump.rows[0][0] == 0 and jump.rows[0][2] == 1

    @pytest.mark.parametrize("shape", [(2, 1), (2, 2), (3, 2)])
    def test_kernel_contains_continuous(self, shape, rng):
        mp = generate_grid_multipatch(*shape, 2, n_elements=3)
        pairs, part = setup(mp)
        jump = build_jump_operator(part, pairs)
        w = continuous_restriction(mp, part, rng)
        assert np.abs(jump.apply(w)).max() == 0.0
        full = build_jump_operator(part, pairs, restrict_to_dual=False)
        assert np.abs(full.apply(w)).max() == 0.0
        assert full.n_lambda > jump.n_lambda

    def test_every_dual_dof_coupled(self):
        mp = generate_grid_multipatch(3, 3, 2, n_elements=2)
        pairs, part = setup(mp)
        jump = build_jump_operator(part, pairs)
        for k, d in enumerate(part.patches):
            touched = np.flatnonzero(abs(jump.blocks[k]).sum(axis=0).A1)
            dual_pos = np.searchsorted(d.interface, d.dual)
            assert np.isin(dual_pos, touched).all()
            assert not np.isin(d.primal_in_b, touched).any()

    def test_ordering_is_lexicographic(self):
        mp = generate_grid_multipatch(3, 2, 2, n_elements=2)
        pairs, part = setup(mp)
        keys = [(k, l) for k, _, l, _ in build_jump_operator(part, pairs).rows]
        assert keys == sorted(keys)
        assert all(k < l for k, l in keys)

    def test_row_negation_leaves_F_unchanged(self):
        solver = make_solver(2, 2, algorithm="A")
        F = solver.dense(solver.apply_F, solver.n_lambda)
        solver.jump = JumpOperator(solver.jump.rows, tuple(-b for b in solver.jump.blocks),
                                   solver.jump.row_interface)
        F2 = solver.dense(solver.apply_F, solver.n_lambda)
        np.testing.assert_allclose(F2, F, atol=1e-14 * np.abs(F).max())


class TestScaling:
    def test_two_patch_multiplicity(self):
        mp = generate_grid_multipatch(2, 1, 2, n_elements=2)
        _, part = setup(mp)
        for d in scaling_vector("multiplicity", mp, part):
            np.testing.assert_allclose(d, 0.5)

    def test_coefficient_formula(self):
        mp = generate_grid_multipatch(2, 1, 2, n_elements=2).with_alpha([1.0, 1000.0])
        _, part = setup(mp)
        d0, d1 = scaling_vector("coefficient", mp, part)
        np.testing.assert_allclose(d0, 1 / 1001)
        np.testing.assert_allclose(d1, 1000 / 1001)

    def test_stiffness_on_mirror_patches(self):
        solver = make_solver(2, 1, degree=3, n_elements=3, scaling="stiffness",
                             dirichlet="all")
        for d in solver.delta:
            np.testing.assert_allclose(d, 0.5, atol=1e-12)

    @settings(max_examples=12, deadline=None)
    @given(nx=st.integers(1, 3), ny=st.integers(1, 3), strategy=st.sampled_from(STRATEGIES),
           seed=st.integers(0, 1000))
    def test_partition_of_unity(self, nx, ny, strategy, seed):
        rng = np.random.default_rng(seed)
        mp = generate_grid_multipatch(nx, ny, 2, n_elements=2)
        mp = mp.with_alpha(10.0 ** rng.uniform(-3, 3, len(mp)))
        _, part = setup(mp)
        diagonals = [None] * len(mp)
        if strategy.startswith("stiffness"):
            from ietidp.ieti import _assemble_all
            diagonals = _assemble_all(mp, Problem())
        delta = scaling_vector(strategy, mp, part, diagonals)
        total = np.zeros(part.n_global)
        for d, dk in zip(part.patches, delta):
            assert np.all(dk > 0) and np.all(dk <= 1)
            np.add.at(total, d.global_index[d.interface], dk)
        coupled = np.unique(np.concatenate([d.global_index[d.interface]
                                            for d in part.patches] + [np.zeros(0, int)]))
        np.testing.assert_allclose(total[coupled], 1.0, atol=1e-12)

    def test_multiplicity_equals_coefficient_for_uniform_alpha(self, rng):
        a = make_solver(2, 2, scaling="multiplicity", alpha="constant:3")
        b = make_solver(2, 2, scaling="coefficient", alpha="constant:3")
        r = rng.standard_normal(a.n_lambda)
        np.testing.assert_allclose(a.apply_MsD(r), b.apply_MsD(r), rtol=1e-13)


class TestPrimal:
    def test_alg_a_count_on_grid(self):
        mp = generate_grid_multipatch(2, 2, 2, n_elements=2)
        pairs, part = setup(mp)
        primal = select_primal("A", mp, part, pairs)
        # enumerate geometric vertices shared by >= 2 patches and off the Dirichlet side x=0
        corners = {}
        for patch in mp.patches:
            for xi in [(0, 0), (1, 0), (0, 1), (1, 1)]:
                key = tuple(np.round(patch.geometry.map_point(xi), 12))
                corners[key] = corners.get(key, 0) + 1
        expected = sum(1 for x, c in corners.items() if c >= 2 and x[0] != 0.0)
        assert expected == 4
        assert primal.n_primal == expected
        assert all(kind == "vertex" for kind, _ in primal.functionals)

    def test_alg_c_two_patch_rows(self):
        mp = generate_grid_multipatch(2, 1, 2, n_elements=3)
        pairs, part = setup(mp)
        primal = select_primal("C", mp, part, pairs)
        for C in primal.constraints:
            assert C.shape[0] == 3
        assert sorted(kind for kind, _ in primal.functionals) == ["edge", "vertex", "vertex"]

    @pytest.mark.parametrize("degree", [1, 2, 4])
    def test_edge_average_of_constant(self, degree):
        geo = identity_map(1, (0, 2.5), (0, 1.5), 1)
        from ietidp.splines import open_knot_vector
        basis = TensorBasis((open_knot_vector(degree, 3),) * 2)
        for side in range(4):
            w = edge_average_weights(geo, basis, side)
            assert w.sum() == pytest.approx(1.0, abs=1e-14)

    def test_edge_average_of_linear_function(self):
        # average of x over the bottom side [0, 2] is 1
        geo = identity_map(3, (0, 2), (0, 1), 2)
        w = edge_average_weights(geo, geo.basis, 2)
        x = geo.side_control_points(2)[:, 0]
        assert w @ x == pytest.approx(1.0, abs=1e-14)

    def test_shared_dirichlet_corners_anchor_neighbour(self):
        # the upper patch touches no Dirichlet side, but both corners of its
        # interface inherit Dirichlet status from the lower patch
        lower = identity_map(1, (0, 1), (0, 1), 2)
        upper = identity_map(1, (0, 1), (1, 2), 2)
        mp = MultiPatch([Patch(lower, sides=("dirichlet", "dirichlet", "neumann", "interface")),
                         Patch(upper, sides=("neumann", "neumann", "interface", "neumann"))],
                        [Interface(0, 3, 1, 2)])
        pairs, part = setup(mp)
        assert part[1].primal.size == 0 and part[1].dirichlet.size == 2
        assert select_primal("A", mp, part, pairs).n_primal == 0
        assert select_primal("C", mp, part, pairs).n_primal == 1

    def test_floating_patch_without_primal(self):
        mp = generate_grid_multipatch(2, 1, 2, n_elements=2)
        pairs, part = setup(mp)
        d = part[1]
        empty = np.zeros(0, int)
        floating = replace(d, free=np.arange(d.free.size + d.dirichlet.size), dirichlet=empty,
                           primal=empty, dual=d.interface)
        part = replace(part, patches=(part[0], floating))
        with pytest.raises(ConfigurationError):
            select_primal("A", mp, part, pairs)


@pytest.fixture(scope="module", params=["A", "C"])
def basis_solver(request):
    return make_solver(2, 2, degree=2, n_elements=3, algorithm=request.param,
                       alpha="checkerboard:0.1,10")


@pytest.fixture(scope="module", params=[("A", "coefficient"), ("C", "stiffness")])
def op_solver(request):
    alg, scal = request.param
    return make_solver(2, 2, degree=2, n_elements=2, algorithm=alg, scaling=scal,
                       alpha="checkerboard:1,100")


class TestPrimalBasis:
    @pytest.fixture
    def solver(self, basis_solver):
        return basis_solver

    def test_nodal(self, solver):
        for C, phi in zip(solver.primal.constraints, solver.basis.phi):
            np.testing.assert_allclose(C @ phi, np.eye(phi.shape[1]), atol=1e-10)

    def test_s_orthogonal_to_dual_space(self, solver, rng):
        for k, (C, phi) in enumerate(zip(solver.primal.constraints, solver.basis.phi)):
            S = dense_schur(solver, k)
            # random elements of ker C
            import scipy.linalg as sla
            Z = sla.null_space(C.toarray())
            w = Z @ rng.standard_normal((Z.shape[1], 5))
            lhs = np.abs(phi.T @ S @ w)
            norm_phi = np.sqrt(np.einsum("ij,ik,kj->j", phi, S, phi))
            norm_w = np.sqrt(np.einsum("ij,ik,kj->j", w, S, w))
            assert (lhs <= 1e-9 * np.outer(norm_phi, norm_w)).all()

    def test_coarse_matrix(self, solver):
        S = solver.basis.S_PiPi
        assert np.abs(S - S.T).max() <= 1e-9 * np.abs(S).max()
        for k, (phi, ids) in enumerate(zip(solver.basis.phi, solver.primal.ids)):
            galerkin = phi.T @ dense_schur(solver, k) @ phi
            np.testing.assert_allclose(solver.basis.local_coarse[k], galerkin,
                                       atol=1e-9 * np.abs(galerkin).max())


class TestSchurApply:
    def test_two_by_two(self):
        K = sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]])
        dofs = PatchDofs(free=np.array([0, 1]), dirichlet=np.zeros(0, int),
                         interface=np.array([0]), interior=np.array([1]),
                         primal=np.zeros(0, int), dual=np.array([0]),
                         global_index=np.array([0, 1]))
        op = PatchOperator(ReducedSystem(K, np.zeros(2), dofs.free, dofs.dirichlet,
                                         np.zeros(0)), dofs)
        np.testing.assert_allclose(op.schur_apply([1.0]), [1.5])
        np.testing.assert_allclose(op.schur_apply([0.0]), [0.0])

    def test_random_against_dense(self, rng):
        solver = make_solver(2, 2, degree=3, n_elements=3)
        for k in range(4):
            S = dense_schur(solver, k)
            w = rng.standard_normal(S.shape[0])
            v = solver.schur_apply(k, w)
            np.testing.assert_allclose(v, S @ w, atol=1e-10 * np.abs(S @ w).max())
            assert w @ v >= 0


class TestOperators:
    @pytest.fixture
    def solver(self, op_solver):
        return op_solver

    def test_stilde_inv_zero(self, solver):
        f = [np.zeros(op.n_b) for op in solver.operators]
        w_pi, w_delta = solver.apply_Stilde_inv(*solver.assemble_primal(f))
        assert not w_pi.any() and not any(w.any() for w in w_delta)

    def test_stilde_inv_block_decoupling(self, solver, rng):
        f_pi = rng.standard_normal(solver.primal.n_primal)
        zeros = [np.zeros(op.n_b) for op in solver.operators]
        w_pi, w_delta = solver.apply_Stilde_inv(f_pi, zeros)
        np.testing.assert_allclose(w_pi, np.linalg.solve(solver.basis.S_PiPi, f_pi))
        assert max(np.abs(w).max() for w in w_delta) == 0.0

    def test_stilde_inv_round_trip(self, solver, rng):
        f = [rng.standard_normal(op.n_b) for op in solver.operators]
        _, w_delta = solver.apply_Stilde_inv(np.zeros(solver.primal.n_primal), f)
        import scipy.linalg as sla
        for k, (C, w, fk) in enumerate(zip(solver.primal.constraints, w_delta, f)):
            np.testing.assert_allclose(C @ w, 0.0, atol=1e-12)
            # S w - f vanishes on ker C
            Z = sla.null_space(C.toarray())
            r = Z.T @ (dense_schur(solver, k) @ w - fk)
            assert np.abs(r).max() <= 1e-9 * np.abs(fk).max()

    def test_F_zero_and_symmetric(self, solver, rng):
        assert not solver.apply_F(np.zeros(solver.n_lambda)).any()
        a, b = rng.standard_normal((2, solver.n_lambda))
        Fa, Fb = solver.apply_F(a), solver.apply_F(b)
        assert b @ Fa == pytest.approx(a @ Fb, rel=1e-10)

    def test_F_matches_dense_model(self, solver):
        model = DenseModel(solver)
        F = solver.dense(solver.apply_F, solver.n_lambda)
        np.testing.assert_allclose(F, model.F, atol=1e-9 * np.abs(model.F).max())
        M = solver.dense(solver.apply_MsD, solver.n_lambda)
        np.testing.assert_allclose(M, model.MsD, atol=1e-9 * np.abs(model.MsD).max())

    def test_MsD_symmetric_psd(self, solver, rng):
        M = solver.dense(solver.apply_MsD, solver.n_lambda)
        assert np.abs(M - M.T).max() <= 1e-10 * np.abs(M).max()
        for r in rng.standard_normal((10, solver.n_lambda)):
            assert r @ solver.apply_MsD(r) >= 0
        assert not solver.apply_MsD(np.zeros(solver.n_lambda)).any()

    def test_MBDDC_symmetric(self, solver, rng):
        a, b = rng.standard_normal((2, solver.n_interface))
        assert b @ solver.apply_MBDDC(a) == pytest.approx(a @ solver.apply_MBDDC(b), rel=1e-10)
        assert not solver.apply_MBDDC(np.zeros(solver.n_interface)).any()

    def test_kernel_of_F(self, solver):
        K = solver.kernel
        if K.shape[1] == 0:
            assert solver.options.algorithm == "A"
            return
        F = solver.dense(solver.apply_F, solver.n_lambda)
        assert np.abs(F @ K).max() <= 1e-10 * np.abs(F).max()
        # nothing else is in the kernel
        ev = np.linalg.eigvalsh(F)
        assert np.sum(ev < 1e-10 * ev.max()) == K.shape[1]

    def test_spectral_equivalence(self, solver):
        F = solver.dense(solver.apply_F, solver.n_lambda)
        M = solver.dense(solver.apply_MsD, solver.n_lambda)
        S = solver.dense(solver.apply_Shat, solver.n_interface)
        Mb = solver.dense(solver.apply_MBDDC, solver.n_interface)

        def nontrivial(ev):
            ev = np.sort(ev.real)
            return ev[(np.abs(ev) > 1e-6) & (np.abs(ev - 1) > 1e-6)]
        a = nontrivial(np.linalg.eigvals(M @ F))
        b = nontrivial(np.linalg.eigvals(Mb @ S))
        assert a.size == b.size > 0
        np.testing.assert_allclose(a, b, rtol=1e-8)


class TestSolve:
    def test_zero_data(self):
        mp = generate_grid_multipatch(2, 2, 2, n_elements=2)
        res = solve_ieti(mp, Problem())
        assert max(np.abs(c).max() for c in res.coefficients) == 0.0
        assert res.iterations == 0

    @pytest.mark.parametrize("precond", ["none", "dirichlet", "scaled-dirichlet", "bddc"])
    @pytest.mark.parametrize("algorithm", ["A", "C"])
    def test_matches_monolithic(self, algorithm, precond):
        mp = generate_grid_multipatch(2, 2, 2, n_elements=4, alpha="checkerboard:0.01,1")
        res = solve_ieti(mp, BenchmarkProblem(), algorithm=algorithm, preconditioner=precond,
                         tol=1e-12)
        u = np.concatenate(res.coefficients)
        ref = np.concatenate(solve_monolithic(mp, BenchmarkProblem()))
        assert np.linalg.norm(u - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_solution_is_continuous(self):
        solver = make_solver(3, 2, degree=3, n_elements=3, alpha="checkerboard:1e-3,1e3",
                             tol=1e-12)
        res = solver.solve()
        jump = solver.interface_jump(res.coefficients)
        u_b = np.concatenate([c[d.interface] for c, d in
                              zip(res.coefficients, solver.partition.patches)])
        assert np.abs(jump).max() <= 1e-8 * np.abs(u_b).max()

    def test_same_error_as_single_patch(self):
        p, n = 3, 4
        mp = generate_grid_multipatch(2, 2, p, n_elements=n, extent=(1, 1), dirichlet="all")
        problem = ManufacturedProblem()
        res = solve_ieti(mp, problem, tol=1e-12)
        err = compute_l2_error(res.coefficients, mp, problem.exact)
        # one patch with a C^0 line at 1/2 spans the same space
        inner = np.concatenate([np.linspace(0, 0.5, n + 1)[1:-1], [0.5] * p,
                                np.linspace(0.5, 1, n + 1)[1:-1]])
        kv = KnotVector(np.concatenate([np.zeros(p + 1), inner, np.ones(p + 1)]), p)
        single = generate_grid_multipatch(1, 1, None, dirichlet="all")
        single = MultiPatch([Patch(q.geometry, q.alpha, q.sides, TensorBasis((kv, kv)))
                             for q in single.patches], [])
        ref = compute_l2_error(solve_monolithic(single, problem), single, problem.exact)
        assert err == pytest.approx(ref, abs=1e-10)

    def test_workers_do_not_change_result(self):
        a = make_solver(3, 2, workers=1).solve()
        b = make_solver(3, 2, workers=3).solve()
        for x, y in zip(a.coefficients, b.coefficients):
            np.testing.assert_array_equal(x, y)

    def test_non_convergence_reports_history(self):
        solver = make_solver(3, 3, degree=3, n_elements=4, preconditioner="none", max_it=2)
        with pytest.raises(SolverError) as info:
            solver.solve()
        assert len(info.value.residuals) == 3

    def test_requires_dirichlet(self):
        mp = generate_grid_multipatch(2, 1, 2, n_elements=2)
        mp = MultiPatch([Patch(q.geometry, q.alpha,
                               tuple("neumann" if s == "dirichlet" else s for s in q.sides),
                               q.basis) for q in mp.patches], mp.interfaces)
        with pytest.raises(ConfigurationError):
            IetiSolver(mp, Problem(), IetiOptions())

    @pytest.mark.parametrize("field, value", [("algorithm", "B"), ("preconditioner", "x"),
                                              ("scaling", "deluxe"), ("tol", 0.0)])
    def test_bad_options(self, field, value):
        with pytest.raises(ConfigurationError):
            IetiOptions(**{field: value})
