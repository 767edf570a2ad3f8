import numpy as np
import pytest

from pisco import kcore, sampling, solver
from pisco.errors import IllConditionedError, InsufficientDataError


def _random_system(rng, n_m=106, n_n=6, n_c=4):
    P = rng.normal(size=(n_m, n_n * n_c)) + 1j * rng.normal(size=(n_m, n_n * n_c))
    W = rng.normal(size=(n_n * n_c, n_c)) + 1j * rng.normal(size=(n_n * n_c, n_c))
    return solver.SubsetSystem(T=P @ W, P=P), W


class TestAssembleSystem:
    def test_shapes(self):
        targets = np.array([[0.1, 0.1, 0.0]])
        geom = sampling.KernelGeometry("cartesian", (3, 2), 0.01)
        pairs = sampling.build_patch_pairs(targets, geom)
        values_at = lambda coords: np.ones((np.atleast_2d(coords).shape[0], 4), dtype=complex)
        system = solver.assemble_system(pairs, values_at)
        assert system.T.shape == (1, 4)
        assert system.P.shape == (1, 24)

    def test_constant_evaluator(self):
        targets = np.array([[0.1, 0.1, 0.0], [0.2, -0.1, 0.0]])
        geom = sampling.KernelGeometry("cartesian", (3, 2), 0.01)
        pairs = sampling.build_patch_pairs(targets, geom)
        c = 2.0 - 1.5j
        values_at = lambda coords: np.full((np.atleast_2d(coords).shape[0], 3), c)
        system = solver.assemble_system(pairs, values_at)
        np.testing.assert_allclose(system.T, c)
        np.testing.assert_allclose(system.P, c)

    def test_flattening_order(self):
        # neighbor j / coil c value lands at column j*N_c + c
        n_c = 4
        targets = np.array([[0.2, 0.2, 0.0]])
        geom = sampling.KernelGeometry("cartesian", (3, 2), 0.01)
        pairs = sampling.build_patch_pairs(targets, geom)

        def values_at(coords):
            coords = np.atleast_2d(coords)
            out = np.zeros((coords.shape[0], n_c), dtype=complex)
            for i in range(coords.shape[0]):
                out[i] = np.arange(n_c) + 10 * i
            return out

        system = solver.assemble_system(pairs, values_at)
        assert system.P[0, 2 * n_c + 3] == 10 * 2 + 3


class TestSolveWeights:
    def test_constant_single_coil(self):
        # symmetric normal equations: uniform weights
        # w = N_m |c|^2 / (N_m |c|^2 N_n + alpha), approximately 1/N_n
        n_m, n_n = 50, 6
        c = 3.0 + 1.0j
        alpha = 1.0
        P = np.full((n_m, n_n), c)
        T = np.full((n_m, 1), c)
        ws = solver.solve_weights(solver.SubsetSystem(T=T, P=P), alpha=alpha)
        expected = n_m * abs(c) ** 2 / (n_m * abs(c) ** 2 * n_n + alpha)
        np.testing.assert_allclose(ws.W, expected, atol=1e-9)
        np.testing.assert_allclose(ws.W, 1.0 / n_n, atol=1e-3)

    def test_exact_recovery(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            system, W_true = _random_system(rng)
            ws = solver.solve_weights(system, alpha=1e-8)
            rel = np.linalg.norm(ws.W - W_true) / np.linalg.norm(W_true)
            assert rel <= 1e-3
            # direct multiplication oracle
            np.testing.assert_allclose(system.P @ ws.W, system.T, atol=1e-6)

    def test_tikhonov_limit(self):
        rng = np.random.default_rng(1)
        system, _ = _random_system(rng, n_m=40, n_n=3, n_c=2)
        big = 1e9
        ws = solver.solve_weights(system, alpha=big)
        bound = np.linalg.norm(system.P.conj().T @ system.T) / big
        assert np.linalg.norm(ws.W) <= bound * (1 + 1e-6)

    def test_optimality_spot_check(self):
        rng = np.random.default_rng(2)
        system, _ = _random_system(rng, n_m=30, n_n=3, n_c=2)
        system.T += 0.1 * (rng.normal(size=system.T.shape) + 1j * rng.normal(size=system.T.shape))
        alpha = 1e-3

        def objective(W):
            return (np.linalg.norm(system.P @ W - system.T) ** 2
                    + alpha * np.linalg.norm(W) ** 2)

        ws = solver.solve_weights(system, alpha)
        base = objective(ws.W)
        for _ in range(100):
            eps = 1e-4 * (rng.normal(size=ws.W.shape) + 1j * rng.normal(size=ws.W.shape))
            assert objective(ws.W + eps) >= base - 1e-12

    def test_monotone_shrinkage(self):
        rng = np.random.default_rng(3)
        system, _ = _random_system(rng, n_m=30, n_n=3, n_c=2)
        norms = [np.linalg.norm(solver.solve_weights(system, a).W) for a in (0.0, 1e-2, 1.0, 1e2)]
        assert all(n1 >= n2 - 1e-12 for n1, n2 in zip(norms, norms[1:]))

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(4)
        system, _ = _random_system(rng, n_m=40, n_n=3, n_c=2)
        perm = rng.permutation(40)
        permuted = solver.SubsetSystem(T=system.T[perm], P=system.P[perm])
        w1 = solver.solve_weights(system, 1e-4).W
        w2 = solver.solve_weights(permuted, 1e-4).W
        assert np.linalg.norm(w1 - w2) <= 1e-8 * np.linalg.norm(w1)

    def test_scaling_covariance(self):
        rng = np.random.default_rng(5)
        system, _ = _random_system(rng, n_m=30, n_n=3, n_c=2)
        c = 1.7 - 0.9j
        scaled = solver.SubsetSystem(T=c * system.T, P=c * system.P)
        # alpha=0: solution exactly invariant under joint scaling
        w0 = solver.solve_weights(system, 0.0).W
        w0s = solver.solve_weights(scaled, 0.0).W
        np.testing.assert_allclose(w0s, w0, atol=1e-9)
        # alpha>0: matches the normal-equation prediction with alpha fixed
        alpha = 0.5
        n_w = system.P.shape[1]
        predicted = np.linalg.solve(
            (abs(c) ** 2) * (system.P.conj().T @ system.P) + alpha * np.eye(n_w),
            (abs(c) ** 2) * system.P.conj().T @ system.T,
        )
        ws = solver.solve_weights(scaled, alpha).W
        np.testing.assert_allclose(ws, predicted, atol=1e-9)

    def test_singular_alpha_zero_raises(self):
        P = np.zeros((10, 4), dtype=complex)
        T = np.zeros((10, 2), dtype=complex)
        with pytest.raises(IllConditionedError):
            solver.solve_weights(solver.SubsetSystem(T=T, P=P), alpha=0.0)

    def test_underdetermined_rejected(self):
        rng = np.random.default_rng(6)
        P = rng.normal(size=(5, 8)) + 0j
        T = rng.normal(size=(5, 2)) + 0j
        with pytest.raises(InsufficientDataError):
            solver.solve_weights(solver.SubsetSystem(T=T, P=P), alpha=1e-4)

    def test_residual_recorded(self):
        rng = np.random.default_rng(7)
        system, _ = _random_system(rng, n_m=30, n_n=3, n_c=2)
        system.T += rng.normal(size=system.T.shape)
        ws = solver.solve_weights(system, 1e-4)
        assert np.isclose(ws.residual_fro, np.linalg.norm(system.P @ ws.W - system.T))


class TestCalibrateGrappa:
    def _ideal_acs(self, n=48, n_c=8):
        spec = kcore.cardiac_like_phantom(n, n_c)
        img = kcore.render_phantom(spec, 0.0)
        sens = kcore.simulate_sensitivities(n, n, n_c)
        return kcore.nudft_forward(img, sens, kcore.make_cartesian_grid(n, n)), img, sens

    def test_holdout_prediction(self):
        # accurate local interpolation needs coil diversity and adjacent-bin
        # taps: 8 coils, 1-bin neighbor distance
        acs, img, sens = self._ideal_acs()
        n = acs.n_fe
        geom = sampling.KernelGeometry("cartesian", (3, 2), 1.0 / n)
        ws = solver.calibrate_grappa(acs, geom, alpha=1e-6)
        # hold-out oracle: predict every interior grid node from its
        # neighbors and compare to the true values
        rng = np.random.default_rng(0)
        margin = geom.max_offset
        targets = sampling.sample_targets((n, n), 400, [0.0], rng, 0.0, margin=margin)
        pairs = sampling.build_patch_pairs(targets, geom)
        ev = kcore.GridKSpaceEvaluator(kcore.values_to_grid(acs.values, n, n))
        system = solver.assemble_system(pairs, ev)
        predicted = solver.predict_targets(ws, system.P)
        rel = np.linalg.norm(predicted - system.T) / np.linalg.norm(system.T)
        assert rel <= 1e-2

    def test_constant_single_coil_uniform_weights(self):
        n = 16
        coords = kcore.make_cartesian_grid(n, n)
        values = np.full((n * n, 1), 2.0 + 1.0j)
        acs = kcore.MultiCoilKSpace(coords, values, 1, n)
        geom = sampling.KernelGeometry("cartesian", (3, 2), 1.0 / n)
        ws = solver.calibrate_grappa(acs, geom, alpha=1e-3)
        np.testing.assert_allclose(ws.W, 1.0 / 6.0, atol=1e-4)

    def test_too_small_acs(self):
        n = 4
        coords = kcore.make_cartesian_grid(n, n)
        rng = np.random.default_rng(1)
        values = rng.normal(size=(n * n, 4)) + 0j
        acs = kcore.MultiCoilKSpace(coords, values, 4, n)
        geom = sampling.KernelGeometry("cartesian", (3, 2), 1.0 / n)
        # at most 4 interior pairs < N_w = 96
        with pytest.raises(InsufficientDataError):
            solver.calibrate_grappa(acs, geom, alpha=1e-4)
