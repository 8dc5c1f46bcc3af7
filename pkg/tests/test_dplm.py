import numpy as np
import pytest

from estimators.dplm import (
    DplmConfig,
    DplmModel,
    DplmProblem,
    build_neighborhoods,
    cayley_step,
    fit,
    gradient,
    initial_projection,
    jbld_projection_gradient,
    objective,
    transform,
)
from tools.errors import (
    ConfigurationError,
    DataFormatError,
    DimensionMismatchError,
    SingularityError,
    ValidationError,
)
from tools.geometry import jbld, karcher_mean
from tools.samples import LabeledSample
from tools.spd_linalg import congruence
from tools.synthetic import SyntheticSpec, generate_spd_dataset, random_spd, random_stiefel


def _fd_gradient(f, U, h=1e-6):
    G = np.zeros_like(U)
    for idx in np.ndindex(U.shape):
        E = np.zeros_like(U)
        E[idx] = h
        G[idx] = (f(U + E) - f(U - E)) / (2 * h)
    return G


class TestNeighborhoods:

    def test_supervised_neighbors_share_class(self, small_dataset):
        samples = small_dataset.samples
        nbs = build_neighborhoods(samples, DplmConfig(target_dim=3, k_neighbors=3))
        assert len(nbs) == len(samples)
        for nb in nbs:
            assert len(nb.neighbor_indices) == 3
            assert nb.owner_index not in nb.neighbor_indices
            assert all(samples[j].label == samples[nb.owner_index].label for j in nb.neighbor_indices)

    def test_local_mean_is_karcher_mean(self, small_dataset):
        samples = small_dataset.samples
        nb = build_neighborhoods(samples, DplmConfig(target_dim=3, k_neighbors=3))[5]
        expected = karcher_mean([samples[j].matrix for j in nb.neighbor_indices])
        np.testing.assert_allclose(nb.local_mean, expected, rtol=1e-12)

    def test_unsupervised_mode(self, small_dataset):
        samples = small_dataset.samples
        nbs = build_neighborhoods(samples, DplmConfig(target_dim=3, k_neighbors=4, supervised=False))
        for nb in nbs:
            assert len(nb.neighbor_indices) == 4
            assert nb.owner_index not in nb.neighbor_indices

    def test_class_too_small(self, small_dataset):
        with pytest.raises(ConfigurationError):
            build_neighborhoods(small_dataset.samples, DplmConfig(target_dim=3, k_neighbors=8))

    def test_airm_neighbor_metric(self, small_dataset):
        nbs = build_neighborhoods(small_dataset.samples, DplmConfig(target_dim=3, k_neighbors=2, neighbor_metric="airm"))
        assert all(len(nb.neighbor_indices) == 2 for nb in nbs)


class TestObjective:

    @pytest.fixture
    def problem(self, small_dataset):
        samples = small_dataset.samples
        nbs = build_neighborhoods(samples, DplmConfig(target_dim=3, k_neighbors=3))
        return samples, nbs, DplmProblem(samples, nbs)

    def test_identity_projection_is_exact(self, problem):
        samples, nbs, p = problem
        U = np.eye(6)
        assert objective(U, nbs, samples) == 0.0
        np.testing.assert_array_equal(gradient(U, nbs, samples), np.zeros((6, 6)))

    def test_objective_is_nonnegative(self, problem, rng):
        samples, nbs, _ = problem
        assert objective(random_stiefel(6, 2, rng), nbs, samples) > 0

    def test_gradient_matches_finite_differences(self, problem, rng):
        _, _, p = problem
        U = random_stiefel(6, 3, rng)
        G = p.gradient(U)
        G_fd = _fd_gradient(p.evaluate, U)
        np.testing.assert_allclose(G, G_fd, rtol=1e-4, atol=1e-6 * np.abs(G_fd).max())

    def test_gradient_sweep_over_random_instances(self):
        rng = np.random.default_rng(20)
        checked = 0
        while checked < 20:
            n = int(rng.integers(4, 9))
            m = int(rng.integers(2, n))
            K = int(rng.choice([3, 5]))
            N = int(rng.integers(max(10, 2 * K + 2), 31))
            samples = [LabeledSample(random_spd(n, rng), i % 2) for i in range(N)]
            p = DplmProblem(samples, build_neighborhoods(samples, DplmConfig(target_dim=m, k_neighbors=K)))
            U = random_stiefel(n, m, rng)
            if np.abs(p.residuals(U)).min() <= 1e-6:
                continue
            G, G_fd = p.gradient(U), _fd_gradient(p.evaluate, U)
            assert np.linalg.norm(G - G_fd) / np.linalg.norm(G_fd) < 1e-4, (n, m, N, K)
            checked += 1

    def test_pair_gradient_matches_finite_differences(self, rng):
        X, Y = random_spd(5, rng), random_spd(5, rng)
        U = random_stiefel(5, 2, rng)

        def J(V):
            ld = lambda M: np.linalg.slogdet(M)[1]
            return ld(V.T @ (X + Y) @ V / 2) - 0.5 * (ld(V.T @ X @ V) + ld(V.T @ Y @ V))

        np.testing.assert_allclose(jbld_projection_gradient(X, Y, U), _fd_gradient(J, U), rtol=1e-5, atol=1e-8)

    def test_outlier_outside_neighbor_lists_does_not_move_gradient(self, small_dataset, rng):
        samples = list(small_dataset.samples)
        samples.append(LabeledSample(100.0 * random_spd(6, rng), 0))
        outlier = len(samples) - 1
        nbs = build_neighborhoods(samples, DplmConfig(target_dim=3, k_neighbors=3))
        assert all(outlier not in nb.neighbor_indices for nb in nbs)

        U = random_stiefel(6, 3, rng)
        before = DplmProblem(samples, nbs).gradient(U)
        samples[outlier] = LabeledSample(random_spd(6, rng), 0)
        after = DplmProblem(samples, nbs).gradient(U)
        np.testing.assert_array_equal(before, after)

    def test_singular_projection_reports_pair(self, problem):
        _, _, p = problem
        with pytest.raises(SingularityError) as info:
            p.evaluate(np.zeros((6, 3)))
        assert (info.value.owner, info.value.neighbor) == (0, 0)

    def test_public_objective_validates_projection(self, problem):
        samples, nbs, _ = problem
        with pytest.raises(ValidationError):
            objective(2 * np.eye(6)[:, :3], nbs, samples)


class TestCayley:

    def test_stays_on_stiefel(self, rng):
        U = random_stiefel(8, 3, rng)
        G = rng.standard_normal((8, 3))
        for tau in (0.0, 1e-3, 0.1, 1.0, 10.0):
            Y = cayley_step(U, G, tau)
            assert np.linalg.norm(Y.T @ Y - np.eye(3)) < 1e-10

    def test_zero_step_is_identity(self, rng):
        U = random_stiefel(6, 2, rng)
        np.testing.assert_allclose(cayley_step(U, rng.standard_normal((6, 2)), 0.0), U, atol=1e-15)

    def test_initial_direction(self, rng):
        U = random_stiefel(6, 2, rng)
        G = rng.standard_normal((6, 2))
        A = G @ U.T - U @ G.T
        h = 1e-7
        np.testing.assert_allclose((cayley_step(U, G, h) - U) / h, -A @ U, rtol=1e-5, atol=1e-6)


class TestFit:

    def test_full_dimension_is_trivially_optimal(self, small_dataset):
        model = fit(small_dataset.samples, DplmConfig(target_dim=6, k_neighbors=3))
        assert model.report.status == "converged"
        assert model.report.iterations == 0
        assert model.report.best_objective == 0.0
        np.testing.assert_array_equal(model.projection, np.eye(6))

    def test_target_dim_above_n(self, small_dataset):
        with pytest.raises(ConfigurationError):
            fit(small_dataset.samples, DplmConfig(target_dim=7, k_neighbors=3))

    def test_returns_orthonormal_best_iterate(self, small_dataset):
        cfg = DplmConfig(target_dim=2, k_neighbors=3, init="random", seed=1, max_outer_iterations=50)
        model = fit(small_dataset.samples, cfg)
        U = model.projection
        assert np.linalg.norm(U.T @ U - np.eye(2)) < 1e-8
        assert model.report.status in ("converged", "max_iterations", "stalled")
        assert model.report.best_objective <= model.report.initial_objective
        nbs = build_neighborhoods(small_dataset.samples, cfg)
        assert objective(U, nbs, small_dataset.samples) == pytest.approx(model.report.best_objective, rel=1e-10)

    def test_nonmonotone_acceptance_rule_holds(self, small_dataset):
        cfg = DplmConfig(target_dim=2, k_neighbors=3, init="random", seed=2, max_outer_iterations=40)
        records = fit(small_dataset.samples, cfg).report.records
        for t in range(1, len(records)):
            window = [r.objective for r in records[max(0, t - cfg.window):t]]
            bound = max(window) - cfg.armijo_c * records[t].step * records[t].descent_sq
            assert records[t].objective <= bound + 1e-12 * abs(bound)

    def test_deterministic(self, small_dataset):
        cfg = DplmConfig(target_dim=2, k_neighbors=3, init="random", seed=4, max_outer_iterations=20)
        a = fit(small_dataset.samples, cfg)
        b = fit(small_dataset.samples, cfg)
        np.testing.assert_array_equal(a.projection, b.projection)
        assert a.report.to_dict() == b.report.to_dict()

    def test_recovers_hidden_subspace(self):
        spec = SyntheticSpec(n_classes=3, per_class=10, dim=6, block_dim=2, noise=0.3, rotate=True, seed=5, center_seed=5)
        dataset = generate_spd_dataset(spec)
        cfg = DplmConfig(target_dim=2, k_neighbors=3, max_outer_iterations=500)
        nbs = build_neighborhoods(dataset.samples, cfg)
        assert objective(dataset.informative_basis, nbs, dataset.samples) < 1e-8

        model = fit(dataset.samples, cfg)
        assert model.report.best_objective < 0.1 * model.report.initial_objective
        assert model.report.qr_rescues == 0

    def test_block_fixture_objective_drops_tenfold(self):
        spec = SyntheticSpec(n_classes=4, per_class=30, dim=10, block_dim=4, seed=1, center_seed=0)
        samples = generate_spd_dataset(spec).samples
        model = fit(samples, DplmConfig(target_dim=4, k_neighbors=5))
        report = model.report
        assert report.initial_objective > 0
        assert report.best_objective < 0.1 * report.initial_objective
        assert report.qr_rescues == 0
        assert all(r.feasibility < 1e-8 for r in report.records)

    def test_transform(self, small_dataset):
        model = fit(small_dataset.samples, DplmConfig(target_dim=3, k_neighbors=3, max_outer_iterations=5))
        Xp = transform(model, small_dataset.samples[0].matrix)
        assert Xp.shape == (3, 3)
        assert np.linalg.eigvalsh(Xp)[0] > 0

    def test_model_serialization(self, small_dataset):
        model = fit(small_dataset.samples, DplmConfig(target_dim=3, k_neighbors=3, max_outer_iterations=5))
        restored = DplmModel.from_dict(model.to_dict())
        np.testing.assert_array_equal(restored.projection, model.projection)
        assert restored.config == model.config
        assert restored.report.status == model.report.status

    @pytest.mark.parametrize("broken", [
        {"kind": "dplm"},
        {"kind": "dplm", "projection": "x", "n": 2, "m": 1},
        {"kind": "dplm", "projection": [[1.0], [0.0]], "n": 2, "m": 1, "report": {}, "config": {}},
        [],
    ])
    def test_malformed_model(self, broken):
        with pytest.raises(DataFormatError):
            DplmModel.from_dict(broken)


class TestConfig:

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            DplmConfig(target_dim=0)
        with pytest.raises(ConfigurationError):
            DplmConfig(target_dim=2, rho=1.0)
        with pytest.raises(ConfigurationError):
            DplmConfig(target_dim=2, init="pca")

    def test_initial_projection(self):
        np.testing.assert_array_equal(initial_projection(4, 2), np.eye(4)[:, :2])
        U = initial_projection(5, 3, "random", seed=1)
        assert np.linalg.norm(U.T @ U - np.eye(3)) < 1e-12


class TestSpecialInstances:

    def test_identical_class_members_share_local_mean(self, rng):
        A, B = random_spd(4, rng), random_spd(4, rng)
        samples = [LabeledSample(A, 0)] * 3 + [LabeledSample(B, 1)] * 3
        for nb in build_neighborhoods(samples, DplmConfig(target_dim=2, k_neighbors=2)):
            np.testing.assert_array_equal(nb.local_mean, A if nb.owner_index < 3 else B)

    def test_forced_neighbor_selection(self):
        samples = [LabeledSample(s * np.eye(3), 0) for s in (1.0, 2.0, 16.0)]
        nb = build_neighborhoods(samples, DplmConfig(target_dim=2, k_neighbors=2))[0]
        assert set(nb.neighbor_indices) == {1, 2}

    def test_matches_brute_force_knn(self, rng):
        samples = [LabeledSample(random_spd(4, rng), c) for c in (0, 1) for _ in range(7)]
        nbs = build_neighborhoods(samples, DplmConfig(target_dim=2, k_neighbors=3))
        for nb in nbs:
            i = nb.owner_index
            same = [j for j, s in enumerate(samples) if j != i and s.label == samples[i].label]
            expected = sorted(same, key=lambda j: (jbld(samples[i].matrix, samples[j].matrix), j))[:3]
            assert list(nb.neighbor_indices) == expected

    def test_identical_samples_give_zero_objective_and_gradient(self, rng):
        A = random_spd(5, rng)
        samples = [LabeledSample(A, c) for c in (0, 1) for _ in range(4)]
        nbs = build_neighborhoods(samples, DplmConfig(target_dim=2, k_neighbors=3))
        U = random_stiefel(5, 2, rng)
        assert objective(U, nbs, samples) == 0.0
        np.testing.assert_array_equal(gradient(U, nbs, samples), np.zeros((5, 2)))

    def test_objective_matches_direct_sum(self, small_dataset, rng):
        samples = small_dataset.samples
        nbs = build_neighborhoods(samples, DplmConfig(target_dim=3, k_neighbors=3))
        U = random_stiefel(6, 3, rng)

        expected = 0.0
        for nb in nbs:
            N = nb.local_mean
            for j in nb.neighbor_indices:
                X = samples[j].matrix
                expected += abs(jbld(X, N) - jbld(U.T @ X @ U, U.T @ N @ U))

        assert objective(U, nbs, samples) == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_invariant_to_rotation_inside_subspace(self, small_dataset, rng):
        samples = small_dataset.samples
        nbs = build_neighborhoods(samples, DplmConfig(target_dim=3, k_neighbors=3))
        U = random_stiefel(6, 3, rng)
        Q = random_stiefel(3, 3, rng)
        assert abs(objective(U, nbs, samples) - objective(U @ Q, nbs, samples)) < 1e-8

    def test_cayley_direction_decreases_objective(self, small_dataset, rng):
        samples = small_dataset.samples
        p = DplmProblem(samples, build_neighborhoods(samples, DplmConfig(target_dim=3, k_neighbors=3)))
        U = random_stiefel(6, 3, rng)
        assert p.evaluate(cayley_step(U, p.gradient(U), 1e-5)) < p.evaluate(U)


class TestCayleyProperties:

    def test_gradient_parallel_to_projection_is_stationary(self, rng):
        U = random_stiefel(6, 3, rng)
        for tau in (0.1, 1.0, 100.0):
            np.testing.assert_allclose(cayley_step(U, U, tau), U, atol=1e-15)

    def test_orthonormality_sweep(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 11))
            m = int(rng.integers(1, n + 1))
            U = random_stiefel(n, m, rng)
            G = rng.standard_normal((n, m))
            tau = float(10 ** rng.uniform(-3, 3))
            Y = cayley_step(U, G, tau)
            assert np.linalg.norm(Y.T @ Y - np.eye(m)) < 1e-10


class TestTransform:

    def test_identity_model(self, small_dataset):
        model = fit(small_dataset.samples, DplmConfig(target_dim=6, k_neighbors=3))
        X = small_dataset.samples[2].matrix
        np.testing.assert_array_equal(transform(model, X), X)

    def test_coordinate_selection(self, small_dataset):
        model = fit(small_dataset.samples, DplmConfig(target_dim=4, k_neighbors=3, max_outer_iterations=0))
        X = small_dataset.samples[0].matrix
        np.testing.assert_allclose(transform(model, X), X[:4, :4], atol=1e-15)

    def test_same_path_as_congruence(self, small_dataset):
        model = fit(small_dataset.samples, DplmConfig(target_dim=3, k_neighbors=3, init="random", max_outer_iterations=3))
        X = small_dataset.samples[1].matrix
        np.testing.assert_array_equal(transform(model, X), congruence(X, model.projection))

    def test_dimension_mismatch(self, small_dataset, rng):
        model = fit(small_dataset.samples, DplmConfig(target_dim=3, k_neighbors=3, max_outer_iterations=0))
        with pytest.raises(DimensionMismatchError):
            transform(model, random_spd(5, rng))

    def test_iterates_stay_feasible(self, small_dataset):
        cfg = DplmConfig(target_dim=2, k_neighbors=3, init="random", seed=3, max_outer_iterations=30)
        report = fit(small_dataset.samples, cfg).report
        assert all(r.feasibility < 1e-8 for r in report.records)
        assert report.qr_rescues == 0
