import numpy as np
import pytest

from empbench import (CorrectionVector, DegenerateReference, KernelSpec, QuadraticForm,
                      SolverParams, TabularPolicy, TransitionDataset,
                      assemble_state_action_quadratic, assemble_state_quadratic,
                      build_singlepath, importance_ratio, learn_bch, learn_bch_pooled,
                      learn_emp, learn_sadl, population_dataset, sample_trajectories,
                      solve_normalized_quadratic, stationary_distribution, tv_distance)
from empbench.policies import empirical_state_distribution

from helpers import (naive_state_action_objective, naive_state_quadratic, random_mdp,
                     random_policy, random_soft_policy, stationary_start)


def random_dataset(rng, num_states, num_actions, n, unit_weights=True):
    return TransitionDataset(
        s=rng.integers(0, num_states, n),
        a=rng.integers(0, num_actions, n),
        sp=rng.integers(0, num_states, n),
        r=rng.normal(size=n),
        weights=None if unit_weights else rng.random(n) + 0.1,
    )


class TestImportanceRatio:
    def test_identical_policies(self):
        rng = np.random.default_rng(0)
        policy = random_policy(rng, 3, 2)
        assert importance_ratio(policy, policy, 1, 0) == 1.0

    def test_simple_ratio(self):
        target = TabularPolicy(np.array([[0.6, 0.4]]))
        denom = TabularPolicy(np.array([[0.3, 0.7]]))
        assert importance_ratio(target, denom, 0, 0) == pytest.approx(2.0)

    def test_matches_direct_division(self):
        rng = np.random.default_rng(1)
        target, denom = random_policy(rng, 4, 3), random_policy(rng, 4, 3)
        for s in range(4):
            for a in range(3):
                assert importance_ratio(target, denom, s, a) == pytest.approx(
                    target.probs[s, a] / denom.probs[s, a], rel=1e-12)


class TestStateQuadratic:
    def test_on_policy_objective_vanishes_at_one(self):
        rng = np.random.default_rng(2)
        policy = random_policy(rng, 4, 2)
        data = random_dataset(rng, 4, 2, 30)
        qf = assemble_state_quadratic(data, policy, policy, KernelSpec.state_delta(), 4)
        assert qf.value(np.ones(4)) == 0.0

    def test_symmetric_and_psd(self):
        rng = np.random.default_rng(3)
        target, denom = random_policy(rng, 5, 3), random_policy(rng, 5, 3)
        data = random_dataset(rng, 5, 3, 40, unit_weights=False)
        qf = assemble_state_quadratic(data, target, denom, KernelSpec.state_delta(), 5)
        mat = qf.normalized_matrix()
        np.testing.assert_allclose(mat, mat.T, atol=1e-10)
        assert np.linalg.eigvalsh(mat).min() >= -1e-8

    def test_matches_naive_double_sum_delta(self):
        rng = np.random.default_rng(4)
        target, denom = random_policy(rng, 3, 2), random_policy(rng, 3, 2)
        data = random_dataset(rng, 3, 2, 20)
        qf = assemble_state_quadratic(data, target, denom, KernelSpec.state_delta(), 3)
        oracle = naive_state_quadratic(data, target, denom,
                                       lambda x, y: float(x == y), 3)
        np.testing.assert_allclose(qf.normalized_matrix(), oracle, atol=1e-12)

    def test_matches_naive_double_sum_gaussian(self):
        rng = np.random.default_rng(5)
        target, denom = random_policy(rng, 3, 2), random_policy(rng, 3, 2)
        data = random_dataset(rng, 3, 2, 15, unit_weights=False)
        bandwidth = 0.8
        kernel = KernelSpec.gaussian(bandwidth)
        qf = assemble_state_quadratic(data, target, denom, kernel, 3)

        def kfunc(x, y):  # one-hot embedding: squared distance 0 or 2
            return float(np.exp(-(0.0 if x == y else 2.0) / (2 * bandwidth**2)))

        oracle = naive_state_quadratic(data, target, denom, kfunc, 3)
        np.testing.assert_allclose(qf.normalized_matrix(), oracle, atol=1e-12)

    def test_quadratic_homogeneity(self):
        rng = np.random.default_rng(6)
        target, denom = random_policy(rng, 4, 2), random_policy(rng, 4, 2)
        data = random_dataset(rng, 4, 2, 25)
        qf = assemble_state_quadratic(data, target, denom, KernelSpec.state_delta(), 4)
        omega = rng.random(4) + 0.5
        for c in (0.5, 2.0, 7.3):
            assert qf.value(c * omega) == pytest.approx(c**2 * qf.value(omega), rel=1e-10)

    def test_dump_roundtrip(self, tmp_path):
        rng = np.random.default_rng(7)
        target, denom = random_policy(rng, 3, 2), random_policy(rng, 3, 2)
        data = random_dataset(rng, 3, 2, 10)
        qf = assemble_state_quadratic(data, target, denom, KernelSpec.state_delta(), 3)
        path = tmp_path / "form.txt"
        qf.dump(path)
        np.testing.assert_allclose(np.loadtxt(path), qf.normalized_matrix(), rtol=1e-12)


class TestStateActionQuadratic:
    def test_zero_correction_gives_zero(self):
        rng = np.random.default_rng(8)
        target = random_policy(rng, 3, 2)
        data = random_dataset(rng, 3, 2, 10)
        qf = assemble_state_action_quadratic(data, target, [0.5, 0.5],
                                             KernelSpec.state_action_delta(), 3, 2)
        assert qf.value(np.zeros(6)) == 0.0

    def test_matches_four_term_double_sum(self):
        rng = np.random.default_rng(9)
        target = random_policy(rng, 2, 2)
        data = random_dataset(rng, 2, 2, 10)
        nu = np.array([0.3, 0.7])
        qf = assemble_state_action_quadratic(data, target, nu,
                                             KernelSpec.state_action_delta(), 2, 2)
        for _ in range(5):
            u = rng.random((2, 2))
            oracle = naive_state_action_objective(
                data, target, nu, lambda x, y: float(x == y), u)
            assert qf.value(u.ravel()) == pytest.approx(oracle, abs=1e-12)

    def test_matches_four_term_double_sum_gaussian(self):
        rng = np.random.default_rng(10)
        target = random_policy(rng, 2, 2)
        data = random_dataset(rng, 2, 2, 8, unit_weights=False)
        nu = np.array([0.4, 0.6])
        bandwidth = 1.1
        kernel = KernelSpec.gaussian(bandwidth)
        qf = assemble_state_action_quadratic(data, target, nu, kernel, 2, 2)

        def kfunc(x, y):  # one-hot state and action blocks
            sq = (0.0 if x[0] == y[0] else 2.0) + (0.0 if x[1] == y[1] else 2.0)
            return float(np.exp(-sq / (2 * bandwidth**2)))

        for _ in range(3):
            u = rng.random((2, 2))
            oracle = naive_state_action_objective(data, target, nu, kfunc, u)
            assert qf.value(u.ravel()) == pytest.approx(oracle, abs=1e-12)

    def test_symmetric_and_psd(self):
        rng = np.random.default_rng(11)
        target = random_policy(rng, 4, 3)
        data = random_dataset(rng, 4, 3, 30, unit_weights=False)
        qf = assemble_state_action_quadratic(data, target, np.full(3, 1 / 3),
                                             KernelSpec.state_action_delta(), 4, 3)
        mat = qf.normalized_matrix()
        np.testing.assert_allclose(mat, mat.T, atol=1e-10)
        assert np.linalg.eigvalsh(mat).min() >= -1e-8

    def test_rejects_state_kernel(self):
        rng = np.random.default_rng(12)
        target = random_policy(rng, 3, 2)
        data = random_dataset(rng, 3, 2, 5)
        with pytest.raises(ValueError):
            assemble_state_action_quadratic(data, target, [0.5, 0.5],
                                            KernelSpec.state_delta(), 3, 2)


def enumerate_active_sets(matrix, reference):
    """Constrained-QP oracle for small dimensions: solve the KKT system for
    every candidate set of free coordinates and keep the best feasible
    stationary point."""
    dim = len(reference)
    best = np.inf
    for mask in range(1, 2**dim):
        free = [i for i in range(dim) if mask >> i & 1]
        sub = matrix[np.ix_(free, free)]
        ref = reference[free]
        kkt = np.block([[2 * sub, ref[:, None]], [ref[None, :], np.zeros((1, 1))]])
        rhs = np.zeros(len(free) + 1)
        rhs[-1] = 1.0
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        x_free = sol[:-1]
        if np.abs(kkt @ sol - rhs).max() > 1e-8 or np.any(x_free < -1e-10):
            continue
        x = np.zeros(dim)
        x[free] = np.maximum(x_free, 0.0)
        best = min(best, float(x @ matrix @ x))
    return best


class TestSolver:
    def test_zero_matrix_returns_initial_point(self):
        qf = QuadraticForm(np.zeros((3, 3)), 3)
        x = solve_normalized_quadratic(qf, np.full(3, 1 / 3))
        np.testing.assert_array_equal(x, np.ones(3))

    def test_mass_flees_penalized_coordinate(self):
        qf = QuadraticForm(np.diag([0.0, 1.0]), 2)
        x = solve_normalized_quadratic(qf, np.array([0.5, 0.5]))
        np.testing.assert_allclose(x, [2.0, 0.0], atol=1e-6)

    def test_matches_active_set_oracle(self):
        rng = np.random.default_rng(13)
        for trial in range(5):
            b = rng.normal(size=(5, 5))
            matrix = b.T @ b
            reference = rng.dirichlet(np.ones(5))
            qf = QuadraticForm(matrix, 5)
            x = solve_normalized_quadratic(qf, reference, iters=50000, seed=trial)
            oracle = enumerate_active_sets(matrix, reference)
            assert qf.value(x) <= oracle + 1e-4

    def test_constraints_hold(self):
        rng = np.random.default_rng(14)
        b = rng.normal(size=(6, 6))
        qf = QuadraticForm(b.T @ b, 6)
        reference = rng.dirichlet(np.ones(6))
        x = solve_normalized_quadratic(qf, reference, seed=0)
        assert np.all(x >= 0)
        assert reference @ x == pytest.approx(1.0, abs=1e-6)

    def test_objective_monotone_on_accepted_iterates(self):
        rng = np.random.default_rng(15)
        b = rng.normal(size=(8, 8))
        qf = QuadraticForm(b.T @ b, 8)
        trace = []
        solve_normalized_quadratic(qf, rng.dirichlet(np.ones(8)), trace=trace)
        diffs = np.diff(trace)
        assert np.all(diffs <= 0)

    def test_empty_reference_raises(self):
        qf = QuadraticForm(np.eye(2), 2)
        with pytest.raises(DegenerateReference):
            solve_normalized_quadratic(qf, np.zeros(2))

    def test_reference_collapsing_to_clipped_coordinate_raises(self):
        # an oversized explicit step clips away the only coordinate the
        # reference weights
        qf = QuadraticForm(np.array([[1.0, -2.0], [-2.0, 5.0]]), 2)
        with pytest.raises(DegenerateReference):
            solve_normalized_quadratic(qf, np.array([0.0, 1.0]), step=10.0)


@pytest.fixture(scope="module")
def singlepath_policies():
    mdp = build_singlepath()
    b1 = TabularPolicy(np.array([[0.9, 0.1], [0.2, 0.8], [0.5, 0.5],
                                 [0.7, 0.3], [0.4, 0.6]]))
    b2 = TabularPolicy(np.array([[0.3, 0.7], [0.8, 0.2], [0.6, 0.4],
                                 [0.1, 0.9], [0.9, 0.1]]))
    target = TabularPolicy(np.array([[0.8, 0.2], [0.4, 0.6], [0.7, 0.3],
                                     [0.5, 0.5], [0.6, 0.4]]))
    return mdp, b1, b2, target


class TestLearnBch:
    def test_on_policy_correction_is_one(self, singlepath_policies):
        mdp, behavior, _, _ = singlepath_policies
        trajs = sample_trajectories(stationary_start(mdp, behavior), behavior,
                                    100, 1000, seed=0)
        data = TransitionDataset.from_trajectories(trajs)
        omega = learn_bch(data, behavior, behavior)
        visits = np.bincount(data.s, minlength=5)
        assert np.abs(omega.values[visits >= 200] - 1.0).max() <= 0.05

    def test_population_quadratic_recovers_true_ratio(self):
        rng = np.random.default_rng(16)
        for trial in range(4):
            mdp = random_mdp(rng, 4, 3)
            behavior = random_policy(rng, 4, 3)
            target = random_policy(rng, 4, 3)
            data = population_dataset(mdp, behavior)
            omega = learn_bch(data, target, behavior)
            truth = (stationary_distribution(mdp, target).probs
                     / stationary_distribution(mdp, behavior).probs)
            assert np.abs(omega.values - truth).max() <= 1e-3

    def test_population_objective_vanishes_at_true_ratio(self):
        rng = np.random.default_rng(17)
        for num_states in (3, 4, 5):
            mdp = random_mdp(rng, num_states, 2)
            behavior = random_policy(rng, num_states, 2)
            target = random_policy(rng, num_states, 2)
            data = population_dataset(mdp, behavior)
            qf = assemble_state_quadratic(data, target, behavior,
                                          KernelSpec.state_delta(), num_states)
            truth = (stationary_distribution(mdp, target).probs
                     / stationary_distribution(mdp, behavior).probs)
            assert qf.value(truth) <= 1e-8

    def test_normalization_and_nonnegativity(self, singlepath_policies):
        mdp, behavior, _, target = singlepath_policies
        trajs = sample_trajectories(mdp, behavior, 20, 50, seed=1)
        data = TransitionDataset.from_trajectories(trajs)
        omega = learn_bch(data, target, behavior)
        assert np.all(omega.values >= 0)
        assert omega.reference_dist.probs @ omega.values == pytest.approx(1.0, abs=1e-6)


class TestLearnBchPooled:
    def test_single_label_bit_identical_to_plain(self, singlepath_policies):
        mdp, behavior, _, target = singlepath_policies
        trajs = sample_trajectories(mdp, behavior, 30, 60, seed=2)
        data = TransitionDataset.from_trajectories(trajs)
        plain = learn_bch(data, target, behavior)
        pooled = learn_bch_pooled(data, target, [behavior])
        assert np.array_equal(plain.values, pooled.values)

    def test_identical_behaviors_match_plain(self, singlepath_policies):
        mdp, behavior, _, target = singlepath_policies
        trajs = sample_trajectories(mdp, behavior, 15, 60, seed=3, label=0)
        trajs += sample_trajectories(mdp, behavior, 15, 60, seed=4, label=1)
        data = TransitionDataset.from_trajectories(trajs)
        pooled = learn_bch_pooled(data, target, [behavior, behavior])
        plain = learn_bch(data, target, behavior)
        assert np.array_equal(pooled.values, plain.values)

    def test_missing_labels_raise(self, singlepath_policies):
        mdp, behavior, _, target = singlepath_policies
        data = TransitionDataset(s=[0, 1], a=[0, 1], sp=[1, 1], r=[1.0, -1.0])
        from empbench import MissingLabel
        with pytest.raises(MissingLabel):
            learn_bch_pooled(data, target, [behavior])

    def test_two_behavior_population_objective_is_optimal(self, singlepath_policies):
        # the per-label-ratio objective has its own fixed point; verify the
        # solver drives the population objective to (numerical) zero rather
        # than asserting a closed-form target
        mdp, b1, b2, target = singlepath_policies
        data = population_dataset(mdp, [b1, b2], weights=[0.5, 0.5])
        omega = learn_bch_pooled(data, target, [b1, b2],
                                 solver=SolverParams(iters=60000))
        stacked = np.stack([b1.probs, b2.probs])
        rho = target.probs[data.s, data.a] / stacked[data.labels, data.s, data.a]
        # independent objective evaluation on the returned correction
        delta = omega.values[data.s] * rho - omega.values[data.sp]
        total = 0.0
        for t in np.unique(data.sp):
            group = data.sp == t
            total += float((data.weights[group] * delta[group]).sum()) ** 2
        assert total / data.weights.sum() ** 2 <= 1e-8


class TestLearnEmp:
    def test_on_policy_correction_is_one(self, singlepath_policies):
        mdp, behavior, _, _ = singlepath_policies
        trajs = sample_trajectories(stationary_start(mdp, behavior), behavior,
                                    100, 1000, seed=5)
        data = TransitionDataset.from_trajectories(trajs)
        omega = learn_emp(data, behavior)
        visits = np.bincount(data.s, minlength=5)
        assert np.abs(omega.values[visits >= 200] - 1.0).max() <= 0.05

    def test_pooled_two_behaviors_recovers_target_distribution(self, singlepath_policies):
        mdp, b1, b2, target = singlepath_policies
        trajs = sample_trajectories(stationary_start(mdp, b1), b1, 50, 1000, seed=6,
                                    label=0)
        trajs += sample_trajectories(stationary_start(mdp, b2), b2, 50, 1000, seed=7,
                                     label=1)
        data = TransitionDataset.from_trajectories(trajs)
        omega = learn_emp(data, target)
        d_target = stationary_distribution(mdp, target)
        assert tv_distance(omega.implied_distribution(), d_target) <= 0.05


class TestLearnSadl:
    def test_on_policy_correction_inverts_behavior(self, singlepath_policies):
        mdp, behavior, _, _ = singlepath_policies
        trajs = sample_trajectories(stationary_start(mdp, behavior), behavior,
                                    100, 1000, seed=8)
        data = TransitionDataset.from_trajectories(trajs)
        u = learn_sadl(data, behavior)
        product = u.values * behavior.probs
        visits = np.zeros((5, 2))
        np.add.at(visits, (data.s, data.a), 1)
        assert np.abs(product[visits >= 200] - 1.0).max() <= 0.1

    def test_population_quadratic_recovers_state_action_ratio(self):
        # softened policies keep the true state-action ratio bounded, as in
        # every experiment this library targets
        rng = np.random.default_rng(18)
        for trial in range(4):
            mdp = random_mdp(rng, 3, 2)
            behavior = random_soft_policy(rng, 3, 2)
            target = random_soft_policy(rng, 3, 2)
            data = population_dataset(mdp, behavior)
            u = learn_sadl(data, target, solver=SolverParams(iters=60000))
            d_pi = stationary_distribution(mdp, target).probs
            d_b = stationary_distribution(mdp, behavior).probs
            truth = d_pi[:, None] / (d_b[:, None] * behavior.probs)
            assert np.abs(u.values - truth).max() <= 1e-2

    def test_invariants(self, singlepath_policies):
        mdp, behavior, _, target = singlepath_policies
        trajs = sample_trajectories(mdp, behavior, 30, 100, seed=9)
        data = TransitionDataset.from_trajectories(trajs)
        u = learn_sadl(data, target)
        assert np.all(u.values >= 0)
        assert np.sum(u.reference * u.values) == pytest.approx(1.0, abs=1e-6)


class TestCorrectionVector:
    def test_normalization_validated(self):
        ref = empirical_state_distribution(
            TransitionDataset(s=[0, 1], a=[0, 0], sp=[1, 0], r=[0.0, 0.0]), 2)
        with pytest.raises(ValueError):
            CorrectionVector(np.array([5.0, 5.0]), ref)

    def test_implied_distribution_renormalizes(self):
        ref = empirical_state_distribution(
            TransitionDataset(s=[0, 0, 0, 1], a=[0] * 4, sp=[1] * 4, r=[0.0] * 4), 2)
        omega = CorrectionVector(np.array([1.0, 1.0]), ref)
        dist = omega.implied_distribution()
        np.testing.assert_allclose(dist.probs, [0.75, 0.25])
