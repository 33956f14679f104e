import numpy as np
import pytest

from tabshap.core import TabularGame, random_monotone_pair, check_consistency_pair
from tabshap.errors import CapacityError
from tabshap.exact import sampling_shap, shapley_exact, shapley_permutation_exact

from conftest import brute_force_shapley, max_game_table, random_tabular_game

TOL = 1e-9

SICKNESS_GAME = [0.0, 5.0, 5.0, 2.0]  # empty, {fever}, {cough}, both


class TestShapleyExact:
    def test_sickness_game(self):
        expl = shapley_exact(TabularGame(SICKNESS_GAME))
        # By hand: fever first contributes 5, fever second contributes 2-5=-3;
        # each ordering equally likely, so phi = (5 - 3) / 2 = 1 for both.
        assert expl.base_value == 0.0
        assert np.abs(expl.attributions - [1.0, 1.0]).max() <= TOL
        assert expl.fx_full == 2.0

    def test_additive_game(self, rng):
        c = rng.uniform(-2, 2, size=5)
        table = np.array([sum(c[i] for i in range(5) if (s >> i) & 1) for s in range(32)])
        expl = shapley_exact(TabularGame(table))
        assert np.abs(expl.attributions - c).max() <= TOL

    def test_quiz_max_game(self):
        expl = shapley_exact(TabularGame(max_game_table([5.0, 4.0, 0.0], 0.0)))
        assert np.abs(expl.attributions - [3.0, 2.0, 0.0]).max() <= TOL

    def test_against_independent_brute_force(self, rng):
        for m in (2, 3, 4):
            game = random_tabular_game(rng, m)
            expl = shapley_exact(TabularGame(game.values))
            want = brute_force_shapley(game)
            assert np.abs(expl.attributions - want).max() <= TOL

    def test_each_coalition_evaluated_once(self):
        game = TabularGame(np.arange(32.0))
        expl = shapley_exact(game)
        assert game.evaluations == 32
        assert expl.evaluations_used == 32

    def test_capacity_guard(self):
        class Big(TabularGame):
            pass

        game = TabularGame(np.zeros(2))
        game._m = 21  # simulate an oversized game
        with pytest.raises(CapacityError):
            shapley_exact(game)


class TestPermutationExact:
    def test_sickness_game(self):
        expl = shapley_permutation_exact(TabularGame(SICKNESS_GAME))
        assert np.abs(expl.attributions - [1.0, 1.0]).max() <= TOL

    def test_single_feature(self):
        expl = shapley_permutation_exact(TabularGame([2.5, 7.0]))
        assert expl.base_value == 2.5
        assert abs(expl.attributions[0] - 4.5) <= TOL

    def test_agrees_with_exact(self, rng):
        for m in range(2, 8):
            game = random_tabular_game(rng, m)
            a = shapley_exact(TabularGame(game.values))
            b = shapley_permutation_exact(TabularGame(game.values))
            assert np.abs(a.attributions - b.attributions).max() <= TOL

    def test_capacity_guard(self):
        game = TabularGame(np.zeros(2))
        game._m = 9
        with pytest.raises(CapacityError):
            shapley_permutation_exact(game)


class TestSamplingShap:
    def test_sickness_game_close_to_exact(self):
        for antithetic in (True, False):
            expl = sampling_shap(
                TabularGame(SICKNESS_GAME), 2000, seed=7, antithetic=antithetic
            )
            assert np.abs(expl.attributions - 1.0).max() < 0.15

    def test_additive_game_exact_after_one_permutation(self, rng):
        c = rng.uniform(-2, 2, size=4)
        table = np.array([sum(c[i] for i in range(4) if (s >> i) & 1) for s in range(16)])
        expl = sampling_shap(TabularGame(table), 1, seed=0)
        assert np.abs(expl.attributions - c).max() <= TOL

    def test_unbiasedness_50_replicates(self):
        rng = np.random.default_rng(11)
        table = rng.uniform(-1, 1, size=64)
        exact = shapley_exact(TabularGame(table)).attributions
        reps = np.array(
            [sampling_shap(TabularGame(table), 512, seed=s).attributions for s in range(50)]
        )
        assert np.abs(reps.mean(axis=0) - exact).max() < 0.02

    def test_exhaustive_orderings_reproduce_exact(self, rng):
        import math

        for m, k in ((3, 1), (3, 2), (4, 1)):
            game = random_tabular_game(rng, m)
            expl = sampling_shap(game, math.factorial(m) * k, exhaustive=True)
            want = shapley_exact(TabularGame(game.values)).attributions
            assert np.abs(expl.attributions - want).max() <= TOL

    def test_evaluation_accounting(self, rng):
        game = random_tabular_game(rng, 5)
        expl = sampling_shap(game, 40, seed=1)
        assert expl.evaluations_used == 40 * 5 + 1
        assert expl.evaluations_used == game.evaluations

    def test_seeded_reproducibility(self, rng):
        game_values = random_tabular_game(rng, 6).values
        a = sampling_shap(TabularGame(game_values), 100, seed=9)
        b = sampling_shap(TabularGame(game_values), 100, seed=9)
        assert np.array_equal(a.attributions, b.attributions)

    def test_rejects_nonpositive_count(self, rng):
        with pytest.raises(ValueError):
            sampling_shap(random_tabular_game(rng, 3), 0)


class TestExactInvariants:
    def test_solver_agreement_200_games(self):
        rng = np.random.default_rng(777)
        for trial in range(200):
            m = 2 + trial % 6
            game = random_tabular_game(rng, m)
            a = shapley_exact(TabularGame(game.values))
            b = shapley_permutation_exact(TabularGame(game.values))
            assert np.abs(a.attributions - b.attributions).max() <= TOL
            assert abs(a.total - a.fx_full) <= TOL

    def test_consistency_100_monotone_pairs(self):
        rng = np.random.default_rng(888)
        for trial in range(100):
            m = int(rng.integers(2, 6))
            i = int(rng.integers(0, m))
            a, b = random_monotone_pair(rng, m, i)
            assert check_consistency_pair(a, b, i, shapley_exact)
