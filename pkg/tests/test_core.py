import numpy as np
import pytest

from tabshap.core import (
    Coalition,
    Explanation,
    RestrictedGame,
    TabularGame,
    check_consistency_pair,
    check_local_accuracy,
    dummy_features,
    enumerate_coalitions,
    random_monotone_pair,
    symmetric_pairs,
)
from tabshap.errors import CapacityError, InvalidPairError, ShapeError
from tabshap.exact import shapley_exact

TOL = 1e-9


class TestCoalition:
    def test_basic_membership(self):
        c = Coalition.of([0, 2], 3)
        assert c.size == 2
        assert c.contains(0) and not c.contains(1) and c.contains(2)
        assert c.members() == (0, 2)
        assert c.complement().members() == (1,)

    def test_mask_outside_range_rejected(self):
        with pytest.raises(ValueError):
            Coalition(0b100, 2)
        with pytest.raises(ValueError):
            Coalition(0, 0)

    def test_indicator(self):
        assert Coalition.of([1], 3).indicator().tolist() == [0.0, 1.0, 0.0]

    def test_add_remove(self):
        c = Coalition.empty(4).add(2)
        assert c.members() == (2,)
        assert c.remove(2).size == 0


class TestEnumerateCoalitions:
    def test_m1(self):
        got = [c.members() for c in enumerate_coalitions(1)]
        assert got == [(), (0,)]

    def test_m2_exhaustive(self):
        got = [c.members() for c in enumerate_coalitions(2)]
        assert got == [(), (0,), (1,), (0, 1)]

    def test_m3_count_and_order(self):
        got = list(enumerate_coalitions(3))
        assert len(got) == 8
        assert got[0].size == 0
        assert got[-1].size == 3
        assert [c.mask for c in got] == list(range(8))

    @pytest.mark.parametrize("m", [0, 26])
    def test_guard(self, m):
        with pytest.raises(CapacityError):
            list(enumerate_coalitions(m))


class TestLocalAccuracy:
    def test_two_feature_split_passes(self):
        expl = Explanation(0.0, np.array([1.0, 1.0]), 2.0, "exact")
        assert check_local_accuracy(expl, TOL)

    def test_constant_model(self):
        expl = Explanation(5.0, np.array([]), 5.0, "exact")
        assert check_local_accuracy(expl)

    def test_violation(self):
        expl = Explanation(0.0, np.array([1.0, 1.0]), 3.0, "exact")
        assert not check_local_accuracy(expl)


class TestGameOracle:
    def test_counter_increments_once_per_call(self):
        game = TabularGame([0.0, 1.0, 2.0, 3.0])
        assert game.evaluations == 0
        game.value(Coalition.empty(2))
        game.value(Coalition.full(2))
        game.value(Coalition.full(2))
        assert game.evaluations == 3

    def test_determinism(self):
        game = TabularGame([0.0, 1.0, 2.0, 3.0])
        c = Coalition.of([0], 2)
        assert game.value(c) == game.value(c)

    def test_table_length_must_be_power_of_two(self):
        with pytest.raises(ValueError):
            TabularGame([1.0, 2.0, 3.0])

    def test_wrong_arity_rejected(self):
        game = TabularGame([0.0, 1.0, 2.0, 3.0])
        with pytest.raises(ShapeError):
            game.value(Coalition.empty(3))

    def test_restricted_game_maps_bits(self):
        parent = TabularGame(np.arange(8.0))  # v(S) = mask value
        sub = RestrictedGame(parent, [2, 0])
        # sub-bit 0 -> parent feature 2, sub-bit 1 -> parent feature 0
        assert sub.value(Coalition.of([0], 2)) == 4.0
        assert sub.value(Coalition.of([1], 2)) == 1.0
        assert sub.value(Coalition.full(2)) == 5.0


class TestAxiomHelpers:
    def test_dummy_detection(self):
        # v depends only on feature 0
        game = TabularGame([0.0, 2.0, 0.0, 2.0])
        assert dummy_features(game) == [1]

    def test_symmetric_detection(self):
        game = TabularGame([0.0, 5.0, 5.0, 2.0])
        assert symmetric_pairs(game) == [(0, 1)]


class TestConsistencyPair:
    def test_uniform_increase_passes(self, rng):
        table = rng.uniform(-1, 1, size=16)
        bumped = table.copy()
        for s in range(16):
            if s & 0b100:
                bumped[s] += 1.0
        assert check_consistency_pair(
            TabularGame(table), TabularGame(bumped), 2, shapley_exact
        )

    def test_equal_games_pass(self, rng):
        table = rng.uniform(-1, 1, size=8)
        assert check_consistency_pair(
            TabularGame(table), TabularGame(table.copy()), 1, shapley_exact
        )

    def test_non_monotone_pair_rejected(self):
        a = TabularGame([0.0, 1.0, 0.0, 1.0])
        b = TabularGame([0.0, 0.0, 0.0, 0.0])  # marginal of 0 decreased
        with pytest.raises(InvalidPairError):
            check_consistency_pair(a, b, 0, shapley_exact)

    def test_mismatched_m_rejected(self):
        with pytest.raises(ShapeError):
            check_consistency_pair(
                TabularGame([0.0, 1.0]), TabularGame([0.0] * 4), 0, shapley_exact
            )

    def test_random_monotone_pairs_m5(self, rng):
        for trial in range(100):
            i = int(rng.integers(0, 5))
            a, b = random_monotone_pair(rng, 5, i)
            assert check_consistency_pair(a, b, i, shapley_exact)


class TestCoreInvariants:
    """Efficiency, symmetry, and dummy axioms on the exact solver."""

    def test_efficiency_on_random_games(self, rng):
        for _ in range(20):
            game = TabularGame(rng.uniform(-5, 5, size=32))
            expl = shapley_exact(game)
            assert abs(expl.total - expl.fx_full) <= TOL

    def test_symmetry(self, rng):
        # Build a game where features 0 and 1 are interchangeable.
        m = 4
        table = np.empty(1 << m)
        base = rng.uniform(-3, 3, size=1 << m)
        for s in range(1 << m):
            a, b = (s >> 0) & 1, (s >> 1) & 1
            canon = (s & ~0b11) | ((a | b) << 0) | ((a & b) << 1)
            table[s] = base[canon]
        expl = shapley_exact(TabularGame(table))
        assert (0, 1) in symmetric_pairs(TabularGame(table))
        assert abs(expl.attributions[0] - expl.attributions[1]) <= TOL

    def test_dummy_gets_zero(self, rng):
        # Feature 3 never changes the payoff.
        m = 4
        base = rng.uniform(-3, 3, size=1 << (m - 1))
        table = np.array([base[s & 0b111] for s in range(1 << m)])
        game = TabularGame(table)
        assert 3 in dummy_features(game)
        expl = shapley_exact(TabularGame(table))
        assert abs(expl.attributions[3]) <= TOL

    def test_evaluation_accounting(self):
        game = TabularGame(np.arange(16.0))
        expl = shapley_exact(game)
        assert expl.evaluations_used == game.evaluations == 16
