"""Shared test helpers: an independent brute-force attribution oracle.

The oracle below is written straight from the weighted-marginal definition
with itertools machinery, deliberately sharing no code with the library's
solvers, so library results can be certified against it.
"""

import itertools
import math

import numpy as np
import pytest

from tabshap.core import Coalition, GameOracle, TabularGame


def brute_force_shapley(game: GameOracle) -> np.ndarray:
    """Reference attributions: weighted marginal contributions over all subsets."""
    m = game.m
    others = list(range(m))
    phi = np.zeros(m)
    for i in range(m):
        rest = [j for j in others if j != i]
        for size in range(m):
            weight = math.factorial(size) * math.factorial(m - size - 1) / math.factorial(m)
            for combo in itertools.combinations(rest, size):
                without = Coalition.of(combo, m)
                with_i = Coalition.of(combo + (i,), m)
                phi[i] += weight * (game.value(with_i) - game.value(without))
    return phi


def max_game_table(values, reference: float) -> np.ndarray:
    """Payoff table of v(S) = max(reference, max of member values)."""
    values = np.asarray(values, dtype=float)
    m = len(values)
    table = np.empty(1 << m)
    for mask in range(1 << m):
        best = reference
        for i in range(m):
            if (mask >> i) & 1 and values[i] > best:
                best = values[i]
        table[mask] = best
    return table


def random_tabular_game(rng: np.random.Generator, m: int, scale: float = 5.0) -> TabularGame:
    return TabularGame(rng.uniform(-scale, scale, size=1 << m))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
