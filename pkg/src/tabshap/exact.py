"""Ground-truth Shapley solvers and the permutation-sampling estimator.

``shapley_exact`` is the brute-force oracle every other estimator is checked
against. ``shapley_permutation_exact`` computes the same values by averaging
marginal contributions over all M! orderings; it exists purely as an
independent cross-check. ``sampling_shap`` is the Monte Carlo version over
seeded random orderings.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .core import Coalition, Explanation, GameOracle
from .errors import CapacityError

MAX_EXACT_FEATURES = 20  # 2^M coalition evaluations
MAX_PERMUTATION_FEATURES = 8  # M! orderings


def _popcounts(n_masks: int) -> np.ndarray:
    return np.bitwise_count(np.arange(n_masks, dtype=np.uint64)).astype(np.int64)


def shapley_exact(game: GameOracle) -> Explanation:
    """Exact Shapley attributions by enumerating all 2^M coalitions.

    Each coalition value is evaluated exactly once and memoized; feature i's
    attribution is the factorially weighted sum of its marginal contributions
    over all coalitions excluding i.
    """
    m = game.m
    if m > MAX_EXACT_FEATURES:
        raise CapacityError(
            f"exact solver enumerates 2^m values; m={m} exceeds {MAX_EXACT_FEATURES}"
        )
    before = game.evaluations
    table = np.array([game.value(Coalition(mask, m)) for mask in range(1 << m)])

    sizes = _popcounts(1 << m)
    # weight(s) = s! (m - s - 1)! / m! for coalitions of size s missing i
    fact = [math.factorial(k) for k in range(m + 1)]
    weights = np.array(
        [fact[s] * fact[m - s - 1] / fact[m] for s in range(m)], dtype=float
    )

    masks = np.arange(1 << m, dtype=np.int64)
    phi = np.empty(m, dtype=float)
    for i in range(m):
        without = masks[(masks >> i) & 1 == 0]
        deltas = table[without | (1 << i)] - table[without]
        phi[i] = float(weights[sizes[without]] @ deltas)

    return Explanation(
        base_value=float(table[0]),
        attributions=phi,
        fx_full=float(table[-1]),
        method="exact",
        evaluations_used=game.evaluations - before,
    )


def shapley_permutation_exact(game: GameOracle) -> Explanation:
    """Exact Shapley attributions averaged over all M! feature orderings.

    Coalition values are memoized, so the oracle cost stays at 2^M; the
    arithmetic route is entirely different from :func:`shapley_exact`, which
    makes the two solvers independent cross-checks of one another.
    """
    m = game.m
    if m > MAX_PERMUTATION_FEATURES:
        raise CapacityError(
            f"permutation solver iterates m! orderings; m={m} exceeds "
            f"{MAX_PERMUTATION_FEATURES}"
        )
    before = game.evaluations
    cache: dict[int, float] = {}

    def value(mask: int) -> float:
        v = cache.get(mask)
        if v is None:
            v = game.value(Coalition(mask, m))
            cache[mask] = v
        return v

    totals = np.zeros(m, dtype=float)
    v_empty = value(0)
    for order in itertools.permutations(range(m)):
        prev = v_empty
        mask = 0
        for feat in order:
            mask |= 1 << feat
            cur = value(mask)
            totals[feat] += cur - prev
            prev = cur
    phi = totals / math.factorial(m)

    return Explanation(
        base_value=v_empty,
        attributions=phi,
        fx_full=value((1 << m) - 1),
        method="permutation_exact",
        evaluations_used=game.evaluations - before,
    )


def _random_orderings(rng: np.random.Generator, m: int, n: int, antithetic: bool):
    """n orderings; with antithetic pairing each drawn ordering is followed by its reverse."""
    if not antithetic:
        for _ in range(n):
            yield rng.permutation(m)
        return
    emitted = 0
    while emitted < n:
        order = rng.permutation(m)
        yield order
        emitted += 1
        if emitted < n:
            yield order[::-1]
            emitted += 1


def _exhaustive_orderings(m: int, n: int):
    """n orderings cycling lexicographically through all m! permutations."""
    pool = itertools.cycle(itertools.permutations(range(m)))
    return itertools.islice(pool, n)


def sampling_shap(
    game: GameOracle,
    n_permutations: int,
    seed: int = 0,
    antithetic: bool = True,
    exhaustive: bool = False,
) -> Explanation:
    """Monte Carlo Shapley estimate from uniform random feature orderings.

    For each ordering, every feature's marginal contribution on the growing
    prefix coalition is accumulated; attributions are the per-feature means,
    an unbiased estimate of the exact values. Consecutive prefixes share
    evaluations, so the oracle cost is n_permutations * M + 1. Antithetic
    pairing (on by default) also processes each drawn ordering's reverse,
    a variance reduction that preserves unbiasedness. ``exhaustive`` replaces
    the random draw with a deterministic lexicographic cycle through all M!
    orderings, which reproduces the exact values whenever n_permutations is a
    multiple of M!.
    """
    if n_permutations < 1:
        raise ValueError(f"n_permutations must be >= 1, got {n_permutations}")
    m = game.m
    before = game.evaluations
    v_empty = game.value(Coalition.empty(m))

    if exhaustive:
        orderings = _exhaustive_orderings(m, n_permutations)
    else:
        rng = np.random.default_rng(seed)
        orderings = _random_orderings(rng, m, n_permutations, antithetic)

    totals = np.zeros(m, dtype=float)
    v_full = v_empty
    for order in orderings:
        prev = v_empty
        mask = 0
        for feat in order:
            mask |= 1 << int(feat)
            cur = game.value(Coalition(mask, m))
            totals[feat] += cur - prev
            prev = cur
        v_full = prev  # last prefix is the full coalition

    return Explanation(
        base_value=v_empty,
        attributions=totals / n_permutations,
        fx_full=v_full,
        method="sampling",
        evaluations_used=game.evaluations - before,
    )
