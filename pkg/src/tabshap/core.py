"""Domain types shared by every estimator.

A *coalition* is a subset of the M simplified features, stored as an integer
bitmask. A *game* maps coalitions to real payoffs; estimators only ever see
the :class:`GameOracle` interface, so the same solvers run against explicit
payoff tables, masked model expectations, or anything else. An
*explanation* is the additive decomposition ``base_value + sum(attributions)``
of the full-coalition payoff.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidPairError, ShapeError

# Exhaustive enumeration over 2^M coalitions is only feasible at small M.
MAX_ENUM_FEATURES = 25

# Default tolerances: analytic paths should be tight, regression paths are
# solved in floating point through an orthogonal decomposition.
ANALYTIC_TOL = 1e-9
REGRESSION_TOL = 1e-6


@dataclass(frozen=True)
class Coalition:
    """A subset of features 0..m-1, stored as a bitmask."""

    mask: int
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"coalition needs m >= 1, got {self.m}")
        if self.mask < 0 or self.mask >> self.m:
            raise ValueError(
                f"mask {self.mask:#x} has bits outside feature range 0..{self.m - 1}"
            )

    @classmethod
    def empty(cls, m: int) -> "Coalition":
        return cls(0, m)

    @classmethod
    def full(cls, m: int) -> "Coalition":
        return cls((1 << m) - 1, m)

    @classmethod
    def of(cls, members, m: int) -> "Coalition":
        mask = 0
        for i in members:
            mask |= 1 << i
        return cls(mask, m)

    @property
    def size(self) -> int:
        return self.mask.bit_count()

    def contains(self, i: int) -> bool:
        return bool((self.mask >> i) & 1)

    def add(self, i: int) -> "Coalition":
        return Coalition(self.mask | (1 << i), self.m)

    def remove(self, i: int) -> "Coalition":
        return Coalition(self.mask & ~(1 << i), self.m)

    def complement(self) -> "Coalition":
        return Coalition(self.mask ^ ((1 << self.m) - 1), self.m)

    def members(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.m) if (self.mask >> i) & 1)

    def indicator(self) -> np.ndarray:
        """0/1 membership vector of length m."""
        return np.array([(self.mask >> i) & 1 for i in range(self.m)], dtype=float)


def enumerate_coalitions(m: int):
    """Yield all 2^m coalitions in ascending mask order (empty first, full last)."""
    if m < 1 or m > MAX_ENUM_FEATURES:
        raise CapacityError(
            f"exhaustive enumeration supports 1 <= m <= {MAX_ENUM_FEATURES}, got {m}"
        )
    for mask in range(1 << m):
        yield Coalition(mask, m)


@dataclass(frozen=True)
class Explanation:
    """Additive attribution of a single prediction.

    ``base_value`` is the payoff of the empty coalition (the model's
    expectation when no feature is known) and ``attributions[i]`` is the share
    assigned to feature i. For exact methods the parts sum to ``fx_full``.
    """

    base_value: float
    attributions: np.ndarray
    fx_full: float
    method: str
    evaluations_used: int = 0

    def __post_init__(self):
        arr = np.asarray(self.attributions, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "attributions", arr)
        if self.evaluations_used < 0:
            raise ValueError("evaluations_used must be nonnegative")

    @property
    def m(self) -> int:
        return len(self.attributions)

    @property
    def total(self) -> float:
        return float(self.base_value + self.attributions.sum())


class GameOracle(ABC):
    """A set function v(S) over coalitions of m features.

    Subclasses implement :meth:`_evaluate`; callers go through :meth:`value`,
    which keeps the evaluation count. Evaluation must be deterministic: the
    same coalition always yields the same payoff. The counter is the only
    mutable state, so instances are confined to one estimator run at a time
    (or updated under an external lock when shared).
    """

    def __init__(self, m: int):
        if m < 1:
            raise ValueError(f"game needs m >= 1, got {m}")
        self._m = m
        self._evaluations = 0

    @property
    def m(self) -> int:
        return self._m

    @property
    def evaluations(self) -> int:
        """Number of coalition evaluations performed so far."""
        return self._evaluations

    def value(self, coalition: Coalition) -> float:
        if coalition.m != self._m:
            raise ShapeError(
                f"coalition over {coalition.m} features passed to a {self._m}-feature game"
            )
        self._evaluations += 1
        return float(self._evaluate(coalition))

    @abstractmethod
    def _evaluate(self, coalition: Coalition) -> float: ...


class TabularGame(GameOracle):
    """A game given by an explicit table of 2^m payoffs indexed by mask."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        n = len(values)
        m = n.bit_length() - 1
        if n < 2 or (1 << m) != n:
            raise ValueError(f"payoff table length must be a power of two >= 2, got {n}")
        super().__init__(m)
        values.flags.writeable = False
        self.values = values

    def _evaluate(self, coalition: Coalition) -> float:
        return self.values[coalition.mask]


class RestrictedGame(GameOracle):
    """The sub-game induced on a subset of features, all others held absent.

    Used to compute exact values when the remaining features are provable
    dummies (e.g. a tree that never reads them), so v only depends on the
    active coordinates.
    """

    def __init__(self, parent: GameOracle, active_features):
        self.parent = parent
        self.active = tuple(active_features)
        if len(set(self.active)) != len(self.active):
            raise ValueError("active feature list contains duplicates")
        for i in self.active:
            if not 0 <= i < parent.m:
                raise ValueError(f"active feature {i} out of range for m={parent.m}")
        super().__init__(len(self.active))

    def _evaluate(self, coalition: Coalition) -> float:
        mask = 0
        for bit, feat in enumerate(self.active):
            if (coalition.mask >> bit) & 1:
                mask |= 1 << feat
        return self.parent.value(Coalition(mask, self.parent.m))


def check_local_accuracy(expl: Explanation, tol: float = ANALYTIC_TOL) -> bool:
    """True iff base_value + sum(attributions) matches the full payoff within tol."""
    return abs(expl.total - expl.fx_full) <= tol


def dummy_features(game: GameOracle) -> list[int]:
    """Features whose marginal contribution is zero on every coalition.

    Enumerates all 2^m coalitions; only usable at small m.
    """
    table = _payoff_table(game)
    m = game.m
    out = []
    for i in range(m):
        bit = 1 << i
        if all(table[s | bit] == table[s] for s in range(1 << m) if not s & bit):
            out.append(i)
    return out


def symmetric_pairs(game: GameOracle) -> list[tuple[int, int]]:
    """Pairs (i, j) that are interchangeable: v(S+i) = v(S+j) for all S excluding both."""
    table = _payoff_table(game)
    m = game.m
    pairs = []
    for i in range(m):
        for j in range(i + 1, m):
            bi, bj = 1 << i, 1 << j
            if all(
                table[s | bi] == table[s | bj]
                for s in range(1 << m)
                if not s & (bi | bj)
            ):
                pairs.append((i, j))
    return pairs


def _payoff_table(game: GameOracle) -> np.ndarray:
    if game.m > MAX_ENUM_FEATURES:
        raise CapacityError(f"axiom audit enumerates 2^m values; m={game.m} too large")
    return np.array([game.value(c) for c in enumerate_coalitions(game.m)])


def check_consistency_pair(
    game_a: GameOracle,
    game_b: GameOracle,
    i: int,
    exact_solver,
    tol: float = ANALYTIC_TOL,
) -> bool:
    """Verify the monotone-attribution property for feature i across two games.

    Requires that feature i's marginal contribution in ``game_b`` dominates its
    marginal in ``game_a`` on every coalition; this precondition is checked by
    enumeration (m <= 12) and a violation raises :class:`InvalidPairError`
    rather than passing silently. Returns True iff the exact attribution of i
    did not decrease from a to b.
    """
    if game_a.m != game_b.m:
        raise ShapeError("games must share the feature count")
    m = game_a.m
    if m > 12:
        raise CapacityError(f"precondition enumeration supports m <= 12, got {m}")
    if not 0 <= i < m:
        raise ValueError(f"feature index {i} out of range for m={m}")

    table_a = _payoff_table(game_a)
    table_b = _payoff_table(game_b)
    bit = 1 << i
    for s in range(1 << m):
        if s & bit:
            continue
        delta_a = table_a[s | bit] - table_a[s]
        delta_b = table_b[s | bit] - table_b[s]
        if delta_b < delta_a - tol:
            raise InvalidPairError(
                f"marginal of feature {i} on coalition {s:#x} decreased from "
                f"{delta_a} to {delta_b}; the pair is not monotone"
            )

    phi_a = exact_solver(TabularGame(table_a)).attributions[i]
    phi_b = exact_solver(TabularGame(table_b)).attributions[i]
    return phi_b >= phi_a - tol


def random_monotone_pair(rng: np.random.Generator, m: int, i: int, scale: float = 1.0):
    """Build a seeded (game_a, game_b) pair satisfying the consistency precondition.

    game_b equals game_a except that every marginal contribution of feature i
    is increased by an independent nonnegative increment.
    """
    if not 0 <= i < m:
        raise ValueError(f"feature index {i} out of range for m={m}")
    table_a = rng.uniform(-scale, scale, size=1 << m)
    table_b = table_a.copy()
    bit = 1 << i
    for s in range(1 << m):
        if not s & bit:
            table_b[s | bit] += rng.uniform(0.0, scale)
    return TabularGame(table_a), TabularGame(table_b)
