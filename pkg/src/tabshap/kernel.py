"""Kernel-weighted linear regression estimation of Shapley values.

The estimator evaluates the game on a budgeted design of coalitions, weights
each row by the Shapley kernel of its size, and solves a weighted least
squares problem whose solution is the attribution vector. The empty and full
coalitions carry infinite kernel weight; they are handled exactly by
eliminating two variables: the intercept is pinned to v(empty) and the last
feature's coefficient is recovered from the sum constraint, so every output
satisfies local accuracy by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import Lasso

from .core import Coalition, Explanation, GameOracle
from .errors import CapacityError, ConfigError, SingularSystemError

LASSO_CV_FOLDS = 5
LASSO_GRID_POINTS = 20
LASSO_GRID_DECADES = 3  # grid spans lambda_max down to lambda_max * 10**-3
MAX_FULL_DESIGN_FEATURES = 20  # 2^m design rows beyond this cannot be solved


def shapley_kernel_weight(m: int, s: int) -> float:
    """Weight of a size-s coalition among m features; infinite at s in {0, m}.

    The two infinite-weight sizes are never placed in a regression design;
    they are enforced exactly through the elimination constraints.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if s < 0 or s > m:
        raise ValueError(f"coalition size {s} out of range 0..{m}")
    if s == 0 or s == m:
        return math.inf
    return (m - 1) / (math.comb(m, s) * s * (m - s))


@dataclass(frozen=True)
class KernelConfig:
    """Budget and options for the kernel estimator.

    ``budget`` counts design coalitions (game evaluations beyond the empty and
    full coalitions). ``regularization`` is "none" or "debiased_lasso"; for
    the latter, ``lasso_lambda=None`` selects the penalty by 5-fold weighted
    cross-validation over a 20-point logarithmic grid.

    Complement-paired rows span one direction per pair, so paired designs
    need budget >= 2(m-1) to be identifiable; below that the solve raises
    :class:`SingularSystemError`.
    """

    budget: int
    regularization: str = "none"
    lasso_lambda: float | None = None
    seed: int = 0
    paired_sampling: bool = True

    def __post_init__(self):
        if self.regularization not in ("none", "debiased_lasso"):
            raise ConfigError(
                f"regularization {self.regularization!r} not supported "
                "(expected 'none' or 'debiased_lasso')"
            )
        if self.lasso_lambda is not None and self.lasso_lambda < 0:
            raise ConfigError(f"lasso_lambda must be >= 0, got {self.lasso_lambda}")

    def validate_for(self, m: int):
        minimum = min((1 << m) - 2, m)
        if self.budget < minimum:
            raise ConfigError(
                f"budget {self.budget} below the identifiability minimum "
                f"{minimum} for m={m}"
            )


@dataclass
class WeightedDesign:
    """Coalitions, kernel weights, and (once evaluated) game values.

    The empty and full coalitions are excluded; they enter through the
    elimination constraints instead.
    """

    m: int
    masks: np.ndarray
    weights: np.ndarray
    values: np.ndarray | None = None

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.masks) != len(self.weights):
            raise ValueError("masks and weights must have equal length")
        if len(np.unique(self.masks)) != len(self.masks):
            raise ValueError("design contains duplicate coalitions")
        sizes = self.sizes
        if len(sizes) and (sizes.min() < 1 or sizes.max() > self.m - 1):
            raise ValueError("design must not contain the empty or full coalition")
        if len(self.weights) and (
            not np.all(np.isfinite(self.weights)) or self.weights.min() <= 0
        ):
            raise ValueError("kernel weights must be finite and positive")

    @property
    def sizes(self) -> np.ndarray:
        return np.bitwise_count(self.masks.astype(np.uint64)).astype(np.int64)

    def __len__(self) -> int:
        return len(self.masks)

    def coalitions(self):
        return [Coalition(int(mask), self.m) for mask in self.masks]

    def stratum_counts(self) -> dict[int, int]:
        sizes, counts = np.unique(self.sizes, return_counts=True)
        return dict(zip(sizes.tolist(), counts.tolist()))


def _full_design(m: int) -> WeightedDesign:
    masks = np.arange(1, (1 << m) - 1, dtype=np.int64)
    sizes = np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)
    per_size = np.array([shapley_kernel_weight(m, s) for s in range(m + 1)])
    return WeightedDesign(m=m, masks=masks, weights=per_size[sizes])


def _allocation_units(m: int, paired: bool):
    """(sizes, capacity, kernel mass, granularity) per allocation unit."""
    units = []
    if paired:
        for s in range(1, m // 2 + 1):
            t = m - s
            sizes = (s,) if s == t else (s, t)
            cap = sum(math.comb(m, k) for k in sizes)
            mass = sum(shapley_kernel_weight(m, k) * math.comb(m, k) for k in sizes)
            units.append((sizes, cap, mass, 2))
    else:
        for s in range(1, m):
            units.append(
                (
                    (s,),
                    math.comb(m, s),
                    shapley_kernel_weight(m, s) * math.comb(m, s),
                    1,
                )
            )
    return units


def _allocate(units, budget: int) -> list[int]:
    """Integer allocation proportional to kernel mass, capped at stratum size."""
    n = len(units)
    alloc = [0] * n
    fixed = [False] * n
    remaining = budget

    # Cap saturated units first so their surplus flows to the rest.
    while True:
        total_mass = sum(u[2] for u, f in zip(units, fixed) if not f)
        if total_mass <= 0 or remaining <= 0:
            break
        newly_capped = False
        for k, (unit, done) in enumerate(zip(units, fixed)):
            if done:
                continue
            share = remaining * unit[2] / total_mass
            if share >= unit[1]:
                alloc[k] = unit[1]
                remaining -= unit[1]
                fixed[k] = True
                newly_capped = True
        if not newly_capped:
            break

    active = [k for k in range(n) if not fixed[k]]
    total_mass = sum(units[k][2] for k in active)
    raw = {k: remaining * units[k][2] / total_mass for k in active} if total_mass else {}
    for k in active:
        g = units[k][3]
        alloc[k] = min(int(raw[k] // g) * g, units[k][1])
    leftover = remaining - sum(alloc[k] for k in active)

    # Largest-remainder rounding in granularity steps.
    by_remainder = sorted(active, key=lambda k: (alloc[k] - raw.get(k, 0), k))
    progressed = True
    while leftover > 0 and progressed:
        progressed = False
        for k in by_remainder:
            g = units[k][3]
            if leftover >= g and alloc[k] + g <= units[k][1]:
                alloc[k] += g
                leftover -= g
                progressed = True
    return alloc


def _masks_of_size(m: int, s: int) -> np.ndarray:
    out = np.fromiter(
        (sum(1 << i for i in combo) for combo in itertools.combinations(range(m), s)),
        dtype=np.int64,
        count=math.comb(m, s),
    )
    return out


def _sample_distinct(rng: np.random.Generator, m: int, s: int, k: int) -> list[int]:
    """k distinct masks of size s, uniform without replacement."""
    total = math.comb(m, s)
    if k > total:
        raise ValueError(f"cannot draw {k} distinct coalitions of size {s} (m={m})")
    if total <= 200_000:
        pool = _masks_of_size(m, s)
        idx = rng.choice(total, size=k, replace=False)
        return [int(x) for x in pool[idx]]
    seen: set[int] = set()
    out: list[int] = []
    while len(out) < k:
        members = rng.choice(m, size=s, replace=False)
        mask = int(sum(1 << int(i) for i in members))
        if mask not in seen:
            seen.add(mask)
            out.append(mask)
    return out


MAX_DESIGN_REDRAWS = 32


def _design_rank(masks: np.ndarray, m: int) -> int:
    z = ((masks[:, None] >> np.arange(m)) & 1).astype(float)
    x = z[:, : m - 1] - z[:, m - 1][:, None]
    return int(np.linalg.matrix_rank(x))


def sample_coalitions(m: int, config: KernelConfig) -> WeightedDesign:
    """Build the budgeted coalition design for the kernel regression.

    With budget >= 2^m - 2 the design is the deterministic full enumeration
    with exact kernel weights. Otherwise the budget is split across coalition
    sizes proportionally to each size's total kernel mass (complement sizes
    filled together under paired sampling), coalitions are drawn uniformly
    without replacement within each size, and each sampled row's weight is
    its size's kernel weight divided by the fraction of the stratum covered,
    so the total weight per stratum is preserved.

    A draw that cannot identify all attributions (rank below m-1 after
    elimination) is redrawn with a seed derived from (seed, attempt), so the
    result stays a pure function of the config; budgets for which no
    identifiable design exists raise :class:`ConfigError`.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    config.validate_for(m)
    if m == 1:
        return WeightedDesign(m=1, masks=np.empty(0, np.int64), weights=np.empty(0))
    total = (1 << m) - 2
    if total <= config.budget:
        if m > MAX_FULL_DESIGN_FEATURES:
            raise CapacityError(
                f"full enumeration of 2^{m} - 2 coalitions is infeasible; "
                f"use a budget below {total}"
            )
        return _full_design(m)

    for attempt in range(MAX_DESIGN_REDRAWS):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, attempt]))
        design = _draw_design(m, config, rng)
        if _design_rank(design.masks, m) >= m - 1:
            return design
    raise ConfigError(
        f"no identifiable design of {config.budget} coalitions found for m={m} "
        f"(paired_sampling={config.paired_sampling}); increase the budget"
    )


def _draw_design(m: int, config: KernelConfig, rng: np.random.Generator) -> WeightedDesign:
    units = _allocation_units(m, config.paired_sampling)
    alloc = _allocate(units, config.budget)

    full_mask = (1 << m) - 1
    masks: list[int] = []
    for (sizes, cap, _mass, _g), count in zip(units, alloc):
        if count == 0:
            continue
        if count == cap:
            for s in sizes:
                masks.extend(int(x) for x in _masks_of_size(m, s))
            continue
        if len(sizes) == 2:
            draws = _sample_distinct(rng, m, sizes[0], count // 2)
            masks.extend(draws)
            masks.extend(mask ^ full_mask for mask in draws)
        elif config.paired_sampling:
            # Self-complementary stratum: draw complement pairs together.
            chosen: set[int] = set()
            while len(chosen) < count:
                mask = _sample_distinct(rng, m, sizes[0], 1)[0]
                comp = mask ^ full_mask
                if mask in chosen or comp in chosen:
                    continue
                chosen.add(mask)
                chosen.add(comp)
            masks.extend(sorted(chosen))
        else:
            masks.extend(_sample_distinct(rng, m, sizes[0], count))

    mask_arr = np.array(masks, dtype=np.int64)
    sizes_arr = np.bitwise_count(mask_arr.astype(np.uint64)).astype(np.int64)
    counts = np.bincount(sizes_arr, minlength=m)
    weights = np.array(
        [
            shapley_kernel_weight(m, s) * math.comb(m, s) / counts[s]
            for s in sizes_arr
        ]
    )
    return WeightedDesign(m=m, masks=mask_arr, weights=weights)


def _reduced_system(design: WeightedDesign, v_empty: float, v_full: float):
    """Eliminate the last feature using the two infinite-weight constraints."""
    m = design.m
    z = ((design.masks[:, None] >> np.arange(m)) & 1).astype(float)
    z_last = z[:, m - 1]
    x = z[:, : m - 1] - z_last[:, None]
    y = design.values - v_empty - z_last * (v_full - v_empty)
    return x, y


def _describe_strata(design: WeightedDesign) -> str:
    counts = design.stratum_counts()
    return ", ".join(f"size {s}: {c} rows" for s, c in sorted(counts.items()))


def _solve_wls(x: np.ndarray, y: np.ndarray, weights: np.ndarray):
    """Weighted least squares via an orthogonal decomposition; returns (beta, rank)."""
    sw = np.sqrt(weights)
    beta, _res, rank, _sv = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)
    return beta, rank


def solve_constrained_wls(
    design: WeightedDesign,
    v_empty: float,
    v_full: float,
    method: str = "kernel",
    evaluations_used: int = 0,
) -> Explanation:
    """Solve the kernel regression with the two trivial coalitions eliminated.

    The intercept is fixed at v(empty) and the last feature's attribution is
    substituted out through the sum constraint, leaving an unconstrained
    weighted least squares problem in the remaining m-1 attributions. The
    returned explanation satisfies local accuracy by construction.
    """
    m = design.m
    if m == 1:
        phi = np.array([v_full - v_empty])
    else:
        if design.values is None:
            raise ValueError("design has no evaluated values")
        x, y = _reduced_system(design, v_empty, v_full)
        beta, rank = _solve_wls(x, y, design.weights)
        if rank < m - 1:
            raise SingularSystemError(
                f"design of rank {rank} cannot identify {m - 1} free attributions; "
                f"strata: {_describe_strata(design)}"
            )
        phi = np.append(beta, (v_full - v_empty) - beta.sum())
    return Explanation(
        base_value=v_empty,
        attributions=phi,
        fx_full=v_full,
        method=method,
        evaluations_used=evaluations_used,
    )


def _lambda_grid(x: np.ndarray, y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # Smallest penalty with an all-zero lasso solution, under sklearn's
    # (1 / 2 sum w) * sum w (y - Xb)^2 + lam * |b|_1 objective.
    lam_max = np.abs(x.T @ (weights * y)).max() / weights.sum()
    if lam_max <= 0:
        lam_max = 1.0
    return np.geomspace(lam_max, lam_max * 10.0**-LASSO_GRID_DECADES, LASSO_GRID_POINTS)


def _fit_lasso(x: np.ndarray, y: np.ndarray, weights: np.ndarray, lam: float):
    if lam == 0:
        beta, _rank = _solve_wls(x, y, weights)
        return beta
    model = Lasso(alpha=lam, fit_intercept=False, max_iter=10_000, tol=1e-8)
    model.fit(x, y, sample_weight=weights)
    return model.coef_


def _cv_lambda(
    x: np.ndarray, y: np.ndarray, weights: np.ndarray, seed: int
) -> float:
    """Pick the penalty by weighted k-fold cross-validation on the design rows."""
    n = len(y)
    grid = _lambda_grid(x, y, weights)
    if n < LASSO_CV_FOLDS:
        # Too few rows to cross-validate; a mid-grid penalty is the fallback.
        return float(grid[len(grid) // 2])
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, LASSO_CV_FOLDS)
    errors = np.zeros(len(grid))
    for fold in folds:
        hold = np.zeros(n, dtype=bool)
        hold[fold] = True
        for j, lam in enumerate(grid):
            beta = _fit_lasso(x[~hold], y[~hold], weights[~hold], lam)
            resid = y[hold] - x[hold] @ beta
            errors[j] += float(weights[hold] @ resid**2) / weights[hold].sum()
    # Grid is descending, so ties resolve toward the sparser (larger) penalty.
    return float(grid[int(np.argmin(errors))])


def _solve_debiased_lasso(
    design: WeightedDesign,
    v_empty: float,
    v_full: float,
    config: KernelConfig,
    evaluations_used: int,
) -> Explanation:
    """Lasso support selection followed by an unpenalized refit on the support."""
    m = design.m
    x, y = _reduced_system(design, v_empty, v_full)
    lam = config.lasso_lambda
    if lam is None:
        lam = _cv_lambda(x, y, design.weights, config.seed)
    selected = np.flatnonzero(_fit_lasso(x, y, design.weights, lam) != 0.0)

    beta = np.zeros(m - 1)
    if len(selected):
        refit, rank = _solve_wls(x[:, selected], y, design.weights)
        if rank < len(selected):
            raise SingularSystemError(
                f"refit on {len(selected)} selected features has rank {rank}; "
                f"strata: {_describe_strata(design)}"
            )
        beta[selected] = refit
    phi = np.append(beta, (v_full - v_empty) - beta.sum())
    return Explanation(
        base_value=v_empty,
        attributions=phi,
        fx_full=v_full,
        method="kernel_lasso",
        evaluations_used=evaluations_used,
    )


def kernel_shap(game: GameOracle, config: KernelConfig) -> Explanation:
    """Estimate Shapley values by kernel-weighted regression under a budget.

    Evaluates v(empty), v(full), and the design coalitions, then solves the
    constrained weighted least squares problem (optionally with debiased
    lasso support selection). With budget >= 2^m - 2 the result equals the
    exact Shapley values up to regression round-off.
    """
    m = game.m
    config.validate_for(m)
    before = game.evaluations
    v_empty = game.value(Coalition.empty(m))
    v_full = game.value(Coalition.full(m))
    design = sample_coalitions(m, config)
    if len(design):
        design.values = np.array([game.value(c) for c in design.coalitions()])
    used = game.evaluations - before
    if config.regularization == "debiased_lasso" and m > 1:
        return _solve_debiased_lasso(design, v_empty, v_full, config, used)
    return solve_constrained_wls(design, v_empty, v_full, "kernel", used)
