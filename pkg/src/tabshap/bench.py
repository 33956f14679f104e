"""Reproducible desk-scale experiments.

Two experiment families: convergence bands (replicate estimates of the same
attribution at growing evaluation budgets, summarized by percentiles against
the exact values) and masking curves (log-odds change when the features an
attribution method ranks highest are replaced by background means, against a
random-ranking control). Every run is a pure function of (scenario, seed)
and emits canonically ordered tables, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__ as _version
from .core import Explanation, RestrictedGame, check_local_accuracy
from .errors import ConfigError, NumericError, ShapeError
from .exact import sampling_shap, shapley_exact
from .games import (
    BackgroundData,
    DecisionTree,
    MaskedGame,
    MlpLayer,
    MlpModel,
    dump_model,
    predict,
)
from .kernel import KernelConfig, kernel_shap

DEFAULT_BUDGETS = (32, 128, 512)
DEFAULT_REPLICATES = 200
CONVERGENCE_METHODS = ("kernel", "kernel_lasso", "sampling")
PERCENTILE_PROBS = (0.1, 0.5, 0.9)
LOG_ODDS_CLAMP = 1e-12

_SCENARIO_IDS = {"dense_tree": 1, "sparse_tree": 2, "masking": 3}
_METHOD_IDS = {"kernel": 1, "kernel_lasso": 2, "sampling": 3, "random": 4}


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Seeded fixtures
# ---------------------------------------------------------------------------


def _random_complete_tree(
    rng: np.random.Generator,
    depth: int,
    n_features: int,
    allowed_features,
) -> DecisionTree:
    """Complete binary tree of the given depth with level-order node layout."""
    n_internal = (1 << depth) - 1
    n_nodes = (1 << (depth + 1)) - 1
    feature = np.full(n_nodes, -1, dtype=np.int64)
    threshold = np.zeros(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    value = np.zeros(n_nodes)

    allowed = np.asarray(allowed_features, dtype=np.int64)
    if len(allowed) > n_internal:
        raise ConfigError(
            f"depth-{depth} tree has {n_internal} splits, fewer than "
            f"{len(allowed)} required features"
        )
    # Every allowed feature appears at least once; extra splits redraw freely.
    picks = np.concatenate(
        [allowed, rng.choice(allowed, size=n_internal - len(allowed), replace=True)]
    )
    feature[:n_internal] = rng.permutation(picks)
    threshold[:n_internal] = rng.uniform(-1.0, 1.0, size=n_internal)
    for i in range(n_internal):
        left[i] = 2 * i + 1
        right[i] = 2 * i + 2
    value[n_internal:] = rng.uniform(-5.0, 5.0, size=n_nodes - n_internal)
    return DecisionTree(
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        value=value,
        n_features=n_features,
    )


def dense_tree_fixture(seed: int = 0, n_background: int = 50):
    """Depth-4 tree reading all 10 features, one instance, Gaussian background."""
    rng = np.random.default_rng(_derive_seed(seed, _SCENARIO_IDS["dense_tree"]))
    tree = _random_complete_tree(rng, depth=4, n_features=10, allowed_features=range(10))
    instance = rng.standard_normal(10)
    background = BackgroundData(rng.standard_normal((n_background, 10)))
    return tree, instance, background


def sparse_tree_fixture(seed: int = 0, n_background: int = 50):
    """Depth-3 tree reading 3 of 30 features; the rest are provable dummies."""
    rng = np.random.default_rng(_derive_seed(seed, _SCENARIO_IDS["sparse_tree"]))
    active = np.sort(rng.choice(30, size=3, replace=False))
    tree = _random_complete_tree(rng, depth=3, n_features=30, allowed_features=active)
    instance = rng.standard_normal(30)
    background = BackgroundData(rng.standard_normal((n_background, 30)))
    return tree, instance, background, tuple(active.tolist())


def masking_mlp_fixture(seed: int = 0, n_instances: int = 50, n_background: int = 50):
    """Two-layer relu/sigmoid network emitting a class-1 probability."""
    rng = np.random.default_rng(_derive_seed(seed, _SCENARIO_IDS["masking"]))
    w1 = rng.normal(0.0, 1.0, size=(6, 8))
    b1 = rng.normal(0.0, 0.5, size=6)
    w2 = rng.normal(0.0, 1.0, size=(1, 6))
    b2 = rng.normal(0.0, 0.5, size=1)
    model = MlpModel(
        layers=(
            MlpLayer(weights=w1, bias=b1, activation="relu"),
            MlpLayer(weights=w2, bias=b2, activation="sigmoid"),
        )
    )
    instances = rng.standard_normal((n_instances, 8))
    background = BackgroundData(rng.standard_normal((n_background, 8)))
    return model, instances, background


# ---------------------------------------------------------------------------
# Convergence experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    method: str
    budget: int
    replicate: int
    seed: int
    evaluations_used: int
    phi: tuple[float, ...]


@dataclass(frozen=True)
class SummaryRow:
    method: str
    budget: int
    feature: int
    p10: float
    p50: float
    p90: float
    band: float
    phi_exact: float


@dataclass
class ConvergenceResult:
    scenario: str
    seed: int
    m: int
    methods: tuple[str, ...]
    budgets: tuple[int, ...]
    replicates: int
    rows: list[ConvergenceRow]
    summary: list[SummaryRow]
    exact: Explanation
    manifest: dict = field(default_factory=dict)

    def band(self, method: str, budget: int, feature: int) -> float:
        for row in self.summary:
            if (row.method, row.budget, row.feature) == (method, budget, feature):
                return row.band
        raise KeyError((method, budget, feature))


def summarize_percentiles(rows: list[ConvergenceRow], probs=PERCENTILE_PROBS):
    """Per-(method, budget, feature) percentiles with linear interpolation.

    Interpolates between order statistics at rank p*(n-1)+1; requires at
    least two rows per group.
    """
    groups: dict[tuple[str, int], list[ConvergenceRow]] = {}
    for row in rows:
        groups.setdefault((row.method, row.budget), []).append(row)
    out = []
    for (method, budget), members in sorted(groups.items()):
        if len(members) < 2:
            raise ConfigError(
                f"group ({method}, {budget}) has {len(members)} rows; need >= 2"
            )
        phi = np.array([row.phi for row in members])
        lo, med, hi = np.percentile(phi, [100 * p for p in probs], axis=0)
        for feature in range(phi.shape[1]):
            out.append(
                (method, budget, feature, float(lo[feature]), float(med[feature]), float(hi[feature]))
            )
    return out


def _estimate(method: str, game: MaskedGame, budget: int, seed: int) -> Explanation:
    if method == "kernel":
        return kernel_shap(game, KernelConfig(budget=budget, seed=seed))
    if method == "kernel_lasso":
        return kernel_shap(
            game,
            KernelConfig(budget=budget, regularization="debiased_lasso", seed=seed),
        )
    if method == "sampling":
        n = max(1, round((budget + 1) / game.m))
        return sampling_shap(game, n_permutations=n, seed=seed)
    raise ConfigError(f"unknown convergence method {method!r}")


def _exact_reference(scenario: str, game: MaskedGame, active=None) -> Explanation:
    """Exact attributions; the sparse scenario solves the induced active-feature game."""
    if scenario == "dense_tree":
        exact = shapley_exact(game)
    else:
        sub = shapley_exact(RestrictedGame(game, active))
        phi = np.zeros(game.m)
        phi[list(active)] = sub.attributions
        exact = Explanation(
            base_value=sub.base_value,
            attributions=phi,
            fx_full=sub.fx_full,
            method="exact",
            evaluations_used=sub.evaluations_used,
        )
    # The reference must satisfy the additivity axiom before any comparison
    # row is derived from it.
    if not check_local_accuracy(exact, 1e-9):
        raise NumericError(
            f"exact reference violates additivity by "
            f"{abs(exact.total - exact.fx_full):.2e}"
        )
    return exact


def run_convergence(
    scenario: str,
    methods=CONVERGENCE_METHODS,
    budgets=DEFAULT_BUDGETS,
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
) -> ConvergenceResult:
    """Replicate attribution estimates on a fixed seeded scenario.

    Each (method, budget, replicate) runs one estimator on the same masked
    tree game with a derived seed and records the full attribution vector;
    exact attributions are computed once for the error columns. Sampling
    budgets are translated into permutation counts so total game evaluations
    match the kernel estimator's budget + 2.
    """
    if scenario not in ("dense_tree", "sparse_tree"):
        raise ConfigError(f"unknown convergence scenario {scenario!r}")
    scen_id = _SCENARIO_IDS[scenario]
    active = None
    if scenario == "dense_tree":
        tree, instance, background = dense_tree_fixture(seed)
    else:
        tree, instance, background, active = sparse_tree_fixture(seed)
        if not set(tree.used_features()) <= set(active):
            raise ConfigError("sparse fixture tree reads outside its active features")

    game = MaskedGame(tree, instance, background, mode="independence")
    exact = _exact_reference(scenario, game, active)

    rows: list[ConvergenceRow] = []
    for method in methods:
        if method not in _METHOD_IDS:
            raise ConfigError(f"unknown convergence method {method!r}")
        for budget in budgets:
            for rep in range(replicates):
                child = _derive_seed(seed, scen_id, _METHOD_IDS[method], budget, rep)
                expl = _estimate(method, game, budget, child)
                rows.append(
                    ConvergenceRow(
                        method=method,
                        budget=budget,
                        replicate=rep,
                        seed=child,
                        evaluations_used=expl.evaluations_used,
                        phi=tuple(float(v) for v in expl.attributions),
                    )
                )
    rows.sort(key=lambda r: (r.method, r.budget, r.replicate))

    summary = [
        SummaryRow(
            method=method,
            budget=budget,
            feature=feature,
            p10=lo,
            p50=med,
            p90=hi,
            band=hi - lo,
            phi_exact=float(exact.attributions[feature]),
        )
        for method, budget, feature, lo, med, hi in summarize_percentiles(rows)
    ]

    manifest = {
        "experiment": "convergence",
        "scenario": scenario,
        "seed": seed,
        "methods": list(methods),
        "budgets": list(budgets),
        "replicates": replicates,
        "background_mode": "independence",
        "fixtures": {
            "model": _content_hash(dump_model(tree)),
            "instance": _content_hash(instance.tolist()),
            "background": _content_hash(background.rows.tolist()),
        },
        "exact": {
            "base_value": exact.base_value,
            "attributions": [float(v) for v in exact.attributions],
        },
        "version": _version,
    }
    if active is not None:
        manifest["active_features"] = list(active)

    return ConvergenceResult(
        scenario=scenario,
        seed=seed,
        m=game.m,
        methods=tuple(methods),
        budgets=tuple(budgets),
        replicates=replicates,
        rows=rows,
        summary=summary,
        exact=exact,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# Masking experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskingRow:
    instance_id: int
    method: str
    fraction: float
    output_before: float
    output_after: float
    delta_log_odds: float


@dataclass
class MaskingResult:
    method: str
    fractions: tuple[float, ...]
    seed: int
    rows: list[MaskingRow]
    manifest: dict = field(default_factory=dict)

    def deltas(self, method: str, fraction: float) -> np.ndarray:
        picked = [
            r.delta_log_odds
            for r in self.rows
            if r.method == method and r.fraction == fraction
        ]
        return np.array(picked)


def log_odds(p: float) -> float:
    """Natural log of p/(1-p); p clamped away from 0 and 1 to bound saturation."""
    p = min(max(p, LOG_ODDS_CLAMP), 1.0 - LOG_ODDS_CLAMP)
    return math.log(p / (1.0 - p))


def as_probability_model(model: MlpModel) -> MlpModel:
    """Normalize a binary classifier to a scalar class-1 probability output.

    Scalar-output models pass through; a two-logit head (identity final
    activation) gains a sigmoid difference layer, which reproduces the
    softmax class-1 probability exactly.
    """
    if model.n_outputs == 1:
        return model
    if model.n_outputs == 2 and model.layers[-1].activation == "identity":
        diff = MlpLayer(
            weights=np.array([[-1.0, 1.0]]), bias=np.zeros(1), activation="sigmoid"
        )
        return MlpModel(layers=model.layers + (diff,))
    raise ConfigError(
        "masking needs a probability output: scalar in [0, 1] or a two-logit head"
    )


def _rank_features(
    model: MlpModel,
    x: np.ndarray,
    background: BackgroundData,
    method: str,
    budget: int | None,
    seed: int,
) -> np.ndarray:
    """Feature order by attribution toward the predicted class, strongest first."""
    game = MaskedGame(model, x, background, mode="mean_imputation")
    m = game.m
    if method == "kernel":
        if budget is None:
            budget = (1 << m) - 2
        expl = kernel_shap(game, KernelConfig(budget=budget, seed=seed))
    elif method == "exact":
        expl = shapley_exact(game)
    elif method == "sampling":
        expl = sampling_shap(game, n_permutations=budget or 100, seed=seed)
    else:
        raise ConfigError(f"unknown masking attribution method {method!r}")
    toward = expl.attributions if predict(model, x) >= 0.5 else -expl.attributions
    return np.argsort(-toward, kind="stable")


def run_masking(
    model: MlpModel,
    instances: np.ndarray,
    background: BackgroundData,
    method: str = "kernel",
    fractions=(0.0, 0.2, 1.0),
    seed: int = 0,
    budget: int | None = None,
) -> MaskingResult:
    """Mask top-ranked features and record the log-odds change per instance.

    For every instance the features are ranked by attribution toward the
    predicted class; for each fraction, round(fraction * M) features are
    replaced by the background column means and the class-1 log-odds delta
    is recorded. A random-ranking control runs with the same fractions.
    """
    model = as_probability_model(model)
    instances = np.atleast_2d(np.asarray(instances, dtype=float))
    if instances.shape[1] != model.n_features:
        raise ShapeError(
            f"instances have {instances.shape[1]} columns, model expects "
            f"{model.n_features}"
        )
    for frac in fractions:
        if not 0.0 <= frac <= 1.0:
            raise ConfigError(f"fraction {frac} outside [0, 1]")

    m = model.n_features
    means = background.means
    rows: list[MaskingRow] = []
    for idx, x in enumerate(instances):
        p_before = predict(model, x)
        if not 0.0 <= p_before <= 1.0:
            raise ConfigError(
                f"model output {p_before} at instance {idx} is not a probability"
            )
        rank_seed = _derive_seed(seed, _SCENARIO_IDS["masking"], 1, idx)
        ranked = _rank_features(model, x, background, method, budget, rank_seed)
        rng = np.random.default_rng(
            _derive_seed(seed, _SCENARIO_IDS["masking"], _METHOD_IDS["random"], idx)
        )
        random_order = rng.permutation(m)
        lo_before = log_odds(p_before)
        for frac in fractions:
            k = int(math.floor(frac * m + 0.5))
            for name, order in ((method, ranked), ("random", random_order)):
                masked = x.copy()
                masked[order[:k]] = means[order[:k]]
                p_after = predict(model, masked)
                rows.append(
                    MaskingRow(
                        instance_id=idx,
                        method=name,
                        fraction=float(frac),
                        output_before=p_before,
                        output_after=p_after,
                        delta_log_odds=log_odds(p_after) - lo_before,
                    )
                )
    rows.sort(key=lambda r: (r.method, r.fraction, r.instance_id))

    manifest = {
        "experiment": "masking",
        "method": method,
        "fractions": [float(f) for f in fractions],
        "seed": seed,
        "n_instances": int(instances.shape[0]),
        "background_mode": "mean_imputation",
        "fixtures": {
            "model": _content_hash(dump_model(model)),
            "instances": _content_hash(instances.tolist()),
            "background": _content_hash(background.rows.tolist()),
        },
        "version": _version,
    }
    return MaskingResult(
        method=method,
        fractions=tuple(float(f) for f in fractions),
        seed=seed,
        rows=rows,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# Table output
# ---------------------------------------------------------------------------


def _content_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _write_csv(path: Path, header: list[str], rows) -> None:
    # str(float) is the shortest round-trip decimal form.
    lines = [",".join(header)]
    lines.extend(",".join(str(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_convergence(result: ConvergenceResult, outdir) -> list[Path]:
    """Write raw/summary/exact tables and the run manifest; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    phi_cols = [f"phi_{i}" for i in range(result.m)]

    raw = outdir / "convergence_raw.csv"
    _write_csv(
        raw,
        ["method", "budget", "replicate", "seed", "evaluations_used", *phi_cols],
        (
            [r.method, r.budget, r.replicate, r.seed, r.evaluations_used, *r.phi]
            for r in result.rows
        ),
    )

    summary = outdir / "convergence_summary.csv"
    _write_csv(
        summary,
        ["method", "budget", "feature", "p10", "p50", "p90", "band", "phi_exact"],
        (
            [s.method, s.budget, s.feature, s.p10, s.p50, s.p90, s.band, s.phi_exact]
            for s in result.summary
        ),
    )

    exact = outdir / "convergence_exact.csv"
    _write_csv(
        exact,
        ["feature", "phi_exact"],
        ([i, float(v)] for i, v in enumerate(result.exact.attributions)),
    )

    manifest = outdir / "manifest.json"
    manifest.write_text(json.dumps(result.manifest, indent=2, sort_keys=True) + "\n")
    return [raw, summary, exact, manifest]


def write_masking(result: MaskingResult, outdir) -> list[Path]:
    """Write the masking table and the run manifest; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    table = outdir / "masking.csv"
    _write_csv(
        table,
        [
            "instance_id",
            "method",
            "fraction",
            "output_before",
            "output_after",
            "delta_log_odds",
        ],
        (
            [
                r.instance_id,
                r.method,
                r.fraction,
                r.output_before,
                r.output_after,
                r.delta_log_odds,
            ]
            for r in result.rows
        ),
    )
    manifest = outdir / "manifest.json"
    manifest.write_text(json.dumps(result.manifest, indent=2, sort_keys=True) + "\n")
    return [table, manifest]
