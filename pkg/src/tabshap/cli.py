"""Command-line interface.

Four commands: ``explain`` one prediction, ``compare`` estimators on the same
masked game, ``benchmark`` the convergence/masking experiments, and
``gen-fixtures`` to materialize the seeded model/data fixtures. All outputs
are deterministic given the inputs and the seed.

Exit codes: 0 success, 2 configuration or validation failure, 3 numeric
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    dense_tree_fixture,
    masking_mlp_fixture,
    run_convergence,
    run_masking,
    sparse_tree_fixture,
    write_convergence,
    write_masking,
)
from .core import GameOracle, TabularGame
from .errors import (
    ConfigError,
    NumericError,
    TabshapError,
    ValidationError,
)
from .exact import sampling_shap, shapley_exact, shapley_permutation_exact
from .games import (
    MAX_BACKGROUND_ROWS,
    BackgroundData,
    LinearModel,
    MaskedGame,
    MaxModel,
    MlpModel,
    dump_model,
    load_model,
    load_tabular_game,
)
from .kernel import KernelConfig, kernel_shap
from .specific import deep_shap, linear_shap, low_order_dispatch, max_shap

GAME_METHODS = ("exact", "permutation", "sampling", "kernel", "low-order")
ALL_METHODS = GAME_METHODS + ("linear", "max", "deep")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _fail(code: str, message: str) -> int:
    print(f"tabshap: error[{code}] {message}", file=sys.stderr)
    return {"config": EXIT_CONFIG, "numeric": EXIT_NUMERIC, "io": EXIT_IO}[code]


def read_table(path: Path) -> np.ndarray:
    """Read a comma-delimited numeric table with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"{path}: expected a header row plus at least one data row")
    width = len(rows[0])
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ValidationError(
                f"{path}:{lineno}: row has {len(row)} fields, header has {width}"
            )
        try:
            data.append([float(cell) for cell in row])
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: non-numeric cell ({exc})") from exc
    return np.array(data)


def write_table(path: Path, arr: np.ndarray) -> None:
    header = ",".join(f"f{i}" for i in range(arr.shape[1]))
    lines = [header] + [",".join(str(float(v)) for v in row) for row in arr]
    path.write_text("\n".join(lines) + "\n")


def _load_json(path: Path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def _load_model_or_game(path: Path):
    doc = _load_json(path)
    if isinstance(doc, dict) and doc.get("type") == "tabular":
        return load_tabular_game(doc)
    return load_model(doc)


def _resolve_background(args, data: np.ndarray | None, instance_index: int):
    if args.background:
        return BackgroundData(read_table(Path(args.background)))
    if data is None:
        raise ConfigError("a --background file is required for this model/method")
    rest = np.delete(data, instance_index, axis=0)
    if len(rest) == 0:
        raise ConfigError(
            "data file has a single row; provide --background explicitly"
        )
    return BackgroundData(rest)


def _kernel_config(args, m: int) -> KernelConfig:
    budget = args.budget
    if budget is None:
        if m <= 13:
            budget = (1 << m) - 2 if m > 1 else 0
        else:
            raise ConfigError(f"--budget is required for kernel at m={m}")
    regularization = "none"
    lasso_lambda = None
    if args.lasso is not None:
        regularization = "debiased_lasso"
        if args.lasso != "cv":
            try:
                lasso_lambda = float(args.lasso)
            except ValueError as exc:
                raise ConfigError(
                    f"--lasso expects a number or 'cv', got {args.lasso!r}"
                ) from exc
    return KernelConfig(
        budget=budget,
        regularization=regularization,
        lasso_lambda=lasso_lambda,
        seed=args.seed,
    )


def _explain_game(method: str, game: GameOracle, args):
    if method == "exact":
        return shapley_exact(game)
    if method == "permutation":
        return shapley_permutation_exact(game)
    if method == "sampling":
        return sampling_shap(game, n_permutations=args.permutations, seed=args.seed)
    if method == "kernel":
        return kernel_shap(game, _kernel_config(args, game.m))
    if method == "low-order":
        return low_order_dispatch(game, threshold=args.threshold)
    raise ConfigError(f"method {method!r} is not game-based")


def _explain(args, model_or_game, data: np.ndarray | None):
    method = args.method
    if isinstance(model_or_game, TabularGame):
        if method not in GAME_METHODS:
            raise ConfigError(
                f"method {method!r} needs a model; tabular games support "
                f"{', '.join(GAME_METHODS)}"
            )
        return _explain_game(method, model_or_game, args)

    model = model_or_game
    if data is None:
        raise ConfigError("--data is required when explaining a model")
    if not 0 <= args.instance < len(data):
        raise ConfigError(
            f"--instance {args.instance} out of range for {len(data)} data rows"
        )
    x = data[args.instance]
    background = _resolve_background(args, data, args.instance)

    if method == "linear":
        if not isinstance(model, LinearModel):
            raise ConfigError("method 'linear' requires a linear model")
        return linear_shap(model, x, background)
    if method == "max":
        if not isinstance(model, MaxModel):
            raise ConfigError("method 'max' requires a max model")
        return max_shap(x, reference=float(background.means.max()))
    if method == "deep":
        if not isinstance(model, MlpModel):
            raise ConfigError("method 'deep' requires an mlp model")
        return deep_shap(model, x, background)

    mode = "independence" if args.background_mode == "independence" else "mean_imputation"
    game = MaskedGame(
        model,
        x,
        background,
        mode=mode,
        max_background=args.max_background,
        seed=args.seed,
    )
    return _explain_game(method, game, args)


def _explanation_doc(expl, seed: int) -> dict:
    return {
        "method": expl.method,
        "base_value": expl.base_value,
        "attributions": [float(v) for v in expl.attributions],
        "prediction": expl.fx_full,
        "evaluations_used": expl.evaluations_used,
        "seed": seed,
    }


def _emit(args, doc: dict) -> None:
    if args.format == "json":
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        text = _doc_to_csv(doc)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _flatten(prefix: str, value, into: dict) -> None:
    if isinstance(value, dict):
        for sub, v in value.items():
            _flatten(f"{prefix}.{sub}" if prefix else str(sub), v, into)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}_{i}", v, into)
    else:
        into[prefix] = value


def _doc_to_csv(doc: dict) -> str:
    flat: dict = {}
    _flatten("", doc, flat)
    keys = list(flat)
    return ",".join(keys) + "\n" + ",".join(str(flat[k]) for k in keys) + "\n"


def cmd_explain(args) -> int:
    model_or_game = _load_model_or_game(Path(args.model))
    data = read_table(Path(args.data)) if args.data else None
    expl = _explain(args, model_or_game, data)
    _emit(args, _explanation_doc(expl, args.seed))
    return EXIT_OK


def cmd_compare(args) -> int:
    model_or_game = _load_model_or_game(Path(args.model))
    data = read_table(Path(args.data)) if args.data else None
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for name in methods:
        if name not in ALL_METHODS:
            raise ConfigError(f"unknown method {name!r} (choose from {ALL_METHODS})")

    results: dict[str, dict] = {}
    explanations = {}
    for name in methods:
        try:
            expl = _explain(
                argparse.Namespace(**{**vars(args), "method": name}),
                model_or_game,
                data,
            )
            explanations[name] = expl
            results[name] = _explanation_doc(expl, args.seed)
        except TabshapError as exc:
            results[name] = {"error": {"code": _category(exc), "message": str(exc)}}

    pairwise = {}
    names = list(explanations)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            dev = float(
                np.abs(explanations[a].attributions - explanations[b].attributions).max()
            )
            pairwise[f"{a}|{b}"] = dev
    doc = {
        "methods": results,
        "pairwise_max_abs_deviation": pairwise,
        "seed": args.seed,
    }
    _emit(args, doc)
    return EXIT_OK if explanations else EXIT_CONFIG


def _parse_list(text: str, cast):
    try:
        return tuple(cast(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}: {exc}") from exc


def cmd_benchmark(args) -> int:
    outdir = Path(args.output or f"bench_{args.scenario}")
    if args.scenario in ("dense_tree", "sparse_tree"):
        methods = _parse_list(args.methods, str) if args.methods else None
        result = run_convergence(
            args.scenario,
            methods=methods or ("kernel", "kernel_lasso", "sampling"),
            budgets=_parse_list(args.budgets, int),
            replicates=args.replicates,
            seed=args.seed,
        )
        paths = write_convergence(result, outdir)
    elif args.scenario == "masking":
        model, instances, background = masking_mlp_fixture(args.seed)
        result = run_masking(
            model,
            instances,
            background,
            method=args.masking_method,
            fractions=_parse_list(args.fractions, float),
            seed=args.seed,
        )
        paths = write_masking(result, outdir)
    else:
        raise ConfigError(f"unknown scenario {args.scenario!r}")
    for path in paths:
        print(path)
    return EXIT_OK


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_gen_fixtures(args) -> int:
    outdir = Path(args.output or "fixtures")
    outdir.mkdir(parents=True, exist_ok=True)
    seed = args.seed
    written: dict[str, str] = {}

    def emit_json(name: str, doc: dict):
        path = outdir / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written[name] = _sha256(path)

    def emit_table(name: str, arr: np.ndarray):
        path = outdir / name
        write_table(path, np.atleast_2d(arr))
        written[name] = _sha256(path)

    # Two-symptom sickness score game: 2 when both present, 5 when exactly one.
    emit_json("sickness_game.json", {"type": "tabular", "values": [0.0, 5.0, 5.0, 2.0]})

    # Three players scored (5, 4, 0); payoff is the maximum score.
    emit_json("quiz_max_model.json", dump_model(MaxModel(n_features=3)))
    emit_table("quiz_scores.csv", np.array([[5.0, 4.0, 0.0]]))
    emit_table("quiz_background.csv", np.zeros((1, 3)))

    dense_tree, dense_x, dense_bg = dense_tree_fixture(seed)
    emit_json("dense_tree_model.json", dump_model(dense_tree))
    emit_table("dense_tree_data.csv", np.vstack([dense_x, dense_bg.rows]))

    sparse_tree, sparse_x, sparse_bg, active = sparse_tree_fixture(seed)
    emit_json("sparse_tree_model.json", dump_model(sparse_tree))
    emit_table("sparse_tree_data.csv", np.vstack([sparse_x, sparse_bg.rows]))

    mlp, instances, background = masking_mlp_fixture(seed)
    emit_json("mlp_model.json", dump_model(mlp))
    emit_table("mlp_data.csv", instances)
    emit_table("mlp_background.csv", background.rows)

    manifest = {
        "seed": seed,
        "version": __version__,
        "sparse_active_features": list(active),
        "files": written,
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(path)
    return EXIT_OK


def _category(exc: Exception) -> str:
    if isinstance(exc, NumericError):
        return "numeric"
    if isinstance(exc, OSError):
        return "io"
    return "config"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabshap",
        description="Shapley-value attributions for tabular models",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output", help="output path (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p_explain = sub.add_parser("explain", help="attribute one prediction")
    p_explain.add_argument("--model", required=True, help="model or game JSON file")
    p_explain.add_argument("--data", help="CSV with header; rows are instances")
    p_explain.add_argument("--instance", type=int, default=0, help="row to explain")
    p_explain.add_argument("--background", help="CSV of background rows")
    p_explain.add_argument(
        "--background-mode",
        choices=("independence", "mean"),
        default="independence",
    )
    p_explain.add_argument(
        "--max-background",
        type=int,
        default=MAX_BACKGROUND_ROWS,
        help="subsample cap on background rows",
    )
    p_explain.add_argument("--method", choices=ALL_METHODS, default="exact")
    p_explain.add_argument("--budget", type=int, help="kernel coalition budget")
    p_explain.add_argument("--permutations", type=int, default=200)
    p_explain.add_argument("--lasso", help="debiased-lasso penalty, or 'cv'")
    p_explain.add_argument("--threshold", type=int, default=13, help="low-order feature cap")
    common(p_explain)
    p_explain.set_defaults(func=cmd_explain)

    p_compare = sub.add_parser("compare", help="run several methods on one game")
    p_compare.add_argument("--model", required=True)
    p_compare.add_argument("--data")
    p_compare.add_argument("--instance", type=int, default=0)
    p_compare.add_argument("--background")
    p_compare.add_argument(
        "--background-mode",
        choices=("independence", "mean"),
        default="independence",
    )
    p_compare.add_argument(
        "--max-background",
        type=int,
        default=MAX_BACKGROUND_ROWS,
        help="subsample cap on background rows",
    )
    p_compare.add_argument(
        "--methods", required=True, help="comma-separated method list"
    )
    p_compare.add_argument("--budget", type=int)
    p_compare.add_argument("--permutations", type=int, default=200)
    p_compare.add_argument("--lasso")
    p_compare.add_argument("--threshold", type=int, default=13)
    common(p_compare)
    p_compare.set_defaults(func=cmd_compare)

    p_bench = sub.add_parser("benchmark", help="run a seeded experiment")
    p_bench.add_argument(
        "--scenario", required=True, choices=("dense_tree", "sparse_tree", "masking")
    )
    p_bench.add_argument("--budgets", default="32,128,512")
    p_bench.add_argument("--replicates", type=int, default=200)
    p_bench.add_argument("--methods", help="convergence methods (comma-separated)")
    p_bench.add_argument("--fractions", default="0,0.2,1")
    p_bench.add_argument("--masking-method", default="kernel")
    common(p_bench)
    p_bench.set_defaults(func=cmd_benchmark)

    p_gen = sub.add_parser("gen-fixtures", help="write the seeded fixture files")
    common(p_gen)
    p_gen.set_defaults(func=cmd_gen_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigError) as exc:
        return _fail("config", str(exc))
    except NumericError as exc:
        return _fail("numeric", str(exc))
    except TabshapError as exc:
        return _fail("config", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))


if __name__ == "__main__":
    sys.exit(main())
