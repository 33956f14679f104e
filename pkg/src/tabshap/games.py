"""Model zoo and the masking layer that turns a model into a game.

Masking a model means replacing the features outside a coalition with
background values. In ``independence`` mode the masked payoff averages the
model over every background row (off-coalition features drawn from the
background marginals); in ``mean_imputation`` mode the off-coalition features
are set to the background column means, which costs a single model call per
coalition and is what the deep estimator's single-reference semantics assume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Coalition, GameOracle, TabularGame
from .errors import ConfigError, NumericError, ShapeError, ValidationError

ACTIVATIONS = ("identity", "relu", "sigmoid", "maxpool")

# Background rows are used in full up to this count; beyond it a seeded
# uniform subsample bounds the per-coalition cost.
MAX_BACKGROUND_ROWS = 1000


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValidationError("weights: expected a nonempty 1-d array")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def n_features(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class DecisionTree:
    """Binary tree as parallel node arrays; children -1 mark leaves.

    Ties at a split (x equal to the threshold) go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    root: int = 0

    def __post_init__(self):
        feature = np.asarray(self.feature, dtype=np.int64)
        threshold = np.asarray(self.threshold, dtype=float)
        left = np.asarray(self.left, dtype=np.int64)
        right = np.asarray(self.right, dtype=np.int64)
        value = np.asarray(self.value, dtype=float)
        n = len(feature)
        for name, arr in (
            ("threshold", threshold),
            ("left", left),
            ("right", right),
            ("value", value),
        ):
            if len(arr) != n:
                raise ValidationError(
                    f"{name}: length {len(arr)} does not match feature length {n}"
                )
        if n == 0:
            raise ValidationError("feature: tree needs at least one node")
        if not 0 <= self.root < n:
            raise ValidationError(f"root: index {self.root} out of range for {n} nodes")
        for i in range(n):
            lo, hi = left[i], right[i]
            if (lo == -1) != (hi == -1):
                raise ValidationError(
                    f"left[{i}]/right[{i}]: a node must have both children or neither"
                )
            if lo != -1:
                for side, child in (("left", lo), ("right", hi)):
                    if not 0 <= child < n:
                        raise ValidationError(
                            f"{side}[{i}]: child index {child} out of range"
                        )
                if not 0 <= feature[i] < self.n_features:
                    raise ValidationError(
                        f"feature[{i}]: index {feature[i]} out of range for "
                        f"{self.n_features} features"
                    )
                if not np.isfinite(threshold[i]):
                    raise ValidationError(f"threshold[{i}]: must be finite")
        self._check_acyclic(left, right)
        for arr in (feature, threshold, left, right, value):
            arr.flags.writeable = False
        object.__setattr__(self, "feature", feature)
        object.__setattr__(self, "threshold", threshold)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "value", value)

    def _check_acyclic(self, left, right):
        # DFS from the root; a node seen on the current path twice is a cycle.
        # Fully-explored nodes are skipped so shared subtrees stay linear-time.
        on_path: set[int] = set()
        explored: set[int] = set()
        stack = [(int(self.root), False)]
        while stack:
            node, finished = stack.pop()
            if finished:
                on_path.discard(node)
                explored.add(node)
                continue
            if node in on_path:
                raise ValidationError(f"left/right: cycle through node {node}")
            if node in explored or left[node] == -1:
                continue
            on_path.add(node)
            stack.append((node, True))
            stack.append((int(left[node]), False))
            stack.append((int(right[node]), False))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def used_features(self) -> tuple[int, ...]:
        """Feature indices read by at least one internal node."""
        internal = self.left != -1
        return tuple(sorted(set(self.feature[internal].tolist())))


@dataclass(frozen=True)
class MlpLayer:
    weights: np.ndarray  # (n_out, n_in), row-major
    bias: np.ndarray  # (n_out,)
    activation: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2:
            raise ValidationError("weights: expected a 2-d matrix")
        if b.ndim != 1 or len(b) != w.shape[0]:
            raise ValidationError(
                f"bias: length {b.shape} does not match weight rows {w.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"activation: {self.activation!r} not supported "
                f"(expected one of {ACTIVATIONS})"
            )
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        # A maxpool layer collapses its linear outputs to their maximum.
        return 1 if self.activation == "maxpool" else self.weights.shape[0]


@dataclass(frozen=True)
class MlpModel:
    layers: tuple[MlpLayer, ...]
    output_index: int | None = None

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("layers: model needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].n_in != layers[k - 1].n_out:
                raise ValidationError(
                    f"layers[{k}].weights: expects {layers[k].n_in} inputs but "
                    f"layers[{k - 1}] produces {layers[k - 1].n_out}"
                )
        if self.output_index is not None and not (
            0 <= self.output_index < layers[-1].n_out
        ):
            raise ValidationError(
                f"output_index: {self.output_index} out of range for "
                f"{layers[-1].n_out} outputs"
            )
        object.__setattr__(self, "layers", layers)

    @property
    def n_features(self) -> int:
        return self.layers[0].n_in

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].n_out


@dataclass(frozen=True)
class MaxModel:
    """f(x) = max_i x_i."""

    n_features: int

    def __post_init__(self):
        if self.n_features < 1:
            raise ValidationError("n_features: must be >= 1")


Model = LinearModel | DecisionTree | MlpModel | MaxModel


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "maxpool":
        return z.max(axis=-1, keepdims=True)
    raise ConfigError(f"activation {name!r} not supported")


def model_arity(model: Model) -> int:
    return model.n_features


def _check_input(model: Model, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) != model_arity(model):
        raise ShapeError(
            f"input of length {x.shape} does not match model arity {model_arity(model)}"
        )
    if not np.all(np.isfinite(x)):
        raise NumericError("input contains non-finite values")
    return x


def predict_batch(model: Model, X: np.ndarray) -> np.ndarray:
    """Evaluate the model on each row of X; returns a vector of outputs."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model_arity(model):
        raise ShapeError(
            f"batch of shape {X.shape} does not match model arity {model_arity(model)}"
        )
    if isinstance(model, LinearModel):
        return X @ model.weights + model.bias
    if isinstance(model, MaxModel):
        return X.max(axis=1)
    if isinstance(model, DecisionTree):
        node = np.full(len(X), model.root, dtype=np.int64)
        active = model.left[node] != -1
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, model.feature[cur]] <= model.threshold[cur]
            node[idx] = np.where(go_left, model.left[cur], model.right[cur])
            active = model.left[node] != -1
        return model.value[node]
    if isinstance(model, MlpModel):
        a = X
        for layer in model.layers:
            z = a @ layer.weights.T + layer.bias
            a = _apply_activation(layer.activation, z)
        if a.shape[1] == 1:
            return a[:, 0]
        if model.output_index is None:
            raise ConfigError(
                f"model produces {a.shape[1]} outputs; an output_index is required"
            )
        return a[:, model.output_index]
    raise ConfigError(f"unknown model type {type(model).__name__}")


def predict(model: Model, x) -> float:
    """Deterministic scalar model output at a single input."""
    x = _check_input(model, x)
    return float(predict_batch(model, x[None, :])[0])


def mlp_forward_trace(model: MlpModel, x: np.ndarray):
    """Per-layer (pre-activation, post-activation) pairs for a single input."""
    a = np.asarray(x, dtype=float)
    trace = []
    for layer in model.layers:
        z = layer.weights @ a + layer.bias
        a = _apply_activation(layer.activation, z)
        trace.append((z, a))
    return trace


@dataclass(frozen=True)
class BackgroundData:
    """Reference sample whose column averages realize masked expectations."""

    rows: np.ndarray
    means: np.ndarray = field(init=False)

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if rows.size == 0 or rows.shape[0] < 1:
            raise ConfigError("background data needs at least one row")
        if not np.all(np.isfinite(rows)):
            raise NumericError("background data contains non-finite values")
        means = rows.mean(axis=0)
        rows.flags.writeable = False
        means.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "means", means)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]


def _member_bool(mask: int, m: int) -> np.ndarray:
    bits = (np.uint64(mask) >> np.arange(m, dtype=np.uint64)) & np.uint64(1)
    return bits.astype(bool)


class MaskedGame(GameOracle):
    """v(S): the model with off-coalition features replaced by background values.

    ``evaluations`` counts coalition evaluations (the budget unit shared by
    every estimator); ``model_calls`` counts raw model invocations, which is
    N per coalition in independence mode and 1 in mean_imputation mode.
    """

    def __init__(
        self,
        model: Model,
        x,
        background: BackgroundData,
        mode: str = "independence",
        max_background: int = MAX_BACKGROUND_ROWS,
        seed: int = 0,
    ):
        if mode not in ("independence", "mean_imputation"):
            raise ConfigError(
                f"mode {mode!r} not supported (expected independence or mean_imputation)"
            )
        x = _check_input(model, x)
        if background.n_features != len(x):
            raise ShapeError(
                f"background has {background.n_features} columns, instance has {len(x)}"
            )
        super().__init__(len(x))
        self.model = model
        self.x = x
        self.mode = mode
        rows = background.rows
        if background.n_rows > max_background:
            rng = np.random.default_rng(seed)
            keep = np.sort(rng.choice(background.n_rows, size=max_background, replace=False))
            rows = rows[keep]
        self._rows = rows
        self._means = rows.mean(axis=0)
        self.model_calls = 0
        self._full_mask = (1 << len(x)) - 1

    @property
    def background_rows(self) -> np.ndarray:
        return self._rows

    @property
    def background_means(self) -> np.ndarray:
        return self._means

    def _evaluate(self, coalition: Coalition) -> float:
        keep = _member_bool(coalition.mask, self._m)
        if self.mode == "mean_imputation":
            composite = np.where(keep, self.x, self._means)
            self.model_calls += 1
            return predict(self.model, composite)
        composites = np.where(keep, self.x, self._rows)
        preds = predict_batch(self.model, composites)
        self.model_calls += len(preds)
        # A constant batch (e.g. the full coalition) must average exactly.
        first = preds[0]
        if np.all(preds == first):
            return float(first)
        return float(preds.mean())


# ---------------------------------------------------------------------------
# Serialization: one JSON document per model, dispatched on "type".
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ValidationError(f"{path}{key}: missing required field")
    return doc[key]


def load_model(doc: dict) -> Model:
    """Parse and validate a serialized model description.

    Schema: ``{"type": "linear"|"tree"|"mlp"|"max", ...}``. Tree nodes are
    parallel arrays with -1 child sentinels for leaves; mlp layers carry
    row-major weight matrices and a per-layer activation.
    """
    if not isinstance(doc, dict):
        raise ValidationError("model document must be a JSON object")
    kind = _require(doc, "type", "")
    try:
        if kind == "linear":
            return LinearModel(
                weights=np.asarray(_require(doc, "weights", ""), dtype=float),
                bias=float(_require(doc, "bias", "")),
            )
        if kind == "tree":
            feature = np.asarray(_require(doc, "feature", ""), dtype=np.int64)
            n_features = int(
                doc.get("n_features", (feature.max() + 1) if feature.size else 1)
            )
            return DecisionTree(
                feature=feature,
                threshold=np.asarray(_require(doc, "threshold", ""), dtype=float),
                left=np.asarray(_require(doc, "left", ""), dtype=np.int64),
                right=np.asarray(_require(doc, "right", ""), dtype=np.int64),
                value=np.asarray(_require(doc, "value", ""), dtype=float),
                n_features=n_features,
                root=int(doc.get("root", 0)),
            )
        if kind == "mlp":
            raw_layers = _require(doc, "layers", "")
            if not isinstance(raw_layers, list) or not raw_layers:
                raise ValidationError("layers: expected a nonempty list")
            layers = []
            for k, item in enumerate(raw_layers):
                path = f"layers[{k}]."
                layers.append(
                    MlpLayer(
                        weights=np.asarray(_require(item, "weights", path), dtype=float),
                        bias=np.asarray(_require(item, "bias", path), dtype=float),
                        activation=_require(item, "activation", path),
                    )
                )
            out_idx = doc.get("output_index")
            return MlpModel(
                layers=tuple(layers),
                output_index=None if out_idx is None else int(out_idx),
            )
        if kind == "max":
            return MaxModel(n_features=int(_require(doc, "n_features", "")))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed {kind} model: {exc}") from exc
    raise ValidationError(f"type: unknown model type {kind!r}")


def dump_model(model: Model) -> dict:
    """Serialize a model back to its schema document."""
    if isinstance(model, LinearModel):
        return {
            "type": "linear",
            "weights": model.weights.tolist(),
            "bias": model.bias,
        }
    if isinstance(model, DecisionTree):
        return {
            "type": "tree",
            "feature": model.feature.tolist(),
            "threshold": model.threshold.tolist(),
            "left": model.left.tolist(),
            "right": model.right.tolist(),
            "value": model.value.tolist(),
            "n_features": model.n_features,
            "root": model.root,
        }
    if isinstance(model, MlpModel):
        doc = {
            "type": "mlp",
            "layers": [
                {
                    "weights": layer.weights.tolist(),
                    "bias": layer.bias.tolist(),
                    "activation": layer.activation,
                }
                for layer in model.layers
            ],
        }
        if model.output_index is not None:
            doc["output_index"] = model.output_index
        return doc
    if isinstance(model, MaxModel):
        return {"type": "max", "n_features": model.n_features}
    raise ConfigError(f"unknown model type {type(model).__name__}")


def load_tabular_game(doc: dict) -> TabularGame:
    """Parse a payoff-table game document: {"type": "tabular", "values": [...]}."""
    if not isinstance(doc, dict):
        raise ValidationError("game document must be a JSON object")
    if doc.get("type") != "tabular":
        raise ValidationError(f"type: expected 'tabular', got {doc.get('type')!r}")
    values = np.asarray(_require(doc, "values", ""), dtype=float)
    try:
        return TabularGame(values)
    except ValueError as exc:
        raise ValidationError(f"values: {exc}") from exc
