"""Model-specific fast estimators.

These trade generality for speed: a linear model's attributions come straight
from its coefficients, a max function admits an O(M log M) closed form, and a
feedforward network is handled by composing per-component attribution
multipliers backwards through its layers.
"""

from __future__ import annotations

import numpy as np

from .core import Explanation, GameOracle
from .errors import ConfigError, NumericError, ShapeError
from .games import BackgroundData, LinearModel, MlpModel, mlp_forward_trace, predict
from .kernel import KernelConfig, kernel_shap

LOW_ORDER_DEFAULT_THRESHOLD = 13


def linear_shap(model: LinearModel, x, background: BackgroundData) -> Explanation:
    """Attributions of a linear model under feature independence.

    Feature i receives w_i * (x_i - mean_i); the base value is the model's
    expectation over the background, so local accuracy holds exactly.
    """
    x = np.asarray(x, dtype=float)
    if len(x) != model.n_features or background.n_features != model.n_features:
        raise ShapeError(
            f"instance/background arity does not match model arity {model.n_features}"
        )
    means = background.means
    phi = model.weights * (x - means)
    base = model.bias + float(model.weights @ means)
    return Explanation(
        base_value=base,
        attributions=phi,
        fx_full=predict(model, x),
        method="linear",
        evaluations_used=0,
    )


def low_order_dispatch(
    game: GameOracle, threshold: int = LOW_ORDER_DEFAULT_THRESHOLD
) -> Explanation:
    """Exact kernel regression over the full coalition design at small M.

    Routes to the kernel estimator with full enumeration when the feature
    count allows it; beyond the threshold an explicit budget is required.
    """
    m = game.m
    if m > threshold:
        raise ConfigError(
            f"m={m} exceeds the low-order threshold {threshold}; "
            "call the kernel estimator with an explicit budget instead"
        )
    config = KernelConfig(budget=(1 << m) - 2 if m > 1 else 0)
    expl = kernel_shap(game, config)
    return Explanation(
        base_value=expl.base_value,
        attributions=expl.attributions,
        fx_full=expl.fx_full,
        method="low_order",
        evaluations_used=expl.evaluations_used,
    )


def max_shap(values, reference: float) -> Explanation:
    """Shapley values of v(S) = max(reference, max of the member values).

    Values below the reference are clamped to it, then sorted ascending; the
    k-th order statistic's attribution accumulates the gaps between
    consecutive order statistics, each divided by the number of inputs that
    could still raise the maximum past that gap. Tied values receive equal
    attributions. O(M log M).
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 1:
        raise ShapeError("values must be a nonempty 1-d array")
    if not np.all(np.isfinite(values)) or not np.isfinite(reference):
        raise NumericError("max attribution requires finite values and reference")
    m = len(values)
    reference = float(reference)

    clamped = np.maximum(values, reference)
    order = np.argsort(clamped, kind="stable")
    phi_sorted = np.empty(m, dtype=float)
    prev_value = reference
    acc = 0.0
    for rank, idx in enumerate(order):  # rank 0 has m candidates left
        acc += (clamped[idx] - prev_value) / (m - rank)
        phi_sorted[rank] = acc
        prev_value = clamped[idx]
    phi = np.empty(m, dtype=float)
    phi[order] = phi_sorted

    return Explanation(
        base_value=reference,
        attributions=phi,
        fx_full=float(max(reference, values.max())),
        method="max",
        evaluations_used=0,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _activation_multipliers(name: str, z: np.ndarray, z_ref: np.ndarray) -> np.ndarray:
    """Elementwise slope (a(z) - a(z_ref)) / (z - z_ref), derivative at zero delta."""
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        a, a_ref = np.maximum(z, 0.0), np.maximum(z_ref, 0.0)
        deriv = (z > 0).astype(float)
    elif name == "sigmoid":
        a, a_ref = _sigmoid(z), _sigmoid(z_ref)
        deriv = a * (1.0 - a)
    else:
        raise ConfigError(f"activation {name!r} has no single-input multiplier")
    delta = z - z_ref
    out = np.empty_like(z)
    zero = delta == 0.0
    out[zero] = deriv[zero]
    out[~zero] = (a[~zero] - a_ref[~zero]) / delta[~zero]
    return out


def _maxpool_multipliers(z: np.ndarray, z_ref: np.ndarray) -> np.ndarray:
    """Multipliers of a global max over its inputs, from the max attribution.

    The pool's reference output is the pooled reference activations; each
    input's multiplier is its attribution divided by its delta, falling back
    to the argmax indicator when the delta vanishes.
    """
    pooled_ref = float(z_ref.max())
    phi = max_shap(z, pooled_ref).attributions
    delta = z - z_ref
    out = np.zeros_like(z)
    zero = delta == 0.0
    out[~zero] = phi[~zero] / delta[~zero]
    if zero.any():
        out[zero] = (np.argmax(z) == np.flatnonzero(zero)).astype(float)
    return out


def deep_shap(
    model: MlpModel,
    x,
    background: BackgroundData,
    output_index: int | None = None,
) -> Explanation:
    """Compositional attribution for a feedforward network.

    Runs a forward pass at the instance and at the background column means
    (the single reference point), then back-propagates attribution
    multipliers: linear layers contribute their weights, single-input
    activations the slope of their chord between the two passes, and max
    pooling the closed-form max attributions over its inputs. Each input's
    attribution is its composed multiplier times its deviation from the
    reference, so the attributions sum to f(x) - f(reference).
    """
    x = np.asarray(x, dtype=float)
    if len(x) != model.n_features or background.n_features != model.n_features:
        raise ShapeError(
            f"instance/background arity does not match model arity {model.n_features}"
        )
    reference = background.means
    trace = mlp_forward_trace(model, x)
    trace_ref = mlp_forward_trace(model, reference)

    out_dim = model.n_outputs
    if output_index is None:
        output_index = model.output_index
    if out_dim == 1:
        output_index = 0
    elif output_index is None:
        raise ConfigError(f"model produces {out_dim} outputs; an output_index is required")
    elif not 0 <= output_index < out_dim:
        raise ConfigError(f"output_index {output_index} out of range for {out_dim} outputs")

    # Multiplier of the selected output with respect to itself.
    grad = np.zeros(out_dim)
    grad[output_index] = 1.0

    for layer, (z, _a), (z_ref, _a_ref) in zip(
        reversed(model.layers), reversed(trace), reversed(trace_ref)
    ):
        if layer.activation == "maxpool":
            grad = grad[0] * _maxpool_multipliers(z, z_ref)
        else:
            grad = grad * _activation_multipliers(layer.activation, z, z_ref)
        grad = layer.weights.T @ grad

    phi = grad * (x - reference)
    fx = float(trace[-1][1][output_index])
    f_ref = float(trace_ref[-1][1][output_index])
    return Explanation(
        base_value=f_ref,
        attributions=phi,
        fx_full=fx,
        method="deep",
        evaluations_used=2,
    )
