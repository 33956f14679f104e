"""Shapley-value feature attribution for tabular models.

Six estimators over one game abstraction: brute-force enumeration,
permutation averaging, Monte Carlo sampling, kernel-weighted regression,
closed forms for linear and max models, and multiplier back-propagation for
feedforward networks; plus a benchmark harness for convergence and masking
experiments.
"""

__version__ = "0.1.0"

from .core import (
    Coalition,
    Explanation,
    GameOracle,
    RestrictedGame,
    TabularGame,
    check_consistency_pair,
    check_local_accuracy,
    dummy_features,
    enumerate_coalitions,
    random_monotone_pair,
    symmetric_pairs,
)
from .errors import (
    CapacityError,
    ConfigError,
    InvalidPairError,
    NumericError,
    ShapeError,
    SingularSystemError,
    TabshapError,
    ValidationError,
)
from .exact import sampling_shap, shapley_exact, shapley_permutation_exact
from .games import (
    BackgroundData,
    DecisionTree,
    LinearModel,
    MaskedGame,
    MaxModel,
    MlpLayer,
    MlpModel,
    dump_model,
    load_model,
    load_tabular_game,
    predict,
    predict_batch,
)
from .kernel import (
    KernelConfig,
    WeightedDesign,
    kernel_shap,
    sample_coalitions,
    shapley_kernel_weight,
    solve_constrained_wls,
)
from .specific import deep_shap, linear_shap, low_order_dispatch, max_shap

__all__ = [
    "__version__",
    "Coalition",
    "Explanation",
    "GameOracle",
    "TabularGame",
    "RestrictedGame",
    "enumerate_coalitions",
    "check_local_accuracy",
    "check_consistency_pair",
    "random_monotone_pair",
    "dummy_features",
    "symmetric_pairs",
    "BackgroundData",
    "DecisionTree",
    "LinearModel",
    "MaskedGame",
    "MaxModel",
    "MlpLayer",
    "MlpModel",
    "load_model",
    "dump_model",
    "load_tabular_game",
    "predict",
    "predict_batch",
    "shapley_exact",
    "shapley_permutation_exact",
    "sampling_shap",
    "KernelConfig",
    "WeightedDesign",
    "shapley_kernel_weight",
    "sample_coalitions",
    "solve_constrained_wls",
    "kernel_shap",
    "linear_shap",
    "low_order_dispatch",
    "max_shap",
    "deep_shap",
    "TabshapError",
    "CapacityError",
    "ConfigError",
    "ValidationError",
    "ShapeError",
    "NumericError",
    "SingularSystemError",
    "InvalidPairError",
]
