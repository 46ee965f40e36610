"""costbench: cost-sensitive classification with polyhedral embedding surrogates.

Build a convex piecewise-linear surrogate from any cost matrix, train small
models against it and against cost-agnostic baselines, verify the surrogate's
embedding and link-separation properties numerically, and reproduce seeded
benchmark tables end to end.
"""

from .costs import (
    CostMatrix,
    ConfusionMatrix,
    SimplexDist,
    accuracy,
    bayes_optimal_reports,
    bayes_risk,
    binary_alpha_matrix,
    confusion,
    cost_sensitive_loss,
    expected_cost,
    german_credit_deferral_matrix,
    german_credit_matrix,
    load_cost_matrix,
    severity_three_class_matrix,
    stock_matrices,
    synthetic_cost_matrix,
    zero_one_matrix,
)
from .embedding import (
    EmbeddingSurrogate,
    GameSolution,
    build_embedding_surrogate,
    game_value,
    link,
    surrogate_subgradient,
    surrogate_value,
    verify_alpha_separation,
    verify_embedding,
    weighted_hinge,
)
from .losses import (
    BoundLoss,
    DecisionRule,
    LossSpec,
    class_weights,
    cross_entropy,
    decide,
    embedding_softmax_loss,
    postprocess_search,
    scaled_cross_entropy,
)
from .models import (
    ModelSpec,
    TrainConfig,
    TrainedModel,
    evaluate,
    forward,
    gradient_check,
    init_model,
    train,
)
from .data import (
    Dataset,
    SplitIndices,
    bayes_decision,
    load_uci,
    posterior,
    sample_synthetic,
    subsample_and_split,
)
from .diagnostics import monte_carlo_bayes_csl, regret_profile
from .harness import ExperimentConfig, aggregate, emit_table, run_experiment

__version__ = "0.1.0"
