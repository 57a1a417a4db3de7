"""Evaluate and construct example-based explanation sets from influence scores."""

from .errors import (
    BudgetError,
    ConfigurationError,
    ContractError,
    ConvergenceError,
    CoverageError,
    DegenerateGradientError,
    EmptySelectionError,
    FormatError,
    IncompleteSeriesError,
    PairingError,
    SelrelError,
    TrainingError,
    UndefinedCorrelationError,
)
from .estimators import (
    BM25Estimator,
    GradientSimilarityEstimator,
    InfluenceRanking,
    SIGN_CONVENTION,
    TokenizedCorpus,
    bm25_scores,
    gradient_similarity_scores,
    load_external_scores,
)
from .gradstore import (
    GradientMatrix,
    ProbeSet,
    ProjectionSpec,
    allocate_projection_dims,
    normalize_rows,
    project_matrix,
    projection_signs,
    read_gradient_matrix,
    write_gradient_matrix,
)
from .pipeline import (
    ExperimentConfig,
    ExperimentResult,
    ResultRow,
    auc_over_budgets,
    correlation_summary,
    relative_improvement,
    run_experiment,
    toy_documents,
    write_report,
    write_selections,
)
from .relevance import (
    ReconstructionResult,
    RelevanceScore,
    ScoringModelSpec,
    format_db,
    least_squares_solve,
    nnls_solve,
    project_to_simplex,
    reconstruct,
    selection_relevance,
)
from .selectors import (
    CostVector,
    Selection,
    aide_select,
    candidate_pool,
    candidate_similarity,
    divine_select,
    facility_location_select,
    influence_to_costs,
    mode_transform,
    select_naive,
    select_random,
)
from .validation import (
    ToyDataset,
    ToyModel,
    ToyTask,
    ValidationRecord,
    accuracy_by_bins,
    finetune_one_step,
    jsd,
    make_toy_task,
    per_example_gradient,
    prediction_shift,
    prediction_support,
    rule_based_estimate,
    sanity_self_finetune,
    spearman,
    train_toy_model,
)

__version__ = "0.1.0"
