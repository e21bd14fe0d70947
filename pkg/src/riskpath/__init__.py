"""Transparent at-risk learner analytics: prediction, explanation,
counterfactual pathways and remedial feedback drafting."""

__version__ = "0.1.0"

from .dataset import (  # noqa: F401
    Dataset,
    FeatureSchema,
    FeatureSpec,
    LearnerRecord,
    grouped_kfold,
    impute_and_encode,
    load_dataset,
    write_dataset,
)
from .cohort import (  # noqa: F401
    CohortStats,
    StatsStore,
    fit_cohort_stats,
    zscore,
    zscore_inverse,
)
from .synth import GeneratorConfig, default_generator_config, generate_synthetic  # noqa: F401
from .boosting import Hyperparams, TreeEnsemble, train_baseline, train_gbm  # noqa: F401
from .metrics import Metrics, binary_metrics, evaluate  # noqa: F401
from .tuning import random_search_cv  # noqa: F401
from .shapley import exact_shap, kernel_shap, global_importance, force_plot_export  # noqa: F401
from .anchors import AnchorRule, find_anchor, estimate_precision_coverage  # noqa: F401
from .counterfactual import (  # noqa: F401
    CfConstraints,
    Counterfactual,
    filter_feasible,
    generate_counterfactuals,
    score_candidate,
)
from .feedback import (  # noqa: F401
    LlmConfig,
    PromptPayload,
    build_prompt_payload,
    denormalize_cf,
    generate_feedback_text,
    render_prompt,
)
from .pipeline import Pipeline  # noqa: F401
from .config import AppConfig, load_config  # noqa: F401
