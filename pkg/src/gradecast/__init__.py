"""Early-warning grade prediction and explanation for VLE courses.

Pipeline overview: ingest course CSVs (or synthesize a cohort), extract
checkpoint-sliced features, train a random-forest gate plus a regression
tree per monthly checkpoint, attach exact Shapley attributions to every
prediction, and serve it all over a small HTTP API for the student
dashboard.
"""

from .core import (
    FAIL_GRADE,
    FORMATIVE_MIN_POINTS,
    PASS_THRESHOLD_POINTS,
    DateWindow,
    Demographics,
    FinalOutcome,
    Gender,
    GradeItem,
    GradeScheme,
    GradingError,
    ItemKind,
    StudentId,
    evaluate_outcome,
    grade_from_points,
    reference_scheme,
)
from .explain import (
    Attribution,
    AttributionKind,
    Explanation,
    shapley_bruteforce,
    shapley_exact,
    textual_explanation,
)
from .features import (
    AssessmentCalendar,
    BehaviorStats,
    Checkpoint,
    FeatureMatrix,
    TrendSeries,
    behavior_stats,
    cohort_trends,
    default_calendar,
    extract_features,
    percentile_of,
)
from .ingest import (
    Cohort,
    Component,
    EffortBucket,
    EffortSurvey,
    HistoricalStats,
    IngestError,
    VleEvent,
    assemble_cohort,
    export_cohort,
    load_cohort,
    parse_demographics,
    parse_events,
    parse_gradebook,
    parse_history,
    parse_survey,
)
from .pipeline import (
    CheckpointModel,
    EvalReport,
    PipelineParams,
    Prediction,
    Verdict,
    cross_validate,
    evaluate_all,
    load_models,
    predict_student,
    save_models,
    train_all,
    train_checkpoint,
)
from .synth import SynthParams, generate_cohort
from .trees import (
    Criterion,
    ForestModel,
    TreeNode,
    TreeParams,
    baseline_majority,
    baseline_mean,
    fit_forest,
    fit_tree,
    gini,
    predict_forest_proba,
    predict_tree,
)

__version__ = "1.0.0"

__all__ = [
    "AssessmentCalendar",
    "Attribution",
    "AttributionKind",
    "BehaviorStats",
    "Checkpoint",
    "CheckpointModel",
    "Cohort",
    "Component",
    "Criterion",
    "DateWindow",
    "Demographics",
    "EffortBucket",
    "EffortSurvey",
    "FAIL_GRADE",
    "FORMATIVE_MIN_POINTS",
    "PASS_THRESHOLD_POINTS",
    "EvalReport",
    "Explanation",
    "FeatureMatrix",
    "FinalOutcome",
    "ForestModel",
    "Gender",
    "GradeItem",
    "GradeScheme",
    "GradingError",
    "HistoricalStats",
    "IngestError",
    "ItemKind",
    "PipelineParams",
    "Prediction",
    "StudentId",
    "SynthParams",
    "TreeNode",
    "TreeParams",
    "TrendSeries",
    "Verdict",
    "VleEvent",
    "assemble_cohort",
    "baseline_majority",
    "baseline_mean",
    "behavior_stats",
    "cohort_trends",
    "cross_validate",
    "default_calendar",
    "evaluate_all",
    "evaluate_outcome",
    "export_cohort",
    "extract_features",
    "fit_forest",
    "fit_tree",
    "generate_cohort",
    "gini",
    "grade_from_points",
    "load_cohort",
    "load_models",
    "parse_demographics",
    "parse_events",
    "parse_gradebook",
    "parse_history",
    "parse_survey",
    "percentile_of",
    "predict_forest_proba",
    "predict_student",
    "predict_tree",
    "reference_scheme",
    "save_models",
    "shapley_bruteforce",
    "shapley_exact",
    "textual_explanation",
    "train_all",
    "train_checkpoint",
]
