"""Two-stage checkpoint prediction: a random-forest gate flags at-risk
students, and a regression tree projects grade points for everyone the gate
lets through.

Per checkpoint, the gate trains on labels {at_risk = not passed} and the
regressor on final total points over all students; at inference the
regressor output is only surfaced for gate-passed students, clamped to the
passing range [50, 100]. Evaluation uses seeded k-fold cross-validation
with at_risk as the positive class and reports MAE both over the headline
population (true pass and gated pass) and over all students, next to
constant-predictor baselines.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import GradeScheme, StudentId, grade_from_points
from .explain import Attribution, AttributionKind, TreeExplainer
from .features import (
    AssessmentCalendar,
    Checkpoint,
    FeatureMatrix,
    FeatureSpec,
    extract_features,
)
from .ingest import Cohort
from .trees import (
    Criterion,
    ForestModel,
    TreeNode,
    TreeParams,
    baseline_majority,
    baseline_mean,
    dump_model_json,
    fit_forest,
    fit_tree,
    forest_from_dict,
    forest_to_dict,
    predict_forest_proba,
    predict_tree,
    tree_from_dict,
    tree_to_dict,
)

CLASS_PASS = 0
CLASS_AT_RISK = 1
DEFAULT_RISK_THRESHOLD = 0.5

CHECKPOINT_MODEL_FORMAT = "gradecast-checkpoint/1"


class PipelineError(ValueError):
    """Raised for unusable training inputs or model/schema mismatches."""


class Verdict(str, Enum):
    PASS = "pass"
    AT_RISK = "at_risk"


@dataclass(frozen=True)
class PipelineParams:
    """Hyperparameters of the cascade; defaults sized for ~100-row cohorts."""

    seed: int = 42
    n_trees: int = 100
    gate_max_depth: int = 8
    gate_min_samples_leaf: int = 2
    regressor_max_depth: int = 6
    regressor_min_samples_leaf: int = 3
    risk_threshold: float = DEFAULT_RISK_THRESHOLD
    cv_folds: int = 5
    n_workers: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.risk_threshold <= 1.0:
            raise PipelineError("risk_threshold must be in (0, 1]")
        if self.n_trees < 1:
            raise PipelineError("n_trees must be >= 1")
        if self.cv_folds < 2:
            raise PipelineError("cv_folds must be >= 2")
        if self.n_workers < 1:
            raise PipelineError("n_workers must be >= 1")

    # Seeds are derived per checkpoint so the four models are independent
    # draws while the whole pipeline stays a pure function of self.seed.
    def gate_tree_params(self, checkpoint_index: int) -> TreeParams:
        return TreeParams(
            max_depth=self.gate_max_depth,
            min_samples_leaf=self.gate_min_samples_leaf,
            criterion=Criterion.GINI,
            seed=self.seed + 1000 * checkpoint_index,
        )

    def regressor_tree_params(self, checkpoint_index: int) -> TreeParams:
        return TreeParams(
            max_depth=self.regressor_max_depth,
            min_samples_leaf=self.regressor_min_samples_leaf,
            criterion=Criterion.MSE,
            seed=self.seed + 1000 * checkpoint_index + 500,
        )


@dataclass(frozen=True, eq=False)
class CheckpointModel:
    """The trained pair for one checkpoint plus everything attribution needs.

    ``background`` is the training feature matrix; it doubles as the
    reference set for interventional Shapley values. ``trained_at`` is
    informational only and deliberately excluded from the persisted file so
    training is bit-reproducible.
    """

    checkpoint: Checkpoint
    schema: tuple[FeatureSpec, ...]
    gate: ForestModel
    gate_is_baseline: bool
    regressor: TreeNode
    regressor_is_baseline: bool
    background: FeatureMatrix
    training_year: str
    risk_threshold: float
    params: PipelineParams
    trained_at: str | None = None

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(spec.name for spec in self.schema)


@dataclass(frozen=True)
class Prediction:
    """One student's served prediction at one checkpoint.

    AtRisk carries no point estimate; Pass carries points clamped to
    [50, 100] and the matching 6..10 grade. ``raw_points`` keeps the
    unclamped regressor output for evaluation; ``attribution`` explains
    the decisive model output (pass probability or grade points).
    """

    student: StudentId
    checkpoint_index: int
    verdict: Verdict
    risk_probability: float
    predicted_points: float | None
    predicted_grade: int | None
    attribution: Attribution
    attribution_kind: AttributionKind
    raw_points: float | None = None

    def __post_init__(self) -> None:
        if self.verdict is Verdict.AT_RISK:
            if self.predicted_points is not None or self.predicted_grade is not None:
                raise PipelineError("AtRisk predictions must not carry points")
        else:
            if self.predicted_points is None or self.predicted_grade is None:
                raise PipelineError("Pass predictions must carry points and grade")
            if not 50.0 <= self.predicted_points <= 100.0:
                raise PipelineError("predicted_points must lie in [50, 100]")
            expected = grade_from_points(round(self.predicted_points))
            if self.predicted_grade != expected:
                raise PipelineError("predicted_grade inconsistent with points")


def _training_arrays(
    cohort: Cohort, checkpoint: Checkpoint, scheme: GradeScheme
) -> tuple[list[StudentId], FeatureMatrix, np.ndarray, np.ndarray]:
    missing = [s.value for s in cohort.roster if s not in cohort.outcomes]
    if missing:
        raise PipelineError(
            f"{len(missing)} student(s) lack final outcomes; "
            "training requires a completed year"
        )
    matrix = extract_features(cohort, checkpoint, scheme)
    students = list(cohort.students)
    X = matrix.to_array(students)
    y_class = np.array(
        [CLASS_PASS if cohort.outcomes[s].passed else CLASS_AT_RISK for s in students],
        dtype=np.intp,
    )
    y_reg = np.array(
        [float(cohort.outcomes[s].total_points) for s in students], dtype=np.float64
    )
    return students, matrix, y_class, y_reg


def _fit_gate(
    X: np.ndarray, y_class: np.ndarray, params: PipelineParams, checkpoint_index: int
) -> tuple[ForestModel, bool]:
    tree_params = params.gate_tree_params(checkpoint_index)
    if np.unique(y_class).size < 2:
        return baseline_majority(y_class, n_classes=2, seed=tree_params.seed), True
    forest = fit_forest(
        X,
        y_class,
        n_trees=params.n_trees,
        params=tree_params,
        n_classes=2,
        n_workers=params.n_workers,
    )
    return forest, False


def _fit_regressor(
    X: np.ndarray, y_reg: np.ndarray, params: PipelineParams, checkpoint_index: int
) -> tuple[TreeNode, bool]:
    if np.unique(y_reg).size < 2:
        return baseline_mean(y_reg), True
    tree = fit_tree(X, y_reg, params.regressor_tree_params(checkpoint_index))
    return tree, False


def train_checkpoint(
    cohort: Cohort,
    checkpoint: Checkpoint,
    params: PipelineParams,
    record_time: bool = False,
) -> CheckpointModel:
    """Train the gate and regressor for one checkpoint on a completed year.

    A single-class label set (everyone passed, or everyone failed) swaps
    the gate for the majority baseline and sets ``gate_is_baseline``.
    """
    _, matrix, y_class, y_reg = _training_arrays(cohort, checkpoint, cohort.scheme)
    X = matrix.to_array()
    gate, gate_is_baseline = _fit_gate(X, y_class, params, checkpoint.index)
    regressor, regressor_is_baseline = _fit_regressor(X, y_reg, params, checkpoint.index)
    trained_at = (
        datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ") if record_time else None
    )
    return CheckpointModel(
        checkpoint=checkpoint,
        schema=matrix.schema,
        gate=gate,
        gate_is_baseline=gate_is_baseline,
        regressor=regressor,
        regressor_is_baseline=regressor_is_baseline,
        background=matrix,
        training_year=cohort.year,
        risk_threshold=params.risk_threshold,
        params=params,
        trained_at=trained_at,
    )


def train_all(
    cohort: Cohort, calendar: AssessmentCalendar, params: PipelineParams
) -> dict[int, CheckpointModel]:
    """Train every checkpoint model; keys are checkpoint indexes."""
    calendar.validate_scheme(cohort.scheme)
    return {
        cp.index: train_checkpoint(cohort, cp, params) for cp in calendar.checkpoints
    }


@dataclass(frozen=True)
class CheckpointExplainers:
    """Prebuilt attribution engines for one CheckpointModel; reusable
    across requests because model and background are immutable."""

    gate: TreeExplainer
    regressor: TreeExplainer


def build_explainers(model: CheckpointModel) -> CheckpointExplainers:
    background = model.background.to_array()
    d = len(model.schema)
    return CheckpointExplainers(
        gate=TreeExplainer(model.gate, background, d, output_index=CLASS_PASS),
        regressor=TreeExplainer(model.regressor, background, d, output_index=0),
    )


def predict_student(
    model: CheckpointModel,
    features: Sequence[float],
    student: StudentId = StudentId("anonymous"),
    explainers: CheckpointExplainers | None = None,
) -> Prediction:
    """Run the cascade on one feature vector.

    At-risk verdicts explain the gate's pass-class probability; pass
    verdicts explain the regressor's raw point estimate, so the attribution
    always satisfies local accuracy against its own model output.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (len(model.schema),):
        raise PipelineError(
            f"feature vector length {x.shape} does not match schema "
            f"({len(model.schema)} features)"
        )
    if explainers is None:
        explainers = build_explainers(model)

    proba = predict_forest_proba(model.gate, x)
    risk = float(proba[CLASS_AT_RISK])
    names = model.feature_names

    if risk >= model.risk_threshold:
        attribution = explainers.gate.attribution(x, names)
        return Prediction(
            student=student,
            checkpoint_index=model.checkpoint.index,
            verdict=Verdict.AT_RISK,
            risk_probability=risk,
            predicted_points=None,
            predicted_grade=None,
            attribution=attribution,
            attribution_kind=AttributionKind.PASS_PROBABILITY,
        )

    raw = _regress(model.regressor, x)
    clamped = min(max(raw, 50.0), 100.0)
    grade = grade_from_points(round(clamped))
    attribution = explainers.regressor.attribution(x, names)
    return Prediction(
        student=student,
        checkpoint_index=model.checkpoint.index,
        verdict=Verdict.PASS,
        risk_probability=risk,
        predicted_points=clamped,
        predicted_grade=grade,
        attribution=attribution,
        attribution_kind=AttributionKind.GRADE_POINTS,
        raw_points=raw,
    )


def _regress(regressor: TreeNode, x: np.ndarray) -> float:
    return float(predict_tree(regressor, x)[0])


# ---------------------------------------------------------------------------
# Cross-validation and evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Confusion:
    """At-risk-positive confusion counts over the whole cohort."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0


@dataclass(frozen=True)
class RegressionEval:
    mae_gated_pass: float | None
    n_gated_pass: int
    mae_all: float


@dataclass(frozen=True)
class CheckpointEval:
    """Pooled k-fold metrics for one checkpoint, model next to baselines.

    Baseline classification is the per-fold training majority class;
    baseline regression is the per-fold training mean, scored on the same
    gated-pass population as the model for comparability.
    """

    checkpoint_index: int
    label: str
    n_students: int
    k: int
    confusion: Confusion
    regression: RegressionEval
    baseline_confusion: Confusion
    baseline_regression: RegressionEval
    degenerate_folds: int


@dataclass(frozen=True)
class EvalReport:
    year: str
    seed: int
    k: int
    checkpoints: tuple[CheckpointEval, ...]

    def to_dict(self) -> dict:
        def reg(r: RegressionEval) -> dict:
            return {
                "mae_gated_pass": r.mae_gated_pass,
                "n_gated_pass": r.n_gated_pass,
                "mae_all": r.mae_all,
            }

        return {
            "year": self.year,
            "seed": self.seed,
            "k": self.k,
            "checkpoints": [
                {
                    "checkpoint": e.checkpoint_index,
                    "label": e.label,
                    "n_students": e.n_students,
                    "confusion": {
                        "tp": e.confusion.tp,
                        "fp": e.confusion.fp,
                        "fn": e.confusion.fn,
                        "tn": e.confusion.tn,
                    },
                    "precision": e.confusion.precision,
                    "recall": e.confusion.recall,
                    "f1": e.confusion.f1,
                    "accuracy": e.confusion.accuracy,
                    "regression": reg(e.regression),
                    "baseline": {
                        "precision": e.baseline_confusion.precision,
                        "recall": e.baseline_confusion.recall,
                        "f1": e.baseline_confusion.f1,
                        "accuracy": e.baseline_confusion.accuracy,
                        "regression": reg(e.baseline_regression),
                    },
                    "degenerate_folds": e.degenerate_folds,
                }
                for e in self.checkpoints
            ],
        }

    def render_text(self) -> str:
        """Aligned per-checkpoint table for terminal output."""
        header = (
            f"{'cp':>2}  {'month':<9} {'prec':>6} {'rec':>6} {'f1':>6} "
            f"{'mae':>6} {'mae(all)':>8} {'base-mae':>8} {'n':>4}"
        )
        lines = [
            f"evaluation  year={self.year}  k={self.k}  seed={self.seed}",
            header,
            "-" * len(header),
        ]
        for e in self.checkpoints:
            mae = "-" if e.regression.mae_gated_pass is None else f"{e.regression.mae_gated_pass:6.2f}"
            base_mae = (
                "-"
                if e.baseline_regression.mae_gated_pass is None
                else f"{e.baseline_regression.mae_gated_pass:8.2f}"
            )
            lines.append(
                f"{e.checkpoint_index:>2}  {e.label:<9} "
                f"{e.confusion.precision:6.3f} {e.confusion.recall:6.3f} "
                f"{e.confusion.f1:6.3f} {mae:>6} {e.regression.mae_all:8.2f} "
                f"{base_mae:>8} {e.n_students:>4}"
            )
        return "\n".join(lines)


def _fold_slices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic shuffled fold index arrays with sizes differing by <=1."""
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    base, extra = divmod(n, k)
    folds: list[np.ndarray] = []
    at = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(order[at : at + size])
        at += size
    return folds


def cross_validate(
    cohort: Cohort,
    checkpoint: Checkpoint,
    params: PipelineParams,
    k: int | None = None,
) -> CheckpointEval:
    """Pooled k-fold evaluation of the cascade at one checkpoint.

    Every student lands in exactly one test fold. MAE uses the raw
    (unclamped) regressor output so clamping cannot mask regression error.
    """
    k = params.cv_folds if k is None else k
    students, matrix, y_class, y_reg = _training_arrays(cohort, checkpoint, cohort.scheme)
    n = len(students)
    if n < k:
        raise PipelineError(f"cohort of {n} students is smaller than k={k}")
    X = matrix.to_array(students)

    pred_class = np.empty(n, dtype=np.intp)
    pred_points = np.empty(n, dtype=np.float64)
    base_class = np.empty(n, dtype=np.intp)
    base_points = np.empty(n, dtype=np.float64)
    degenerate = 0

    for fold in _fold_slices(n, k, params.seed):
        mask = np.zeros(n, dtype=bool)
        mask[fold] = True
        X_train, y_class_train, y_reg_train = X[~mask], y_class[~mask], y_reg[~mask]

        gate, gate_is_baseline = _fit_gate(X_train, y_class_train, params, checkpoint.index)
        regressor, _ = _fit_regressor(X_train, y_reg_train, params, checkpoint.index)
        if gate_is_baseline:
            degenerate += 1

        counts = np.bincount(y_class_train, minlength=2)
        majority = int(np.argmax(counts))
        train_mean = float(y_reg_train.mean())

        for idx in fold:
            risk = predict_forest_proba(gate, X[idx])[CLASS_AT_RISK]
            pred_class[idx] = CLASS_AT_RISK if risk >= params.risk_threshold else CLASS_PASS
            pred_points[idx] = _regress(regressor, X[idx])
            base_class[idx] = majority
            base_points[idx] = train_mean

    true_at_risk = y_class == CLASS_AT_RISK

    def confusion(pred: np.ndarray) -> Confusion:
        pred_at_risk = pred == CLASS_AT_RISK
        return Confusion(
            tp=int(np.sum(pred_at_risk & true_at_risk)),
            fp=int(np.sum(pred_at_risk & ~true_at_risk)),
            fn=int(np.sum(~pred_at_risk & true_at_risk)),
            tn=int(np.sum(~pred_at_risk & ~true_at_risk)),
        )

    # Headline MAE population: truly passed AND gated pass by the model.
    gated_pass = (~true_at_risk) & (pred_class == CLASS_PASS)

    def regression_eval(points: np.ndarray) -> RegressionEval:
        errors = np.abs(points - y_reg)
        mae_gated = float(errors[gated_pass].mean()) if gated_pass.any() else None
        return RegressionEval(
            mae_gated_pass=mae_gated,
            n_gated_pass=int(gated_pass.sum()),
            mae_all=float(errors.mean()),
        )

    return CheckpointEval(
        checkpoint_index=checkpoint.index,
        label=checkpoint.label,
        n_students=n,
        k=k,
        confusion=confusion(pred_class),
        regression=regression_eval(pred_points),
        baseline_confusion=confusion(base_class),
        baseline_regression=regression_eval(base_points),
        degenerate_folds=degenerate,
    )


def evaluate_all(
    cohort: Cohort, calendar: AssessmentCalendar, params: PipelineParams
) -> EvalReport:
    """Cross-validate every checkpoint and collect one report."""
    calendar.validate_scheme(cohort.scheme)
    rows = tuple(
        cross_validate(cohort, cp, params) for cp in calendar.checkpoints
    )
    return EvalReport(year=cohort.year, seed=params.seed, k=params.cv_folds, checkpoints=rows)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _schema_to_list(schema: tuple[FeatureSpec, ...]) -> list[dict]:
    return [{"name": s.name, "kind": s.kind} for s in schema]


def _schema_from_list(doc: list[dict]) -> tuple[FeatureSpec, ...]:
    return tuple(FeatureSpec(name=d["name"], kind=d["kind"]) for d in doc)


def _pipeline_params_to_dict(p: PipelineParams) -> dict:
    # n_workers is an execution setting, not a model property: the same
    # seed must yield byte-identical files at any parallelism.
    return {
        "seed": p.seed,
        "n_trees": p.n_trees,
        "gate_max_depth": p.gate_max_depth,
        "gate_min_samples_leaf": p.gate_min_samples_leaf,
        "regressor_max_depth": p.regressor_max_depth,
        "regressor_min_samples_leaf": p.regressor_min_samples_leaf,
        "risk_threshold": p.risk_threshold,
        "cv_folds": p.cv_folds,
    }


def _pipeline_params_from_dict(doc: dict) -> PipelineParams:
    return PipelineParams(
        seed=int(doc["seed"]),
        n_trees=int(doc["n_trees"]),
        gate_max_depth=int(doc["gate_max_depth"]),
        gate_min_samples_leaf=int(doc["gate_min_samples_leaf"]),
        regressor_max_depth=int(doc["regressor_max_depth"]),
        regressor_min_samples_leaf=int(doc["regressor_min_samples_leaf"]),
        risk_threshold=float(doc["risk_threshold"]),
        cv_folds=int(doc["cv_folds"]),
    )


def checkpoint_model_to_dict(model: CheckpointModel) -> dict:
    """Serializable form; excludes ``trained_at`` so identical training
    inputs produce byte-identical files."""
    ordered_students = sorted(model.background.rows, key=lambda s: s.value)
    return {
        "format": CHECKPOINT_MODEL_FORMAT,
        "checkpoint": {
            "index": model.checkpoint.index,
            "label": model.checkpoint.label,
            "cutoff": model.checkpoint.cutoff.isoformat(),
        },
        "schema": _schema_to_list(model.schema),
        "training_year": model.training_year,
        "risk_threshold": model.risk_threshold,
        "params": _pipeline_params_to_dict(model.params),
        "gate": forest_to_dict(model.gate),
        "gate_is_baseline": model.gate_is_baseline,
        "regressor": tree_to_dict(model.regressor, model.params.regressor_tree_params(model.checkpoint.index)),
        "regressor_is_baseline": model.regressor_is_baseline,
        "background": {
            "students": [s.value for s in ordered_students],
            "rows": [list(model.background.rows[s]) for s in ordered_students],
        },
    }


def checkpoint_model_from_dict(doc: dict) -> CheckpointModel:
    if doc.get("format") != CHECKPOINT_MODEL_FORMAT:
        raise PipelineError(f"unsupported model format: {doc.get('format')!r}")
    cp = Checkpoint(
        index=int(doc["checkpoint"]["index"]),
        label=doc["checkpoint"]["label"],
        cutoff=date.fromisoformat(doc["checkpoint"]["cutoff"]),
    )
    schema = _schema_from_list(doc["schema"])
    rows = {
        StudentId(s): tuple(float(v) for v in row)
        for s, row in zip(doc["background"]["students"], doc["background"]["rows"])
    }
    background = FeatureMatrix(schema=schema, rows=rows, checkpoint=cp)
    regressor, _ = tree_from_dict(doc["regressor"])
    model = CheckpointModel(
        checkpoint=cp,
        schema=schema,
        gate=forest_from_dict(doc["gate"]),
        gate_is_baseline=bool(doc["gate_is_baseline"]),
        regressor=regressor,
        regressor_is_baseline=bool(doc["regressor_is_baseline"]),
        background=background,
        training_year=doc["training_year"],
        risk_threshold=float(doc["risk_threshold"]),
        params=_pipeline_params_from_dict(doc["params"]),
        trained_at=None,
    )
    if len(schema) != len(next(iter(rows.values()), ())):
        raise PipelineError("background width does not match schema")
    return model


def model_path(directory: str | Path, checkpoint_index: int) -> Path:
    return Path(directory) / f"checkpoint_{checkpoint_index}.json"


def save_models(models: Mapping[int, CheckpointModel], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for index in sorted(models):
        path = model_path(directory, index)
        path.write_text(
            dump_model_json(checkpoint_model_to_dict(models[index])) + "\n",
            encoding="utf-8",
        )
        paths.append(path)
    return paths


def load_models(directory: str | Path) -> dict[int, CheckpointModel]:
    import json

    directory = Path(directory)
    models: dict[int, CheckpointModel] = {}
    for path in sorted(directory.glob("checkpoint_*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        model = checkpoint_model_from_dict(doc)
        models[model.checkpoint.index] = model
    if not models:
        raise PipelineError(f"no checkpoint model files found in {directory}")
    return models
