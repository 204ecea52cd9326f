"""HTTP API serving predictions, explanations, and course statistics.

Readers always see one immutable snapshot (cohort, models, explainers);
retraining builds a complete replacement off the read path and swaps it in
atomically, so in-flight requests finish on the version they started with.
Every prediction response re-checks Shapley local accuracy before being
sent; an inconsistent attribution is a server error, never silent output.

Errors use the envelope {code, message, detail} with stable string codes:
unauthorized, unknown_student, checkpoint_out_of_range, model_not_available,
bad_request, attribution_inconsistent, train_failed.
"""

from __future__ import annotations

import hmac
import logging
import threading
from dataclasses import dataclass
from typing import Any, Mapping

from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .config import ServiceConfig
from .core import DateWindow, GradeScheme, StudentId
from .explain import textual_explanation
from .features import (
    FeatureMatrix,
    behavior_stats,
    cohort_trends,
    extract_features,
    percentile_of,
)
from .ingest import Cohort, load_cohort
from .pipeline import (
    CheckpointExplainers,
    CheckpointModel,
    PipelineError,
    PipelineParams,
    Prediction,
    build_explainers,
    load_models,
    predict_student,
    save_models,
    train_all,
)

logger = logging.getLogger(__name__)


class ApiError(Exception):
    """Carried to the error-envelope handler."""

    def __init__(self, status: int, code: str, message: str, detail: Any = None) -> None:
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Snapshot:
    """One immutable serving state: version, data, models, explainers."""

    version: int
    cohort: Cohort
    models: Mapping[int, CheckpointModel]
    matrices: Mapping[int, FeatureMatrix]
    explainers: Mapping[int, CheckpointExplainers]


def build_snapshot(cohort: Cohort, models: Mapping[int, CheckpointModel], version: int) -> Snapshot:
    """Assemble a serving snapshot, verifying each model's schema matches
    the feature matrix this cohort produces at that checkpoint."""
    matrices: dict[int, FeatureMatrix] = {}
    explainers: dict[int, CheckpointExplainers] = {}
    for index, model in models.items():
        matrix = extract_features(cohort, model.checkpoint, cohort.scheme)
        if matrix.schema != model.schema:
            raise PipelineError(
                f"checkpoint {index}: stored model schema does not match the "
                "cohort's feature schema; retrain the models"
            )
        matrices[index] = matrix
        explainers[index] = build_explainers(model)
    return Snapshot(
        version=version,
        cohort=cohort,
        models=dict(models),
        matrices=matrices,
        explainers=explainers,
    )


class ModelStore:
    """Atomic snapshot holder with a per-(student, checkpoint, version)
    prediction cache; swaps serialize on an internal lock."""

    def __init__(self, snapshot: Snapshot) -> None:
        self._snapshot = snapshot
        self._swap_lock = threading.Lock()
        self._cache_lock = threading.Lock()
        self._predictions: dict[tuple[str, int, int], Prediction] = {}

    @property
    def current(self) -> Snapshot:
        return self._snapshot

    def predict(self, snapshot: Snapshot, student: StudentId, index: int) -> Prediction:
        key = (student.value, index, snapshot.version)
        with self._cache_lock:
            hit = self._predictions.get(key)
        if hit is not None:
            return hit
        features = snapshot.matrices[index].vector(student)
        prediction = predict_student(
            snapshot.models[index],
            features,
            student=student,
            explainers=snapshot.explainers[index],
        )
        with self._cache_lock:
            self._predictions[key] = prediction
        return prediction

    def train_and_swap(
        self,
        cohort: Cohort,
        params: PipelineParams,
        calendar,
        model_dir,
    ) -> int:
        """Train all checkpoints, persist them, and swap the snapshot.

        Serialized: concurrent calls queue, so two requests end at
        version + 2. Any failure leaves the old snapshot serving.
        """
        with self._swap_lock:
            models = train_all(cohort, calendar, params)
            save_models(models, model_dir)
            snapshot = build_snapshot(cohort, models, self._snapshot.version + 1)
            with self._cache_lock:
                self._predictions = {}
            self._snapshot = snapshot
            return snapshot.version


# ---------------------------------------------------------------------------
# Response shaping
# ---------------------------------------------------------------------------


def _window_json(window: DateWindow) -> dict:
    return {"start": window.start.isoformat(), "end": window.end.isoformat()}


def _scheme_json(scheme: GradeScheme) -> dict:
    return {
        "pass_threshold_points": scheme.pass_threshold_points,
        "formative_min_points": scheme.formative_min_points,
        "items": [
            {
                "id": item.id,
                "kind": item.kind.value,
                "max_points": item.max_points,
                "release_checkpoint": item.release_checkpoint,
            }
            for item in scheme.items
        ],
    }


def _prediction_json(
    prediction: Prediction, version: int, top_k: int
) -> dict:
    attribution = prediction.attribution
    if not attribution.check_local_accuracy():
        raise ApiError(
            500,
            "attribution_inconsistent",
            "attribution failed the local-accuracy check",
            {"student_id": prediction.student.value},
        )
    explanation = textual_explanation(attribution, prediction.attribution_kind, k=top_k)
    return {
        "student_id": prediction.student.value,
        "checkpoint": prediction.checkpoint_index,
        "model_version": version,
        "verdict": prediction.verdict.value,
        "risk_probability": prediction.risk_probability,
        "predicted_points": prediction.predicted_points,
        "predicted_grade": prediction.predicted_grade,
        "attribution": {
            "kind": prediction.attribution_kind.value,
            "base_value": attribution.base_value,
            "prediction": attribution.prediction,
            "phi": [
                {"feature": name, "value": value}
                for name, value in attribution.phi.items()
            ],
        },
        "sentences": [
            {"text": text, "direction": direction.value, "feature": feature}
            for text, direction, feature in zip(
                explanation.sentences, explanation.directions, explanation.feature_order
            )
        ],
    }


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------


def _startup_models(config: ServiceConfig, cohort: Cohort) -> Mapping[int, CheckpointModel]:
    model_dir = config.model_dir
    if model_dir.is_dir() and any(model_dir.glob("checkpoint_*.json")):
        logger.info("loading models from %s", model_dir)
        return load_models(model_dir)
    logger.info("no models found in %s; training from %s", model_dir, config.data_dir)
    models = train_all(cohort, config.calendar, config.pipeline)
    save_models(models, model_dir)
    return models


def create_app(
    config: ServiceConfig,
    cohort: Cohort | None = None,
    models: Mapping[int, CheckpointModel] | None = None,
) -> FastAPI:
    """Build the service; ``cohort``/``models`` injection is for tests."""
    if cohort is None:
        cohort = load_cohort(config.data_dir, config.scheme)
    if models is None:
        models = _startup_models(config, cohort)
    store = ModelStore(build_snapshot(cohort, models, version=1))

    app = FastAPI(title="gradecast", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.store = store
    app.state.config = config

    def require_token(authorization: str | None = Header(default=None)) -> None:
        expected = f"Bearer {config.api_token}"
        if authorization is None or not hmac.compare_digest(
            authorization.encode(), expected.encode()
        ):
            raise ApiError(401, "unauthorized", "missing or invalid bearer token")

    def resolve_student(snapshot: Snapshot, student_id: str) -> StudentId:
        student = StudentId(student_id)
        if student not in snapshot.cohort.roster:
            raise ApiError(404, "unknown_student", f"no student {student_id!r}")
        return student

    def resolve_checkpoint(snapshot: Snapshot, checkpoint: int) -> int:
        bound = len(config.calendar.checkpoints)
        if not 1 <= checkpoint <= bound:
            raise ApiError(
                400,
                "checkpoint_out_of_range",
                f"checkpoint must be in 1..{bound}",
                {"checkpoint": checkpoint},
            )
        if checkpoint not in snapshot.models:
            raise ApiError(
                404,
                "model_not_available",
                f"no trained model for checkpoint {checkpoint} yet",
            )
        return checkpoint

    @app.exception_handler(ApiError)
    async def on_api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(
        _request: Request, exc: RequestValidationError
    ) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={
                "code": "bad_request",
                "message": "invalid request parameters",
                "detail": exc.errors(),
            },
        )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "model_version": store.current.version}

    @app.get("/api/v1/students/{student_id}/prediction", dependencies=[Depends(require_token)])
    def student_prediction(student_id: str, checkpoint: int = Query(...)) -> dict:
        snapshot = store.current
        student = resolve_student(snapshot, student_id)
        index = resolve_checkpoint(snapshot, checkpoint)
        prediction = store.predict(snapshot, student, index)
        return _prediction_json(prediction, snapshot.version, config.top_k_sentences)

    @app.get("/api/v1/students/{student_id}/grades", dependencies=[Depends(require_token)])
    def student_grades(student_id: str) -> dict:
        snapshot = store.current
        student = resolve_student(snapshot, student_id)
        earned = snapshot.cohort.grades.get(student, {})
        items = [
            {
                "item_id": item.id,
                "kind": item.kind.value,
                "max_points": item.max_points,
                "release_checkpoint": item.release_checkpoint,
                "earned": earned.get(item.id),
            }
            for item in snapshot.cohort.scheme.items
        ]
        return {
            "student_id": student.value,
            "items": items,
            "earned_total": sum(v for v in earned.values()),
            "max_total": 100,
        }

    @app.get("/api/v1/students/{student_id}/behavior", dependencies=[Depends(require_token)])
    def student_behavior(student_id: str, checkpoint: int = Query(...)) -> dict:
        snapshot = store.current
        student = resolve_student(snapshot, student_id)
        index = resolve_checkpoint(snapshot, checkpoint)
        cutoff = snapshot.models[index].checkpoint.cutoff
        window = DateWindow(snapshot.cohort.window.start, cutoff)
        stats = behavior_stats(snapshot.cohort, student, window)
        return {
            "student_id": student.value,
            "checkpoint": index,
            "window": _window_json(stats.window),
            "total_clicks": stats.total_clicks,
            "active_days": stats.active_days,
            "inactive_days": stats.inactive_days,
            "clicks_per_week": list(stats.clicks_per_week),
            "longest_active_streak": stats.longest_active_streak,
            "longest_inactive_streak": stats.longest_inactive_streak,
        }

    @app.get("/api/v1/students/{student_id}/percentile", dependencies=[Depends(require_token)])
    def student_percentile(student_id: str, checkpoint: int = Query(...)) -> dict:
        snapshot = store.current
        student = resolve_student(snapshot, student_id)
        index = resolve_checkpoint(snapshot, checkpoint)
        value = percentile_of(snapshot.cohort, student, snapshot.models[index].checkpoint)
        return {"student_id": student.value, "checkpoint": index, "percentile": value}

    @app.get("/api/v1/course/history", dependencies=[Depends(require_token)])
    def course_history() -> dict:
        snapshot = store.current
        return {
            "years": [
                {
                    "year": h.year,
                    "grade_counts": {str(g): h.grade_counts.get(g, 0) for g in (5, 6, 7, 8, 9, 10)},
                    "total": h.total,
                    "passability": h.passability,
                    "mean_grade": h.mean_grade,
                }
                for h in snapshot.cohort.history
            ]
        }

    @app.get("/api/v1/course/trends", dependencies=[Depends(require_token)])
    def course_trends() -> dict:
        snapshot = store.current
        trends = cohort_trends(snapshot.cohort)
        return {
            "window": _window_json(trends.window),
            "weeks": trends.weeks,
            "passed_mean_weekly_clicks": list(trends.passed_mean_weekly_clicks),
            "failed_mean_weekly_clicks": list(trends.failed_mean_weekly_clicks),
            "passed_count": trends.passed_count,
            "failed_count": trends.failed_count,
        }

    @app.get("/api/v1/course/effort", dependencies=[Depends(require_token)])
    def course_effort() -> dict:
        snapshot = store.current
        survey = snapshot.cohort.survey
        return {
            "course_year": survey.course_year,
            "respondents": survey.respondents,
            "buckets": [
                {"low_hours": b.low_hours, "high_hours": b.high_hours, "count": b.count}
                for b in survey.buckets
            ],
        }

    @app.get("/api/v1/course/scheme", dependencies=[Depends(require_token)])
    def course_scheme() -> dict:
        return _scheme_json(store.current.cohort.scheme)

    @app.post("/api/v1/admin/train", dependencies=[Depends(require_token)])
    def admin_train() -> dict:
        snapshot = store.current
        try:
            version = store.train_and_swap(
                snapshot.cohort, config.pipeline, config.calendar, config.model_dir
            )
        except Exception as exc:  # old snapshot keeps serving
            logger.exception("training failed; keeping version %d", snapshot.version)
            raise ApiError(500, "train_failed", "training failed", str(exc)) from exc
        return {"model_version": version}

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
