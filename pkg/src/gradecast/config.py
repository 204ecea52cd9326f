"""Service configuration: one YAML document, strictly validated, with
environment-variable overrides under the ``GRADECAST_`` prefix.

Schema (all keys optional; unknown keys are rejected):

    data_dir: path            # cohort CSV directory (synth/ingest output)
    model_dir: path           # trained checkpoint model files
    semester_start: 2021-10-01
    checkpoint_cutoffs:       # overrides the derived monthly cutoffs
      - 2021-11-01
      - 2021-12-01
      - 2022-01-01
      - 2022-02-01
    scheme: reference         # or an inline item list (see below)
    seed: 42
    n_trees: 100
    gate_max_depth: 8
    gate_min_samples_leaf: 2
    regressor_max_depth: 6
    regressor_min_samples_leaf: 3
    risk_threshold: 0.5
    cv_folds: 5
    n_workers: 1
    top_k_sentences: 3
    host: 127.0.0.1
    port: 8000
    api_token: change-me

An inline scheme is a list of items, each
``{id, kind: assignment|quiz|midterm|oral_exam, max_points, release_checkpoint}``
whose maxima must sum to 100.

Environment overrides name the key uppercased after the prefix, e.g.
``GRADECAST_PORT=9000`` or ``GRADECAST_API_TOKEN=secret``. Only scalar keys
can be overridden this way.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Any, Mapping

import yaml

from .core import GradeItem, GradeScheme, ItemKind, reference_scheme
from .features import AssessmentCalendar, Checkpoint, FeatureError, default_calendar
from .pipeline import PipelineParams

ENV_PREFIX = "GRADECAST_"

_MONTH_NAMES = (
    "",
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)


class ConfigError(ValueError):
    """Raised on malformed, unknown, or inconsistent configuration."""


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    model_dir: Path
    semester_start: date
    scheme: GradeScheme
    calendar: AssessmentCalendar
    pipeline: PipelineParams
    top_k_sentences: int
    host: str
    port: int
    api_token: str

    def __post_init__(self) -> None:
        if self.top_k_sentences < 1:
            raise ConfigError("top_k_sentences must be >= 1")
        if not 0 < self.port < 65536:
            raise ConfigError("port must be in 1..65535")
        if not self.api_token:
            raise ConfigError("api_token must not be empty")
        try:
            self.calendar.validate_scheme(self.scheme)
        except FeatureError as exc:
            raise ConfigError(str(exc)) from exc


_SCALAR_KEYS: dict[str, type] = {
    "data_dir": str,
    "model_dir": str,
    "semester_start": str,
    "scheme": str,
    "seed": int,
    "n_trees": int,
    "gate_max_depth": int,
    "gate_min_samples_leaf": int,
    "regressor_max_depth": int,
    "regressor_min_samples_leaf": int,
    "risk_threshold": float,
    "cv_folds": int,
    "n_workers": int,
    "top_k_sentences": int,
    "host": str,
    "port": int,
    "api_token": str,
}
_KNOWN_KEYS = set(_SCALAR_KEYS) | {"checkpoint_cutoffs"}

_DEFAULTS: dict[str, Any] = {
    "data_dir": "data",
    "model_dir": "models",
    "semester_start": "2021-10-01",
    "scheme": "reference",
    "seed": 42,
    "n_trees": 100,
    "gate_max_depth": 8,
    "gate_min_samples_leaf": 2,
    "regressor_max_depth": 6,
    "regressor_min_samples_leaf": 3,
    "risk_threshold": 0.5,
    "cv_folds": 5,
    "n_workers": 1,
    "top_k_sentences": 3,
    "host": "127.0.0.1",
    "port": 8000,
    "api_token": "change-me",
}


def _parse_date(text: Any, key: str) -> date:
    if isinstance(text, date):
        return text
    try:
        return date.fromisoformat(str(text))
    except ValueError:
        raise ConfigError(f"{key}: bad date {text!r}, expected YYYY-MM-DD") from None


def _coerce(key: str, raw: Any) -> Any:
    want = _SCALAR_KEYS[key]
    try:
        if want is bool:
            return str(raw).lower() in ("1", "true", "yes")
        return want(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {raw!r} as {want.__name__}") from None


def _parse_scheme(value: Any) -> GradeScheme:
    if value == "reference" or value is None:
        return reference_scheme()
    if not isinstance(value, list):
        raise ConfigError("scheme must be 'reference' or a list of items")
    items = []
    for i, entry in enumerate(value):
        if not isinstance(entry, Mapping):
            raise ConfigError(f"scheme[{i}] must be a mapping")
        unknown = set(entry) - {"id", "kind", "max_points", "release_checkpoint"}
        if unknown:
            raise ConfigError(f"scheme[{i}]: unknown keys {sorted(unknown)}")
        try:
            kind = ItemKind(entry["kind"])
        except (KeyError, ValueError):
            raise ConfigError(
                f"scheme[{i}]: kind must be one of {[k.value for k in ItemKind]}"
            ) from None
        items.append(
            GradeItem(
                id=str(entry["id"]),
                kind=kind,
                max_points=int(entry["max_points"]),
                release_checkpoint=(
                    None
                    if entry.get("release_checkpoint") is None
                    else int(entry["release_checkpoint"])
                ),
            )
        )
    return GradeScheme(items=tuple(items))


def _build_calendar(semester_start: date, cutoffs_raw: Any) -> AssessmentCalendar:
    if cutoffs_raw is None:
        return default_calendar(semester_start)
    if not isinstance(cutoffs_raw, list) or not cutoffs_raw:
        raise ConfigError("checkpoint_cutoffs must be a non-empty list of dates")
    checkpoints = []
    for i, raw in enumerate(cutoffs_raw, start=1):
        cutoff = _parse_date(raw, f"checkpoint_cutoffs[{i - 1}]")
        # Label with the month the checkpoint summarizes (the one before its
        # cutoff when the cutoff sits on the 1st, the cutoff month otherwise).
        label_month = cutoff.month - 1 if cutoff.day == 1 else cutoff.month
        if label_month == 0:
            label_month = 12
        checkpoints.append(
            Checkpoint(index=i, label=_MONTH_NAMES[label_month], cutoff=cutoff)
        )
    return AssessmentCalendar(checkpoints=tuple(checkpoints))


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    seed_override: int | None = None,
) -> ServiceConfig:
    """Resolve configuration: defaults <- YAML file <- environment <- CLI seed."""
    env = os.environ if env is None else env
    merged: dict[str, Any] = dict(_DEFAULTS)
    cutoffs_raw: Any = None

    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        doc = yaml.safe_load(text)
        if doc is None:
            doc = {}
        if not isinstance(doc, Mapping):
            raise ConfigError("config file must be a key-value mapping")
        unknown = set(doc) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in doc.items():
            if key == "checkpoint_cutoffs":
                cutoffs_raw = value
            elif key == "scheme":
                merged[key] = value  # may be a list; validated below
            else:
                merged[key] = _coerce(key, value)

    for key in _SCALAR_KEYS:
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            merged[key] = _coerce(key, env[env_key])

    if seed_override is not None:
        merged["seed"] = seed_override

    semester_start = _parse_date(merged["semester_start"], "semester_start")
    scheme = _parse_scheme(merged["scheme"])
    calendar = _build_calendar(semester_start, cutoffs_raw)

    pipeline = PipelineParams(
        seed=merged["seed"],
        n_trees=merged["n_trees"],
        gate_max_depth=merged["gate_max_depth"],
        gate_min_samples_leaf=merged["gate_min_samples_leaf"],
        regressor_max_depth=merged["regressor_max_depth"],
        regressor_min_samples_leaf=merged["regressor_min_samples_leaf"],
        risk_threshold=merged["risk_threshold"],
        cv_folds=merged["cv_folds"],
        n_workers=merged["n_workers"],
    )
    return ServiceConfig(
        data_dir=Path(merged["data_dir"]),
        model_dir=Path(merged["model_dir"]),
        semester_start=semester_start,
        scheme=scheme,
        calendar=calendar,
        pipeline=pipeline,
        top_k_sentences=merged["top_k_sentences"],
        host=merged["host"],
        port=merged["port"],
        api_token=merged["api_token"],
    )


def with_seed(config: ServiceConfig, seed: int) -> ServiceConfig:
    return replace(config, pipeline=replace(config.pipeline, seed=seed))
