"""Operator command line: synthesize data, validate it, train, evaluate,
predict, explain, and serve.

Global flags: ``--config PATH`` (YAML, see config module), ``--seed N``
(overrides the config seed everywhere), ``--dump-features DIR`` (any
command that engineers features also writes one CSV per checkpoint there).
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from .config import ServiceConfig, load_config
from .core import StudentId
from .explain import textual_explanation
from .features import extract_features
from .ingest import Cohort, export_cohort, load_cohort
from .pipeline import (
    PipelineError,
    Prediction,
    Verdict,
    evaluate_all,
    load_models,
    predict_student,
    save_models,
    train_all,
)
from .synth import SynthParams, generate_cohort
from .trees import count_nodes


@dataclass
class CliState:
    config: ServiceConfig
    dump_features: Path | None


pass_state = click.make_pass_decorator(CliState)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@click.option("--dump-features", type=click.Path(file_okay=False), default=None, help="Directory for engineered-feature CSV dumps.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, seed: int | None, dump_features: str | None) -> None:
    """Early-warning grade prediction for VLE courses."""
    config = load_config(config_path, seed_override=seed)
    ctx.obj = CliState(
        config=config,
        dump_features=Path(dump_features) if dump_features else None,
    )


def _dump_feature_csvs(state: CliState, cohort: Cohort, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for cp in state.config.calendar.checkpoints:
        matrix = extract_features(cohort, cp, state.config.scheme)
        path = directory / f"features_checkpoint_{cp.index}.csv"
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["student_id", *matrix.feature_names])
            for student in sorted(matrix.rows, key=lambda s: s.value):
                writer.writerow([student.value, *matrix.rows[student]])
        click.echo(f"wrote {path}")


def _load_cohort(state: CliState, data_dir: str | None) -> Cohort:
    directory = Path(data_dir) if data_dir else state.config.data_dir
    cohort = load_cohort(directory, state.config.scheme)
    if state.dump_features is not None:
        _dump_feature_csvs(state, cohort, state.dump_features)
    return cohort


def _cohort_summary(cohort: Cohort) -> str:
    lines = [
        f"year:           {cohort.year}",
        f"semester:       {cohort.window.start} .. {cohort.window.end} (exclusive)",
        f"students:       {len(cohort.roster)}",
        f"events:         {len(cohort.events)}",
        f"graded rows:    {sum(len(g) for g in cohort.grades.values())}",
        f"outcomes:       {len(cohort.outcomes)}",
    ]
    if cohort.outcomes:
        grades = [o.final_grade for o in cohort.outcomes.values()]
        fails = sum(1 for o in cohort.outcomes.values() if not o.passed)
        lines.append(f"mean grade:     {sum(grades) / len(grades):.2f}")
        lines.append(f"failed:         {fails}")
    lines.append(f"history years:  {len(cohort.history)}")
    lines.append(f"survey answers: {cohort.survey.respondents}")
    return "\n".join(lines)


@main.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Output directory for the CSV files.")
@click.option("--n", "n_students", type=int, default=106, show_default=True)
@click.option("--signal", type=float, default=0.7, show_default=True, help="Click-to-grade coupling in [0,1].")
@click.option("--noise", type=float, default=1.0, show_default=True, help="Observation noise scale; 0 is fully deterministic.")
@click.option("--target-mean", type=float, default=7.8, show_default=True)
@click.option("--target-fails", type=int, default=None, help="Expected fail count  [default: scaled to --n, 18 at n=106].")
@click.option("--history-years", type=int, default=3, show_default=True)
@pass_state
def synth(
    state: CliState,
    out_dir: str,
    n_students: int,
    signal: float,
    noise: float,
    target_mean: float,
    target_fails: int | None,
    history_years: int,
) -> None:
    """Generate a calibrated synthetic course year."""
    if target_fails is None:
        target_fails = round(n_students * 18 / 106)
    params = SynthParams(
        n_students=n_students,
        seed=state.config.pipeline.seed,
        engagement_signal=signal,
        noise_scale=noise,
        target_mean_grade=target_mean,
        target_fail_count=target_fails,
        history_years=history_years,
    )
    cohort = generate_cohort(params, state.config.scheme, state.config.calendar)
    files = sorted(str(p) for p in export_cohort(cohort, out_dir))
    click.echo(_cohort_summary(cohort))
    click.echo("wrote:\n  " + "\n  ".join(files))
    if state.dump_features is not None:
        _dump_feature_csvs(state, cohort, state.dump_features)


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None, help="Cohort CSV directory (default: config data_dir).")
@pass_state
def ingest(state: CliState, data_dir: str | None) -> None:
    """Validate and summarize a cohort data directory."""
    cohort = _load_cohort(state, data_dir)
    click.echo(_cohort_summary(cohort))


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--models", "model_dir", type=click.Path(file_okay=False), default=None, help="Output directory (default: config model_dir).")
@pass_state
def train(state: CliState, data_dir: str | None, model_dir: str | None) -> None:
    """Train all checkpoint models and persist them."""
    cohort = _load_cohort(state, data_dir)
    out = Path(model_dir) if model_dir else state.config.model_dir
    models = train_all(cohort, state.config.calendar, state.config.pipeline)
    paths = save_models(models, out)
    for index in sorted(models):
        model = models[index]
        flags = []
        if model.gate_is_baseline:
            flags.append("gate=baseline")
        if model.regressor_is_baseline:
            flags.append("regressor=baseline")
        note = f"  [{', '.join(flags)}]" if flags else ""
        click.echo(
            f"checkpoint {index} ({model.checkpoint.label}): "
            f"{len(model.schema)} features, forest nodes {count_nodes(model.gate)}, "
            f"regressor nodes {count_nodes(model.regressor)}{note}"
        )
    click.echo("wrote:\n  " + "\n  ".join(str(p) for p in paths))


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--k", type=int, default=None, help="Fold count (default: config cv_folds).")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default="eval_report.json", show_default=True, help="Machine-readable report path.")
@pass_state
def evaluate(state: CliState, data_dir: str | None, k: int | None, json_path: str) -> None:
    """Cross-validate every checkpoint and report metrics with baselines."""
    from dataclasses import replace

    cohort = _load_cohort(state, data_dir)
    params = state.config.pipeline
    if k is not None:
        params = replace(params, cv_folds=k)
    report = evaluate_all(cohort, state.config.calendar, params)
    click.echo(report.render_text())
    Path(json_path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(f"wrote {json_path}")


def _predict_one(state: CliState, data_dir: str | None, model_dir: str | None, student_id: str, checkpoint: int) -> Prediction:
    cohort = _load_cohort(state, data_dir)
    directory = Path(model_dir) if model_dir else state.config.model_dir
    try:
        models = load_models(directory)
    except PipelineError as exc:
        raise click.ClickException(f"{exc} (run `gradecast train` first)") from exc
    if checkpoint not in models:
        raise click.ClickException(f"no trained model for checkpoint {checkpoint}")
    model = models[checkpoint]
    matrix = extract_features(cohort, model.checkpoint, state.config.scheme)
    student = StudentId(student_id)
    if student not in cohort.roster:
        raise click.ClickException(f"unknown student {student_id!r}")
    return predict_student(model, matrix.vector(student), student=student)


@main.command()
@click.option("--student", "student_id", required=True)
@click.option("--checkpoint", type=int, required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--models", "model_dir", type=click.Path(exists=True, file_okay=False), default=None)
@pass_state
def predict(state: CliState, student_id: str, checkpoint: int, data_dir: str | None, model_dir: str | None) -> None:
    """Predict one student's outcome at one checkpoint."""
    prediction = _predict_one(state, data_dir, model_dir, student_id, checkpoint)
    click.echo(
        json.dumps(
            {
                "student_id": prediction.student.value,
                "checkpoint": prediction.checkpoint_index,
                "verdict": prediction.verdict.value,
                "risk_probability": prediction.risk_probability,
                "predicted_points": prediction.predicted_points,
                "predicted_grade": prediction.predicted_grade,
            },
            indent=2,
        )
    )


@main.command()
@click.option("--student", "student_id", required=True)
@click.option("--checkpoint", type=int, required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--models", "model_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--k", type=int, default=None, help="Sentence count (default: config top_k_sentences).")
@pass_state
def explain(state: CliState, student_id: str, checkpoint: int, data_dir: str | None, model_dir: str | None, k: int | None) -> None:
    """Explain one student's prediction in plain language."""
    prediction = _predict_one(state, data_dir, model_dir, student_id, checkpoint)
    top_k = k if k is not None else state.config.top_k_sentences
    explanation = textual_explanation(prediction.attribution, prediction.attribution_kind, k=top_k)
    verdict = "at risk of failing" if prediction.verdict is Verdict.AT_RISK else f"on track (grade {prediction.predicted_grade})"
    click.echo(f"{student_id} at checkpoint {checkpoint}: {verdict}")
    for text in explanation.sentences:
        click.echo(f"  - {text}")
    attribution = prediction.attribution
    click.echo(f"base value {attribution.base_value:.4f}, prediction {attribution.prediction:.4f}")
    width = max(len(n) for n in attribution.phi)
    for name, value in attribution.top_features(len(attribution.phi)):
        if value == 0.0:
            continue
        click.echo(f"  {name:<{width}}  {value:+.4f}")


@main.command()
@pass_state
def serve(state: CliState) -> None:
    """Run the HTTP API (trains models first if none are stored)."""
    from .service import serve as run_service

    run_service(state.config)


if __name__ == "__main__":
    sys.exit(main())
