"""Configuration layering: defaults, YAML file, environment, CLI seed."""

from __future__ import annotations

import datetime as dt
from pathlib import Path

import pytest

from gradecast.config import ConfigError, load_config, with_seed


def test_defaults(tmp_path):
    config = load_config(env={})
    assert config.data_dir == Path("data")
    assert config.model_dir == Path("models")
    assert config.semester_start == dt.date(2021, 10, 1)
    assert config.pipeline.seed == 42
    assert config.pipeline.n_trees == 100
    assert config.pipeline.risk_threshold == 0.5
    assert config.top_k_sentences == 3
    assert config.port == 8000
    assert len(config.calendar.checkpoints) == 4
    assert config.calendar.checkpoint(4).cutoff == dt.date(2022, 2, 1)
    assert sum(i.max_points for i in config.scheme.items) == 100


def test_yaml_file_overrides_defaults(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        "seed: 7\n"
        "n_trees: 25\n"
        "semester_start: 2022-10-01\n"
        "api_token: sekret\n"
        "port: 9100\n"
    )
    config = load_config(path, env={})
    assert config.pipeline.seed == 7
    assert config.pipeline.n_trees == 25
    assert config.semester_start == dt.date(2022, 10, 1)
    assert config.api_token == "sekret"
    assert config.port == 9100
    # Derived calendar follows the new start.
    assert config.calendar.checkpoint(1).cutoff == dt.date(2022, 11, 1)


def test_env_overrides_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("seed: 7\nport: 9100\n")
    env = {"GRADECAST_SEED": "99", "GRADECAST_HOST": "0.0.0.0"}
    config = load_config(path, env=env)
    assert config.pipeline.seed == 99
    assert config.port == 9100  # file survives where env is silent
    assert config.host == "0.0.0.0"


def test_seed_override_beats_everything(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("seed: 7\n")
    config = load_config(path, env={"GRADECAST_SEED": "99"}, seed_override=123)
    assert config.pipeline.seed == 123


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("sead: 7\n")
    with pytest.raises(ConfigError) as err:
        load_config(path, env={})
    assert "sead" in str(err.value)


def test_bad_types_rejected(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("n_trees: lots\n")
    with pytest.raises(ConfigError):
        load_config(path, env={})
    path.write_text("semester_start: not-a-date\n")
    with pytest.raises(ConfigError):
        load_config(path, env={})


def test_explicit_cutoffs(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        "checkpoint_cutoffs:\n"
        "  - 2021-11-01\n"
        "  - 2021-12-15\n"
        "scheme:\n"
        "  - {id: hw, kind: assignment, max_points: 50, release_checkpoint: 1}\n"
        "  - {id: exam, kind: oral_exam, max_points: 50}\n"
    )
    config = load_config(path, env={})
    cps = config.calendar.checkpoints
    assert len(cps) == 2
    assert cps[0].label == "October"  # cutoff on the 1st names the prior month
    assert cps[1].label == "December"  # mid-month cutoff names its own month
    assert [i.id for i in config.scheme.items] == ["hw", "exam"]


def test_inline_scheme_unknown_key_rejected(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        "scheme:\n"
        "  - {id: hw, kind: assignment, max_points: 100, weight: 2}\n"
    )
    with pytest.raises(ConfigError) as err:
        load_config(path, env={})
    assert "weight" in str(err.value)


def test_scheme_must_be_reference_or_list(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("scheme: fancy\n")
    with pytest.raises(ConfigError):
        load_config(path, env={})


def test_calendar_must_cover_scheme_releases(tmp_path):
    # One cutoff cannot host a reference scheme releasing at checkpoint 4.
    path = tmp_path / "config.yaml"
    path.write_text("checkpoint_cutoffs:\n  - 2021-11-01\n")
    with pytest.raises(ConfigError):
        load_config(path, env={})


def test_empty_file_is_defaults(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("")
    config = load_config(path, env={})
    assert config.pipeline.seed == 42


def test_with_seed():
    config = load_config(env={})
    reseeded = with_seed(config, 5)
    assert reseeded.pipeline.seed == 5
    assert reseeded.pipeline.n_trees == config.pipeline.n_trees
