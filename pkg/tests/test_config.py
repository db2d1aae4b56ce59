from pathlib import Path

import pytest

from safespeed.config import ConfigError, load_config, parse_config


def test_defaults():
    cfg = parse_config({}, "/base")
    assert cfg.seed == 0 and cfg.v_law_mph == 55.0
    assert cfg.forest.params().n_estimators == 200 and cfg.forest.params().min_samples_leaf == 10
    assert cfg.baselines.rolling_iqr.windows == [6, 12, 24]
    assert cfg.input_path("cv") == Path("/base/data/cv.csv")
    assert cfg.model_path == Path("/base/out/model.qrf")
    assert cfg.schema_path is None


def test_paths_resolve_against_config_dir(tmp_path):
    path = tmp_path / "sub" / "run.yaml"
    path.parent.mkdir()
    path.write_text("paths: {cv: raw/cv.csv, schema: /abs/schema.yaml}\nout_dir: results\n")
    cfg = load_config(path)
    assert cfg.input_path("cv") == tmp_path / "sub" / "raw" / "cv.csv"
    assert cfg.schema_path == Path("/abs/schema.yaml")
    assert cfg.out_path == tmp_path / "sub" / "results"


@pytest.mark.parametrize(
    "doc,key",
    [
        ({"forest": {"min_samples_leaf": 0}}, "forest.min_samples_leaf"),
        ({"split": {"train_fraction": 1.5}}, "split.train_fraction"),
        ({"baselines": {"rolling_iqr": {"windows": [6, 0]}}}, "baselines.rolling_iqr.windows"),
        ({"evaluation": {"deltas": [-1]}}, "evaluation.deltas"),
        ({"unknown": 1}, "unknown"),
    ],
)
def test_errors_carry_key_path(doc, key):
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.key == key


def test_non_mapping_document(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(path)
