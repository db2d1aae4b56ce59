import csv
import json
from statistics import NormalDist

import numpy as np
import pytest

from safespeed import geo, pipeline, synth
from safespeed.core import ValidationError


def test_clear_regime_true_quartiles():
    cfg = synth.ScenarioConfig()
    q25, q50, q75 = synth.true_quartiles(cfg, "clear")
    assert q50 == 62.0
    assert q25 == pytest.approx(62 - 4 * 0.67449, abs=1e-4)
    assert q75 == pytest.approx(62 + 4 * 0.67449, abs=1e-4)


def test_truth_file_matches_normal_quantiles(small_scenario):
    cfg, out, _ = small_scenario
    truth = synth.read_truth(out / "truth.csv")
    assert len(truth) == cfg.n_windows == 72
    for w, (regime, *q) in truth.items():
        spec = cfg.regimes[regime]
        dist = NormalDist(cfg.base_speed_mph - spec.speed_shift_mph, spec.speed_sigma_mph)
        assert q == pytest.approx([dist.inv_cdf(p) for p in (0.25, 0.5, 0.75)], abs=1e-12)
        assert regime == cfg.regime_at(w - cfg.first_window)
    assert {r for r, *_ in truth.values()} == {"clear", "rain", "snow"}


def test_same_config_gives_identical_files(tmp_path):
    cfg = synth.ScenarioConfig(seed=4, n_days=0.1)
    synth.generate(cfg, tmp_path / "a")
    synth.generate(cfg, tmp_path / "b")
    for name in ("cv.csv", "rwis.csv", "network.geojson", "truth.csv", "labels.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    synth.generate(synth.ScenarioConfig(seed=5, n_days=0.1), tmp_path / "c")
    assert (tmp_path / "a" / "cv.csv").read_bytes() != (tmp_path / "c" / "cv.csv").read_bytes()


def test_only_road_points_match(tmp_path):
    cfg = synth.ScenarioConfig(seed=2, n_days=0.2, decoy_fraction=0.1)
    manifest = synth.generate(cfg, tmp_path)
    assert 900 <= manifest["n_cv_points"] <= 1500
    labels = synth.read_labels(tmp_path / "labels.csv")
    assert manifest["point_labels"]["decoy"] == pytest.approx(0.1 * manifest["n_cv_points"], abs=2)
    points, dropped = pipeline.parse_cv(tmp_path / "cv.csv")
    assert not dropped
    segs = [s for s in geo.load_network(tmp_path / "network.geojson") if not geo.is_excluded(s)]
    matched = geo.match_points(points, geo.NetworkIndex(segs))
    for p, m in zip(points, matched):
        assert (m is not None) == (labels[p.data_point_id] == "road")


def test_network_contents(small_scenario):
    cfg, out, _ = small_scenario
    segs = geo.load_network(out / "network.geojson")
    kinds = {s.osm_id[:4] for s in segs}
    assert kinds == {"main", "ramp", "fast"}
    assert sum(not geo.is_excluded(s) for s in segs) == cfg.n_segments
    for s in segs:
        lat, lon = s.polyline[0]
        north, south, east, west = geo.STUDY_BOX
        assert south <= lat <= north and west <= lon <= east


def test_rwis_file_honours_gaps_and_regimes(small_scenario):
    cfg, out, manifest = small_scenario
    obs, counts = pipeline.parse_rwis(out / "rwis.csv")
    assert manifest["n_rwis_records"] == len(obs) == cfg.n_windows - 2
    assert counts["unknown_rain_state"] == 0
    offsets = {pipeline.window_index(o.observed_at) - cfg.first_window for o in obs}
    assert 3 not in offsets and 40 not in offsets
    for o in obs:
        regime = cfg.regimes[cfg.regime_at(pipeline.window_index(o.observed_at) - cfg.first_window)]
        assert regime.grip[0] <= o.grip <= regime.grip[1]
        assert set(o.extras) == set(synth.EXTRA_COLUMNS)


def test_cv_timestamps_carry_local_offset(small_scenario):
    _, out, _ = small_scenario
    with open(out / "cv.csv", newline="") as fh:
        row = next(csv.DictReader(fh))
    assert row["capturedTimestamp"].endswith("-04:00")


def test_vehicle_speeds_follow_regime_distribution(tmp_path):
    cfg = synth.ScenarioConfig(seed=8, n_days=1.0, weather_script=((1, "clear"),))
    synth.generate(cfg, tmp_path)
    points, _ = pipeline.parse_cv(tmp_path / "cv.csv")
    labels = synth.read_labels(tmp_path / "labels.csv")
    road = [p for p in points if labels[p.data_point_id] == "road"]
    means = np.array([s.mean_speed_mph for s in pipeline.aggregate_vehicle_windows(road)])
    assert means.mean() == pytest.approx(62.0, abs=0.3)
    assert means.std() == pytest.approx(4.0, abs=0.3)


def test_config_validation_and_dict_round_trip():
    with pytest.raises(ValidationError):
        synth.ScenarioConfig(weather_script=((10, "hail"),))
    with pytest.raises(ValidationError):
        synth.ScenarioConfig(decoy_fraction=0.9, ramp_fraction=0.2)
    cfg = synth.ScenarioConfig(seed=3, rwis_gaps=(1, 2))
    doc = json.loads(json.dumps(cfg.to_dict()))
    assert synth.ScenarioConfig.from_dict(doc) == cfg
    with pytest.raises(ValidationError):
        synth.ScenarioConfig.from_dict({"n_dayz": 2})


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        synth.generate(synth.ScenarioConfig(n_days=0.01), blocker / "sub")
