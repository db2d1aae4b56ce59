from datetime import datetime, timedelta, timezone

import pytest

from safespeed.core import (
    PhysicsParams,
    RoadSegment,
    SpeedInterval,
    ValidationError,
    WindowSample,
    fps_to_mph,
    kmh_to_mph,
    m_to_ft,
    mph_to_fps,
    mph_to_kmh,
    utc,
)
from conftest import cv_point, rwis_obs


def test_kmh_to_mph_examples():
    assert kmh_to_mph(0) == 0
    assert kmh_to_mph(100) == pytest.approx(62.1371, abs=1e-9)
    assert kmh_to_mph(88.5139) == pytest.approx(55.0, abs=1e-3)


def test_m_to_ft_examples():
    assert m_to_ft(0) == 0
    assert m_to_ft(2000) == pytest.approx(6561.68, abs=0.01)
    assert m_to_ft(150.876) == pytest.approx(495.0, abs=0.01)


@pytest.mark.parametrize("fn", [kmh_to_mph, mph_to_kmh, m_to_ft, mph_to_fps, fps_to_mph])
def test_conversions_reject_negative(fn):
    with pytest.raises(ValidationError):
        fn(-1.0)


def test_round_trips():
    for v in (0.0, 12.5, 55.0, 140.0):
        assert mph_to_kmh(kmh_to_mph(v)) == pytest.approx(v, rel=1e-12)
        assert fps_to_mph(mph_to_fps(v)) == pytest.approx(v, rel=1e-12)


def test_utc_normalizes_offsets_and_treats_naive_as_utc():
    local = datetime(2022, 10, 19, 10, 7, tzinfo=timezone(timedelta(hours=-4)))
    assert utc(local) == datetime(2022, 10, 19, 14, 7, tzinfo=timezone.utc)
    assert utc(local).utcoffset() == timedelta(0)
    assert utc(datetime(2022, 10, 19)) == datetime(2022, 10, 19, tzinfo=timezone.utc)


def test_cv_point_validation():
    p = cv_point(speed_kmh=100.0)
    assert p.speed_mph == pytest.approx(62.1371)
    with pytest.raises(ValidationError):
        cv_point(speed_kmh=-5)
    with pytest.raises(ValidationError):
        cv_point(lat=91)


def test_rwis_validation_ranges():
    assert rwis_obs(grip=0.0, visibility_m=0.0).grip == 0.0
    with pytest.raises(ValidationError):
        rwis_obs(grip=1.2)
    with pytest.raises(ValidationError):
        rwis_obs(visibility_m=2000.5)


def test_road_segment_needs_two_vertices_and_a_lane():
    with pytest.raises(ValidationError):
        RoadSegment("a", 2, "motorway", 55, ((42.9, -78.8),))
    with pytest.raises(ValidationError):
        RoadSegment("a", 0, "motorway", 55, ((42.9, -78.8), (42.91, -78.8)))


def test_window_sample_needs_points():
    with pytest.raises(ValidationError):
        WindowSample(1, "J", 50.0, 0)


def test_speed_interval_invariants():
    iv = SpeedInterval(48, 52, 48, 58, 52, 55)
    assert iv.width == 4
    with pytest.raises(ValidationError):
        SpeedInterval(53, 52, 48, 58, 60, 55)
    with pytest.raises(ValidationError):
        SpeedInterval(48, 56, 48, 58, 60, 55)


def test_physics_params_defaults():
    p = PhysicsParams()
    assert (p.t_reaction_s, p.k_gap_s, p.ssd_cap_ft) == (2.5, 0.0, 495.0)
    with pytest.raises(ValidationError):
        PhysicsParams(mu=-0.1)
