from __future__ import annotations

from datetime import datetime, timezone

import pytest

from safespeed import synth
from safespeed.core import CvPoint, IgnitionStatus, RwisObservation

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def cv_point(lat=42.9, lon=-78.8, speed_kmh=96.56, journey="J1", t=None, pid="P1"):
    return CvPoint(
        data_point_id=pid,
        journey_id=journey,
        captured_at=t or datetime(2022, 10, 19, 14, 7, tzinfo=timezone.utc),
        latitude=lat,
        longitude=lon,
        ignition_status=IgnitionStatus.MID_JOURNEY,
        speed_kmh=speed_kmh,
    )


def rwis_obs(t=None, grip=0.82, visibility_m=1500.0, rain_state="NONE", extras=None):
    return RwisObservation(
        observed_at=t or datetime(2022, 10, 19, 14, 0, tzinfo=timezone.utc),
        surface_temp_c=8.5,
        grip=grip,
        rain_state=rain_state,
        visibility_m=visibility_m,
        precip_1h=0.0,
        precip_3h=0.1,
        precip_6h=0.2,
        precip_12h=0.3,
        precip_24h=0.4,
        extras=extras or {},
    )


@pytest.fixture(scope="session")
def small_scenario(tmp_path_factory):
    """Half a day of synthetic data covering every regime."""
    out = tmp_path_factory.mktemp("scenario")
    cfg = synth.ScenarioConfig(
        seed=11,
        n_days=0.5,
        weather_script=((24, "clear"), (12, "rain"), (12, "snow")),
        rwis_gaps=(3, 40),
    )
    manifest = synth.generate(cfg, out)
    return cfg, out, manifest
