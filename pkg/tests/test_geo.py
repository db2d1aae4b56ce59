import json
import math

import numpy as np
import pytest

from safespeed import geo
from safespeed.core import RoadSegment, ValidationError
from safespeed.geo import ProjectedPoint
from conftest import cv_point
from oracles import PolygonMatcher

ORIGIN = (42.9, -78.8)
FT_PER_DEG_LAT = 110540.0 * 3.28084


def seg(osm_id, lanes, polyline, highway="motorway", maxspeed=55.0):
    return RoadSegment(osm_id, lanes, highway, maxspeed, tuple(polyline))


def east_west(osm_id, lanes, offset_ft=0.0, half_len_deg=0.01):
    lat = ORIGIN[0] + offset_ft / FT_PER_DEG_LAT
    return seg(osm_id, lanes, [(lat, ORIGIN[1] - half_len_deg), (lat, ORIGIN[1] + half_len_deg)])


def north_of(ft):
    return ORIGIN[0] + ft / FT_PER_DEG_LAT


@pytest.mark.parametrize("lanes,radius", [(2, 12.0), (1, 6.0), (4, 24.0)])
def test_buffer_radius(lanes, radius):
    assert geo.buffer_radius_ft(lanes) == radius


def test_buffer_radius_rejects_zero_lanes():
    with pytest.raises(ValidationError):
        geo.buffer_radius_ft(0)


def test_projection_examples():
    p = geo.project(ORIGIN, ORIGIN)
    assert (p.x_ft, p.y_ft) == (0.0, 0.0)
    north = geo.project((ORIGIN[0] + 0.001, ORIGIN[1]), ORIGIN)
    assert north.y_ft == pytest.approx(362.66, abs=0.01)
    assert north.x_ft == 0.0
    east = geo.project((42.9, -78.8 + 0.001), (42.9, -78.8))
    assert east.x_ft == pytest.approx(267.5, abs=0.05)


def test_unproject_inverts_project():
    for lat, lon in [(42.85, -78.9), (42.97, -78.7), ORIGIN]:
        back = geo.unproject(geo.project((lat, lon), ORIGIN), ORIGIN)
        assert back == pytest.approx((lat, lon), abs=1e-12)


def _haversine_ft(a, b):
    r = 6371008.8 * 3.28084
    la1, lo1, la2, lo2 = map(math.radians, (*a, *b))
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2
    return 2 * r * math.asin(math.sqrt(h))


def test_projection_distance_close_to_great_circle_in_study_area():
    rng = np.random.default_rng(3)
    north, south, east, west = geo.STUDY_BOX
    for _ in range(200):
        a = (rng.uniform(south, north), rng.uniform(west, east))
        b = (a[0] + rng.uniform(-0.01, 0.01), a[1] + rng.uniform(-0.01, 0.01))
        pa, pb = geo.project(a, ORIGIN), geo.project(b, ORIGIN)
        planar = math.hypot(pa.x_ft - pb.x_ft, pa.y_ft - pb.y_ft)
        # The fixed 110540 m per degree of latitude sits ~0.6% under the sphere.
        assert planar == pytest.approx(_haversine_ft(a, b), rel=1e-2)


def test_point_to_polyline_examples():
    line = [ProjectedPoint(-10, 0), ProjectedPoint(10, 0)]
    assert geo.point_to_polyline_ft(ProjectedPoint(10, 0), line) == 0
    assert geo.point_to_polyline_ft(ProjectedPoint(0, 5), line) == pytest.approx(5.0)
    assert geo.point_to_polyline_ft(ProjectedPoint(15, 5), line) == pytest.approx(math.sqrt(50), abs=1e-3)
    with pytest.raises(ValidationError):
        geo.point_to_polyline_ft(ProjectedPoint(0, 0), line[:1])


def test_point_to_polyline_moving_away_never_decreases_distance():
    line = [ProjectedPoint(-10, 0), ProjectedPoint(0, 4), ProjectedPoint(10, 0)]
    ds = [geo.point_to_polyline_ft(ProjectedPoint(0, 4 + k), line) for k in range(50)]
    assert all(b >= a for a, b in zip(ds, ds[1:]))


def test_match_point_examples():
    two = east_west("a2", 2)
    assert geo.match_point(cv_point(ORIGIN[0], ORIGIN[1]), [two], ORIGIN) == "a2"
    four = east_west("b4", 4)
    assert geo.match_point(cv_point(north_of(30), ORIGIN[1]), [four], ORIGIN) is None


def test_match_prefers_nearest_qualifying_segment():
    # Point 10 ft from the 2-lane centerline and 20 ft from the 4-lane one.
    two = east_west("z2", 2, offset_ft=0.0)
    four = east_west("a4", 4, offset_ft=30.0)
    p = cv_point(north_of(10.0), ORIGIN[1])
    assert geo.match_point(p, [four, two], ORIGIN) == "z2"
    oracle = PolygonMatcher([two, four], ORIGIN)
    assert oracle.match(p.latitude, p.longitude) == "z2"


def test_equidistant_tie_goes_to_lexicographically_smallest_id():
    a = east_west("seg-b", 2, offset_ft=-5.0)
    b = east_west("seg-a", 2, offset_ft=5.0)
    assert geo.match_point(cv_point(ORIGIN[0], ORIGIN[1]), [a, b], ORIGIN) == "seg-a"


def test_match_points_agrees_with_polygon_oracle():
    rng = np.random.default_rng(5)
    segs = [
        east_west("m1", 2),
        east_west("m2", 4, offset_ft=35.0),
        seg("m3", 3, [(42.895, -78.805), (42.9, -78.8), (42.905, -78.801)]),
    ]
    index = geo.NetworkIndex(segs, ORIGIN)
    oracle = PolygonMatcher(segs, ORIGIN)
    lat = ORIGIN[0] + rng.uniform(-60, 90, 400) / FT_PER_DEG_LAT
    lon = ORIGIN[1] + rng.uniform(-0.006, 0.004, 400)
    got = index.match(lat, lon)
    want = [oracle.match(a, b) for a, b in zip(lat, lon)]
    assert got == want
    assert any(g is None for g in got) and any(g is not None for g in got)


@pytest.mark.parametrize(
    "highway,maxspeed,excluded",
    [("motorway", 55, False), ("motorway_link", 55, True), ("motorway", 65, True), ("trunk_link", 55, True)],
)
def test_is_excluded(highway, maxspeed, excluded):
    s = seg("x", 2, [(42.9, -78.8), (42.91, -78.8)], highway, maxspeed)
    assert geo.is_excluded(s) is excluded


def test_network_index_requires_segments():
    with pytest.raises(ValidationError):
        geo.NetworkIndex([])
    assert geo.match_point(cv_point(), [], ORIGIN) is None


def _write_geojson(path, features):
    path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    return path


def test_load_network_reads_osm_style_tags(tmp_path):
    path = _write_geojson(
        tmp_path / "net.geojson",
        [
            {
                "type": "Feature",
                "properties": {"osmid": 123, "lanes": "3", "highway": "motorway", "maxspeed": "55 mph", "name": "I-290"},
                "geometry": {"type": "LineString", "coordinates": [[-78.8, 42.9], [-78.79, 42.91]]},
            },
            {
                "type": "Feature",
                "properties": {"osmid": 9, "lanes": "2", "highway": "motorway_link", "maxspeed": "88 km/h"},
                "geometry": {
                    "type": "MultiLineString",
                    "coordinates": [[[-78.8, 42.9], [-78.8, 42.95]], [[-78.7, 42.9], [-78.7, 42.95]]],
                },
            },
        ],
    )
    segs = geo.load_network(path)
    by_id = {s.osm_id: s for s in segs}
    main = by_id["123"]
    assert main.lanes == 3 and main.maxspeed_mph == 55.0 and main.name == "I-290"
    assert main.polyline == ((42.9, -78.8), (42.91, -78.79))
    assert sorted(by_id) == ["123", "9#0", "9#1"]
    assert by_id["9#0"].maxspeed_mph == pytest.approx(88 * 0.621371)


def test_network_geojson_round_trip(tmp_path):
    segs = [east_west("a", 2), seg("b", 3, [(42.9, -78.8), (42.91, -78.81), (42.92, -78.8)], "motorway_link")]
    path = tmp_path / "net.geojson"
    path.write_text(json.dumps(geo.network_to_geojson(segs)))
    assert geo.load_network(path) == segs
