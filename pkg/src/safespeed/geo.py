"""Map GPS fixes onto buffered freeway centerlines.

Distances are computed in a local equirectangular frame (feet). Over the
study area (< 20 km across) the distortion is far below one lane width.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import KMH_TO_MPH, M_TO_FT, CvPoint, RoadSegment, ValidationError

LANE_WIDTH_FT = 12.0
M_PER_DEG_LAT = 110540.0
M_PER_DEG_LON = 111320.0
TARGET_MAXSPEED_MPH = 55.0
RAMP_CLASSES = frozenset(
    {"motorway_link", "trunk_link", "primary_link", "secondary_link", "tertiary_link"}
)

# (N, S, E, W)
STUDY_BOX = (42.971123, 42.822918, -78.692246, -78.922892)


@dataclass(frozen=True)
class ProjectedPoint:
    x_ft: float
    y_ft: float


def buffer_radius_ft(lanes: int) -> float:
    """Half the paved width: ``lanes`` lanes of 12 ft each."""
    if lanes < 1:
        raise ValidationError(f"lanes must be >= 1, got {lanes}")
    return lanes * LANE_WIDTH_FT / 2.0


def project(point: tuple[float, float], origin: tuple[float, float]) -> ProjectedPoint:
    lat, lon = point
    lat0, lon0 = origin
    y_m = (lat - lat0) * M_PER_DEG_LAT
    x_m = (lon - lon0) * M_PER_DEG_LON * math.cos(math.radians(lat0))
    return ProjectedPoint(x_m * M_TO_FT, y_m * M_TO_FT)


def unproject(p: ProjectedPoint, origin: tuple[float, float]) -> tuple[float, float]:
    lat0, lon0 = origin
    lat = lat0 + p.y_ft / M_TO_FT / M_PER_DEG_LAT
    lon = lon0 + p.x_ft / M_TO_FT / (M_PER_DEG_LON * math.cos(math.radians(lat0)))
    return lat, lon


def network_origin(segments: Iterable[RoadSegment]) -> tuple[float, float]:
    """Center of the network's bounding box; the shared projection origin."""
    lats, lons = [], []
    for seg in segments:
        for lat, lon in seg.polyline:
            lats.append(lat)
            lons.append(lon)
    if not lats:
        raise ValidationError("empty road network")
    return ((min(lats) + max(lats)) / 2.0, (min(lons) + max(lons)) / 2.0)


def _segment_distances(px, py, ax, ay, bx, by):
    """Vectorized clamped point-to-segment distance (broadcasts)."""
    dx = bx - ax
    dy = by - ay
    len2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = ((px - ax) * dx + (py - ay) * dy) / len2
    t = np.where(len2 > 0, np.clip(t, 0.0, 1.0), 0.0)
    cx = ax + t * dx
    cy = ay + t * dy
    return np.hypot(px - cx, py - cy)


def point_to_polyline_ft(p: ProjectedPoint, polyline: Sequence[ProjectedPoint]) -> float:
    if len(polyline) < 2:
        raise ValidationError("polyline needs >= 2 vertices")
    xs = np.array([v.x_ft for v in polyline])
    ys = np.array([v.y_ft for v in polyline])
    d = _segment_distances(p.x_ft, p.y_ft, xs[:-1], ys[:-1], xs[1:], ys[1:])
    return float(d.min())


def is_excluded(seg: RoadSegment) -> bool:
    """Ramps and anything not posted at 55 mph are out of scope."""
    return seg.highway_class in RAMP_CLASSES or seg.maxspeed_mph != TARGET_MAXSPEED_MPH


class NetworkIndex:
    """Projected, pre-filtered segment set for repeated matching."""

    def __init__(self, segments: Sequence[RoadSegment], origin: tuple[float, float] | None = None):
        if not segments:
            raise ValidationError("no road segments to match against")
        self.origin = origin if origin is not None else network_origin(segments)
        # Sorting by id makes "first minimum" the lexicographic tie-break.
        self.segments = sorted(segments, key=lambda s: s.osm_id)
        self.ids = [s.osm_id for s in self.segments]
        self.radii = np.array([buffer_radius_ft(s.lanes) for s in self.segments])
        ax, ay, bx, by, owner = [], [], [], [], []
        for k, seg in enumerate(self.segments):
            pts = [project(v, self.origin) for v in seg.polyline]
            for a, b in zip(pts[:-1], pts[1:]):
                ax.append(a.x_ft)
                ay.append(a.y_ft)
                bx.append(b.x_ft)
                by.append(b.y_ft)
                owner.append(k)
        self._ax, self._ay = np.array(ax), np.array(ay)
        self._bx, self._by = np.array(bx), np.array(by)
        owner = np.array(owner)
        self._starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])

    def distances(self, lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
        """(n_points, n_segments) distance matrix in feet."""
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        lat0, lon0 = self.origin
        py = (lat - lat0) * M_PER_DEG_LAT * M_TO_FT
        px = (lon - lon0) * M_PER_DEG_LON * math.cos(math.radians(lat0)) * M_TO_FT
        out = np.empty((lat.size, len(self.segments)))
        chunk = max(1, 2_000_000 // self._ax.size)
        for start in range(0, lat.size, chunk):
            sl = slice(start, start + chunk)
            d = _segment_distances(
                px[sl, None], py[sl, None], self._ax, self._ay, self._bx, self._by
            )
            out[sl] = np.minimum.reduceat(d, self._starts, axis=1)
        return out

    def match(self, lat, lon) -> list[str | None]:
        """Nearest segment whose buffer contains each point, else None."""
        d = self.distances(lat, lon)
        inside = d <= self.radii[None, :]
        masked = np.where(inside, d, np.inf)
        best = masked.argmin(axis=1)
        ok = np.isfinite(masked[np.arange(d.shape[0]), best])
        return [self.ids[b] if hit else None for b, hit in zip(best, ok)]


def match_point(p: CvPoint, segments: Sequence[RoadSegment], origin=None) -> str | None:
    if not segments:
        return None
    return NetworkIndex(segments, origin).match([p.latitude], [p.longitude])[0]


def match_points(points: Sequence[CvPoint], index: NetworkIndex) -> list[str | None]:
    if not points:
        return []
    lat = np.array([p.latitude for p in points])
    lon = np.array([p.longitude for p in points])
    return index.match(lat, lon)


def _as_mph(value) -> float:
    if value is None:
        return float("nan")
    if isinstance(value, list):
        value = value[0]
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().lower()
    to_mph = 1.0
    for unit, factor in (("mph", 1.0), ("km/h", KMH_TO_MPH), ("kmh", KMH_TO_MPH)):
        if text.endswith(unit):
            text, to_mph = text[: -len(unit)].strip(), factor
            break
    try:
        return float(text) * to_mph
    except ValueError:
        return float("nan")


def _as_lanes(value) -> int:
    if isinstance(value, list):
        value = max(_as_lanes(v) for v in value)
    try:
        return max(1, int(float(value)))
    except (TypeError, ValueError):
        return 1


def load_network(path: str | Path) -> list[RoadSegment]:
    """Read a GeoJSON FeatureCollection of LineString road segments.

    Properties follow the OSM export: ``osmid``, ``lanes``, ``highway``,
    ``maxspeed`` (bare numbers are mph; ``"55 mph"`` and ``"88 km/h"`` accepted) and ``name``. Coordinates are
    lon/lat pairs. Missing ``lanes`` defaults to 1.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    segments = []
    for feat in doc.get("features", []):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") == "LineString":
            lines = [geom["coordinates"]]
        elif geom.get("type") == "MultiLineString":
            lines = geom["coordinates"]
        else:
            continue
        highway = props.get("highway", "")
        if isinstance(highway, list):
            highway = highway[0]
        for k, coords in enumerate(lines):
            osm_id = str(props.get("osmid"))
            if len(lines) > 1:
                osm_id = f"{osm_id}#{k}"
            segments.append(
                RoadSegment(
                    osm_id=osm_id,
                    lanes=_as_lanes(props.get("lanes", 1)),
                    highway_class=str(highway),
                    maxspeed_mph=_as_mph(props.get("maxspeed")),
                    polyline=tuple((float(lat), float(lon)) for lon, lat in coords),
                    name=str(props.get("name") or ""),
                )
            )
    return segments


def network_to_geojson(segments: Iterable[RoadSegment]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {
                    "osmid": s.osm_id,
                    "lanes": s.lanes,
                    "highway": s.highway_class,
                    "maxspeed": s.maxspeed_mph,
                    "name": s.name,
                },
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[lon, lat] for lat, lon in s.polyline],
                },
            }
            for s in segments
        ],
    }
