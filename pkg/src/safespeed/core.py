"""Shared value types and the handful of unit conversions the pipeline needs.

Internal units are mph for speed, feet for distance and seconds for time.
Speeds arrive in km/h and RWIS visibility in meters; both are converted once,
at ingestion or at the physics boundary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone
from types import MappingProxyType
from typing import Mapping

KMH_TO_MPH = 0.621371
M_TO_FT = 3.28084
MPH_TO_FPS = 1.466667
G_FT_S2 = 32.174
DEFAULT_SSD_CAP_FT = 495.0


class ValidationError(ValueError):
    """Input violates a documented precondition."""


def _non_negative(value: float, what: str) -> float:
    if not value >= 0:
        raise ValidationError(f"{what} must be >= 0, got {value!r}")
    return value


def kmh_to_mph(v: float) -> float:
    return _non_negative(v, "speed") * KMH_TO_MPH


def mph_to_kmh(v: float) -> float:
    return _non_negative(v, "speed") / KMH_TO_MPH


def m_to_ft(d: float) -> float:
    return _non_negative(d, "distance") * M_TO_FT


def mph_to_fps(v: float) -> float:
    return _non_negative(v, "speed") * MPH_TO_FPS


def fps_to_mph(u: float) -> float:
    return _non_negative(u, "speed") / MPH_TO_FPS


def utc(dt: datetime) -> datetime:
    """Normalize to an aware UTC datetime; naive input is taken as UTC."""
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


class IgnitionStatus(str, enum.Enum):
    KEY_ON = "KEY_ON"
    MID_JOURNEY = "MID_JOURNEY"
    KEY_OFF = "KEY_OFF"

    @classmethod
    def parse(cls, text: str) -> "IgnitionStatus":
        return cls(text.strip().upper().replace(" ", "_"))


@dataclass(frozen=True)
class CvPoint:
    data_point_id: str
    journey_id: str
    captured_at: datetime
    latitude: float
    longitude: float
    ignition_status: IgnitionStatus
    speed_kmh: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"longitude out of range: {self.longitude}")
        _non_negative(self.speed_kmh, "speed_kmh")
        object.__setattr__(self, "captured_at", utc(self.captured_at))

    @property
    def speed_mph(self) -> float:
        return kmh_to_mph(self.speed_kmh)


@dataclass(frozen=True)
class RwisObservation:
    observed_at: datetime
    surface_temp_c: float
    grip: float
    rain_state: str
    visibility_m: float
    precip_1h: float
    precip_3h: float
    precip_6h: float
    precip_12h: float
    precip_24h: float
    extras: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.grip <= 1.0:
            raise ValidationError(f"grip outside [0, 1]: {self.grip}")
        if not 0.0 <= self.visibility_m <= 2000.0:
            raise ValidationError(f"visibility outside [0, 2000] m: {self.visibility_m}")
        for name in ("precip_1h", "precip_3h", "precip_6h", "precip_12h", "precip_24h"):
            _non_negative(getattr(self, name), name)
        object.__setattr__(self, "observed_at", utc(self.observed_at))
        object.__setattr__(self, "extras", MappingProxyType(dict(self.extras)))


@dataclass(frozen=True)
class RoadSegment:
    osm_id: str
    lanes: int
    highway_class: str
    maxspeed_mph: float
    polyline: tuple[tuple[float, float], ...]  # (lat, lon)
    name: str = ""

    def __post_init__(self):
        if self.lanes < 1:
            raise ValidationError(f"segment {self.osm_id}: lanes must be >= 1")
        if len(self.polyline) < 2:
            raise ValidationError(f"segment {self.osm_id}: polyline needs >= 2 vertices")
        object.__setattr__(self, "polyline", tuple((float(a), float(b)) for a, b in self.polyline))


@dataclass(frozen=True)
class WindowSample:
    window_index: int
    journey_id: str
    mean_speed_mph: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 1:
            raise ValidationError("n_points must be >= 1")
        _non_negative(self.mean_speed_mph, "mean_speed_mph")


FeatureVector = tuple[float, ...]


@dataclass(frozen=True)
class SpeedInterval:
    v_low: float
    v_high: float
    q25: float
    q75: float
    v_phys: float
    v_law: float

    def __post_init__(self):
        if not self.v_low <= self.v_high:
            raise ValidationError(f"v_low {self.v_low} > v_high {self.v_high}")
        if not self.v_high <= min(self.v_law, self.v_phys):
            raise ValidationError("v_high exceeds the legal or physical cap")

    @property
    def width(self) -> float:
        return self.v_high - self.v_low


@dataclass(frozen=True)
class PhysicsParams:
    """Stopping-distance parameters.

    ``mu`` is the pavement friction coefficient (RWIS grip used as-is).
    ``t_reaction_s`` defaults to the 2.5 s perception-reaction time behind the
    495 ft stopping sight distance at 55 mph; ``k_gap_s`` is an extra headway
    time and defaults to zero.
    """

    mu: float = 1.0
    g_ft_s2: float = G_FT_S2
    t_reaction_s: float = 2.5
    k_gap_s: float = 0.0
    ssd_cap_ft: float = DEFAULT_SSD_CAP_FT

    def __post_init__(self):
        _non_negative(self.mu, "mu")
        _non_negative(self.t_reaction_s, "t_reaction_s")
        _non_negative(self.k_gap_s, "k_gap_s")
        if not self.ssd_cap_ft > 0:
            raise ValidationError("ssd_cap_ft must be > 0")
        if not self.g_ft_s2 > 0:
            raise ValidationError("g_ft_s2 must be > 0")
