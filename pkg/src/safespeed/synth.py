"""Deterministic synthetic CV / RWIS / road-network scenarios with known truth.

Each vehicle's 10-minute mean speed is drawn as

    Y = base - shift[regime] + eps,   eps ~ Normal(0, sigma[regime]^2)

so the true conditional quartiles of every window are closed-form. The
weather regime steps on the 10-minute grid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import timedelta, timezone
from pathlib import Path
from statistics import NormalDist
from typing import Mapping

import numpy as np

from .core import RoadSegment, ValidationError, mph_to_kmh
from .features import WINDOW_SECONDS, window_start
from .geo import (
    STUDY_BOX,
    NetworkIndex,
    ProjectedPoint,
    buffer_radius_ft,
    network_to_geojson,
    project,
    unproject,
)
from .pipeline import CV_COLUMNS, RWIS_COLUMNS, atomic_writer, iso, parse_timestamp, window_index

PRECIP_HOURS = (1, 3, 6, 12, 24)
EXTRA_COLUMNS = ("WindSpeed", "SnowLayer", "IceLayer", "WaterLayer")


@dataclass(frozen=True)
class RegimeSpec:
    """Uniform ranges for the weather draws of one regime, plus its speed effect."""

    speed_shift_mph: float
    speed_sigma_mph: float
    grip: tuple[float, float]
    visibility_m: tuple[float, float]
    precip_rate_mm: tuple[float, float]
    surface_temp_c: tuple[float, float]
    rain_states: tuple[str, ...]
    wind_speed: tuple[float, float] = (0.0, 6.0)
    snow_layer: tuple[float, float] = (0.0, 0.0)
    ice_layer: tuple[float, float] = (0.0, 0.0)
    water_layer: tuple[float, float] = (0.0, 0.0)


def default_regimes() -> dict[str, RegimeSpec]:
    return {
        "clear": RegimeSpec(
            0.0, 4.0, (0.75, 0.90), (1500.0, 2000.0), (0.0, 0.0), (5.0, 18.0), ("dry",),
        ),
        "rain": RegimeSpec(
            5.0, 5.0, (0.50, 0.70), (300.0, 1500.0), (0.5, 6.0), (2.0, 12.0),
            ("light rain", "moderate rain"), wind_speed=(2.0, 10.0), water_layer=(0.1, 1.5),
        ),
        "snow": RegimeSpec(
            12.0, 6.0, (0.20, 0.45), (80.0, 600.0), (0.2, 3.0), (-8.0, 0.0),
            ("light snow", "moderate snow"), wind_speed=(3.0, 12.0),
            snow_layer=(0.5, 8.0), ice_layer=(0.0, 1.0),
        ),
    }


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_days: float = 3.0
    start: str = "2022-10-19T00:00:00Z"
    vehicles_per_window: tuple[int, int] = (8, 24)  # inclusive uniform range
    points_per_vehicle: tuple[int, int] = (1, 4)
    n_segments: int = 4
    lanes: tuple[int, ...] = (2, 3, 4)
    segment_length_ft: float = 9000.0
    base_speed_mph: float = 62.0
    # (duration in 10-minute windows, regime); repeated to fill n_days.
    weather_script: tuple[tuple[int, str], ...] = (
        (72, "clear"),
        (30, "rain"),
        (60, "clear"),
        (24, "snow"),
        (36, "clear"),
    )
    regimes: Mapping[str, RegimeSpec] = field(default_factory=default_regimes)
    decoy_fraction: float = 0.05
    ramp_fraction: float = 0.02
    rwis_gaps: tuple[int, ...] = ()  # window offsets with no RWIS record
    tz_offset_hours: float = -4.0
    speed_jitter_kmh: float = 1.5

    def __post_init__(self):
        if not self.weather_script:
            raise ValidationError("weather_script must not be empty")
        for duration, regime in self.weather_script:
            if duration <= 0:
                raise ValidationError("weather_script durations must be positive")
            if regime not in self.regimes:
                raise ValidationError(f"weather_script uses undefined regime {regime!r}")
        if self.n_days <= 0:
            raise ValidationError("n_days must be positive")
        lo, hi = self.vehicles_per_window
        if not 1 <= lo <= hi:
            raise ValidationError("vehicles_per_window must satisfy 1 <= min <= max")
        lo, hi = self.points_per_vehicle
        if not 1 <= lo <= hi:
            raise ValidationError("points_per_vehicle must satisfy 1 <= min <= max")
        if not 0 <= self.decoy_fraction + self.ramp_fraction < 1:
            raise ValidationError("decoy_fraction + ramp_fraction must lie in [0, 1)")

    @property
    def n_windows(self) -> int:
        return int(round(self.n_days * 24 * 3600 / WINDOW_SECONDS))

    @property
    def first_window(self) -> int:
        return window_index(parse_timestamp(self.start))

    def regime_at(self, offset: int) -> str:
        period = sum(d for d, _ in self.weather_script)
        k = offset % period
        for duration, regime in self.weather_script:
            if k < duration:
                return regime
            k -= duration
        raise AssertionError("unreachable")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScenarioConfig":
        doc = dict(doc)
        regimes = default_regimes()
        for name, spec in (doc.pop("regimes", None) or {}).items():
            base = asdict(regimes[name]) if name in regimes else {}
            base.update(spec)
            regimes[name] = RegimeSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in base.items()})
        for key in ("vehicles_per_window", "points_per_vehicle", "lanes", "rwis_gaps"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "weather_script" in doc:
            doc["weather_script"] = tuple((int(d), str(r)) for d, r in doc["weather_script"])
        try:
            return cls(regimes=regimes, **doc)
        except TypeError as exc:
            raise ValidationError(f"synth: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regimes"] = {k: asdict(v) for k, v in self.regimes.items()}
        return d


def true_quartiles(cfg: ScenarioConfig, regime: str) -> tuple[float, float, float]:
    spec = cfg.regimes[regime]
    dist = NormalDist(cfg.base_speed_mph - spec.speed_shift_mph, spec.speed_sigma_mph)
    return dist.inv_cdf(0.25), dist.median, dist.inv_cdf(0.75)


def build_network(cfg: ScenarioConfig) -> tuple[list[RoadSegment], tuple[float, float]]:
    """Parallel mainline segments across the study box, plus excluded decoy roads.

    Returns the segments and the projection origin used to lay them out.
    """
    n, s, e, w = STUDY_BOX
    origin = ((n + s) / 2.0, (e + w) / 2.0)
    segments = []
    spacing = 2500.0
    half = cfg.segment_length_ft / 2.0
    for k in range(cfg.n_segments):
        y0 = (k - (cfg.n_segments - 1) / 2.0) * spacing
        # Slight dog-leg so polylines have an interior vertex.
        verts = [
            ProjectedPoint(-half, y0),
            ProjectedPoint(0.0, y0 + 150.0 * (-1) ** k),
            ProjectedPoint(half, y0),
        ]
        segments.append(
            RoadSegment(
                osm_id=f"main{k:03d}",
                lanes=cfg.lanes[k % len(cfg.lanes)],
                highway_class="motorway",
                maxspeed_mph=55.0,
                polyline=tuple(_rounded(unproject(v, origin)) for v in verts),
                name=f"Synthetic Expressway {k}",
            )
        )
        ramp_y = y0 + 600.0
        segments.append(
            RoadSegment(
                osm_id=f"ramp{k:03d}",
                lanes=1,
                highway_class="motorway_link",
                maxspeed_mph=55.0,
                polyline=(
                    _rounded(unproject(ProjectedPoint(-half / 2, ramp_y), origin)),
                    _rounded(unproject(ProjectedPoint(half / 2, ramp_y), origin)),
                ),
                name=f"Synthetic Ramp {k}",
            )
        )
    top = (cfg.n_segments / 2.0 + 1) * spacing
    segments.append(
        RoadSegment(
            osm_id="fast000",
            lanes=3,
            highway_class="motorway",
            maxspeed_mph=65.0,
            polyline=(
                _rounded(unproject(ProjectedPoint(-half, top), origin)),
                _rounded(unproject(ProjectedPoint(half, top), origin)),
            ),
            name="Synthetic 65 mph Thruway",
        )
    )
    return segments, origin


def _rounded(latlon: tuple[float, float]) -> tuple[float, float]:
    return round(latlon[0], 6), round(latlon[1], 6)


def _point_near(rng, seg: RoadSegment, origin, offset_ft: float):
    """Uniform position along ``seg``, shifted ``offset_ft`` to its left."""
    pts = [project(v, origin) for v in seg.polyline]
    lengths = [math.dist((a.x_ft, a.y_ft), (b.x_ft, b.y_ft)) for a, b in zip(pts[:-1], pts[1:])]
    s = rng.uniform(0.0, sum(lengths))
    k = 0
    while k < len(lengths) - 1 and s > lengths[k]:
        s -= lengths[k]
        k += 1
    a, b, length = pts[k], pts[k + 1], lengths[k]
    t = min(1.0, s / length)
    ux, uy = (b.x_ft - a.x_ft) / length, (b.y_ft - a.y_ft) / length
    x = a.x_ft + t * (b.x_ft - a.x_ft) - uy * offset_ft
    y = a.y_ft + t * (b.y_ft - a.y_ft) + ux * offset_ft
    return _rounded(unproject(ProjectedPoint(x, y), origin))


def _fmt(x: float, nd: int = 6) -> str:
    return f"{x:.{nd}f}"


def generate(cfg: ScenarioConfig, out_dir: str | Path) -> dict:
    """Write cv.csv, rwis.csv, network.geojson, truth.csv, labels.csv, manifest.json.

    ``labels.csv`` tags each CV point as ``road``, ``decoy`` (off every road)
    or ``ramp`` (on an excluded ramp). Returns the manifest.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x5AFE]))
    segments, origin = build_network(cfg)
    mainline = [s for s in segments if s.osm_id.startswith("main")]
    ramps = [s for s in segments if s.osm_id.startswith("ramp")]
    main_index = NetworkIndex(mainline)
    local = timezone(timedelta(hours=cfg.tz_offset_hours))
    w0 = cfg.first_window
    gaps = set(cfg.rwis_gaps)

    # Weather series, including history so rolling precipitation is defined.
    history = 24 * 6
    rates = np.zeros(cfg.n_windows + history)
    rwis_rows, truth_rows = [], []
    for off in range(cfg.n_windows):
        spec = cfg.regimes[cfg.regime_at(off)]
        rates[history + off] = rng.uniform(*spec.precip_rate_mm)
    cv_rows, labels = [], []
    n_road = 0
    for off in range(cfg.n_windows):
        w = w0 + off
        regime = cfg.regime_at(off)
        spec = cfg.regimes[regime]
        start = window_start(w)
        grip = float(np.clip(rng.uniform(*spec.grip), 0.0, 1.0))
        vis = float(np.clip(rng.uniform(*spec.visibility_m), 0.0, 2000.0))
        temp = rng.uniform(*spec.surface_temp_c)
        state = spec.rain_states[int(rng.integers(len(spec.rain_states)))]
        extras = [rng.uniform(*getattr(spec, a)) for a in ("wind_speed", "snow_layer", "ice_layer", "water_layer")]
        i = history + off
        precip = [float(rates[i - 6 * h + 1 : i + 1].mean()) for h in PRECIP_HOURS]
        if off not in gaps:
            rwis_rows.append(
                [iso(start), _fmt(temp, 2), _fmt(grip, 3), state, _fmt(vis, 1)]
                + [_fmt(p, 3) for p in precip]
                + [_fmt(x, 2) for x in extras]
            )
        q25, q50, q75 = true_quartiles(cfg, regime)
        truth_rows.append([w, iso(start), regime, repr(q25), repr(q50), repr(q75)])

        n_veh = int(rng.integers(cfg.vehicles_per_window[0], cfg.vehicles_per_window[1] + 1))
        for v in range(n_veh):
            journey = f"J{w}-{v:03d}"
            y = cfg.base_speed_mph - spec.speed_shift_mph + rng.normal(0.0, spec.speed_sigma_mph)
            y = max(y, 1.0)
            k = int(rng.integers(cfg.points_per_vehicle[0], cfg.points_per_vehicle[1] + 1))
            jitter = rng.normal(0.0, cfg.speed_jitter_kmh, size=k)
            jitter -= jitter.mean()
            speeds = mph_to_kmh(y) + jitter
            seconds = np.sort(rng.choice(WINDOW_SECONDS, size=k, replace=False))
            seg = mainline[int(rng.integers(len(mainline)))]
            radius = buffer_radius_ft(seg.lanes)
            for j in range(k):
                lat, lon = _point_near(rng, seg, origin, rng.uniform(-0.8, 0.8) * radius)
                ts = (start + timedelta(seconds=int(seconds[j]))).astimezone(local)
                pid = f"P{w}-{v:03d}-{j}"
                cv_rows.append((ts, pid, journey, lat, lon, "MID_JOURNEY", max(0.0, speeds[j])))
                labels.append((pid, "road"))
                n_road += 1

    # Off-network points, as a share of the whole CV file.
    extra_share = cfg.decoy_fraction + cfg.ramp_fraction
    n_extra = int(round(n_road * extra_share / (1.0 - extra_share))) if extra_share else 0
    n_ramp = int(round(n_extra * cfg.ramp_fraction / extra_share)) if extra_share else 0
    for m in range(n_extra):
        kind = "ramp" if m < n_ramp else "decoy"
        w = w0 + int(rng.integers(cfg.n_windows))
        ts = (window_start(w) + timedelta(seconds=int(rng.integers(WINDOW_SECONDS)))).astimezone(local)
        if kind == "ramp":
            seg = ramps[int(rng.integers(len(ramps)))]
            lat, lon = _point_near(rng, seg, origin, 0.0)
        else:
            while True:
                seg = mainline[int(rng.integers(len(mainline)))]
                side = 1.0 if rng.random() < 0.5 else -1.0
                off_ft = side * (buffer_radius_ft(seg.lanes) + rng.uniform(2.0, 400.0))
                lat, lon = _point_near(rng, seg, origin, off_ft)
                if main_index.match([lat], [lon])[0] is None:
                    break
        pid = f"X{m:06d}"
        speed = mph_to_kmh(float(rng.uniform(20.0, 70.0)))
        cv_rows.append((ts, pid, f"X{m:06d}", lat, lon, "MID_JOURNEY", speed))
        labels.append((pid, kind))

    cv_rows.sort(key=lambda r: (r[0], r[1]))
    label_of = dict(labels)
    files = {}
    with atomic_writer(out / "cv.csv") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CV_COLUMNS)
        for ts, pid, journey, lat, lon, status, speed in cv_rows:
            wr.writerow((pid, journey, ts.isoformat(), _fmt(lat), _fmt(lon), status, _fmt(speed, 4)))
    files["cv"] = "cv.csv"
    with atomic_writer(out / "labels.csv") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("dataPointId", "label"))
        for _, pid, *_ in cv_rows:
            wr.writerow((pid, label_of[pid]))
    files["labels"] = "labels.csv"
    with atomic_writer(out / "rwis.csv") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow((*RWIS_COLUMNS, *EXTRA_COLUMNS))
        wr.writerows(rwis_rows)
    files["rwis"] = "rwis.csv"
    with atomic_writer(out / "network.geojson") as fh:
        json.dump(network_to_geojson(segments), fh, indent=1, sort_keys=True)
        fh.write("\n")
    files["network"] = "network.geojson"
    with atomic_writer(out / "truth.csv") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("window_index", "window_start", "regime", "true_q25", "true_q50", "true_q75"))
        wr.writerows(truth_rows)
    files["truth"] = "truth.csv"

    counts = {k: sum(1 for _, lab in labels if lab == k) for k in ("road", "decoy", "ramp")}
    manifest = {
        "seed": cfg.seed,
        "first_window": w0,
        "n_windows": cfg.n_windows,
        "n_rwis_records": len(rwis_rows),
        "n_cv_points": len(cv_rows),
        "point_labels": counts,
        "files": files,
        "config": cfg.to_dict(),
    }
    with atomic_writer(out / "manifest.json") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_truth(path) -> dict[int, tuple[str, float, float, float]]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[int(row["window_index"])] = (
                row["regime"],
                float(row["true_q25"]),
                float(row["true_q50"]),
                float(row["true_q75"]),
            )
    return out


def read_labels(path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["dataPointId"]: row["label"] for row in csv.DictReader(fh)}
