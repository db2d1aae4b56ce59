"""Parse CV and RWIS files, build per-vehicle 10-minute samples and align weather."""

from __future__ import annotations

import csv
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    CvPoint,
    FeatureVector,
    IgnitionStatus,
    RwisObservation,
    ValidationError,
    WindowSample,
    kmh_to_mph,
    utc,
)
from .features import (
    EPOCH,
    UNKNOWN,
    WINDOW_SECONDS,
    FeatureSchema,
    build_features,
    window_start,
)

CV_COLUMNS = (
    "dataPointId",
    "journeyId",
    "capturedTimestamp",
    "latitude",
    "longitude",
    "ignitionStatus",
    "speed",
)
RWIS_COLUMNS = (
    "Timestamp",
    "SurfaceTemp",
    "Grip",
    "RainState",
    "Visibility",
    "Precip1",
    "Precip3",
    "Precip6",
    "Precip12",
    "Precip24",
)

DEFAULT_RAIN_CODE_TABLE = {
    "none": "NONE",
    "dry": "NONE",
    "clear": "NONE",
    "no precipitation": "NONE",
    "light rain": "LIGHT_RAIN",
    "moderate rain": "MODERATE_RAIN",
    "heavy rain": "HEAVY_RAIN",
    "light snow": "LIGHT_SNOW",
    "moderate snow": "MODERATE_SNOW",
    "heavy snow": "HEAVY_SNOW",
}


class SchemaMismatch(ValueError):
    """Input file header lacks required columns."""

    def __init__(self, path, missing: Sequence[str]):
        self.missing = list(missing)
        super().__init__(f"{path}: missing required column(s): {', '.join(self.missing)}")


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    return utc(datetime.fromisoformat(text))


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite")
    return value


def _open_rows(path, required: Sequence[str], delimiter: str):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.DictReader(fh, delimiter=delimiter)
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise SchemaMismatch(path, missing)
    return fh, reader


def parse_cv(path: str | Path, delimiter: str = ",") -> tuple[list[CvPoint], Counter]:
    """Read CV points; invalid rows are dropped and tallied by reason."""
    dropped: Counter = Counter()
    points: list[CvPoint] = []
    fh, reader = _open_rows(path, CV_COLUMNS, delimiter)
    with fh:
        for row in reader:
            try:
                ts = parse_timestamp(row["capturedTimestamp"])
            except (TypeError, ValueError):
                dropped["timestamp"] += 1
                continue
            try:
                lat = _float(row["latitude"])
                lon = _float(row["longitude"])
            except (TypeError, ValueError):
                dropped["coordinates"] += 1
                continue
            try:
                speed = _float(row["speed"])
            except (TypeError, ValueError):
                dropped["speed"] += 1
                continue
            try:
                status = IgnitionStatus.parse(row["ignitionStatus"] or "")
            except ValueError:
                dropped["ignition_status"] += 1
                continue
            try:
                points.append(
                    CvPoint(
                        data_point_id=row["dataPointId"],
                        journey_id=row["journeyId"],
                        captured_at=ts,
                        latitude=lat,
                        longitude=lon,
                        ignition_status=status,
                        speed_kmh=speed,
                    )
                )
            except ValidationError as exc:
                dropped["speed" if "speed" in str(exc) else "coordinates"] += 1
    return points, dropped


def map_rain_state(text: str, table: Mapping[str, str] | None = None) -> str:
    table = DEFAULT_RAIN_CODE_TABLE if table is None else table
    key = " ".join(text.strip().lower().replace("_", " ").split())
    return table.get(key, UNKNOWN)


def parse_rwis(
    path: str | Path,
    delimiter: str = ",",
    code_table: Mapping[str, str] | None = None,
) -> tuple[list[RwisObservation], Counter]:
    """Read RWIS observations.

    Unknown rain-state strings map to ``UNKNOWN`` (tallied as
    ``unknown_rain_state``, row kept). Timestamps off the 10-minute grid are
    floored onto it; a second record for the same bin is dropped.
    """
    dropped: Counter = Counter()
    by_window: dict[int, RwisObservation] = {}
    fh, reader = _open_rows(path, RWIS_COLUMNS, delimiter)
    with fh:
        extra_cols = [c for c in (reader.fieldnames or []) if c not in RWIS_COLUMNS]
        for row in reader:
            try:
                ts = parse_timestamp(row["Timestamp"])
            except (TypeError, ValueError):
                dropped["timestamp"] += 1
                continue
            try:
                values = [
                    _float(row[c])
                    for c in ("SurfaceTemp", "Grip", "Visibility", "Precip1", "Precip3",
                              "Precip6", "Precip12", "Precip24")
                ]
            except (TypeError, ValueError):
                dropped["numeric"] += 1
                continue
            extras = {}
            for c in extra_cols:
                text = (row.get(c) or "").strip()
                if text:
                    try:
                        extras[c] = _float(text)
                    except ValueError:
                        # Optional sensor: left absent and imputed by the schema.
                        dropped["optional_unparsed"] += 1
            rain = map_rain_state(row["RainState"] or "", code_table)
            idx = window_index(ts)
            if idx in by_window:
                dropped["duplicate_window"] += 1
                continue
            try:
                obs = RwisObservation(
                    observed_at=window_start(idx),
                    surface_temp_c=values[0],
                    grip=values[1],
                    rain_state=rain,
                    visibility_m=values[2],
                    precip_1h=values[3],
                    precip_3h=values[4],
                    precip_6h=values[5],
                    precip_12h=values[6],
                    precip_24h=values[7],
                    extras=extras,
                )
            except ValidationError:
                dropped["out_of_range"] += 1
                continue
            if rain == UNKNOWN:
                dropped["unknown_rain_state"] += 1
            if ts != obs.observed_at:
                dropped["realigned"] += 1
            by_window[idx] = obs
    return [by_window[k] for k in sorted(by_window)], dropped


def window_index(t: datetime) -> int:
    return (utc(t) - EPOCH) // timedelta(seconds=WINDOW_SECONDS)


def aggregate_vehicle_windows(
    points: Iterable[CvPoint], min_points: int = 1
) -> list[WindowSample]:
    """One sample per (window, journey): the journey's mean speed in mph."""
    groups: dict[tuple[int, str], list[float]] = defaultdict(list)
    for p in points:
        groups[(window_index(p.captured_at), p.journey_id)].append(kmh_to_mph(p.speed_kmh))
    out = []
    for (w, journey), speeds in sorted(groups.items()):
        if len(speeds) < min_points:
            continue
        out.append(WindowSample(w, journey, math.fsum(speeds) / len(speeds), len(speeds)))
    return out


def empirical_quantiles(values: Sequence[float], probs: Sequence[float]) -> tuple[float, ...]:
    """Linear interpolation between order statistics at h = (n - 1) p."""
    if len(values) == 0:
        raise ValidationError("cannot take quantiles of an empty sample")
    return tuple(float(q) for q in np.quantile(np.asarray(values, float), probs, method="linear"))


def observed_quantiles(samples: Sequence[WindowSample]) -> tuple[float, float, float]:
    return empirical_quantiles([s.mean_speed_mph for s in samples], (0.25, 0.5, 0.75))


@dataclass(frozen=True)
class WindowRecord:
    window_index: int
    features: FeatureVector
    samples: tuple[WindowSample, ...]
    observed_q25: float
    observed_q50: float
    observed_q75: float
    vehicle_count: int
    rain_state: str
    grip: float
    visibility_m: float

    def __post_init__(self):
        if self.vehicle_count != len(self.samples) or self.vehicle_count < 1:
            raise ValidationError("vehicle_count must equal the number of samples (>= 1)")
        if not self.observed_q25 <= self.observed_q50 <= self.observed_q75:
            raise ValidationError("observed quantiles out of order")

    @property
    def start(self) -> datetime:
        return window_start(self.window_index)


def align_weather(
    samples: Sequence[WindowSample],
    rwis: Sequence[RwisObservation],
    schema: FeatureSchema,
) -> tuple[list[WindowRecord], int]:
    """Join each window's samples with the RWIS record of the same bin.

    Returns the records (ordered by window) and the number of windows dropped
    for lack of a weather record.
    """
    weather = {window_index(o.observed_at): o for o in rwis}
    by_window: dict[int, list[WindowSample]] = defaultdict(list)
    for s in samples:
        by_window[s.window_index].append(s)
    records, n_dropped = [], 0
    for w in sorted(by_window):
        obs = weather.get(w)
        if obs is None:
            n_dropped += 1
            continue
        group = tuple(sorted(by_window[w], key=lambda s: s.journey_id))
        q25, q50, q75 = observed_quantiles(group)
        records.append(
            WindowRecord(
                window_index=w,
                features=build_features(obs, w, len(group), schema),
                samples=group,
                observed_q25=q25,
                observed_q50=q50,
                observed_q75=q75,
                vehicle_count=len(group),
                rain_state=obs.rain_state,
                grip=obs.grip,
                visibility_m=obs.visibility_m,
            )
        )
    return records, n_dropped


def training_rows(records: Sequence[WindowRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Replicate each window's features once per vehicle sample."""
    X, y = [], []
    for r in records:
        for s in r.samples:
            X.append(r.features)
            y.append(s.mean_speed_mph)
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


# -- file formats ----------------------------------------------------------

WINDOW_TAIL = (
    "observed_q25",
    "observed_q50",
    "observed_q75",
    "vehicle_count",
    "rain_state",
    "grip",
    "visibility_m",
)
SAMPLE_COLUMNS = ("window_index", "journey_id", "mean_speed_mph", "n_points")


def iso(dt: datetime) -> str:
    return utc(dt).strftime("%Y-%m-%dT%H:%M:%SZ")


def fmt(x: float) -> str:
    return repr(float(x))


def atomic_writer(path: str | Path):
    """Context manager yielding a text handle; the file appears only on success."""
    return _AtomicWriter(Path(path))


class _AtomicWriter:
    def __init__(self, path: Path):
        self.path = path
        self.tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(self.tmp, "w", newline="", encoding="utf-8")
        return self.fh

    def __exit__(self, exc_type, exc, tb):
        self.fh.close()
        if exc_type is None:
            os.replace(self.tmp, self.path)
        else:
            self.tmp.unlink(missing_ok=True)
        return False


def write_windows(records: Sequence[WindowRecord], schema: FeatureSchema, path) -> None:
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("window_index", "window_start", *schema.columns, *WINDOW_TAIL))
        for r in records:
            w.writerow(
                (
                    r.window_index,
                    iso(r.start),
                    *(fmt(v) for v in r.features),
                    fmt(r.observed_q25),
                    fmt(r.observed_q50),
                    fmt(r.observed_q75),
                    r.vehicle_count,
                    r.rain_state,
                    fmt(r.grip),
                    fmt(r.visibility_m),
                )
            )


def write_samples(records: Sequence[WindowRecord], path) -> None:
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for r in records:
            for s in r.samples:
                w.writerow((s.window_index, s.journey_id, fmt(s.mean_speed_mph), s.n_points))


def read_windows(windows_path, samples_path) -> tuple[list[WindowRecord], list[str]]:
    """Load records written by :func:`write_windows` / :func:`write_samples`.

    Returns the records and the feature column names from the header.
    """
    samples: dict[int, list[WindowSample]] = defaultdict(list)
    with open(samples_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            w = int(row["window_index"])
            samples[w].append(
                WindowSample(w, row["journey_id"], float(row["mean_speed_mph"]), int(row["n_points"]))
            )
    with open(windows_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["window_index", "window_start"] or tuple(header[-len(WINDOW_TAIL):]) != WINDOW_TAIL:
            raise SchemaMismatch(windows_path, ["window_index/window_start/... layout"])
        feature_cols = header[2 : len(header) - len(WINDOW_TAIL)]
        records = []
        nf = len(feature_cols)
        for row in reader:
            w = int(row[0])
            tail = row[2 + nf :]
            records.append(
                WindowRecord(
                    window_index=w,
                    features=tuple(float(v) for v in row[2 : 2 + nf]),
                    samples=tuple(sorted(samples.get(w, []), key=lambda s: s.journey_id)),
                    observed_q25=float(tail[0]),
                    observed_q50=float(tail[1]),
                    observed_q75=float(tail[2]),
                    vehicle_count=int(tail[3]),
                    rain_state=tail[4],
                    grip=float(tail[5]),
                    visibility_m=float(tail[6]),
                )
            )
    return records, feature_cols
