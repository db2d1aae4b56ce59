"""Feature schema and deterministic per-window feature encoding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .core import FeatureVector, RwisObservation

WINDOW_SECONDS = 600
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

RAIN_CODES = (
    "NONE",
    "LIGHT_RAIN",
    "MODERATE_RAIN",
    "HEAVY_RAIN",
    "LIGHT_SNOW",
    "MODERATE_SNOW",
    "HEAVY_SNOW",
)
UNKNOWN = "UNKNOWN"

RWIS_FIELDS = (
    "surface_temp_c",
    "grip",
    "rain_state",
    "visibility_m",
    "precip_1h",
    "precip_3h",
    "precip_6h",
    "precip_12h",
    "precip_24h",
)
CONTEXT_FIELDS = ("hour_of_day", "day_of_week", "vehicle_count")
ENCODINGS = ("numeric", "one-hot", "cyclic")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    source: str
    encoding: str = "numeric"
    categories: tuple[Any, ...] = ()
    default: float | None = None
    missing_indicator: bool = False
    period: float | None = None

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise SchemaError(f"{self.name}: unknown encoding {self.encoding!r}")
        if self.encoding == "one-hot" and not self.categories:
            raise SchemaError(f"{self.name}: one-hot encoding needs categories")
        if self.encoding == "cyclic" and not (self.period and self.period > 0):
            raise SchemaError(f"{self.name}: cyclic encoding needs a positive period")
        object.__setattr__(self, "categories", tuple(self.categories))

    @property
    def columns(self) -> list[str]:
        if self.encoding == "numeric":
            cols = [self.name]
        elif self.encoding == "one-hot":
            cols = [f"{self.name}={c}" for c in self.categories]
        else:
            cols = [f"{self.name}_sin", f"{self.name}_cos"]
        if self.missing_indicator:
            cols.append(f"{self.name}__missing")
        return cols

    @property
    def dim(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureDescriptor, ...]
    columns: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        cols = tuple(c for f in self.features for c in f.columns)
        if len(set(cols)) != len(cols):
            raise SchemaError("encoded column names collide")
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "columns", cols)

    @property
    def dim(self) -> int:
        return len(self.columns)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeatureSchema":
        items = doc.get("features")
        if not isinstance(items, list) or not items:
            raise SchemaError("schema needs a non-empty 'features' list")
        descs = []
        for k, item in enumerate(items):
            try:
                descs.append(FeatureDescriptor(**item))
            except TypeError as exc:
                raise SchemaError(f"features[{k}]: {exc}") from None
        return cls(tuple(descs))

    def to_dict(self) -> dict:
        out = []
        for f in self.features:
            d = {"name": f.name, "source": f.source, "encoding": f.encoding}
            if f.categories:
                d["categories"] = list(f.categories)
            if f.default is not None:
                d["default"] = f.default
            if f.missing_indicator:
                d["missing_indicator"] = True
            if f.period is not None:
                d["period"] = f.period
            out.append(d)
        return {"features": out}


def load_schema(path: str | Path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(yaml.safe_load(fh) or {})


def default_schema() -> FeatureSchema:
    """Weather, pavement and temporal context features, one descriptor per signal."""
    num = FeatureDescriptor
    optional = dict(default=0.0, missing_indicator=True)
    return FeatureSchema(
        (
            num("surface_temp", "surface_temp_c"),
            num("grip", "grip"),
            num("visibility", "visibility_m"),
            num("rain_state", "rain_state", "one-hot", RAIN_CODES, missing_indicator=True),
            num("precip_1h", "precip_1h"),
            num("precip_3h", "precip_3h"),
            num("precip_6h", "precip_6h"),
            num("precip_12h", "precip_12h"),
            num("precip_24h", "precip_24h"),
            num("wind_speed", "WindSpeed", **optional),
            num("snow_layer", "SnowLayer", **optional),
            num("ice_layer", "IceLayer", **optional),
            num("water_layer", "WaterLayer", **optional),
            num("hour", "hour_of_day", "cyclic", period=24.0),
            num("day_of_week", "day_of_week", "one-hot", tuple(range(7))),
            num("vehicle_count", "vehicle_count"),
        )
    )


def window_start(window_index: int) -> datetime:
    return EPOCH + timedelta(seconds=WINDOW_SECONDS * window_index)


def _lookup(source: str, rwis: RwisObservation, context: Mapping[str, Any]):
    if source in CONTEXT_FIELDS:
        return context[source]
    if source in RWIS_FIELDS:
        return getattr(rwis, source)
    return rwis.extras.get(source)


def build_features(
    rwis: RwisObservation, window_index: int, vehicle_count: int, schema: FeatureSchema
) -> FeatureVector:
    start = window_start(window_index)
    context = {
        "hour_of_day": start.hour + start.minute / 60.0,
        "day_of_week": start.weekday(),
        "vehicle_count": vehicle_count,
    }
    out: list[float] = []
    for f in schema.features:
        value = _lookup(f.source, rwis, context)
        if f.encoding == "numeric":
            missing = value is None or (isinstance(value, float) and math.isnan(value))
            if missing:
                if f.default is None:
                    raise SchemaError(f"feature {f.name!r}: source {f.source!r} absent, no default")
                value = f.default
            out.append(float(value))
        elif f.encoding == "one-hot":
            missing = value is None or value == UNKNOWN or value not in f.categories
            out.extend(0.0 if missing else float(value == c) for c in f.categories)
        else:
            if value is None:
                raise SchemaError(f"feature {f.name!r}: source {f.source!r} absent")
            missing = False
            angle = 2.0 * math.pi * float(value) / f.period
            out.extend((math.sin(angle), math.cos(angle)))
        if f.missing_indicator:
            out.append(1.0 if missing else 0.0)
    return tuple(out)


def validate_schema(schema: FeatureSchema, extra_sources: Sequence[str] = ()) -> None:
    """Check that every source without a default can be resolved."""
    known = set(RWIS_FIELDS) | set(CONTEXT_FIELDS) | set(extra_sources)
    for f in schema.features:
        if f.source not in known and f.default is None:
            raise SchemaError(f"feature {f.name!r}: unknown source {f.source!r} and no default")
