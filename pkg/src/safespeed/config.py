"""Run configuration: one YAML/JSON file drives every CLI command."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .core import PhysicsParams
from .qrf import ForestParams


class ConfigError(ValueError):
    """Invalid or missing configuration; ``key`` is a dotted path."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(message)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Paths(_Section):
    cv: Optional[str] = None
    rwis: Optional[str] = None
    network: Optional[str] = None
    model: Optional[str] = None
    schema_: Optional[str] = Field(default=None, alias="schema")


class PrepareSettings(_Section):
    min_points: int = Field(default=1, ge=1)
    delimiter: str = ","
    rain_codes: Optional[dict[str, str]] = None


class ForestSettings(_Section):
    n_estimators: int = Field(default=200, ge=1)
    min_samples_leaf: int = Field(default=10, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=0)
    mtry: Optional[int] = Field(default=None, ge=1)
    n_jobs: int = 1

    def params(self) -> ForestParams:
        return ForestParams(
            n_estimators=self.n_estimators,
            min_samples_leaf=self.min_samples_leaf,
            max_depth=self.max_depth,
            mtry=self.mtry,
        )


class PhysicsSettings(_Section):
    t_reaction_s: float = Field(default=2.5, ge=0)
    k_gap_s: float = Field(default=0.0, ge=0)
    ssd_cap_ft: float = Field(default=495.0, gt=0)
    g_ft_s2: float = Field(default=32.174, gt=0)

    def params(self) -> PhysicsParams:
        return PhysicsParams(
            g_ft_s2=self.g_ft_s2,
            t_reaction_s=self.t_reaction_s,
            k_gap_s=self.k_gap_s,
            ssd_cap_ft=self.ssd_cap_ft,
        )


class Split(_Section):
    # [start, end) ISO-8601 ranges; every other window is test data.
    train: Optional[list[tuple[str, str]]] = None
    train_fraction: float = Field(default=0.8, gt=0, lt=1)


class PostedSettings(_Section):
    enabled: bool = True
    pct: float = Field(default=0.10, ge=0)


class RollingSettings(_Section):
    enabled: bool = True
    windows: list[int] = Field(default_factory=lambda: [6, 12, 24])

    @field_validator("windows")
    @classmethod
    def _positive(cls, v):
        if any(n < 1 for n in v):
            raise ValueError("rolling window counts must be >= 1")
        return v


class Baselines(_Section):
    posted: PostedSettings = Field(default_factory=PostedSettings)
    rolling_iqr: RollingSettings = Field(default_factory=RollingSettings)


class EvaluationSettings(_Section):
    deltas: list[float] = Field(default_factory=lambda: [5.0, 6.0])
    weather_groups: Optional[dict[str, str]] = None

    @field_validator("deltas")
    @classmethod
    def _positive(cls, v):
        if any(d <= 0 for d in v):
            raise ValueError("deltas must be > 0")
        return v


class RunConfig(_Section):
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "out"
    paths: Paths = Field(default_factory=Paths)
    synth: dict[str, Any] = Field(default_factory=dict)
    prepare: PrepareSettings = Field(default_factory=PrepareSettings)
    forest: ForestSettings = Field(default_factory=ForestSettings)
    physics: PhysicsSettings = Field(default_factory=PhysicsSettings)
    v_law_mph: float = Field(default=55.0, gt=0)
    split: Split = Field(default_factory=Split)
    baselines: Baselines = Field(default_factory=Baselines)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)

    # Directory relative paths are resolved against; set by load_config.
    base_dir: Path = Field(default=Path("."), exclude=True)

    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (self.base_dir / p)

    @property
    def data_path(self) -> Path:
        return self.resolve(self.data_dir)

    @property
    def out_path(self) -> Path:
        return self.resolve(self.out_dir)

    def input_path(self, name: str) -> Path:
        explicit = getattr(self.paths, name)
        default = {"cv": "cv.csv", "rwis": "rwis.csv", "network": "network.geojson"}[name]
        return self.resolve(explicit) if explicit else self.data_path / default

    @property
    def model_path(self) -> Path:
        return self.resolve(self.paths.model) if self.paths.model else self.out_path / "model.qrf"

    @property
    def schema_path(self) -> Path | None:
        return self.resolve(self.paths.schema_) if self.paths.schema_ else None


def _key(loc) -> str:
    return ".".join(str(p) for p in loc if p != "schema_") or "<root>"


def parse_config(doc: dict | None, base_dir: Path | str = ".") -> RunConfig:
    try:
        cfg = RunConfig.model_validate(doc or {})
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(_key(err["loc"]), err["msg"]) from None
    cfg.base_dir = Path(base_dir)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config({}, Path.cwd())
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<root>", f"unreadable config: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return parse_config(doc, path.parent)
