"""Command-line entry point: synth, prepare, train, recommend, evaluate.

Failures exit non-zero after printing one line to stderr of the form::

    safespeed: error kind=<kind> key=<dotted.key|-> msg="<message>"
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation, geo, pipeline, qrf, safety, synth
from .config import ConfigError, RunConfig, load_config
from .core import ValidationError
from .features import FeatureSchema, SchemaError, default_schema, load_schema, validate_schema
from .pipeline import WindowRecord, atomic_writer, fmt, iso, parse_timestamp, window_index

log = logging.getLogger("safespeed")

WINDOWS_FILE = "windows.csv"
SAMPLES_FILE = "samples.csv"
RECOMMEND_COLUMNS = (
    "window_index",
    "window_start",
    "q25",
    "q50",
    "q75",
    "v_phys",
    "v_law",
    "v_low",
    "v_high",
    "observed_q25",
    "observed_q50",
    "observed_q75",
    "binding_constraint",
)


class CommandError(RuntimeError):
    def __init__(self, kind: str, message: str, key: str = "-"):
        self.kind = kind
        self.key = key
        super().__init__(message)


def _require(path: Path, key: str) -> Path:
    if not path.exists():
        raise CommandError("missing_input", f"not found: {path}", key)
    return path


def _schema(cfg: RunConfig) -> FeatureSchema:
    if cfg.schema_path is None:
        return default_schema()
    try:
        return load_schema(_require(cfg.schema_path, "paths.schema"))
    except SchemaError as exc:
        raise CommandError("schema", str(exc), "paths.schema") from None


def _write_json(obj, path: Path) -> None:
    with atomic_writer(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- train/test split ----------------------------------------------------------


@dataclass(frozen=True)
class Split:
    train: list[WindowRecord]
    test: list[WindowRecord]


def split_records(records: Sequence[WindowRecord], cfg: RunConfig) -> Split:
    """Timestamp split: windows starting inside a train range train, the rest test."""
    records = sorted(records, key=lambda r: r.window_index)
    if cfg.split.train:
        ranges = []
        for k, (start, end) in enumerate(cfg.split.train):
            try:
                ranges.append((window_index(parse_timestamp(start)), window_index(parse_timestamp(end))))
            except ValueError as exc:
                raise CommandError("config", str(exc), f"split.train.{k}") from None
        in_train = [any(a <= r.window_index < b for a, b in ranges) for r in records]
    else:
        cut = int(len(records) * cfg.split.train_fraction)
        in_train = [k < cut for k in range(len(records))]
    train = [r for r, t in zip(records, in_train) if t]
    test = [r for r, t in zip(records, in_train) if not t]
    return Split(train, test)


def _load_windows(cfg: RunConfig, out: Path) -> tuple[list[WindowRecord], list[str]]:
    return pipeline.read_windows(
        _require(out / WINDOWS_FILE, "out_dir"), _require(out / SAMPLES_FILE, "out_dir")
    )


def _load_model(cfg: RunConfig, feature_cols: Sequence[str]) -> qrf.Forest:
    forest = qrf.load(_require(cfg.model_path, "paths.model"))
    if forest.feature_names and list(forest.feature_names) != list(feature_cols):
        raise CommandError("schema", "model features do not match the windows file", "paths.schema")
    return forest


# -- commands ------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, out: Path | None) -> dict:
    scenario = synth.ScenarioConfig.from_dict({**cfg.synth, "seed": cfg.seed})
    target = out or cfg.data_path
    manifest = synth.generate(scenario, target)
    log.info("synth: wrote %d CV points to %s", manifest["n_cv_points"], target)
    return manifest


def cmd_prepare(cfg: RunConfig, out: Path) -> dict:
    schema = _schema(cfg)
    cv_path = _require(cfg.input_path("cv"), "paths.cv")
    rwis_path = _require(cfg.input_path("rwis"), "paths.rwis")
    net_path = _require(cfg.input_path("network"), "paths.network")

    points, cv_drops = pipeline.parse_cv(cv_path, cfg.prepare.delimiter)
    rwis, rwis_counts = pipeline.parse_rwis(rwis_path, cfg.prepare.delimiter, cfg.prepare.rain_codes)
    extra_sources = sorted({k for o in rwis for k in o.extras})
    try:
        validate_schema(schema, extra_sources)
    except SchemaError as exc:
        raise CommandError("schema", str(exc), "paths.schema") from None
    segments = geo.load_network(net_path)
    kept = [s for s in segments if not geo.is_excluded(s)]
    if not kept:
        raise CommandError("input", "no 55 mph mainline segments in the network", "paths.network")
    index = geo.NetworkIndex(kept)
    matched_ids = geo.match_points(points, index)
    matched = [p for p, m in zip(points, matched_ids) if m is not None]
    samples = pipeline.aggregate_vehicle_windows(matched, cfg.prepare.min_points)
    try:
        records, no_weather = pipeline.align_weather(samples, rwis, schema)
    except SchemaError as exc:
        raise CommandError("schema", str(exc), "paths.schema") from None

    pipeline.write_windows(records, schema, out / WINDOWS_FILE)
    pipeline.write_samples(records, out / SAMPLES_FILE)
    summary = {
        "cv_points_read": len(points),
        "cv_rows_dropped": dict(sorted(cv_drops.items())),
        "cv_points_matched": len(matched),
        "cv_points_unmatched": len(points) - len(matched),
        "segments_total": len(segments),
        "segments_excluded": len(segments) - len(kept),
        "rwis_records": len(rwis),
        "rwis_counts": dict(sorted(rwis_counts.items())),
        "vehicle_window_samples": len(samples),
        "windows_without_weather": no_weather,
        "windows_written": len(records),
        "samples_written": sum(r.vehicle_count for r in records),
        "feature_columns": list(schema.columns),
    }
    _write_json(summary, out / "prepare_summary.json")
    log.info("prepare: %d windows, %d samples", len(records), summary["samples_written"])
    return summary


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    records, feature_cols = _load_windows(cfg, out)
    split = split_records(records, cfg)
    if not split.train:
        raise CommandError("split", "no windows fall in the training ranges", "split.train")
    X, y = pipeline.training_rows(split.train)
    try:
        forest = qrf.fit(
            X,
            y,
            cfg.forest.params(),
            master_seed=cfg.seed,
            n_jobs=cfg.forest.n_jobs,
            feature_names=feature_cols,
        )
    except ValidationError as exc:
        raise CommandError("train", str(exc), "forest") from None
    model_path = cfg.model_path
    model_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = model_path.with_name(f".{model_path.name}.tmp")
    try:
        qrf.save(forest, tmp)
        tmp.replace(model_path)
    finally:
        tmp.unlink(missing_ok=True)
    summary = {
        "train_windows": len(split.train),
        "train_rows": int(y.size),
        "test_windows": len(split.test),
        "max_train_window": split.train[-1].window_index,
        "min_test_window": split.test[0].window_index if split.test else None,
        "n_features": int(X.shape[1]),
        "master_seed": cfg.seed,
        "model": model_path.name,
    }
    _write_json(summary, out / "train_summary.json")
    log.info("train: %d rows from %d windows", y.size, len(split.train))
    return summary


def _qrf_quartiles(forest: qrf.Forest, records: Sequence[WindowRecord]) -> np.ndarray:
    if not records:
        return np.empty((0, 3))
    X = np.asarray([r.features for r in records], dtype=np.float64)
    return forest.predict_quantiles(X, [0.25, 0.5, 0.75])


def cmd_recommend(cfg: RunConfig, out: Path) -> int:
    records, feature_cols = _load_windows(cfg, out)
    forest = _load_model(cfg, feature_cols)
    test = split_records(records, cfg).test
    quartiles = _qrf_quartiles(forest, test)
    physics = cfg.physics.params()
    with atomic_writer(out / "recommendations.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECOMMEND_COLUMNS)
        for r, (q25, q50, q75) in zip(test, quartiles):
            env = safety.solve_v_phys(r.grip, r.visibility_m, physics)
            iv = safety.fuse(q25, q75, env.v_phys_mph, cfg.v_law_mph)
            w.writerow(
                (
                    r.window_index,
                    iso(r.start),
                    fmt(q25),
                    fmt(q50),
                    fmt(q75),
                    fmt(env.v_phys_mph),
                    fmt(cfg.v_law_mph),
                    fmt(iv.v_low),
                    fmt(iv.v_high),
                    fmt(r.observed_q25),
                    fmt(r.observed_q50),
                    fmt(r.observed_q75),
                    env.binding_constraint.value,
                )
            )
    log.info("recommend: %d windows", len(test))
    return len(test)


def cmd_evaluate(cfg: RunConfig, out: Path) -> list[evaluation.ModelResult]:
    records, feature_cols = _load_windows(cfg, out)
    split = split_records(records, cfg)
    test = split.test
    if not test:
        raise CommandError("split", "no test windows left after the split", "split.train")
    deltas = cfg.evaluation.deltas
    groups = cfg.evaluation.weather_groups
    results: list[evaluation.ModelResult] = []

    def score(name, preds, intervals, scored, notes):
        rep = evaluation.evaluate(scored, preds, intervals, deltas, groups)
        results.append(evaluation.ModelResult(name, rep, len(test) - len(scored), notes))

    posted = cfg.baselines.posted
    if posted.enabled:
        band, point = evaluation.posted_band(cfg.v_law_mph, posted.pct)
        score(
            f"Posted +-{100 * posted.pct:g}%",
            {r.window_index: point for r in test},
            {r.window_index: band for r in test},
            test,
            f"Fixed band [{band[0]:g}, {band[1]:g}] mph",
        )
    rolling = cfg.baselines.rolling_iqr
    if rolling.enabled:
        for n in rolling.windows:
            q = evaluation.rolling_iqr_predictions(records, [r.window_index for r in test], n)
            scored = [r for r in test if r.window_index in q]
            if not scored:
                continue
            score(
                f"Rolling IQR {n} window",
                {w: v[1] for w, v in q.items()},
                {w: (v[0], v[2]) for w, v in q.items()},
                scored,
                "History-only",
            )
    if cfg.model_path.exists():
        forest = _load_model(cfg, feature_cols)
        quartiles = _qrf_quartiles(forest, test)
        score(
            "QRF",
            {r.window_index: float(q[1]) for r, q in zip(test, quartiles)},
            {r.window_index: (float(q[0]), float(q[2])) for r, q in zip(test, quartiles)},
            test,
            "Quantile regression forest [Q25, Q75]",
        )
    if not results:
        raise CommandError("config", "no model file and every baseline disabled", "baselines")
    evaluation.write_metrics(results, out / "evaluation_metrics.csv")
    evaluation.write_comparison(results, out / "comparison.csv")
    table = evaluation.format_table(results)
    with atomic_writer(out / "evaluation.txt") as fh:
        fh.write(table)
    log.info("evaluate:\n%s", table)
    return results


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "recommend": cmd_recommend,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safespeed", description="Weather-aware safe-speed interval recommendation."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate a synthetic CV/RWIS/network scenario",
        "prepare": "parse, map-match, window and weather-align the inputs",
        "train": "fit the quantile regression forest on the training windows",
        "recommend": "write fused speed intervals for the test windows",
        "evaluate": "score the forest and the baselines on the test windows",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, default=None, help="run config (YAML or JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument(
            "--out", type=Path, default=None, help="output directory (data directory for synth)"
        )
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def _error_line(kind: str, key: str, message: str) -> str:
    return f"safespeed: error kind={kind} key={key} msg={json.dumps(message)}"


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "synth":
            cmd_synth(cfg, args.out)
        else:
            # --out replaces out_dir, so the default model path follows it.
            if args.out is not None:
                cfg.out_dir = str(args.out.resolve())
            out = cfg.out_path
            out.mkdir(parents=True, exist_ok=True)
            COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(_error_line("config", exc.key, str(exc)), file=sys.stderr)
        return 2
    except CommandError as exc:
        print(_error_line(exc.kind, exc.key, str(exc)), file=sys.stderr)
        return 1
    except pipeline.SchemaMismatch as exc:
        print(_error_line("input_schema", "-", str(exc)), file=sys.stderr)
        return 1
    except (ValidationError, SchemaError) as exc:
        print(_error_line("validation", "-", str(exc)), file=sys.stderr)
        return 1
    except OSError as exc:
        print(_error_line("io", "-", str(exc)), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
