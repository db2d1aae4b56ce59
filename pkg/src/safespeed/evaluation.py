"""Interval and point-accuracy metrics, plus the posted-band and rolling-IQR baselines."""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ValidationError
from .pipeline import WindowRecord, atomic_writer, empirical_quantiles

DEFAULT_DELTAS = (5.0, 6.0)
DEFAULT_WEATHER_GROUPS = {
    "NONE": "clear",
    "LIGHT_RAIN": "rain",
    "MODERATE_RAIN": "rain",
    "HEAVY_RAIN": "rain",
    "LIGHT_SNOW": "snow",
    "MODERATE_SNOW": "snow",
    "HEAVY_SNOW": "snow",
}


def picp(observations: Sequence[tuple[float, tuple[float, float]]]) -> float:
    """Share of observations inside their (closed) interval."""
    if not observations:
        raise ValidationError("picp needs at least one observation")
    hits = 0
    for y, (lo, hi) in observations:
        if lo > hi:
            raise ValidationError(f"interval lower bound {lo} > upper bound {hi}")
        hits += lo <= y <= hi
    return hits / len(observations)


def mpiw(intervals: Sequence[tuple[float, float]]) -> float:
    if not intervals:
        raise ValidationError("mpiw needs at least one interval")
    return float(np.mean([hi - lo for lo, hi in intervals]))


def mae(pairs: Sequence[tuple[float, float]]) -> float:
    if not pairs:
        raise ValidationError("mae needs at least one pair")
    return float(np.mean([abs(y - yhat) for y, yhat in pairs]))


def threshold_accuracy(pairs: Sequence[tuple[float, float]], delta: float) -> float:
    """Percentage (0-100) of pairs whose absolute error is at most ``delta``."""
    if not pairs:
        raise ValidationError("threshold_accuracy needs at least one pair")
    if delta < 0:
        raise ValidationError("delta must be >= 0")
    return 100.0 * sum(abs(y - yhat) <= delta for y, yhat in pairs) / len(pairs)


@dataclass(frozen=True)
class EvalReport:
    picp_50: float
    mpiw_mph: float
    mae_q50_mph: float
    accuracy_at: dict[float, float]  # delta (mph) -> fraction in [0, 1]
    n_vehicle_samples: int
    n_windows: int
    by_weather: dict[str, "EvalReport"] = field(default_factory=dict)


def _metrics(records, predictions, intervals, deltas) -> EvalReport:
    vehicle = [
        (s.mean_speed_mph, intervals[r.window_index]) for r in records for s in r.samples
    ]
    pairs = [(r.observed_q50, predictions[r.window_index]) for r in records]
    return EvalReport(
        picp_50=picp(vehicle),
        mpiw_mph=mpiw([intervals[r.window_index] for r in records]),
        mae_q50_mph=mae(pairs),
        accuracy_at={float(d): threshold_accuracy(pairs, d) / 100.0 for d in deltas},
        n_vehicle_samples=len(vehicle),
        n_windows=len(records),
    )


def evaluate(
    records: Sequence[WindowRecord],
    predictions: Mapping[int, float],
    intervals: Mapping[int, tuple[float, float]],
    deltas: Iterable[float] = DEFAULT_DELTAS,
    weather_groups: Mapping[str, str] | None = None,
) -> EvalReport:
    """Vehicle-level PICP and window-level MPIW / MAE / accuracy.

    ``predictions`` maps window index to the predicted median and
    ``intervals`` to the (lower, upper) band scored for that window.
    """
    if not records:
        raise ValidationError("nothing to evaluate")
    missing = sorted(
        r.window_index
        for r in records
        if r.window_index not in predictions or r.window_index not in intervals
    )
    if missing:
        raise ValidationError(f"no prediction/interval for windows: {missing}")
    deltas = tuple(deltas)
    groups = DEFAULT_WEATHER_GROUPS if weather_groups is None else weather_groups
    overall = _metrics(records, predictions, intervals, deltas)
    buckets: dict[str, list[WindowRecord]] = {}
    for r in records:
        buckets.setdefault(groups.get(r.rain_state, "unknown"), []).append(r)
    by_weather = {
        g: _metrics(rs, predictions, intervals, deltas) for g, rs in sorted(buckets.items())
    }
    return EvalReport(**{**overall.__dict__, "by_weather": by_weather})


# -- baselines ---------------------------------------------------------------


def posted_band(v_law: float, pct: float) -> tuple[tuple[float, float], float]:
    if v_law < 0 or pct < 0:
        raise ValidationError("v_law and pct must be >= 0")
    # Symmetric half-width keeps the band width equal to 2 * v_law * pct in floats.
    half = v_law * pct
    return (v_law - half, v_law + half), v_law


def rolling_iqr(
    history: Sequence[WindowRecord], n_windows: int, target_index: int | None = None
) -> tuple[float, float, float] | None:
    """Quartiles of vehicle speeds pooled over the ``n_windows`` bins before the target.

    ``history`` must be ordered by window index. The target defaults to the
    bin after the last history record. Returns None when nothing was observed.
    """
    if n_windows < 1:
        raise ValidationError("rolling window count must be >= 1")
    if not history:
        return None
    if target_index is None:
        target_index = history[-1].window_index + 1
    keys = [r.window_index for r in history]
    lo = bisect.bisect_left(keys, target_index - n_windows)
    hi = bisect.bisect_left(keys, target_index)
    pooled = [s.mean_speed_mph for r in history[lo:hi] for s in r.samples]
    if not pooled:
        return None
    return empirical_quantiles(pooled, (0.25, 0.5, 0.75))


def rolling_iqr_predictions(
    history: Sequence[WindowRecord], targets: Iterable[int], n_windows: int
) -> dict[int, tuple[float, float, float]]:
    """Rolling-IQR quartiles for each target window that has any history."""
    history = sorted(history, key=lambda r: r.window_index)
    out = {}
    for w in targets:
        q = rolling_iqr(history, n_windows, w)
        if q is not None:
            out[w] = q
    return out


# -- reporting ---------------------------------------------------------------


@dataclass(frozen=True)
class ModelResult:
    name: str
    report: EvalReport
    n_excluded: int = 0
    notes: str = ""


def _f(x: float) -> str:
    return f"{x:.6f}"


def metric_rows(results: Sequence[ModelResult]) -> list[tuple[str, str, str, str, str]]:
    """Long format: (model, scope, weather_group, metric, value)."""
    rows = []
    for res in results:
        groups = [("all", res.report), *res.report.by_weather.items()]
        for group, rep in groups:
            rows.append((res.name, "vehicle", group, "picp_50", _f(rep.picp_50)))
            rows.append((res.name, "vehicle", group, "n_vehicle_samples", str(rep.n_vehicle_samples)))
            rows.append((res.name, "window", group, "mpiw_mph", _f(rep.mpiw_mph)))
            rows.append((res.name, "window", group, "mae_q50_mph", _f(rep.mae_q50_mph)))
            for d, acc in rep.accuracy_at.items():
                rows.append((res.name, "window", group, f"accuracy_within_{d:g}mph", _f(acc)))
            rows.append((res.name, "window", group, "n_windows", str(rep.n_windows)))
        rows.append((res.name, "window", "all", "n_excluded", str(res.n_excluded)))
    return rows


def write_metrics(results: Sequence[ModelResult], path) -> None:
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("model", "scope", "weather_group", "metric", "value"))
        w.writerows(metric_rows(results))


def comparison_rows(results: Sequence[ModelResult]) -> tuple[list[str], list[list[str]]]:
    deltas = sorted({d for r in results for d in r.report.accuracy_at})
    header = ["model", "picp_50_vehicle", "mpiw_mph_window", "mae_q50_mph"]
    header += [f"accuracy_within_{d:g}mph" for d in deltas]
    header += ["n_windows", "n_vehicle_samples", "n_excluded", "notes"]
    rows = []
    for r in results:
        rep = r.report
        row = [r.name, _f(rep.picp_50), _f(rep.mpiw_mph), _f(rep.mae_q50_mph)]
        row += [_f(rep.accuracy_at[d]) if d in rep.accuracy_at else "" for d in deltas]
        row += [str(rep.n_windows), str(rep.n_vehicle_samples), str(r.n_excluded), r.notes]
        rows.append(row)
    return header, rows


def write_comparison(results: Sequence[ModelResult], path) -> None:
    header, rows = comparison_rows(results)
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def format_table(results: Sequence[ModelResult]) -> str:
    """Plain-text comparison table (percentages for PICP and accuracy)."""
    deltas = sorted({d for r in results for d in r.report.accuracy_at})
    header = ["Method", "PICP(50%)", "MPIW(mph)", "MAE(Q50)"]
    header += [f"Acc(+-{d:g})" for d in deltas]
    header += ["Windows", "Excluded"]
    body = []
    for r in results:
        rep = r.report
        row = [r.name, f"{100 * rep.picp_50:.2f}%", f"{rep.mpiw_mph:.2f}", f"{rep.mae_q50_mph:.2f}"]
        row += [f"{100 * rep.accuracy_at[d]:.2f}%" if d in rep.accuracy_at else "-" for d in deltas]
        row += [str(rep.n_windows), str(r.n_excluded)]
        body.append(row)
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
    for r in results:
        if r.report.by_weather:
            lines.append("")
            lines.append(f"{r.name} by weather:")
            for g, rep in r.report.by_weather.items():
                accs = " ".join(f"acc(+-{d:g})={100 * a:.2f}%" for d, a in rep.accuracy_at.items())
                lines.append(
                    f"  {g:<8} windows={rep.n_windows:<6} picp={100 * rep.picp_50:.2f}% "
                    f"mpiw={rep.mpiw_mph:.2f} mae={rep.mae_q50_mph:.2f} {accs}"
                )
    return "\n".join(lines) + "\n"
