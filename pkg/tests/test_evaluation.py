import pytest

from safespeed import evaluation as ev
from safespeed.core import ValidationError, WindowSample
from safespeed.pipeline import WindowRecord, observed_quantiles


def record(w, speeds, rain="NONE"):
    samples = tuple(WindowSample(w, f"J{k}", v, 1) for k, v in enumerate(speeds))
    q = observed_quantiles(samples)
    return WindowRecord(w, (0.0,), samples, *q, len(samples), rain, 0.8, 1500.0)


def test_picp_examples():
    assert ev.picp([(50, (40, 60)), (55, (50, 56))]) == 1.0
    assert ev.picp([(50, (49, 55)), (52, (49, 55)), (60, (49, 55))]) == pytest.approx(2 / 3)
    assert ev.picp([(49, (49, 55)), (55, (49, 55))]) == 1.0
    with pytest.raises(ValidationError):
        ev.picp([])


def test_mpiw_examples():
    assert ev.mpiw([(40, 50), (45, 55)]) == 10.0
    assert ev.mpiw([(52, 52)]) == 0.0
    band, _ = ev.posted_band(55, 0.10)
    assert ev.mpiw([band] * 17) == 11.0
    with pytest.raises(ValidationError):
        ev.mpiw([])


def test_mae_examples():
    assert ev.mae([(50, 55), (54, 53)]) == 3.0
    assert ev.mae([(50, 50), (61, 61)]) == 0.0
    assert ev.mae([(50, 50.5)]) == 0.5


def test_threshold_accuracy_examples():
    assert ev.threshold_accuracy([(50, 53), (50, 56)], 5) == 50.0
    assert ev.threshold_accuracy([(50, 55)], 5) == 100.0
    assert ev.threshold_accuracy([(50, 50), (40, 40)], 0.5) == 100.0


def test_evaluate_single_window():
    r = record(10, [50, 52])
    rep = ev.evaluate([r], {10: 51.0}, {10: (49.0, 53.0)})
    assert rep.picp_50 == 1.0 and rep.n_vehicle_samples == 2 and rep.n_windows == 1
    assert rep.mae_q50_mph == 0.0
    assert rep.accuracy_at == {5.0: 1.0, 6.0: 1.0}


def test_evaluate_perfect_median_and_weather_groups():
    rs = [record(1, [50, 60], "LIGHT_RAIN"), record(2, [44, 48, 52], "HEAVY_RAIN")]
    preds = {r.window_index: r.observed_q50 for r in rs}
    rep = ev.evaluate(rs, preds, {1: (0, 100), 2: (0, 100)})
    assert rep.mae_q50_mph == 0.0
    assert list(rep.by_weather) == ["rain"]
    assert rep.by_weather["rain"].n_windows == 2


def test_evaluate_reports_missing_windows():
    rs = [record(1, [50]), record(2, [51]), record(3, [52])]
    with pytest.raises(ValidationError, match=r"\[2, 3\]"):
        ev.evaluate(rs, {1: 50, 2: 51}, {1: (49, 51), 3: (50, 54)})


@pytest.mark.parametrize(
    "v_law,pct,band",
    [(55, 0.10, (49.5, 60.5)), (55, 0.0, (55, 55)), (60, 0.10, (54, 66))],
)
def test_posted_band_examples(v_law, pct, band):
    got, point = ev.posted_band(v_law, pct)
    assert got == pytest.approx(band, abs=1e-12) and point == v_law


def test_rolling_iqr_examples():
    history = [record(1, [40, 50]), record(2, [60, 70])]
    assert ev.rolling_iqr(history, 2, 3) == pytest.approx((47.5, 55, 62.5))
    assert ev.rolling_iqr(history, 1, 3) == pytest.approx((62.5, 65, 67.5))
    assert ev.rolling_iqr([], 6) is None
    assert ev.rolling_iqr([record(5, [55])], 3) == (55, 55, 55)
    with pytest.raises(ValidationError):
        ev.rolling_iqr(history, 0)


def test_rolling_iqr_never_looks_at_target_or_later():
    history = [record(1, [40]), record(2, [50]), record(3, [99]), record(4, [99])]
    assert ev.rolling_iqr(history, 10, 3) == pytest.approx((42.5, 45, 47.5))
    # Gaps count as windows: a stale record beyond N bins back is ignored.
    assert ev.rolling_iqr(history, 2, 7) is None


def test_rolling_predictions_skip_windows_without_history():
    history = [record(5, [50]), record(6, [52])]
    preds = ev.rolling_iqr_predictions(history, [5, 6, 7], 1)
    assert sorted(preds) == [6, 7]


def test_report_files(tmp_path):
    rs = [record(1, [50, 60]), record(2, [55, 56], "LIGHT_SNOW")]
    rep = ev.evaluate(rs, {1: 55, 2: 55}, {1: (49.5, 60.5), 2: (49.5, 60.5)})
    results = [ev.ModelResult("Posted", rep, 0, "Fixed band")]
    ev.write_metrics(results, tmp_path / "m.csv")
    ev.write_comparison(results, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].startswith("model,picp_50_vehicle,mpiw_mph_window,mae_q50_mph,accuracy_within_5mph")
    assert lines[1].startswith("Posted,1.000000,11.000000,")
    metrics = (tmp_path / "m.csv").read_text()
    assert "Posted,vehicle,snow,picp_50,1.000000" in metrics
    assert "11.00" in ev.format_table(results)
