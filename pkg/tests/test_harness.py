import gzip

import numpy as np
import pytest

from spatial_holes.harness import (ExperimentConfig, TrialRecord, aggregate, draw_trial,
                                   run_experiment, run_trial, sigma_sq)
from spatial_holes.report import METRICS_HEADER, emit_outputs, read_metrics, write_metrics
from spatial_holes.signal import ConfigurationError

SMALL = ExperimentConfig(n_users=6, n_rx=3, n_bs=6, n_active=2, n_subcarriers=16, n_taps=4,
                         snr_grid_db=(5.0, 20.0), n_trials=12, master_seed=7)


def rec(trial, snr, valid=True, cs="exact", mmse="exact", e=(0, 0, 0)):
    return TrialRecord(trial, snr, valid, "0110", "", "", cs, mmse, "converged", 1, 10, *e)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(n_active=9)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(n_bs=4)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(n_trials=0)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(alphabet="8psk")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(n_subcarriers=4, n_taps=10)


def test_sigma_sq():
    assert sigma_sq(10.0) == pytest.approx(0.1)
    assert sigma_sq(float("inf")) == 0.0


def test_draw_trial_deterministic_and_independent_of_order():
    a = draw_trial(SMALL, 3)
    draw_trial(SMALL, 5)
    b = draw_trial(SMALL, 3)
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1].blocks, b[1].blocks)
    np.testing.assert_array_equal(a[2].responses, b[2].responses)
    np.testing.assert_array_equal(a[3], b[3])
    assert len(a[0].pattern) == 2


def test_single_trial_run():
    recs = run_trial(SMALL, 0)
    assert [r.snr_db for r in recs] == [5.0, 20.0]
    assert all(r.n_symbols == 32 for r in recs)
    agg = aggregate(recs, SMALL.snr_grid_db)
    assert all(p.n_trials == 1 for p in agg.points)


def test_aggregate_accounting():
    recs = [rec(0, 5.0), rec(1, 5.0, cs="false_alarm"), rec(2, 5.0, cs="misdetection"),
            rec(3, 5.0, cs="mixed", e=(4, 2, 0)), rec(4, 5.0, valid=False)]
    p = aggregate(recs, [5.0]).point(5.0)
    assert p.n_trials == 5 and p.n_valid == 4 and p.invalid == 1
    parts = [p.prob("cs", k) for k in ("false_alarm", "misdetection", "mixed")]
    assert sum(parts) == pytest.approx(p.prob("cs", "error")) == pytest.approx(0.75)
    assert p.prob("mmse", "error") == 0.0
    assert p.ser("cs") == pytest.approx(4 / 40) and p.ser("mmse") == pytest.approx(2 / 40)
    # per-trial SER samples 0, 0, 0, 0.4: mean 0.1, population var 0.03
    assert p.ser_halfwidth("cs") == pytest.approx(1.959963984540054 * np.sqrt(0.03 / 4))


def test_aggregate_empty_point_is_nan():
    p = aggregate([], [0.0]).point(0.0)
    assert np.isnan(p.prob("cs", "error")) and np.isnan(p.ser("cs"))


def test_ci_shrinks_with_trials():
    widths = []
    for n in (100, 400, 1600):
        recs = [rec(t, 0.0, cs="misdetection" if t % 4 == 0 else "exact") for t in range(n)]
        widths.append(aggregate(recs, [0.0]).point(0.0).prob_halfwidth("cs", "error"))
    assert widths[0] > widths[1] > widths[2]
    assert widths[0] / widths[1] == pytest.approx(2.0)


def test_record_order_does_not_matter():
    recs = run_trial(SMALL, 0) + run_trial(SMALL, 1)
    a = aggregate(recs, SMALL.snr_grid_db).rows()
    b = aggregate(recs[::-1], SMALL.snr_grid_db).rows()
    assert a == b


def test_rerun_is_byte_identical(tmp_path):
    agg1, recs1 = run_experiment(SMALL)
    agg2, recs2 = run_experiment(SMALL, workers=2)
    p1 = emit_outputs(agg1, tmp_path / "a", SMALL, recs1, plots=False)
    p2 = emit_outputs(agg2, tmp_path / "b", SMALL, recs2, plots=False)
    assert p1["metrics"].read_bytes() == p2["metrics"].read_bytes()
    assert p1["trials"].read_bytes() == p2["trials"].read_bytes()
    lines = gzip.decompress(p1["trials"].read_bytes()).decode().splitlines()
    assert len(lines) == 1 + SMALL.n_trials * len(SMALL.snr_grid_db)


def test_metrics_csv_shape(tmp_path):
    agg, recs = run_experiment(SMALL)
    paths = emit_outputs(agg, tmp_path, SMALL, plots=True)
    lines = paths["metrics"].read_text().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    # per SNR: 2 detectors x 4 metrics + 3 SER rows + invalid count
    assert len(lines) == 1 + 2 * 12
    table = read_metrics(paths["metrics"])
    np.testing.assert_array_equal(table[("cs", "ser")][0], [5.0, 20.0])
    for key in ("fig_activity", "fig_fa_md", "fig_ser", "config"):
        assert paths[key].exists()


def test_empty_aggregate_writes_header_only(tmp_path):
    p = write_metrics(None, tmp_path / "m.csv")
    assert p.read_text() == ",".join(METRICS_HEADER) + "\n"
    paths = emit_outputs(aggregate([], []), tmp_path / "e")
    assert paths["metrics"].read_text() == ",".join(METRICS_HEADER) + "\n"
