import argparse
import json

import pytest

from spatial_holes.cli import main, parse_snr


def test_parse_snr():
    assert parse_snr("0:30:5") == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    assert parse_snr("10,20") == (10.0, 20.0)
    with pytest.raises(argparse.ArgumentTypeError):
        parse_snr("0:10")
    with pytest.raises(argparse.ArgumentTypeError):
        parse_snr("a,b")


def test_simulate_and_plot(tmp_path, capsys):
    run = tmp_path / "run"
    rc = main(["simulate", "--users", "4", "--rx", "2", "--bs", "4", "--active", "1",
               "--subcarriers", "8", "--taps", "2", "--snr", "10,20", "--trials", "3",
               "--dump-trials", "--out", str(run)])
    assert rc == 0
    for name in ("metrics.csv", "trials.csv.gz", "config.json", "fig_ser.png"):
        assert (run / name).exists()
    assert json.loads((run / "config.json").read_text())["config"]["n_rx"] == 2
    assert main(["plot", str(run), "--out", str(tmp_path / "figs")]) == 0
    assert (tmp_path / "figs" / "fig_activity_error.png").exists()
    assert "wrote" in capsys.readouterr().out


def test_configuration_error_exit_code(tmp_path, capsys):
    rc = main(["simulate", "--active", "9", "--trials", "1", "--out", str(tmp_path)])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err


def test_selftest_fast(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2
