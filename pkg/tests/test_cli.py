import csv
import json

import pytest

from orthotact.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from orthotact.config import SystemConfig
from orthotact.harness import scaled_config


@pytest.fixture
def pressure(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("0,0,0,0\n0,0,0,0\n0,0,0,40\n0,0,0,0\n\n"
                    "0,0,0,0\n0,90,0,0\n0,0,0,40\n0,0,0,0\n")
    return path


def test_config_init(tmp_path, capsys):
    out = tmp_path / "cfg.json"
    assert main(["config-init", "--out", str(out), "--layout", "2x8"]) == EXIT_OK
    cfg = SystemConfig.load(out)
    assert (cfg.node_count, cfg.rows, cfg.cols) == (16, 2, 8)
    assert main(["config-init"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["node_count"] == 16


def test_codegen(tmp_path, capsys):
    out = tmp_path / "book.json"
    assert main(["codegen", "100", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["order"] == 128 and 0 not in doc["assignment"]
    assert "max cross-dot 0" in capsys.readouterr().out


def test_simulate_then_decode(tmp_path, pressure, capsys):
    trace = tmp_path / "trace.csv"
    assert main(["simulate", "--pressure", str(pressure), "--out", str(trace)]) == EXIT_OK
    truth = json.loads((tmp_path / "trace.truth.json").read_text())
    assert len(truth["frames"]) == 2
    assert (tmp_path / "trace.png").stat().st_size > 0
    dec = tmp_path / "dec.json"
    heat = tmp_path / "heat.csv"
    assert main(["decode", "--trace", str(trace), "--out", str(dec), "--heatmap", str(heat)]) == EXIT_OK
    frames = json.loads(dec.read_text())
    assert [f["frame_index"] for f in frames] == [0, 1]
    for got, want in zip(frames, truth["frames"]):
        sent = {n["id"]: n["word_bin"] for n in want["nodes"] if n["active"]}
        decoded = {n["id"]: n["word_bin"] for n in got["nodes"] if n["status"] == "word"}
        assert decoded == sent
    assert (tmp_path / "dec.png").exists() and (tmp_path / "heat.png").exists()
    grid = [[float(x) for x in row] for row in csv.reader(heat.read_text().splitlines())]
    assert grid[2][3] == pytest.approx(40, abs=0.5)
    assert grid[1][1] == pytest.approx(90, abs=1.0)
    assert "frame 1" in capsys.readouterr().out


def test_no_plot(tmp_path, pressure):
    trace = tmp_path / "t.csv"
    assert main(["simulate", "--pressure", str(pressure), "--out", str(trace), "--no-plot"]) == EXIT_OK
    assert not (tmp_path / "t.png").exists()


def test_roundtrip_pass(capsys):
    assert main(["roundtrip", "--trials", "5"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("PASS")


def test_roundtrip_fail_exits_1(tmp_path, capsys):
    base = SystemConfig().with_(decoder_overrides={"chip_window_frac": 0.3})
    cfg_path = tmp_path / "tight.json"
    scaled_config(base, 4, 10, 8e-3, samples_per_chip=10, skip_dc_row=True).save(cfg_path)
    rc = main(["roundtrip", "--config", str(cfg_path), "--trials", "40", "--noise-frac", "3", "--p-active", "0.75"])
    assert rc == EXIT_VERIFY
    assert capsys.readouterr().out.startswith("FAIL")


def test_sweeps(tmp_path):
    scaling = tmp_path / "scaling.csv"
    assert main(["sweep-scaling", "--nodes", "16,64", "--trials", "1", "--out", str(scaling)]) == EXIT_OK
    rows = list(csv.DictReader(scaling.open()))
    assert [r["period_ms"] for r in rows] == ["12.8", "12.8"]
    assert (tmp_path / "scaling.png").exists()
    ber = tmp_path / "ber.csv"
    rc = main(["sweep-noise", "--noise", "0,0.05", "--adc-bits", "ideal,12", "--trials", "2", "--out", str(ber)])
    assert rc == EXIT_OK
    assert len(list(csv.DictReader(ber.open()))) == 4
    assert (tmp_path / "ber.png").exists()


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["codegen", "0", "--out", "x.json"],
    ["sweep-noise", "--noise", "a,b", "--out", "x.csv"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_USAGE


def test_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"layout": [3, 3]}')
    assert main(["roundtrip", "--config", str(cfg), "--trials", "1"]) == EXIT_USAGE


def test_io_errors(tmp_path):
    assert main(["decode", "--trace", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "d.json")]) == EXIT_IO
    bad = tmp_path / "bad.csv"
    bad.write_text("time_s,voltage_v\n0,0\n1e-6,zz\n")
    assert main(["decode", "--trace", str(bad), "--out", str(tmp_path / "d.json")]) == EXIT_IO
