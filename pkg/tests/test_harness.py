import csv

import numpy as np
import pytest

from orthotact.config import SystemConfig
from orthotact.decoder import DecodedFrame, NodeOutcome
from orthotact.harness import (
    BER_FIELDS,
    SCALING_FIELDS,
    guarantee_bound,
    random_frame,
    roundtrip,
    scaled_config,
    score,
    sweep_noise,
    sweep_scaling,
    write_report,
)
from orthotact.simulate import FrameTruth


def _frame(index, statuses):
    nodes = []
    for i, s in enumerate(statuses):
        if isinstance(s, int):
            nodes.append(NodeOutcome(i, "word", s, np.zeros(1), 1.0))
        else:
            nodes.append(NodeOutcome(i, s, None, np.zeros(1), None))
    return DecodedFrame(index, 0.0, 0.0, nodes)


TRUTH = FrameTruth(0, np.array([5, 0, 9, 3]), np.array([True, False, True, False]))


def test_score_exact():
    r = score([_frame(0, [5, "inactive", 9, "inactive"])], TRUTH, 4)
    assert r["exact"] and r["bits"] == 8 and r["bit_errors"] == 0


def test_score_counts_bit_flips_missing_and_ghosts():
    r = score([_frame(0, [4, "fault", "inactive", 3])], TRUTH, 4)
    assert r["bit_errors"] == 1 + 4
    assert r["missing"] == [2]
    assert r["ghosts"] == 2
    assert r["node_errors"] == 4


def test_score_ignores_other_frames_and_merges_duplicates():
    other = _frame(1, [0, 1, 2, 3])
    assert score([_frame(0, [5, "inactive", 9, "inactive"]), other], TRUTH, 4)["exact"]
    dup = _frame(0, [7, "inactive", "inactive", "inactive"])
    r = score([_frame(0, [5, "inactive", 9, "inactive"]), dup], TRUTH, 4)
    assert r["bit_errors"] == 1 and r["node_errors"] == 1
    assert score([], TRUTH, 4)["bit_errors"] == 8


def test_random_frame_avoids_silent_dc_word():
    cfg = SystemConfig()
    rng = np.random.default_rng(0)
    for _ in range(300):
        words, _ = random_frame(cfg, rng, 1.0)
        assert words[0] >= 1


def test_guarantee_bound():
    assert guarantee_bound(SystemConfig()) == pytest.approx(0.075)


def test_roundtrip_clean_and_bounded_noise():
    cfg = SystemConfig()
    assert roundtrip(cfg, 10, seed=1).ok
    s = roundtrip(cfg, 10, seed=2, noise_bound_frac=0.9, p_active=0.8)
    assert s.ok and s.line().startswith("PASS")


def test_scaled_config_keeps_frame_length():
    for n in (4, 100, 1024):
        cfg = scaled_config(SystemConfig(), n, 10, 8e-3)
        assert cfg.encoder.k_bits * cfg.order * cfg.encoder.chip_duration == pytest.approx(8e-3)
        assert cfg.channel.sample_rate * cfg.encoder.chip_duration == pytest.approx(20)


def test_sweep_scaling_rows():
    # T is 50 us at 16 nodes and 12.5 us at 64
    rows = sweep_scaling(SystemConfig(), [16, 64], trials=1, t_floor=20e-6)
    assert [r["order"] for r in rows] == [16, 64]
    assert rows[0]["feasible"] and not rows[1]["feasible"]
    assert all(r["decode_ok_rate"] == 1.0 and r["wall_time_s"] == "" for r in rows)


def test_sweep_noise_is_factorial(tmp_path):
    rows = sweep_noise(SystemConfig(), [0.0, 0.02], [0.0], [None, 12], trials=2)
    assert len(rows) == 4
    assert {r["channel_adc_bits"] for r in rows} == {"", 12}
    path = tmp_path / "ber.csv"
    write_report(rows, path, BER_FIELDS)
    with open(path) as fh:
        back = list(csv.DictReader(fh))
    assert list(back[0]) == BER_FIELDS
    assert back[0]["noise_level"] == "0"
    with pytest.raises(ValueError):
        sweep_noise(SystemConfig(), [], [0.0], [None])


def test_write_report_formats(tmp_path):
    path = tmp_path / "s.csv"
    write_report([{"n_nodes": 4, "T_seconds": 1 / 3, "feasible": True}], path, SCALING_FIELDS)
    line = path.read_text().splitlines()[1]
    assert line.startswith("4,,0.3333333333,")
    assert ",true," in line
