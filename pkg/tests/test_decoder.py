from dataclasses import replace

import numpy as np
import pytest

from orthotact.channel import AnalogTrace
from orthotact.codebook import assign_codes, sylvester_hadamard
from orthotact.decoder import (
    DecoderConfig,
    DecoderConfigError,
    ResolutionError,
    Reconstructor,
    chip_matrix,
    correlate,
    decide,
    decode_frame,
    decode_trace,
    estimate_baseline,
    frame_sync,
    smooth_activity,
)
from orthotact.encoder import encode_word
from orthotact.sensor import SensorModel
from orthotact.simulate import simulate_words


def _chips(book, words: dict[int, int], k: int, amplitude: float, mapping="bipolar"):
    """Ideal k x n chip observations relative to idle, for the listed active nodes."""
    total = np.zeros(k * book.order)
    for node, w in words.items():
        s = encode_word(book.code(node), w, k).astype(float)
        total += amplitude * (s + 1 if mapping == "unipolar" else s)
    return total.reshape(k, book.order)


def test_correlate_and_decide():
    code = sylvester_hadamard(8)[3]
    assert correlate(0.15 * code, code) == pytest.approx(1.2)
    assert correlate(0.15 * code, sylvester_hadamard(8)[5]) == 0.0
    assert decide(1.2, 8, 0.15) == 1
    assert decide(-1.2, 8, 0.15) == 0
    assert decide(0.59, 8, 0.15) is None
    assert decide(0.6, 8, 0.15) == 1
    with pytest.raises(ValueError):
        decide(1.0, 8, 0.0)
    with pytest.raises(ValueError):
        correlate([1, 2], [1, 2, 3])


def test_decode_frame_bipolar():
    book = assign_codes(5)
    cfg = DecoderConfig(k_bits=6, chip_amplitude=0.2, mapping="bipolar")
    chips = _chips(book, {0: 41, 3: 7}, 6, 0.2)
    frame = decode_frame(chips, book, cfg)
    assert frame.words() == {0: 41, 3: 7}
    assert [o.status for o in frame.nodes] == ["word", "inactive", "inactive", "word", "inactive"]
    assert frame.nodes[0].margin == pytest.approx(1.0)


def test_decode_frame_unipolar_dc_row():
    book = assign_codes(4, skip_dc_row=False)
    cfg = DecoderConfig(k_bits=4, chip_amplitude=0.15, mapping="unipolar")
    chips = _chips(book, {0: 0b1011, 2: 5}, 4, 0.15, "unipolar")
    assert decode_frame(chips, book, cfg).words() == {0: 0b1011, 2: 5}
    # word 0 on the all-ones row is indistinguishable from silence
    chips = _chips(book, {0: 0, 2: 5}, 4, 0.15, "unipolar")
    assert decode_frame(chips, book, cfg).words() == {2: 5}


def test_partial_activity_is_a_fault():
    book = assign_codes(3)
    cfg = DecoderConfig(k_bits=4, chip_amplitude=0.1, mapping="bipolar")
    chips = _chips(book, {1: 9}, 4, 0.1)
    chips[2:] = 0.0
    frame = decode_frame(chips, book, cfg)
    assert frame.faults() == [1]
    assert frame.words() == {}


def test_decode_frame_shape_checked():
    book = assign_codes(3)
    with pytest.raises(ValueError):
        decode_frame(np.zeros((3, 4)), book, DecoderConfig(k_bits=4))


def test_config_validation():
    with pytest.raises(DecoderConfigError):
        DecoderConfig(chip_window_frac=0)
    with pytest.raises(DecoderConfigError):
        DecoderConfig(activity_margin_frac=1.0)
    with pytest.raises(DecoderConfigError):
        DecoderConfig(sign_convention="sideways")


def test_auto_threshold():
    assert DecoderConfig(chip_amplitude=0.15).threshold == pytest.approx(0.15)
    assert DecoderConfig(chip_amplitude=0.15, mapping="bipolar").threshold == pytest.approx(0.075)
    assert DecoderConfig(quiet_threshold=0.01).threshold == 0.01


def test_min_gap_sits_between_inner_and_outer_silences():
    cfg = DecoderConfig()
    gap = cfg.gap_samples(16, 400e3) / 400e3
    assert 16 * 50e-6 * 1.1 < gap < 12.8e-3 - 8e-3 * 1.1


def test_smooth_keeps_step_centre():
    x = np.r_[np.zeros(50), np.ones(50)]
    for w in (4, 5, 10):
        sm = smooth_activity(x, w)
        assert np.nonzero(sm >= 0.5)[0][0] in (49, 50)


def test_baseline_hint_beats_mode():
    # a long constant level outlasts the idle run; blind estimation picks it
    v = np.r_[np.full(800, -0.6), np.zeros(480)]
    assert estimate_baseline(v, 0.15) == pytest.approx(-0.6)
    assert estimate_baseline(v, 0.15, hint=0.0) == 0.0


def test_reference_frames_decode(ref_cfg):
    words = np.zeros(16, dtype=np.int64)
    active = np.zeros(16, dtype=bool)
    words[[4, 13]] = [560, 665]
    active[[4, 13]] = True
    trace = simulate_words(ref_cfg, words, active, seed=3)
    frames = decode_trace(trace, ref_cfg.codebook(), ref_cfg.decoder_config())
    assert len(frames) == 1
    assert frames[0].words() == {4: 560, 13: 665}
    assert frames[0].flags == []


def test_sign_convention_matters(ref_cfg):
    words = np.arange(16) * 60 + 3
    active = np.ones(16, dtype=bool)
    trace = simulate_words(ref_cfg, words, active, seed=0)
    book = ref_cfg.codebook()
    good = decode_trace(trace, book, ref_cfg.decoder_config())
    assert good[0].words() == dict(enumerate(words.tolist()))
    flipped = replace(ref_cfg.decoder_config(), sign_convention="direct", idle_level=None)
    assert decode_trace(trace, book, flipped)[0].words() != good[0].words()


def test_multi_frame_trace_indices(ref_cfg):
    book = ref_cfg.codebook()
    traces = []
    for f in range(3):
        words = np.full(16, 100 + f)
        active = np.zeros(16, dtype=bool)
        active[f] = True
        traces.append(simulate_words(ref_cfg, words, active, frame_index=f, seed=9, book=book))
    trace = AnalogTrace.concatenate(traces)
    # a lone all-ones-row node sends nothing for leading zero bits, so only
    # a known frame origin pins its start
    cfg = replace(ref_cfg.decoder_config(), frame_origin=0.0)
    frames = decode_trace(trace, book, cfg)
    assert [f.frame_index for f in frames] == [0, 1, 2]
    assert [f.words() for f in frames] == [{0: 100}, {1: 101}, {2: 102}]


def test_quiet_trace_has_no_frames(ref_cfg):
    trace = simulate_words(ref_cfg, np.zeros(16, dtype=np.int64), np.zeros(16, dtype=bool))
    assert decode_trace(trace, ref_cfg.codebook(), ref_cfg.decoder_config()) == []
    assert frame_sync(trace, ref_cfg.decoder_config(), 16) == []


def test_truncated_frame_is_flagged(ref_cfg):
    words = np.full(16, 700)
    active = np.ones(16, dtype=bool)
    trace = simulate_words(ref_cfg, words, active)
    cut = AnalogTrace(trace.sample_rate, trace.samples[:3000], trace.t0)
    segs = frame_sync(cut, ref_cfg.decoder_config(), 16)
    assert len(segs) == 1 and segs[0].flagged


def test_chip_matrix_needs_resolution(ref_cfg):
    trace = simulate_words(ref_cfg, np.full(16, 5), np.ones(16, dtype=bool))
    cfg = replace(ref_cfg.decoder_config(), chip_window_frac=0.05)
    with pytest.raises(ResolutionError):
        chip_matrix(trace, 0.0, cfg, 16)
    m = chip_matrix(trace, 0.0, ref_cfg.decoder_config(), 16)
    assert m.shape == (10, 16)


def test_reconstructor_holds_last_value(ref_cfg):
    book = ref_cfg.codebook()
    cfg = ref_cfg.decoder_config()
    rec = Reconstructor(SensorModel(), 4, 4)
    words = np.zeros(16, dtype=np.int64)
    active = np.zeros(16, dtype=bool)
    words[5], active[5] = 512, True
    first = rec.update(decode_trace(simulate_words(ref_cfg, words, active), book, cfg)[0])
    p5 = first.pressure.values[1, 1]
    assert p5 > 0
    words[5], words[6] = 0, 900
    active[5], active[6] = False, True
    second = rec.update(decode_trace(simulate_words(ref_cfg, words, active), book, cfg)[0])
    assert second.pressure.values[1, 1] == p5
    assert second.pressure.values[1, 2] > 0


def test_to_dict_format(ref_cfg):
    words = np.zeros(16, dtype=np.int64)
    active = np.zeros(16, dtype=bool)
    words[11], active[11] = 366, True
    frame = decode_trace(simulate_words(ref_cfg, words, active), ref_cfg.codebook(),
                         ref_cfg.decoder_config())[0]
    doc = frame.to_dict(SensorModel(), 10)
    node = doc["nodes"][11]
    assert node["status"] == "word"
    assert node["word_bin"] == "0101101110"
    assert node["voltage_v"] == pytest.approx(366 / 1024 * 3.3, abs=1e-6)
    assert doc["nodes"][0]["word_bin"] is None
