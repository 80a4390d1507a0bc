"""Property tests for the invariants the system relies on."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orthotact.codebook import assign_codes, fwht, sylvester_hadamard
from orthotact.decoder import DecoderConfig, decode_frame
from orthotact.encoder import bits_to_word, encode_word, word_bits
from orthotact.sensor import SensorModel, adc_quantize, pressure_to_voltage, voltage_to_pressure, word_to_voltage

orders = st.sampled_from([1, 2, 4, 8, 16, 32, 64])
finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.integers(1, 16).flatmap(lambda k: st.tuples(st.just(k), st.integers(0, 2**k - 1))))
def test_word_bits_round_trip(kw):
    k, w = kw
    assert bits_to_word(word_bits(w, k)) == w


@given(orders.flatmap(lambda n: arrays(float, (3, n), elements=finite)))
def test_fwht_matches_matrix_and_inverts(x):
    n = x.shape[1]
    h = sylvester_hadamard(n)
    np.testing.assert_allclose(fwht(x), x @ h.T, atol=1e-9)
    np.testing.assert_allclose(fwht(fwht(x)) / n, x, atol=1e-9)


@st.composite
def frames(draw):
    n_nodes = draw(st.integers(1, 40))
    skip = draw(st.booleans())
    mapping = draw(st.sampled_from(["unipolar", "bipolar"]))
    k = draw(st.integers(1, 12))
    words = draw(st.lists(st.integers(0, 2**k - 1), min_size=n_nodes, max_size=n_nodes))
    active = draw(st.lists(st.booleans(), min_size=n_nodes, max_size=n_nodes))
    return n_nodes, skip, mapping, k, words, active


def _observe(book, mapping, k, words, active, amp):
    total = np.zeros(k * book.order)
    for i, (w, on) in enumerate(zip(words, active)):
        if on:
            s = encode_word(book.code(i), w, k).astype(float)
            total += amp * (s + 1 if mapping == "unipolar" else s)
    return total.reshape(k, book.order)


def _expected(book, mapping, words, active):
    out = {i: w for i, (w, on) in enumerate(zip(words, active)) if on}
    # on-off keying on the all-ones row: word 0 looks like silence
    if mapping == "unipolar" and book.dc_node is not None and out.get(book.dc_node) == 0:
        del out[book.dc_node]
    return out


@settings(max_examples=150, deadline=None)
@given(frames())
def test_superposition_decodes_exactly(frame):
    n_nodes, skip, mapping, k, words, active = frame
    book = assign_codes(n_nodes, skip)
    cfg = DecoderConfig(k_bits=k, chip_amplitude=0.15, mapping=mapping)
    chips = _observe(book, mapping, k, words, active, 0.15)
    assert decode_frame(chips, book, cfg).words() == _expected(book, mapping, words, active)


@settings(max_examples=150, deadline=None)
@given(frames(), st.integers(0, 2**32 - 1), st.floats(0.0, 0.999))
def test_bounded_noise_leaves_decisions_unchanged(frame, seed, frac):
    n_nodes, skip, mapping, k, words, active = frame
    book = assign_codes(n_nodes, skip)
    cfg = DecoderConfig(k_bits=k, chip_amplitude=0.15, mapping=mapping)
    clean = _observe(book, mapping, k, words, active, 0.15)
    bound = frac * cfg.activity_margin_frac * 0.15
    noise = np.random.default_rng(seed).uniform(-bound, bound, clean.shape)
    assert (decode_frame(clean + noise, book, cfg).words()
            == decode_frame(clean, book, cfg).words())


model = SensorModel()


@given(st.floats(0.0, model.p_max))
def test_sensor_inverse(p):
    assert abs(voltage_to_pressure(model, pressure_to_voltage(model, p)) - p) < 1e-9


@given(st.floats(0.0, model.vref))
def test_adc_error_within_one_lsb(v):
    lsb = model.vref / 2**model.adc_bits
    assert abs(word_to_voltage(model, adc_quantize(model, v)) - v) <= lsb * (1 + 1e-12)
