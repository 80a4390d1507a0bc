"""End-to-end frame simulation: sensor -> node encoders -> single-wire channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import AnalogTrace, ChannelConfig, add_noise, digitize
from .codebook import CodeBook, fwht
from .config import SystemConfig
from .encoder import (
    EncoderConfig,
    chips_to_levels,
    encode_word,
    event_gate,
    jittered_boundaries,
    level_edges,
    render_steps,
    word_bits,
)
from .sensor import PressureFrame, adc_quantize, pressure_to_voltage, step_dynamics

# RNG stream tags, combined with (seed, frame) so draws never depend on call order
_JITTER = 1
_NOISE = 2


@dataclass
class FrameTruth:
    frame_index: int
    words: np.ndarray
    active: np.ndarray

    def to_dict(self, k: int) -> dict:
        return {
            "frame_index": self.frame_index,
            "nodes": [
                {"id": i, "active": bool(a), "word": int(w), "word_bin": format(int(w), f"0{k}b")}
                for i, (w, a) in enumerate(zip(self.words, self.active))
            ],
        }

    def expected(self) -> dict[int, int]:
        return {i: int(w) for i, (w, a) in enumerate(zip(self.words, self.active)) if a}


def period_samples(enc: EncoderConfig, sample_rate: float) -> int:
    return int(round(enc.frame_period * sample_rate))


def node_rng(seed: int, frame_index: int, node: int) -> np.random.Generator:
    return np.random.default_rng([seed, frame_index, _JITTER, node])


def _chip_sum(book: CodeBook, enc: EncoderConfig, words, active) -> np.ndarray:
    """Summed node output levels per chip when every node shares the nominal grid."""
    k, n = enc.k_bits, book.order
    z = np.zeros((k, n))
    rows = np.array(book.assignment)
    idx = np.nonzero(active)[0]
    for i in idx:
        z[:, rows[i]] += 2.0 * word_bits(int(words[i]), k) - 1.0
    # H is symmetric, so sum_i s_i * C_i = H @ z
    spread = fwht(z).ravel()
    if enc.mapping == "unipolar":
        swing = enc.amplitude / 2
        return book.n_nodes * enc.level_low + swing * (len(idx) + spread)
    return enc.amplitude * spread


def bus_waveform(book: CodeBook, enc: EncoderConfig, ch: ChannelConfig, words, active, *,
                 seed: int = 0, frame_index: int = 0, t0: float = 0.0) -> AnalogTrace:
    """Noise-free, unquantised bus signal for one frame period.

    Equivalent to rendering every node with :func:`render_waveform` and
    summing them with :func:`superimpose`, but built from edge lists so its
    cost scales with the number of level changes, not nodes x samples.
    """
    fs = ch.sample_rate
    n_samp = period_samples(enc, fs)
    words = np.asarray(words)
    active = np.asarray(active, dtype=bool)
    idle_total = book.n_nodes * enc.idle_level
    L = enc.k_bits * book.order
    if enc.jitter_frac == 0:
        levels = _chip_sum(book, enc, words, active) if active.any() else np.empty(0)
        bounds = t0 + np.arange(L + 1) * enc.chip_duration
        times, steps = level_edges(levels, bounds, idle_total) if levels.size else (np.empty(0), np.empty(0))
    else:
        all_t, all_s = [], []
        for i in np.nonzero(active)[0]:
            chips = encode_word(book.code(int(i)), int(words[i]), enc.k_bits)
            lv = chips_to_levels(chips, enc)
            bounds = t0 + jittered_boundaries(L, enc.chip_duration, enc.jitter_frac, node_rng(seed, frame_index, int(i)))
            t, s = level_edges(lv, bounds, enc.idle_level)
            all_t.append(t)
            all_s.append(s)
        times = np.concatenate(all_t) if all_t else np.empty(0)
        steps = np.concatenate(all_s) if all_s else np.empty(0)
    samples = render_steps(times, steps, idle_total, n_samp, fs, t0, enc.transition_time)
    return AnalogTrace(fs, samples * ch.gain, t0)


def simulate_words(cfg: SystemConfig, words, active, *, frame_index: int = 0, seed: int | None = None,
                   book: CodeBook | None = None) -> AnalogTrace:
    """Bus trace (noise and acquisition included) for one frame of explicit words."""
    book = book or cfg.codebook()
    seed = cfg.seed if seed is None else seed
    fs = cfg.channel.sample_rate
    t0 = frame_index * period_samples(cfg.encoder, fs) / fs
    clean = bus_waveform(book, cfg.encoder, cfg.channel, words, active, seed=seed, frame_index=frame_index, t0=t0)
    noisy = add_noise(clean, cfg.channel, np.random.default_rng([seed, frame_index, _NOISE]))
    return digitize(noisy, cfg.channel)


class Simulator:
    """Stateful multi-frame simulator holding each node's event-gate and sensor state."""

    def __init__(self, cfg: SystemConfig, seed: int | None = None):
        self.cfg = cfg
        self.book = cfg.codebook()
        self.seed = cfg.seed if seed is None else seed
        self.frame_index = 0
        n = cfg.node_count
        self.voltages = np.full(n, cfg.sensor.v0)
        if cfg.initial_state == "rest":
            self.last_sent: list[int | None] = [int(adc_quantize(cfg.sensor, cfg.sensor.v0))] * n
        else:
            self.last_sent = [None] * n

    def node_words(self, pressures: PressureFrame) -> np.ndarray:
        model = self.cfg.sensor
        if pressures.n_nodes != self.cfg.node_count:
            raise ValueError(f"pressure grid has {pressures.n_nodes} cells, config has {self.cfg.node_count} nodes")
        pressures.validate(model)
        target = pressure_to_voltage(model, pressures.flat())
        if model.tau_rise > 0 or model.tau_fall > 0:
            self.voltages = step_dynamics(self.voltages, target, self.cfg.encoder.frame_period, model)
        else:
            self.voltages = np.asarray(target, dtype=float)
        return np.asarray(adc_quantize(model, self.voltages))

    def step(self, pressures: PressureFrame) -> tuple[AnalogTrace, FrameTruth]:
        words = self.node_words(pressures)
        thr = self.cfg.encoder.delta_threshold
        active = np.array([event_gate(prev, int(w), thr) for prev, w in zip(self.last_sent, words)])
        for i in np.nonzero(active)[0]:
            self.last_sent[i] = int(words[i])
        trace = simulate_words(self.cfg, words, active, frame_index=self.frame_index, seed=self.seed, book=self.book)
        truth = FrameTruth(self.frame_index, words.astype(np.int64), active)
        self.frame_index += 1
        return trace, truth

    def run(self, frames: list[PressureFrame], count: int | None = None) -> tuple[AnalogTrace, list[FrameTruth]]:
        """Simulate ``count`` frames; the last pressure frame repeats if the list is shorter."""
        count = len(frames) if count is None else count
        traces, truths = [], []
        for f in range(count):
            trace, truth = self.step(frames[min(f, len(frames) - 1)])
            traces.append(trace)
            truths.append(truth)
        return AnalogTrace.concatenate(traces), truths


def simulate_frame(pressures: PressureFrame, cfg: SystemConfig, seed: int | None = None,
                   prev_words=None) -> tuple[AnalogTrace, FrameTruth]:
    """One frame period from a pressure grid.

    ``prev_words`` overrides the event-gate history (``None`` entries mean
    no previous frame); by default the configured initial state applies.
    """
    sim = Simulator(cfg, seed)
    if prev_words is not None:
        sim.last_sent = [None if w is None else int(w) for w in prev_words]
    return sim.step(pressures)
