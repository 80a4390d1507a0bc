"""Per-node encoder: word -> chips -> voltage levels -> timed waveform."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAPPINGS = ("unipolar", "bipolar")


class EncoderConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    """Timing and level settings shared by every node encoder.

    ``amplitude`` is the IO swing before the channel's divider, in volts.
    ``jitter_frac`` bounds the per-edge lateness as a fraction of the chip time.
    """

    chip_duration: float = 50e-6
    k_bits: int = 10
    amplitude: float = 3.3
    level_low: float = 0.0
    mapping: str = "unipolar"
    frame_period: float = 12.8e-3
    jitter_frac: float = 0.0
    transition_time: float = 0.15e-6
    delta_threshold: int = 4

    def __post_init__(self):
        if self.chip_duration <= 0:
            raise EncoderConfigError("chip_duration must be positive")
        if self.k_bits < 1:
            raise EncoderConfigError("k_bits must be >= 1")
        if self.amplitude <= 0:
            raise EncoderConfigError("amplitude must be positive")
        if self.mapping not in MAPPINGS:
            raise EncoderConfigError(f"mapping must be one of {MAPPINGS}, got {self.mapping!r}")
        if not 0 <= self.jitter_frac < 0.5:
            raise EncoderConfigError("jitter_frac must lie in [0, 0.5)")
        if self.transition_time < 0 or self.transition_time > 0.1 * self.chip_duration:
            raise EncoderConfigError("transition_time must be in [0, 0.1 * chip_duration]")
        if self.delta_threshold < 0:
            raise EncoderConfigError("delta_threshold must be >= 0")

    @property
    def level_high(self) -> float:
        if self.mapping == "unipolar":
            return self.level_low + self.amplitude
        return self.amplitude

    @property
    def idle_level(self) -> float:
        return self.level_low if self.mapping == "unipolar" else 0.0

    @property
    def bipolar_amplitude(self) -> float:
        """Half the distance between the two chip levels (what a correlator sees per chip)."""
        return self.amplitude / 2 if self.mapping == "unipolar" else self.amplitude


@dataclass(frozen=True)
class ChipStream:
    node_id: int
    chips: np.ndarray
    active: bool = True


@dataclass
class NodeWaveform:
    sample_rate: float
    samples: np.ndarray
    t0: float = 0.0
    edges: np.ndarray = field(default_factory=lambda: np.empty(0))
    frame_start: float | None = None
    frame_end: float | None = None

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def frame_duration(self) -> float | None:
        if self.frame_start is None:
            return None
        return self.frame_end - self.frame_start


@dataclass(frozen=True)
class FrameSchedule:
    frame_duration: float
    gap: float
    period: float


def word_bits(word: int, k: int) -> np.ndarray:
    """Bits of ``word``, most significant first."""
    if not 0 <= word < 2**k:
        raise ValueError(f"word {word} does not fit in {k} bits")
    return (word >> np.arange(k - 1, -1, -1)) & 1


def bits_to_word(bits) -> int:
    word = 0
    for b in bits:
        word = (word << 1) | int(b)
    return word


def encode_word(code, word: int, k: int) -> np.ndarray:
    """Spread each bit (MSB first) over the code: bit 1 -> +C, bit 0 -> -C."""
    code = np.asarray(code, dtype=np.int8)
    signs = 2 * word_bits(word, k).astype(np.int8) - 1
    return (signs[:, None] * code[None, :]).ravel()


def encode_node(node_id: int, code, word: int, k: int, active: bool = True) -> ChipStream:
    if not active:
        return ChipStream(node_id, np.empty(0, dtype=np.int8), False)
    return ChipStream(node_id, encode_word(code, word, k), True)


def event_gate(prev_word: int | None, new_word: int, delta_threshold: int) -> bool:
    """True when the node should transmit this frame."""
    if prev_word is None:
        return True
    return abs(int(new_word) - int(prev_word)) >= delta_threshold


def chips_to_levels(chips, cfg: EncoderConfig) -> np.ndarray:
    chips = np.asarray(chips)
    return np.where(chips > 0, cfg.level_high, cfg.level_low if cfg.mapping == "unipolar" else -cfg.amplitude)


def frame_schedule(k: int, n: int, T: float, frame_period: float, jitter_frac: float = 0.0) -> FrameSchedule:
    frame = k * n * T
    if frame_period <= frame * (1 + jitter_frac):
        raise EncoderConfigError(
            f"frame period {frame_period * 1e3:.4g} ms leaves no gap after a "
            f"{frame * 1e3:.4g} ms frame (jitter {jitter_frac:g})"
        )
    return FrameSchedule(frame_duration=frame, gap=frame_period - frame, period=frame_period)


def check_sample_rate(sample_rate: float, chip_duration: float) -> None:
    if sample_rate * chip_duration < 10 - 1e-9:
        raise EncoderConfigError(
            f"sample rate {sample_rate:g} Hz gives {sample_rate * chip_duration:.3g} samples/chip; need >= 10"
        )


def n_samples_for(duration: float, sample_rate: float) -> int:
    return int(round(duration * sample_rate))


def jittered_boundaries(n_chips: int, T: float, jitter_frac: float, rng) -> np.ndarray:
    """Chip boundary times relative to the frame trigger.

    Boundary 0 is the trigger itself. Every later boundary lags its nominal
    grid position by an independent uniform delay in [0, jitter_frac * T];
    delays never accumulate because each edge is scheduled on the grid.
    """
    bounds = np.arange(n_chips + 1, dtype=float) * T
    if jitter_frac > 0 and n_chips > 0:
        bounds[1:] += rng.uniform(0.0, jitter_frac * T, size=n_chips)
    return bounds


def level_edges(levels: np.ndarray, bounds: np.ndarray, idle: float):
    """Collapse a level sequence into (times, steps) at the boundaries where the level changes."""
    padded = np.concatenate(([idle], levels, [idle]))
    steps = np.diff(padded)
    where = np.nonzero(steps)[0]
    return bounds[where], steps[where]


def render_steps(times, steps, base: float, n: int, sample_rate: float, t0: float, transition: float) -> np.ndarray:
    """Sample a piecewise-constant signal given step changes with linear ramps.

    Each step starts ramping at its time and is complete ``transition`` later.
    """
    times = np.asarray(times, dtype=float)
    steps = np.asarray(steps, dtype=float)
    out = np.zeros(n + 1)
    if times.size:
        pos = (times - t0) * sample_rate
        done = np.ceil(pos + transition * sample_rate - 1e-7).astype(np.int64)
        np.add.at(out, np.clip(done, 0, n), steps)
        if transition > 0:
            first = np.ceil(pos - 1e-7).astype(np.int64)
            span = int((done - first).max()) if done.size else 0
            for r in range(span):
                idx = first + r
                ok = (idx < done) & (idx >= 0) & (idx < n)
                if not ok.any():
                    continue
                frac = ((idx[ok] / sample_rate + t0) - times[ok]) / transition
                np.add.at(out, idx[ok], steps[ok] * np.clip(frac, 0.0, 1.0))
                np.add.at(out, np.minimum(idx[ok] + 1, n), -steps[ok] * np.clip(frac, 0.0, 1.0))
    return base + np.cumsum(out)[:n]


def render_waveform(
    levels,
    cfg: EncoderConfig,
    sample_rate: float,
    rng=None,
    *,
    t0: float = 0.0,
    duration: float | None = None,
) -> NodeWaveform:
    """Render one node's level sequence as a sampled waveform covering ``duration``.

    An empty ``levels`` sequence is an inactive node: idle level throughout.
    """
    check_sample_rate(sample_rate, cfg.chip_duration)
    if duration is None:
        duration = cfg.frame_period
    n = n_samples_for(duration, sample_rate)
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0:
        return NodeWaveform(sample_rate, np.full(n, cfg.idle_level), t0)
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    bounds = t0 + jittered_boundaries(levels.size, cfg.chip_duration, cfg.jitter_frac, rng)
    times, steps = level_edges(levels, bounds, cfg.idle_level)
    samples = render_steps(times, steps, cfg.idle_level, n, sample_rate, t0, cfg.transition_time)
    return NodeWaveform(sample_rate, samples, t0, edges=times, frame_start=bounds[0], frame_end=bounds[-1])

