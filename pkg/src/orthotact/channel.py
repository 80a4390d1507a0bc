"""Single-wire analog path: attenuation, inverting summation, noise, acquisition."""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

NOISE_MODELS = ("none", "uniform", "gaussian")


class ChannelConfigError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


class TraceParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ChannelConfig:
    """Analog channel settings.

    ``noise_level`` is the bound (uniform) or sigma (gaussian), in volts.
    ``adc_bits=None`` skips quantisation entirely.
    """

    attenuation: float = 11.0
    invert_output: bool = True
    noise_model: str = "none"
    noise_level: float = 0.0
    adc_bits: int | None = 12
    fullscale: float = 5.0
    sample_rate: float = 400e3
    rng_seed: int = 0

    def __post_init__(self):
        if self.attenuation < 1:
            raise ChannelConfigError("attenuation must be >= 1")
        if self.noise_model not in NOISE_MODELS:
            raise ChannelConfigError(f"noise_model must be one of {NOISE_MODELS}")
        if self.noise_level < 0:
            raise ChannelConfigError("noise_level must be >= 0")
        if self.adc_bits is not None and not 1 <= self.adc_bits <= 32:
            raise ChannelConfigError("adc_bits must be in [1, 32] or null")
        if self.fullscale <= 0:
            raise ChannelConfigError("fullscale must be positive")
        if self.sample_rate <= 0:
            raise ChannelConfigError("sample_rate must be positive")

    @property
    def gain(self) -> float:
        """Node volts -> bus volts."""
        return (-1.0 if self.invert_output else 1.0) / self.attenuation


@dataclass
class AnalogTrace:
    sample_rate: float
    samples: np.ndarray
    t0: float = 0.0
    clip_count: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.sample_rate

    def __add__(self, other: "AnalogTrace") -> "AnalogTrace":
        if other.sample_rate != self.sample_rate or len(other) != len(self):
            raise AlignmentError("traces must share sample rate and length")
        return AnalogTrace(self.sample_rate, self.samples + other.samples, self.t0)

    @staticmethod
    def concatenate(traces: list["AnalogTrace"]) -> "AnalogTrace":
        if not traces:
            raise ValueError("nothing to concatenate")
        fs = traces[0].sample_rate
        if any(t.sample_rate != fs for t in traces):
            raise AlignmentError("sample rates differ")
        return AnalogTrace(
            fs,
            np.concatenate([t.samples for t in traces]),
            traces[0].t0,
            sum(t.clip_count for t in traces),
        )


def superimpose(waveforms, cfg: ChannelConfig) -> AnalogTrace:
    """Attenuate each node by Y, sum, and invert when the summing amplifier inverts."""
    waveforms = list(waveforms)
    if not waveforms:
        raise AlignmentError("no waveforms to superimpose")
    fs = waveforms[0].sample_rate
    t0 = waveforms[0].t0
    for w in waveforms:
        if w.sample_rate != fs:
            raise AlignmentError(f"sample rate mismatch: {w.sample_rate} vs {fs}")
        if abs(w.t0 - t0) > 0.5 / fs:
            raise AlignmentError("waveforms are not time-aligned")
    n = max(len(w.samples) for w in waveforms)
    total = np.zeros(n)
    for w in waveforms:
        total[: len(w.samples)] += w.samples
        # shorter inputs hold their last value (the node stays at its idle level)
        if len(w.samples) < n:
            total[len(w.samples):] += w.samples[-1]
    return AnalogTrace(fs, total * cfg.gain, t0)


def add_noise(trace: AnalogTrace, cfg: ChannelConfig, rng=None) -> AnalogTrace:
    if cfg.noise_model == "none" or cfg.noise_level == 0:
        return replace(trace, samples=trace.samples.copy())
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(cfg.rng_seed if rng is None else rng)
    n = len(trace.samples)
    if cfg.noise_model == "uniform":
        noise = rng.uniform(-cfg.noise_level, cfg.noise_level, size=n)
    else:
        noise = rng.normal(0.0, cfg.noise_level, size=n)
    return replace(trace, samples=trace.samples + noise)


def quantizer_step(cfg: ChannelConfig) -> float:
    return 2 * cfg.fullscale / 2**cfg.adc_bits


def digitize(trace: AnalogTrace, cfg: ChannelConfig) -> AnalogTrace:
    """Round samples onto 2^bits levels starting at -fullscale, step 2*fullscale/2^bits.

    Samples that fall outside the code range are clipped and counted.
    """
    if cfg.adc_bits is None:
        return replace(trace, samples=trace.samples.copy())
    step = quantizer_step(cfg)
    top = 2**cfg.adc_bits - 1
    codes = np.rint((trace.samples + cfg.fullscale) / step)
    clipped = int(np.count_nonzero((codes < 0) | (codes > top)))
    codes = np.clip(codes, 0, top)
    return AnalogTrace(trace.sample_rate, codes * step - cfg.fullscale, trace.t0, trace.clip_count + clipped)


def write_trace_csv(trace: AnalogTrace, path) -> None:
    data = np.column_stack((trace.times(), trace.samples))
    buf = io.StringIO()
    buf.write("time_s,voltage_v\n")
    np.savetxt(buf, data, fmt=("%.12g", "%.12g"), delimiter=",")
    Path(path).write_text(buf.getvalue())


def read_trace_csv(path) -> AnalogTrace:
    """Parse a ``time_s,voltage_v`` CSV with uniform sample spacing."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise TraceParseError("empty file", 1)
    header = [h.strip().lower() for h in lines[0].split(",")]
    if header != ["time_s", "voltage_v"]:
        raise TraceParseError(f"expected header 'time_s,voltage_v', got {lines[0]!r}", 1)
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) < 2:
        raise TraceParseError("need at least two samples", len(lines))
    try:
        data = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", ndmin=2)
        if data.shape[1] != 2:
            raise ValueError
    except ValueError:
        for i, line in enumerate(body, start=2):
            parts = line.split(",")
            try:
                if len(parts) != 2:
                    raise ValueError
                float(parts[0])
                float(parts[1])
            except ValueError:
                raise TraceParseError(f"malformed sample row {line!r}", i) from None
        raise TraceParseError("malformed trace") from None
    t, v = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)):
        bad = int(np.nonzero(~np.all(np.isfinite(data), axis=1))[0][0])
        raise TraceParseError("non-finite value", bad + 2)
    dt = np.diff(t)
    mean_dt = (t[-1] - t[0]) / (len(t) - 1)
    if mean_dt <= 0:
        raise TraceParseError("time column must increase")
    off = np.abs(dt - mean_dt) > 0.01 * mean_dt
    if off.any():
        raise TraceParseError("non-uniform sample spacing", int(np.nonzero(off)[0][0]) + 3)
    # times are written with 12 significant digits; 9 keeps fs free of float noise
    return AnalogTrace(float(f"{1.0 / mean_dt:.9g}"), v.copy(), float(t[0]))
