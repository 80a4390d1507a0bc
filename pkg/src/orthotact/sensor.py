"""Piezoresistive sensing unit and node-side ADC model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Hysteresis measured at 55, 90 and 140 kPa. Documented only; no loop is simulated.
HYSTERESIS_KPA = (55.0, 90.0, 140.0)
HYSTERESIS_FRACTION = (0.3387, 0.1099, 0.1062)

DEFAULT_SEGMENTS = ((0.0, 50.0, -0.033), (50.0, 140.0, -0.0059))


class SensorDomainError(ValueError):
    pass


@dataclass(frozen=True)
class SensorModel:
    """Two-stage piecewise-linear pressure -> voltage map plus a k-bit ADC.

    Slopes are in V/kPa. ``tau_rise``/``tau_fall`` (seconds) enable a
    first-order lag; zero disables it.
    """

    v0: float = 3.3
    segments: tuple[tuple[float, float, float], ...] = DEFAULT_SEGMENTS
    vref: float = 3.3
    adc_bits: int = 10
    tau_rise: float = 0.0
    tau_fall: float = 0.0
    _p_knots: np.ndarray = field(init=False, repr=False, compare=False)
    _v_knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(tuple(float(x) for x in s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("sensor needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("first segment must start at 0 kPa")
        for (_, hi, _), (lo, _, _) in zip(segs, segs[1:]):
            if hi != lo:
                raise ValueError("segments must be contiguous")
        for lo, hi, _ in segs:
            if hi <= lo:
                raise ValueError(f"empty segment [{lo}, {hi}]")
        signs = {math.copysign(1.0, s) for _, _, s in segs}
        if len(signs) != 1 or any(s == 0 for _, _, s in segs):
            raise ValueError("voltage map must be strictly monotone")
        if self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1")
        if self.vref <= 0:
            raise ValueError("vref must be positive")
        if self.tau_rise < 0 or self.tau_fall < 0:
            raise ValueError("time constants must be non-negative")
        p = [0.0]
        v = [self.v0]
        for lo, hi, slope in segs:
            p.append(hi)
            v.append(v[-1] + slope * (hi - lo))
        object.__setattr__(self, "_p_knots", np.array(p))
        object.__setattr__(self, "_v_knots", np.array(v))

    @property
    def p_max(self) -> float:
        return self.segments[-1][1]

    @property
    def full_codes(self) -> int:
        return 2**self.adc_bits

    @property
    def v_min(self) -> float:
        return float(self._v_knots.min())

    @property
    def v_max(self) -> float:
        return float(self._v_knots.max())

    def voltage_in_range(self, v) -> np.ndarray | bool:
        v = np.asarray(v, dtype=float)
        ok = (v >= self.v_min) & (v <= self.v_max)
        return bool(ok) if ok.ndim == 0 else ok


def pressure_to_voltage(model: SensorModel, p):
    """Sensor output voltage for pressure ``p`` (kPa); pressures above p_max saturate."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise SensorDomainError("pressure must be non-negative")
    v = np.interp(np.minimum(p, model.p_max), model._p_knots, model._v_knots)
    return float(v) if v.ndim == 0 else v


def voltage_to_pressure(model: SensorModel, v):
    """Exact inverse of :func:`pressure_to_voltage`; out-of-range voltages clamp to [0, p_max].

    Use :meth:`SensorModel.voltage_in_range` to flag clamped values.
    """
    v = np.asarray(v, dtype=float)
    vk, pk = model._v_knots, model._p_knots
    if vk[-1] < vk[0]:
        vk, pk = vk[::-1], pk[::-1]
    p = np.interp(v, vk, pk)
    return float(p) if p.ndim == 0 else p


def adc_quantize(model: SensorModel, v):
    """Quantise voltage to a k-bit word: round(v / vref * 2^k), clamped to [0, 2^k - 1]."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, model.vref)
    bits = np.clip(np.rint(v / model.vref * model.full_codes), 0, model.full_codes - 1).astype(np.int64)
    return int(bits) if bits.ndim == 0 else bits


def word_to_voltage(model: SensorModel, word):
    """Voltage represented by a k-bit word: word / 2^k * vref."""
    w = np.asarray(word, dtype=float)
    if np.any(w < 0) or np.any(w > model.full_codes - 1):
        raise SensorDomainError(f"word outside {model.adc_bits}-bit range")
    v = w / model.full_codes * model.vref
    return float(v) if v.ndim == 0 else v


def step_dynamics(state, target, dt: float, model: SensorModel):
    """Advance the first-order sensor lag by ``dt`` seconds.

    Loading (target further from v0 than the state) uses ``tau_rise``,
    unloading uses ``tau_fall``. A zero time constant passes the target through.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = np.asarray(state, dtype=float)
    target = np.asarray(target, dtype=float)
    loading = np.abs(target - model.v0) > np.abs(state - model.v0)
    tau = np.where(loading, model.tau_rise, model.tau_fall)
    with np.errstate(divide="ignore", over="ignore"):
        alpha = np.where(tau > 0, 1.0 - np.exp(-dt / np.where(tau > 0, tau, 1.0)), 1.0)
    out = state + alpha * (target - state)
    return float(out) if out.ndim == 0 else out


@dataclass
class PressureFrame:
    rows: int
    cols: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.rows, self.cols)

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "PressureFrame":
        return cls(rows, cols, np.zeros((rows, cols)))

    def validate(self, model: SensorModel) -> None:
        if np.any(self.values < 0) or np.any(self.values > model.p_max):
            raise SensorDomainError(f"pressures must lie in [0, {model.p_max}] kPa")


def read_pressure_csv(path: str | Path) -> list[PressureFrame]:
    """Read one or more pressure grids; frames are separated by blank lines."""
    blocks: list[list[list[float]]] = [[]]
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                if blocks[-1]:
                    blocks.append([])
                continue
            try:
                blocks[-1].append([float(x) for x in text.split(",")])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number row: {text!r}") from None
    frames = []
    for block in blocks:
        if not block:
            continue
        width = len(block[0])
        if any(len(r) != width for r in block):
            raise ValueError(f"{path}: ragged pressure grid")
        frames.append(PressureFrame(len(block), width, np.array(block)))
    if not frames:
        raise ValueError(f"{path}: no pressure values")
    return frames


def write_pressure_csv(path: str | Path, frames) -> None:
    if isinstance(frames, PressureFrame):
        frames = [frames]
    chunks = []
    for frame in frames:
        chunks.append("\n".join(",".join(f"{x:.6g}" for x in row) for row in frame.values))
    Path(path).write_text("\n\n".join(chunks) + "\n")
