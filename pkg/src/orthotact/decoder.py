"""Correlation receiver for the superimposed single-wire signal.

Pipeline: quiet-gap frame detection -> chip-grid alignment -> per-slot
Walsh-Hadamard projection -> three-way bit decision -> word assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import AnalogTrace
from .codebook import CodeBook, fwht
from .encoder import bits_to_word
from .sensor import PressureFrame, SensorModel, voltage_to_pressure, word_to_voltage

SIGN_CONVENTIONS = ("inverted", "direct")

# chip-window means below this many samples are rejected
MIN_WINDOW_SAMPLES = 3
# quiet detection averages over this fraction of a chip
SYNC_SMOOTH_FRAC = 0.5
# activity bursts shorter than this many code lengths are noise
MIN_SEGMENT_CODES = 0.75
# candidate evaluation batch, in chip observations
_BATCH_CHIPS = 1 << 22


class DecoderConfigError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class DecoderConfig:
    """Receiver settings.

    ``chip_amplitude`` is the per-chip correlator amplitude at the bus, i.e.
    half the distance between one node's two chip levels after attenuation.
    ``quiet_threshold``/``min_gap`` of ``None`` are derived from the rest.
    ``idle_level`` is the expected quiet bus voltage as it appears in the
    trace; the baseline is refined around it. ``None`` estimates it blind
    from the most populated level, which fails when one constant level
    outlasts the idle gap.
    """

    chip_duration: float = 50e-6
    k_bits: int = 10
    chip_amplitude: float = 0.15
    mapping: str = "unipolar"
    frame_period: float | None = 12.8e-3
    jitter_frac: float = 0.1
    quiet_threshold: float | None = None
    min_gap: float | None = None
    chip_window_frac: float = 0.5
    activity_margin_frac: float = 0.5
    sign_convention: str = "inverted"
    frame_origin: float | None = None
    idle_level: float | None = None

    def __post_init__(self):
        if not 0 < self.chip_window_frac <= 1:
            raise DecoderConfigError("chip_window_frac must be in (0, 1]")
        if not 0 < self.activity_margin_frac < 1:
            raise DecoderConfigError("activity_margin_frac must be in (0, 1)")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise DecoderConfigError(f"sign_convention must be one of {SIGN_CONVENTIONS}")
        if self.chip_amplitude <= 0:
            raise DecoderConfigError("chip_amplitude must be positive")
        if self.chip_duration <= 0 or self.k_bits < 1:
            raise DecoderConfigError("chip_duration and k_bits must be positive")

    @property
    def threshold(self) -> float:
        if self.quiet_threshold is not None:
            return self.quiet_threshold
        # half of the smallest deviation one node can cause from the idle level
        step = 2 * self.chip_amplitude if self.mapping == "unipolar" else self.chip_amplitude
        return 0.5 * step

    def frame_duration(self, n: int) -> float:
        return self.k_bits * n * self.chip_duration

    def gap_samples(self, n: int, sample_rate: float) -> int:
        if self.min_gap is not None:
            gap = self.min_gap
        else:
            # longest all-idle run inside a frame is one code length (zero-sum codes)
            inner = n * self.chip_duration * (1 + self.jitter_frac)
            if self.frame_period is not None:
                outer = self.frame_period - self.frame_duration(n) * (1 + self.jitter_frac)
                gap = 0.5 * (inner + outer) if outer > inner else inner * 1.5
            else:
                gap = 2 * inner
        return max(1, int(math.ceil(gap * sample_rate)))


@dataclass(frozen=True)
class FrameSegment:
    start: int
    end: int
    t_start: float
    t_end: float
    flagged: bool = False
    reason: str = ""

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class NodeOutcome:
    node_id: int
    status: str  # "word" | "inactive" | "fault"
    word: int | None
    correlations: np.ndarray
    margin: float | None

    @property
    def active(self) -> bool:
        return self.status == "word"


@dataclass
class DecodedFrame:
    frame_index: int
    t_start: float
    t_end: float
    nodes: list[NodeOutcome]
    flags: list[str] = field(default_factory=list)

    def words(self) -> dict[int, int]:
        return {o.node_id: o.word for o in self.nodes if o.status == "word"}

    def faults(self) -> list[int]:
        return [o.node_id for o in self.nodes if o.status == "fault"]

    def to_dict(self, model: SensorModel | None = None, k_bits: int | None = None) -> dict:
        nodes = []
        for o in self.nodes:
            rec = {"id": o.node_id, "status": o.status, "word_bin": None, "voltage_v": None,
                   "margin": None if o.margin is None else round(float(o.margin), 6)}
            if o.word is not None:
                k = k_bits or (model.adc_bits if model else 10)
                rec["word_bin"] = format(o.word, f"0{k}b")
                if model is not None:
                    rec["voltage_v"] = round(float(word_to_voltage(model, o.word)), 6)
            nodes.append(rec)
        doc = {"frame_index": self.frame_index, "t_start_s": round(self.t_start, 12), "nodes": nodes}
        if self.flags:
            doc["flags"] = list(self.flags)
        return doc


def oriented(trace: AnalogTrace, cfg: DecoderConfig) -> np.ndarray:
    v = np.asarray(trace.samples, dtype=float)
    return -v if cfg.sign_convention == "inverted" else v


def _mode_level(v: np.ndarray, width: float) -> float:
    """Level with the most samples within +-width/2."""
    stride = max(1, len(v) // 50000)
    s = np.sort(v[::stride])
    hi = np.searchsorted(s, s + width / 2, side="right")
    lo = np.searchsorted(s, s - width / 2, side="left")
    best = s[int(np.argmax(hi - lo))]
    near = s[np.abs(s - best) <= width]
    return float(np.median(near))


def estimate_baseline(v: np.ndarray, threshold: float, hint: float | None = None) -> float:
    """Quiet level of ``v``: the most populated level, or the level near ``hint``."""
    base = _mode_level(v, threshold) if hint is None else hint
    for _ in range(2):
        quiet = np.abs(v - base) <= threshold
        if not quiet.any():
            break
        base = float(np.median(v[quiet]))
    return base


def baseline_for(v: np.ndarray, cfg: DecoderConfig) -> float:
    """Baseline of the oriented signal ``v`` under ``cfg``."""
    hint = None
    if cfg.idle_level is not None:
        hint = -cfg.idle_level if cfg.sign_convention == "inverted" else cfg.idle_level
    return estimate_baseline(v, cfg.threshold, hint)


def _smooth_width(cfg: DecoderConfig, fs: float) -> int:
    return max(1, int(SYNC_SMOOTH_FRAC * cfg.chip_duration * fs))


def smooth_activity(x: np.ndarray, w: int) -> np.ndarray:
    """Centred moving average of width ``w``.

    A step at sample e turns into a linear ramp whose half-height point
    falls on e, whatever the step size.
    """
    if w <= 1:
        return np.asarray(x, dtype=float)
    h = w // 2
    padded = np.concatenate((np.full(h, x[0]), x, np.full(w - h - 1, x[-1])))
    c = np.concatenate(([0.0], np.cumsum(padded)))
    return (c[w:] - c[:-w]) / w


def _half_height(sm: np.ndarray, i: int, w: int, forward: bool) -> int:
    """Move a threshold crossing at ``i`` to the half-height point of its ramp."""
    if w <= 1:
        return i
    last = sm.size - 1
    if forward:
        plateau = abs(sm[min(i + w, last)])
        lo, hi = max(0, i - w), min(last, i + w)
        hit = np.nonzero(np.abs(sm[lo: hi + 1]) >= plateau / 2)[0]
        return lo + int(hit[0]) if hit.size else i
    plateau = abs(sm[max(i - w, 0)])
    lo, hi = max(0, i - w), min(last, i + w)
    hit = np.nonzero(np.abs(sm[lo: hi + 1]) >= plateau / 2)[0]
    return lo + int(hit[-1]) if hit.size else i


def frame_sync(trace: AnalogTrace, cfg: DecoderConfig, n: int, *, baseline: float | None = None) -> list[FrameSegment]:
    """Find bursts of activity separated by quiet runs of at least the minimum gap.

    The signal is averaged over half a chip before thresholding so wideband
    noise does not break up the quiet gaps; segment edges are then moved to
    the half-height point of the smoothed ramp. ``n`` is the code length,
    needed for the expected frame duration.
    """
    v = oriented(trace, cfg)
    if v.size == 0:
        return []
    thr = cfg.threshold
    base = baseline_for(v, cfg) if baseline is None else baseline
    fs = trace.sample_rate
    w = _smooth_width(cfg, fs)
    sm = smooth_activity(v - base, w)
    active = np.nonzero(np.abs(sm) > thr)[0]
    if active.size == 0:
        return []
    min_gap = cfg.gap_samples(n, fs)
    breaks = np.nonzero(np.diff(active) - 1 >= min_gap)[0]
    starts = np.concatenate(([active[0]], active[breaks + 1]))
    ends = np.concatenate((active[breaks], [active[-1]]))

    frame = cfg.frame_duration(n)
    limit = frame * (1 + cfg.jitter_frac) + 2 * cfg.chip_duration
    # rejoin pieces of one frame split by a long idle stretch inside it
    merged: list[list[int]] = []
    for s, e in zip(starts.tolist(), ends.tolist()):
        if merged and (e - merged[-1][0]) / fs <= limit:
            merged[-1][1] = e
        else:
            merged.append([s, e])

    # the shortest real frame is a lone all-ones-row node sending one 1-bit
    shortest = MIN_SEGMENT_CODES * n * cfg.chip_duration
    segments = []
    for s, e in merged:
        s = _half_height(sm, s, w, forward=True)
        e = _half_height(sm, e, w, forward=False)
        t_s = trace.t0 + s / fs
        t_e = trace.t0 + (e + 1) / fs
        if t_e - t_s < shortest:
            continue
        flagged, reason = False, ""
        if t_e - t_s > limit:
            flagged, reason = True, "segment longer than one frame"
        elif e >= len(v) - 1 - w // 2:
            flagged, reason = True, "segment runs into end of trace"
        segments.append(FrameSegment(s, e, t_s, t_e, flagged, reason))
    return segments


def _window_bounds(starts: np.ndarray, trace_t0: float, fs: float, n_chips: int, cfg: DecoderConfig):
    """Inclusive sample index bounds of each chip's central window, per candidate start."""
    T = cfg.chip_duration
    w = cfg.chip_window_frac
    j = np.arange(n_chips)
    ws = starts[:, None] + (j[None, :] + (1 - w) / 2) * T
    we = starts[:, None] + (j[None, :] + (1 + w) / 2) * T
    a = np.ceil((ws - trace_t0) * fs - 1e-6).astype(np.int64)
    b = np.floor((we - trace_t0) * fs + 1e-6).astype(np.int64)
    return a, b


def _chip_means(csum: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (csum[b + 1] - csum[a]) / (b - a + 1)


def chip_matrix(trace: AnalogTrace, t_start: float, cfg: DecoderConfig, n: int,
                *, baseline: float | None = None) -> np.ndarray:
    """k x n chip observations on the nominal grid starting at ``t_start``.

    Each entry is the mean over the central ``chip_window_frac`` of its chip,
    measured from the idle baseline and with the amplifier inversion undone.
    """
    v = oriented(trace, cfg)
    if baseline is None:
        baseline = baseline_for(v, cfg)
    L = cfg.k_bits * n
    a, b = _window_bounds(np.array([t_start]), trace.t0, trace.sample_rate, L, cfg)
    if L == 0 or v.size == 0:
        raise ResolutionError("empty segment")
    if int((b - a + 1).min()) < MIN_WINDOW_SAMPLES:
        raise ResolutionError(
            f"only {int((b - a + 1).min())} samples per chip window; need {MIN_WINDOW_SAMPLES}"
        )
    if a.min() < 0 or b.max() >= v.size:
        raise ResolutionError("chip grid extends beyond the trace")
    csum = np.concatenate(([0.0], np.cumsum(v - baseline)))
    return _chip_means(csum, a[0], b[0]).reshape(cfg.k_bits, n)


def correlate(chip_row, code) -> float:
    """Dot product of chip observations with a ±1 code."""
    chip_row = np.asarray(chip_row, dtype=float)
    code = np.asarray(code, dtype=float)
    if chip_row.shape != code.shape:
        raise ValueError("length mismatch")
    return float(np.dot(chip_row, code))


def decide(corr: float, n: int, amplitude: float, margin_frac: float = 0.5) -> int | None:
    """1, 0, or None (no bit) from one correlation value."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    if abs(corr) < margin_frac * n * amplitude:
        return None
    return 1 if corr > 0 else 0


def _unipolar_dc(book: CodeBook, cfg: DecoderConfig) -> bool:
    return cfg.mapping == "unipolar"


def _alignment_residual(y: np.ndarray, book: CodeBook, cfg: DecoderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Distance of the projections from the nearest valid frame, per candidate.

    ``y`` has shape (candidates, k, N). A valid frame has every assigned row
    either silent in all k slots or at +-nA in all k slots, and nothing on
    unassigned rows. Under unipolar levels the all-ones row carries nA per
    active node plus 0 or 2nA per bit from its own on-off keyed word.

    Returns the summed squared distance and the largest single deviation.
    """
    n = book.order
    full = n * cfg.chip_amplitude
    rows = np.array(book.assignment, dtype=np.int64)
    dc = _unipolar_dc(book, cfg)
    if dc:
        rows = rows[rows != 0]
    assigned = np.zeros(n, dtype=bool)
    assigned[rows] = True
    if dc:
        assigned[0] = True
    free = np.abs(y[..., ~assigned])
    err = np.sum(free**2, axis=(-2, -1))
    worst = free.max(axis=(-2, -1), initial=0.0)
    ya = np.abs(y[..., rows])
    idle_cost = np.sum(ya**2, axis=-2)
    busy_cost = np.sum((ya - full) ** 2, axis=-2)
    busy = busy_cost < idle_cost
    err = err + np.where(busy, busy_cost, idle_cost).sum(axis=-1)
    dev = np.where(busy[..., None, :], np.abs(ya - full), ya)
    worst = np.maximum(worst, dev.max(axis=(-2, -1), initial=0.0))
    if dc:
        excess = np.abs(y[..., 0] - np.count_nonzero(busy, axis=-1)[..., None] * full)
        if book.dc_node is not None:
            excess = np.minimum(excess, np.abs(excess - 2 * full))
        err = err + np.sum(excess**2, axis=-1)
        worst = np.maximum(worst, excess.max(axis=-1))
    return err, worst


def align_segment(v0: np.ndarray, csum: np.ndarray, trace_t0: float, fs: float, seg: FrameSegment,
                  book: CodeBook, cfg: DecoderConfig):
    """Pick the chip-grid start for a segment.

    Candidates step back from the first active sample in whole chips, as far
    as the segment end allows. Starts whose every projection lies within the
    decision margin of a valid frame come first, ordered by distance from the
    frame-period grid when ``frame_origin`` is set; otherwise the smallest
    residual wins, and exact ties go to the latest start.
    Returns (t_start, correlations) or None.
    """
    n = book.order
    L = cfg.k_bits * n
    T = cfg.chip_duration
    frame = L * T
    s_t = trace_t0 + (seg.start - 0.5) / fs
    e_t = trace_t0 + (seg.end + 0.5) / fs
    earliest = e_t - frame - 2 * cfg.jitter_frac * T - 2.0 / fs
    m_max = max(0, int(math.floor((s_t - earliest) / T)))
    starts = s_t - np.arange(m_max + 1) * T

    best = None
    batch = max(1, _BATCH_CHIPS // L)
    for lo in range(0, starts.size, batch):
        cand = starts[lo: lo + batch]
        a, b = _window_bounds(cand, trace_t0, fs, L, cfg)
        ok = (a[:, 0] >= 0) & (b[:, -1] < v0.size)
        if not ok.any():
            continue
        if int((b[ok] - a[ok] + 1).min()) < MIN_WINDOW_SAMPLES:
            raise ResolutionError("too few samples per chip window")
        cand, a, b = cand[ok], a[ok], b[ok]
        x = _chip_means(csum, a, b).reshape(len(cand), cfg.k_bits, n)
        y = fwht(x)
        res, worst = _alignment_residual(y, book, cfg)
        valid = worst < cfg.activity_margin_frac * n * cfg.chip_amplitude
        for i in range(len(cand)):
            # any start that decodes cleanly beats every one that does not;
            # among clean ones the period grid (if known) settles ambiguity
            if valid[i]:
                key = (0, _grid_penalty(float(cand[i]), cfg), float(res[i]))
            else:
                key = (1, 0.0, float(res[i]))
            if best is None or key < best[0]:
                best = (key, float(cand[i]), y[i])
    if best is None:
        return None
    return best[1], best[2]


def _grid_penalty(t: float, cfg: DecoderConfig) -> float:
    if cfg.frame_origin is None or not cfg.frame_period:
        return 0.0
    phase = (t - cfg.frame_origin) / cfg.frame_period
    return abs(phase - round(phase))


def decode_correlations(y: np.ndarray, book: CodeBook, cfg: DecoderConfig) -> list[NodeOutcome]:
    """Turn per-slot projections (k x N, all Hadamard rows) into per-node outcomes."""
    n = book.order
    full = n * cfg.chip_amplitude
    m = cfg.activity_margin_frac
    outcomes: list[NodeOutcome | None] = [None] * book.n_nodes
    dc_node = book.dc_node if _unipolar_dc(book, cfg) else None
    for node, row in enumerate(book.assignment):
        if node == dc_node:
            continue
        c = y[:, row]
        bits = [decide(v, n, cfg.chip_amplitude, m) for v in c]
        decided = [b for b in bits if b is not None]
        if len(decided) == len(bits):
            margin = float(np.min(np.abs(c)) / full)
            outcomes[node] = NodeOutcome(node, "word", bits_to_word(bits), c.copy(), margin)
        elif not decided:
            outcomes[node] = NodeOutcome(node, "inactive", None, c.copy(), None)
        else:
            margin = float(np.min(np.abs(c[[b is not None for b in bits]])) / full)
            outcomes[node] = NodeOutcome(node, "fault", None, c.copy(), margin)
    if dc_node is not None:
        # Under unipolar levels the all-ones row is on-off keyed: every other
        # active node adds n*A of DC, and a 0 bit looks like silence.
        others = sum(1 for o in outcomes if o is not None and o.status != "inactive")
        excess = (y[:, 0] - others * full) / 2
        bits = [1 if v >= m * full else 0 for v in excess]
        if any(bits):
            ones = excess[np.array(bits, dtype=bool)]
            outcomes[dc_node] = NodeOutcome(dc_node, "word", bits_to_word(bits), excess, float(ones.min() / full))
        else:
            outcomes[dc_node] = NodeOutcome(dc_node, "inactive", None, excess, None)
    return outcomes  # type: ignore[return-value]


def decode_frame(chips: np.ndarray, book: CodeBook, cfg: DecoderConfig, *, frame_index: int = 0,
                 t_start: float = 0.0) -> DecodedFrame:
    """Decode a k x n chip matrix into one frame of node outcomes."""
    chips = np.asarray(chips, dtype=float)
    if chips.shape != (cfg.k_bits, book.order):
        raise ValueError(f"chip matrix shape {chips.shape} != ({cfg.k_bits}, {book.order})")
    y = fwht(chips)
    nodes = decode_correlations(y, book, cfg)
    return DecodedFrame(frame_index, t_start, t_start + cfg.frame_duration(book.order), nodes)


def _frame_index(t: float, trace_t0: float, cfg: DecoderConfig, fallback: int) -> int:
    if not cfg.frame_period:
        return fallback
    origin = trace_t0 if cfg.frame_origin is None else cfg.frame_origin
    return int(round((t - origin) / cfg.frame_period))


def decode_trace(trace: AnalogTrace, book: CodeBook, cfg: DecoderConfig) -> list[DecodedFrame]:
    """Decode every frame found in a trace."""
    n = book.order
    v = oriented(trace, cfg)
    if v.size == 0:
        return []
    base = baseline_for(v, cfg)
    segments = frame_sync(trace, cfg, n, baseline=base)
    if not segments:
        return []
    csum = np.concatenate(([0.0], np.cumsum(v - base)))
    frames = []
    for i, seg in enumerate(segments):
        found = align_segment(v, csum, trace.t0, trace.sample_rate, seg, book, cfg)
        if found is None:
            continue
        t_start, y = found
        nodes = decode_correlations(y, book, cfg)
        idx = _frame_index(t_start, trace.t0, cfg, i)
        frame = DecodedFrame(idx, t_start, t_start + cfg.frame_duration(n), nodes)
        if seg.flagged:
            frame.flags.append(seg.reason)
        if frame.faults():
            frame.flags.append(f"inconsistent nodes: {frame.faults()}")
        frames.append(frame)
    return frames


@dataclass
class ReconstructedFrame:
    pressure: PressureFrame
    out_of_range: np.ndarray


class Reconstructor:
    """Hold-last pressure reconstruction across frames."""

    def __init__(self, model: SensorModel, rows: int, cols: int):
        self.model = model
        self.rows = rows
        self.cols = cols
        self.state = np.zeros(rows * cols)

    def update(self, decoded: DecodedFrame) -> ReconstructedFrame:
        if len(decoded.nodes) != self.rows * self.cols:
            raise ValueError(f"{len(decoded.nodes)} nodes do not fit a {self.rows}x{self.cols} layout")
        flags = np.zeros(self.rows * self.cols, dtype=bool)
        for o in decoded.nodes:
            if o.status != "word":
                continue
            v = word_to_voltage(self.model, o.word)
            flags[o.node_id] = not self.model.voltage_in_range(v)
            self.state[o.node_id] = voltage_to_pressure(self.model, v)
        return ReconstructedFrame(PressureFrame(self.rows, self.cols, self.state.copy()), flags.reshape(self.rows, self.cols))


def reconstruct(decoded: DecodedFrame, model: SensorModel, rows: int, cols: int,
                previous: PressureFrame | None = None) -> PressureFrame:
    rec = Reconstructor(model, rows, cols)
    if previous is not None:
        rec.state = previous.flat().copy()
    return rec.update(decoded).pressure
