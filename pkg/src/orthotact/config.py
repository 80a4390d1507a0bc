"""System configuration: one JSON document covering every stage."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .channel import ChannelConfig
from .codebook import CodeBook, assign_codes
from .decoder import DecoderConfig
from .encoder import EncoderConfig, check_sample_rate, frame_schedule
from .sensor import SensorModel

INITIAL_STATES = ("rest", "none")

DEFAULT_DOC: dict = {
    "node_count": 16,
    "layout": [4, 4],
    "seed": 0,
    "codebook": {"skip_dc_row": False},
    "sensor": {
        "v0_V": 3.3,
        "segments": [[0, 50, -0.033], [50, 140, -0.0059]],
        "vref_V": 3.3,
        "adc_bits": 10,
        "tau_rise_ms": 0.0,
        "tau_fall_ms": 0.0,
    },
    "encoder": {
        "T_us": 50.0,
        "k_bits": 10,
        "amplitude_mV": 3300.0,
        "level_low_mV": 0.0,
        "mapping": "unipolar",
        "frame_period_ms": 12.8,
        "jitter_frac": 0.1,
        "transition_us": 0.15,
        "delta_threshold": 4,
        "initial_state": "rest",
    },
    "channel": {
        "attenuation_Y": 11.0,
        "invert_output": True,
        "noise": {"model": "none", "level_V": 0.0},
        "adc_bits": 12,
        "fullscale_V": 5.0,
        "sample_rate_Hz": 400000.0,
    },
    "decoder": {
        "chip_window_frac": 0.5,
        "activity_margin_frac": 0.5,
        "quiet_threshold_V": None,
        "min_gap_ms": None,
        "sign_convention": None,
        "jitter_frac": None,
        "frame_origin_s": None,
        "idle_level_V": "expected",
    },
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(where, "unknown field")
        if isinstance(base[key], dict) and base[key] and key != "segments":
            if not isinstance(value, dict):
                raise ConfigError(where, "expected an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _num(doc: dict, section: str, key: str, *, integer: bool = False, allow_none: bool = False):
    value = doc[section][key] if section else doc[key]
    name = f"{section}.{key}" if section else key
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


@dataclass(frozen=True)
class SystemConfig:
    node_count: int = 16
    rows: int = 4
    cols: int = 4
    skip_dc_row: bool = False
    sensor: SensorModel = field(default_factory=SensorModel)
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(jitter_frac=0.1))
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    decoder_overrides: dict = field(default_factory=dict)
    initial_state: str = "rest"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "SystemConfig":
        doc = _merge(DEFAULT_DOC, doc)
        node_count = _num(doc, "", "node_count", integer=True)
        layout = doc["layout"]
        if not (isinstance(layout, list) and len(layout) == 2):
            raise ConfigError("layout", "expected [rows, cols]")
        rows, cols = (int(x) for x in layout)
        s, e, c, d = doc["sensor"], doc["encoder"], doc["channel"], doc["decoder"]
        try:
            sensor = SensorModel(
                v0=_num(doc, "sensor", "v0_V"),
                segments=tuple(tuple(seg) for seg in s["segments"]),
                vref=_num(doc, "sensor", "vref_V"),
                adc_bits=_num(doc, "sensor", "adc_bits", integer=True),
                tau_rise=_num(doc, "sensor", "tau_rise_ms") / 1e3,
                tau_fall=_num(doc, "sensor", "tau_fall_ms") / 1e3,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("sensor", str(exc)) from None
        try:
            encoder = EncoderConfig(
                chip_duration=_num(doc, "encoder", "T_us") / 1e6,
                k_bits=_num(doc, "encoder", "k_bits", integer=True),
                amplitude=_num(doc, "encoder", "amplitude_mV") / 1e3,
                level_low=_num(doc, "encoder", "level_low_mV") / 1e3,
                mapping=e["mapping"],
                frame_period=_num(doc, "encoder", "frame_period_ms") / 1e3,
                jitter_frac=_num(doc, "encoder", "jitter_frac"),
                transition_time=_num(doc, "encoder", "transition_us") / 1e6,
                delta_threshold=_num(doc, "encoder", "delta_threshold", integer=True),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("encoder", str(exc)) from None
        noise = c["noise"]
        if not isinstance(noise, dict) or set(noise) - {"model", "level_V"}:
            raise ConfigError("channel.noise", "expected {model, level_V}")
        try:
            channel = ChannelConfig(
                attenuation=_num(doc, "channel", "attenuation_Y"),
                invert_output=bool(c["invert_output"]),
                noise_model=noise.get("model", "none"),
                noise_level=float(noise.get("level_V", 0.0)),
                adc_bits=_num(doc, "channel", "adc_bits", integer=True, allow_none=True),
                fullscale=_num(doc, "channel", "fullscale_V"),
                sample_rate=_num(doc, "channel", "sample_rate_Hz"),
                rng_seed=_num(doc, "", "seed", integer=True),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("channel", str(exc)) from None
        overrides = {}
        for key, name, scale in (
            ("chip_window_frac", "chip_window_frac", 1.0),
            ("activity_margin_frac", "activity_margin_frac", 1.0),
            ("quiet_threshold_V", "quiet_threshold", 1.0),
            ("min_gap_ms", "min_gap", 1e3),
            ("jitter_frac", "jitter_frac", 1.0),
            ("frame_origin_s", "frame_origin", 1.0),
        ):
            value = _num(doc, "decoder", key, allow_none=True)
            # values equal to the defaults stay implicit so configs compare equal
            if value is not None and value != DEFAULT_DOC["decoder"][key]:
                overrides[name] = value / scale
        idle = d["idle_level_V"]
        if idle != "expected":
            overrides["idle_level"] = _num(doc, "decoder", "idle_level_V", allow_none=True)
        if d["sign_convention"] is not None:
            overrides["sign_convention"] = d["sign_convention"]
        if e["initial_state"] not in INITIAL_STATES:
            raise ConfigError("encoder.initial_state", f"must be one of {INITIAL_STATES}")
        if not isinstance(doc["codebook"]["skip_dc_row"], bool):
            raise ConfigError("codebook.skip_dc_row", "expected true or false")
        cfg = cls(
            node_count=node_count,
            rows=rows,
            cols=cols,
            skip_dc_row=doc["codebook"]["skip_dc_row"],
            sensor=sensor,
            encoder=encoder,
            channel=channel,
            decoder_overrides=overrides,
            initial_state=e["initial_state"],
            seed=channel.rng_seed,
        )
        cfg.decoder_config()  # surfaces bad decoder values now
        return cfg

    def to_dict(self) -> dict:
        d = self.decoder_overrides
        return {
            "node_count": self.node_count,
            "layout": [self.rows, self.cols],
            "seed": self.seed,
            "codebook": {"skip_dc_row": self.skip_dc_row},
            "sensor": {
                "v0_V": self.sensor.v0,
                "segments": [list(s) for s in self.sensor.segments],
                "vref_V": self.sensor.vref,
                "adc_bits": self.sensor.adc_bits,
                "tau_rise_ms": self.sensor.tau_rise * 1e3,
                "tau_fall_ms": self.sensor.tau_fall * 1e3,
            },
            "encoder": {
                "T_us": _tidy(self.encoder.chip_duration * 1e6),
                "k_bits": self.encoder.k_bits,
                "amplitude_mV": _tidy(self.encoder.amplitude * 1e3),
                "level_low_mV": _tidy(self.encoder.level_low * 1e3),
                "mapping": self.encoder.mapping,
                "frame_period_ms": _tidy(self.encoder.frame_period * 1e3),
                "jitter_frac": self.encoder.jitter_frac,
                "transition_us": _tidy(self.encoder.transition_time * 1e6),
                "delta_threshold": self.encoder.delta_threshold,
                "initial_state": self.initial_state,
            },
            "channel": {
                "attenuation_Y": self.channel.attenuation,
                "invert_output": self.channel.invert_output,
                "noise": {"model": self.channel.noise_model, "level_V": self.channel.noise_level},
                "adc_bits": self.channel.adc_bits,
                "fullscale_V": self.channel.fullscale,
                "sample_rate_Hz": self.channel.sample_rate,
            },
            "decoder": {
                "chip_window_frac": d.get("chip_window_frac", 0.5),
                "activity_margin_frac": d.get("activity_margin_frac", 0.5),
                "quiet_threshold_V": d.get("quiet_threshold"),
                "min_gap_ms": None if d.get("min_gap") is None else _tidy(d["min_gap"] * 1e3),
                "sign_convention": d.get("sign_convention"),
                "jitter_frac": d.get("jitter_frac"),
                "frame_origin_s": d.get("frame_origin"),
                "idle_level_V": d.get("idle_level", "expected"),
            },
        }

    @classmethod
    def load(cls, path: str | Path) -> "SystemConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(str(path), "top level must be an object")
        return cls.from_dict(doc)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    # derived views ----------------------------------------------------

    def codebook(self) -> CodeBook:
        return assign_codes(self.node_count, self.skip_dc_row)

    @property
    def order(self) -> int:
        return self.codebook().order

    @property
    def chip_amplitude(self) -> float:
        """Per-chip correlator amplitude at the bus, volts."""
        return self.encoder.bipolar_amplitude / self.channel.attenuation

    def decoder_config(self) -> DecoderConfig:
        base = dict(
            chip_duration=self.encoder.chip_duration,
            k_bits=self.encoder.k_bits,
            chip_amplitude=self.chip_amplitude,
            mapping=self.encoder.mapping,
            frame_period=self.encoder.frame_period,
            jitter_frac=max(self.encoder.jitter_frac, 0.1),
            sign_convention="inverted" if self.channel.invert_output else "direct",
            idle_level=self.node_count * self.encoder.idle_level * self.channel.gain,
        )
        base.update(self.decoder_overrides)
        try:
            return DecoderConfig(**base)
        except ValueError as exc:
            raise ConfigError("decoder", str(exc)) from None

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def validate(self) -> None:
        if self.node_count < 1:
            raise ConfigError("node_count", "must be >= 1")
        if self.rows * self.cols != self.node_count:
            raise ConfigError("layout", f"{self.rows}x{self.cols} does not hold {self.node_count} nodes")
        if self.encoder.k_bits != self.sensor.adc_bits:
            raise ConfigError("encoder.k_bits", f"must equal sensor.adc_bits ({self.sensor.adc_bits})")
        if self.initial_state not in INITIAL_STATES:
            raise ConfigError("encoder.initial_state", f"must be one of {INITIAL_STATES}")
        try:
            check_sample_rate(self.channel.sample_rate, self.encoder.chip_duration)
        except ValueError as exc:
            raise ConfigError("channel.sample_rate_Hz", str(exc)) from None
        order = assign_codes(self.node_count, self.skip_dc_row).order
        stretch = max(self.encoder.jitter_frac, 0.1)
        try:
            frame_schedule(self.encoder.k_bits, order, self.encoder.chip_duration,
                           self.encoder.frame_period, stretch)
        except ValueError as exc:
            raise ConfigError("encoder.frame_period_ms", str(exc)) from None


def _tidy(x: float) -> float:
    """Strip float noise from unit conversions (50e-6 * 1e6 -> 50.0)."""
    return float(f"{x:.12g}")
