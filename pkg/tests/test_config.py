import json

import pytest

from orthotact.config import DEFAULT_DOC, ConfigError, SystemConfig


def test_defaults_match_dataclass():
    assert SystemConfig.from_dict({}) == SystemConfig()


def test_round_trip(tmp_path):
    cfg = SystemConfig.from_dict({"node_count": 8, "layout": [2, 4], "decoder": {"min_gap_ms": 2.5}})
    path = tmp_path / "c.json"
    cfg.save(path)
    assert SystemConfig.load(path) == cfg
    assert cfg.to_dict()["encoder"]["T_us"] == 50.0
    assert json.loads(path.read_text())["decoder"]["min_gap_ms"] == 2.5


def test_default_doc_is_complete():
    assert SystemConfig().to_dict() == DEFAULT_DOC


@pytest.mark.parametrize("doc, field", [
    ({"bogus": 1}, "bogus"),
    ({"encoder": {"T_ms": 1}}, "encoder.T_ms"),
    ({"layout": [3, 3]}, "layout"),
    ({"encoder": {"k_bits": 12}}, "encoder.k_bits"),
    ({"encoder": {"k_bits": "ten"}}, "encoder.k_bits"),
    ({"encoder": {"frame_period_ms": 8.0}}, "encoder.frame_period_ms"),
    ({"channel": {"sample_rate_Hz": 20000.0}}, "channel.sample_rate_Hz"),
    ({"encoder": {"initial_state": "warm"}}, "encoder.initial_state"),
    ({"decoder": {"sign_convention": "up"}}, "decoder"),
])
def test_bad_fields_name_the_field(doc, field):
    with pytest.raises(ConfigError) as err:
        SystemConfig.from_dict(doc)
    assert err.value.field == field


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{\n  \"node_count\": ,\n}")
    with pytest.raises(ConfigError, match="line 2"):
        SystemConfig.load(path)


def test_idle_level_options():
    expected = SystemConfig().decoder_config().idle_level
    # 16 nodes idling at 0 V under inverted gain
    assert expected == 0.0
    blind = SystemConfig.from_dict({"decoder": {"idle_level_V": None}})
    assert blind.decoder_config().idle_level is None
    assert blind.to_dict()["decoder"]["idle_level_V"] is None
    fixed = SystemConfig.from_dict({"decoder": {"idle_level_V": -0.2}})
    assert fixed.decoder_config().idle_level == -0.2
    assert SystemConfig.from_dict(fixed.to_dict()) == fixed


def test_expected_idle_follows_level_low():
    cfg = SystemConfig.from_dict({"encoder": {"level_low_mV": 100.0}})
    assert cfg.decoder_config().idle_level == pytest.approx(-16 * 0.1 / 11)


def test_reference_timing():
    cfg = SystemConfig()
    assert cfg.order == 16
    assert cfg.encoder.k_bits * cfg.order * cfg.encoder.chip_duration == pytest.approx(8e-3)
    assert cfg.chip_amplitude == pytest.approx(0.15)
