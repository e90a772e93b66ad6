"""Configuration loaders: schema checks, symbolic resolution, roundtrips."""

import json
import math

import pytest

from qubicforge import ConfigError
from qubicforge.chipcfg import (
    ChannelAssignment,
    load_chip_config,
    load_gate_spec,
    load_hardware_config,
    parse_phase,
    standard_channel_map,
)

CHIP = {
    "qubits": {
        "Q6": {"drive_freq": 5.5e9, "readout_freq": 6.52e9},
        "Q7": {"drive_freq": 5.32e9, "readout_freq": 6.6e9},
    }
}

GATES = {
    "gates": {
        "Q6Y180": [
            {
                "dest": "Q6.qdrv",
                "t0": 0.0,
                "twidth": 96e-9,
                "fcarrier": "Q6.freq",
                "pcarrier": "pi/2",
                "amp": 0.873,
                "env": {"kind": "DRAG", "params": {"sigma_fraction": 0.25, "alpha": 0.5}},
            }
        ],
        "Q6read": [
            {
                "dest": "Q6.rdrv",
                "t0": 0.0,
                "twidth": 1e-6,
                "fcarrier": "Q6.readfreq",
                "pcarrier": 0.0,
                "amp": 0.25,
                "env": {"kind": "square"},
            },
            {
                "dest": "Q6.read",
                "t0": 0.0,
                "twidth": 1e-6,
                "fcarrier": "Q6.readfreq",
                "pcarrier": 0.0,
                "amp": 1.0,
                "env": {"kind": "square"},
            },
        ],
    }
}


class TestChipConfig:
    def test_load(self):
        chip = load_chip_config(json.dumps(CHIP))
        assert chip.qubits["Q6"].drive_freq == 5.5e9
        assert chip.qubits["Q6"].readout_freq == 6.52e9

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "chip.json"
        p.write_text(json.dumps(CHIP))
        chip = load_chip_config(str(p))
        assert "Q7" in chip.qubits

    def test_negative_frequency_rejected(self):
        bad = {"qubits": {"Q0": {"drive_freq": -5e9, "readout_freq": 6e9}}}
        with pytest.raises(ConfigError, match="drive_freq"):
            load_chip_config(json.dumps(bad))

    def test_missing_field_rejected(self):
        bad = {"qubits": {"Q0": {"drive_freq": 5e9}}}
        with pytest.raises(ConfigError, match="readout_freq"):
            load_chip_config(json.dumps(bad))

    def test_unknown_field_rejected(self):
        bad = {"qubits": {"Q0": {"drive_freq": 5e9, "readout_freq": 6e9, "anharm": -0.2}}}
        with pytest.raises(ConfigError, match="anharm"):
            load_chip_config(json.dumps(bad))

    def test_unknown_version_rejected(self):
        bad = dict(CHIP, version=99)
        with pytest.raises(ConfigError, match="version"):
            load_chip_config(json.dumps(bad))

    def test_malformed_json(self):
        with pytest.raises(ConfigError, match="JSON"):
            load_chip_config("{not json")

    def test_symbolic_resolution(self):
        chip = load_chip_config(json.dumps(CHIP))
        assert chip.resolve_carrier("Q6.freq") == 5.5e9
        assert chip.resolve_carrier("Q6.readfreq") == 6.52e9
        assert chip.resolve_carrier(123.0) == 123.0

    def test_unresolved_reference(self):
        chip = load_chip_config(json.dumps(CHIP))
        with pytest.raises(ConfigError, match="Q9"):
            chip.resolve_carrier("Q9.freq")
        with pytest.raises(ConfigError, match="readfreq"):
            chip.resolve_carrier("Q6.anharm")

    def test_roundtrip(self):
        chip = load_chip_config(json.dumps(CHIP))
        again = load_chip_config(chip.to_json())
        assert again == chip


class TestPhaseParsing:
    def test_numeric(self):
        assert parse_phase(1.25) == 1.25

    def test_pi_expressions(self):
        assert parse_phase("pi/2") == pytest.approx(math.pi / 2)
        assert parse_phase("-pi/2") == pytest.approx(-math.pi / 2)
        assert parse_phase("numpy.pi/2") == pytest.approx(math.pi / 2)
        assert parse_phase("3*pi/4") == pytest.approx(3 * math.pi / 4)

    def test_rejects_arbitrary_code(self):
        with pytest.raises(ConfigError):
            parse_phase("__import__('os')")
        with pytest.raises(ConfigError):
            parse_phase("pi ** 2")


class TestGateSpec:
    def test_load_resolves_carriers(self):
        chip = load_chip_config(json.dumps(CHIP))
        spec = load_gate_spec(json.dumps(GATES), chip)
        (pulse,) = spec.pulses("Q6Y180")
        assert pulse.fcarrier == 5.5e9
        assert pulse.pcarrier == pytest.approx(math.pi / 2)
        assert pulse.amp == 0.873
        assert pulse.env.kind == "DRAG"

    def test_duration(self):
        chip = load_chip_config(json.dumps(CHIP))
        spec = load_gate_spec(json.dumps(GATES), chip)
        assert spec.duration("Q6Y180") == pytest.approx(96e-9)
        assert spec.duration("Q6read") == pytest.approx(1e-6)

    def test_zero_amp_is_valid(self):
        chip = load_chip_config(json.dumps(CHIP))
        gates = {
            "gates": {
                "null": [
                    {
                        "dest": "Q6.qdrv",
                        "twidth": 32e-9,
                        "fcarrier": 0.0,
                        "amp": 0.0,
                        "env": {"kind": "square"},
                    }
                ]
            }
        }
        spec = load_gate_spec(json.dumps(gates), chip)
        assert spec.pulses("null")[0].amp == 0.0

    def test_amp_above_one_rejected(self):
        chip = load_chip_config(json.dumps(CHIP))
        bad = json.loads(json.dumps(GATES))
        bad["gates"]["Q6Y180"][0]["amp"] = 1.2
        with pytest.raises(ConfigError, match="amp"):
            load_gate_spec(json.dumps(bad), chip)

    def test_negative_t0_rejected(self):
        chip = load_chip_config(json.dumps(CHIP))
        bad = json.loads(json.dumps(GATES))
        bad["gates"]["Q6Y180"][0]["t0"] = -1e-9
        with pytest.raises(ConfigError, match="t0"):
            load_gate_spec(json.dumps(bad), chip)

    def test_unresolvable_carrier_rejected(self):
        chip = load_chip_config(json.dumps(CHIP))
        bad = json.loads(json.dumps(GATES))
        bad["gates"]["Q6Y180"][0]["fcarrier"] = "Q99.freq"
        with pytest.raises(ConfigError, match="Q99"):
            load_gate_spec(json.dumps(bad), chip)

    def test_roundtrip_after_resolution(self):
        chip = load_chip_config(json.dumps(CHIP))
        spec = load_gate_spec(json.dumps(GATES), chip)
        again = load_gate_spec(spec.to_json(), chip)
        assert again == spec


class TestHardwareConfig:
    def test_defaults(self):
        hw = load_hardware_config("{}")
        assert hw.dac_sample_rate == 1e9
        assert hw.dsp_clock == 250e6
        assert hw.samples_per_cycle == 4
        assert hw.envelope_buffer_depth == 1024
        assert hw.command_buffer_depth == 65536

    def test_rate_ratio_must_be_integer(self):
        with pytest.raises(ConfigError, match="multiple"):
            load_hardware_config(json.dumps({"dac_sample_rate": 1e9, "dsp_clock": 300e6}))

    def test_envelope_depth_capped(self):
        with pytest.raises(ConfigError, match="envelope_buffer_depth"):
            load_hardware_config(json.dumps({"envelope_buffer_depth": 8192}))

    def test_destination_range_checked(self):
        cfg = {
            "n_dac_pairs": 2,
            "channel_map": {"Q0.qdrv": {"element": 0, "destination": 2, "direction": "up"}},
        }
        with pytest.raises(ConfigError, match="destination"):
            load_hardware_config(json.dumps(cfg))

    def test_down_element_index_space(self):
        # Down elements live above the up elements in one index space.
        cfg = {
            "n_processing_elements_up": 4,
            "n_processing_elements_down": 2,
            "channel_map": {"Q0.read": {"element": 4, "destination": 0, "direction": "down"}},
        }
        hw = load_hardware_config(json.dumps(cfg))
        assert hw.element_direction(4) == "down"
        assert hw.element_direction(0) == "up"
        bad = json.loads(json.dumps(cfg))
        bad["channel_map"]["Q0.read"]["element"] = 1
        with pytest.raises(ConfigError, match="down element"):
            load_hardware_config(json.dumps(bad))

    def test_roundtrip(self):
        cfg = {
            "dac_sample_rate": 2e9,
            "dsp_clock": 500e6,
            "channel_map": {"Q0.qdrv": {"element": 3, "destination": 1, "direction": "up"}},
        }
        hw = load_hardware_config(json.dumps(cfg))
        again = load_hardware_config(hw.to_json())
        assert again == hw

    def test_standard_channel_map(self):
        cmap = standard_channel_map(["Q6", "Q7"])
        assert cmap["Q6.qdrv"] == ChannelAssignment(0, 0, "up")
        assert cmap["Q7.qdrv"].element == 1
        assert cmap["Q6.read"].direction == "down"
        assert cmap["Q6.read"].element == 16
        # Readout channels share the last DAC/ADC pair.
        assert cmap["Q6.rdrv"].destination == cmap["Q7.read"].destination == 3
        hw_json = {"channel_map": {k: vars(v) for k, v in cmap.items()}}
        hw = load_hardware_config(json.dumps(hw_json))
        assert hw.channel("Q6.qdrv").element == 0
