"""Command word encode/decode and frequency/phase quantization."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qubicforge import EncodingError
from qubicforge.cmdcodec import (
    COMMAND_BITS,
    FREQ_WORD_BITS,
    PHASE_WORD_BITS,
    CommandFields,
    command_from_bytes,
    command_to_bytes,
    decode,
    encode,
    freq_to_word,
    phase_to_word,
    word_to_freq,
    word_to_phase,
)

MAXED = CommandFields(
    trig_t=(1 << 24) - 1,
    element=(1 << 8) - 1,
    phase_word=(1 << 14) - 1,
    length=(1 << 12) - 1,
    start=(1 << 12) - 1,
    destination=3,
    freq_word=(1 << 24) - 1,
    condition=1,
)


def field_strategy():
    return st.builds(
        CommandFields,
        trig_t=st.integers(0, (1 << 24) - 1),
        element=st.integers(0, 255),
        phase_word=st.integers(0, (1 << 14) - 1),
        length=st.integers(0, (1 << 12) - 1),
        start=st.integers(0, (1 << 12) - 1),
        destination=st.integers(0, 3),
        freq_word=st.integers(0, (1 << 24) - 1),
        condition=st.integers(0, 1),
    )


class TestLayout:
    def test_total_width(self):
        assert COMMAND_BITS == 128
        assert encode(MAXED) < (1 << 128)

    def test_zero(self):
        assert encode(CommandFields()) == 0
        assert decode(0) == CommandFields()

    def test_known_positions(self):
        # Each field sits at a fixed offset; probe one bit per field.
        assert encode(CommandFields(trig_t=1)) == 1 << 0
        assert encode(CommandFields(element=1)) == 1 << 24
        assert encode(CommandFields(phase_word=1)) == 1 << 32
        assert encode(CommandFields(length=1)) == 1 << 46
        assert encode(CommandFields(start=1)) == 1 << 58
        assert encode(CommandFields(destination=1)) == 1 << 70
        assert encode(CommandFields(freq_word=1)) == 1 << 72
        assert encode(CommandFields(condition=1)) == 1 << 96

    def test_msb_31_reserved(self):
        # Condition occupies bit 96; everything above is reserved zero.
        assert encode(MAXED) < (1 << 97)
        with pytest.raises(EncodingError):
            decode(1 << 97)
        # Permissive mode tolerates the reserved bits instead.
        assert decode(1 << 97, strict=False) == CommandFields()

    def test_field_overflow_rejected(self):
        with pytest.raises(EncodingError):
            encode(CommandFields(destination=4))
        with pytest.raises(EncodingError):
            encode(CommandFields(freq_word=1 << 24))
        with pytest.raises(EncodingError):
            encode(CommandFields(trig_t=-1))

    @given(field_strategy())
    @settings(max_examples=300)
    def test_roundtrip(self, fields):
        assert decode(encode(fields)) == fields

    @given(field_strategy())
    @settings(max_examples=200)
    def test_bytes_roundtrip(self, fields):
        blob = command_to_bytes(fields)
        assert len(blob) == 16
        assert command_from_bytes(blob) == fields

    def test_bytes_big_endian(self):
        # trig_t occupies the least significant bits, so it lands in the
        # final bytes of the big-endian serialization.
        blob = command_to_bytes(CommandFields(trig_t=0xABCDEF))
        assert blob[-3:] == bytes([0xAB, 0xCD, 0xEF])
        assert all(b == 0 for b in blob[:-3])


class TestFrequencyWord:
    def test_step_size(self):
        # 24-bit word spanning 1 GSPS: one LSB is 10^9 / 2^24 Hz.
        step = 1e9 / (1 << FREQ_WORD_BITS)
        assert step == pytest.approx(59.604644775390625, abs=0)
        assert word_to_freq(1, 1e9) == pytest.approx(step)

    def test_round_half_up(self):
        step = 1e9 / (1 << 24)
        assert freq_to_word(0.5 * step, 1e9) == 1
        assert freq_to_word(1.5 * step, 1e9) == 2
        assert freq_to_word(0.49 * step, 1e9) == 0

    def test_wraps_at_full_scale(self):
        # Rounding just under the sample rate must wrap, not overflow.
        hi = 1e9 * (1 - 2 ** -26)
        assert freq_to_word(hi, 1e9) == 0

    def test_aliasing(self):
        # Carriers above the sample rate alias modulo the sample rate.
        assert freq_to_word(5.5e9, 1e9) == freq_to_word(0.5e9, 1e9) == 1 << 23

    def test_negative_rejected(self):
        with pytest.raises(EncodingError):
            freq_to_word(-1.0, 1e9)

    @given(st.integers(0, (1 << 24) - 1))
    @settings(max_examples=300)
    def test_word_roundtrip_exact(self, word):
        assert freq_to_word(word_to_freq(word, 1e9), 1e9) == word

    @given(st.floats(0, 0.999e9))
    @settings(max_examples=300)
    def test_quantization_error_bounded(self, f):
        step = 1e9 / (1 << 24)
        word = freq_to_word(f, 1e9)
        err = abs(word_to_freq(word, 1e9) - f)
        # Modular distance: wrap-around at the top of the band is fine.
        err = min(err, 1e9 - err)
        assert err <= step / 2 + 1e-9


class TestPhaseWord:
    def test_step_size(self):
        step = 2 * math.pi / (1 << PHASE_WORD_BITS)
        assert math.degrees(step) == pytest.approx(0.021972656, rel=1e-6)
        assert word_to_phase(1) == pytest.approx(step)

    def test_quarter_turn(self):
        assert phase_to_word(math.pi / 2) == 1 << 12
        assert phase_to_word(-math.pi / 2) == 3 << 12
        assert phase_to_word(math.pi) == 1 << 13

    def test_wraps(self):
        assert phase_to_word(2 * math.pi) == 0
        assert phase_to_word(4 * math.pi + math.pi / 2) == 1 << 12

    @given(st.integers(0, (1 << 14) - 1))
    @settings(max_examples=300)
    def test_word_roundtrip_exact(self, word):
        assert phase_to_word(word_to_phase(word)) == word

    @given(st.floats(-50.0, 50.0))
    @settings(max_examples=300)
    def test_quantization_error_bounded(self, phi):
        step = 2 * math.pi / (1 << 14)
        back = word_to_phase(phase_to_word(phi))
        err = abs((back - phi + math.pi) % (2 * math.pi) - math.pi)
        assert err <= step / 2 + 1e-9
