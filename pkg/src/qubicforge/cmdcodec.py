"""Bit-exact codec for the 128-bit pulse command and its carrier words.

A command fully parameterizes one pulse: when it starts (``trig_t``, in
DSP-clock cycles), which envelope region it plays (``start``/``length``),
the carrier (24-bit frequency word, 14-bit phase word), and the routing
(processing element, destination DAC pair) plus a 1-bit condition flag
used for state-conditioned pulses.

Field layout, MSB to LSB::

    reserved(31) | condition(1) | freq_word(24) | destination(2) |
    start(12) | length(12) | phase_word(14) | element(8) | trig_t(24)

Reserved bits sit at the extreme MSB end and must be zero.  On the wire
the 128-bit word is transmitted big-endian (MSB first); see
``docs/protocol.md``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EncodingError

COMMAND_BITS = 128

FREQ_WORD_BITS = 24
PHASE_WORD_BITS = 14
TRIG_T_BITS = 24
START_BITS = 12
LENGTH_BITS = 12
ELEMENT_BITS = 8
DESTINATION_BITS = 2
CONDITION_BITS = 1
RESERVED_BITS = 31

# (name, width) from LSB upward; reserved lands at the MSB end.
_FIELD_LAYOUT = (
    ("trig_t", TRIG_T_BITS),
    ("element", ELEMENT_BITS),
    ("phase_word", PHASE_WORD_BITS),
    ("length", LENGTH_BITS),
    ("start", START_BITS),
    ("destination", DESTINATION_BITS),
    ("freq_word", FREQ_WORD_BITS),
    ("condition", CONDITION_BITS),
    ("reserved", RESERVED_BITS),
)

assert sum(w for _, w in _FIELD_LAYOUT) == COMMAND_BITS

_FIELD_OFFSETS = {}
_off = 0
for _name, _width in _FIELD_LAYOUT:
    _FIELD_OFFSETS[_name] = (_off, _width)
    _off += _width
del _off, _name, _width


@dataclass(frozen=True)
class CommandFields:
    """Decoded view of one 128-bit command."""

    trig_t: int = 0
    start: int = 0
    length: int = 0
    freq_word: int = 0
    phase_word: int = 0
    element: int = 0
    destination: int = 0
    condition: int = 0

    def validate(self):
        for name, (offset, width) in _FIELD_OFFSETS.items():
            if name == "reserved":
                continue
            value = getattr(self, name)
            if not isinstance(value, int):
                raise EncodingError(f"field {name} must be an integer, got {value!r}")
            if not 0 <= value < (1 << width):
                raise EncodingError(
                    f"field {name}={value} does not fit {width} bits"
                )


def encode(fields: CommandFields) -> int:
    """Pack ``fields`` into a 128-bit integer. Raises on field overflow."""
    fields.validate()
    word = 0
    for name, (offset, width) in _FIELD_OFFSETS.items():
        if name == "reserved":
            continue
        word |= getattr(fields, name) << offset
    return word


def decode(word: int, strict: bool = True) -> CommandFields:
    """Unpack a 128-bit integer into its fields.

    In strict mode a nonzero reserved field is rejected; otherwise the
    reserved bits are silently discarded.
    """
    if not 0 <= word < (1 << COMMAND_BITS):
        raise EncodingError(f"command word does not fit {COMMAND_BITS} bits")
    offset, width = _FIELD_OFFSETS["reserved"]
    if strict and (word >> offset) & ((1 << width) - 1):
        raise EncodingError("nonzero reserved bits in strict decode")
    values = {}
    for name, (offset, width) in _FIELD_OFFSETS.items():
        if name == "reserved":
            continue
        values[name] = (word >> offset) & ((1 << width) - 1)
    return CommandFields(**values)


def command_to_bytes(word) -> bytes:
    """Serialize one command big-endian (MSB first), 16 bytes.

    Accepts either the packed integer or a CommandFields record.
    """
    if isinstance(word, CommandFields):
        word = encode(word)
    return word.to_bytes(COMMAND_BITS // 8, "big")


def command_from_bytes(data: bytes, strict: bool = True) -> CommandFields:
    if len(data) != COMMAND_BITS // 8:
        raise EncodingError(f"command must be {COMMAND_BITS // 8} bytes, got {len(data)}")
    return decode(int.from_bytes(data, "big"), strict=strict)


def _round_half_up(x: float) -> int:
    # Python round() is round-half-even; the codec is round-half-up.
    return math.floor(x + 0.5)


def freq_to_word(f: float, sample_rate: float) -> int:
    """Quantize a carrier frequency to the 24-bit accumulator step.

    One step is ``sample_rate / 2**24`` (about 60 Hz at 1 GSPS).  The
    oscillator synthesizes quadrature samples, so the usable band is the
    full [0, sample_rate); carriers at or above the sample rate alias
    modulo the sample rate, as does a value rounding up to a full turn.
    """
    if not (math.isfinite(f) and f >= 0):
        raise EncodingError(f"carrier frequency must be finite and >= 0, got {f}")
    turns = (f / sample_rate) % 1.0
    return _round_half_up(turns * (1 << FREQ_WORD_BITS)) % (1 << FREQ_WORD_BITS)


def word_to_freq(word: int, sample_rate: float) -> float:
    if not 0 <= word < (1 << FREQ_WORD_BITS):
        raise EncodingError(f"frequency word {word} does not fit {FREQ_WORD_BITS} bits")
    return word * sample_rate / (1 << FREQ_WORD_BITS)


def phase_to_word(phi: float) -> int:
    """Quantize a phase (radians) to the 14-bit step of 2*pi/2**14.

    Any finite phase is accepted and wrapped into [0, 2*pi) first.
    """
    if not math.isfinite(phi):
        raise EncodingError(f"phase must be finite, got {phi}")
    turns = (phi / (2 * math.pi)) % 1.0
    return _round_half_up(turns * (1 << PHASE_WORD_BITS)) % (1 << PHASE_WORD_BITS)


def word_to_phase(word: int) -> float:
    if not 0 <= word < (1 << PHASE_WORD_BITS):
        raise EncodingError(f"phase word {word} does not fit {PHASE_WORD_BITS} bits")
    return word * 2 * math.pi / (1 << PHASE_WORD_BITS)
