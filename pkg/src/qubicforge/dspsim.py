"""Sample-level simulator for the gateware signal path.

The model reproduces the fixed-point datapath of the FPGA design one DAC
sample at a time:

* per-element command sequencers triggered on DSP clock cycles,
* carrier synthesis from a 24-bit phase accumulator through a 16-stage
  CORDIC rotator (16-bit quadrature output at +/-32767 full scale),
* envelope memory reads, complex mixing, and a saturating switch-and-sum
  network onto the DAC pairs,
* digital local oscillator demodulation on the down path with wide
  integer accumulation,
* state classification and conditional command gating,
* accumulation and raw-acquisition capture buffers.

Every arithmetic step is integer and fully deterministic, so two runs of
the same memory image produce bit-identical buffers on any host.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cmdcodec
from .cmdcodec import CommandFields
from .errors import SimulationError

FULL_SCALE = 32767

# ---------------------------------------------------------------------------
# CORDIC rotator

CORDIC_ITERATIONS = 16
_ANGLE_BITS = 30  # internal angle resolution, units of 2**-30 turns
_GUARD_BITS = 10  # fractional guard bits on the x/y datapath

# arctan(2**-i) in units of 2**-30 turns
_ATAN_TABLE = np.array(
    [
        round(math.atan(2.0 ** -i) / (2 * math.pi) * (1 << _ANGLE_BITS))
        for i in range(CORDIC_ITERATIONS)
    ],
    dtype=np.int64,
)

_CORDIC_GAIN = math.prod(math.sqrt(1 + 4.0 ** -i) for i in range(CORDIC_ITERATIONS))
_X_INIT = round(FULL_SCALE / _CORDIC_GAIN * (1 << _GUARD_BITS))

_TURN_BITS = cmdcodec.FREQ_WORD_BITS  # 24-bit turn words
_QUARTER_SHIFT = _TURN_BITS - 2


def cordic_cos_sin(turn_words) -> tuple:
    """Cosine and sine of phase words via integer CORDIC rotation.

    ``turn_words`` holds 24-bit angles in units of 2**-24 turns.  The
    top two bits select the quadrant; the remainder is rotated from the
    positive x axis by 16 shift-add iterations with a gain-compensated
    start vector.  Returns int64 arrays scaled to +/-32767.
    """
    words = np.asarray(turn_words, dtype=np.int64)
    if words.ndim == 0:
        words = words[np.newaxis]
    if np.any((words < 0) | (words >= (1 << _TURN_BITS))):
        raise SimulationError("phase word outside 24 bits")

    quadrant = words >> _QUARTER_SHIFT
    residual = words & ((1 << _QUARTER_SHIFT) - 1)
    # Promote to 2**-30 turn units.
    z = residual << (_ANGLE_BITS - _TURN_BITS)

    x = np.full(words.shape, _X_INIT, dtype=np.int64)
    y = np.zeros(words.shape, dtype=np.int64)
    for i in range(CORDIC_ITERATIONS):
        positive = z >= 0
        xs = x >> i
        ys = y >> i
        x = np.where(positive, x - ys, x + ys)
        y = np.where(positive, y + xs, y - xs)
        z = np.where(positive, z - _ATAN_TABLE[i], z + _ATAN_TABLE[i])

    half = 1 << (_GUARD_BITS - 1)
    c = (x + half) >> _GUARD_BITS
    s = (y + half) >> _GUARD_BITS
    np.clip(c, -FULL_SCALE, FULL_SCALE, out=c)
    np.clip(s, -FULL_SCALE, FULL_SCALE, out=s)

    cos = np.choose(quadrant, [c, -s, -c, s])
    sin = np.choose(quadrant, [s, c, -s, -c])
    return cos, sin


def _div_full_scale(v):
    """Divide by 32767 with round-half-away-from-zero, elementwise."""
    v = np.asarray(v, dtype=np.int64)
    mag = np.abs(v)
    q = (2 * mag + FULL_SCALE) // (2 * FULL_SCALE)
    return np.where(v < 0, -q, q)


# ---------------------------------------------------------------------------
# Program image and run configuration


@dataclass(frozen=True)
class ProgramImage:
    """Raw memory content consumed by the simulator.

    ``commands`` are 128-bit integers in buffer order; ``envelopes`` maps
    an element index to its 32-bit envelope memory words.
    """

    commands: tuple
    envelopes: dict
    repeat_cycles: int

    def __post_init__(self):
        object.__setattr__(self, "commands", tuple(int(c) for c in self.commands))
        object.__setattr__(
            self,
            "envelopes",
            {int(e): tuple(int(w) & 0xFFFFFFFF for w in ws) for e, ws in self.envelopes.items()},
        )
        if self.repeat_cycles < 1:
            raise SimulationError("repeat_cycles must be at least 1")


@dataclass(frozen=True)
class AcqConfig:
    """Raw capture settings: one tap, one unit, a sample count."""

    tap: str = "adc"  # "adc", "dac", or "dlo"
    unit: int = 0  # DAC/ADC pair for adc/dac taps, element for dlo
    length: int = 0

    def __post_init__(self):
        if self.tap not in ("adc", "dac", "dlo"):
            raise SimulationError(f"unknown acquisition tap {self.tap!r}")
        if self.length < 0:
            raise SimulationError("acquisition length must be >= 0")


@dataclass(frozen=True)
class StateClassifier:
    """Thresholds the rotated in-phase accumulator component.

    The flag is set when real((I + jQ) * exp(j*angle)) exceeds the
    threshold, in raw accumulator units.
    """

    angle: float = 0.0
    threshold: float = 0.0

    def classify(self, acc_i, acc_q) -> int:
        rotated = acc_i * math.cos(self.angle) - acc_q * math.sin(self.angle)
        return 1 if rotated > self.threshold else 0


@dataclass
class FaultEntry:
    shot: int
    element: int
    cycle: int
    kind: str
    detail: str


@dataclass
class SimResult:
    shots_requested: int
    shots_completed: int
    acc: dict  # element -> int64 array (n, 2), exact I/Q sums in i32 range
    acq: np.ndarray  # (length, 2) int32, captured on the final shot
    acq_config: AcqConfig
    dac: dict  # pair -> (n_samples, 2) int32, final shot, saturated
    saturation_count: int
    fault_log: list
    flags: dict  # element -> final flag value on the last shot

    def acc_complex(self, element, normalize=True):
        """Accumulator entries as complex numbers, one per window.

        With ``normalize`` the raw sums are scaled by full scale so a
        unit-amplitude tone demodulated at its own frequency integrates
        to roughly the window length in samples.
        """
        entries = self.acc[element]
        vals = entries[:, 0].astype(np.float64) + 1j * entries[:, 1].astype(np.float64)
        if normalize:
            vals = vals / FULL_SCALE
        return vals

    def acq_complex(self):
        return self.acq[:, 0].astype(np.float64) + 1j * self.acq[:, 1].astype(np.float64)


# ---------------------------------------------------------------------------
# Wiring models


class OpenLoop:
    """ADC inputs read constant zero."""

    def read(self, shot, pair, lo, hi, dac_reader, rng):
        return np.zeros((hi - lo, 2), dtype=np.int64)


class Loopback:
    """Each ADC pair observes its own DAC pair after a fixed delay."""

    def __init__(self, delay_samples=0):
        if delay_samples < 0:
            raise SimulationError("loopback delay must be >= 0")
        self.delay_samples = int(delay_samples)

    def read(self, shot, pair, lo, hi, dac_reader, rng):
        d = self.delay_samples
        out = np.zeros((hi - lo, 2), dtype=np.int64)
        src_lo = max(lo - d, 0)
        src_hi = hi - d
        if src_hi > src_lo:
            out[src_lo + d - lo :] = dac_reader(pair, src_lo, src_hi)
        return out


class External:
    """ADC inputs supplied by a user function.

    ``fn(shot, dac_streams, rng)`` must return a mapping from ADC pair
    index to an (n_samples, 2) integer array for the whole shot.  It is
    invoked once per shot at the first ADC read; DAC content written by
    commands that trigger later in the same shot is not visible to it.
    """

    def __init__(self, fn):
        self.fn = fn
        self._cache_shot = None
        self._cache = None

    def read(self, shot, pair, lo, hi, dac_reader, rng):
        if self._cache_shot != shot:
            self._cache = self.fn(shot, dac_reader, rng)
            self._cache_shot = shot
        streams = self._cache
        if pair not in streams:
            return np.zeros((hi - lo, 2), dtype=np.int64)
        arr = np.asarray(streams[pair], dtype=np.int64)
        out = np.zeros((hi - lo, 2), dtype=np.int64)
        n = min(hi, arr.shape[0])
        if n > lo:
            out[: n - lo] = arr[lo:n]
        return out


# ---------------------------------------------------------------------------
# Simulator


class Simulator:
    """Executes a ProgramImage against a hardware description.

    ``condition_map`` routes state flags: it maps a gated element to the
    down element whose classifier feeds its condition bit.  By default
    up element i is gated by down element ``n_up + i`` where one exists.
    ``classifier_map`` assigns a StateClassifier per down element.
    """

    def __init__(self, hw, wiring=None, condition_map=None, classifier_map=None):
        self.hw = hw
        self.wiring = wiring if wiring is not None else OpenLoop()
        self.classifier_map = dict(classifier_map or {})
        n_up = hw.n_processing_elements_up
        if condition_map is None:
            condition_map = {
                i: n_up + i for i in range(min(n_up, hw.n_processing_elements_down))
            }
        self.condition_map = dict(condition_map)

    # -- program loading ----------------------------------------------------

    def validate(self, image: ProgramImage):
        """Reject an image that could not execute; returns None on success."""
        self._decode_program(image)

    def _decode_program(self, image: ProgramImage):
        hw = self.hw
        if len(image.commands) > hw.command_buffer_depth:
            raise SimulationError(
                f"{len(image.commands)} commands exceed buffer depth {hw.command_buffer_depth}"
            )
        spc = hw.samples_per_cycle
        shot_samples = image.repeat_cycles * spc
        per_element = {}
        for pos, word in enumerate(image.commands):
            cmd = cmdcodec.decode(word)
            if cmd.element >= hw.n_elements:
                raise SimulationError(f"command {pos}: element {cmd.element} out of range")
            hw.element_direction(cmd.element)
            if cmd.destination >= hw.n_dac_pairs:
                raise SimulationError(
                    f"command {pos}: destination {cmd.destination} out of range "
                    f"(n_dac_pairs={hw.n_dac_pairs})"
                )
            n0 = cmd.trig_t * spc
            if n0 + cmd.length > shot_samples:
                raise SimulationError(
                    f"command {pos}: window ends at sample {n0 + cmd.length}, "
                    f"beyond the {shot_samples}-sample repeat period"
                )
            per_element.setdefault(cmd.element, []).append((pos, cmd))

        for element, cmds in per_element.items():
            last_end = -1
            prev_trig = -1
            for pos, cmd in cmds:
                if cmd.trig_t < prev_trig:
                    raise SimulationError(
                        f"element {element}: trig_t decreases at command {pos}"
                    )
                n0 = cmd.trig_t * spc
                if n0 < last_end:
                    raise SimulationError(
                        f"element {element}: command {pos} triggers while busy"
                    )
                last_end = max(last_end, n0 + cmd.length)
                prev_trig = cmd.trig_t
        return per_element, shot_samples

    def _envelope_read(self, image, element, start, length, shot, faults):
        depth = self.hw.envelope_buffer_depth
        words = np.zeros(length, dtype=np.int64)
        stored = image.envelopes.get(element, ())
        hi = start + length
        if hi > depth:
            faults.append(
                FaultEntry(
                    shot=shot,
                    element=element,
                    cycle=0,
                    kind="envelope_oob",
                    detail=f"read [{start}, {hi}) beyond depth {depth}; zeros emitted",
                )
            )
            hi = depth
        avail = min(hi, len(stored))
        if avail > start:
            words[: avail - start] = np.array(stored[start:avail], dtype=np.int64)
        i = words >> 16
        q = words & 0xFFFF
        # sign extension for both 16-bit lanes
        i = np.where(i >= 0x8000, i - 0x10000, i)
        q = np.where(q >= 0x8000, q - 0x10000, q)
        return i, q

    @staticmethod
    def _carrier(freq_word, phase_word, n_lo, n_hi):
        """CORDIC carrier over absolute sample indices [n_lo, n_hi)."""
        n = np.arange(n_lo, n_hi, dtype=np.int64)
        turn = ((phase_word << (_TURN_BITS - cmdcodec.PHASE_WORD_BITS)) + freq_word * n) & (
            (1 << _TURN_BITS) - 1
        )
        return cordic_cos_sin(turn)

    # -- execution ----------------------------------------------------------

    def run(
        self,
        image: ProgramImage,
        shots: int = 1,
        acq: AcqConfig = None,
        seed=None,
        start_shot: int = 0,
    ) -> SimResult:
        """Execute ``shots`` repetitions and collect the result buffers.

        ``start_shot`` offsets the shot indices (and their per-shot
        random streams), so a run split into chunks reproduces a single
        contiguous run exactly.
        """
        hw = self.hw
        per_element, shot_samples = self._decode_program(image)
        if acq is not None and acq.length > hw.acq_buffer_depth:
            raise SimulationError(
                f"acquisition length {acq.length} exceeds depth {hw.acq_buffer_depth}"
            )

        n_up = hw.n_processing_elements_up
        down_elements = [e for e in per_element if e >= n_up]
        windows_per_down = {e: len(per_element[e]) for e in down_elements}

        acc = {e: [] for e in down_elements}
        faults = []
        saturation_count = 0
        acq_capture = np.zeros((acq.length if acq else 0, 2), dtype=np.int32)
        dac_final = {}
        flags_final = {}
        shots_completed = 0

        for shot in range(start_shot, start_shot + shots):
            # Stop rather than overflow the accumulation buffers.
            full = any(
                len(acc[e]) + windows_per_down[e] > hw.acc_buffer_depth for e in down_elements
            )
            if full:
                break
            rng = np.random.default_rng(None if seed is None else (seed, shot))
            shot_state = _ShotState(self, image, per_element, shot_samples, shot, rng, faults)
            shot_state.execute(acc)
            saturation_count += shot_state.saturation_count()
            shots_completed += 1
            flags_final = dict(shot_state.flags)
            if acq is not None:
                acq_capture = shot_state.capture(acq)
            dac_final = shot_state.saturated_dac()

        return SimResult(
            shots_requested=shots,
            shots_completed=shots_completed,
            acc={e: np.array(v, dtype=np.int64).reshape(-1, 2) for e, v in acc.items()},
            acq=acq_capture,
            acq_config=acq if acq else AcqConfig(length=0),
            dac=dac_final,
            saturation_count=saturation_count,
            fault_log=faults,
            flags=flags_final,
        )


class _ShotState:
    """One shot's signal state: exact DAC sums, DLO taps, flags."""

    def __init__(self, sim, image, per_element, shot_samples, shot, rng, faults):
        self.sim = sim
        self.image = image
        self.shot = shot
        self.rng = rng
        self.faults = faults
        self.shot_samples = shot_samples
        hw = sim.hw
        self.dac_sum = {
            p: np.zeros((shot_samples, 2), dtype=np.int64) for p in range(hw.n_dac_pairs)
        }
        self.dlo_tap = {}
        self.flags = {}
        self.per_element = per_element
        self._acc_rows = []

    # Saturated view of a DAC pair over [lo, hi).
    def _dac_read(self, pair, lo, hi):
        seg = self.dac_sum[pair][lo:hi]
        return np.clip(seg, -FULL_SCALE, FULL_SCALE)

    def execute(self, acc):
        hw = self.sim.hw
        spc = hw.samples_per_cycle
        # Event order: down-window completions first at a given cycle, so
        # a conditional command triggering on that cycle sees the flag.
        events = []
        for element, cmds in self.per_element.items():
            direction = hw.element_direction(element)
            for pos, cmd in cmds:
                if direction == "up":
                    events.append((cmd.trig_t, 1, element, pos, cmd))
                else:
                    end_cycle = cmd.trig_t + -(-cmd.length // spc)
                    events.append((end_cycle, 0, element, pos, cmd))
        events.sort(key=lambda ev: (ev[0], ev[1], ev[2], ev[3]))

        for cycle, kind, element, pos, cmd in events:
            if cmd.condition:
                source = self.sim.condition_map.get(element)
                if source is None:
                    raise SimulationError(
                        f"element {element} has a conditional command but no flag source"
                    )
                if not self.flags.get(source, 0):
                    continue
            if kind == 1:
                self._run_up(element, cmd)
            else:
                entry = self._run_down(element, cmd)
                acc[element].append(entry)

    def _run_up(self, element, cmd):
        if cmd.length == 0:
            return
        hw = self.sim.hw
        n0 = cmd.trig_t * hw.samples_per_cycle
        n1 = n0 + cmd.length
        ei, eq = self.sim._envelope_read(
            self.image, element, cmd.start, cmd.length, self.shot, self.faults
        )
        ci, cq = self.sim._carrier(cmd.freq_word, cmd.phase_word, n0, n1)
        out_i = _div_full_scale(ei * ci - eq * cq)
        out_q = _div_full_scale(ei * cq + eq * ci)
        dest = self.dac_sum[cmd.destination]
        dest[n0:n1, 0] += out_i
        dest[n0:n1, 1] += out_q

    def _run_down(self, element, cmd):
        hw = self.sim.hw
        n0 = cmd.trig_t * hw.samples_per_cycle
        n1 = n0 + cmd.length
        adc = self.sim.wiring.read(
            self.shot, cmd.destination, n0, n1, self._dac_read, self.rng
        )
        ci, cq = self.sim._carrier(cmd.freq_word, cmd.phase_word, n0, n1)
        if element not in self.dlo_tap:
            self.dlo_tap[element] = np.zeros((self.shot_samples, 2), dtype=np.int64)
        self.dlo_tap[element][n0:n1, 0] = ci
        self.dlo_tap[element][n0:n1, 1] = cq
        ai = adc[:, 0]
        aq = adc[:, 1]
        # conj(dlo) demodulation with exact wide accumulation; one final
        # division keeps the entry within i32.
        sum_i = int(np.sum(ai * ci + aq * cq))
        sum_q = int(np.sum(aq * ci - ai * cq))
        entry_i = int(_div_full_scale(np.int64(sum_i)))
        entry_q = int(_div_full_scale(np.int64(sum_q)))
        classifier = self.sim.classifier_map.get(element, StateClassifier())
        self.flags[element] = classifier.classify(entry_i, entry_q)
        return (entry_i, entry_q)

    def saturation_count(self):
        count = 0
        for arr in self.dac_sum.values():
            count += int(np.count_nonzero(np.abs(arr) > FULL_SCALE))
        return count

    def saturated_dac(self):
        return {
            p: np.clip(arr, -FULL_SCALE, FULL_SCALE).astype(np.int32)
            for p, arr in self.dac_sum.items()
        }

    def capture(self, acq: AcqConfig):
        n = min(acq.length, self.shot_samples)
        out = np.zeros((acq.length, 2), dtype=np.int32)
        if acq.tap == "dac":
            if acq.unit not in self.dac_sum:
                raise SimulationError(f"no DAC pair {acq.unit}")
            out[:n] = self._dac_read(acq.unit, 0, n)
        elif acq.tap == "adc":
            if acq.unit >= self.sim.hw.n_dac_pairs:
                raise SimulationError(f"no ADC pair {acq.unit}")
            out[:n] = self.sim.wiring.read(self.shot, acq.unit, 0, n, self._dac_read, self.rng)
        else:
            tap = self.dlo_tap.get(acq.unit)
            if tap is not None:
                out[:n] = tap[:n]
        return out
