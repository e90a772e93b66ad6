"""Three-stage pulse compiler.

A circuit (gate names plus virtual-Z rotations) is lowered in three
steps, each with an inspectable intermediate form:

1. ``schedule`` assigns each gate a start cycle, as-soon-as-possible per
   qubit, with gate durations rounded up to whole DSP clock cycles.
2. ``lower_to_tp`` expands gates into TimePulse records: absolute start
   time, destination channel, carrier frequency and phase (virtual-Z
   rotations fold into the phase of later drive pulses), amplitude,
   width, envelope.
3. ``lower_to_nv`` quantizes each TimePulse into a 128-bit command and
   allocates envelope memory, producing the raw buffers a device loads.

Envelope allocation has two strategies.  The dynamic allocator ("optm")
walks pulses in time order, shares identical stored envelopes, spills to
another free element when a buffer fills, and validates element timing
conflicts.  The static allocator ("runc") lays out every gate in the
gate set up front (sorted by name) so repeated compilations skip
allocation and validation work; parameter overrides that would alter a
stored envelope are rejected there.  Both produce bit-identical output
waveforms for any circuit they both accept.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import cmdcodec
from .chipcfg import (
    ChipConfig,
    GatePulseSpec,
    HardwareConfig,
    parse_envelope,
    parse_phase,
    _load_json,
)
from .cmdcodec import CommandFields
from .dspsim import ProgramImage, Simulator
from .envgen import Envelope, EnvelopeSpec, generate, pack
from .errors import CompileError, ConfigError

_REL_TOL = 1e-6


def _snap(value):
    """Round to the nearest integer when within relative tolerance."""
    nearest = round(value)
    if abs(value - nearest) <= _REL_TOL * max(1.0, abs(value)):
        return float(nearest)
    return value


def _to_cycles(t, dsp_clock, what):
    """Convert seconds to an exact integer cycle count or fail."""
    cycles = _snap(t * dsp_clock)
    if cycles != int(cycles):
        raise CompileError(
            f"{what} of {t} s is not aligned to the {1.0 / dsp_clock} s DSP cycle"
        )
    return int(cycles)


def _ceil_samples(twidth, sample_rate):
    """Pulse length in DAC samples, rounded up (tolerantly)."""
    exact = _snap(twidth * sample_rate)
    return int(math.ceil(exact))


# ---------------------------------------------------------------------------
# Circuit form


@dataclass(frozen=True)
class GateOp:
    name: str
    qubits: tuple = ()
    start_time: float = None  # seconds; None = as soon as possible
    modify: dict = None  # parameter overrides, applied to every pulse


@dataclass(frozen=True)
class VirtualZ:
    qubit: str
    phase: float  # radians, added to later drive pulses on this qubit


@dataclass(frozen=True)
class Circuit:
    ops: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))


def load_circuit(path_or_text) -> Circuit:
    """Parse the JSON circuit form.

    Each entry is either a gate application::

        {"gate": "Y180", "qubits": ["Q6"]}

    with optional "start_time" (seconds) and "modify" (overrides for
    amp, fcarrier, pcarrier, twidth, env_params), or a frame rotation::

        {"virtual_z": {"qubit": "Q6", "phase": "pi/2"}}
    """
    data = _load_json(path_or_text)
    version = data.get("version", 1)
    if version != 1:
        raise ConfigError(f"unknown schema version {version!r}", path="version")
    raw_ops = data.get("ops")
    if not isinstance(raw_ops, list):
        raise ConfigError("expected a list", path="ops")
    ops = []
    for k, entry in enumerate(raw_ops):
        where = f"ops[{k}]"
        if not isinstance(entry, dict):
            raise ConfigError("expected an object", path=where)
        if "virtual_z" in entry:
            if set(entry) != {"virtual_z"}:
                raise ConfigError("virtual_z takes no other fields", path=where)
            vz = entry["virtual_z"]
            if not isinstance(vz, dict) or set(vz) != {"qubit", "phase"}:
                raise ConfigError("virtual_z needs exactly qubit and phase", path=where)
            ops.append(
                VirtualZ(qubit=str(vz["qubit"]), phase=parse_phase(vz["phase"], where))
            )
            continue
        if "gate" not in entry:
            raise ConfigError("expected a gate or virtual_z entry", path=where)
        unknown = set(entry) - {"gate", "qubits", "start_time", "modify"}
        if unknown:
            raise ConfigError(f"unknown fields {sorted(unknown)}", path=where)
        qubits = entry.get("qubits", [])
        if not isinstance(qubits, list):
            raise ConfigError("qubits must be a list", path=where)
        start_time = entry.get("start_time")
        if start_time is not None and (
            isinstance(start_time, bool) or not isinstance(start_time, (int, float))
        ):
            raise ConfigError("start_time must be a number", path=where)
        modify = entry.get("modify")
        if modify is not None and not isinstance(modify, dict):
            raise ConfigError("modify must be an object", path=where)
        ops.append(
            GateOp(
                name=str(entry["gate"]),
                qubits=tuple(str(q) for q in qubits),
                start_time=None if start_time is None else float(start_time),
                modify=modify,
            )
        )
    return Circuit(ops=tuple(ops))


def resolve_gate_name(op: GateOp, gates: GatePulseSpec) -> str:
    """Exact gate key, else the qubit names joined in front of it."""
    if op.name in gates:
        return op.name
    joined = "".join(op.qubits) + op.name
    if joined in gates:
        return joined
    raise CompileError(f"unknown gate {op.name!r} for qubits {list(op.qubits)}")


# ---------------------------------------------------------------------------
# Step 1: schedule


@dataclass(frozen=True)
class ScheduledGate:
    op: GateOp
    resolved_name: str
    start_cycle: int
    duration_cycles: int


@dataclass(frozen=True)
class ScheduledCircuit:
    items: tuple  # ScheduledGate | VirtualZ, program order
    total_cycles: int


def schedule(circuit: Circuit, gates: GatePulseSpec, hw: HardwareConfig) -> ScheduledCircuit:
    """Assign start cycles, as soon as possible on each qubit's timeline.

    A gate occupies all its qubits for its duration, rounded up to whole
    DSP cycles.  An explicit start_time pins the gate; pinning a gate
    before a qubit's frontier is an error.
    """
    frontier = {}
    items = []
    total = 0
    for op in circuit.ops:
        if isinstance(op, VirtualZ):
            items.append(op)
            continue
        name = resolve_gate_name(op, gates)
        # Overridden width stretches the footprint too.
        duration_s = gates.duration(name)
        if op.modify and "twidth" in op.modify:
            width = op.modify["twidth"]
            base = max(p.t0 for p in gates.pulses(name))
            duration_s = base + float(width)
        dur = max(1, math.ceil(_snap(duration_s * hw.dsp_clock)))
        ready = max((frontier.get(q, 0) for q in op.qubits), default=0)
        if op.start_time is None:
            start = ready
        else:
            start = _to_cycles(op.start_time, hw.dsp_clock, "start_time")
            if start < ready:
                raise CompileError(
                    f"gate {name!r} pinned to cycle {start} overlaps earlier work "
                    f"(qubit free at cycle {ready})"
                )
        for q in op.qubits:
            frontier[q] = start + dur
        total = max(total, start + dur)
        items.append(
            ScheduledGate(op=op, resolved_name=name, start_cycle=start, duration_cycles=dur)
        )
    return ScheduledCircuit(items=tuple(items), total_cycles=total)


# ---------------------------------------------------------------------------
# Step 2: TimePulse lowering


@dataclass(frozen=True)
class TimePulse:
    """A fully resolved pulse instance on the absolute timeline."""

    t: float  # seconds
    dest: str  # channel name
    fcarrier: float  # Hz
    pcarrier: float  # radians, virtual-Z already applied
    amp: float
    twidth: float  # seconds
    env: EnvelopeSpec
    source: tuple = None  # (gate name, pulse index) provenance


_OVERRIDE_KEYS = {"amp", "fcarrier", "pcarrier", "twidth", "env_params", "env"}


def _apply_modify(pulse, modify, chip, where):
    if not modify:
        return pulse
    unknown = set(modify) - _OVERRIDE_KEYS
    if unknown:
        raise CompileError(f"{where}: unknown override fields {sorted(unknown)}")
    changes = {}
    if "amp" in modify:
        amp = float(modify["amp"])
        if not 0 <= amp <= 1:
            raise CompileError(f"{where}: amp override {amp} outside [0, 1]")
        changes["amp"] = amp
    if "fcarrier" in modify:
        changes["fcarrier"] = chip.resolve_carrier(modify["fcarrier"], where)
    if "pcarrier" in modify:
        changes["pcarrier"] = parse_phase(modify["pcarrier"], where)
    if "twidth" in modify:
        width = float(modify["twidth"])
        if width <= 0:
            raise CompileError(f"{where}: twidth override must be positive")
        changes["twidth"] = width
    if "env" in modify:
        changes["env"] = parse_envelope(modify["env"], where)
    elif "env_params" in modify:
        merged = dict(pulse.env.params)
        merged.update(modify["env_params"])
        changes["env"] = EnvelopeSpec(
            kind=pulse.env.kind, params=merged, samples=pulse.env.samples
        )
    return pulse.replace(**changes)


def _drive_qubit(dest: str):
    """Qubit name when ``dest`` is a drive channel, else None.

    Virtual-Z frame rotations track the qubit's rotating frame, which
    only the ``<q>.qdrv`` channel follows.
    """
    qubit, _, kind = dest.partition(".")
    return qubit if kind == "qdrv" else None


def lower_to_tp(
    scheduled: ScheduledCircuit,
    gates: GatePulseSpec,
    chip: ChipConfig,
    hw: HardwareConfig,
) -> tuple:
    """Expand scheduled gates into TimePulses.

    Virtual-Z accumulates per qubit in program order and adds to the
    carrier phase of every later pulse on that qubit's drive channel.
    """
    phase_acc = {}
    period = hw.dsp_period
    out = []
    for item in scheduled.items:
        if isinstance(item, VirtualZ):
            phase_acc[item.qubit] = phase_acc.get(item.qubit, 0.0) + item.phase
            continue
        t_gate = item.start_cycle * period
        for idx, pulse in enumerate(gates.pulses(item.resolved_name)):
            pulse = _apply_modify(
                pulse, item.op.modify, chip, f"gate {item.resolved_name!r}"
            )
            drive_q = _drive_qubit(pulse.dest)
            phase = pulse.pcarrier + (phase_acc.get(drive_q, 0.0) if drive_q else 0.0)
            out.append(
                TimePulse(
                    t=t_gate + pulse.t0,
                    dest=pulse.dest,
                    fcarrier=pulse.fcarrier,
                    pcarrier=phase,
                    amp=pulse.amp,
                    twidth=pulse.twidth,
                    env=pulse.env,
                    source=(item.resolved_name, idx),
                )
            )
    return tuple(out)


# ---------------------------------------------------------------------------
# Step 3: command/envelope lowering


@dataclass(frozen=True)
class EnvelopeRegion:
    element: int
    start: int
    length: int


class _EnvelopeCache:
    """Quantized amp-scaled envelope words, computed once per product."""

    def __init__(self, sample_rate):
        self.sample_rate = sample_rate
        self._cache = {}

    def words(self, env_spec: EnvelopeSpec, twidth: float, amp: float):
        n = _ceil_samples(twidth, self.sample_rate)
        key = (env_spec.dedup_key(), n, amp)
        got = self._cache.get(key)
        if got is None:
            envelope = generate(env_spec, n / self.sample_rate, 1.0 / self.sample_rate)
            scaled = Envelope(envelope.samples * amp, envelope.dt)
            got = pack(scaled).words
            self._cache[key] = got
        return got


class _DynamicAllocator:
    """Greedy time-ordered allocation with sharing and spill.

    Identical stored envelopes on an element share one region (unless
    dedup is off).  When an element's buffer is full the pulse spills to
    another up element that is free over the window, since the command's
    destination field, not its element, selects the DAC pair.
    """

    name = "optm"

    def __init__(self, hw, dedup=True):
        self.hw = hw
        self.dedup = dedup
        self.memory = {}  # element -> list of stored words
        self.regions = {}  # (element, words) -> start
        self.busy = {}  # element -> list of (n0, n1)
        self.layout = {}  # element -> list of (start, length, label)

    def _has_room(self, element, n_words):
        return len(self.memory.get(element, ())) + n_words <= self.hw.envelope_buffer_depth

    def _time_free(self, element, n0, n1):
        return all(hi <= n0 or lo >= n1 for lo, hi in self.busy.get(element, ()))

    def _reserve_time(self, element, n0, n1, what):
        if not self._time_free(element, n0, n1):
            raise CompileError(
                f"{what}: element {element} is busy during samples [{n0}, {n1})"
            )
        self.busy.setdefault(element, []).append((n0, n1))

    def place_up(self, element, words, n0, n1, label):
        hw = self.hw
        candidates = [element] + [
            e for e in range(hw.n_processing_elements_up) if e != element
        ]
        if not self._time_free(element, n0, n1):
            raise CompileError(
                f"{label}: element {element} is busy during samples [{n0}, {n1})"
            )
        for cand in candidates:
            if cand != element and not self._time_free(cand, n0, n1):
                continue
            if self.dedup and (cand, words) in self.regions:
                start = self.regions[(cand, words)]
                self._reserve_time(cand, n0, n1, label)
                return cand, start
            if self._has_room(cand, len(words)):
                mem = self.memory.setdefault(cand, [])
                start = len(mem)
                mem.extend(words)
                if self.dedup:
                    self.regions[(cand, words)] = start
                self.layout.setdefault(cand, []).append((start, len(words), label))
                self._reserve_time(cand, n0, n1, label)
                return cand, start
        raise CompileError(f"{label}: envelope memory exhausted on every up element")

    def place_down(self, element, n0, n1, label):
        self._reserve_time(element, n0, n1, label)


class _StaticAllocator:
    """Whole-gate-set layout fixed before any circuit is seen.

    Every gate in the set is laid out once, sorted by name, so repeat
    compilations reuse the same addresses and skip conflict validation.
    Overrides that would change a stored envelope are rejected.
    """

    name = "runc"

    def __init__(self, hw, gates, chmap_lookup, env_cache):
        self.hw = hw
        self.memory = {}  # element -> list of stored words
        self.regions = {}  # (element, words) -> start
        self.by_source = {}  # (gate, pulse idx) -> (element, start, words)
        self.layout = {}
        for name in sorted(gates.gates):
            for idx, pulse in enumerate(gates.pulses(name)):
                ch = chmap_lookup(pulse.dest, f"gate {name!r}")
                if ch.direction != "up":
                    continue
                words = env_cache.words(pulse.env, pulse.twidth, pulse.amp)
                key = (ch.element, words)
                if key in self.regions:
                    start = self.regions[key]
                else:
                    mem = self.memory.setdefault(ch.element, [])
                    start = len(mem)
                    if start + len(words) > hw.envelope_buffer_depth:
                        raise CompileError(
                            f"gate {name!r}: static envelope layout exceeds "
                            f"buffer depth on element {ch.element}"
                        )
                    mem.extend(words)
                    self.regions[key] = start
                    self.layout.setdefault(ch.element, []).append(
                        (start, len(words), f"{name}[{idx}]")
                    )
                self.by_source[(name, idx)] = (ch.element, start, words)

    def place_up(self, element, words, n0, n1, label, source=None):
        if source is None or source not in self.by_source:
            raise CompileError(
                f"{label}: pulse has no static allocation (not part of the gate set)"
            )
        alloc_element, start, alloc_words = self.by_source[source]
        if alloc_element != element:
            raise CompileError(f"{label}: channel element changed after static allocation")
        if words != alloc_words:
            raise CompileError(
                f"{label}: override alters the stored envelope; the static "
                f"allocator only permits fcarrier and pcarrier changes"
            )
        return element, start

    def place_down(self, element, n0, n1, label):
        return None


@dataclass(frozen=True)
class CompiledProgram:
    """Device-ready buffers plus the provenance to inspect them."""

    image: ProgramImage
    hw: HardwareConfig
    commands: tuple  # CommandFields, buffer order
    tp: tuple  # TimePulse intermediate form
    allocator: str
    layout: dict  # element -> ((start, length, label), ...)

    @property
    def repeat_cycles(self):
        return self.image.repeat_cycles

    def dump_tp(self) -> str:
        lines = ["# t(ns)  dest  fcarrier(Hz)  phase(rad)  amp  twidth(ns)  envelope"]
        for p in self.tp:
            env = p.env.kind
            if p.env.params:
                env += "{" + ", ".join(f"{k}={v}" for k, v in sorted(p.env.params.items())) + "}"
            lines.append(
                f"{p.t * 1e9:.3f}  {p.dest}  {p.fcarrier!r}  {p.pcarrier!r}  "
                f"{p.amp!r}  {p.twidth * 1e9:.3f}  {env}"
            )
        return "\n".join(lines) + "\n"

    def dump_commands(self) -> str:
        lines = [
            "# idx  trig_t  element  dest  cond  freq_word  phase_word  start  length"
        ]
        for k, c in enumerate(self.commands):
            lines.append(
                f"{k}  {c.trig_t}  {c.element}  {c.destination}  {c.condition}  "
                f"{c.freq_word}  {c.phase_word}  {c.start}  {c.length}"
            )
        return "\n".join(lines) + "\n"

    # -- binary container ---------------------------------------------------

    MAGIC = b"QFPB"
    VERSION = 1

    def serialize(self) -> bytes:
        meta = {
            "allocator": self.allocator,
            "hw": self.hw.to_json_dict(),
            "repeat_cycles": self.image.repeat_cycles,
        }
        meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
        out = bytearray()
        out += self.MAGIC
        out += bytes([self.VERSION, 0, 0, 0])
        out += len(meta_blob).to_bytes(4, "big")
        out += meta_blob
        elements = sorted(self.image.envelopes)
        out += len(elements).to_bytes(2, "big")
        for element in elements:
            words = self.image.envelopes[element]
            out += element.to_bytes(2, "big")
            out += len(words).to_bytes(4, "big")
            for w in words:
                out += int(w).to_bytes(4, "big")
        out += len(self.image.commands).to_bytes(4, "big")
        for cmd in self.image.commands:
            out += int(cmd).to_bytes(16, "big")
        out += zlib.crc32(bytes(out)).to_bytes(4, "big")
        return bytes(out)

    @classmethod
    def deserialize(cls, blob: bytes) -> "CompiledProgram":
        if len(blob) < 16 or blob[:4] != cls.MAGIC:
            raise CompileError("not a compiled program container")
        if zlib.crc32(blob[:-4]) != int.from_bytes(blob[-4:], "big"):
            raise CompileError("compiled program container fails its checksum")
        if blob[4] != cls.VERSION:
            raise CompileError(f"unsupported container version {blob[4]}")
        pos = 8
        meta_len = int.from_bytes(blob[pos : pos + 4], "big")
        pos += 4
        meta = json.loads(blob[pos : pos + meta_len].decode())
        pos += meta_len
        from .chipcfg import load_hardware_config

        hw = load_hardware_config(meta["hw"])
        n_elements = int.from_bytes(blob[pos : pos + 2], "big")
        pos += 2
        envelopes = {}
        for _ in range(n_elements):
            element = int.from_bytes(blob[pos : pos + 2], "big")
            n_words = int.from_bytes(blob[pos + 2 : pos + 6], "big")
            pos += 6
            words = tuple(
                int.from_bytes(blob[pos + 4 * k : pos + 4 * k + 4], "big")
                for k in range(n_words)
            )
            pos += 4 * n_words
            envelopes[element] = words
        n_cmds = int.from_bytes(blob[pos : pos + 4], "big")
        pos += 4
        commands = tuple(
            int.from_bytes(blob[pos + 16 * k : pos + 16 * k + 16], "big")
            for k in range(n_cmds)
        )
        image = ProgramImage(
            commands=commands, envelopes=envelopes, repeat_cycles=meta["repeat_cycles"]
        )
        return cls(
            image=image,
            hw=hw,
            commands=tuple(cmdcodec.decode(c) for c in commands),
            tp=(),
            allocator=meta.get("allocator", "unknown"),
            layout={},
        )


def lower_to_nv(
    tp_list,
    hw: HardwareConfig,
    allocator: str = "optm",
    gates: GatePulseSpec = None,
    dedup: bool = True,
    repeat_time: float = None,
):
    """Quantize TimePulses into commands and envelope buffers."""
    cache = _EnvelopeCache(hw.dac_sample_rate)

    def chmap_lookup(dest, what):
        try:
            return hw.channel(dest)
        except ConfigError as exc:
            raise CompileError(f"{what}: {exc}") from None

    if allocator == "optm":
        alloc = _DynamicAllocator(hw, dedup=dedup)
    elif allocator == "runc":
        if gates is None:
            raise CompileError("the static allocator needs the gate set")
        alloc = _StaticAllocator(hw, gates, chmap_lookup, cache)
    else:
        raise CompileError(f"unknown allocator {allocator!r}")

    spc = hw.samples_per_cycle
    entries = []  # (element, trig_t, CommandFields)
    ordered = sorted(
        range(len(tp_list)),
        key=lambda i: (tp_list[i].t, tp_list[i].dest, i),
    )
    for i in ordered:
        tp = tp_list[i]
        label = f"pulse at {tp.t * 1e9:.3f} ns on {tp.dest!r}"
        ch = chmap_lookup(tp.dest, label)
        trig_t = _to_cycles(tp.t, hw.dsp_clock, f"{label}: start time")
        if trig_t >= 1 << cmdcodec.TRIG_T_BITS:
            raise CompileError(f"{label}: trigger cycle {trig_t} exceeds 24 bits")
        length = _ceil_samples(tp.twidth, hw.dac_sample_rate)
        if length >= 1 << cmdcodec.LENGTH_BITS:
            raise CompileError(f"{label}: {length} samples exceed the 12-bit length field")
        freq_word = cmdcodec.freq_to_word(tp.fcarrier, hw.dac_sample_rate)
        phase_word = cmdcodec.phase_to_word(tp.pcarrier)
        n0 = trig_t * spc
        n1 = n0 + length

        if ch.direction == "up":
            words = cache.words(tp.env, tp.twidth, tp.amp)
            if allocator == "runc":
                element, start = alloc.place_up(
                    ch.element, words, n0, n1, label, source=tp.source
                )
            else:
                element, start = alloc.place_up(ch.element, words, n0, n1, label)
        else:
            alloc.place_down(ch.element, n0, n1, label)
            element, start = ch.element, 0
        entries.append(
            (
                element,
                trig_t,
                CommandFields(
                    trig_t=trig_t,
                    start=start,
                    length=length,
                    freq_word=freq_word,
                    phase_word=phase_word,
                    element=element,
                    destination=ch.destination,
                    condition=0,
                ),
            )
        )

    entries.sort(key=lambda e: (e[0], e[1], cmdcodec.encode(e[2])))
    commands = tuple(cmd for _, _, cmd in entries)
    if len(commands) > hw.command_buffer_depth:
        raise CompileError(
            f"{len(commands)} commands exceed buffer depth {hw.command_buffer_depth}"
        )

    min_cycles = 1
    for _, trig_t, cmd in entries:
        end_cycle = trig_t + -(-cmd.length // spc)
        min_cycles = max(min_cycles, end_cycle)
    if repeat_time is None:
        repeat_cycles = min_cycles
    else:
        repeat_cycles = _to_cycles(repeat_time, hw.dsp_clock, "repeat_time")
        if repeat_cycles < min_cycles:
            raise CompileError(
                f"repeat_time {repeat_time} s is shorter than the program "
                f"({min_cycles} cycles)"
            )

    envelopes = {e: tuple(mem) for e, mem in sorted(alloc.memory.items()) if mem}
    layout = {e: tuple(v) for e, v in alloc.layout.items()}
    return commands, envelopes, repeat_cycles, layout


def compile_circuit(
    circuit: Circuit,
    chip: ChipConfig,
    gates: GatePulseSpec,
    hw: HardwareConfig,
    allocator: str = "optm",
    dedup: bool = True,
    repeat_time: float = None,
) -> CompiledProgram:
    """Full pipeline: schedule, TimePulse lowering, command lowering."""
    scheduled = schedule(circuit, gates, hw)
    tp = lower_to_tp(scheduled, gates, chip, hw)
    commands, envelopes, repeat_cycles, layout = lower_to_nv(
        tp, hw, allocator=allocator, gates=gates, dedup=dedup, repeat_time=repeat_time
    )
    image = ProgramImage(
        commands=tuple(cmdcodec.encode(c) for c in commands),
        envelopes=envelopes,
        repeat_cycles=repeat_cycles,
    )
    return CompiledProgram(
        image=image,
        hw=hw,
        commands=commands,
        tp=tp,
        allocator=allocator,
        layout=layout,
    )


def simulate_program(program: CompiledProgram, wiring=None, shots=1, acq=None, seed=None, **kw):
    """Run a compiled program on the local signal-path simulator."""
    sim = Simulator(program.hw, wiring=wiring, **kw)
    return sim.run(program.image, shots=shots, acq=acq, seed=seed)


def program_waveform(program: CompiledProgram) -> dict:
    """Float reference synthesis of a compiled program's DAC output.

    Decodes the command and envelope buffers independently of the
    fixed-point path: each up command contributes
    amp_envelope(k) * exp(2j*pi*(freq_word*n/2**24 + phase_word/2**14))
    in float arithmetic, normalized to full scale 1.0.  Useful as an
    oracle for the integer datapath.
    """
    hw = program.hw
    spc = hw.samples_per_cycle
    n_samples = program.image.repeat_cycles * spc
    out = {p: np.zeros(n_samples, dtype=complex) for p in range(hw.n_dac_pairs)}
    full = 32767.0
    for cmd in program.commands:
        if hw.element_direction(cmd.element) != "up" or cmd.length == 0:
            continue
        words = program.image.envelopes.get(cmd.element, ())
        seg = np.zeros(cmd.length, dtype=complex)
        stored = words[cmd.start : cmd.start + cmd.length]
        arr = np.array(stored, dtype=np.int64)
        if arr.size:
            i = arr >> 16
            q = arr & 0xFFFF
            i = np.where(i >= 0x8000, i - 0x10000, i)
            q = np.where(q >= 0x8000, q - 0x10000, q)
            seg[: arr.size] = (i + 1j * q) / full
        n = np.arange(cmd.trig_t * spc, cmd.trig_t * spc + cmd.length)
        phase = 2 * np.pi * (
            (cmd.phase_word / (1 << cmdcodec.PHASE_WORD_BITS))
            + cmd.freq_word * n / (1 << cmdcodec.FREQ_WORD_BITS)
        )
        out[cmd.destination][n[0] : n[0] + cmd.length] += seg * np.exp(1j * phase)
    return out
