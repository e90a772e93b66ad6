"""UDP control protocol: device emulator and host-side client.

Wire format (all integers big-endian)::

    magic "QBC1" | seq u32 | op u8 | region u8 | unit u8 | status u8 |
    offset u32 | count u32 | payload ... | crc32 u32

The CRC covers the header and payload.  Datagrams never exceed 8192
bytes; larger transfers are chunked by the client.  The protocol is
stop-and-wait: one request in flight, responses echo the request seq,
and the client retransmits on timeout.  The server keeps a cache of
recent responses keyed by seq, so a duplicated or retransmitted request
is answered from the cache and never executed twice; a stale WRITE can
therefore not corrupt memory after later writes.  Datagrams with a bad
magic or CRC are dropped silently (counted, never answered).

Regions:

* COMMAND: 16-byte command words.
* ENVELOPE: 32-bit words, per-element (unit selects the element).
* ACC: accumulator entries as word pairs (I then Q, two's complement),
  per down element.  Reading never drains; clear explicitly.
* ACQ: raw capture, one 32-bit word per sample, I in the top half.
* CONTROL: 32-bit registers (see the REG_* constants).

Ops: WRITE, READ, START (begin a run in the background), STOP, STATUS.
STATUS returns three u32s: running flag, shots completed, fault count.
"""

from __future__ import annotations

import random
import socket
import struct
import threading
import time
import zlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import cmdcodec
from .dspsim import AcqConfig, ProgramImage, Simulator
from .errors import SimulationError, TransportError

MAGIC = b"QBC1"
HEADER = struct.Struct(">4sIBBBBII")
HEADER_SIZE = HEADER.size  # 20
CRC_SIZE = 4
MAX_DATAGRAM = 8192
MAX_PAYLOAD = MAX_DATAGRAM - HEADER_SIZE - CRC_SIZE

OP_WRITE = 1
OP_READ = 2
OP_START = 3
OP_STOP = 4
OP_STATUS = 5

REGION_COMMAND = 1
REGION_ENVELOPE = 2
REGION_ACC = 3
REGION_ACQ = 4
REGION_CONTROL = 5

STATUS_OK = 0
STATUS_BAD_REGION = 1
STATUS_BAD_RANGE = 2
STATUS_BAD_STATE = 3
STATUS_BAD_OP = 4

_STATUS_NAMES = {
    STATUS_OK: "ok",
    STATUS_BAD_REGION: "bad region",
    STATUS_BAD_RANGE: "bad range",
    STATUS_BAD_STATE: "bad state",
    STATUS_BAD_OP: "bad op",
}

# CONTROL register indices
REG_SHOTS = 0
REG_ACC_CLEAR = 1
REG_ACQ_TAP = 2  # 0 adc, 1 dac, 2 dlo
REG_ACQ_UNIT = 3
REG_ACQ_LEN = 4
REG_REPEAT_CYCLES = 5
REG_N_COMMANDS = 6
N_CONTROL_REGS = 7

_ACQ_TAPS = ("adc", "dac", "dlo")

COMMAND_WORD_SIZE = 16
REGION_WORD_SIZE = {
    REGION_COMMAND: COMMAND_WORD_SIZE,
    REGION_ENVELOPE: 4,
    REGION_ACC: 4,
    REGION_ACQ: 4,
    REGION_CONTROL: 4,
}


@dataclass(frozen=True)
class Packet:
    seq: int
    op: int
    region: int = 0
    unit: int = 0
    status: int = 0
    offset: int = 0
    count: int = 0
    payload: bytes = b""


def encode_packet(p: Packet) -> bytes:
    if len(p.payload) > MAX_PAYLOAD:
        raise TransportError(f"payload of {len(p.payload)} bytes exceeds {MAX_PAYLOAD}")
    head = HEADER.pack(
        MAGIC, p.seq & 0xFFFFFFFF, p.op, p.region, p.unit, p.status, p.offset, p.count
    )
    body = head + p.payload
    return body + zlib.crc32(body).to_bytes(4, "big")


def decode_packet(data: bytes) -> Packet:
    """Parse and verify one datagram; raises on anything malformed."""
    if len(data) < HEADER_SIZE + CRC_SIZE:
        raise TransportError("datagram too short")
    magic, seq, op, region, unit, status, offset, count = HEADER.unpack(
        data[:HEADER_SIZE]
    )
    if magic != MAGIC:
        raise TransportError("bad magic")
    body, crc = data[:-CRC_SIZE], int.from_bytes(data[-CRC_SIZE:], "big")
    if zlib.crc32(body) != crc:
        raise TransportError("bad checksum")
    return Packet(
        seq=seq,
        op=op,
        region=region,
        unit=unit,
        status=status,
        offset=offset,
        count=count,
        payload=data[HEADER_SIZE:-CRC_SIZE],
    )


def acq_words(acq_array) -> np.ndarray:
    """Pack an (n, 2) I/Q capture into (I16 << 16) | Q16 words."""
    arr = np.asarray(acq_array, dtype=np.int64)
    i = np.clip(arr[:, 0], -32768, 32767) & 0xFFFF
    q = np.clip(arr[:, 1], -32768, 32767) & 0xFFFF
    return ((i << 16) | q).astype(np.uint32)


def acq_from_words(words) -> np.ndarray:
    arr = np.asarray(words, dtype=np.int64)
    i = arr >> 16
    q = arr & 0xFFFF
    i = np.where(i >= 0x8000, i - 0x10000, i)
    q = np.where(q >= 0x8000, q - 0x10000, q)
    return np.stack([i, q], axis=1).astype(np.int32)


# ---------------------------------------------------------------------------
# Transports


class UdpTransport:
    """Blocking datagram socket bound to one peer."""

    def __init__(self, address):
        self.address = address
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(("127.0.0.1", 0))

    def send(self, data: bytes):
        self.sock.sendto(data, self.address)

    def recv(self, timeout: float):
        self.sock.settimeout(timeout)
        try:
            data, _ = self.sock.recvfrom(MAX_DATAGRAM)
            return data
        except socket.timeout:
            return None

    def close(self):
        self.sock.close()


class LossyTransport:
    """Fault-injection wrapper: drops, duplicates, and reorders sends.

    Reordering holds a datagram back and releases it after the next
    send, which is the strongest reordering a stop-and-wait link can
    observe.  Determinism comes from the seeded RNG.
    """

    def __init__(self, inner, loss=0.0, dup=0.0, reorder=0.0, seed=0):
        self.inner = inner
        self.loss = loss
        self.dup = dup
        self.reorder = reorder
        self.rng = random.Random(seed)
        self._held = None

    def send(self, data: bytes):
        if self._held is not None:
            held, self._held = self._held, None
            self._transmit(data)
            self._transmit(held)
            return
        if self.reorder and self.rng.random() < self.reorder:
            self._held = data
            return
        self._transmit(data)

    def _transmit(self, data):
        if self.loss and self.rng.random() < self.loss:
            return
        self.inner.send(data)
        if self.dup and self.rng.random() < self.dup:
            self.inner.send(data)

    def recv(self, timeout: float):
        return self.inner.recv(timeout)

    def close(self):
        if self._held is not None:
            self._transmit(self._held)
            self._held = None
        self.inner.close()


# ---------------------------------------------------------------------------
# Server


class DeviceServer:
    """In-process device emulator behind a UDP socket.

    Holds the memory regions, executes runs on the signal-path
    simulator in a background thread, and answers the control protocol.
    Runs proceed shot by shot so STATUS can observe progress and STOP
    can interrupt; per-shot random streams match a single local run.
    """

    def __init__(self, hw, wiring=None, host="127.0.0.1", port=0, seed=None, cache_size=1024):
        self.hw = hw
        self.sim = Simulator(hw, wiring=wiring)
        self.seed = seed
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.sock.settimeout(0.05)
        self.address = self.sock.getsockname()
        self._lock = threading.RLock()
        self._cache = OrderedDict()
        self._cache_size = cache_size
        self._stop = threading.Event()
        self._thread = None
        self._run_thread = None
        self._run_stop = threading.Event()
        self.dropped = 0  # malformed datagrams, silently discarded
        self.log = []
        self._reset_state()

    def _reset_state(self):
        with self._lock:
            self.commands = [0] * self.hw.command_buffer_depth
            self.envelopes = {
                e: [0] * self.hw.envelope_buffer_depth
                for e in range(self.hw.n_processing_elements_up)
            }
            self.control = [0] * N_CONTROL_REGS
            self.control[REG_REPEAT_CYCLES] = 1
            self.acc = {
                e: []
                for e in range(
                    self.hw.n_processing_elements_up,
                    self.hw.n_elements,
                )
            }
            self.acq = np.zeros((self.hw.acq_buffer_depth, 2), dtype=np.int32)
            self.running = False
            self.shots_completed = 0
            self.fault_count = 0

    @property
    def port(self):
        return self.address[1]

    # -- lifecycle ------------------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        self._run_stop.set()
        if self._thread is not None:
            self._thread.join()
        if self._run_thread is not None:
            self._run_thread.join()
        self.sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _serve(self):
        while not self._stop.is_set():
            try:
                data, peer = self.sock.recvfrom(MAX_DATAGRAM)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                request = decode_packet(data)
            except TransportError as exc:
                self.dropped += 1
                self.log.append(f"dropped datagram: {exc}")
                continue
            response = self._respond(request)
            try:
                self.sock.sendto(response, peer)
            except OSError:
                break

    def _respond(self, request: Packet) -> bytes:
        with self._lock:
            cached = self._cache.get(request.seq)
            if cached is not None:
                return cached
            reply = self._execute(request)
            blob = encode_packet(reply)
            self._cache[request.seq] = blob
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
            return blob

    # -- request handling -------------------------------------------------

    def _execute(self, request: Packet) -> Packet:
        handler = {
            OP_WRITE: self._op_write,
            OP_READ: self._op_read,
            OP_START: self._op_start,
            OP_STOP: self._op_stop,
            OP_STATUS: self._op_status,
        }.get(request.op)
        if handler is None:
            return self._status_reply(request, STATUS_BAD_OP)
        return handler(request)

    def _status_reply(self, request, status, payload=b""):
        return Packet(
            seq=request.seq,
            op=request.op,
            region=request.region,
            unit=request.unit,
            status=status,
            offset=request.offset,
            count=request.count,
            payload=payload,
        )

    def _region_store(self, region, unit):
        """(store list, word size, writable) or None."""
        if region == REGION_COMMAND:
            return self.commands, COMMAND_WORD_SIZE, True
        if region == REGION_ENVELOPE:
            store = self.envelopes.get(unit)
            return None if store is None else (store, 4, True)
        if region == REGION_ACC:
            entries = self.acc.get(unit)
            if entries is None:
                return None
            words = []
            for i, q in entries:
                words.append(i & 0xFFFFFFFF)
                words.append(q & 0xFFFFFFFF)
            return words, 4, False
        if region == REGION_ACQ:
            return list(acq_words(self.acq)), 4, False
        if region == REGION_CONTROL:
            return self.control, 4, True
        return None

    def _op_write(self, request):
        got = self._region_store(request.region, request.unit)
        if got is None:
            return self._status_reply(request, STATUS_BAD_REGION)
        store, word_size, writable = got
        if not writable:
            return self._status_reply(request, STATUS_BAD_OP)
        if self.running and request.region != REGION_CONTROL:
            return self._status_reply(request, STATUS_BAD_STATE)
        count = request.count
        if len(request.payload) != count * word_size:
            return self._status_reply(request, STATUS_BAD_RANGE)
        if request.offset + count > len(store):
            return self._status_reply(request, STATUS_BAD_RANGE)
        for k in range(count):
            word = int.from_bytes(
                request.payload[k * word_size : (k + 1) * word_size], "big"
            )
            if request.region == REGION_CONTROL:
                self._write_control(request.offset + k, word)
            else:
                store[request.offset + k] = word
        return self._status_reply(request, STATUS_OK)

    def _write_control(self, reg, value):
        if reg == REG_ACC_CLEAR:
            if value:
                for entries in self.acc.values():
                    entries.clear()
            return
        self.control[reg] = value

    def _op_read(self, request):
        got = self._region_store(request.region, request.unit)
        if got is None:
            return self._status_reply(request, STATUS_BAD_REGION)
        store, word_size, _ = got
        count = request.count
        if count * word_size > MAX_PAYLOAD:
            return self._status_reply(request, STATUS_BAD_RANGE)
        if request.offset + count > len(store):
            return self._status_reply(request, STATUS_BAD_RANGE)
        payload = b"".join(
            int(store[request.offset + k]).to_bytes(word_size, "big") for k in range(count)
        )
        return self._status_reply(request, STATUS_OK, payload)

    def _op_start(self, request):
        if self.running:
            return self._status_reply(request, STATUS_BAD_STATE)
        n_cmds = self.control[REG_N_COMMANDS]
        if n_cmds > len(self.commands):
            return self._status_reply(request, STATUS_BAD_RANGE)
        image = ProgramImage(
            commands=tuple(self.commands[:n_cmds]),
            envelopes={e: tuple(w) for e, w in self.envelopes.items()},
            repeat_cycles=max(1, self.control[REG_REPEAT_CYCLES]),
        )
        acq_len = self.control[REG_ACQ_LEN]
        acq_cfg = None
        if acq_len:
            tap_idx = self.control[REG_ACQ_TAP]
            if tap_idx >= len(_ACQ_TAPS) or acq_len > self.hw.acq_buffer_depth:
                return self._status_reply(request, STATUS_BAD_RANGE)
            acq_cfg = AcqConfig(
                tap=_ACQ_TAPS[tap_idx], unit=self.control[REG_ACQ_UNIT], length=acq_len
            )
        try:
            # Validate the image before confirming the start.
            self.sim.validate(image)
        except SimulationError as exc:
            self.log.append(f"start rejected: {exc}")
            return self._status_reply(request, STATUS_BAD_STATE)
        self.running = True
        self.shots_completed = 0
        self._run_stop.clear()
        shots = self.control[REG_SHOTS]
        self._run_thread = threading.Thread(
            target=self._run, args=(image, shots, acq_cfg), daemon=True
        )
        self._run_thread.start()
        return self._status_reply(request, STATUS_OK)

    def _run(self, image, shots, acq_cfg):
        windows = {e: 0 for e in self.acc}
        for word in image.commands:
            element = cmdcodec.decode(word).element
            if element in windows:
                windows[element] += 1
        try:
            for shot in range(shots):
                if self._run_stop.is_set():
                    break
                with self._lock:
                    depth = self.hw.acc_buffer_depth
                    if any(
                        len(self.acc[e]) + n > depth for e, n in windows.items() if n
                    ):
                        break
                result = self.sim.run(
                    image, shots=1, acq=acq_cfg, seed=self.seed, start_shot=shot
                )
                with self._lock:
                    for e, entries in result.acc.items():
                        self.acc.setdefault(e, [])
                        for row in entries:
                            self.acc[e].append((int(row[0]), int(row[1])))
                    if acq_cfg is not None:
                        n = result.acq.shape[0]
                        self.acq[:n] = result.acq
                    self.fault_count += len(result.fault_log) + result.saturation_count
                    self.shots_completed += 1
        except SimulationError as exc:
            with self._lock:
                self.log.append(f"run aborted: {exc}")
                self.fault_count += 1
        finally:
            with self._lock:
                self.running = False

    def _op_stop(self, request):
        self._run_stop.set()
        return self._status_reply(request, STATUS_OK)

    def _op_status(self, request):
        payload = struct.pack(
            ">III", 1 if self.running else 0, self.shots_completed, self.fault_count
        )
        return self._status_reply(request, STATUS_OK, payload)


# ---------------------------------------------------------------------------
# Client


@dataclass
class RemoteResult:
    shots_completed: int
    acc: dict  # element -> (n, 2) int64
    acq: np.ndarray  # (n, 2) int32
    fault_count: int


class DeviceClient:
    """Stop-and-wait protocol client.

    Every request is retried up to ``retries`` times on timeout before
    raising TransportError; responses with a stale seq are ignored while
    waiting (they are echoes of retransmitted requests).
    """

    def __init__(self, transport, timeout=0.1, retries=3, seq_start=None):
        self.transport = transport
        self.timeout = timeout
        self.retries = retries
        self._seq = (
            random.SystemRandom().randrange(1 << 32) if seq_start is None else seq_start
        )

    def close(self):
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _request(self, op, region=0, unit=0, offset=0, count=0, payload=b"") -> Packet:
        seq = self._seq
        self._seq = (self._seq + 1) & 0xFFFFFFFF
        blob = encode_packet(
            Packet(
                seq=seq,
                op=op,
                region=region,
                unit=unit,
                offset=offset,
                count=count,
                payload=payload,
            )
        )
        for _ in range(self.retries + 1):
            self.transport.send(blob)
            deadline = time.monotonic() + self.timeout
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                data = self.transport.recv(remaining)
                if data is None:
                    break
                try:
                    reply = decode_packet(data)
                except TransportError:
                    continue
                if reply.seq != seq:
                    continue  # stale response to an earlier retransmission
                if reply.status != STATUS_OK:
                    name = _STATUS_NAMES.get(reply.status, str(reply.status))
                    raise TransportError(
                        f"device rejected request: {name}", last_seq=seq
                    )
                return reply
        raise TransportError(
            f"no response after {self.retries + 1} attempts", last_seq=seq
        )

    # -- memory access ----------------------------------------------------

    def write_region(self, region, unit, offset, words):
        word_size = REGION_WORD_SIZE.get(region, 4)
        per_chunk = MAX_PAYLOAD // word_size
        words = list(words)
        pos = 0
        while pos < len(words):
            chunk = words[pos : pos + per_chunk]
            payload = b"".join(int(w).to_bytes(word_size, "big") for w in chunk)
            self._request(
                OP_WRITE,
                region=region,
                unit=unit,
                offset=offset + pos,
                count=len(chunk),
                payload=payload,
            )
            pos += len(chunk)

    def read_region(self, region, unit, offset, count):
        word_size = REGION_WORD_SIZE.get(region, 4)
        per_chunk = MAX_PAYLOAD // word_size
        words = []
        pos = 0
        while pos < count:
            n = min(per_chunk, count - pos)
            reply = self._request(
                OP_READ, region=region, unit=unit, offset=offset + pos, count=n
            )
            for k in range(n):
                words.append(
                    int.from_bytes(reply.payload[k * word_size : (k + 1) * word_size], "big")
                )
            pos += n
        return words

    def write_control(self, reg, value):
        self.write_region(REGION_CONTROL, 0, reg, [value])

    def read_control(self, reg):
        return self.read_region(REGION_CONTROL, 0, reg, 1)[0]

    # -- program workflow ---------------------------------------------------

    def upload_program(self, program):
        """Load a compiled program's buffers and control registers."""
        image = program.image if hasattr(program, "image") else program
        self.write_region(REGION_COMMAND, 0, 0, image.commands)
        for element in sorted(image.envelopes):
            self.write_region(REGION_ENVELOPE, element, 0, image.envelopes[element])
        self.write_control(REG_N_COMMANDS, len(image.commands))
        self.write_control(REG_REPEAT_CYCLES, image.repeat_cycles)

    def clear_acc(self):
        self.write_control(REG_ACC_CLEAR, 1)

    def start(self, shots):
        self.write_control(REG_SHOTS, shots)
        self._request(OP_START)

    def stop(self):
        self._request(OP_STOP)

    def status(self):
        reply = self._request(OP_STATUS)
        running, done, faults = struct.unpack(">III", reply.payload)
        return bool(running), done, faults

    def wait(self, poll=0.002, max_polls=100_000):
        for _ in range(max_polls):
            running, done, faults = self.status()
            if not running:
                return done, faults
            time.sleep(poll)
        raise TransportError("device run did not finish")

    def read_acc(self, element, n_entries):
        words = self.read_region(REGION_ACC, element, 0, 2 * n_entries)
        arr = np.array(words, dtype=np.int64).reshape(-1, 2)
        # two's complement i32
        return np.where(arr >= 1 << 31, arr - (1 << 32), arr)

    def read_acq(self, length):
        words = self.read_region(REGION_ACQ, 0, 0, length)
        return acq_from_words(words)

    def configure_acq(self, tap, unit, length):
        self.write_control(REG_ACQ_TAP, _ACQ_TAPS.index(tap))
        self.write_control(REG_ACQ_UNIT, unit)
        self.write_control(REG_ACQ_LEN, length)

    def run_program(self, program, shots, acq=None, n_up=None) -> RemoteResult:
        """Upload, run, and collect: the full remote execution cycle.

        Accumulator readback needs to know which elements are down
        converters; that comes from ``program.hw`` when the argument is
        a compiled program, or from ``n_up`` for a bare buffer image.
        """
        image = program.image if hasattr(program, "image") else program
        if n_up is None:
            if not hasattr(program, "hw"):
                raise TransportError("n_up is required when running a bare image")
            n_up = program.hw.n_processing_elements_up
        self.upload_program(program)
        self.clear_acc()
        if acq is not None:
            self.configure_acq(acq.tap, acq.unit, acq.length)
        else:
            self.write_control(REG_ACQ_LEN, 0)
        self.start(shots)
        done, faults = self.wait()
        windows = {}
        for word in image.commands:
            fields = cmdcodec.decode(word)
            if fields.element >= n_up:
                windows[fields.element] = windows.get(fields.element, 0) + 1
        acc = {
            element: self.read_acc(element, n_windows * done)
            for element, n_windows in sorted(windows.items())
        }
        capture = (
            self.read_acq(acq.length)
            if acq is not None and acq.length
            else np.zeros((0, 2), np.int32)
        )
        return RemoteResult(
            shots_completed=done, acc=acc, acq=capture, fault_count=faults
        )


def connect(host, port, timeout=0.1, retries=3, lossy=None) -> DeviceClient:
    """Open a client to a device at host:port.

    ``lossy`` optionally holds (loss, dup, reorder, seed) to wrap the
    link in the fault-injection transport.
    """
    transport = UdpTransport((host, port))
    if lossy is not None:
        loss, dup, reorder, seed = lossy
        transport = LossyTransport(transport, loss=loss, dup=dup, reorder=reorder, seed=seed)
    return DeviceClient(transport, timeout=timeout, retries=retries)
