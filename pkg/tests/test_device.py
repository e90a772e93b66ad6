"""Control protocol: packet codec, device emulator, host client."""

import json
import socket
import time

import numpy as np
import pytest

from qubicforge import TransportError
from qubicforge.chipcfg import (
    load_chip_config,
    load_gate_spec,
    load_hardware_config,
    standard_channel_map,
)
from qubicforge.compiler import Circuit, GateOp, compile_circuit, simulate_program
from qubicforge.device import (
    CRC_SIZE,
    HEADER_SIZE,
    MAX_PAYLOAD,
    OP_READ,
    OP_START,
    OP_STATUS,
    OP_WRITE,
    REG_N_COMMANDS,
    REG_REPEAT_CYCLES,
    REG_SHOTS,
    REGION_COMMAND,
    REGION_ENVELOPE,
    DeviceClient,
    DeviceServer,
    LossyTransport,
    Packet,
    UdpTransport,
    acq_from_words,
    acq_words,
    decode_packet,
    encode_packet,
)
from qubicforge.dspsim import AcqConfig, Loopback
from qubicforge import cmdcodec

CHIP = load_chip_config(
    json.dumps(
        {
            "qubits": {
                "Q6": {"drive_freq": 5.5e9, "readout_freq": 6.52e9},
            }
        }
    )
)

GATES = load_gate_spec(
    json.dumps(
        {
            "gates": {
                "Q6X90": [
                    {
                        "dest": "Q6.qdrv",
                        "t0": 0.0,
                        "twidth": 32e-9,
                        "fcarrier": "Q6.freq",
                        "pcarrier": 0.0,
                        "amp": 0.45,
                        "env": {"kind": "gaussian", "params": {"sigma_fraction": 0.25}},
                    }
                ],
                "Q6read": [
                    {
                        "dest": "Q6.rdrv",
                        "t0": 0.0,
                        "twidth": 256e-9,
                        "fcarrier": "Q6.readfreq",
                        "pcarrier": 0.0,
                        "amp": 0.25,
                        "env": {"kind": "cos_edge_square", "params": {"edge_fraction": 0.1}},
                    },
                    {
                        "dest": "Q6.read",
                        "t0": 0.0,
                        "twidth": 256e-9,
                        "fcarrier": "Q6.readfreq",
                        "pcarrier": 0.0,
                        "amp": 1.0,
                        "env": {"kind": "square"},
                    },
                ],
            }
        }
    ),
    CHIP,
)

HW = load_hardware_config(
    json.dumps(
        {
            "channel_map": {
                name: {
                    "element": ch.element,
                    "destination": ch.destination,
                    "direction": ch.direction,
                }
                for name, ch in standard_channel_map(["Q6"]).items()
            }
        }
    )
)


def readout_program(n_reads=1):
    ops = []
    for _ in range(n_reads):
        ops.append(GateOp("X90", ("Q6",)))
        ops.append(GateOp("read", ("Q6",)))
    return compile_circuit(Circuit(tuple(ops)), CHIP, GATES, HW)


@pytest.fixture
def server():
    srv = DeviceServer(HW, wiring=Loopback(), seed=1234).start()
    yield srv
    srv.stop()


def make_client(srv, **kwargs):
    return DeviceClient(UdpTransport(("127.0.0.1", srv.port)), **kwargs)


# ---------------------------------------------------------------------------
# Packet codec


class TestPacketCodec:
    def test_roundtrip(self):
        p = Packet(
            seq=0xDEADBEEF,
            op=OP_WRITE,
            region=REGION_ENVELOPE,
            unit=7,
            status=3,
            offset=12345,
            count=2,
            payload=b"\x01\x02\x03\x04\x05\x06\x07\x08",
        )
        q = decode_packet(encode_packet(p))
        assert q == p

    def test_header_size(self):
        blob = encode_packet(Packet(seq=1, op=OP_STATUS))
        assert len(blob) == HEADER_SIZE + CRC_SIZE

    def test_bad_magic_rejected(self):
        blob = bytearray(encode_packet(Packet(seq=1, op=OP_STATUS)))
        blob[0] = ord("X")
        with pytest.raises(TransportError, match="magic"):
            decode_packet(bytes(blob))

    def test_corrupt_payload_rejected(self):
        blob = bytearray(
            encode_packet(Packet(seq=1, op=OP_WRITE, count=1, payload=b"\0\0\0\5"))
        )
        blob[HEADER_SIZE] ^= 0xFF
        with pytest.raises(TransportError, match="checksum"):
            decode_packet(bytes(blob))

    def test_truncated_rejected(self):
        with pytest.raises(TransportError, match="short"):
            decode_packet(b"QBC1\x00")

    def test_payload_limit(self):
        with pytest.raises(TransportError, match="exceeds"):
            encode_packet(Packet(seq=1, op=OP_WRITE, payload=b"\0" * (MAX_PAYLOAD + 1)))

    def test_acq_word_roundtrip(self):
        arr = np.array([[0, 0], [32767, -32768], [-1, 1], [-12345, 4321]], dtype=np.int32)
        assert np.array_equal(acq_from_words(acq_words(arr)), arr)


# ---------------------------------------------------------------------------
# Register and memory access


class TestMemoryAccess:
    def test_status_idle(self, server):
        with make_client(server) as client:
            assert client.status() == (False, 0, 0)

    def test_command_region_roundtrip(self, server):
        words = [(0x0123456789ABCDEF << 64) | k for k in range(7)]
        with make_client(server) as client:
            client.write_region(REGION_COMMAND, 0, 3, words)
            assert client.read_region(REGION_COMMAND, 0, 3, 7) == words
            # untouched slots keep their reset value
            assert client.read_region(REGION_COMMAND, 0, 0, 3) == [0, 0, 0]

    def test_envelope_region_is_per_element(self, server):
        with make_client(server) as client:
            client.write_region(REGION_ENVELOPE, 2, 0, [11, 22, 33])
            client.write_region(REGION_ENVELOPE, 3, 0, [44])
            assert client.read_region(REGION_ENVELOPE, 2, 0, 3) == [11, 22, 33]
            assert client.read_region(REGION_ENVELOPE, 3, 0, 2) == [44, 0]

    def test_chunked_write_spans_datagrams(self, server):
        n = HW.envelope_buffer_depth  # 1024 words > one datagram at 4 B/word? no: fits
        words = list(range(n))
        with make_client(server) as client:
            client.write_region(REGION_ENVELOPE, 0, 0, words)
            assert client.read_region(REGION_ENVELOPE, 0, 0, n) == words

    def test_chunked_command_write(self, server):
        # 600 command words = 9600 bytes, more than one datagram
        words = [(k << 32) | 7 for k in range(600)]
        with make_client(server) as client:
            client.write_region(REGION_COMMAND, 0, 0, words)
            assert client.read_region(REGION_COMMAND, 0, 0, 600) == words

    def test_control_registers(self, server):
        with make_client(server) as client:
            client.write_control(REG_SHOTS, 250)
            client.write_control(REG_REPEAT_CYCLES, 9)
            assert client.read_control(REG_SHOTS) == 250
            assert client.read_control(REG_REPEAT_CYCLES) == 9

    def test_bad_region_rejected(self, server):
        with make_client(server) as client:
            with pytest.raises(TransportError, match="bad region"):
                client.read_region(99, 0, 0, 1)

    def test_envelope_unit_out_of_range(self, server):
        with make_client(server) as client:
            # down elements have no envelope memory
            with pytest.raises(TransportError, match="bad region"):
                client.write_region(REGION_ENVELOPE, HW.n_elements - 1, 0, [1])

    def test_range_overflow_rejected(self, server):
        with make_client(server) as client:
            with pytest.raises(TransportError, match="bad range"):
                client.read_region(REGION_ENVELOPE, 0, HW.envelope_buffer_depth - 1, 2)

    def test_write_while_idle_only(self, server):
        prog = readout_program()
        with make_client(server) as client:
            client.upload_program(prog)
            client.write_control(REG_SHOTS, 2000)
            client._request(OP_START)
            with pytest.raises(TransportError, match="bad state"):
                client.write_region(REGION_COMMAND, 0, 0, [0])
            client.stop()
            client.wait()


# ---------------------------------------------------------------------------
# Execution


class TestExecution:
    def test_remote_run_matches_local(self, server):
        prog = readout_program(n_reads=2)
        shots = 5
        acq = AcqConfig(tap="adc", unit=3, length=400)
        local = simulate_program(prog, wiring=Loopback(), shots=shots, acq=acq, seed=1234)
        with make_client(server) as client:
            remote = client.run_program(prog, shots, acq=acq)
        assert remote.shots_completed == shots
        assert set(remote.acc) == set(local.acc)
        for element in local.acc:
            assert np.array_equal(remote.acc[element], local.acc[element])
        assert np.array_equal(remote.acq, local.acq)

    def test_acc_persists_until_cleared(self, server):
        prog = readout_program()
        with make_client(server) as client:
            first = client.run_program(prog, 3)
            second = client.run_program(prog, 3)
        # run_program clears before starting, so totals do not stack
        for element in first.acc:
            assert first.acc[element].shape == second.acc[element].shape

    def test_stop_interrupts_run(self, server):
        prog = readout_program(n_reads=4)
        with make_client(server) as client:
            client.upload_program(prog)
            client.clear_acc()
            client.start(100_000)
            while client.status()[1] < 1:
                time.sleep(0.001)
            client.stop()
            done, _ = client.wait()
            assert 1 <= done < 100_000

    def test_start_while_running_rejected(self, server):
        prog = readout_program(n_reads=4)
        with make_client(server) as client:
            client.upload_program(prog)
            client.start(100_000)
            with pytest.raises(TransportError, match="bad state"):
                client._request(OP_START)
            client.stop()
            client.wait()

    def test_invalid_image_rejected_synchronously(self, server):
        bad = cmdcodec.encode(
            cmdcodec.CommandFields(element=200, length=4, trig_t=0)
        )
        with make_client(server) as client:
            client.write_region(REGION_COMMAND, 0, 0, [bad])
            client.write_control(REG_N_COMMANDS, 1)
            client.write_control(REG_SHOTS, 1)
            with pytest.raises(TransportError, match="bad state"):
                client._request(OP_START)
        assert any("start rejected" in line for line in server.log)

    def test_acc_capacity_halts_run(self):
        hw = load_hardware_config(
            json.dumps(
                {
                    "acc_buffer_depth": 10,
                    "channel_map": {
                        name: {
                            "element": ch.element,
                            "destination": ch.destination,
                            "direction": ch.direction,
                        }
                        for name, ch in standard_channel_map(["Q6"]).items()
                    },
                }
            )
        )
        prog = compile_circuit(
            Circuit((GateOp("X90", ("Q6",)), GateOp("read", ("Q6",)))), CHIP, GATES, hw
        )
        with DeviceServer(hw, wiring=Loopback(), seed=9) as srv:
            with make_client(srv) as client:
                result = client.run_program(prog, 25)
        assert result.shots_completed == 10
        for element in result.acc:
            assert result.acc[element].shape[0] == 10


# ---------------------------------------------------------------------------
# Transport faults


class TestFaultTolerance:
    def test_timeout_raises_with_last_seq(self):
        # a socket nothing answers
        sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sink.bind(("127.0.0.1", 0))
        try:
            client = DeviceClient(
                UdpTransport(sink.getsockname()), timeout=0.02, retries=1, seq_start=77
            )
            with pytest.raises(TransportError) as err:
                client.status()
            assert err.value.last_seq == 77
            client.close()
        finally:
            sink.close()

    def test_duplicate_write_answered_from_cache(self, server):
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.settimeout(0.5)
        addr = ("127.0.0.1", server.port)

        def rpc(blob):
            sock.sendto(blob, addr)
            data, _ = sock.recvfrom(8192)
            return decode_packet(data)

        first = encode_packet(
            Packet(
                seq=500,
                op=OP_WRITE,
                region=REGION_ENVELOPE,
                unit=0,
                offset=0,
                count=1,
                payload=(111).to_bytes(4, "big"),
            )
        )
        second = encode_packet(
            Packet(
                seq=501,
                op=OP_WRITE,
                region=REGION_ENVELOPE,
                unit=0,
                offset=0,
                count=1,
                payload=(222).to_bytes(4, "big"),
            )
        )
        try:
            assert rpc(first).status == 0
            assert rpc(second).status == 0
            # stale retransmit of the first write: cached reply, no re-execution
            assert rpc(first).status == 0
            read = rpc(
                encode_packet(
                    Packet(seq=502, op=OP_READ, region=REGION_ENVELOPE, unit=0, count=1)
                )
            )
            assert int.from_bytes(read.payload, "big") == 222
        finally:
            sock.close()

    def test_malformed_datagrams_dropped(self, server):
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        addr = ("127.0.0.1", server.port)
        blob = bytearray(encode_packet(Packet(seq=1, op=OP_STATUS)))
        blob[-1] ^= 0xFF  # break the checksum
        try:
            sock.sendto(bytes(blob), addr)
            sock.sendto(b"garbage", addr)
            sock.settimeout(0.05)
            with pytest.raises(socket.timeout):
                sock.recvfrom(8192)
        finally:
            sock.close()
        assert server.dropped >= 2

    def test_lossy_link_still_exact(self, server):
        prog = readout_program(n_reads=2)
        shots = 4
        acq = AcqConfig(tap="adc", unit=3, length=300)
        local = simulate_program(prog, wiring=Loopback(), shots=shots, acq=acq, seed=1234)
        transport = LossyTransport(
            UdpTransport(("127.0.0.1", server.port)),
            loss=0.05,
            dup=0.05,
            reorder=0.05,
            seed=42,
        )
        with DeviceClient(transport, timeout=0.05, retries=6) as client:
            remote = client.run_program(prog, shots, acq=acq)
        assert remote.shots_completed == shots
        for element in local.acc:
            assert np.array_equal(remote.acc[element], local.acc[element])
        assert np.array_equal(remote.acq, local.acq)
