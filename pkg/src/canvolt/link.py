"""CAN 2.0A data-link layer.

Frame codec with bit stuffing and CRC-15, receiver bit decisions,
arbitration, and the error/retransmission state machine. Bits are ints:
0 is dominant, 1 is recessive.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

CRC_POLY = 0x4599
DOMINANT_THRESHOLD = 0.9   # v_diff above this always reads dominant
RECESSIVE_THRESHOLD = 0.5  # v_diff below this always reads recessive

ERROR_FLAG_BITS = 6
ERROR_DELIMITER_BITS = 8
INTERMISSION_BITS = 3


class DecodeError(ValueError):
    """Base for bitstream decode failures."""


class StuffError(DecodeError):
    """Six equal consecutive bits inside the stuffed region."""


class CrcError(DecodeError):
    """CRC-15 mismatch."""


class FormError(DecodeError):
    """Dominant level in a fixed-form recessive field."""


class IdCollision(ValueError):
    """Two arbitration contenders share an identifier."""


@dataclass(frozen=True)
class Frame:
    """11-bit identifier data frame."""

    id: int
    data: bytes = b""
    rtr: bool = False

    def __post_init__(self):
        if not 0 <= self.id < 2048:
            raise ValueError(f"frame id {self.id:#x} outside 11 bits")
        if len(self.data) > 8:
            raise ValueError(f"data length {len(self.data)} exceeds 8 bytes")
        object.__setattr__(self, "data", bytes(self.data))

    @property
    def dlc(self) -> int:
        return len(self.data)


class BitDecision(enum.Enum):
    DOMINANT = 0
    RECESSIVE = 1


@dataclass(frozen=True)
class BitTiming:
    """Receiver timing and threshold parameters."""

    bus_speed: float = 500_000.0
    sample_point: float = 0.359
    decode_hold: float = 340e-9
    hysteresis: float = 0.15

    def __post_init__(self):
        if self.bus_speed <= 0.0:
            raise ValueError("bus_speed must be positive")
        if not 0.0 < self.sample_point < 1.0:
            raise ValueError(f"sample_point {self.sample_point!r} outside (0, 1)")
        if self.decode_hold <= 0.0:
            raise ValueError("decode_hold must be positive")

    @property
    def bit_time(self) -> float:
        return 1.0 / self.bus_speed


def crc15(bits: Iterable[int]) -> int:
    """CRC-15 over a bit sequence, MSB first, poly 0x4599, init 0."""
    crc = 0
    for b in bits:
        crcnxt = b ^ ((crc >> 14) & 1)
        crc = (crc << 1) & 0x7FFF
        if crcnxt:
            crc ^= CRC_POLY
    return crc


def _int_bits(value: int, width: int) -> list:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def frame_body_bits(f: Frame) -> list:
    """Unstuffed SOF-through-data bits (the CRC input)."""
    bits = [0]
    bits += _int_bits(f.id, 11)
    bits.append(1 if f.rtr else 0)
    bits.append(0)  # IDE: standard frame
    bits.append(0)  # r0
    bits += _int_bits(f.dlc, 4)
    for byte in f.data:
        bits += _int_bits(byte, 8)
    return bits


def stuff_bits(bits: Sequence[int]) -> list:
    """Insert a complement bit after every run of five equal bits."""
    out: list = []
    run = 0
    prev = None
    for b in bits:
        out.append(b)
        run = run + 1 if b == prev else 1
        prev = b
        if run == 5:
            out.append(1 - b)
            prev = 1 - b
            run = 1
    return out


def encode_frame(f: Frame) -> list:
    """Transmitted bitstream: stuffed body+CRC, then the fixed-form tail.

    The ACK slot is recessive as transmitted; a receiver overwrites it
    with a dominant level on the wire.
    """
    body = frame_body_bits(f)
    crc = _int_bits(crc15(body), 15)
    stuffed = stuff_bits(body + crc)
    # CRC delimiter, ACK slot, ACK delimiter, 7 EOF bits
    return stuffed + [1, 1, 1] + [1] * 7


def bus_bits(f: Frame, acked: bool = True) -> list:
    """On-wire bitstream, with the ACK slot driven dominant when acked."""
    bits = encode_frame(f)
    if acked:
        bits[ack_slot_index(f)] = 0
    return bits


def stuffed_body_length(f: Frame) -> int:
    return len(stuff_bits(frame_body_bits(f) + _int_bits(crc15(frame_body_bits(f)), 15)))


def ack_slot_index(f: Frame) -> int:
    return stuffed_body_length(f) + 1


def ack_delimiter_index(f: Frame) -> int:
    return stuffed_body_length(f) + 2


def frame_bit_length(f: Frame) -> int:
    return stuffed_body_length(f) + 3 + 7


def dominant_to_recessive_transitions(bits: Sequence[int]) -> int:
    return sum(1 for a, b in zip(bits, bits[1:]) if a == 0 and b == 1)


def _destuff(bits: Sequence[int], count: int) -> tuple:
    """Unstuff the first `count` payload bits; returns (payload, next_index).

    A sixth equal bit raises StuffError. A trailing stuff bit right
    after the last payload bit is consumed too, since the encoder
    inserts one when the region ends on a run of five.
    """
    out: list = []
    run = 0
    prev = None
    i = 0
    while len(out) < count:
        if i >= len(bits):
            raise FormError("bitstream truncated inside the stuffed region")
        b = bits[i]
        if run == 5:
            if b == prev:
                raise StuffError(f"six equal bits ending at stuffed index {i}")
            prev = b
            run = 1
            i += 1
            continue
        run = run + 1 if b == prev else 1
        prev = b
        out.append(b)
        i += 1
    if run == 5 and i < len(bits):
        if bits[i] == prev:
            raise StuffError(f"six equal bits ending at stuffed index {i}")
        i += 1
    return out, i


_HEADER_BITS = 19  # SOF + ID(11) + RTR + IDE + r0 + DLC(4)


def decode_bitstream(bits: Sequence[int]) -> Frame:
    """Inverse of encode_frame; validates stuffing, CRC, and form bits."""
    if not bits:
        raise FormError("empty bitstream")
    if bits[0] != 0:
        raise FormError("missing dominant SOF")

    header, _ = _destuff(bits, _HEADER_BITS)
    frame_id = int("".join(map(str, header[1:12])), 2)
    rtr = bool(header[12])
    if header[13] != 0:
        raise FormError("IDE must be dominant for an 11-bit frame")
    dlc = int("".join(map(str, header[15:19])), 2)
    if dlc > 8:
        raise FormError(f"DLC {dlc} exceeds 8")

    payload, used = _destuff(bits, _HEADER_BITS + 8 * dlc + 15)
    data_bits = payload[_HEADER_BITS:_HEADER_BITS + 8 * dlc]
    crc_bits = payload[_HEADER_BITS + 8 * dlc:]
    data = bytes(
        int("".join(map(str, data_bits[i:i + 8])), 2) for i in range(0, 8 * dlc, 8)
    )

    body = payload[:_HEADER_BITS + 8 * dlc]
    if crc15(body) != int("".join(map(str, crc_bits)), 2):
        raise CrcError("CRC-15 mismatch")

    tail = bits[used:]
    if len(tail) < 10:
        raise FormError("bitstream truncated in the frame tail")
    if tail[0] != 1:
        raise FormError("dominant CRC delimiter")
    # tail[1] is the ACK slot: dominant (acked) or recessive both valid
    if tail[2] != 1:
        raise FormError("dominant ACK delimiter")
    if any(b != 1 for b in tail[3:10]):
        raise FormError("dominant bit inside EOF")

    frame = Frame(id=frame_id, data=data, rtr=rtr)
    if frame.dlc != dlc:
        raise FormError("DLC does not match the data field length")
    return frame


def decide_bit(v_diff: float, prev: BitDecision, timing: BitTiming | None = None) -> BitDecision:
    """Static threshold decision with an undefined hold band between."""
    if v_diff > DOMINANT_THRESHOLD:
        return BitDecision.DOMINANT
    if v_diff < RECESSIVE_THRESHOLD:
        return BitDecision.RECESSIVE
    return prev


def arbitrate(contenders: Sequence[Frame]) -> Frame:
    """Lowest identifier wins bus access."""
    if not contenders:
        raise ValueError("arbitration requires at least one contender")
    ids = [f.id for f in contenders]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise IdCollision(f"duplicate arbitration id {dup:#x}")
    return min(contenders, key=lambda f: f.id)


def comparator_runs(
    waveform: Callable[[float], float],
    t0: float,
    t1: float,
    entry: BitDecision,
    timing: BitTiming,
    resolution: float = 1e-9,
) -> list:
    """Receiver comparator trajectory over [t0, t1] as (start, end, state).

    The comparator engages dominant at v_diff >= 0.9 and releases to
    recessive below 0.9 - hysteresis. Crossings of a generic waveform
    are bracketed on a fine grid and refined by bisection.
    """
    release = DOMINANT_THRESHOLD - timing.hysteresis
    steps = max(2, int(math.ceil((t1 - t0) / resolution)))
    dt = (t1 - t0) / steps

    def refine(a: float, b: float, level: float) -> float:
        for _ in range(80):
            m = 0.5 * (a + b)
            if (waveform(a) - level) * (waveform(m) - level) <= 0.0:
                b = m
            else:
                a = m
        return 0.5 * (a + b)

    runs: list = []
    state = entry
    run_start = t0
    t_prev = t0
    for k in range(1, steps + 1):
        t = t0 + k * dt
        v = waveform(t)
        if state is BitDecision.RECESSIVE and v >= DOMINANT_THRESHOLD:
            cross = refine(t_prev, t, DOMINANT_THRESHOLD)
            runs.append((run_start, cross, state))
            state = BitDecision.DOMINANT
            run_start = cross
        elif state is BitDecision.DOMINANT and v < release:
            cross = refine(t_prev, t, release)
            runs.append((run_start, cross, state))
            state = BitDecision.RECESSIVE
            run_start = cross
        t_prev = t
    runs.append((run_start, t1, state))
    return [(a, b, s) for a, b, s in runs if b > a]


def registered_at(runs: Sequence[tuple], t: float, decode_hold: float, entry: BitDecision) -> BitDecision:
    """Level registered by the controller at time t.

    A run shorter than decode_hold is a transient the controller never
    latches; the preceding registered level persists through it.
    """
    registered = entry
    for start, end, state in runs:
        if start > t:
            break
        if end - start >= decode_hold:
            registered = state
        if start <= t < end:
            if end - start >= decode_hold:
                return state
            return registered
    return registered


def sample_bit(
    waveform: Callable[[float], float],
    bit_start: float,
    timing: BitTiming,
    prev: BitDecision,
) -> BitDecision:
    """Controller decision for the bit starting at bit_start.

    Tracks the comparator across the bit and reads the registered level
    at the sample point; transients shorter than decode_hold are ignored.
    """
    bt = timing.bit_time
    runs = comparator_runs(waveform, bit_start, bit_start + bt, prev, timing)
    # entry run continues the previous bit's level, so it is never a transient
    if runs and runs[0][2] is prev:
        first = runs[0]
        runs[0] = (first[0] - timing.decode_hold, first[1], first[2])
    t_sample = bit_start + timing.sample_point * bt
    return registered_at(runs, t_sample, timing.decode_hold, prev)


# --- transmit queue / error handling -----------------------------------


@dataclass(frozen=True)
class QueuedFrame:
    frame: Frame
    enqueued_at: float
    attempts: int = 0


@dataclass(frozen=True)
class LinkState:
    """Per-ECU transmit bookkeeping; a value stepped by the caller."""

    queue: tuple = ()
    retransmissions: int = 0
    error_active: bool = True
    last_error_t: float | None = None


@dataclass(frozen=True)
class Enqueue:
    frame: Frame
    t: float


@dataclass(frozen=True)
class TxError:
    """Transmission aborted at a stuffed bit index of the current frame."""

    t_start: float
    bit_index: int
    reason: str


@dataclass(frozen=True)
class TxSuccess:
    t_start: float


@dataclass(frozen=True)
class EmitErrorFrame:
    t_start: float
    t_end: float
    reason: str


@dataclass(frozen=True)
class Retransmit:
    t_start: float


@dataclass(frozen=True)
class Deliver:
    frame: Frame
    t: float


def link_step(state: LinkState, event, timing: BitTiming | None = None) -> tuple:
    """Advance the transmit state machine; returns (state, actions).

    On an error the frame stays queued, an error frame (6 dominant bits
    plus delimiter) goes out from the next bit boundary, and the
    retransmission starts after the intermission.
    """
    timing = timing or BitTiming()
    bt = timing.bit_time

    if isinstance(event, Enqueue):
        q = state.queue + (QueuedFrame(event.frame, event.t),)
        return replace(state, queue=q), []

    if isinstance(event, TxError):
        if not state.queue:
            raise ValueError("TxError with an empty queue")
        head = state.queue[0]
        err_start = event.t_start + (event.bit_index + 1) * bt
        err_end = err_start + (ERROR_FLAG_BITS + ERROR_DELIMITER_BITS) * bt
        retry = err_end + INTERMISSION_BITS * bt
        q = (replace(head, attempts=head.attempts + 1),) + state.queue[1:]
        new = replace(
            state,
            queue=q,
            retransmissions=state.retransmissions + 1,
            last_error_t=err_start,
        )
        return new, [EmitErrorFrame(err_start, err_end, event.reason), Retransmit(retry)]

    if isinstance(event, TxSuccess):
        if not state.queue:
            raise ValueError("TxSuccess with an empty queue")
        head = state.queue[0]
        t_done = event.t_start + frame_bit_length(head.frame) * bt
        return replace(state, queue=state.queue[1:]), [Deliver(head.frame, t_done)]

    raise TypeError(f"unknown link event {event!r}")


def retransmission_start_gap(f: Frame, error_bit_index: int, timing: BitTiming | None = None) -> float:
    """Start-to-start spacing when the attempt aborts at error_bit_index."""
    timing = timing or BitTiming()
    bits = error_bit_index + 1 + ERROR_FLAG_BITS + ERROR_DELIMITER_BITS + INTERMISSION_BITS
    return bits * timing.bit_time
