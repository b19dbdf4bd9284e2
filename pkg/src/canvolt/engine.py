"""Deterministic scenario engine.

Frames advance event by event at bit granularity; sub-bit physics
(pulse phases, recovery tails, device trips) stay closed form. Device
and damage accumulators integrate over piecewise-constant current
segments, so a fuse can blow in the middle of a bit and the rest of the
frame sees the recovered bus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from . import attacks as atk
from . import irs
from .electrical import (
    INPUT,
    BusTopology,
    Input,
    OutputHigh,
    TransceiverParams,
    TAU_RC_DEFAULT,
    NOMINAL_TRANSITION,
    solve_bus_detailed,
)
from .link import (
    DOMINANT_THRESHOLD,
    ERROR_DELIMITER_BITS,
    ERROR_FLAG_BITS,
    INTERMISSION_BITS,
    BitDecision,
    BitTiming,
    Frame,
    arbitrate,
    bus_bits,
    ack_delimiter_index,
    frame_bit_length,
)

TRACE_KINDS = (
    "FrameSent",
    "FrameReceived",
    "ErrorFrame",
    "Retransmission",
    "FuseBlown",
    "BreakerTripped",
    "ThermostatOpen",
    "ThermostatClosed",
    "Damage",
    "AttackStart",
    "AttackEnd",
    "PinCurrentSample",
    "LineVoltageSample",
)


class ConfigError(ValueError):
    """Invalid scenario configuration; carries the offending field path."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.line = line
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class CalibratedParams:
    """Calibrated electrical and timing constants in one place."""

    r_drive_high: float = 26.7
    r_sink_offset: float = 1.4
    r_sink: float = 12.8
    tau_rc: float = TAU_RC_DEFAULT
    nominal_transition: float = NOMINAL_TRANSITION
    sample_point: float = 0.359
    decode_hold: float = 340e-9
    hysteresis: float = 0.15
    transition_extension: float = atk.TRANSITION_EXTENSION_DEFAULT

    def transceiver(self) -> TransceiverParams:
        return TransceiverParams(
            r_drive_high=self.r_drive_high,
            r_sink_offset=self.r_sink_offset,
            r_sink=self.r_sink,
        )

    def timing(self, bus_speed: float = 500_000.0) -> BitTiming:
        return BitTiming(
            bus_speed=bus_speed,
            sample_point=self.sample_point,
            decode_hold=self.decode_hold,
            hysteresis=self.hysteresis,
        )

    def to_dict(self) -> dict:
        return {
            "r_drive_high": self.r_drive_high,
            "r_sink_offset": self.r_sink_offset,
            "r_sink": self.r_sink,
            "tau_rc": self.tau_rc,
            "nominal_transition": self.nominal_transition,
            "sample_point": self.sample_point,
            "decode_hold": self.decode_hold,
            "hysteresis": self.hysteresis,
            "transition_extension": self.transition_extension,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedParams":
        known = set(cls().to_dict())
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown parameter")
        return cls(**d)


@dataclass(frozen=True)
class EcuSpec:
    """One node: the compromised VIDS host, a sender, or a logger."""

    name: str
    role: str  # 'vids-host' | 'sender' | 'logger'
    period: float | None = None
    frame: Frame | None = None
    offset: float = 0.0


@dataclass(frozen=True)
class IrsConfig:
    """Protective devices wired in series with the monitored pins."""

    device: str  # 'fuse' | 'breaker' | 'resettable_fuse' | 'thermostat'
    pins: str = "both"  # 'both' | 'ph' | 'pl'
    rating: float = 0.010
    opening_time: float = 1e-6
    leakage_current: float = 0.100
    r_coil: float = 1.0
    t_limit: float = 40.0
    t_ambient: float = 25.0
    coil_hysteresis: float = 2.0
    thermal_gain: float = 40.0
    tau_thermal: float = 2.0
    coil_drive: float | None = None  # bench-supply amps forced through the coil in-window

    def build(self):
        if self.device == "fuse":
            return irs.FuseState(rating=self.rating, opening_time=self.opening_time)
        if self.device == "breaker":
            return irs.BreakerState(rating=self.rating, opening_time=self.opening_time)
        if self.device == "resettable_fuse":
            return irs.ResettableFuseState(
                rating=self.rating,
                opening_time=self.opening_time,
                leakage_current=self.leakage_current,
            )
        if self.device == "thermostat":
            return irs.ThermostatCoil(
                r_coil=self.r_coil,
                temp=self.t_ambient,
                t_ambient=self.t_ambient,
                t_limit=self.t_limit,
                hysteresis=self.coil_hysteresis,
                thermal_gain=self.thermal_gain,
                tau_thermal=self.tau_thermal,
            )
        raise ConfigError("irs.device", f"unknown device {self.device!r}")


@dataclass(frozen=True)
class DamageParams:
    i_max: float = 0.040
    damage_time: float = 1e-6


@dataclass(frozen=True)
class EcuDamage:
    """Pin-current abuse accumulator for one microcontroller pin."""

    i_max: float = 0.040
    damage_time: float = 1e-6
    over_timer: float = 0.0
    damaged: bool = False


def damage_step(state: EcuDamage, i: float, dt: float) -> EcuDamage:
    """Accumulate exposure strictly above the absolute maximum rating."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if state.damaged:
        return state
    if abs(i) > state.i_max:
        timer = state.over_timer + dt
        return replace(state, over_timer=timer, damaged=timer >= state.damage_time)
    return replace(state, over_timer=0.0)


@dataclass(frozen=True)
class SweepSpec:
    path: str  # dotted attack parameter, e.g. 'attack.v_attack_l'
    start: float
    stop: float
    step: float

    def values(self) -> list:
        n = int(math.floor((self.stop - self.start) / self.step + 0.5)) + 1
        return [round(self.start + k * self.step, 12) for k in range(n)]


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float = 60.0
    bus_speed: float = 500_000.0
    ecus: tuple = ()
    attack: Optional[atk.AttackSpec] = None
    irs_config: Optional[IrsConfig] = None
    damage: DamageParams = field(default_factory=DamageParams)
    sweep: Optional[SweepSpec] = None
    params: CalibratedParams = field(default_factory=CalibratedParams)
    termination: float = 120.0


@dataclass(frozen=True)
class TraceRecord:
    t: float
    kind: str
    ecu: str = ""
    line: str = ""
    value: float | None = None
    detail: str = ""


@dataclass
class Trace:
    records: list = field(default_factory=list)

    def add(self, t, kind, ecu="", line="", value=None, detail=""):
        self.records.append(TraceRecord(t, kind, ecu, line, value, detail))

    def of_kind(self, kind: str) -> list:
        return [r for r in self.records if r.kind == kind]


@dataclass(frozen=True)
class Summary:
    messages_sent: int
    messages_received: int
    indicator: tuple
    retransmissions: int
    attack_success: bool
    device_trips: dict
    damaged: bool
    damage_time: float | None
    first_failure_reason: str


def validate_config(cfg: ScenarioConfig) -> None:
    if cfg.duration <= 0.0:
        raise ConfigError("duration", "must be positive")
    if cfg.bus_speed <= 0.0:
        raise ConfigError("bus.speed", "must be positive")
    if not cfg.ecus:
        raise ConfigError("ecu", "at least one ECU required")
    names = [e.name for e in cfg.ecus]
    if len(set(names)) != len(names):
        raise ConfigError("ecu", "duplicate ECU names")
    hosts = [e for e in cfg.ecus if e.role == "vids-host"]
    if len(hosts) != 1:
        raise ConfigError("ecu", f"exactly one vids-host required, found {len(hosts)}")
    bit_time = 1.0 / cfg.bus_speed
    for e in cfg.ecus:
        if e.role not in ("vids-host", "sender", "logger"):
            raise ConfigError(f"ecu.{e.name}.role", f"unknown role {e.role!r}")
        if e.role == "sender":
            if e.period is None or e.frame is None:
                raise ConfigError(f"ecu.{e.name}", "sender needs period and frame")
            tx_time = frame_bit_length(e.frame) * bit_time
            if e.period <= tx_time:
                raise ConfigError(
                    f"ecu.{e.name}.period",
                    f"period {e.period} not above frame time {tx_time:.6g}",
                )
    if cfg.attack is not None:
        if cfg.attack.node != hosts[0].name:
            raise ConfigError("attack.node", "attack must originate at the vids-host")
        if isinstance(cfg.attack, atk.PulseAttack):
            for e in cfg.ecus:
                if e.role != "sender":
                    continue
                tx_time = frame_bit_length(e.frame) * bit_time
                if cfg.attack.period >= tx_time:
                    raise ConfigError(
                        "attack.period",
                        f"pulse period {cfg.attack.period} not below frame time {tx_time:.6g}",
                    )
    if cfg.irs_config is not None and cfg.irs_config.pins not in ("both", "ph", "pl"):
        raise ConfigError("irs.pins", f"unknown pin selection {cfg.irs_config.pins!r}")


# --- internal simulation -------------------------------------------------


@dataclass
class _QueuedTx:
    frame: Frame
    enqueued_at: float
    attempts: int = 0
    retry_at: float = 0.0
    blocked: bool = False  # parked until a connectivity change or window end


class _PinBank:
    """Per-pin device and damage accumulators for the VIDS host."""

    def __init__(self, cfg: ScenarioConfig):
        self.devices = {"ph": None, "pl": None}
        self.coil_drive = None
        if cfg.irs_config is not None:
            if cfg.irs_config.pins in ("both", "ph"):
                self.devices["ph"] = cfg.irs_config.build()
            if cfg.irs_config.pins in ("both", "pl"):
                self.devices["pl"] = cfg.irs_config.build()
            self.coil_drive = cfg.irs_config.coil_drive
        dmg = EcuDamage(i_max=cfg.damage.i_max, damage_time=cfg.damage.damage_time)
        self.damage = {"ph": dmg, "pl": dmg}
        self.trip_times: dict = {}
        self.damaged_at: float | None = None

    def connected(self, pin: str) -> bool:
        dev = self.devices[pin]
        if dev is None:
            return True
        if isinstance(dev, irs.ResettableFuseState):
            return True  # the leakage path keeps conducting
        return not dev.open

    def gated_current(self, pin: str, i_raw: float) -> float:
        dev = self.devices[pin]
        if isinstance(dev, irs.ResettableFuseState):
            return irs.resettable_fuse_current(dev, i_raw)
        return i_raw

    @property
    def damaged(self) -> bool:
        return self.damage["ph"].damaged or self.damage["pl"].damaged


class _Sim:
    def __init__(self, cfg: ScenarioConfig):
        validate_config(cfg)
        self.cfg = cfg
        self.topo = BusTopology(termination=cfg.termination)
        self.params = cfg.params.transceiver()
        self.timing = cfg.params.timing(cfg.bus_speed)
        self.bit_time = self.timing.bit_time
        self.attack = cfg.attack
        self.vids = next(e.name for e in cfg.ecus if e.role == "vids-host")
        self.loggers = sorted(e.name for e in cfg.ecus if e.role == "logger")
        self.bank = _PinBank(cfg)
        self.trace = Trace()
        self.integrated_to = 0.0
        self.retransmissions = 0
        self.first_failure = ""
        self.queues: dict = {e.name: [] for e in cfg.ecus if e.role == "sender"}
        self.sends: list = []
        for e in cfg.ecus:
            if e.role != "sender":
                continue
            t = e.offset
            while t < cfg.duration:
                self.sends.append((t, e.name, e.frame))
                t = t + e.period
        self.sends.sort(key=lambda s: (s[0], s[1]))
        # agenda of sparse sample ticks and attack window markers
        self.marks: list = [(float(k), "tick") for k in range(int(cfg.duration) + 1)]
        if cfg.attack is not None:
            for t, kind in ((cfg.attack.t_start, "AttackStart"), (cfg.attack.t_end, "AttackEnd")):
                if t <= cfg.duration:
                    self.marks.append((t, kind))
        self.marks.sort(key=lambda m: (m[0], m[1] != "AttackStart"))
        self.mark_idx = 0

    # -- attack pin state ---------------------------------------------------

    def pins_at(self, t: float) -> tuple:
        """Gated (P_H, P_L) modes of the VIDS node at time t."""
        p_h, p_l = atk.pin_override(self.attack, t)
        if not self.bank.connected("ph"):
            p_h = INPUT
        if not self.bank.connected("pl"):
            p_l = INPUT
        return p_h, p_l

    def solve(self, dominant: bool, t: float):
        pins = {self.vids: self.pins_at(t)}
        return solve_bus_detailed({"bus": dominant}, pins, self.topo, self.params)

    def vids_currents(self, dominant: bool, t: float):
        sol = self.solve(dominant, t)
        pc = sol.pin_currents.get(self.vids)
        i = {"ph": pc.i_ph if pc else 0.0, "pl": pc.i_pl if pc else 0.0}
        return sol, i

    # -- boundary helpers -----------------------------------------------------

    def boundaries(self, a: float, b: float, pulse_cuts: bool = True) -> list:
        """Cut [a, b) at attack window edges and pulse phase flips.

        Pulse cuts matter only inside driven bits; the idle bus carries
        no current in either phase, so idle integration skips them.
        """
        cuts = {a, b}
        if self.attack is not None:
            for edge in (self.attack.t_start, self.attack.t_end):
                if a < edge < b:
                    cuts.add(edge)
            if pulse_cuts and isinstance(self.attack, atk.PulseAttack):
                lo = max(a, self.attack.t_start)
                hi = min(b, self.attack.t_end)
                if lo < hi:
                    per = self.attack.period
                    half = self.attack.duty * per
                    origin = self.attack.phase_origin
                    k = math.floor((lo - origin) / per)
                    t = origin + k * per
                    while t < hi:
                        for edge in (t, t + half):
                            if lo < edge < hi:
                                cuts.add(edge)
                        t += per
        return sorted(cuts)

    def next_segment_end(self, a: float, b: float) -> float:
        cuts = self.boundaries(a, b)
        return cuts[1] if len(cuts) > 1 else b

    # -- marks ----------------------------------------------------------------

    def flush_marks(self, upto: float):
        """Emit ticks and window markers due at or before `upto`."""
        while self.mark_idx < len(self.marks) and self.marks[self.mark_idx][0] <= upto:
            t, kind = self.marks[self.mark_idx]
            self.mark_idx += 1
            if kind == "tick":
                self.emit_samples(t)
            else:
                self.trace.add(t, kind, ecu=self.attack.node, detail=type(self.attack).__name__)

    def next_mark(self) -> float:
        if self.mark_idx < len(self.marks):
            return self.marks[self.mark_idx][0]
        return math.inf

    def emit_samples(self, t: float):
        sol = self.solve(False, t)
        self.trace.add(t, "LineVoltageSample", line="canh", value=sol.voltages.v_canh)
        self.trace.add(t, "LineVoltageSample", line="canl", value=sol.voltages.v_canl)
        pc = sol.pin_currents.get(self.vids)
        if pc is not None:
            self.trace.add(t, "PinCurrentSample", ecu=self.vids, line="ph", value=pc.i_ph)
            self.trace.add(t, "PinCurrentSample", ecu=self.vids, line="pl", value=pc.i_pl)

    # -- device/damage integration ---------------------------------------------

    def _emit_trip(self, t: float, pin: str, dev, opened: bool):
        kind = {
            irs.FuseState: "FuseBlown",
            irs.BreakerState: "BreakerTripped",
            irs.ResettableFuseState: "FuseBlown",
            irs.ThermostatCoil: "ThermostatOpen" if opened else "ThermostatClosed",
        }[type(dev)]
        detail = "resettable" if isinstance(dev, irs.ResettableFuseState) else ""
        self.trace.add(t, kind, ecu=self.vids, line=pin, detail=detail)
        if opened and pin not in self.bank.trip_times:
            self.bank.trip_times[pin] = t

    def advance_constant(self, a: float, b: float, i_raw: dict) -> float:
        """Advance accumulators over [a, b) of constant raw pin currents.

        Returns the time actually reached; stops early when a device
        changes connectivity so the caller can re-solve the bus. Timer
        arithmetic runs on offsets from `a` so trip instants stay exact
        regardless of the absolute timestamp.
        """
        bank = self.bank
        span = b - a
        stop_off = span

        # closed static devices bound the exposure window
        trip_offs = {}
        for pin in ("ph", "pl"):
            dev = bank.devices[pin]
            if dev is None or isinstance(dev, irs.ThermostatCoil) or dev.open:
                continue
            if abs(i_raw[pin]) > dev.rating:
                trip_offs[pin] = dev.opening_time - dev.over_timer
                stop_off = min(stop_off, trip_offs[pin])

        # thermostats step on a coarse grid; a flip also bounds exposure
        flips: list = []
        for pin in ("ph", "pl"):
            dev = bank.devices[pin]
            if not isinstance(dev, irs.ThermostatCoil):
                continue
            coil_i = 0.0 if dev.open else i_raw[pin]
            if bank.coil_drive is not None and self.attack is not None and self.attack.active(a):
                coil_i = 0.0 if dev.open else bank.coil_drive
            if coil_i == 0.0 and abs(dev.temp - dev.t_ambient) < 1e-6 and not dev.open:
                continue
            max_dt = dev.tau_thermal / 10.0
            off = 0.0
            while off < stop_off:
                dt = min(max_dt, stop_off - off)
                was_open = dev.open
                dev = irs.thermostat_step(dev, coil_i, dt)
                off += dt
                if dev.open != was_open:
                    flips.append((off, pin))
                    stop_off = off
                    break
            bank.devices[pin] = dev

        # effective currents through the devices (a tripped resettable caps)
        currents = {p: bank.gated_current(p, i_raw[p]) for p in ("ph", "pl")}

        # damage triggers strictly inside the bounded exposure; a trip at
        # the same instant interrupts the current first
        for pin in ("ph", "pl"):
            dmg = bank.damage[pin]
            if dmg.damaged:
                continue
            if abs(currents[pin]) > dmg.i_max:
                dmg_off = max(0.0, dmg.damage_time - dmg.over_timer)
                if dmg_off < stop_off:
                    bank.damage[pin] = replace(dmg, over_timer=dmg.damage_time, damaged=True)
                    if bank.damaged_at is None:
                        bank.damaged_at = a + dmg_off
                        self.trace.add(a + dmg_off, "Damage", ecu=self.vids, line=pin)
                else:
                    bank.damage[pin] = replace(dmg, over_timer=dmg.over_timer + stop_off)
            else:
                bank.damage[pin] = replace(dmg, over_timer=0.0)

        # advance static trip timers, applying trips that bound this step
        connectivity_changed = False
        t_stop = b if stop_off >= span else a + stop_off
        for pin in ("ph", "pl"):
            dev = bank.devices[pin]
            if dev is None or isinstance(dev, irs.ThermostatCoil) or dev.open:
                continue
            if trip_offs.get(pin) == stop_off:
                dev = replace(dev, over_timer=dev.opening_time)
                dev = (
                    replace(dev, blown=True)
                    if isinstance(dev, irs.FuseState)
                    else replace(dev, tripped=True)
                )
                bank.devices[pin] = dev
                connectivity_changed = True
                self._emit_trip(t_stop, pin, dev, opened=True)
            elif stop_off > 0.0:
                bank.devices[pin] = irs.device_step(dev, i_raw[pin], stop_off)

        for off, pin in flips:
            connectivity_changed = True
            self._emit_trip(a + off, pin, bank.devices[pin], opened=bank.devices[pin].open)

        if connectivity_changed:
            return t_stop
        return b

    def advance_idle(self, target: float) -> float:
        """Integrate the idle bus up to target; early-return on changes."""
        while self.integrated_to < target:
            a = self.integrated_to
            self.flush_marks(a)
            b = min(target, max(self.next_mark(), a))
            if b <= a:
                b = target
            cuts = self.boundaries(a, b, pulse_cuts=False)
            for lo, hi in zip(cuts, cuts[1:]):
                _, i = self.vids_currents(False, 0.5 * (lo + hi))
                reached = self.advance_constant(lo, hi, i)
                self.integrated_to = reached
                if reached < hi:
                    return reached  # connectivity changed; caller re-plans
            self.integrated_to = b
        self.flush_marks(target)
        return target

    # -- bus state ---------------------------------------------------------------

    def bus_jammed(self, t: float) -> bool:
        """Idle bus reads dominant, so no transmission can start."""
        return self.solve(False, t).voltages.v_diff >= DOMINANT_THRESHOLD

    def attack_blocking(self, t: float) -> bool:
        """The running attack deterministically kills every attempt at t."""
        if self.attack is None or not self.attack.active(t):
            return False
        pins = self.pins_at(t)
        if isinstance(self.attack, atk.DoS):
            return not isinstance(pins[1], Input) and atk.dominant_blocked(
                self.attack.v_attack_l, self.params, self.topo
            )
        if isinstance(self.attack, atk.PulseAttack):
            attacked = pins[0] if self.attack.line == "canh" else pins[1]
            return not isinstance(attacked, Input) and atk.pulse_blocks_bits(
                self.attack.line,
                self.attack.period,
                self.attack.duty,
                self.timing,
                self.cfg.params.transition_extension,
            )
        if isinstance(self.attack, atk.ActiveOvercurrent):
            return self.bus_jammed(t)
        return False

    # -- frame transmission ---------------------------------------------------------

    def simulate_attempt(self, ecu: str, tx: _QueuedTx, t0: float) -> tuple:
        """Run one transmission attempt; returns (delivered, t_bus_free)."""
        f = tx.frame
        bits = bus_bits(f, acked=True)
        bt = self.bit_time
        hold = self.timing.decode_hold
        release = DOMINANT_THRESHOLD - self.timing.hysteresis
        ack_delim = ack_delimiter_index(f)

        if tx.attempts == 0:
            self.trace.add(t0, "FrameSent", ecu=ecu, value=float(f.id), detail=f.data.hex())
        else:
            self.retransmissions += 1
            self.trace.add(t0, "Retransmission", ecu=ecu, value=float(f.id), detail=str(tx.attempts))

        comp_state = BitDecision.RECESSIVE
        comp_run_start = t0 - 1.0  # idle bus precedes the frame
        prev_sampled = BitDecision.RECESSIVE
        error_bit = None
        error_reason = ""
        # a pulse on CANH drags the recovery out past each low phase
        canh_pulse = isinstance(self.attack, atk.PulseAttack) and self.attack.line == "canh"
        deviation_ext = self.cfg.params.transition_extension if canh_pulse else 0.0

        for k, bit in enumerate(bits):
            b0 = t0 + k * bt
            b1 = b0 + bt
            dominant = bit == 0
            t_sample = b0 + self.timing.sample_point * bt

            pieces = []
            cursor = b0
            while cursor < b1:
                hi = self.next_segment_end(cursor, b1)
                # sample the segment at its midpoint: a cut time itself
                # can fall on either side of a pulse edge in floats
                sol, i = self.vids_currents(dominant, 0.5 * (cursor + hi))
                reached = self.advance_constant(cursor, hi, i)
                pieces.append((cursor, reached, sol.voltages.v_diff))
                cursor = reached
            self.integrated_to = max(self.integrated_to, b1)

            # comparator trajectory over the bit's constant pieces
            runs = []
            for (pa, _, v) in pieces:
                new = (
                    BitDecision.DOMINANT
                    if v >= DOMINANT_THRESHOLD
                    else BitDecision.RECESSIVE
                    if v < release
                    else comp_state
                )
                if new != comp_state:
                    runs.append((comp_run_start, pa, comp_state))
                    comp_state = new
                    comp_run_start = pa
            runs.append((comp_run_start, b1, comp_state))

            # the bit reads its driven level unless a deviation persists
            # past the controller's hold while covering the sample point;
            # deviation time before the bit belongs to the previous bit.
            # 1 ps slop absorbs float noise in absolute-time differences.
            driven = BitDecision.DOMINANT if dominant else BitDecision.RECESSIVE
            sampled = driven
            for ra, rb, rs in runs:
                if rs is driven:
                    continue
                ra_c = max(ra, b0)
                rb_eff = rb + deviation_ext if (dominant and deviation_ext) else rb
                if ra_c <= t_sample < rb_eff and (rb_eff - ra_c) >= hold - 1e-12:
                    sampled = rs
                    break

            if error_bit is None:
                if dominant and sampled is BitDecision.RECESSIVE:
                    error_bit = k
                    error_reason = "bit_error"
                elif (
                    k == ack_delim
                    and tx.attempts == 0
                    and prev_sampled is BitDecision.DOMINANT
                    and self.fra_stretch_corrupts(t_sample)
                ):
                    error_bit = k
                    error_reason = "form_error_ack_delimiter"
                if error_bit is not None:
                    if not self.first_failure:
                        self.first_failure = error_reason
                    break
            prev_sampled = sampled

        if error_bit is None:
            t_end = t0 + len(bits) * bt
            for lg in self.loggers[:1]:
                self.trace.add(t_end, "FrameReceived", ecu=lg, value=float(f.id), detail=f.data.hex())
            return True, t_end + INTERMISSION_BITS * bt

        # error frame: 6 dominant flag bits drive the bus, then 8
        # recessive delimiter bits and the intermission
        err_start = t0 + (error_bit + 1) * bt
        self.trace.add(err_start, "ErrorFrame", ecu=ecu, detail=error_reason)
        cursor = err_start
        flag_end = err_start + ERROR_FLAG_BITS * bt
        while cursor < flag_end:
            hi = self.next_segment_end(cursor, flag_end)
            _, i = self.vids_currents(True, 0.5 * (cursor + hi))
            cursor = self.advance_constant(cursor, hi, i)
        self.integrated_to = max(self.integrated_to, flag_end)
        t_free = flag_end + (ERROR_DELIMITER_BITS + INTERMISSION_BITS) * bt
        return False, t_free

    def fra_stretch_corrupts(self, t_sample: float) -> bool:
        """Recessive-after-dominant still reads dominant at the sampler."""
        p_h, _ = self.pins_at(t_sample)
        if not isinstance(p_h, OutputHigh) or p_h.level < 3.5:
            return False
        return atk.fra_ack_delimiter_corrupted(p_h.level, self.timing, self.cfg.params.tau_rc)

    # -- main loop ---------------------------------------------------------------------

    def run(self) -> tuple:
        cfg = self.cfg
        send_idx = 0
        bus_free = 0.0
        while True:
            candidates = []
            if send_idx < len(self.sends):
                candidates.append(self.sends[send_idx][0])
            ready = None
            for q in self.queues.values():
                if q:
                    head = q[0]
                    t_ready = max(bus_free, head.retry_at, head.enqueued_at)
                    if ready is None or t_ready < ready:
                        ready = t_ready
            if ready is not None:
                candidates.append(ready)
            if not candidates:
                break
            t_next = min(candidates)
            if t_next >= cfg.duration:
                break

            reached = self.advance_idle(t_next)
            if reached < t_next:
                # a device changed state; wake frames parked on it
                for q in self.queues.values():
                    if q and q[0].blocked:
                        q[0].retry_at = reached
                        q[0].blocked = False
                continue

            if send_idx < len(self.sends) and self.sends[send_idx][0] <= t_next:
                t, name, frame = self.sends[send_idx]
                send_idx += 1
                self.queues[name].append(_QueuedTx(frame, t, retry_at=t))
                continue

            contenders = []
            for name, q in self.queues.items():
                if q and max(bus_free, q[0].retry_at, q[0].enqueued_at) <= t_next:
                    contenders.append((name, q[0]))
            if not contenders:
                continue
            winner = arbitrate([c[1].frame for c in contenders])
            name, tx = next(c for c in contenders if c[1].frame == winner)

            if self.bus_jammed(t_next):
                tx.retry_at = self.attack.t_end if self.attack is not None else cfg.duration
                tx.blocked = True
                continue

            delivered, t_free = self.simulate_attempt(name, tx, t_next)
            bus_free = t_free
            if delivered:
                self.queues[name].pop(0)
            else:
                tx.attempts += 1
                if self.attack_blocking(t_free):
                    tx.retry_at = self.attack.t_end
                    tx.blocked = True
                else:
                    tx.retry_at = t_free

        self.advance_idle(cfg.duration)
        self.trace.records = sorted(
            self.trace.records, key=lambda r: r.t
        )  # stable: equal stamps keep insertion order
        return self.trace, self.summarize()

    def summarize(self) -> Summary:
        cfg = self.cfg
        indicator = message_indicator(
            self.trace,
            period=self._indicator_period(),
            duration=cfg.duration,
            receiver=self.loggers[0] if self.loggers else None,
        )
        return Summary(
            messages_sent=len(self.sends),
            messages_received=len(self.trace.of_kind("FrameReceived")),
            indicator=tuple(indicator),
            retransmissions=self.retransmissions,
            attack_success=self.attack_succeeded(),
            device_trips=dict(self.bank.trip_times),
            damaged=self.bank.damaged,
            damage_time=self.bank.damaged_at,
            first_failure_reason=self.first_failure,
        )

    def _indicator_period(self) -> float:
        senders = [e for e in self.cfg.ecus if e.role == "sender"]
        return senders[0].period if senders else 1.0

    def attack_succeeded(self) -> bool:
        a = self.attack
        if a is None:
            return False
        if isinstance(a, (atk.PassiveOvercurrent, atk.ActiveOvercurrent)):
            return self.bank.damaged
        if isinstance(a, atk.ForcedRetransmission):
            return any(
                r.kind == "Retransmission" and a.t_start <= r.t < a.t_end
                for r in self.trace.records
            )
        expected = [t for t, _, _ in self.sends if a.t_start <= t < a.t_end]
        delivered = any(
            r.kind == "FrameReceived" and a.t_start <= r.t < a.t_end
            for r in self.trace.records
        )
        return bool(expected) and not delivered


def run_scenario(cfg: ScenarioConfig) -> tuple:
    """Simulate one scenario; returns (Trace, Summary)."""
    return _Sim(cfg).run()


def message_indicator(
    trace: Trace,
    period: float = 1.0,
    duration: float | None = None,
    receiver: str | None = None,
) -> list:
    """Per-slot delivery flags: 1 when a frame arrived inside the slot."""
    if duration is None:
        duration = max((r.t for r in trace.records), default=0.0)
    slots = int(round(duration / period))
    flags = [0] * slots
    for r in trace.records:
        if r.kind != "FrameReceived":
            continue
        if receiver is not None and r.ecu != receiver:
            continue
        k = int(r.t // period)
        if 0 <= k < slots:
            flags[k] = 1
    return flags


def set_sweep_value(cfg: ScenarioConfig, path: str, value: float) -> ScenarioConfig:
    """Return a config with one dotted attack parameter replaced."""
    scope, _, name = path.partition(".")
    if scope != "attack" or cfg.attack is None:
        raise ConfigError("sweep.path", f"unsupported sweep path {path!r}")
    if name not in cfg.attack.__dataclass_fields__:
        raise ConfigError("sweep.path", f"attack has no parameter {name!r}")
    return replace(cfg, attack=replace(cfg.attack, **{name: value}), sweep=None)


@dataclass(frozen=True)
class SweepPoint:
    value: float
    success: bool
    summary: Summary


def run_sweep(cfg: ScenarioConfig) -> list:
    """Independent deterministic runs over the configured grid."""
    if cfg.sweep is None:
        raise ConfigError("sweep", "config has no sweep section")
    points = []
    for v in cfg.sweep.values():
        sub = set_sweep_value(cfg, cfg.sweep.path, v)
        _, summary = run_scenario(sub)
        points.append(SweepPoint(value=v, success=summary.attack_success, summary=summary))
    return points
