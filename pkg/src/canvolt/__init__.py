"""Deterministic CAN bus simulator: voltage-based attacks on the bus
lines and the series protective hardware that isolates a compromised
measurement node."""

from .attacks import (
    ActiveOvercurrent,
    AttackClass,
    AttackSpec,
    DoS,
    ForcedRetransmission,
    PassiveOvercurrent,
    PulseAttack,
    classify_pin_combo,
    min_dos_voltage,
    min_fra_voltage,
    min_pulse_period,
    overcurrent_current,
    pin_override,
)
from .electrical import (
    INPUT,
    OUTPUT_LOW,
    BusTopology,
    ConflictingSources,
    Input,
    InvalidVoltage,
    LineVoltages,
    OutputHigh,
    OutputLow,
    PinCurrents,
    PinMode,
    Pulse,
    TransceiverParams,
    measure_tau_bit,
    pin_current_profile,
    pulse,
    recovery_waveform,
    solve_bus,
)
from .engine import (
    CalibratedParams,
    ConfigError,
    DamageParams,
    EcuDamage,
    EcuSpec,
    IrsConfig,
    ScenarioConfig,
    Summary,
    SweepSpec,
    Trace,
    TraceRecord,
    damage_step,
    message_indicator,
    run_scenario,
    run_sweep,
)
from .irs import (
    BreakerState,
    FuseState,
    NotTripped,
    ResettableFuseState,
    ThermostatCoil,
    breaker_reset,
    breaker_step,
    fuse_step,
    resettable_fuse_current,
    resettable_fuse_step,
    thermostat_step,
)
from .link import (
    BitDecision,
    BitTiming,
    CrcError,
    DecodeError,
    FormError,
    Frame,
    IdCollision,
    LinkState,
    StuffError,
    arbitrate,
    decide_bit,
    decode_bitstream,
    encode_frame,
    link_step,
    sample_bit,
)

__version__ = "0.1.0"
