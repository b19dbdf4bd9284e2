"""Scenario engine: timelines, determinism, conservation, damage."""

import pytest

from canvolt.attacks import (
    ActiveOvercurrent,
    DoS,
    ForcedRetransmission,
    PassiveOvercurrent,
    PulseAttack,
)
from canvolt.engine import (
    ConfigError,
    DamageParams,
    EcuDamage,
    EcuSpec,
    IrsConfig,
    ScenarioConfig,
    SweepSpec,
    damage_step,
    message_indicator,
    run_scenario,
    run_sweep,
    set_sweep_value,
    validate_config,
)
from canvolt.link import Frame

FRAME = Frame(id=0x01, data=b"\x01")


def scenario(attack=None, irs=None, duration=60.0, damage=None):
    return ScenarioConfig(
        duration=duration,
        ecus=(
            EcuSpec("A", "vids-host"),
            EcuSpec("B", "logger"),
            EcuSpec("C", "sender", period=1.0, frame=FRAME),
        ),
        attack=attack,
        irs_config=irs,
        damage=damage or DamageParams(),
    )


def test_baseline_delivers_every_message():
    trace, summary = run_scenario(scenario(duration=10.0))
    assert summary.messages_sent == 10
    assert summary.messages_received == 10
    assert summary.indicator == (1,) * 10
    assert summary.retransmissions == 0
    assert not summary.attack_success


def test_dos_blocks_exactly_the_window_slots():
    _, summary = run_scenario(scenario(DoS(v_attack_l=5.0)))
    expected = tuple(0 if 10 <= k < 30 else 1 for k in range(60))
    assert summary.indicator == expected
    assert summary.attack_success


def test_dos_with_fuse_keeps_all_slots():
    _, summary = run_scenario(scenario(DoS(v_attack_l=5.0), IrsConfig(device="fuse")))
    assert summary.indicator == (1,) * 60
    assert "pl" in summary.device_trips
    assert summary.device_trips["pl"] == pytest.approx(10.0, abs=1e-5)
    assert not summary.attack_success
    assert not summary.damaged


def test_fra_delivers_after_forced_retransmissions():
    trace, summary = run_scenario(scenario(ForcedRetransmission(v_attack_h=5.0)))
    assert summary.indicator == (1,) * 60
    assert summary.retransmissions == 20
    assert summary.attack_success
    retrans = [r for r in trace.records if r.kind == "Retransmission"]
    assert all(10.0 <= r.t < 30.0 for r in retrans)


def test_fra_retransmission_spacing():
    trace, _ = run_scenario(scenario(ForcedRetransmission(v_attack_h=5.0), duration=12.0))
    sent = next(r for r in trace.records if r.kind == "FrameSent" and r.t >= 10.0)
    retry = next(r for r in trace.records if r.kind == "Retransmission")
    spacing = retry.t - sent.t
    assert abs(spacing - 132e-6) <= 0.1 * 132e-6


def test_pulse_blocks_window_without_irs():
    _, summary = run_scenario(scenario(PulseAttack(line="canl", period=100e-6, duty=0.5)))
    expected = tuple(0 if 10 <= k < 30 else 1 for k in range(60))
    assert summary.indicator == expected


def test_pulse_with_fuse_keeps_all_slots():
    _, summary = run_scenario(
        scenario(PulseAttack(line="canl", period=100e-6, duty=0.5), IrsConfig(device="fuse"))
    )
    assert summary.indicator == (1,) * 60


def test_active_overcurrent_damages_within_damage_time():
    trace, summary = run_scenario(scenario(ActiveOvercurrent(), duration=12.0))
    assert summary.damaged
    assert summary.damage_time == pytest.approx(10.0 + 1e-6, abs=1e-9)
    assert any(r.kind == "Damage" for r in trace.records)


def test_active_overcurrent_fuse_prevents_damage():
    _, summary = run_scenario(scenario(ActiveOvercurrent(), IrsConfig(device="fuse"), duration=12.0))
    assert not summary.damaged
    assert set(summary.device_trips) == {"ph", "pl"}


def test_active_overcurrent_resettable_fuse_still_damages():
    _, summary = run_scenario(
        scenario(ActiveOvercurrent(), IrsConfig(device="resettable_fuse"), duration=12.0)
    )
    assert summary.damaged


def test_passive_overcurrent_damages_but_traffic_passes():
    _, summary = run_scenario(scenario(PassiveOvercurrent(), duration=12.0))
    assert summary.damaged
    assert summary.indicator == (1,) * 12


def test_breaker_behaves_like_a_fuse_in_one_run():
    _, summary = run_scenario(scenario(DoS(v_attack_l=5.0), IrsConfig(device="breaker")))
    assert summary.indicator == (1,) * 60
    assert "pl" in summary.device_trips


def test_damage_boundary_is_strict():
    d = EcuDamage(i_max=0.020)
    d = damage_step(d, 0.020, 1.0)
    assert not d.damaged
    d = damage_step(d, 0.0201, 2e-6)
    assert d.damaged


def test_damage_step_accumulates_and_resets():
    d = EcuDamage()
    d = damage_step(d, 0.0583, 0.5e-6)
    assert d.over_timer == pytest.approx(0.5e-6)
    d = damage_step(d, 0.039, 1.0)
    assert d.over_timer == 0.0
    d = damage_step(d, 0.0583, 1e-6)
    assert d.damaged


def test_attack_currents_visible_to_a_ten_milliamp_fuse():
    attacks = [
        PassiveOvercurrent(),
        ActiveOvercurrent(),
        DoS(v_attack_l=5.0),
        ForcedRetransmission(v_attack_h=5.0),
        PulseAttack(line="canl", period=100e-6),
    ]
    for attack in attacks:
        _, summary = run_scenario(scenario(attack, IrsConfig(device="fuse"), duration=12.0))
        assert summary.device_trips, f"{type(attack).__name__} left the fuse cold"


def test_determinism_identical_traces():
    a, _ = run_scenario(scenario(DoS(v_attack_l=5.0), IrsConfig(device="fuse"), duration=15.0))
    b, _ = run_scenario(scenario(DoS(v_attack_l=5.0), IrsConfig(device="fuse"), duration=15.0))
    assert a.records == b.records


def test_trace_timestamps_non_decreasing():
    trace, _ = run_scenario(scenario(ForcedRetransmission(v_attack_h=5.0), duration=15.0))
    stamps = [r.t for r in trace.records]
    assert stamps == sorted(stamps)


def test_conservation_received_plus_undelivered():
    _, summary = run_scenario(scenario(DoS(v_attack_l=5.0), duration=25.0))
    undelivered = summary.messages_sent - summary.messages_received
    assert undelivered == sum(1 for v in summary.indicator if v == 0)
    assert summary.messages_received <= summary.messages_sent


def test_attack_window_locality():
    base, _ = run_scenario(scenario(duration=20.0))
    attacked, _ = run_scenario(scenario(DoS(v_attack_l=5.0), duration=20.0))
    cut = 10.0
    base_prefix = [r for r in base.records if r.t < cut]
    attacked_prefix = [r for r in attacked.records if r.t < cut]
    assert base_prefix == attacked_prefix


def test_isolation_soundness_after_both_pins_open():
    attacked, _ = run_scenario(
        scenario(ActiveOvercurrent(), IrsConfig(device="fuse"), duration=20.0)
    )
    base, _ = run_scenario(scenario(duration=20.0))
    keep = ("FrameSent", "FrameReceived", "ErrorFrame", "Retransmission")
    cut = 10.1
    a = [r for r in attacked.records if r.kind in keep and r.t > cut]
    b = [r for r in base.records if r.kind in keep and r.t > cut]
    assert a == b


def test_indicator_helper_slices_by_time():
    trace, _ = run_scenario(scenario(duration=5.0))
    flags = message_indicator(trace, period=1.0, duration=5.0, receiver="B")
    assert flags == [1, 1, 1, 1, 1]
    assert message_indicator(trace, period=1.0, duration=5.0, receiver="nobody") == [0] * 5


def test_thermostat_coil_drive_isolates_and_recovers():
    cfg = scenario(
        DoS(v_attack_l=5.0, t_start=10.0, t_end=30.0),
        IrsConfig(device="thermostat", coil_drive=1.0),
        duration=40.0,
    )
    trace, summary = run_scenario(cfg)
    opens = [r for r in trace.records if r.kind == "ThermostatOpen"]
    closes = [r for r in trace.records if r.kind == "ThermostatClosed"]
    assert opens and opens[0].t < 15.0
    assert closes and closes[0].t < opens[0].t + 30.0
    # isolation restores delivery for the rest of the window
    assert all(summary.indicator[k] == 1 for k in range(12, 30))


def test_pulse_threshold_invariant_under_phase_offset():
    for phase in (0.0, 0.25, 0.5, 0.9):
        below = scenario(
            PulseAttack(line="canl", period=670e-9, phase=phase, t_start=1.0, t_end=3.0),
            duration=4.0,
        )
        above = scenario(
            PulseAttack(line="canl", period=680e-9, phase=phase, t_start=1.0, t_end=3.0),
            duration=4.0,
        )
        _, s_below = run_scenario(below)
        _, s_above = run_scenario(above)
        assert not s_below.attack_success, f"phase {phase} blocked below threshold"
        assert s_above.attack_success, f"phase {phase} failed at threshold"


def test_trace_kinds_stay_in_schema():
    from canvolt.engine import TRACE_KINDS

    trace, _ = run_scenario(
        scenario(DoS(v_attack_l=5.0), IrsConfig(device="thermostat", coil_drive=1.0), duration=20.0)
    )
    assert {r.kind for r in trace.records} <= set(TRACE_KINDS)


def test_two_senders_lowest_id_first():
    cfg = ScenarioConfig(
        duration=3.0,
        ecus=(
            EcuSpec("A", "vids-host"),
            EcuSpec("B", "logger"),
            EcuSpec("C", "sender", period=1.0, frame=Frame(id=0x010, data=b"\x10")),
            EcuSpec("D", "sender", period=1.0, frame=Frame(id=0x001, data=b"\x01")),
        ),
    )
    trace, summary = run_scenario(cfg)
    assert summary.messages_received == 6
    ids = [int(r.value) for r in trace.records if r.kind == "FrameReceived"]
    assert ids == [1, 16, 1, 16, 1, 16]


def test_sweep_values_grid():
    s = SweepSpec(path="attack.v_attack_l", start=0.1, stop=0.5, step=0.1)
    assert s.values() == [0.1, 0.2, 0.3, 0.4, 0.5]


def test_set_sweep_value_replaces_attack_field():
    cfg = scenario(DoS(v_attack_l=5.0))
    out = set_sweep_value(cfg, "attack.v_attack_l", 1.0)
    assert out.attack.v_attack_l == 1.0
    with pytest.raises(ConfigError):
        set_sweep_value(cfg, "attack.nope", 1.0)
    with pytest.raises(ConfigError):
        set_sweep_value(scenario(), "attack.v_attack_l", 1.0)


def test_run_sweep_requires_sweep_section():
    with pytest.raises(ConfigError):
        run_sweep(scenario(DoS()))


def test_validation_rejects_bad_configs():
    with pytest.raises(ConfigError):
        validate_config(ScenarioConfig(ecus=()))
    with pytest.raises(ConfigError):
        validate_config(
            ScenarioConfig(ecus=(EcuSpec("A", "vids-host"), EcuSpec("B", "vids-host")))
        )
    with pytest.raises(ConfigError):
        validate_config(
            ScenarioConfig(
                ecus=(EcuSpec("A", "vids-host"), EcuSpec("C", "sender", period=1e-5, frame=FRAME))
            )
        )
    with pytest.raises(ConfigError):
        validate_config(
            ScenarioConfig(
                ecus=(EcuSpec("A", "vids-host"), EcuSpec("C", "sender", period=1.0, frame=FRAME)),
                attack=DoS(node="C"),
            )
        )
    with pytest.raises(ConfigError):
        validate_config(
            ScenarioConfig(
                ecus=(EcuSpec("A", "vids-host"), EcuSpec("C", "sender", period=1.0, frame=FRAME)),
                attack=PulseAttack(period=1.0),
            )
        )
