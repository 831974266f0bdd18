import io
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wsncloud import power
from wsncloud.power import BatteryState, DutyCycleSpec, Mode, PowerProfile

TABLE = PowerProfile()


def hand_average_current(payload, period, t_onoff="0.010", t_listen="0.050"):
    """Same model worked in exact rationals, term by term."""
    t_onoff, t_listen = Fraction(t_onoff), Fraction(t_listen)
    t_trans = Fraction((payload + 26) * 8, 250_000)
    sleep = Fraction(period) - t_onoff - t_listen - t_trans
    charge = (Fraction("8.1") * t_onoff + 40 * t_listen + 38 * t_trans + Fraction("0.6") * sleep)
    return charge / period


def test_table_defaults():
    assert (TABLE.i_onoff, TABLE.i_listen, TABLE.i_trans, TABLE.i_sleep) == (8.1, 40.0, 38.0, 0.6)
    assert (TABLE.capacity, TABLE.nominal_voltage) == (2000.0, 9.0)
    assert TABLE.sleep_bound_hours == pytest.approx(3333.3333, abs=1e-4)


def test_transmit_time():
    assert power.transmit_time(DutyCycleSpec(60, 2)) == pytest.approx(28 * 8 / 250_000, rel=1e-15)
    assert power.transmit_time(DutyCycleSpec(60, 102)) == pytest.approx(0.004096, rel=1e-15)


@pytest.mark.parametrize("payload, period", [(2, 60), (2, 1800), (102, 60), (50, 3600), (102, 86400)])
def test_average_current_matches_rational_oracle(payload, period):
    got = power.average_current(TABLE, DutyCycleSpec(period, payload))
    assert got == pytest.approx(float(hand_average_current(payload, period)), rel=1e-12)


def test_lifetime_worked_example():
    # 2 bytes every 30 minutes: just under the sleep-only bound
    spec = DutyCycleSpec(1800, 2)
    expected = 2000 / hand_average_current(2, 1800)
    assert power.lifetime_hours(TABLE, spec) == pytest.approx(float(expected), rel=1e-12)
    assert power.lifetime_hours(TABLE, spec) == pytest.approx(3326.93, abs=0.01)


def test_active_time_must_fit_period():
    with pytest.raises(power.ModelError):
        power.average_current(TABLE, DutyCycleSpec(0.05, 2))


@pytest.mark.parametrize("payload", [1, 103])
def test_payload_bounds(payload):
    with pytest.raises(power.ModelError):
        DutyCycleSpec(60, payload)


def test_unknown_mode():
    with pytest.raises(power.ModelError):
        TABLE.current("hibernate")


def test_profile_validation():
    with pytest.raises(power.ModelError):
        PowerProfile(i_sleep=50.0)
    with pytest.raises(power.ModelError):
        PowerProfile(capacity=0)


periods = st.floats(1.0, 1e6)
payloads = st.integers(2, 102)


@given(payloads, periods)
def test_average_current_between_sleep_and_peak(payload, period):
    i = power.average_current(TABLE, DutyCycleSpec(period, payload))
    assert TABLE.i_sleep <= i <= max(TABLE.i_onoff, TABLE.i_listen, TABLE.i_trans)


@given(payloads, periods)
def test_lifetime_never_exceeds_sleep_bound(payload, period):
    assert power.lifetime_hours(TABLE, DutyCycleSpec(period, payload)) < TABLE.sleep_bound_hours


@given(st.integers(2, 101), periods)
def test_lifetime_decreases_with_payload(payload, period):
    a = power.lifetime_hours(TABLE, DutyCycleSpec(period, payload))
    b = power.lifetime_hours(TABLE, DutyCycleSpec(period, payload + 1))
    assert b < a


@given(payloads, st.floats(1.0, 1e5), st.floats(1.01, 10))
def test_lifetime_increases_with_period(payload, period, factor):
    a = power.lifetime_hours(TABLE, DutyCycleSpec(period, payload))
    b = power.lifetime_hours(TABLE, DutyCycleSpec(period * factor, payload))
    assert b > a


def test_sweep_csv_roundtrip_and_footer():
    rows = power.lifetime_sweep(TABLE, [2, 102], [60, 600, 1800, 3600])
    assert len(rows) == 8
    buf = io.StringIO()
    power.write_sweep_csv(rows, buf, TABLE)
    text = buf.getvalue()
    assert text.splitlines()[0] == "payload_bytes,update_period_s,avg_current_ma,lifetime_hours"
    assert "3333.33 h" in text
    back = power.read_sweep_csv(io.StringIO(text))
    assert [(r.payload_bytes, r.update_period_s) for r in back] == [(r.payload_bytes, r.update_period_s) for r in rows]
    for a, b in zip(rows, back):
        assert b.lifetime_hours == pytest.approx(a.lifetime_hours, rel=1e-6)


def test_gnuplot_blocks():
    rows = power.lifetime_sweep(TABLE, [2, 102], [60, 600])
    buf = io.StringIO()
    power.write_sweep_gnuplot(rows, buf)
    blocks = [b for b in buf.getvalue().split("\n\n\n") if b.strip()]
    assert len(blocks) == 2


# battery state


def test_battery_invariant():
    with pytest.raises(power.ModelError):
        BatteryState(0.0, Mode.SLEEP)
    with pytest.raises(power.ModelError):
        BatteryState(5.0, Mode.DEPLETED)
    assert BatteryState.with_charge(0).depleted
    assert BatteryState.full(TABLE).charge_remaining == 2000


def test_drain_floors_at_zero():
    state = power.drain(BatteryState.with_charge(0.001), TABLE, Mode.LISTEN, 3600)
    assert state.charge_remaining == 0 and state.depleted
    assert power.drain(state, TABLE, Mode.TRANSMIT, 10) == state


@given(st.lists(st.tuples(st.sampled_from([Mode.SLEEP, Mode.WAKE_TRANSITION, Mode.LISTEN, Mode.TRANSMIT]),
                          st.floats(0, 50)), max_size=40))
def test_drain_conserves_charge(steps):
    state = BatteryState.with_charge(1.0)
    spent = 0.0
    for mode, dt in steps:
        before = state.charge_remaining
        state = power.drain(state, TABLE, mode, dt)
        assert state.charge_remaining <= before
        spent += TABLE.current(mode) * dt / 3600
    assert state.charge_remaining == pytest.approx(max(0.0, 1.0 - spent), abs=1e-9)


def test_rail_voltage_endpoints():
    assert power.rail_voltage(BatteryState.full(TABLE), TABLE) == pytest.approx(3.3)
    assert power.rail_voltage(BatteryState.with_charge(0), TABLE) == pytest.approx(2.0)
    assert power.rail_voltage(BatteryState.with_charge(1000), TABLE) == pytest.approx(2.65)


def test_transmit_time_without_overhead():
    assert power.transmit_time(DutyCycleSpec(60, 2, frame_overhead_bytes=0)) == pytest.approx(0.000064, rel=1e-15)


def test_zero_active_time_gives_sleep_current():
    spec = DutyCycleSpec(60, 2, t_onoff=0, t_listen=0, frame_overhead_bytes=0, bitrate=1e30)
    assert power.average_current(TABLE, spec) == pytest.approx(TABLE.i_sleep, rel=1e-12)


def test_long_period_tends_to_sleep_current():
    assert power.average_current(TABLE, DutyCycleSpec(1e9, 102)) == pytest.approx(0.6, rel=1e-6)


def test_lifetime_linear_in_capacity():
    spec = DutyCycleSpec(600, 50)
    double = PowerProfile(capacity=4000.0)
    assert power.lifetime_hours(double, spec) == pytest.approx(2 * power.lifetime_hours(TABLE, spec), rel=1e-12)


def test_drain_examples():
    assert power.drain(BatteryState.full(TABLE), TABLE, Mode.LISTEN, 3600).charge_remaining == pytest.approx(1960)
    full = BatteryState.full(TABLE)
    assert power.drain(full, TABLE, Mode.TRANSMIT, 0) == full
    assert power.drain(BatteryState.with_charge(0.1), TABLE, Mode.TRANSMIT, 3600).depleted


@given(st.floats(0, 5000), st.floats(0, 5000))
def test_split_drain_equals_single_drain(t1, t2):
    start = BatteryState.full(TABLE)
    split = power.drain(power.drain(start, TABLE, Mode.SLEEP, t1), TABLE, Mode.SLEEP, t2)
    whole = power.drain(start, TABLE, Mode.SLEEP, t1 + t2)
    assert split.charge_remaining == pytest.approx(whole.charge_remaining, rel=1e-12)
