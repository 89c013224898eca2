import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from fanwatch.core import GYRO_CHANNELS, RPM, ConfigError, DataError
from fanwatch.synthgen import (
    ImpellerProfile,
    ScheduleConfig,
    generate_run,
    plateau_index,
    rpm_setpoint,
)

from conftest import SMALL

DESK = ScheduleConfig()
QUIET = ImpellerProfile(imbalance_amp=0, blade_pass_amp=0, static_coupling=0, noise_floor=0,
                        noise_gain=0, rpm_noise_floor=0, rpm_noise_gain=0)


def test_schedule_defaults():
    assert DESK.n_steps == 8
    assert DESK.duration_s == 106.0
    np.testing.assert_allclose(DESK.change_times(), 10 + 12 * np.arange(8))


@pytest.mark.parametrize("kwargs", [
    dict(rpm_max=3000.0), dict(gyro_rate_hz=100.0), dict(plateau_s=0.0), dict(rpm_step=-1.0),
])
def test_schedule_rejects(kwargs):
    with pytest.raises(ConfigError):
        ScheduleConfig(**kwargs)


def test_setpoint_examples():
    assert rpm_setpoint(5.0, DESK) == 0.0
    # middle of plateau 4 starts at 4 * 12 = 48 s
    assert rpm_setpoint(53.0, DESK) == 1480.0
    # ramp 7 -> 8 runs over [94, 96)
    assert rpm_setpoint(95.0, DESK) == pytest.approx(2775.0)
    assert rpm_setpoint(500.0, DESK) == 2960.0
    with pytest.raises(ValueError):
        rpm_setpoint(-1.0, DESK)


@given(st.floats(0, 120, allow_nan=False))
def test_setpoint_bounded_and_monotone(t):
    v = rpm_setpoint(t, DESK)
    assert 0 <= v <= 2960
    assert rpm_setpoint(t + 0.01, DESK) >= v


def test_plateau_index_convention():
    t = np.array([0.0, 9.999, 10.0, 11.999, 12.0, 21.999, 22.0, 94.0, 96.0, 105.999, 200.0])
    assert plateau_index(t, DESK).tolist() == [0, 0, 0, 0, 1, 1, 0, 0, 8, 8, 8]


def test_zero_profile_gives_clean_staircase():
    rec = generate_run(SMALL, QUIET, seed=3)
    for ch in rec.gyro_channels:
        assert not ch.samples.any()
    np.testing.assert_array_equal(rec.rpm.samples, rpm_setpoint(rec.rpm.timestamps(), SMALL))


def test_shape_and_rates(small_run):
    assert [c.name for c in small_run.gyro_channels] == list(GYRO_CHANNELS)
    assert small_run.rpm.rate_hz == 100.0
    assert {len(c) for c in small_run.gyro_channels} == {int(SMALL.duration_s * 1000)}
    assert len(small_run.rpm) == int(SMALL.duration_s * 100)


def test_determinism(small_run):
    again = generate_run(SMALL, ImpellerProfile(), seed=5)
    for a, b in zip(small_run.channels, again.channels):
        assert a.name == b.name
        assert a.samples.tobytes() == b.samples.tobytes()
    other = generate_run(SMALL, ImpellerProfile(), seed=6)
    assert other.channel("g1_acc_x").samples.tobytes() != small_run.channel("g1_acc_x").samples.tobytes()


def test_sample_budget():
    with pytest.raises(DataError):
        generate_run(ScheduleConfig(plateau_s=900.0), ImpellerProfile(), seed=0)


def test_profile_validation():
    with pytest.raises(ConfigError):
        ImpellerProfile(noise_floor=-1.0)
    with pytest.raises(ConfigError):
        ImpellerProfile(harmonic_phase=(0.0,) * 3)
    dmg = ImpellerProfile().damaged(3.0)
    assert dmg.imbalance_amp == pytest.approx(3e-3)
    assert dmg.noise_floor == ImpellerProfile().noise_floor


def _plateau_std(rec, schedule):
    """Independent oracle: slice each plateau by time and take the std of every channel."""
    out = {}
    for k in range(1, schedule.n_steps + 1):
        start = k * (schedule.plateau_s + schedule.ramp_s)
        stop = start + schedule.plateau_s
        rows = []
        for ch in rec.gyro_channels:
            t = ch.timestamps()
            x = ch.samples[(t >= start) & (t < stop)].tolist()
            m = sum(x) / len(x)
            rows.append((sum((v - m) ** 2 for v in x) / (len(x) - 1)) ** 0.5)
        out[k] = np.array(rows)
    return out


def test_damaged_plateaus_vary_more(small_run, small_damaged_run):
    h = _plateau_std(small_run, SMALL)
    d = _plateau_std(small_damaged_run, SMALL)
    for k in h:
        assert np.all(d[k] > h[k]), k


def test_damaged_shares_rpm(small_run, small_damaged_run):
    assert small_run.rpm.samples.tobytes() == small_damaged_run.rpm.samples.tobytes()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rpm_noise_grows_with_speed(seed):
    rec = generate_run(SMALL, ImpellerProfile(), seed=seed)
    t = rec.rpm.timestamps()
    resid = rec.rpm.samples - rpm_setpoint(t, SMALL)
    idx = plateau_index(t, SMALL)
    var = [np.var(resid[idx == k]) for k in range(1, 9)]
    assert spearmanr(range(1, 9), var).statistic > 0


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.sampled_from([50.0, 100.0, 250.0]))
def test_channel_invariants_any_config(steps, rpm_rate):
    sched = ScheduleConfig(rpm_max=370.0 * steps, plateau_s=0.3, ramp_s=0.1, rpm_rate_hz=rpm_rate)
    rec = generate_run(sched, ImpellerProfile(), seed=steps)
    assert sum(c.name == RPM for c in rec.channels) == 1
    assert len({len(c) for c in rec.gyro_channels}) == 1
    assert rec.rpm.rate_hz < rec.gyro_channels[0].rate_hz
