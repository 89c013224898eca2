"""Synthetic test runs of the fan rig.

The speed follows a staircase: plateaus at 0, step, 2*step, ... rpm_max,
each held for ``plateau_s`` seconds and joined by linear ramps of
``ramp_s`` seconds. Every gyro channel sees

    imbalance_amp * rpm * (static_c + sin(2 pi f t + phi_c))
  + blade_pass_amp * rpm * sin(2 pi 12 f t + phi'_c)
  + N(0, (noise_floor + noise_gain * rpm)^2)

with f = rpm / 60. ``static_c = static_coupling * d_c`` is the part of the
imbalance response that does not oscillate (static load on the bearing
seen by the mounting), d_c in [-1, 1] a per-channel direction. The
tachometer reads the setpoint plus N(0, (rpm_noise_floor +
rpm_noise_gain * rpm)^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from fanwatch.core import (
    GYRO_CHANNELS,
    RPM,
    Channel,
    ConfigError,
    DataError,
    Impeller,
    RawRecording,
)

BLADES = 12
DEFAULT_SAMPLE_BUDGET = 2_000_000

# spawn keys of the per-run substreams
_RPM_STREAM = 0
_GEOMETRY_STREAM = 1
_GYRO_STREAM_BASE = 2


@dataclass(frozen=True)
class ScheduleConfig:
    rpm_step: float = 370.0
    rpm_max: float = 2960.0
    plateau_s: float = 10.0
    ramp_s: float = 2.0
    gyro_rate_hz: float = 1000.0
    rpm_rate_hz: float = 100.0

    def __post_init__(self):
        if not (self.rpm_step > 0 and self.rpm_max > 0):
            raise ConfigError("rpm_step and rpm_max must be positive")
        k = self.rpm_max / self.rpm_step
        if abs(k - round(k)) > 1e-9 or round(k) < 1:
            raise ConfigError("rpm_max must be an integer multiple of rpm_step")
        if not (self.plateau_s > 0 and self.ramp_s > 0):
            raise ConfigError("plateau_s and ramp_s must be positive")
        if not self.gyro_rate_hz > self.rpm_rate_hz > 0:
            raise ConfigError("need gyro_rate_hz > rpm_rate_hz > 0")

    @property
    def n_steps(self) -> int:
        """Number of plateaus above zero rpm."""
        return int(round(self.rpm_max / self.rpm_step))

    @property
    def period_s(self) -> float:
        return self.plateau_s + self.ramp_s

    @property
    def duration_s(self) -> float:
        return (self.n_steps + 1) * self.plateau_s + self.n_steps * self.ramp_s

    def plateau_rpm(self, ordinal: int) -> float:
        return ordinal * self.rpm_step

    def change_times(self) -> np.ndarray:
        """Start times of the ramps (setpoint changes)."""
        return np.arange(self.n_steps) * self.period_s + self.plateau_s


def rpm_setpoint(t_s, schedule: ScheduleConfig):
    """Noiseless speed command at time ``t_s`` (scalar or array)."""
    t = np.asarray(t_s, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t_s must be non-negative")
    period = schedule.period_s
    k = np.floor(t / period)
    local = t - k * period
    on_ramp = local >= schedule.plateau_s
    frac = np.where(on_ramp, (local - schedule.plateau_s) / schedule.ramp_s, 0.0)
    value = (k + frac) * schedule.rpm_step
    value = np.where(t >= schedule.duration_s, schedule.rpm_max, np.minimum(value, schedule.rpm_max))
    return float(value) if value.ndim == 0 else value


def plateau_index(t_s, schedule: ScheduleConfig) -> np.ndarray:
    """Plateau ordinal per timestamp; 0 on ramps and on the idle plateau.

    Ramp rows are those in ``[change, change + ramp_s)``. Rows past the end
    of the schedule belong to the last plateau.
    """
    t = np.asarray(t_s, dtype=np.float64)
    period = schedule.period_s
    k = np.floor(t / period).astype(np.int64)
    local = t - k * period
    idx = np.where(local >= schedule.plateau_s, 0, k)
    idx = np.where(t >= schedule.duration_s - schedule.plateau_s, schedule.n_steps, idx)
    return idx.astype(np.int64)


@dataclass(frozen=True)
class ImpellerProfile:
    imbalance_amp: float = 1.0e-3
    blade_pass_amp: float = 4.0e-4
    static_coupling: float = 3.0
    noise_floor: float = 5.0
    noise_gain: float = 1.0e-3
    rpm_noise_floor: float = 0.5
    rpm_noise_gain: float = 2.0e-3
    # per-channel phases; drawn from the run seed when None
    harmonic_phase: tuple[float, ...] | None = None
    blade_phase: tuple[float, ...] | None = None
    static_direction: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("imbalance_amp", "blade_pass_amp", "static_coupling", "noise_floor",
                     "noise_gain", "rpm_noise_floor", "rpm_noise_gain"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"{name} must be a finite non-negative number")
        for name in ("harmonic_phase", "blade_phase", "static_direction"):
            value = getattr(self, name)
            if value is not None:
                if len(value) != len(GYRO_CHANNELS):
                    raise ConfigError(f"{name} needs {len(GYRO_CHANNELS)} entries")
                object.__setattr__(self, name, tuple(float(v) for v in value))

    def damaged(self, scale: float = 3.0) -> ImpellerProfile:
        """Worn impeller: both harmonic amplitudes scaled by ``scale``."""
        if not scale >= 0:
            raise ConfigError("damage scale must be non-negative")
        return replace(self, imbalance_amp=self.imbalance_amp * scale,
                       blade_pass_amp=self.blade_pass_amp * scale)


def _substream(seed: int, key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))


def channel_geometry(profile: ImpellerProfile, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(harmonic phases, blade-pass phases, static directions), one per channel.

    Entries missing from the profile come from the run seed, so a healthy and a
    damaged run with the same seed share their geometry.
    """
    rng = _substream(seed, _GEOMETRY_STREAM)
    n = len(GYRO_CHANNELS)
    drawn = (rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n), rng.uniform(-1, 1, n))
    given = (profile.harmonic_phase, profile.blade_phase, profile.static_direction)
    return tuple(d if g is None else np.asarray(g, dtype=np.float64) for d, g in zip(drawn, given))


def generate_run(
    schedule: ScheduleConfig,
    profile: ImpellerProfile,
    seed: int,
    impeller: Impeller | str = Impeller.HEALTHY,
    sample_budget: int = DEFAULT_SAMPLE_BUDGET,
) -> RawRecording:
    """Deterministic synthetic recording for one impeller."""
    if seed < 0:
        raise ConfigError("seed must be unsigned")
    n_gyro = int(math.ceil(schedule.duration_s * schedule.gyro_rate_hz - 1e-9))
    n_rpm = int(math.ceil(schedule.duration_s * schedule.rpm_rate_hz - 1e-9))
    if n_gyro > sample_budget:
        raise DataError(
            f"schedule needs {n_gyro} samples per channel, over the budget of {sample_budget}"
        )

    t_rpm = np.arange(n_rpm) / schedule.rpm_rate_hz
    sp_rpm = rpm_setpoint(t_rpm, schedule)
    rpm_sd = profile.rpm_noise_floor + profile.rpm_noise_gain * sp_rpm
    rpm = sp_rpm + rpm_sd * _substream(seed, _RPM_STREAM).standard_normal(n_rpm)

    t = np.arange(n_gyro) / schedule.gyro_rate_hz
    sp = rpm_setpoint(t, schedule)
    phase, blade_phase, direction = channel_geometry(profile, seed)
    rot = 2 * np.pi * (sp / 60.0) * t
    noise_sd = profile.noise_floor + profile.noise_gain * sp
    channels = [Channel(RPM, schedule.rpm_rate_hz, rpm)]
    for c, name in enumerate(GYRO_CHANNELS):
        signal = profile.imbalance_amp * sp * (profile.static_coupling * direction[c]
                                               + np.sin(rot + phase[c]))
        signal += profile.blade_pass_amp * sp * np.sin(BLADES * rot + blade_phase[c])
        noise = _substream(seed, _GYRO_STREAM_BASE + c).standard_normal(n_gyro)
        channels.append(Channel(name, schedule.gyro_rate_hz, signal + noise_sd * noise))
    return RawRecording(tuple(channels), schedule, Impeller(impeller), seed)
