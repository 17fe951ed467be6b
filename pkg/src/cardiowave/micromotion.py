"""Per-voxel phase extraction and micro-motion amplification.

Phase is the unwrapped argument of the beamformed slow-time signal; its
second derivative, taken with a smoothing low-noise differentiator, keeps
fast cardiac motion while suppressing slow large-amplitude breathing and
high-frequency sensor noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamform import BeamformedVoxelSeries

# Smoothing second-derivative stencil over offsets -3..3; divide by 16*h^2.
DIFF2_WEIGHTS = np.array([1.0, 2.0, -1.0, -4.0, -1.0, 2.0, 1.0])
MAX_UNRELIABLE_FRACTION = 0.10


class UnreliablePhaseError(ValueError):
    """Raised when more than 10% of a voxel's frames have zero magnitude."""


@dataclass
class MotionSignal:
    """One voxel's motion measurement: location, phase, amplified series, power."""

    location: np.ndarray        # (3,) m
    phase: np.ndarray           # rad, unwrapped, at frame rate
    acceleration: np.ndarray    # amplified series, same length as phase
    power: float                # mean reflected power |S|^2
    frame_rate: float

    def __post_init__(self) -> None:
        self.location = np.asarray(self.location, dtype=np.float64).reshape(3)
        self.phase = np.asarray(self.phase, dtype=np.float64)
        self.acceleration = np.asarray(self.acceleration, dtype=np.float64)
        if self.acceleration.shape != self.phase.shape:
            raise ValueError("acceleration length must equal phase length")


def unwrap_phase(raw: np.ndarray) -> np.ndarray:
    """Unwrap by adding +-2*pi whenever a successive difference exceeds pi.

    The first sample is normalized into [-pi, pi).
    """
    raw = np.asarray(raw, dtype=np.float64)
    first = (raw[0] + np.pi) % (2 * np.pi) - np.pi
    if raw.size == 1:
        return np.array([first])
    d = np.diff(raw)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return np.concatenate([[first], first + np.cumsum(d)])


def extract_phase(series: BeamformedVoxelSeries, voxel: int) -> np.ndarray:
    """Unwrapped phase of one voxel's slow-time signal.

    Zero-magnitude frames are unreliable: they are dropped from unwrapping
    and linearly interpolated afterwards.  More than 10% unreliable frames
    rejects the voxel.
    """
    s = series.series[voxel]
    mag = np.abs(s)
    good = mag > 0.0
    n = s.shape[0]
    bad = n - int(good.sum())
    if bad > MAX_UNRELIABLE_FRACTION * n or good.sum() < 2:
        raise UnreliablePhaseError(
            f"voxel {voxel}: {bad}/{n} zero-magnitude frames"
        )
    ang = np.angle(s[good])
    unwrapped_good = unwrap_phase(ang)
    if bad == 0:
        return unwrapped_good
    idx = np.arange(n)
    return np.interp(idx, idx[good], unwrapped_good)


def diff2_coefficients(h: float) -> np.ndarray:
    """Stencil weights (offsets -3..3) including the 1/(16 h^2) scale."""
    return DIFF2_WEIGHTS / (16.0 * h * h)


def amplify_micromotion(phase: np.ndarray, h: float) -> np.ndarray:
    """Smoothed second derivative of the phase series.

    s''_0 = ((s_-3 + s_3) + 2(s_-2 + s_2) - (s_-1 + s_1) - 4 s_0) / (16 h^2)
    at interior samples; the three samples at each edge replicate the
    nearest interior value so the output length equals the input length.
    """
    phase = np.asarray(phase, dtype=np.float64)
    n = phase.shape[0]
    if n < 7:
        raise ValueError(f"series too short for the 7-tap stencil: {n}")
    w = diff2_coefficients(h)
    core = (
        w[0] * (phase[:-6] + phase[6:])
        + w[1] * (phase[1:-5] + phase[5:-1])
        + w[2] * (phase[2:-4] + phase[4:-2])
        + w[3] * phase[3:-3]
    )
    out = np.empty(n, dtype=np.float64)
    out[3:-3] = core
    out[:3] = core[0]
    out[-3:] = core[-1]
    return out


def extract_signals(
    series: BeamformedVoxelSeries,
    h: float | None = None,
) -> list[MotionSignal]:
    """Phase + amplified series for every voxel that passes the phase check."""
    from .beamform import voxel_power

    if h is None:
        h = 1.0 / series.frame_rate
    powers = voxel_power(series)
    signals: list[MotionSignal] = []
    for v in range(series.series.shape[0]):
        try:
            phase = extract_phase(series, v)
        except UnreliablePhaseError:
            continue
        accel = amplify_micromotion(phase, h)
        signals.append(
            MotionSignal(
                location=series.locations[v],
                phase=phase,
                acceleration=accel,
                power=float(powers[v]),
                frame_rate=series.frame_rate,
            )
        )
    return signals
