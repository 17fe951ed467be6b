import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardiowave.beamform import BeamformedVoxelSeries, VoxelGrid
from cardiowave.ecg import synth_ecg
from cardiowave.micromotion import (
    UnreliablePhaseError,
    amplify_micromotion,
    diff2_coefficients,
    extract_phase,
    extract_signals,
    unwrap_phase,
)
from cardiowave.sim import BreathingParams, PulseKernel, TorsoPhantom, ecg_to_surface_motion


def _series_of(values: np.ndarray) -> BeamformedVoxelSeries:
    grid = VoxelGrid(counts=(1, 1, 1))
    return BeamformedVoxelSeries(series=np.atleast_2d(values), grid=grid, frame_rate=200.0)


def test_constant_series_constant_phase():
    s = np.full(50, 0.3 - 0.8j)
    phase = extract_phase(_series_of(s), 0)
    assert np.allclose(phase, phase[0])
    assert -np.pi <= phase[0] < np.pi


def test_unwrap_recovers_ramp():
    truth = np.linspace(0.0, 4 * np.pi, 400)
    recovered = extract_phase(_series_of(np.exp(1j * truth)), 0)
    assert np.allclose(recovered, truth, atol=1e-9)
    assert np.all(np.abs(np.diff(recovered)) < np.pi)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=2, max_size=60))
def test_unwrap_continuity_property(steps):
    # any series with per-step increments below pi unwraps to itself (up to
    # the first-sample normalization)
    truth = np.cumsum(np.asarray(steps))
    recovered = unwrap_phase(np.angle(np.exp(1j * truth)))
    assert np.allclose(np.diff(recovered), np.diff(truth), atol=1e-9)


def test_zero_magnitude_interpolated():
    truth = np.linspace(0.0, 2.0, 100)
    s = np.exp(1j * truth)
    s[40:43] = 0.0      # 3% unreliable: interpolate
    phase = extract_phase(_series_of(s), 0)
    assert np.allclose(phase, truth, atol=1e-6)


def test_too_many_zero_frames_rejected():
    s = np.exp(1j * np.linspace(0, 1, 100))
    s[:20] = 0.0        # 20% unreliable
    with pytest.raises(UnreliablePhaseError):
        extract_phase(_series_of(s), 0)


def test_diff2_quadratic_exact():
    h = 0.005
    t = np.arange(500) * h
    for a, b, c in [(1.0, 0.0, 0.0), (2.5, -3.0, 7.0), (-0.3, 11.0, -2.0)]:
        s = a * t * t + b * t + c
        out = amplify_micromotion(s, h)
        assert np.max(np.abs(out[3:-3] - 2 * a)) < 1e-9 * max(1.0, abs(2 * a))


def test_diff2_annihilates_constant_and_linear():
    h = 0.005
    t = np.arange(200) * h
    assert np.allclose(amplify_micromotion(np.full(200, 3.7), h), 0.0, atol=1e-12)
    assert np.allclose(amplify_micromotion(5.0 * t, h), 0.0, atol=1e-9)


def test_diff2_edges_replicate_and_length():
    h = 0.005
    s = np.sin(np.arange(64) * 0.1)
    out = amplify_micromotion(s, h)
    assert out.shape == s.shape
    assert np.all(out[:3] == out[3])
    assert np.all(out[-3:] == out[-4])


def test_diff2_too_short():
    with pytest.raises(ValueError):
        amplify_micromotion(np.zeros(6), 0.005)


def test_filter_moments_and_nyquist_response():
    w = diff2_coefficients(1.0)
    offsets = np.arange(-3, 4)
    assert np.sum(w) == pytest.approx(0.0, abs=1e-15)
    assert np.sum(offsets * w) == pytest.approx(0.0, abs=1e-15)
    # |H(pi)| finite and below the ideal differentiator's omega^2 at Nyquist
    h_nyq = np.sum(w * np.exp(-1j * np.pi * offsets))
    assert np.isfinite(h_nyq)
    assert np.abs(h_nyq) < np.pi ** 2
    # second moment gives gain 2 for t^2/2 curvature
    assert np.sum(offsets ** 2 * w) == pytest.approx(2.0, abs=1e-12)


def test_breathing_suppression_band_ordering():
    # accel spectrum: cardiac band (0.8-2 Hz) dominates the breathing band
    # (0.2-0.34 Hz), reversing the phase-domain ordering
    ecg = synth_ecg(60.0, 60.0, seed=3, jitter_sd=0.0)
    phantom = TorsoPhantom(scatterers=[[0.0, 0.0, 0.45]], reflectivity=[1.0],
                           heart_center=[0.0, 0.0, 0.45])
    prof = ecg_to_surface_motion(
        ecg, phantom,
        breathing=BreathingParams(amplitude=5e-3, rate=0.25),
        kernel=PulseKernel(amplitude=0.4e-3),
    )
    lam = 0.0038934
    phase = 4 * np.pi * prof.total[0] / lam
    accel = amplify_micromotion(phase, 1 / 200.0)

    def band(x, lo, hi):
        x = x - x.mean()
        spec = np.abs(np.fft.rfft(x)) ** 2
        f = np.fft.rfftfreq(x.size, 1 / 200.0)
        return spec[(f >= lo) & (f <= hi)].sum()

    assert band(phase, 0.2, 0.34) > band(phase, 0.8, 2.0)      # breathing rules phase
    assert band(accel, 0.8, 2.0) > band(accel, 0.2, 0.34)      # reversed after diff2


def test_simulator_phase_tracks_displacement(chirp, small_grid, desk_scene):
    # phase at the scatterer voxel correlates > 0.99 with imposed displacement
    from cardiowave.micromotion import extract_phase as ep
    scene = desk_scene
    vi = small_grid.flat_index(2, 2, 2)
    phase = ep(scene["series"], vi)
    disp = scene["motion"].total[0]
    rho = np.corrcoef(phase, disp)[0, 1]
    assert rho > 0.99


def test_extract_signals_shapes(desk_scene):
    signals = desk_scene["signals"]
    assert len(signals) == desk_scene["grid"].n_voxels
    for sig in signals[:5]:
        assert sig.acceleration.shape == sig.phase.shape
        assert sig.power > 0
