import numpy as np
import pytest

from cardiowave.beamform import VoxelGrid, beamform
from cardiowave.ecg import synth_ecg
from cardiowave.sim import (
    BreathingParams,
    ChirpConfig,
    MotionProfile,
    PulseKernel,
    TorsoPhantom,
    ecg_to_surface_motion,
    render_frames,
)

from conftest import static_profile


def test_chirp_invariants():
    cfg = ChirpConfig()
    assert cfg.n_samples / cfg.adc_rate <= cfg.ramp_end_time
    assert cfg.bandwidth == pytest.approx(3.328e9)
    assert cfg.n_channels == 12
    assert cfg.frame_rate == pytest.approx(200.0)
    with pytest.raises(ValueError):
        ChirpConfig(n_samples=512)   # sampling window would exceed the ramp


def test_phantom_validation():
    with pytest.raises(ValueError):
        TorsoPhantom(scatterers=np.zeros((0, 3)), reflectivity=[], heart_center=[0, 0, 0.45])
    with pytest.raises(ValueError):
        TorsoPhantom(scatterers=[[0, 0, 0.45]], reflectivity=[-1.0], heart_center=[0, 0, 0.45])


def test_motion_scatterer_at_heart_center_max_amplitude():
    ecg = synth_ecg(10.0, 60.0, seed=1, jitter_sd=0.0)
    phantom = TorsoPhantom(
        scatterers=[[0.0, 0.0, 0.45], [0.1, 0.0, 0.45], [0.2, 0.0, 0.45]],
        reflectivity=[1.0, 1.0, 1.0],
        heart_center=[0.0, 0.0, 0.45],
        conduction_speed=2.0,
        conduction_decay=5.0,
    )
    prof = ecg_to_surface_motion(
        ecg, phantom, breathing=BreathingParams(enabled=False),
        kernel=PulseKernel(amplitude=0.4e-3),
    )
    amps = np.abs(prof.cardiac).max(axis=1)
    assert amps[0] == amps.max()
    # amplitude ratio exp(-decay*d) between scatterers at d and 2d
    assert amps[1] / amps[0] == pytest.approx(np.exp(-5.0 * 0.1), rel=1e-6)
    assert amps[2] / amps[1] == pytest.approx(np.exp(-5.0 * 0.1), rel=1e-6)
    # delay difference d / speed: cross-correlation peak lag
    a, b = prof.cardiac[0], prof.cardiac[1]
    lags = np.arange(-100, 101)
    xc = [np.dot(a[100:-100], b[100 + k:len(b) - 100 + k]) for k in lags]
    best = lags[int(np.argmax(xc))]
    assert best == pytest.approx(0.1 / 2.0 * 200.0, abs=1)   # 10 frames


def test_motion_periodicity_autocorrelation():
    ecg = synth_ecg(30.0, 60.0, seed=4, jitter_sd=0.0)
    phantom = TorsoPhantom(scatterers=[[0.05, 0.0, 0.45]], reflectivity=[1.0],
                           heart_center=[0.0, 0.0, 0.45])
    prof = ecg_to_surface_motion(ecg, phantom, breathing=BreathingParams(enabled=False))
    x = prof.cardiac[0] - prof.cardiac[0].mean()
    ac = np.correlate(x, x, mode="full")[x.size - 1:]
    interior = ac[50:400]
    assert 50 + int(np.argmax(interior)) == 200   # 1 Hz at 200 frames/s


def test_motion_requires_beats():
    phantom = TorsoPhantom(scatterers=[[0, 0, 0.45]], reflectivity=[1.0],
                           heart_center=[0, 0, 0.45])
    from cardiowave.ecg import EcgTrace
    empty = EcgTrace(samples=np.zeros(400), beats=np.zeros((0, 5)))
    with pytest.raises(ValueError):
        ecg_to_surface_motion(empty, phantom)


def test_breathing_range_validation():
    with pytest.raises(ValueError):
        BreathingParams(amplitude=2e-3).validate()     # below 4 mm
    with pytest.raises(ValueError):
        BreathingParams(rate=0.5).validate()           # above 0.34 Hz
    BreathingParams(amplitude=12e-3, rate=0.34).validate()


def test_render_single_tone_spectrum(chirp):
    phantom = TorsoPhantom(scatterers=[[0.0, 0.0, 0.45]], reflectivity=[1.0],
                           heart_center=[0.0, 0.0, 0.45])
    cube = render_frames(static_profile(1, 2), phantom, chirp, snr_db=None)
    spec = np.abs(np.fft.fft(cube.data[0, 0]))
    peak = spec.max()
    assert peak > 5 * np.sort(spec)[-2]   # one dominant bin per channel


def test_render_half_wavelength_phase_wrap(chirp):
    lam = chirp.wavelength
    phantom = TorsoPhantom(scatterers=[[0.0, 0.0, 0.45]], reflectivity=[1.0],
                           heart_center=[0.0, 0.0, 0.45])
    disp = np.array([[0.0, lam / 2.0]])
    prof = MotionProfile(breathing=np.zeros_like(disp), cardiac=disp, frame_rate=200.0)
    cube = render_frames(prof, phantom, chirp, snr_db=None, dtype=np.complex128)
    # carrier phase advances by ~2*pi between the frames: same wrapped value.
    # The beat-frequency term vanishes at fast time 0 (mid window), so probe
    # the sample closest to it.
    mid = chirp.n_samples // 2
    ref = cube.data[0, :, mid]
    moved = cube.data[1, :, mid]
    dphi = np.angle(moved / ref)
    assert np.all(np.abs(dphi) < 0.05)


def test_render_determinism(chirp):
    phantom = TorsoPhantom(scatterers=[[0.0, 0.02, 0.45]], reflectivity=[1.3],
                           heart_center=[0.0, 0.0, 0.45])
    prof = static_profile(1, 6)
    a = render_frames(prof, phantom, chirp, snr_db=10.0, seed=42)
    b = render_frames(prof, phantom, chirp, snr_db=10.0, seed=42)
    assert np.array_equal(a.data, b.data)
    c = render_frames(prof, phantom, chirp, snr_db=10.0, seed=43)
    assert not np.array_equal(a.data, c.data)


def test_render_chunking_invariance(chirp):
    phantom = TorsoPhantom(scatterers=[[0.0, 0.02, 0.45]], reflectivity=[1.0],
                           heart_center=[0.0, 0.0, 0.45])
    prof = static_profile(1, 10)
    a = render_frames(prof, phantom, chirp, snr_db=15.0, seed=9, chunk_frames=3)
    b = render_frames(prof, phantom, chirp, snr_db=15.0, seed=9, chunk_frames=10)
    assert np.array_equal(a.data, b.data)


def test_render_energy_monotonicity(chirp):
    prof = static_profile(1, 2)
    base = TorsoPhantom(scatterers=[[0.0, 0.0, 0.45]], reflectivity=[1.0],
                        heart_center=[0.0, 0.0, 0.45])
    double = TorsoPhantom(scatterers=[[0.0, 0.0, 0.45]], reflectivity=[2.0],
                          heart_center=[0.0, 0.0, 0.45])
    a = render_frames(prof, base, chirp, snr_db=None, dtype=np.complex128)
    b = render_frames(prof, double, chirp, snr_db=None, dtype=np.complex128)
    assert np.allclose(b.data, 2.0 * a.data, rtol=1e-12)


def test_phase_displacement_linearity_monostatic():
    # single colocated TX/RX isolates the sensing model: the beamformed
    # phase step equals 2*pi*delta(round trip)/lambda to 1e-6 rad
    cfg = ChirpConfig(n_tx=1, n_rx=1)
    geometry = np.zeros((1, 2, 3))
    grid = VoxelGrid(x_bounds=(-0.1, 0.1), y_bounds=(-0.1, 0.1),
                     z_bounds=(0.4, 0.5), counts=(3, 3, 3))
    pos = grid.centers()[grid.flat_index(1, 1, 1)]
    phantom = TorsoPhantom(scatterers=pos[None, :], reflectivity=[1.0], heart_center=pos)
    d = 0.3e-3
    disp = np.array([[0.0, d, 2 * d]])
    prof = MotionProfile(breathing=np.zeros_like(disp), cardiac=disp, frame_rate=200.0)
    cube = render_frames(prof, phantom, cfg, snr_db=None, geometry=geometry,
                         dtype=np.complex128)
    series = beamform(cube, grid)
    vox = grid.flat_index(1, 1, 1)
    dphi = np.diff(np.unwrap(np.angle(series.series[vox])))
    expected = 2 * np.pi * 2 * d / cfg.wavelength
    assert np.all(np.abs(dphi - expected) < 1e-6)


def test_render_rejects_nonfinite_snr(chirp):
    phantom = TorsoPhantom(scatterers=[[0, 0, 0.45]], reflectivity=[1.0],
                           heart_center=[0, 0, 0.45])
    with pytest.raises(ValueError):
        render_frames(static_profile(1, 2), phantom, chirp, snr_db=np.nan)
    with pytest.raises(ValueError):
        render_frames(static_profile(1, 2), phantom, chirp, snr_db=np.inf)
