import numpy as np
import pytest

from cardiowave.beamform import VoxelGrid, beamform
from cardiowave.ecg import synth_ecg
from cardiowave.micromotion import extract_signals
from cardiowave.sim import (
    BreathingParams,
    ChirpConfig,
    MotionProfile,
    PulseKernel,
    TorsoPhantom,
    ecg_to_surface_motion,
    render_frames,
)


def static_profile(n_scatterers: int, n_frames: int, frame_rate: float = 200.0):
    z = np.zeros((n_scatterers, n_frames))
    return MotionProfile(breathing=z, cardiac=z.copy(), frame_rate=frame_rate)


@pytest.fixture(scope="session")
def small_grid():
    return VoxelGrid(x_bounds=(-0.2, 0.2), y_bounds=(-0.2, 0.2),
                     z_bounds=(0.38, 0.55), counts=(5, 5, 5))


@pytest.fixture(scope="session")
def chirp():
    return ChirpConfig()


@pytest.fixture(scope="session")
def desk_scene(small_grid, chirp):
    """12 s single-scatterer cardiac scene shared by the slow-path tests."""
    ecg = synth_ecg(12.0, 60.0, seed=5, jitter_sd=0.0)
    center = small_grid.centers()[small_grid.flat_index(2, 2, 2)]
    phantom = TorsoPhantom(scatterers=center[None, :], reflectivity=[1.0],
                           heart_center=center)
    motion = ecg_to_surface_motion(
        ecg, phantom,
        breathing=BreathingParams(amplitude=5e-3, rate=0.25),
        kernel=PulseKernel(amplitude=0.4e-3),
        frame_rate=chirp.frame_rate,
    )
    cube = render_frames(motion, phantom, chirp, snr_db=20.0, seed=11)
    series = beamform(cube, small_grid)
    signals = extract_signals(series)
    return {
        "ecg": ecg, "phantom": phantom, "motion": motion, "cube": cube,
        "series": series, "signals": signals, "grid": small_grid,
    }
