"""Synthetic FMCW scene: chirp timing, torso phantom, surface motion, raw IF cubes.

The torso is a set of point scatterers on a plane facing the radar.  Each
beat of the driving ECG launches a biphasic displacement pulse at the heart
center that propagates over the surface with a finite conduction speed and
exponential decay; a shared low-frequency quasi-sinusoid models breathing.
Frames are rendered with the standard point-scatterer IF model: one complex
tone per scatterer whose beat frequency and carrier phase are both set by
the exact round-trip TX-scatterer-RX distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ecg import EcgTrace

C_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChirpConfig:
    """FMCW chirp and frame timing (defaults follow a 77 GHz TDM-MIMO setup)."""

    start_freq: float = 77.0e9        # Hz
    slope: float = 65.0e6 / 1.0e-6    # Hz/s
    idle_time: float = 10.0e-6        # s
    ramp_end_time: float = 60.0e-6    # s
    n_samples: int = 256
    adc_rate: float = 5.0e6           # Hz
    frame_period: float = 5.0e-3      # s
    n_tx: int = 3
    n_rx: int = 4

    def __post_init__(self) -> None:
        if self.n_samples <= 0 or self.adc_rate <= 0:
            raise ValueError("n_samples and adc_rate must be positive")
        if self.n_samples / self.adc_rate > self.ramp_end_time + 1e-12:
            raise ValueError("sampling window exceeds ramp duration")
        if self.frame_period <= 0:
            raise ValueError("frame_period must be positive")

    @property
    def bandwidth(self) -> float:
        """Swept bandwidth over the sampled window (3.328 GHz with defaults)."""
        return self.slope * self.n_samples / self.adc_rate

    @property
    def n_channels(self) -> int:
        return self.n_tx * self.n_rx

    @property
    def frame_rate(self) -> float:
        return 1.0 / self.frame_period

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.start_freq

    def fast_time(self) -> np.ndarray:
        """Sample instants, centered on the sampling window.

        Centering puts the phase reference of each tone at the window middle
        so a matched-filter projection is phase-pure in the carrier term.
        """
        s = np.arange(self.n_samples, dtype=np.float64)
        return (s - (self.n_samples - 1) / 2.0) / self.adc_rate


def default_channel_geometry(config: ChirpConfig) -> np.ndarray:
    """TX/RX positions per virtual channel, shape (n_channels, 2, 3) meters.

    RX elements sit along x at half-wavelength pitch, TX elements along y at
    one-wavelength pitch, all in the z = 0 plane; channels are TX-major.
    """
    lam = config.wavelength
    rx_x = (np.arange(config.n_rx) - (config.n_rx - 1) / 2.0) * lam / 2.0
    tx_y = (np.arange(config.n_tx) - (config.n_tx - 1) / 2.0) * lam
    geom = np.zeros((config.n_channels, 2, 3), dtype=np.float64)
    for ti in range(config.n_tx):
        for ri in range(config.n_rx):
            n = ti * config.n_rx + ri
            geom[n, 0] = (0.0, tx_y[ti], 0.0)
            geom[n, 1] = (rx_x[ri], 0.0, 0.0)
    return geom


@dataclass
class PulseKernel:
    """Biphasic per-beat surface displacement pulse (difference of Gaussians)."""

    amplitude: float = 0.35e-3   # m, peak |displacement|; cardiac range 0.2-0.5 mm
    t_rise: float = 0.10         # s, first lobe center after the R peak
    t_fall: float = 0.32         # s, second (opposing) lobe center
    sigma_rise: float = 0.035    # s
    sigma_fall: float = 0.055    # s
    balance: float = 0.9         # second lobe relative amplitude

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        """Unnormalized pulse shape at times relative to the beat's R peak."""
        return np.exp(-0.5 * ((t - self.t_rise) / self.sigma_rise) ** 2) - (
            self.balance * np.exp(-0.5 * ((t - self.t_fall) / self.sigma_fall) ** 2)
        )


@dataclass
class BreathingParams:
    """Shared quasi-sinusoidal chest displacement."""

    amplitude: float = 5.0e-3   # m, allowed 4-12 mm
    rate: float = 0.25          # Hz, allowed 0.2-0.34
    phase: float = 0.0          # rad
    second_harmonic: float = 0.12  # relative amplitude, gives the quasi- shape
    enabled: bool = True

    AMP_RANGE = (4.0e-3, 12.0e-3)
    RATE_RANGE = (0.2, 0.34)

    def validate(self) -> None:
        if not self.enabled:
            return
        lo, hi = self.AMP_RANGE
        if not lo <= self.amplitude <= hi:
            raise ValueError(f"breathing amplitude {self.amplitude} m outside [{lo}, {hi}]")
        lo, hi = self.RATE_RANGE
        if not lo <= self.rate <= hi:
            raise ValueError(f"breathing rate {self.rate} Hz outside [{lo}, {hi}]")


@dataclass
class TorsoPhantom:
    """Point scatterers on the torso surface plus the conduction model."""

    scatterers: np.ndarray                 # (n, 3) positions, m
    reflectivity: np.ndarray               # (n,) amplitudes, > 0
    heart_center: np.ndarray               # (3,), m
    conduction_speed: float = 3.0          # m/s
    conduction_decay: float = 8.0          # 1/m

    def __post_init__(self) -> None:
        self.scatterers = np.atleast_2d(np.asarray(self.scatterers, dtype=np.float64))
        self.reflectivity = np.atleast_1d(np.asarray(self.reflectivity, dtype=np.float64))
        self.heart_center = np.asarray(self.heart_center, dtype=np.float64).reshape(3)
        if self.scatterers.shape[0] == 0:
            raise ValueError("phantom has no scatterers")
        if self.scatterers.shape[0] != self.reflectivity.shape[0]:
            raise ValueError("scatterer/reflectivity length mismatch")
        if np.any(self.reflectivity <= 0):
            raise ValueError("reflectivity must be positive")
        if self.conduction_speed <= 0:
            raise ValueError("conduction_speed must be positive")

    @property
    def n_scatterers(self) -> int:
        return self.scatterers.shape[0]

    def heart_distances(self) -> np.ndarray:
        return np.linalg.norm(self.scatterers - self.heart_center, axis=1)


def default_phantom(
    nx: int = 8,
    ny: int = 8,
    extent=(0.3, 0.4),
    z: float = 0.45,
    heart_offset=(0.05, -0.04),
    seed: int = 0,
) -> TorsoPhantom:
    """Scatterer grid over a plane facing the radar at the sensing distance."""
    xs = np.linspace(-extent[0] / 2, extent[0] / 2, nx)
    ys = np.linspace(-extent[1] / 2, extent[1] / 2, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pos = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
    rng = np.random.default_rng(seed)
    refl = rng.uniform(0.6, 1.4, size=pos.shape[0])
    heart = np.array([heart_offset[0], heart_offset[1], z])
    return TorsoPhantom(scatterers=pos, reflectivity=refl, heart_center=heart)


@dataclass
class MotionProfile:
    """Per-scatterer radial displacement at the frame rate, split by source."""

    breathing: np.ndarray   # (n_scatterers, n_frames) m
    cardiac: np.ndarray     # (n_scatterers, n_frames) m
    frame_rate: float

    @property
    def total(self) -> np.ndarray:
        return self.breathing + self.cardiac

    @property
    def n_frames(self) -> int:
        return self.breathing.shape[1]


def ecg_to_surface_motion(
    ecg: EcgTrace,
    phantom: TorsoPhantom,
    breathing: BreathingParams | None = None,
    kernel: PulseKernel | None = None,
    frame_rate: float = 200.0,
) -> MotionProfile:
    """Drive the phantom surface from the ECG beat annotations.

    Each beat's R peak launches the pulse kernel; scatterer i sees it delayed
    by dist(heart, i)/conduction_speed and scaled by exp(-decay * dist).
    Breathing adds one shared quasi-sinusoid to every scatterer.
    """
    if ecg.beats.shape[0] < 1:
        raise ValueError("ECG has no beats")
    if breathing is None:
        breathing = BreathingParams()
    if kernel is None:
        kernel = PulseKernel()
    breathing.validate()

    n_frames = int(round(len(ecg.samples) / ecg.sample_rate * frame_rate))
    t = np.arange(n_frames) / frame_rate
    dists = phantom.heart_distances()
    delays = dists / phantom.conduction_speed
    scales = np.exp(-phantom.conduction_decay * dists)

    # Normalize the kernel shape so `amplitude` is the peak |displacement|.
    probe = np.linspace(-0.2, kernel.t_fall + 6 * kernel.sigma_fall, 4001)
    shape_peak = np.abs(kernel.evaluate(probe)).max()
    r_times = ecg.r_indices / ecg.sample_rate

    cardiac = np.zeros((phantom.n_scatterers, n_frames), dtype=np.float64)
    support = kernel.t_fall + 6 * kernel.sigma_fall
    for r_time in r_times:
        # Only frames inside the pulse support contribute for any delay.
        lo = np.searchsorted(t, r_time - 0.05)
        hi = np.searchsorted(t, r_time + support + delays.max())
        if hi <= lo:
            continue
        rel = t[lo:hi][None, :] - r_time - delays[:, None]
        cardiac[:, lo:hi] += kernel.evaluate(rel)
    cardiac *= (kernel.amplitude / shape_peak) * scales[:, None]

    if breathing.enabled:
        shared = breathing.amplitude * (
            np.sin(2 * np.pi * breathing.rate * t + breathing.phase)
            + breathing.second_harmonic
            * np.sin(4 * np.pi * breathing.rate * t + 2 * breathing.phase)
        ) / (1 + breathing.second_harmonic)
        breath = np.broadcast_to(shared, (phantom.n_scatterers, n_frames)).copy()
    else:
        breath = np.zeros_like(cardiac)

    return MotionProfile(breathing=breath, cardiac=cardiac, frame_rate=frame_rate)


@dataclass
class RadarFrameCube:
    """Raw complex IF samples, frames x virtual channels x fast-time samples."""

    data: np.ndarray
    config: ChirpConfig
    channel_geometry: np.ndarray   # (n_channels, 2, 3): TX and RX positions

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        self.channel_geometry = np.asarray(self.channel_geometry, dtype=np.float64)
        f, ch, s = self.data.shape
        if ch != self.config.n_channels or s != self.config.n_samples:
            raise ValueError("cube dims inconsistent with config")
        if self.channel_geometry.shape != (ch, 2, 3):
            raise ValueError("channel geometry shape mismatch")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("cube contains non-finite samples")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


def round_trip(positions: np.ndarray, geometry: np.ndarray) -> np.ndarray:
    """Exact two-way TX->point->RX distance.

    positions: (..., 3); geometry: (n_channels, 2, 3).
    Returns (..., n_channels).
    """
    pos = positions[..., None, :]                       # (..., 1, 3)
    d_tx = np.linalg.norm(pos - geometry[:, 0, :], axis=-1)
    d_rx = np.linalg.norm(pos - geometry[:, 1, :], axis=-1)
    return d_tx + d_rx


def render_frames(
    profile: MotionProfile,
    phantom: TorsoPhantom,
    config: ChirpConfig,
    snr_db: float | None = 20.0,
    seed: int = 0,
    geometry: np.ndarray | None = None,
    dtype=np.complex64,
    chunk_frames: int = 256,
) -> RadarFrameCube:
    """Render the raw IF cube for a moving phantom.

    Per channel n and fast time t the noiseless sample is
    sum_i a_i * exp(j*2*pi*(slope*r_i(n)/c * t + r_i(n)/lambda)) with r_i(n)
    the instantaneous round-trip distance.  Scatterers displace radially
    (along their line of sight from the array center).  ``snr_db=None``
    disables noise; noise power is referenced to the strongest scatterer's
    tone power.  Noise draws use one RNG substream per frame derived from
    (seed, frame index), so chunking does not change the output.
    """
    if snr_db is not None and not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite or None")
    disp = profile.total
    if disp.shape[0] != phantom.n_scatterers:
        raise ValueError("motion profile does not match phantom")
    if geometry is None:
        geometry = default_channel_geometry(config)

    n_frames = disp.shape[1]
    n_ch = config.n_channels
    n_s = config.n_samples
    t_fast = config.fast_time()
    lam = config.wavelength
    k = config.slope
    radial = phantom.scatterers / np.linalg.norm(phantom.scatterers, axis=1, keepdims=True)
    amps = phantom.reflectivity

    noise_sigma = 0.0
    if snr_db is not None:
        noise_sigma = float(amps.max()) / np.sqrt(10.0 ** (snr_db / 10.0))

    out = np.empty((n_frames, n_ch, n_s), dtype=dtype)
    for f0 in range(0, n_frames, chunk_frames):
        f1 = min(f0 + chunk_frames, n_frames)
        pos = phantom.scatterers[None, :, :] + disp[:, f0:f1].T[:, :, None] * radial[None, :, :]
        rt = round_trip(pos, geometry)                       # (F, n_sc, n_ch)
        beat = k * rt / C_LIGHT                              # Hz per channel tone
        carrier = rt / lam
        phase = 2 * np.pi * (beat[..., None] * t_fast + carrier[..., None])
        tones = np.exp(1j * phase)
        chunk = np.einsum("i,fica->fca", amps, tones, optimize=True)
        if noise_sigma > 0.0:
            for fi in range(f0, f1):
                rng = np.random.default_rng(np.random.SeedSequence((seed, fi)))
                nz = rng.standard_normal((n_ch, n_s, 2))
                chunk[fi - f0] += (noise_sigma / np.sqrt(2.0)) * (nz[..., 0] + 1j * nz[..., 1])
        out[f0:f1] = chunk.astype(dtype)
    return RadarFrameCube(data=out, config=config, channel_geometry=geometry)
