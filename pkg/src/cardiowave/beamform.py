"""3D cartesian beamforming of raw IF cubes onto a fixed voxel grid.

Each voxel's steering replica is the point-scatterer tone its round-trip
distance would produce; the per-frame output is the coherent matched-filter
dot product of every channel's fast-time samples against that replica,
summed over channels.  Voxels are independent, so the projection reduces to
one (frames x samples) @ (samples x voxels) matrix product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sim import C_LIGHT, RadarFrameCube, round_trip


@dataclass(frozen=True)
class VoxelGrid:
    """Cell-centered cartesian crop box (defaults give 9*17*9 = 1377 voxels)."""

    x_bounds: tuple[float, float] = (-0.4, 0.4)
    y_bounds: tuple[float, float] = (-0.4, 0.4)
    z_bounds: tuple[float, float] = (0.35, 0.6)
    counts: tuple[int, int, int] = (9, 17, 9)

    def __post_init__(self) -> None:
        for lo, hi in (self.x_bounds, self.y_bounds, self.z_bounds):
            if not hi > lo:
                raise ValueError("grid bounds must be increasing")
        if any(c < 1 for c in self.counts):
            raise ValueError("grid counts must be >= 1")

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz

    def axis(self, dim: int) -> np.ndarray:
        lo, hi = (self.x_bounds, self.y_bounds, self.z_bounds)[dim]
        n = self.counts[dim]
        step = (hi - lo) / n
        return lo + (np.arange(n) + 0.5) * step   # centers strictly inside

    def centers(self) -> np.ndarray:
        """Voxel centers, shape (n_voxels, 3), C-ordered over (ix, iy, iz)."""
        gx, gy, gz = np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def flat_index(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, nz = self.counts
        return (ix * ny + iy) * nz + iz

    def unravel(self, flat: int) -> tuple[int, int, int]:
        nx, ny, nz = self.counts
        ix, rem = divmod(flat, ny * nz)
        iy, iz = divmod(rem, nz)
        return ix, iy, iz

    def nearest_voxel(self, point) -> int:
        centers = self.centers()
        return int(np.argmin(np.linalg.norm(centers - np.asarray(point), axis=1)))

    def center_point(self) -> np.ndarray:
        return np.array([
            sum(self.x_bounds) / 2, sum(self.y_bounds) / 2, sum(self.z_bounds) / 2,
        ])


@dataclass
class BeamformedVoxelSeries:
    """Per-voxel complex slow-time series over frames."""

    series: np.ndarray          # (n_voxels, n_frames) complex
    grid: VoxelGrid
    frame_rate: float
    locations: np.ndarray = field(default=None)  # (n_voxels, 3)

    def __post_init__(self) -> None:
        if self.locations is None:
            self.locations = self.grid.centers()
        if self.series.shape[0] != self.grid.n_voxels:
            raise ValueError("series/grid voxel count mismatch")

    @property
    def n_frames(self) -> int:
        return self.series.shape[1]


def steering_matrix(cube_config, geometry: np.ndarray, grid: VoxelGrid) -> np.ndarray:
    """Conjugated steering replicas, shape (n_voxels, n_channels * n_samples)."""
    centers = grid.centers()
    rt = round_trip(centers, geometry)                      # (V, n_channels)
    t_fast = cube_config.fast_time()
    beat = cube_config.slope * rt / C_LIGHT
    carrier = rt / cube_config.wavelength
    phase = 2 * np.pi * (beat[..., None] * t_fast + carrier[..., None])
    st = np.exp(-1j * phase)                                # conjugate replica
    return st.reshape(grid.n_voxels, -1)


def beamform(
    cube: RadarFrameCube,
    grid: VoxelGrid,
    chunk_frames: int = 2048,
) -> BeamformedVoxelSeries:
    """Project a radar cube onto the voxel grid (matched-filter channel sum).

    Output voxel v at frame f is sum over channels n and fast-time samples t
    of y[f,n,t] * exp(-j*2*pi*(slope*r(v,n)/c * t + r(v,n)/lambda)).
    Computed in complex128 regardless of the cube dtype.
    """
    if grid.n_voxels == 0:
        raise ValueError("voxel grid is empty")
    if cube.channel_geometry.shape[0] != cube.data.shape[1]:
        raise ValueError("geometry/channel count mismatch")

    st = steering_matrix(cube.config, cube.channel_geometry, grid)
    n_frames = cube.n_frames
    out = np.empty((grid.n_voxels, n_frames), dtype=np.complex128)
    flat = cube.data.reshape(n_frames, -1)
    for f0 in range(0, n_frames, chunk_frames):
        f1 = min(f0 + chunk_frames, n_frames)
        y = flat[f0:f1].astype(np.complex128, copy=False)
        out[:, f0:f1] = st @ y.T
    return BeamformedVoxelSeries(series=out, grid=grid, frame_rate=cube.config.frame_rate)


def voxel_power(series: BeamformedVoxelSeries) -> np.ndarray:
    """Per-voxel mean |S|^2 over frames (same voxel ordering as the series)."""
    if series.series.size == 0:
        raise ValueError("empty beamformed series")
    return np.mean(np.abs(series.series) ** 2, axis=1)
