"""Binary interchange formats for the pipeline stages.

All integers are little-endian u32, all floats f32.  Layouts:

.rdc  "RDC1" | n_frames n_channels n_samples | interleaved (re, im) samples
      frame-major, channel-major, sample-minor | u32 length + UTF-8 JSON
      metadata (chirp config and channel geometry).
.ecg  "ECG1" | n_samples sample_rate_hz | samples (mV) | n_beats | per beat
      five u32 (P Q R S T; 0xFFFFFFFF when absent).
.bvs  "BVS1" | u32 length + UTF-8 JSON grid descriptor | per-voxel complex
      series as interleaved (re, im).
.msg  "MSG1" | n_signals | per signal: 3x f32 location, f32 power, u32 len,
      f32 phase[len], f32 accel[len] | optional trailing per-signal score
      block (raw, normalized) written by the focus stage.
.cmm  "CMM1" | n_clusters n_frames frame_rate_hz | per cluster: 3x f32
      location, f32 power, f32 series[n_frames].
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .beamform import BeamformedVoxelSeries, VoxelGrid
from .cluster import CardiacMeasurementSet
from .ecg import EcgTrace
from .micromotion import MotionSignal
from .sim import ChirpConfig, RadarFrameCube

SENTINEL = 0xFFFFFFFF


class FormatError(ValueError):
    pass


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def _expect_magic(f, magic: bytes) -> None:
    got = _read_exact(f, 4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")


def _write_json_block(f, obj) -> None:
    raw = json.dumps(obj).encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_json_block(f):
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    return json.loads(_read_exact(f, n).decode("utf-8"))


def write_rdc(path, cube: RadarFrameCube) -> None:
    data = np.ascontiguousarray(cube.data, dtype=np.complex64)
    inter = np.empty(data.shape + (2,), dtype=np.float32)
    inter[..., 0] = data.real
    inter[..., 1] = data.imag
    with open(path, "wb") as f:
        f.write(b"RDC1")
        f.write(struct.pack("<III", *data.shape))
        f.write(inter.tobytes())
        _write_json_block(f, {
            "chirp": asdict(cube.config),
            "channel_geometry": cube.channel_geometry.tolist(),
        })


def read_rdc(path) -> RadarFrameCube:
    with open(path, "rb") as f:
        _expect_magic(f, b"RDC1")
        n_frames, n_ch, n_s = struct.unpack("<III", _read_exact(f, 12))
        raw = np.frombuffer(_read_exact(f, n_frames * n_ch * n_s * 8), dtype=np.float32)
        raw = raw.reshape(n_frames, n_ch, n_s, 2)
        data = (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64)
        meta = _read_json_block(f)
    config = ChirpConfig(**meta["chirp"])
    geometry = np.asarray(meta["channel_geometry"], dtype=np.float64)
    return RadarFrameCube(data=data, config=config, channel_geometry=geometry)


def write_ecg(path, trace: EcgTrace) -> None:
    samples = np.ascontiguousarray(trace.samples, dtype=np.float32)
    beats = trace.beats.astype(np.int64)
    with open(path, "wb") as f:
        f.write(b"ECG1")
        f.write(struct.pack("<II", samples.size, int(trace.sample_rate)))
        f.write(samples.tobytes())
        f.write(struct.pack("<I", beats.shape[0]))
        enc = np.where(beats < 0, SENTINEL, beats).astype(np.uint32)
        f.write(enc.tobytes())


def read_ecg(path) -> EcgTrace:
    with open(path, "rb") as f:
        _expect_magic(f, b"ECG1")
        n, rate = struct.unpack("<II", _read_exact(f, 8))
        samples = np.frombuffer(_read_exact(f, 4 * n), dtype=np.float32).astype(np.float64)
        (n_beats,) = struct.unpack("<I", _read_exact(f, 4))
        enc = np.frombuffer(_read_exact(f, 4 * 5 * n_beats), dtype=np.uint32)
        beats = enc.reshape(n_beats, 5).astype(np.int64)
        beats[beats == SENTINEL] = -1
    return EcgTrace(samples=samples, sample_rate=rate, beats=beats)


def write_bvs(path, series: BeamformedVoxelSeries) -> None:
    g = series.grid
    data = np.ascontiguousarray(series.series, dtype=np.complex64)
    inter = np.empty(data.shape + (2,), dtype=np.float32)
    inter[..., 0] = data.real
    inter[..., 1] = data.imag
    with open(path, "wb") as f:
        f.write(b"BVS1")
        _write_json_block(f, {
            "x_bounds": list(g.x_bounds), "y_bounds": list(g.y_bounds),
            "z_bounds": list(g.z_bounds), "counts": list(g.counts),
            "frame_rate": series.frame_rate, "n_frames": series.n_frames,
        })
        f.write(inter.tobytes())


def read_bvs(path) -> BeamformedVoxelSeries:
    with open(path, "rb") as f:
        _expect_magic(f, b"BVS1")
        meta = _read_json_block(f)
        grid = VoxelGrid(
            x_bounds=tuple(meta["x_bounds"]), y_bounds=tuple(meta["y_bounds"]),
            z_bounds=tuple(meta["z_bounds"]), counts=tuple(meta["counts"]),
        )
        n = grid.n_voxels * meta["n_frames"]
        raw = np.frombuffer(_read_exact(f, 8 * n), dtype=np.float32)
        raw = raw.reshape(grid.n_voxels, meta["n_frames"], 2)
        data = (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex128)
    return BeamformedVoxelSeries(series=data, grid=grid, frame_rate=meta["frame_rate"])


def write_msg(
    path,
    signals: list[MotionSignal],
    scores: np.ndarray | None = None,
    raw_scores: np.ndarray | None = None,
) -> None:
    with open(path, "wb") as f:
        f.write(b"MSG1")
        f.write(struct.pack("<I", len(signals)))
        for sig in signals:
            f.write(np.asarray(sig.location, dtype=np.float32).tobytes())
            f.write(struct.pack("<f", sig.power))
            f.write(struct.pack("<I", sig.phase.size))
            f.write(sig.phase.astype(np.float32).tobytes())
            f.write(sig.acceleration.astype(np.float32).tobytes())
        if scores is not None:
            block = np.column_stack([
                np.asarray(raw_scores, dtype=np.float32)
                if raw_scores is not None else np.zeros(len(signals), np.float32),
                np.asarray(scores, dtype=np.float32),
            ])
            f.write(block.astype(np.float32).tobytes())


def read_msg(path, frame_rate: float = 200.0):
    """Returns (signals, scores) where scores is None without a score block."""
    with open(path, "rb") as f:
        _expect_magic(f, b"MSG1")
        (n_signals,) = struct.unpack("<I", _read_exact(f, 4))
        signals = []
        for _ in range(n_signals):
            loc = np.frombuffer(_read_exact(f, 12), dtype=np.float32).astype(np.float64)
            (power,) = struct.unpack("<f", _read_exact(f, 4))
            (length,) = struct.unpack("<I", _read_exact(f, 4))
            phase = np.frombuffer(_read_exact(f, 4 * length), dtype=np.float32)
            accel = np.frombuffer(_read_exact(f, 4 * length), dtype=np.float32)
            signals.append(MotionSignal(
                location=loc, phase=phase.astype(np.float64),
                acceleration=accel.astype(np.float64),
                power=float(power), frame_rate=frame_rate,
            ))
        tail = f.read()
    scores = None
    if len(tail) == 8 * n_signals and n_signals > 0:
        block = np.frombuffer(tail, dtype=np.float32).reshape(n_signals, 2)
        scores = block[:, 1].astype(np.float64)
    return signals, scores


def write_cmm(path, cs: CardiacMeasurementSet) -> None:
    with open(path, "wb") as f:
        f.write(b"CMM1")
        f.write(struct.pack("<III", cs.n_entries, cs.n_frames, int(round(cs.frame_rate))))
        for i in range(cs.n_entries):
            f.write(np.asarray(cs.locations[i], dtype=np.float32).tobytes())
            f.write(struct.pack("<f", float(cs.powers[i])))
            f.write(cs.motion[i].astype(np.float32).tobytes())


def read_cmm(path) -> CardiacMeasurementSet:
    with open(path, "rb") as f:
        _expect_magic(f, b"CMM1")
        n, frames, rate = struct.unpack("<III", _read_exact(f, 12))
        locations = np.empty((n, 3))
        powers = np.empty(n)
        motion = np.empty((n, frames))
        for i in range(n):
            locations[i] = np.frombuffer(_read_exact(f, 12), dtype=np.float32)
            (powers[i],) = struct.unpack("<f", _read_exact(f, 4))
            motion[i] = np.frombuffer(_read_exact(f, 4 * frames), dtype=np.float32)
    return CardiacMeasurementSet(
        motion=motion, locations=locations, powers=powers, frame_rate=float(rate),
    )
