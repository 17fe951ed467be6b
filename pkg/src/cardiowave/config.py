"""Flat ``key = value`` pipeline configuration.

Dotted prefixes select sections (``chirp.``, ``grid.``, ``sim.``,
``focus.``, ``cluster.``, ``transform.``, ``paths.``).  Unknown keys are
rejected.  ``#`` starts a comment; blank lines are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .beamform import VoxelGrid
from .sim import BreathingParams, ChirpConfig, PulseKernel


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    duration: float = 60.0
    snr_db: float = 20.0
    bpm_start: float = 70.0
    bpm_end: float = 80.0
    jitter_sd: float = 0.02
    breathing_enabled: bool = True
    breathing_amplitude: float = 5.0e-3
    breathing_rate: float = 0.25
    cardiac_amplitude: float = 0.35e-3
    phantom_nx: int = 8
    phantom_ny: int = 8
    phantom_extent_x: float = 0.3
    phantom_extent_y: float = 0.4
    phantom_z: float = 0.45
    heart_x: float = 0.05
    heart_y: float = -0.04
    conduction_speed: float = 3.0
    conduction_decay: float = 8.0

    def breathing(self) -> BreathingParams:
        return BreathingParams(
            amplitude=self.breathing_amplitude,
            rate=self.breathing_rate,
            enabled=self.breathing_enabled,
        )

    def kernel(self) -> PulseKernel:
        return PulseKernel(amplitude=self.cardiac_amplitude)


@dataclass
class FocusConfig:
    h_min: int = 100
    h_max: int = 200
    thr_f: float | None = None    # None = auto (median)
    band: int = 0                 # 0 = unbanded DTW
    window: int = 0               # 0 = score full series
    candidate_limit: int = 0      # 0 = all coarse candidates


@dataclass
class ClusterConfig:
    k: int = 50
    rho_s: float = 1.0
    rho_l: float = 1.0


@dataclass
class TransformConfig:
    command: str = ""             # external program for the ECG stage
    checkpoint: str = ""


@dataclass
class PipelineConfig:
    chirp: ChirpConfig = field(default_factory=ChirpConfig)
    grid: VoxelGrid = field(default_factory=VoxelGrid)
    sim: SimConfig = field(default_factory=SimConfig)
    focus: FocusConfig = field(default_factory=FocusConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    transform: TransformConfig = field(default_factory=TransformConfig)
    seed: int = 1
    workdir: str = "."


def _parse_scalar(text: str, target_type):
    text = text.strip()
    if target_type is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if target_type is int:
        return int(float(text))
    if target_type is float:
        return float(text)
    return text


def _grid_key(grid_kwargs: dict, key: str, value: str) -> None:
    parts = [p.strip() for p in value.split(",")]
    if key in ("x", "y", "z"):
        if len(parts) != 2:
            raise ConfigError(f"grid.{key} needs 'lo,hi', got {value!r}")
        grid_kwargs[f"{key}_bounds"] = (float(parts[0]), float(parts[1]))
    elif key == "counts":
        if len(parts) != 3:
            raise ConfigError(f"grid.counts needs three ints, got {value!r}")
        grid_kwargs["counts"] = tuple(int(p) for p in parts)
    else:
        raise ConfigError(f"unknown key grid.{key}")


def parse_config(text: str) -> PipelineConfig:
    sections = {
        "chirp": {}, "sim": {}, "focus": {}, "cluster": {}, "transform": {},
    }
    types = {
        name: {f.name: f.type for f in fields(cls)}
        for name, cls in (
            ("chirp", ChirpConfig), ("sim", SimConfig), ("focus", FocusConfig),
            ("cluster", ClusterConfig), ("transform", TransformConfig),
        )
    }
    grid_kwargs: dict = {}
    top: dict = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value': {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
            if section == "grid":
                _grid_key(grid_kwargs, name, value)
                continue
            if section == "paths":
                if name != "workdir":
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                top["workdir"] = value
                continue
            if section not in sections:
                raise ConfigError(f"line {lineno}: unknown section {section!r}")
            if name not in types[section]:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            ftype = types[section][name]
            if section == "focus" and name == "thr_f":
                sections[section][name] = None if value.lower() == "auto" else float(value)
                continue
            base = str
            for probe, t in (("bool", bool), ("int", int), ("float", float)):
                if probe in str(ftype):
                    base = t
                    break
            sections[section][name] = _parse_scalar(value, base)
        elif key == "seed":
            top["seed"] = int(value)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    try:
        cfg = PipelineConfig(
            chirp=ChirpConfig(**sections["chirp"]),
            grid=VoxelGrid(**grid_kwargs),
            sim=SimConfig(**sections["sim"]),
            focus=FocusConfig(**sections["focus"]),
            cluster=ClusterConfig(**sections["cluster"]),
            transform=TransformConfig(**sections["transform"]),
            **top,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    validate_config(cfg)
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def validate_config(cfg: PipelineConfig) -> None:
    if cfg.focus.h_min > cfg.focus.h_max or cfg.focus.h_min < 2:
        raise ConfigError("focus.h_min must satisfy 2 <= h_min <= h_max")
    if cfg.focus.window and cfg.focus.window < 4 * cfg.focus.h_max:
        raise ConfigError("focus.window must be 0 (full) or >= 4*h_max")
    if cfg.cluster.k < 1:
        raise ConfigError("cluster.k must be >= 1")
    if cfg.sim.duration <= 0:
        raise ConfigError("sim.duration must be positive")
    if cfg.sim.breathing_enabled:
        try:
            cfg.sim.breathing().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def with_seed(cfg: PipelineConfig, seed: int | None) -> PipelineConfig:
    return cfg if seed is None else replace(cfg, seed=seed)
