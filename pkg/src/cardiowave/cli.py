"""Command-line entry point wiring all stages.

Subcommands: simulate, beamform, extract, focus, cluster, evaluate,
pipeline.  Exit codes: 0 ok, 2 config error, 3 stage error, 4 empty result
(no cardiac signal found).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shlex
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import fileio, metrics
from .beamform import beamform as beamform_cube
from .cluster import cluster as cluster_signals
from .cluster import emit_measurements
from .config import ConfigError, PipelineConfig, load_config, with_seed
from .ecg import synth_ecg
from .focus import focus_voxels
from .micromotion import extract_signals
from .sim import default_phantom, ecg_to_surface_motion, render_frames

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_EMPTY = 4

STAGES = ("simulate", "beamform", "extract", "focus", "cluster", "transform", "evaluate")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str, input_checksum: str = ""):
        detail = f"stage {stage}: {message}"
        if input_checksum:
            detail += f" (input sha256 {input_checksum[:12]})"
        super().__init__(detail)
        self.stage = stage


class EmptyResultError(RuntimeError):
    pass


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return with_seed(cfg, getattr(args, "seed", None))


# ----------------------------------------------------------------- stages

def _run_simulate(cfg: PipelineConfig, out_cube: Path, out_ecg: Path,
                  duration: float | None = None, seed: int | None = None) -> None:
    sim = cfg.sim
    seed = cfg.seed if seed is None else seed
    duration = sim.duration if duration is None else duration
    profile = np.linspace(sim.bpm_start, sim.bpm_end, 32)
    trace = synth_ecg(duration, profile, seed=seed, jitter_sd=sim.jitter_sd)
    phantom = default_phantom(
        nx=sim.phantom_nx, ny=sim.phantom_ny,
        extent=(sim.phantom_extent_x, sim.phantom_extent_y),
        z=sim.phantom_z, heart_offset=(sim.heart_x, sim.heart_y), seed=seed,
    )
    phantom.conduction_speed = sim.conduction_speed
    phantom.conduction_decay = sim.conduction_decay
    motion = ecg_to_surface_motion(
        trace, phantom, breathing=sim.breathing(), kernel=sim.kernel(),
        frame_rate=cfg.chirp.frame_rate,
    )
    cube = render_frames(motion, phantom, cfg.chirp, snr_db=sim.snr_db, seed=seed)
    fileio.write_rdc(out_cube, cube)
    fileio.write_ecg(out_ecg, trace)


def _run_beamform(cfg: PipelineConfig, in_cube: Path, out_path: Path) -> None:
    cube = fileio.read_rdc(in_cube)
    series = beamform_cube(cube, cfg.grid)
    fileio.write_bvs(out_path, series)


def _run_extract(cfg: PipelineConfig, in_path: Path, out_path: Path) -> None:
    series = fileio.read_bvs(in_path)
    signals = extract_signals(series)
    fileio.write_msg(out_path, signals)


def _run_focus(cfg: PipelineConfig, in_path: Path, out_path: Path) -> None:
    signals, _ = fileio.read_msg(in_path, frame_rate=cfg.chirp.frame_rate)
    fc = cfg.focus
    result = focus_voxels(
        signals,
        thr_f=fc.thr_f,
        h_min=fc.h_min, h_max=fc.h_max,
        band=fc.band or None,
        scoring_window=fc.window or None,
        candidate_limit=fc.candidate_limit or None,
    )
    if result.empty:
        raise EmptyResultError("no cardiac signal found")
    keep = result.retained_indices
    fileio.write_msg(
        out_path, result.retained,
        scores=result.scores[keep], raw_scores=result.raw_scores[keep],
    )


def _run_cluster(cfg: PipelineConfig, in_path: Path, out_path: Path) -> None:
    signals, _ = fileio.read_msg(in_path, frame_rate=cfg.chirp.frame_rate)
    cc = cfg.cluster
    model = cluster_signals(signals, k=cc.k, rho_s=cc.rho_s, rho_l=cc.rho_l, seed=cfg.seed)
    cs = emit_measurements(model, backfill_location=cfg.grid.center_point())
    fileio.write_cmm(out_path, cs)


def _run_transform(cfg: PipelineConfig, in_cmm: Path, out_ecg: Path) -> None:
    if not cfg.transform.command:
        raise StageError("transform", "no transform.command configured")
    cmd = shlex.split(cfg.transform.command) + [
        "--ckpt", cfg.transform.checkpoint, "--in", str(in_cmm), "--out", str(out_ecg),
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise StageError("transform", f"subprocess failed: {proc.stderr.strip()[:400]}")


def _run_evaluate(pred_path: Path, truth_path: Path, report_path: Path,
                  plot_data: Path | None = None) -> None:
    pred = fileio.read_ecg(pred_path)
    truth = fileio.read_ecg(truth_path)
    report = metrics.evaluate(pred, truth)
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
    if plot_data is not None:
        rows = ["event,abs_error_ms"]
        for name in metrics.EVENTS:
            for v in report.timing[name]["abs_ms"]:
                rows.append(f"{name},{v}")
        for v in report.rr["abs_ms"]:
            rows.append(f"RR,{v}")
        Path(plot_data).write_text("\n".join(rows) + "\n", encoding="utf-8")


# --------------------------------------------------------------- pipeline

def run_pipeline(cfg: PipelineConfig, workdir: Path, through: str = "cluster",
                 verbose: bool = False) -> dict:
    """Chain the stages, checkpointing every artifact with checksums.

    A stage is skipped when the manifest already records its outputs and
    the files on disk still match; a mismatch is a corruption error naming
    the stage.
    """
    if through not in STAGES:
        raise ConfigError(f"unknown stage {through!r}")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    manifest_path = workdir / "manifest.json"
    manifest = {"seed": cfg.seed, "stages": {}}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        manifest.setdefault("stages", {})

    paths = {
        "cube": workdir / "cube.rdc",
        "truth": workdir / "truth.ecg",
        "bvs": workdir / "series.bvs",
        "msg": workdir / "signals.msg",
        "focused": workdir / "focused.msg",
        "cmm": workdir / "measurements.cmm",
        "pred": workdir / "reconstructed.ecg",
        "report": workdir / "report.json",
    }
    plan = [
        ("simulate", [], [paths["cube"], paths["truth"]],
         lambda: _run_simulate(cfg, paths["cube"], paths["truth"])),
        ("beamform", [paths["cube"]], [paths["bvs"]],
         lambda: _run_beamform(cfg, paths["cube"], paths["bvs"])),
        ("extract", [paths["bvs"]], [paths["msg"]],
         lambda: _run_extract(cfg, paths["bvs"], paths["msg"])),
        ("focus", [paths["msg"]], [paths["focused"]],
         lambda: _run_focus(cfg, paths["msg"], paths["focused"])),
        ("cluster", [paths["focused"]], [paths["cmm"]],
         lambda: _run_cluster(cfg, paths["focused"], paths["cmm"])),
        ("transform", [paths["cmm"]], [paths["pred"]],
         lambda: _run_transform(cfg, paths["cmm"], paths["pred"])),
        ("evaluate", [paths["pred"], paths["truth"]], [paths["report"]],
         lambda: _run_evaluate(paths["pred"], paths["truth"], paths["report"])),
    ]
    last = STAGES.index(through)

    for stage, inputs, outputs, fn in plan[: last + 1]:
        recorded = manifest["stages"].get(stage)
        if recorded:
            on_disk = {}
            ok = True
            for out in outputs:
                if not out.exists():
                    ok = False
                    break
                on_disk[out.name] = _sha256(out)
            if ok and on_disk == recorded.get("outputs"):
                if verbose:
                    print(f"[pipeline] {stage}: up to date, skipping", file=sys.stderr)
                continue
            if ok and on_disk != recorded.get("outputs"):
                bad = [n for n, h in on_disk.items() if recorded["outputs"].get(n) != h]
                raise StageError(stage, f"checksum mismatch for {', '.join(bad)}")
        in_sum = _sha256(inputs[0]) if inputs and inputs[0].exists() else ""
        if verbose:
            print(f"[pipeline] running {stage}", file=sys.stderr)
        try:
            fn()
        except EmptyResultError:
            raise
        except Exception as exc:   # halt with stage name + input checksum
            raise StageError(stage, str(exc), in_sum) from exc
        manifest["stages"][stage] = {
            "inputs": {p.name: _sha256(p) for p in inputs if p.exists()},
            "outputs": {p.name: _sha256(p) for p in outputs},
        }
        manifest_path.write_text(json.dumps(manifest, indent=2))
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest


# -------------------------------------------------------------------- cli

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cardiowave")
    parser.add_argument("--config", help="pipeline config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize ECG + raw radar cube")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--out-cube", required=True)
    p.add_argument("--out-ecg", required=True)

    p = sub.add_parser("beamform", help="project a cube onto the voxel grid")
    p.add_argument("--in-cube", required=True)
    p.add_argument("--grid", help="config file supplying grid.* keys")
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="phase + micro-motion per voxel")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("focus", help="retain cardiac-like signals")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--thr", default="auto")
    p.add_argument("--hmin", type=int, default=None)
    p.add_argument("--hmax", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="spatial filtering into N measurements")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--rho-s", type=float, default=None)
    p.add_argument("--rho-l", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="compare reconstructed vs truth ECG")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--emit-plot-data", dest="plot_data", default=None)

    p = sub.add_parser("pipeline", help="run all stages with a manifest")
    p.add_argument("--out", default=None, help="working directory")
    p.add_argument("--through", default="cluster", choices=STAGES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_cfg(args)
        if args.command == "simulate":
            _run_simulate(cfg, Path(args.out_cube), Path(args.out_ecg),
                          duration=args.duration)
        elif args.command == "beamform":
            if args.grid:
                cfg = with_seed(load_config(args.grid), cfg.seed)
            _run_beamform(cfg, Path(args.in_cube), Path(args.out))
        elif args.command == "extract":
            _run_extract(cfg, Path(args.infile), Path(args.out))
        elif args.command == "focus":
            if args.thr != "auto":
                cfg.focus.thr_f = float(args.thr)
            if args.hmin is not None:
                cfg.focus.h_min = args.hmin
            if args.hmax is not None:
                cfg.focus.h_max = args.hmax
            _run_focus(cfg, Path(args.infile), Path(args.out))
        elif args.command == "cluster":
            if args.k is not None:
                cfg.cluster.k = args.k
            if args.rho_s is not None:
                cfg.cluster.rho_s = args.rho_s
            if args.rho_l is not None:
                cfg.cluster.rho_l = args.rho_l
            _run_cluster(cfg, Path(args.infile), Path(args.out))
        elif args.command == "evaluate":
            _run_evaluate(Path(args.pred), Path(args.truth), Path(args.report),
                          Path(args.plot_data) if args.plot_data else None)
        elif args.command == "pipeline":
            workdir = Path(args.out) if args.out else Path(cfg.workdir)
            run_pipeline(cfg, workdir, through=args.through, verbose=args.verbose)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyResultError as exc:
        print(f"empty result: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
