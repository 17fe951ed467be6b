"""ECG delineation and the evaluation protocol for reconstructed traces.

The delineator finds R peaks on a bandpassed copy of the trace with a
refractory period, refines them on the raw samples, then anchors Q/S as the
nearest local minima around R and T as the post-R maximum.  Metrics compare
a predicted trace against ground truth: per-event timing error (absolute
and normalized by the local beat period), per-beat Pearson/RMSE, the 150 ms
false-monitoring rule, and R-R interval errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .ecg import EcgTrace
from .focus import H_MAX_DEFAULT, H_MIN_DEFAULT

NO_INDEX = -1
MATCH_TOLERANCE_MS = 150.0
EVENTS = ("Q", "R", "S", "T")


@dataclass
class DelineationResult:
    """Per-beat Q/R/S/T indices (-1 when undetected) plus beat boundaries."""

    beats: np.ndarray                 # (n, 4) int, columns Q R S T
    boundaries: np.ndarray            # (n + 1,) beat window edges in samples
    sample_rate: int
    ok: bool = True
    status: str = "ok"
    valid_rr: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self) -> None:
        self.beats = np.asarray(self.beats, dtype=np.int64).reshape(-1, 4)
        if self.valid_rr.size == 0 and self.beats.shape[0] >= 2:
            rr = np.diff(self.beats[:, 1])
            self.valid_rr = (rr >= H_MIN_DEFAULT) & (rr <= H_MAX_DEFAULT)

    @property
    def n_beats(self) -> int:
        return self.beats.shape[0]

    @property
    def r_indices(self) -> np.ndarray:
        return self.beats[:, 1]


def _local_minimum(x: np.ndarray, lo: int, hi: int, anchor: int, direction: int) -> int:
    """Nearest local minimum to ``anchor`` scanning in ``direction``."""
    idx = anchor + direction
    while lo < idx < hi - 1:
        if x[idx] <= x[idx - 1] and x[idx] <= x[idx + 1]:
            return idx
        idx += direction
    return NO_INDEX


def delineate(ecg: EcgTrace) -> DelineationResult:
    """Locate Q/R/S/T per beat.

    R peaks come from an 8-40 Hz bandpassed copy, thresholded at a fraction
    of its high quantile with a 0.5*h_min refractory period, then refined to
    the raw-signal local maximum.  Q and S are the nearest local minima
    within 60 ms of R (before/after); T is the raw maximum in [80, 400] ms
    after R.
    """
    x = np.asarray(ecg.samples, dtype=np.float64)
    fs = ecg.sample_rate
    if len(x) < 2 * fs:
        raise ValueError("need at least 2 s of signal")
    if np.ptp(x) < 1e-9:
        return DelineationResult(
            beats=np.zeros((0, 4)), boundaries=np.zeros(1), sample_rate=fs,
            ok=False, status="flat signal",
        )

    nyq = fs / 2.0
    b, a = sps.butter(2, [8.0 / nyq, 40.0 / nyq], btype="band")
    bp = sps.filtfilt(b, a, x)
    height = 0.30 * np.quantile(bp, 0.999)
    refractory = int(0.5 * H_MIN_DEFAULT)
    peaks, _ = sps.find_peaks(bp, height=max(height, 1e-12), distance=refractory)
    if peaks.size == 0:
        return DelineationResult(
            beats=np.zeros((0, 4)), boundaries=np.zeros(1), sample_rate=fs,
            ok=False, status="no beats detected",
        )

    # Refine on the raw trace: R is a raw local maximum near the bp peak.
    half = max(2, int(0.04 * fs))
    r_idx = []
    for pk in peaks:
        lo = max(0, pk - half)
        hi = min(len(x), pk + half + 1)
        r = lo + int(np.argmax(x[lo:hi]))
        if not r_idx or r - r_idx[-1] >= refractory:
            r_idx.append(r)
    r_idx = np.asarray(r_idx, dtype=np.int64)

    w60 = int(round(0.060 * fs))
    t_lo = int(round(0.080 * fs))
    t_hi = int(round(0.400 * fs))
    beats = np.full((r_idx.size, 4), NO_INDEX, dtype=np.int64)
    for i, r in enumerate(r_idx):
        beats[i, 1] = r
        q = _local_minimum(x, max(0, r - w60) - 1, r + 1, r, -1)
        if q != NO_INDEX and r - q <= w60:
            beats[i, 0] = q
        s = _local_minimum(x, r, min(len(x), r + w60 + 1), r, +1)
        if s != NO_INDEX and s - r <= w60:
            beats[i, 2] = s
        lo = r + t_lo
        hi = min(len(x), r + t_hi + 1)
        if lo < hi:
            beats[i, 3] = lo + int(np.argmax(x[lo:hi]))

    mids = (r_idx[:-1] + r_idx[1:]) // 2
    boundaries = np.concatenate([[max(0, 2 * r_idx[0] - mids[0]) if mids.size else 0],
                                 mids, [len(x)]])
    return DelineationResult(beats=beats, boundaries=boundaries, sample_rate=fs)


def delineation_from_truth(ecg: EcgTrace) -> DelineationResult:
    """Ground-truth delineation straight from generator annotations."""
    beats = ecg.beats[:, 1:5]   # drop P; timing metrics cover Q R S T
    r = beats[:, 1]
    mids = (r[:-1] + r[1:]) // 2
    boundaries = np.concatenate([[0], mids, [len(ecg.samples)]]) if r.size else np.zeros(1)
    return DelineationResult(beats=beats, boundaries=boundaries, sample_rate=ecg.sample_rate)


def match_beats(
    pred: DelineationResult,
    truth: DelineationResult,
    tolerance_ms: float = MATCH_TOLERANCE_MS,
) -> list[tuple[int, int]]:
    """One-to-one beat pairing by greedy minimal R distance within tolerance."""
    fs = truth.sample_rate
    tol = tolerance_ms * fs / 1000.0
    pairs = []
    pr = pred.r_indices
    tr = truth.r_indices
    cand = [
        (abs(int(p) - int(t)), ti, pi)
        for ti, t in enumerate(tr)
        for pi, p in enumerate(pr)
        if abs(int(p) - int(t)) <= tol
    ]
    cand.sort()
    used_t: set[int] = set()
    used_p: set[int] = set()
    for _, ti, pi in cand:
        if ti in used_t or pi in used_p:
            continue
        used_t.add(ti)
        used_p.add(pi)
        pairs.append((ti, pi))
    pairs.sort()
    return pairs


def _local_period(truth: DelineationResult, ti: int) -> float:
    """Truth beat period in samples (R-R ending after beat ti, fallback to previous)."""
    r = truth.r_indices
    if ti + 1 < r.size:
        return float(r[ti + 1] - r[ti])
    if ti > 0:
        return float(r[ti] - r[ti - 1])
    return float("nan")


def timing_errors(
    pred: DelineationResult,
    truth: DelineationResult,
) -> dict[str, dict[str, np.ndarray | float]]:
    """Per-event absolute (ms) and normalized (% of beat period) errors.

    Beats are paired by nearest R within 150 ms; unmatched truth beats are
    counted but excluded from the error distributions.
    """
    pairs = match_beats(pred, truth)
    if not pairs:
        raise ValueError("no matched beats")
    fs = truth.sample_rate
    out: dict[str, dict] = {}
    for col, name in enumerate(EVENTS):
        abs_ms = []
        norm_pct = []
        for ti, pi in pairs:
            t_idx = truth.beats[ti, col]
            p_idx = pred.beats[pi, col]
            if t_idx == NO_INDEX or p_idx == NO_INDEX:
                continue
            err = abs(int(p_idx) - int(t_idx)) * 1000.0 / fs
            abs_ms.append(err)
            period = _local_period(truth, ti)
            if np.isfinite(period) and period > 0:
                norm_pct.append(err / (period * 1000.0 / fs) * 100.0)
        abs_ms = np.asarray(abs_ms)
        norm_pct = np.asarray(norm_pct)
        out[name] = {
            "abs_ms": abs_ms,
            "norm_pct": norm_pct,
            "median_ms": float(np.median(abs_ms)) if abs_ms.size else float("nan"),
            "p90_ms": float(np.percentile(abs_ms, 90)) if abs_ms.size else float("nan"),
            "median_pct": float(np.median(norm_pct)) if norm_pct.size else float("nan"),
        }
    out["n_matched"] = len(pairs)
    out["n_unmatched_truth"] = truth.n_beats - len(pairs)
    return out


def morphology(
    pred: EcgTrace,
    truth: EcgTrace,
    truth_delineation: DelineationResult | None = None,
) -> dict[str, object]:
    """Per-beat Pearson correlation and RMSE over truth beat windows."""
    if len(pred.samples) != len(truth.samples):
        raise ValueError("traces must be equal length")
    if truth_delineation is None:
        truth_delineation = delineation_from_truth(truth)
    bounds = truth_delineation.boundaries.astype(int)
    corr = []
    rmse = []
    excluded = 0
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a < 2:
            excluded += 1
            continue
        xp = pred.samples[a:b]
        xt = truth.samples[a:b]
        rmse.append(float(np.sqrt(np.mean((xp - xt) ** 2))))
        if np.std(xp) < 1e-12 or np.std(xt) < 1e-12:
            excluded += 1
            continue
        corr.append(float(np.corrcoef(xp, xt)[0, 1]))
    corr = np.asarray(corr)
    rmse = np.asarray(rmse)
    return {
        "pearson": corr,
        "rmse_mv": rmse,
        "median_pearson": float(np.median(corr)) if corr.size else float("nan"),
        "median_rmse_mv": float(np.median(rmse)) if rmse.size else float("nan"),
        "p90_rmse_mv": float(np.percentile(rmse, 90)) if rmse.size else float("nan"),
        "excluded_beats": excluded,
    }


def false_monitoring_ratio(
    pred: DelineationResult,
    truth: DelineationResult,
    tolerance_ms: float = MATCH_TOLERANCE_MS,
) -> float:
    """Percent of truth beats without all four events within the tolerance."""
    if truth.n_beats == 0:
        raise ValueError("no truth beats")
    pairs = dict(match_beats(pred, truth, tolerance_ms))
    fs = truth.sample_rate
    tol = tolerance_ms * fs / 1000.0
    false_beats = 0
    for ti in range(truth.n_beats):
        pi = pairs.get(ti)
        if pi is None:
            false_beats += 1
            continue
        ok = True
        for col in range(4):
            t_idx = truth.beats[ti, col]
            p_idx = pred.beats[pi, col]
            if t_idx == NO_INDEX:
                continue
            if p_idx == NO_INDEX or abs(int(p_idx) - int(t_idx)) > tol:
                ok = False
                break
        if not ok:
            false_beats += 1
    return 100.0 * false_beats / truth.n_beats


def rr_errors(
    pred: DelineationResult,
    truth: DelineationResult,
) -> dict[str, object]:
    """R-R interval absolute errors (ms) over consecutively matched beats."""
    pairs = match_beats(pred, truth)
    if len(pairs) < 2:
        raise ValueError("need at least two matched R peaks")
    fs = truth.sample_rate
    errors = []
    buckets = {"lt100": [], "ge100": []}
    for (t0, p0), (t1, p1) in zip(pairs[:-1], pairs[1:]):
        if t1 != t0 + 1:
            continue   # only adjacent truth beats define an R-R interval
        rr_t = (truth.r_indices[t1] - truth.r_indices[t0]) * 1000.0 / fs
        rr_p = (pred.r_indices[p1] - pred.r_indices[p0]) * 1000.0 / fs
        err = abs(rr_p - rr_t)
        errors.append(err)
        bpm = 60000.0 / rr_t
        buckets["ge100" if bpm >= 100.0 else "lt100"].append(err)
    errors = np.asarray(errors)
    return {
        "abs_ms": errors,
        "median_ms": float(np.median(errors)) if errors.size else float("nan"),
        "p90_ms": float(np.percentile(errors, 90)) if errors.size else float("nan"),
        "by_rate": {
            k: {
                "median_ms": float(np.median(v)) if v else float("nan"),
                "n": len(v),
            }
            for k, v in buckets.items()
        },
    }


@dataclass
class MetricsReport:
    """Aggregate of the full evaluation protocol for one trace pair."""

    timing: dict
    morphology: dict
    false_monitoring_pct: float
    rr: dict

    def to_dict(self) -> dict:
        def clean(obj):
            if isinstance(obj, dict):
                return {k: clean(v) for k, v in obj.items()}
            if isinstance(obj, np.ndarray):
                return obj.tolist()
            if isinstance(obj, (np.floating, np.integer)):
                return obj.item()
            return obj

        return clean({
            "timing": self.timing,
            "morphology": self.morphology,
            "false_monitoring_pct": self.false_monitoring_pct,
            "rr": self.rr,
        })


def evaluate(pred: EcgTrace, truth: EcgTrace) -> MetricsReport:
    """Run the whole protocol: delineate both traces and compare."""
    truth_del = (
        delineation_from_truth(truth) if truth.beats.shape[0] else delineate(truth)
    )
    pred_del = delineate(pred)
    return MetricsReport(
        timing=timing_errors(pred_del, truth_del),
        morphology=morphology(pred, truth, truth_del),
        false_monitoring_pct=false_monitoring_ratio(pred_del, truth_del),
        rr=rr_errors(pred_del, truth_del),
    )
