"""Cardiac signal focusing by periodicity-based pattern matching.

A candidate template is slid over the signal with dynamic time warping;
a DP over window start indices picks the best overlapping segmentation
under the physiologic period bounds [h_min, h_max]; consecutive starts
reform non-overlapping beat segments; linear time warping resamples them
to a common length whose pointwise mean is the updated template; the final
matching score is the mean DTW distance between that template and the
segments.  Low scores mark cardiac-like voxels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .micromotion import MotionSignal

H_MIN_DEFAULT = 100
H_MAX_DEFAULT = 200


@njit(cache=True)
def _dtw_core(s: np.ndarray, t: np.ndarray, band: int) -> float:
    """Squared-difference DTW cost via rolling-row DP.  band < 0 = unbanded."""
    n = s.shape[0]
    m = t.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for j in range(m):
        prev[j] = np.inf
        cur[j] = np.inf
    for i in range(n):
        lo = 0
        hi = m - 1
        if band >= 0:
            center = i * (m - 1.0) / (n - 1.0) if n > 1 else 0.0
            lo = max(0, int(np.ceil(center - band)))
            hi = min(m - 1, int(np.floor(center + band)))
            # stale cells just outside the band must read as unreachable
            f0 = lo - 1 if lo > 0 else 0
            for j in range(f0, hi + 1):
                cur[j] = np.inf
        si = s[i]
        left = np.inf   # cur[j - 1]
        for j in range(lo, hi + 1):
            d = si - t[j]
            d = d * d
            if i == 0 and j == 0:
                v = d
            else:
                best = left
                pj = prev[j]
                if pj < best:
                    best = pj
                if j > 0:
                    pd = prev[j - 1]
                    if pd < best:
                        best = pd
                v = d + best
            cur[j] = v
            left = v
        tmp = prev
        prev = cur
        cur = tmp
    return prev[m - 1]


@njit(parallel=True, cache=True)
def _window_costs(x: np.ndarray, tmpl: np.ndarray, h_max: int, band: int) -> np.ndarray:
    n_starts = x.shape[0] - h_max + 1
    out = np.empty(n_starts)
    for tau in prange(n_starts):
        out[tau] = _dtw_core(x[tau:tau + h_max], tmpl, band)
    return out


@njit(cache=True)
def _segment_dp(cost: np.ndarray, h_min: int, h_max: int):
    """Min-cost start chain: first start in [0, h_max), consecutive gaps in
    [h_min, h_max], last start in the final h_max feasible positions, >= 2
    starts.  Returns (objective, starts)."""
    n_starts = cost.shape[0]
    INF = np.inf
    f = np.full(n_starts, INF)        # best chain (len >= 1) ending at tau
    f2 = np.full(n_starts, INF)       # best chain (len >= 2) ending at tau
    pred = np.full(n_starts, -1, np.int64)
    for tau in range(n_starts):
        best_p = INF
        arg_p = -1
        lo = tau - h_max
        hi = tau - h_min
        if hi >= 0:
            if lo < 0:
                lo = 0
            for tp in range(lo, hi + 1):
                if f[tp] < best_p:
                    best_p = f[tp]
                    arg_p = tp
        if arg_p >= 0:
            f2[tau] = cost[tau] + best_p
        if tau < h_max:
            f[tau] = cost[tau]        # chain may start here; costs >= 0 so
            pred[tau] = -1            # the single-element chain is minimal
        if arg_p >= 0 and cost[tau] + best_p <= f[tau]:
            f[tau] = cost[tau] + best_p    # ties prefer the longer chain
            pred[tau] = arg_p
    zone_lo = n_starts - h_max
    if zone_lo < 0:
        zone_lo = 0
    best = INF
    end = -1
    for tau in range(zone_lo, n_starts):
        if f2[tau] < best:
            best = f2[tau]
            end = tau
    if end < 0:
        return INF, np.empty(0, np.int64)
    # Backtrack: the final hop is the f2 predecessor, then follow f's links.
    chain = np.empty(n_starts, np.int64)
    k = 0
    lo = end - h_max
    hi = end - h_min
    if lo < 0:
        lo = 0
    best_p = INF
    arg_p = -1
    for tp in range(lo, hi + 1):
        if f[tp] < best_p:
            best_p = f[tp]
            arg_p = tp
    chain[k] = end
    k += 1
    tau = arg_p
    while tau >= 0:
        chain[k] = tau
        k += 1
        tau = pred[tau]
    out = np.empty(k, np.int64)
    for i in range(k):
        out[i] = chain[k - 1 - i]
    return best, out


@njit(cache=True)
def _segment_bruteforce(cost: np.ndarray, h_min: int, h_max: int) -> float:
    """Plain enumeration of every feasible start chain (oracle; no pruning)."""
    n_starts = cost.shape[0]
    zone_lo = n_starts - h_max
    if zone_lo < 0:
        zone_lo = 0
    best = np.inf
    cap = 8192
    stack_pos = np.empty(cap, np.int64)
    stack_acc = np.empty(cap, np.float64)
    first_hi = h_max if h_max < n_starts else n_starts
    for t1 in range(first_hi):
        top = 0
        stack_pos[top] = t1
        stack_acc[top] = cost[t1]
        top += 1
        while top > 0:
            top -= 1
            tau = stack_pos[top]
            acc = stack_acc[top]
            g_hi = h_max
            if tau + g_hi > n_starts - 1:
                g_hi = n_starts - 1 - tau
            for g in range(h_min, g_hi + 1):
                t2 = tau + g
                a2 = acc + cost[t2]
                if t2 >= zone_lo and a2 < best:
                    best = a2
                stack_pos[top] = t2
                stack_acc[top] = a2
                top += 1
    return best


def dtw_distance(s, t, band: int | None = None) -> float:
    """DTW cost: min over warp paths of the summed squared differences.

    Paths run from (0, 0) to (n-1, m-1) with steps down/right/diagonal.
    ``band`` restricts |i - j| (scaled to the diagonal) for speed; None is
    the exact unconstrained distance.
    """
    s = np.ascontiguousarray(s, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    if s.size == 0 or t.size == 0:
        raise ValueError("DTW inputs must be nonempty")
    b = -1 if band is None else int(band)
    if b == 0:
        b = 1
    return float(_dtw_core(s, t, b))


def coarse_templates(signal: np.ndarray, h_max: int = H_MAX_DEFAULT) -> np.ndarray:
    """Non-overlapping h_max-length windows used as template candidates."""
    signal = np.asarray(signal, dtype=np.float64)
    n_cand = signal.shape[0] // h_max
    if n_cand < 1:
        raise ValueError(f"signal shorter than h_max ({signal.shape[0]} < {h_max})")
    return signal[: n_cand * h_max].reshape(n_cand, h_max).copy()


def best_overlap_segmentation(
    signal: np.ndarray,
    template: np.ndarray,
    h_min: int = H_MIN_DEFAULT,
    h_max: int = H_MAX_DEFAULT,
    band: int | None = None,
    costs: np.ndarray | None = None,
) -> np.ndarray:
    """Start indices of the min-cost overlapping segmentation for a template.

    Minimizes the summed DTW distances of h_max-length windows subject to
    consecutive start gaps in [h_min, h_max]; the chain begins within the
    first h_max positions and ends within the last h_max feasible positions
    (at most one max-period of uncovered slack at each boundary).
    """
    signal = np.ascontiguousarray(signal, dtype=np.float64)
    if signal.shape[0] < 2 * h_max:
        raise ValueError("signal too short to place two segment starts")
    if not h_min <= h_max:
        raise ValueError("h_min must be <= h_max")
    b = -1 if band is None else max(1, int(band))
    if costs is None:
        costs = _window_costs(signal, np.ascontiguousarray(template, dtype=np.float64), h_max, b)
    obj, starts = _segment_dp(costs, h_min, h_max)
    if starts.size < 2:
        raise ValueError("no feasible start chain")
    return starts


def reform_segments(starts: np.ndarray) -> list[tuple[int, int]]:
    """Non-overlapping segments [tau_i, tau_{i+1}) from consecutive starts."""
    starts = np.asarray(starts)
    if starts.size < 2:
        raise ValueError("need at least two starts")
    return [(int(a), int(b)) for a, b in zip(starts[:-1], starts[1:])]


def linear_time_warp(segment: np.ndarray, length: int) -> np.ndarray:
    """Linearly resample a segment to a fixed length."""
    segment = np.asarray(segment, dtype=np.float64)
    if segment.shape[0] < 2:
        raise ValueError("segment too short to resample")
    pos = np.linspace(0.0, segment.shape[0] - 1.0, length)
    return np.interp(pos, np.arange(segment.shape[0]), segment)


def update_template(segments: list[np.ndarray], h_max: int = H_MAX_DEFAULT) -> np.ndarray:
    """Pointwise mean of the segments after resampling each to h_max."""
    if len(segments) < 1:
        raise ValueError("need at least one segment")
    resampled = np.stack([linear_time_warp(np.asarray(s), h_max) for s in segments])
    return resampled.mean(axis=0)


@dataclass
class SegmentationResult:
    """Best segmentation of one signal for its winning coarse template."""

    overlap_starts: np.ndarray            # start indices of h_max windows
    segments: list[tuple[int, int]]       # final non-overlapping [a, b)
    template: np.ndarray                  # updated template, length h_max
    score: float                          # per-sample normalized (Eq. 11 / |seg|)
    raw_score: float                      # unnormalized mean segment DTW
    candidate: int = 0                    # winning coarse-candidate index
    h_min: int = H_MIN_DEFAULT
    h_max: int = H_MAX_DEFAULT

    def periods(self) -> np.ndarray:
        """Consecutive start spacings (frames) -- the recovered beat periods."""
        return np.diff(self.overlap_starts)


def _score_segmentation(signal, starts, h_max, band_val) -> tuple[float, float, SegmentationResult]:
    seg_bounds = reform_segments(starts)
    segs = [signal[a:b] for a, b in seg_bounds]
    template = update_template(segs, h_max)
    raw = 0.0
    norm = 0.0
    for seg in segs:
        d = _dtw_core(np.ascontiguousarray(seg), template, band_val)
        raw += d
        norm += d / seg.shape[0]
    raw /= len(segs)
    norm /= len(segs)
    return norm, raw, SegmentationResult(
        overlap_starts=np.asarray(starts),
        segments=seg_bounds,
        template=template,
        score=norm,
        raw_score=raw,
        h_max=h_max,
    )


def matching_score(
    signal: np.ndarray,
    h_min: int = H_MIN_DEFAULT,
    h_max: int = H_MAX_DEFAULT,
    band: int | None = None,
    candidate_limit: int | None = None,
) -> tuple[float, SegmentationResult]:
    """Periodicity matching score (lower = more cardiac-like).

    For each coarse candidate the best overlapping segmentation is solved,
    segments reformed and the template updated; the candidate whose updated
    template gives the lowest mean per-sample DTW distance wins.  Scores are
    normalized per sample so signals of different lengths are comparable;
    the unnormalized mean is kept in the result.

    ``candidate_limit`` caps the number of coarse candidates scored (taken
    from the front of the signal) for long inputs; None scores all.
    """
    signal = np.ascontiguousarray(signal, dtype=np.float64)
    if signal.shape[0] < 2 * h_max:
        raise ValueError("signal too short for matching")
    candidates = coarse_templates(signal, h_max)
    if candidate_limit is not None:
        candidates = candidates[:candidate_limit]
    b = -1 if band is None else max(1, int(band))
    best: SegmentationResult | None = None
    for ci, cand in enumerate(candidates):
        costs = _window_costs(signal, np.ascontiguousarray(cand), h_max, b)
        obj, starts = _segment_dp(costs, h_min, h_max)
        if starts.size < 2:
            continue
        norm, raw, result = _score_segmentation(signal, starts, h_max, b)
        result.candidate = ci
        result.h_min = h_min
        if best is None or norm < best.score:
            best = result
    if best is None:
        raise ValueError("no feasible segmentation for any candidate")
    return best.score, best


@dataclass
class FocusResult:
    """Focused signal subset with scores; empty result is an explicit status."""

    retained: list[MotionSignal]
    segmentations: list[SegmentationResult]
    scores: np.ndarray                    # normalized score per input signal
    raw_scores: np.ndarray
    threshold: float
    retained_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def empty(self) -> bool:
        return len(self.retained) == 0


def focus_voxels(
    signals: list[MotionSignal],
    thr_f: float | None = None,
    h_min: int = H_MIN_DEFAULT,
    h_max: int = H_MAX_DEFAULT,
    band: int | None = None,
    scoring_window: int | None = None,
    candidate_limit: int | None = None,
) -> FocusResult:
    """Retain signals whose matching score is below the threshold.

    Scores are computed on the amplified (acceleration) series.  When
    ``thr_f`` is None the threshold defaults to the median score, retaining
    the lower-scoring half.  ``scoring_window`` clips the series used for
    scoring (the retained signals keep their full series); it must be at
    least 4*h_max, otherwise a start chain can degenerate to a single
    identity-resampled segment that scores 0 regardless of content.  An all-rejected outcome
    is a valid result flagged via ``FocusResult.empty``.
    """
    if len(signals) == 0:
        raise ValueError("no signals to focus")
    scores = np.empty(len(signals))
    raws = np.empty(len(signals))
    segmentations: list[SegmentationResult | None] = []
    for i, sig in enumerate(signals):
        series = sig.acceleration
        if scoring_window is not None:
            series = series[:scoring_window]
        try:
            score, seg = matching_score(
                series, h_min=h_min, h_max=h_max, band=band,
                candidate_limit=candidate_limit,
            )
        except ValueError:
            score, seg = np.inf, None
        scores[i] = score
        raws[i] = seg.raw_score if seg is not None else np.inf
        segmentations.append(seg)
    if thr_f is None:
        finite = scores[np.isfinite(scores)]
        threshold = float(np.median(finite)) if finite.size else np.nan
    else:
        threshold = float(thr_f)
    keep = np.flatnonzero(scores < threshold)
    return FocusResult(
        retained=[signals[i] for i in keep],
        segmentations=[segmentations[i] for i in keep],
        scores=scores,
        raw_scores=raws,
        threshold=threshold,
        retained_indices=keep,
    )
