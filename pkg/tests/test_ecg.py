import numpy as np
import pytest

from cardiowave.ecg import synth_ecg


def test_constant_60_bpm_beat_count_and_rr():
    trace = synth_ecg(60.0, 60.0, seed=1, jitter_sd=0.0)
    assert trace.beats.shape[0] == 60
    rr = np.diff(trace.r_indices)
    assert np.all(rr == 200)   # exactly 1.0 s at 200 Hz


def test_constant_120_bpm_beat_count():
    trace = synth_ecg(10.0, 120.0, seed=1, jitter_sd=0.0)
    assert trace.beats.shape[0] == 20


def test_ramp_rr_monotone_against_own_annotations():
    trace = synth_ecg(60.0, np.linspace(60.0, 90.0, 64), seed=7, jitter_sd=0.0)
    rr = np.diff(trace.r_indices)
    # periods shrink as the rate ramps up; indices round to the sample grid
    assert np.all(np.diff(rr) <= 1)
    assert rr[0] > rr[-1]
    # with jitter present the trend still follows its own annotation list
    jittered = synth_ecg(60.0, np.linspace(60.0, 90.0, 64), seed=7, jitter_sd=0.02)
    rrj = np.diff(jittered.r_indices) / jittered.sample_rate
    slope = np.polyfit(np.arange(rrj.size), rrj, 1)[0]
    assert slope < 0


def test_amplitude_normalized():
    trace = synth_ecg(20.0, 80.0, seed=2)
    assert np.abs(trace.samples).max() <= 1.0 + 1e-12


def test_annotation_order_within_beat():
    trace = synth_ecg(30.0, 75.0, seed=3)
    p, q, r, s, t = trace.beats.T
    present = (p >= 0) & (q >= 0) & (r >= 0) & (s >= 0) & (t >= 0)
    assert present.any()
    assert np.all(p[present] < q[present])
    assert np.all(q[present] < r[present])
    assert np.all(r[present] < s[present])
    assert np.all(s[present] < t[present])


def test_r_annotation_on_local_maximum():
    # every ground-truth R index lies on a local max within +-1 sample
    for seed, hr in [(1, 55.0), (2, 75.0), (3, 120.0)]:
        trace = synth_ecg(30.0, hr, seed=seed, jitter_sd=0.02)
        x = trace.samples
        for r in trace.r_indices:
            lo, hi = max(1, r - 1), min(len(x) - 1, r + 2)
            ok = False
            for idx in range(lo, hi):
                if x[idx] >= x[idx - 1] and x[idx] >= x[idx + 1]:
                    ok = True
            assert ok, f"R at {r} not a local max within +-1 sample"


def test_errors():
    with pytest.raises(ValueError):
        synth_ecg(0.0, 60.0)
    with pytest.raises(ValueError):
        synth_ecg(10.0, 40.0)     # below 50 BPM
    with pytest.raises(ValueError):
        synth_ecg(10.0, 130.0)    # above 125 BPM
