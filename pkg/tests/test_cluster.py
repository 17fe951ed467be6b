import itertools

import numpy as np
import pytest

from cardiowave.cluster import CardiacMeasurementSet, cluster, emit_measurements
from cardiowave.micromotion import MotionSignal


def _signal(series, location, power=1.0):
    series = np.asarray(series, dtype=float)
    return MotionSignal(location=np.asarray(location, dtype=float),
                        phase=np.zeros_like(series), acceleration=series,
                        power=power, frame_rate=200.0)


def _weighted_objective(S, L, p, assign, k, rho_s, rho_l, s_scale, l_scale):
    """Oracle objective with power-weighted centroids for a fixed assignment."""
    total = 0.0
    for ck in range(k):
        sel = assign == ck
        if not np.any(sel):
            continue
        w = p[sel]
        mu = (w[:, None] * S[sel]).sum(axis=0) / w.sum()
        ml = (w[:, None] * L[sel]).sum(axis=0) / w.sum()
        d_s = ((S[sel] - mu) ** 2).sum(axis=1) / s_scale
        d_l = ((L[sel] - ml) ** 2).sum(axis=1) / l_scale
        total += (w * (rho_s * d_s + rho_l * d_l)).sum()
    return total


def test_exact_recovery_k_distinct():
    rng = np.random.default_rng(0)
    k = 4
    signals = [
        _signal(rng.normal(size=30) + 10 * i, [0.1 * i, 0.0, 0.45], power=1.0 + i)
        for i in range(k)
    ]
    model = cluster(signals, k=k, seed=1)
    assert model.objective == pytest.approx(0.0, abs=1e-12)
    assert len(set(model.assignments.tolist())) == k


def test_two_identical_signals_single_cluster():
    series = np.sin(np.linspace(0, 5, 40))
    a = _signal(series, [0.0, 0.0, 0.4], power=1.0)
    b = _signal(series, [0.1, 0.0, 0.5], power=3.0)
    model = cluster([a, b], k=1, seed=0)
    assert np.allclose(model.centroids[0], series)
    expected_loc = (1.0 * a.location + 3.0 * b.location) / 4.0
    assert np.allclose(model.centroid_locations[0], expected_loc)


def test_power_weight_pulls_centroid():
    series0 = np.zeros(20)
    series1 = np.ones(20)
    base = cluster([_signal(series0, [0, 0, 0.4], 1.0),
                    _signal(series1, [0, 0, 0.4], 1.0)], k=1, seed=0)
    boosted = cluster([_signal(series0, [0, 0, 0.4], 1.0),
                       _signal(series1, [0, 0, 0.4], 4.0)], k=1, seed=0)
    # doubling (here 4x) one member's power moves the centroid toward it
    assert boosted.centroids[0].mean() > base.centroids[0].mean()


def test_objective_non_increasing_many_seeds():
    rng = np.random.default_rng(3)
    violations = 0
    for seed in range(30):
        signals = [
            _signal(rng.normal(size=25), rng.uniform(-0.2, 0.2, 3) + [0, 0, 0.6],
                    power=float(rng.uniform(0.5, 3.0)))
            for _ in range(20)
        ]
        model = cluster(signals, k=4, seed=seed)
        hist = model.objective_history
        violations += int(np.any(np.diff(hist) > 1e-9 * (1 + np.abs(hist[:-1]))))
    assert violations == 0


def test_brute_force_optimum_tiny_instance():
    # fixed instance where EM from farthest-point init reaches the global
    # optimum (verified over many init seeds); EM in general only promises a
    # local optimum, so the fixture pins a seed where the check is exact
    rng = np.random.default_rng(9)
    m, k = 7, 2
    signals = [
        _signal(rng.normal(size=6), rng.uniform(-0.1, 0.1, 3) + [0, 0, 0.5],
                power=float(rng.uniform(0.5, 2.0)))
        for _ in range(m)
    ]
    S = np.stack([s.acceleration for s in signals])
    L = np.stack([s.location for s in signals])
    p = np.array([s.power for s in signals])
    s_scale = max(S.shape[1] * S.var(axis=1).mean(), 1e-30)
    span = L.max(axis=0) - L.min(axis=0)
    l_scale = max(float((span ** 2).sum()), 1e-30)

    best = np.inf
    for assign in itertools.product(range(k), repeat=m):
        best = min(best, _weighted_objective(S, L, p, np.asarray(assign), k,
                                             1.0, 1.0, s_scale, l_scale))
    model = cluster(signals, k=k, seed=5)
    assert model.objective == pytest.approx(best, rel=1e-9)


def test_determinism_given_seed():
    rng = np.random.default_rng(9)
    signals = [
        _signal(rng.normal(size=15), rng.uniform(-0.2, 0.2, 3) + [0, 0, 0.5])
        for _ in range(12)
    ]
    m1 = cluster(signals, k=3, seed=7)
    m2 = cluster(signals, k=3, seed=7)
    assert np.array_equal(m1.assignments, m2.assignments)
    assert np.array_equal(m1.centroids, m2.centroids)


def test_fewer_signals_than_k_rejected():
    signals = [_signal(np.zeros(5), [0, 0, 0.5])]
    with pytest.raises(ValueError):
        cluster(signals, k=2)


def test_degenerate_identical_inputs():
    series = np.ones(10)
    signals = [_signal(series, [0.0, 0.0, 0.5]) for _ in range(5)]
    model = cluster(signals, k=3, seed=0)
    # all signals tie: assignment breaks to the lowest cluster index
    assert np.all(model.assignments == model.assignments[0])
    cs = emit_measurements(model)
    assert cs.n_entries == 3
    assert np.count_nonzero(cs.powers > 0) == 1


def test_emit_ordering_backfill_and_permutation():
    rng = np.random.default_rng(4)
    signals = [
        _signal(rng.normal(size=10), [0.05 * i, 0.0, 0.45], power=float(i + 1))
        for i in range(6)
    ]
    model = cluster(signals, k=4, seed=2)
    cs = emit_measurements(model, n_out=6, backfill_location=[0, 0, 0.475])
    assert cs.n_entries == 6
    assert np.all(np.diff(cs.powers) <= 0)           # descending power
    assert np.all(cs.motion[-2:] == 0)               # two zero backfills
    assert np.allclose(cs.locations[-1], [0, 0, 0.475])

    # permuting the model's cluster order leaves the emitted set identical
    from dataclasses import replace
    perm = rng.permutation(model.k)
    model_p = replace(
        model,
        centroids=model.centroids[perm],
        centroid_locations=model.centroid_locations[perm],
        cluster_powers=model.cluster_powers[perm],
    )
    cs_p = emit_measurements(model_p, n_out=6, backfill_location=[0, 0, 0.475])
    assert np.allclose(cs.powers, cs_p.powers)
    assert np.allclose(cs.locations, cs_p.locations)
    assert np.allclose(cs.motion, cs_p.motion)


def test_emit_pass_through_reorder():
    rng = np.random.default_rng(5)
    signals = [
        _signal(rng.normal(size=8) + 6 * i, [0.07 * i, 0.0, 0.45], power=float(3 - i))
        for i in range(3)
    ]
    model = cluster(signals, k=3, seed=0)
    cs = emit_measurements(model)
    assert cs.n_entries == 3
    assert np.all(np.diff(cs.powers) <= 0)
    assert set(np.round(cs.powers, 6)) == {1.0, 2.0, 3.0}
