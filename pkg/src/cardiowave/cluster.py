"""Spatial filtering of focused signals by constrained K-means.

Signals are clustered jointly on waveform distance and 3D location
distance; centroids and centroid locations are updated as reflected-power
weighted means, so high-SNR members dominate the merged measurement.  The
result is a fixed-size set of motion/location pairs (the 4D cardiac
measurement set handed to the domain transformation stage).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .micromotion import MotionSignal

K_DEFAULT = 50


@dataclass
class ClusterModel:
    """Converged hard-assignment clustering of motion signals."""

    assignments: np.ndarray        # (m,) cluster index per signal
    centroids: np.ndarray          # (K, L) power-weighted mean series
    centroid_locations: np.ndarray  # (K, 3)
    cluster_powers: np.ndarray     # (K,) summed member reflected power
    objective_history: np.ndarray  # weighted objective per iteration
    rho_s: float
    rho_l: float
    frame_rate: float
    converged: bool

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def objective(self) -> float:
        return float(self.objective_history[-1])


@dataclass
class CardiacMeasurementSet:
    """Exactly N motion series with locations, ordered by descending power."""

    motion: np.ndarray        # (N, L)
    locations: np.ndarray     # (N, 3)
    powers: np.ndarray        # (N,)
    frame_rate: float

    def __post_init__(self) -> None:
        if not (self.motion.shape[0] == self.locations.shape[0] == self.powers.shape[0]):
            raise ValueError("inconsistent entry counts")

    @property
    def n_entries(self) -> int:
        return self.motion.shape[0]

    @property
    def n_frames(self) -> int:
        return self.motion.shape[1]


def _joint_distances(S, L, mu, ml, rho_s, rho_l, s_scale, l_scale):
    """(m, K) matrix of rho_s*d_series + rho_l*d_location, standardized."""
    d_s = ((S[:, None, :] - mu[None, :, :]) ** 2).sum(axis=2) / s_scale
    d_l = ((L[:, None, :] - ml[None, :, :]) ** 2).sum(axis=2) / l_scale
    return rho_s * d_s + rho_l * d_l


def _farthest_point_init(dist_fn, m: int, k: int, rng: np.random.Generator):
    first = int(rng.integers(m))
    chosen = [first]
    min_d = dist_fn(first)
    for _ in range(k - 1):
        nxt = int(np.argmax(min_d))       # ties resolve to the lowest index
        chosen.append(nxt)
        min_d = np.minimum(min_d, dist_fn(nxt))
    return np.asarray(chosen)


def cluster(
    signals: list[MotionSignal],
    k: int = K_DEFAULT,
    rho_s: float = 1.0,
    rho_l: float = 1.0,
    seed: int = 0,
    max_iter: int = 100,
) -> ClusterModel:
    """Power-weighted constrained K-means via EM alternation.

    Assignment minimizes the joint standardized distance per signal; the
    update step recomputes each centroid (series and location) as the
    reflected-power weighted mean of its members.  The monitored objective
    is the power-weighted joint distance sum, which the update step
    minimizes exactly, so it is non-increasing across iterations.  Series
    distances are standardized by the mean per-signal variance and location
    distances by the squared bounding-box diagonal so rho_s = rho_l = 1 makes
    the two terms commensurable.
    """
    m = len(signals)
    if m < k:
        raise ValueError(f"need at least k={k} signals, got {m}")
    S = np.stack([s.acceleration for s in signals])
    L = np.stack([s.location for s in signals])
    p = np.array([max(s.power, 0.0) for s in signals], dtype=np.float64)
    if not np.any(p > 0):
        p = np.ones(m)
    length = S.shape[1]

    var = S.var(axis=1).mean()
    s_scale = max(length * var, 1e-30)
    span = L.max(axis=0) - L.min(axis=0)
    l_scale = max(float((span ** 2).sum()), 1e-30)

    rng = np.random.default_rng(seed)

    def dist_to(idx: int) -> np.ndarray:
        d_s = ((S - S[idx]) ** 2).sum(axis=1) / s_scale
        d_l = ((L - L[idx]) ** 2).sum(axis=1) / l_scale
        return rho_s * d_s + rho_l * d_l

    init_idx = _farthest_point_init(dist_to, m, k, rng)
    mu = S[init_idx].copy()
    ml = L[init_idx].copy()

    assignments = np.full(m, -1, dtype=np.int64)
    history: list[float] = []
    converged = False
    for _ in range(max_iter):
        d = _joint_distances(S, L, mu, ml, rho_s, rho_l, s_scale, l_scale)
        new_assign = np.argmin(d, axis=1)   # ties break to the lowest index
        j_weighted = float((p * d[np.arange(m), new_assign]).sum())
        history.append(j_weighted)
        if np.array_equal(new_assign, assignments):
            converged = True
            break
        assignments = new_assign
        for ck in range(k):
            members = assignments == ck
            wsum = p[members].sum()
            if wsum > 0:
                mu[ck] = (p[members, None] * S[members]).sum(axis=0) / wsum
                ml[ck] = (p[members, None] * L[members]).sum(axis=0) / wsum
            # empty clusters keep their previous centroid

    powers = np.array([p[assignments == ck].sum() for ck in range(k)])
    return ClusterModel(
        assignments=assignments,
        centroids=mu,
        centroid_locations=ml,
        cluster_powers=powers,
        objective_history=np.asarray(history),
        rho_s=rho_s,
        rho_l=rho_l,
        frame_rate=signals[0].frame_rate,
        converged=converged,
    )


def emit_measurements(
    model: ClusterModel,
    n_out: int | None = None,
    backfill_location=None,
) -> CardiacMeasurementSet:
    """Fixed-size measurement set ordered by descending aggregate power.

    Clusters that ended empty are replaced by zero series at the backfill
    location (grid center) with zero power, keeping the downstream tensor
    shape fixed.  Ordering is deterministic under input permutation.
    """
    k = model.k
    n_out = k if n_out is None else n_out
    if backfill_location is None:
        backfill_location = np.zeros(3)
    backfill_location = np.asarray(backfill_location, dtype=np.float64)

    occupied = np.flatnonzero(model.cluster_powers > 0)
    order = occupied[np.lexsort((
        model.centroid_locations[occupied, 2],
        model.centroid_locations[occupied, 1],
        model.centroid_locations[occupied, 0],
        -model.cluster_powers[occupied],
    ))]
    length = model.centroids.shape[1]
    motion = np.zeros((n_out, length), dtype=np.float64)
    locations = np.tile(backfill_location, (n_out, 1))
    powers = np.zeros(n_out, dtype=np.float64)
    take = min(n_out, order.size)
    motion[:take] = model.centroids[order[:take]]
    locations[:take] = model.centroid_locations[order[:take]]
    powers[:take] = model.cluster_powers[order[:take]]
    return CardiacMeasurementSet(
        motion=motion, locations=locations, powers=powers, frame_rate=model.frame_rate,
    )
