"""Long-run estimation: stationary ensembles, velocity, ergodic identities.

The recentred particle system mixes geometrically, so one long trajectory
is burned in and then sampled at unit spacing; samples are treated as
correlated and every standard error goes through batch means.  The
asymptotic velocity is measured as a displacement quotient of the leftmost
particle, and the selection gap as the W1 distance between recentred
snapshots and the minimal wave.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import waves
from ._parallel import map_ordered
from .measures import TailCdf, gap_mean, w1_to_analytic
from .nbbm import advance_to, new_system, snapshot

SQRT2 = math.sqrt(2.0)


def default_burn_in(n: int) -> float:
    """max(50, 10 ln^2 N): scales like the front relaxation time."""
    return max(50.0, 10.0 * math.log(max(n, 2)) ** 2)


def batch_means_se(x, n_batches: int = 20) -> float:
    """Standard error of a correlated series via batch means."""
    x = np.asarray(x, dtype=float)
    b = min(n_batches, max(2, x.size // 4))
    usable = (x.size // b) * b
    means = x[:usable].reshape(b, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(b))


def _resolve_init(init):
    if init == "pimin":
        return waves.sample_pi_min
    return init


@dataclass
class StationaryEnsemble:
    snapshots: list
    centring: str
    mean_profile: TailCdf
    n: int
    burn_in: float
    horizon: float
    delta_sample: float
    seed: object = None

    def snapshot_maxima(self) -> np.ndarray:
        return np.asarray([float(s.atoms[-1]) for s in self.snapshots])

    def mean_profile_first_moment(self) -> float:
        """E[X] = int_0^inf U(x) dx for the leftmost-centred mean profile."""
        return float(self.mean_profile.tail_integral(0.0))


def estimate_stationary(n: int, burn_in: float = None, horizon: float = None,
                        delta_sample: float = 1.0, centring: str = "leftmost",
                        seed=None, init="zeros",
                        grid_dx: float = 0.02) -> StationaryEnsemble:
    """One long trajectory, recentred snapshots after burn-in, mean tail."""
    if centring not in ("leftmost", "median"):
        raise ValueError(f"unknown centring mode {centring!r}")
    burn_in = default_burn_in(n) if burn_in is None else float(burn_in)
    horizon = burn_in + 200.0 if horizon is None else float(horizon)
    if horizon <= burn_in:
        raise ValueError("horizon must exceed burn-in")
    ps = new_system(n, _resolve_init(init), seed=seed)
    advance_to(ps, burn_in)
    count = int(math.floor((horizon - burn_in) / delta_sample))
    snaps = []
    for k in range(1, count + 1):
        advance_to(ps, burn_in + k * delta_sample)
        snaps.append(snapshot(ps, centring))
    lo = min(float(s.atoms[0]) for s in snaps)
    hi = max(float(s.atoms[-1]) for s in snaps)
    grid = np.arange(lo - grid_dx, hi + 2 * grid_dx, grid_dx)
    vals = np.zeros_like(grid)
    for s in snaps:
        vals += s.tail(grid)
    vals /= len(snaps)
    vals[0] = 1.0
    vals[-1] = 0.0
    profile = TailCdf(grid, vals)
    return StationaryEnsemble(snapshots=snaps, centring=centring,
                              mean_profile=profile, n=n, burn_in=burn_in,
                              horizon=horizon, delta_sample=delta_sample,
                              seed=seed)


@dataclass
class VelocityEstimate:
    v_hat: float
    std_error: float
    n_replicas: int
    horizon: float
    per_replica: np.ndarray = field(default=None, repr=False)


def _velocity_replica(args):
    n, burn_in, horizon, init, seed = args
    ps = new_system(n, _resolve_init(init), seed=seed)
    advance_to(ps, burn_in)
    l0 = ps.leftmost
    advance_to(ps, horizon)
    return (ps.leftmost - l0) / (horizon - burn_in)


def estimate_velocity(n: int, horizon: float, n_replicas: int, seed=None,
                      burn_in: float = 20.0, init="pimin") -> VelocityEstimate:
    """Displacement quotient of the leftmost particle over replicas.

    Starts from iid minimal-wave positions by default so a short burn-in
    suffices; the almost-sure limit does not depend on the start.
    """
    if n < 2:
        raise ValueError("velocity needs at least two particles")
    if horizon <= burn_in:
        raise ValueError("horizon must exceed burn-in")
    seeds = np.random.SeedSequence(seed).spawn(n_replicas)
    slopes = np.asarray(map_ordered(
        _velocity_replica,
        [(n, burn_in, horizon, init, s) for s in seeds]))
    se = slopes.std(ddof=1) / math.sqrt(n_replicas) if n_replicas > 1 else 0.0
    return VelocityEstimate(v_hat=float(slopes.mean()), std_error=float(se),
                            n_replicas=n_replicas, horizon=horizon,
                            per_replica=slopes)


@dataclass
class BirkhoffReport:
    time_avg_b: float
    v_hat: float
    discrepancy: float
    se_b: float
    se_v: float
    n: int
    horizon: float
    v_hat_barycentre: float = 0.0

    @property
    def combined_se(self) -> float:
        return math.hypot(self.se_b, self.se_v)

    @property
    def ok(self) -> bool:
        return self.discrepancy <= 3.0 * self.combined_se or self.combined_se == 0.0


def birkhoff_identity_check(n: int, horizon: float, seed=None,
                            burn_in: float = None, init="pimin") -> BirkhoffReport:
    """Time average of the recentred mean against the velocity estimate.

    Both are ergodic averages of the same stationary quantity, so they
    must agree within sampling error.  N = 1 is degenerate: no selection,
    zero mean gap and zero almost-sure velocity.
    """
    if n == 1:
        return BirkhoffReport(0.0, 0.0, 0.0, 0.0, 0.0, n=1, horizon=horizon)
    burn_in = min(default_burn_in(n), horizon / 4.0) if burn_in is None else burn_in
    if horizon <= burn_in:
        raise ValueError("horizon must exceed burn-in")
    ps = new_system(n, _resolve_init(init), seed=seed)
    advance_to(ps, burn_in)
    b_samples = []
    dl_samples = []
    dm_samples = []
    t = burn_in
    while t < horizon - 1e-9:
        l_prev, m_prev = ps.leftmost, ps.barycentre
        t += 1.0
        advance_to(ps, t)
        b_samples.append(gap_mean(ps.positions - ps.leftmost))
        dl_samples.append(ps.leftmost - l_prev)
        dm_samples.append(ps.barycentre - m_prev)
    b_arr = np.asarray(b_samples)
    dl_arr = np.asarray(dl_samples)
    dm_arr = np.asarray(dm_samples)
    v_hat = float(dl_arr.mean())
    return BirkhoffReport(
        time_avg_b=float(b_arr.mean()),
        v_hat=v_hat,
        discrepancy=abs(float(b_arr.mean()) - v_hat),
        se_b=batch_means_se(b_arr),
        se_v=batch_means_se(dl_arr),
        n=n, horizon=horizon,
        v_hat_barycentre=float(dm_arr.mean()),
    )


def selection_gap(ensemble: StationaryEnsemble) -> float:
    """Mean W1 between leftmost-centred snapshots and the minimal wave."""
    mean, _ = selection_gap_report(ensemble)
    return mean


def selection_gap_report(ensemble: StationaryEnsemble):
    """(mean, batch-means SE) of the per-snapshot selection gaps."""
    gaps = snapshot_gaps(ensemble)
    return float(gaps.mean()), batch_means_se(gaps)


def snapshot_gaps(ensemble: StationaryEnsemble) -> np.ndarray:
    if ensemble.centring == "leftmost":
        ref = waves.MINIMAL_WAVE
    elif ensemble.centring == "median":
        ref = waves.MINIMAL_WAVE.median_centred_tail()
    else:
        raise ValueError("ensemble centring must be leftmost or median")
    return np.asarray([w1_to_analytic(s, ref) for s in ensemble.snapshots])


def iid_gap_floor(n: int, n_samples: int, seed=None):
    """Selection gap of exact iid minimal-wave samples: the sampling floor."""
    rng = np.random.default_rng(seed)
    gaps = [w1_to_analytic(waves.sample_pi_min(rng, n), waves.MINIMAL_WAVE)
            for _ in range(n_samples)]
    arr = np.asarray(gaps)
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(n_samples))


def fit_log_correction(ns, v_hats) -> float:
    """Least-squares a in v(N) = sqrt(2) - a / ln^2 N."""
    x = 1.0 / np.log(np.asarray(ns, dtype=float)) ** 2
    y = SQRT2 - np.asarray(v_hats, dtype=float)
    return float(np.dot(x, y) / np.dot(x, x))
