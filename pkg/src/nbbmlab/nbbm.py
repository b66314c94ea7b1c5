"""Event-driven simulation of N Brownian particles with leftmost-jump selection.

Between events every particle diffuses independently; at exponential times
of rate N - 1 the leftmost particle jumps to the position of another
particle chosen uniformly at random.  The event loop is exact in law:
each waiting time is Exponential(N - 1), positions advance by Gaussians of
variance equal to the elapsed time, and the jump acts on the state at the
event time.
"""

import json
from dataclasses import dataclass

import numpy as np

from .measures import EmpiricalMeasure, centring_stats, from_positions, recentre


@dataclass
class Event:
    time: float
    victim_index: int
    target_index: int
    displacement: float


@dataclass
class ParticleSystem:
    positions: np.ndarray
    time: float
    n_events: int
    rng: np.random.Generator
    seed: object = None

    @property
    def n(self) -> int:
        return self.positions.size

    @property
    def leftmost(self) -> float:
        return float(self.positions.min())

    @property
    def barycentre(self) -> float:
        return float(self.positions.mean())

    @property
    def median(self) -> float:
        return centring_stats(from_positions(self.positions)).median


def new_system(n: int, init="zeros", seed=None) -> ParticleSystem:
    """Fresh system at time 0.

    ``init`` is an explicit position sequence, a callable ``f(rng, n)``
    returning n positions (an iid sampler), or the string "zeros".
    """
    if n < 1:
        raise ValueError("need at least one particle")
    rng = np.random.default_rng(seed)
    if isinstance(init, str):
        if init != "zeros":
            raise ValueError(f"unknown init {init!r}")
        pos = np.zeros(n)
    elif isinstance(init, tuple) and len(init) == 2 and init[0] == "delta":
        pos = np.full(n, float(init[1]))
    elif callable(init):
        drawn = init(rng, n)
        pos = drawn.atoms.copy() if isinstance(drawn, EmpiricalMeasure) \
            else np.asarray(drawn, dtype=float).copy()
    else:
        pos = np.asarray(init, dtype=float).copy()
        if pos.size != n:
            raise ValueError("explicit positions must have length n")
    if not np.all(np.isfinite(pos)):
        raise ValueError("non-finite position")
    return ParticleSystem(positions=pos, time=0.0, n_events=0, rng=rng, seed=seed)


def _jump(positions: np.ndarray, rng: np.random.Generator) -> Event:
    """Leftmost particle (lowest index on ties) jumps onto a uniform other one."""
    victim = int(np.argmin(positions))
    j = int(rng.integers(positions.size - 1))
    target = j + 1 if j >= victim else j
    displacement = float(positions[target] - positions[victim])
    positions[victim] = positions[target]
    return Event(time=0.0, victim_index=victim, target_index=target,
                 displacement=displacement)


def step_event(ps: ParticleSystem) -> Event:
    """Advance to the next selection event and perform the jump."""
    if ps.n < 2:
        raise ValueError("no selection events")
    dt = ps.rng.exponential(1.0 / (ps.n - 1))
    ps.positions += ps.rng.standard_normal(ps.n) * np.sqrt(dt)
    ev = _jump(ps.positions, ps.rng)
    ps.time += dt
    ps.n_events += 1
    ev.time = ps.time
    return ev


def advance_to(ps: ParticleSystem, t_end: float) -> None:
    """Run events up to t_end, then diffuse over the final partial interval."""
    if t_end < ps.time:
        raise ValueError("t_end before current time")
    n = ps.n
    if n == 1:
        if t_end > ps.time:
            ps.positions += ps.rng.standard_normal(1) * np.sqrt(t_end - ps.time)
            ps.time = t_end
        return
    rate = 1.0 / (n - 1)
    while True:
        dt = ps.rng.exponential(rate)
        if ps.time + dt > t_end:
            rem = t_end - ps.time
            if rem > 0.0:
                ps.positions += ps.rng.standard_normal(n) * np.sqrt(rem)
            ps.time = t_end
            return
        ps.positions += ps.rng.standard_normal(n) * np.sqrt(dt)
        _jump(ps.positions, ps.rng)
        ps.time += dt
        ps.n_events += 1


def snapshot(ps: ParticleSystem, centring: str = "none") -> EmpiricalMeasure:
    """Empirical measure of the current positions, optionally recentred."""
    mu = from_positions(ps.positions)
    if centring == "none":
        return mu
    return recentre(mu, centring)


def log_trajectory(ps: ParticleSystem, t_end: float, interval: float, path) -> None:
    """Advance to t_end writing CSV rows (time, L, A, M, n_events) every interval."""
    with open(path, "w") as fh:
        fh.write("time,L,A,M,n_events\n")
        _write_row(fh, ps)
        while ps.time < t_end:
            advance_to(ps, min(ps.time + interval, t_end))
            _write_row(fh, ps)


def _write_row(fh, ps: ParticleSystem) -> None:
    fh.write(f"{ps.time!r},{ps.leftmost!r},{ps.median!r},"
             f"{ps.barycentre!r},{ps.n_events}\n")


def checkpoint(ps: ParticleSystem) -> dict:
    """Full-state dict; restoring reproduces the run bit-exactly."""
    return {
        "seed": ps.seed,
        "time": ps.time,
        "n_events": ps.n_events,
        "positions": [float(x) for x in ps.positions],
        "rng_state": ps.rng.bit_generator.state,
    }


def save_checkpoint(ps: ParticleSystem, path) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint(ps), fh, sort_keys=True)


def from_checkpoint(state) -> ParticleSystem:
    if not isinstance(state, dict):
        with open(state) as fh:
            state = json.load(fh)
    rng = np.random.default_rng()
    rng.bit_generator.state = state["rng_state"]
    return ParticleSystem(
        positions=np.asarray(state["positions"], dtype=float),
        time=float(state["time"]),
        n_events=int(state["n_events"]),
        rng=rng,
        seed=state.get("seed"),
    )
