"""Free-boundary PDE solver: diffusion + growth with the left-mass cut.

Density form: u_t = u_xx / 2 + u right of a boundary L_t, u(L_t) = 0, and
unit mass right of L_t.  Each step splits into (i) Crank-Nicolson
half-diffusion with absorbing far field, (ii) exact growth e^{dt},
(iii) a cut that relocates the boundary where the mass to its right is
exactly 1 and zeroes the density left of it.  The boundary is read off
inside the cut cell from the piecewise-linear density, so it is resolved
below grid spacing.

Integrated (tail) form: either accumulate tails of the density solve, or
run the penalised reaction-diffusion U_t = U_xx / 2 + U - U^n whose large-n
limit is the same free-boundary flow; the reaction substep uses the exact
Bernoulli solution, so it is stable and keeps U in [0, 1].

Point-mass initial data are warm-started with the exact heat kernel over a
few steps' worth of time; Crank-Nicolson would otherwise ring on the spike.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import waves
from .measures import EmpiricalMeasure, TailCdf, from_positions, quantile

SQRT2 = math.sqrt(2.0)
MASS_TOL = 1e-6
WINDOW_TAIL_TOL = 1e-10


@dataclass
class FlowParams:
    dx: float = 0.01
    dt: float = 5e-4
    x_window: float = 40.0
    n_penalty: int = 64
    scheme: str = "split_cut"   # or "penalised"

    def __post_init__(self):
        if self.dx <= 0 or self.dt <= 0 or self.x_window <= 0:
            raise ValueError("grid parameters must be positive")
        if self.dt > self.dx:
            raise ValueError("dt exceeds dt_max(dx) for the splitting scheme")
        if self.scheme not in ("split_cut", "penalised"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "penalised" and self.n_penalty < 2:
            raise ValueError("n_penalty must be at least 2")

    @property
    def tol_stretch(self) -> float:
        return 2.0 * self.dx


@dataclass
class Profile:
    """Density values on a uniform grid with a sub-cell boundary position.

    Nodes more than one cell left of the boundary are zero; the node just
    left of it carries the partial-cell value that makes the trapezoidal
    mass exactly 1.
    """

    grid: np.ndarray
    u: np.ndarray
    boundary: float
    t: float

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def mass(self) -> float:
        return float(np.trapezoid(self.u, self.grid))

    def tail(self) -> TailCdf:
        seg = 0.5 * (self.u[1:] + self.u[:-1]) * np.diff(self.grid)
        vals = np.concatenate((np.cumsum(seg[::-1])[::-1], [0.0]))
        vals = np.clip(vals, 0.0, None)
        vals /= vals[0]
        return TailCdf(self.grid, vals, validate=False)

    def median(self) -> float:
        return quantile(self.tail(), 0.5)

    def quantile_measure(self, k: int) -> EmpiricalMeasure:
        """k atoms at the (j - 1/2)/k quantiles of the profile."""
        levels = 1.0 - (np.arange(k) + 0.5) / k
        return from_positions(quantile(self.tail(), levels))

    def shifted(self, c: float) -> "Profile":
        return Profile(self.grid + c, self.u.copy(), self.boundary + c, self.t)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,u\n")
            for g, v in zip(self.grid, self.u):
                fh.write(f"{float(g)!r},{float(v)!r}\n")


@dataclass
class Trajectory:
    profiles: list
    times: np.ndarray      # one entry per step
    boundary: np.ndarray   # L at those times
    params: FlowParams

    @property
    def final(self) -> Profile:
        return self.profiles[-1]

    def boundary_at(self, t) -> float:
        return float(np.interp(t, self.times, self.boundary))


@dataclass
class CdfTrajectory:
    tails: list
    tail_times: np.ndarray
    times: np.ndarray
    boundary: np.ndarray
    params: FlowParams

    @property
    def final(self) -> TailCdf:
        return self.tails[-1]


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------

def make_initial(spec, params: FlowParams):
    """Normalise an initial-condition spec.

    Accepts a Profile, a TailCdf, a TravellingWave, ("delta", a),
    ("exp", lam), or the strings "heaviside" / "delta" / "pimin" /
    "pic:<c>" / "exp:<lam>".  Returns a Profile, or ("delta", a) which the
    stepper warm-starts itself.
    """
    if isinstance(spec, Profile):
        return Profile(spec.grid.copy(), spec.u.copy(), spec.boundary, 0.0)
    if isinstance(spec, str):
        if spec in ("heaviside", "delta"):
            return ("delta", 0.0)
        if spec == "pimin":
            return _wave_profile(waves.MINIMAL_WAVE, params)
        if spec.startswith("pic:"):
            return _wave_profile(waves.travelling_wave(float(spec[4:])), params)
        if spec.startswith("exp:"):
            return _exp_profile(float(spec[4:]), params)
        raise ValueError(f"unknown initial condition {spec!r}")
    if isinstance(spec, tuple):
        kind = spec[0]
        if kind == "delta":
            return ("delta", float(spec[1]))
        if kind == "exp":
            return _exp_profile(float(spec[1]), params)
        raise ValueError(f"unknown initial condition {spec!r}")
    if isinstance(spec, waves.TravellingWave):
        return _wave_profile(spec, params)
    if isinstance(spec, TailCdf):
        return _profile_from_tail(spec, params)
    raise ValueError(f"unknown initial condition {spec!r}")


def _window_grid(left: float, params: FlowParams) -> np.ndarray:
    n = int(round(params.x_window / params.dx)) + 1
    return left + params.dx * np.arange(n)


def _check_window_tail(tail_at_right: float):
    if tail_at_right > WINDOW_TAIL_TOL:
        raise ValueError("x_window too small for the initial right tail")


def _wave_profile(wave, params: FlowParams) -> Profile:
    grid = _window_grid(-max(2.0, 0.1 * params.x_window), params)
    _check_window_tail(wave.tail(grid[-1]))
    u = wave.density(grid)
    u /= np.trapezoid(u, grid)
    return Profile(grid, u, 0.0, 0.0)


def _exp_profile(lam: float, params: FlowParams) -> Profile:
    if lam <= 0:
        raise ValueError("tail rate must be positive")
    grid = _window_grid(-max(2.0, 0.1 * params.x_window), params)
    _check_window_tail(math.exp(-lam * grid[-1]))
    u = np.where(grid > 0, lam * np.exp(-lam * np.maximum(grid, 0.0)), 0.0)
    u /= np.trapezoid(u, grid)
    return Profile(grid, u, 0.0, 0.0)


def _profile_from_tail(u0: TailCdf, params: FlowParams) -> Profile:
    jump = 1.0 - float(u0.values[1])
    if jump > 0.5:
        # a full jump at the left edge is a point mass
        return ("delta", float(u0.grid[0]))
    left = float(quantile(u0, 1.0))  # anchor at the boundary, not the grid edge
    grid = _window_grid(left - max(1.0, 0.05 * params.x_window), params)
    _check_window_tail(float(u0.value(grid[-1])))
    vals = np.asarray(u0.value(grid))
    u = np.zeros_like(grid)
    u[1:-1] = (vals[:-2] - vals[2:]) / (2.0 * params.dx)
    u = np.clip(u, 0.0, None)
    u /= np.trapezoid(u, grid)
    return Profile(grid, u, left, 0.0)


def step_tail(grid, x0: float = 0.0) -> TailCdf:
    """Heaviside-type tail: 1 strictly left of x0, 0 from x0 on."""
    grid = np.asarray(grid, dtype=float)
    return TailCdf(grid, np.where(grid < x0, 1.0, 0.0))


def exp_tail(grid, lam: float, centre: float = 0.0) -> TailCdf:
    grid = np.asarray(grid, dtype=float)
    vals = np.minimum(1.0, np.exp(-lam * (grid - centre)))
    vals[-1] = 0.0 if vals[-1] < 1e-8 else vals[-1]
    return TailCdf(grid, vals)


def wave_tail_on_grid(wave, grid) -> TailCdf:
    grid = np.asarray(grid, dtype=float)
    vals = np.asarray(wave.tail(grid))
    return TailCdf(grid, np.where(vals < 1e-12, 0.0, vals))


def dilate_tail(u0: TailCdf, factor: float) -> TailCdf:
    """U(x / factor) on a stretched grid; factor > 1 is more stretched."""
    return TailCdf(u0.grid * factor, u0.values.copy())


# ---------------------------------------------------------------------------
# Crank-Nicolson machinery
# ---------------------------------------------------------------------------

class _CrankNicolson:
    """Tridiagonal CN step for v_t = v_xx / 2 with Dirichlet ends."""

    def __init__(self, n: int, dx: float, dt: float, left_value: float = 0.0):
        r = dt / (4.0 * dx * dx)
        self.n = n
        self.r = r
        self.left_value = left_value
        ab = np.zeros((3, n))
        ab[0, 1:] = -r
        ab[1, :] = 1.0 + 2.0 * r
        ab[2, :-1] = -r
        ab[1, 0] = ab[1, -1] = 1.0
        ab[0, 1] = ab[2, -2] = 0.0
        self._ab = ab

    def step(self, v: np.ndarray) -> np.ndarray:
        r = self.r
        rhs = v.copy()
        rhs[1:-1] = v[1:-1] + r * (v[:-2] - 2.0 * v[1:-1] + v[2:])
        rhs[0] = self.left_value
        rhs[-1] = 0.0
        return solve_banded((1, 1), self._ab, rhs)


def _cut_left_mass(grid: np.ndarray, u: np.ndarray, dx: float):
    """Zero the density left of the point where mass to the right equals 1.

    Returns the adjusted density and the sub-cell boundary.  The node just
    left of the boundary keeps the partial-cell value that makes the
    trapezoidal mass exactly 1.
    """
    seg = 0.5 * (u[1:] + u[:-1]) * dx
    tail = np.concatenate((np.cumsum(seg[::-1])[::-1], [0.0]))
    if tail[0] < 1.0 - 1e-9:
        raise ArithmeticError("scheme blowup")
    if tail[0] < 1.0:  # round-off shy of 1: rescale within the guard
        u = u / tail[0]
        tail = tail / tail[0]
    j = int(np.flatnonzero(tail >= 1.0)[-1])
    if j == u.size - 1:
        raise ArithmeticError("scheme blowup")
    # boundary inside cell [g_j, g_{j+1}]: with linear u the tail is
    # quadratic in the distance s back from g_{j+1}
    a = 0.5 * (u[j] - u[j + 1]) / dx
    b = u[j + 1]
    c = tail[j + 1] - 1.0
    if abs(a) < 1e-14 * max(b, 1.0):
        s = -c / b if b > 0 else dx
    else:
        disc = max(b * b - 4.0 * a * c, 0.0)
        s = 2.0 * (-c) / (b + math.sqrt(disc))
    s = min(max(s, 0.0), dx)
    boundary = grid[j + 1] - s
    out = u.copy()
    out[: j + 1] = 0.0
    # node j keeps the value that makes the trapezoidal mass exactly 1,
    # counting the half-cell on its left: dx*w + dx*u[j+1]/2 + tail[j+1] = 1
    w = (1.0 - tail[j + 1]) / dx - 0.5 * u[j + 1]
    if w >= 0.0:
        out[j] = w
    else:
        out[j + 1] = (1.0 - tail[j + 2]) / dx - 0.5 * u[j + 2]
    return out, float(boundary)


class _SplitCutStepper:
    def __init__(self, prof: Profile, params: FlowParams):
        self.params = params
        self.grid = prof.grid.copy()
        self.u = prof.u.copy()
        self.t = prof.t
        self.u, self.boundary = _cut_left_mass(self.grid, self.u, params.dx)
        self._cn = {}

    def _solver(self, dt: float) -> _CrankNicolson:
        key = round(dt / self.params.dt, 12)
        if key not in self._cn:
            self._cn[key] = _CrankNicolson(self.grid.size, self.params.dx, dt)
        return self._cn[key]

    def step(self, dt: float) -> None:
        u = self._solver(dt).step(self.u)
        np.clip(u, 0.0, None, out=u)
        u *= math.exp(dt)
        self.u, self.boundary = _cut_left_mass(self.grid, u, self.params.dx)
        self.t += dt
        self._maybe_shift_window()

    def _maybe_shift_window(self) -> None:
        window = self.params.x_window
        dx = self.params.dx
        margin = 0.1 * window
        need_left = self.boundary - self.grid[0] < margin
        need_right = self.grid[-1] - self.boundary < 0.65 * window
        if not (need_left or need_right):
            return
        # shift by a whole number of cells: resampling is then an exact
        # index roll (new nodes coincide with old lattice points)
        target_left = self.boundary - 0.15 * window
        k = int(round((target_left - self.grid[0]) / dx))
        if k == 0:
            return
        self.grid = self.grid + k * dx
        u = np.zeros_like(self.u)
        if k > 0:
            u[:-k] = self.u[k:]
        else:
            u[-k:] = self.u[:k]
        self.u = u

    def profile(self) -> Profile:
        return Profile(self.grid.copy(), self.u.copy(), self.boundary, self.t)


def _warm_start(centre: float, params: FlowParams) -> Profile:
    """Exact grown heat kernel at a small positive time, in place of a spike."""
    t0 = max(4.0 * params.dt, (2.5 * params.dx) ** 2)
    grid = _window_grid(centre - max(2.0, 0.1 * params.x_window), params)
    u = math.exp(t0) * np.exp(-((grid - centre) ** 2) / (2.0 * t0)) \
        / math.sqrt(2.0 * math.pi * t0)
    return Profile(grid, u, centre, t0)


def solve_density(u0, t_end: float, params: FlowParams = None,
                  save_times=()) -> Trajectory:
    """Run the split-cut scheme to t_end, saving profiles at save_times."""
    params = params or FlowParams()
    init = make_initial(u0, params)
    if isinstance(init, tuple):
        init = _warm_start(init[1], params)
    stepper = _SplitCutStepper(init, params)
    if t_end < stepper.t:
        raise ValueError("t_end before warm-start time")
    saves = sorted(set(float(s) for s in save_times) | {float(t_end)})
    if any(s < stepper.t for s in saves if s < t_end):
        raise ValueError("save time before warm-start time")
    profiles = []
    times = [stepper.t]
    boundary = [stepper.boundary]
    for target in saves:
        while stepper.t < target - 1e-12:
            dt = min(params.dt, target - stepper.t)
            stepper.step(dt)
            times.append(stepper.t)
            boundary.append(stepper.boundary)
        profiles.append(stepper.profile())
    return Trajectory(profiles, np.asarray(times), np.asarray(boundary), params)


# ---------------------------------------------------------------------------
# integrated (tail) form
# ---------------------------------------------------------------------------

def _penalised_reaction(u: np.ndarray, n: int, dt: float) -> np.ndarray:
    """Exact solution of U' = U - U^n over dt (Bernoulli equation)."""
    growth = math.exp(dt)
    small = u < 1e-4
    out = np.empty_like(u)
    us = np.clip(u[~small], 0.0, 1.0)
    bracket = 1.0 + us ** (n - 1) * (math.exp((n - 1) * dt) - 1.0)
    out[~small] = us * growth / bracket ** (1.0 / (n - 1))
    out[small] = u[small] * growth    # U^n negligible below 1e-4
    return out


def solve_cdf(u0, t_end: float, params: FlowParams = None,
              save_times=()) -> CdfTrajectory:
    """Tail-form solve: split-cut route by default, or the penalised flow."""
    params = params or FlowParams()
    if params.scheme == "split_cut":
        traj = solve_density(u0, t_end, params, save_times)
        tails = [p.tail() for p in traj.profiles]
        ttimes = np.asarray([p.t for p in traj.profiles])
        return CdfTrajectory(tails, ttimes, traj.times, traj.boundary, params)
    return _solve_penalised(u0, t_end, params, save_times)


def _initial_tail(u0, params: FlowParams) -> TailCdf:
    if isinstance(u0, TailCdf):
        return u0
    if u0 == "heaviside" or u0 == ("delta", 0.0):
        grid = _window_grid(-max(2.0, 0.1 * params.x_window), params)
        return step_tail(grid, 0.0)
    init = make_initial(u0, params)
    if isinstance(init, tuple):
        grid = _window_grid(init[1] - max(2.0, 0.1 * params.x_window), params)
        return step_tail(grid, init[1])
    return init.tail()


def _solve_penalised(u0, t_end, params, save_times) -> CdfTrajectory:
    tail0 = _initial_tail(u0, params)
    dx = params.dx
    left = float(tail0.grid[0])
    grid = _window_grid(left, params)
    v = np.asarray(tail0.value(grid))
    n = params.n_penalty
    saves = sorted(set(float(s) for s in save_times) | {float(t_end)})
    cn = _CrankNicolson(grid.size, dx, params.dt, left_value=1.0)
    t = 0.0
    slack = 10.0 * dx

    def read_boundary():
        idx = np.flatnonzero(v >= 1.0 - slack)
        b = float(grid[idx[-1]]) if idx.size else float(grid[0])
        if b > grid[-1] - 0.3 * params.x_window:
            raise ArithmeticError(
                "front reached the window edge; enlarge x_window")
        return b

    tails, ttimes, times, bnds = [], [], [t], [read_boundary()]
    for target in saves:
        while t < target - 1e-12:
            dt = min(params.dt, target - t)
            step_cn = cn if dt == params.dt else \
                _CrankNicolson(grid.size, dx, dt, left_value=1.0)
            v = step_cn.step(v)
            np.clip(v, 0.0, 1.0, out=v)
            v = _penalised_reaction(v, n, dt)
            np.clip(v, 0.0, 1.0, out=v)
            t += dt
            times.append(t)
            bnds.append(read_boundary())
        vals = v.copy()
        vals[0] = 1.0
        vals[-1] = 0.0
        vals = np.minimum.accumulate(vals)
        tails.append(TailCdf(grid.copy(), vals, validate=False))
        ttimes.append(t)
    return CdfTrajectory(tails, np.asarray(ttimes), np.asarray(times),
                         np.asarray(bnds), params)


# ---------------------------------------------------------------------------
# recentred flow and comparison calculus
# ---------------------------------------------------------------------------

def flow_phi(u0, t: float, params: FlowParams = None) -> Profile:
    """Solve to time t and recentre so the median sits at 0."""
    if t <= 0:
        raise ValueError("flow time must be positive")
    params = params or FlowParams()
    prof = solve_density(u0, t, params).final
    return prof.shifted(-prof.median())


def stretch_margins(u, v, tol: float = 0.02,
                    y_mesh=None, x_mesh=None, include_y1: bool = True):
    """Signed worst margins of the quantile form of the stretching order.

    Returns (worst_pos, worst_neg): the most violated amount of
    U(x + a^y(U)) >= V(x + a^y(V)) over x > 0 and of <= over x < 0.
    Positive margins mean the inequality holds with room to spare.
    """
    if y_mesh is None:
        y_mesh = np.arange(0.02, 0.985, 0.02)
        if include_y1:
            y_mesh = np.concatenate((y_mesh, [1.0]))
    if x_mesh is None:
        x_mesh = np.concatenate((np.arange(0.05, 5.0, 0.05),
                                 np.arange(0.25, 30.0, 0.25)))
    au = np.atleast_1d(u.quantile(y_mesh) if hasattr(u, "quantile")
                       else quantile(u, y_mesh))
    av = np.atleast_1d(v.quantile(y_mesh) if hasattr(v, "quantile")
                       else quantile(v, y_mesh))
    uu = _eval_tail(u, au[:, None] + x_mesh[None, :])
    vv = _eval_tail(v, av[:, None] + x_mesh[None, :])
    worst_pos = float(np.min(uu - vv))
    uu = _eval_tail(u, au[:, None] - x_mesh[None, :])
    vv = _eval_tail(v, av[:, None] - x_mesh[None, :])
    worst_neg = float(np.min(vv - uu))
    return worst_pos, worst_neg


def _eval_tail(u, x):
    if hasattr(u, "value"):
        return np.asarray(u.value(x))
    return np.asarray(u.tail(x))


def stretch_ge(u, v, tol: float = 0.02, **kw) -> bool:
    """Discretised test of "u is more stretched than v" (quantile form)."""
    wp, wn = stretch_margins(u, v, tol, **kw)
    return bool(wp >= -tol and wn >= -tol)


@dataclass
class ComparisonReport:
    ok: bool
    worst_margin: float
    detail: dict = field(default_factory=dict)


def check_stretching_preserved(u0: TailCdf, v0: TailCdf, t: float,
                               params: FlowParams = None) -> ComparisonReport:
    """Evolve an ordered pair and verify the order still holds at time t."""
    params = params or FlowParams()
    tol = params.tol_stretch
    if not stretch_ge(u0, v0, tol):
        raise ValueError("initial pair is not stretch-ordered")
    ut = solve_cdf(u0, t, params).final
    vt = solve_cdf(v0, t, params).final
    wp, wn = stretch_margins(ut, vt, tol)
    worst = min(wp, wn)
    return ComparisonReport(ok=worst >= -tol, worst_margin=worst,
                            detail={"pos": wp, "neg": wn})


def check_boundary_comparison(u0: TailCdf, v0: TailCdf, t: float,
                              params: FlowParams = None) -> ComparisonReport:
    """Boundary displacement of the more stretched solution dominates."""
    params = params or FlowParams()
    tol = params.tol_stretch
    if not stretch_ge(u0, v0, tol):
        raise ValueError("initial pair is not stretch-ordered")
    lu0, lv0 = quantile(u0, 1.0), quantile(v0, 1.0)
    tu = solve_cdf(u0, t, params)
    tv = solve_cdf(v0, t, params)
    du = tu.boundary[-1] - lu0
    dv = tv.boundary[-1] - lv0
    return ComparisonReport(ok=du >= dv - tol, worst_margin=float(du - dv),
                            detail={"dU": float(du), "dV": float(dv)})


def sensitivity_check(u0, v0, t: float, params: FlowParams = None,
                      n_atoms: int = 512, slack: float = 0.05):
    """W(u_t, v_t) <= e^t W(u_0, v_0), with scheme slack on the right side."""
    from .measures import wasserstein_w
    params = params or FlowParams()
    p0 = make_initial(u0, params)
    q0 = make_initial(v0, params)
    if isinstance(p0, tuple) or isinstance(q0, tuple):
        w0 = _delta_aware_w(p0, q0, params, n_atoms)
    else:
        w0 = wasserstein_w(p0.quantile_measure(n_atoms),
                           q0.quantile_measure(n_atoms))
    pt = solve_density(u0, t, params).final
    qt = solve_density(v0, t, params).final
    wt = wasserstein_w(pt.quantile_measure(n_atoms),
                       qt.quantile_measure(n_atoms))
    rhs = math.exp(t) * w0
    ok = wt <= rhs * (1.0 + slack) + 4.0 / n_atoms + params.dx
    return ComparisonReport(ok=ok, worst_margin=float(rhs - wt),
                            detail={"lhs": float(wt), "rhs": float(rhs)})


def _delta_aware_w(p0, q0, params, n_atoms):
    from .measures import wasserstein_w
    def atoms(spec):
        if isinstance(spec, tuple):
            return from_positions(np.full(n_atoms, spec[1]))
        return spec.quantile_measure(n_atoms)
    return wasserstein_w(atoms(p0), atoms(q0))


@dataclass
class ConjectureReport:
    lam: float
    times: np.ndarray
    boundary_over_t: np.ndarray
    sup_distance: np.ndarray


def conjecture_experiment(lam: float, t_end: float,
                          params: FlowParams = None,
                          n_checkpoints: int = 10) -> ConjectureReport:
    """Exploratory run from an exponential tail e^{-lam x}; output only.

    Reports the boundary-speed curve and the sup distance between the
    recentred tail and the median-centred minimal wave at checkpoints.
    """
    params = params or FlowParams()
    ts = np.linspace(t_end / n_checkpoints, t_end, n_checkpoints)
    traj = solve_density(("exp", lam), t_end, params, save_times=ts)
    ref = waves.MINIMAL_WAVE.median_centred_tail()
    sup = []
    for prof in traj.profiles:
        tl = prof.tail()
        med = quantile(tl, 0.5)
        xs = np.linspace(-3.0, 25.0, 1200)
        sup.append(float(np.max(np.abs(tl.value(xs + med) - ref.tail(xs)))))
    lt = np.asarray([traj.boundary_at(t) for t in ts])
    return ConjectureReport(lam=lam, times=ts, boundary_over_t=lt / ts,
                            sup_distance=np.asarray(sup))
