"""Empirical measures on the line, centring functionals and exact 1-D Wasserstein costs.

An empirical measure carries N atoms of weight 1/N.  Two costs are used
throughout: the plain distance |x - y| (W1) and the capped distance
min(|x - y|, 1) (W).  Both are evaluated on the rank (quantile) coupling,
which is the optimal transport for |x - y|; with the cap it is a genuine
metric that dominates the capped Kantorovich optimum and agrees with it
whenever the coupling moves nothing as far as the cap.  The true capped
optimum (wasserstein_w_exact) is kept for diagnostics: it can be strictly
smaller, e.g. between a measure and its own translate.
"""

from dataclasses import dataclass

import numpy as np

TOL_GAMMA = 1e-12  # absolute tolerance for "leftmost atom at 0"
TOL_CDF = 1e-8     # tolerance on tail-CDF endpoint values


@dataclass(frozen=True)
class EmpiricalMeasure:
    """N atoms on the line, each of weight 1/N, stored sorted."""

    atoms: np.ndarray

    @property
    def n(self) -> int:
        return self.atoms.size

    def tail(self, x):
        """mu((x, infty)): fraction of atoms strictly greater than x."""
        x = np.asarray(x, dtype=float)
        return (self.n - np.searchsorted(self.atoms, x, side="right")) / self.n

    def to_json(self) -> dict:
        return {"n": self.n, "atoms": [float(a) for a in self.atoms]}

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            for a in self.atoms:
                fh.write(f"{float(a)!r}\n")


def measure_from_json(obj: dict) -> "EmpiricalMeasure":
    return from_positions(obj["atoms"])


def measure_from_csv(path) -> "EmpiricalMeasure":
    with open(path) as fh:
        vals = [float(line) for line in fh if line.strip()]
    return from_positions(vals)


def from_positions(positions) -> EmpiricalMeasure:
    """Build the empirical measure of a finite configuration (sorted copy)."""
    arr = np.asarray(positions, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty measure")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite position")
    return EmpiricalMeasure(np.sort(arr))


@dataclass(frozen=True)
class CentringStats:
    leftmost: float          # L(mu) = inf{x : mu([x, inf)) < 1}
    median: float            # A(mu) = inf{x : mu([x, inf)) < 1/2}
    mean: float              # M(mu)
    abs_first_moment: float  # H(mu)


def centring_stats(mu: EmpiricalMeasure) -> CentringStats:
    """Centring functionals of an empirical measure.

    The median applies the inf-definition to the atomic measure verbatim;
    for N atoms it lands on the sorted atom of 0-based index N // 2.
    """
    a = mu.atoms
    return CentringStats(
        leftmost=float(a[0]),
        median=float(a[a.size // 2]),
        mean=float(a.mean()),
        abs_first_moment=float(np.abs(a).mean()),
    )


def gap_mean(y) -> float:
    """Empirical mean b(y) of a configuration whose leftmost point sits at 0."""
    arr = y.atoms if isinstance(y, EmpiricalMeasure) else np.asarray(y, dtype=float)
    if abs(float(arr.min())) > TOL_GAMMA:
        raise ValueError("not in Gamma_N")
    return float(arr.mean())


def recentre(mu: EmpiricalMeasure, mode: str) -> EmpiricalMeasure:
    """Shift so that the leftmost atom (or the median atom) lands at 0."""
    stats = centring_stats(mu)
    if mode == "leftmost":
        shift = stats.leftmost
    elif mode == "median":
        shift = stats.median
    else:
        raise ValueError(f"unknown centring mode {mode!r}")
    return EmpiricalMeasure(mu.atoms - shift)


# ---------------------------------------------------------------------------
# Wasserstein costs between empirical measures
# ---------------------------------------------------------------------------

def wasserstein_w1(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> float:
    """Exact W1 (cost |x - y|); rank coupling, common refinement if sizes differ."""
    if mu1.n == mu2.n:
        return float(np.abs(mu1.atoms - mu2.atoms).mean())
    w, d = _refined_quantile_displacements(mu1, mu2)
    return float(np.dot(w, d))


def wasserstein_w(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> float:
    """Capped cost min(|x - y|, 1) of the rank coupling.

    Symmetric, satisfies the triangle inequality, never exceeds 1 or the
    W1 distance, and assigns a translation by c the value min(|c|, 1).
    Unequal atom counts go through the common-refinement quantile coupling.
    """
    if mu1.n == mu2.n:
        return float(np.minimum(np.abs(mu1.atoms - mu2.atoms), 1.0).mean())
    w, d = _refined_quantile_displacements(mu1, mu2)
    return float(np.dot(w, np.minimum(d, 1.0)))


def wasserstein_w_exact(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> float:
    """Exact Kantorovich optimum for min(|x - y|, 1) (equal counts only).

    Alignment DP over monotone partial matchings: pairs either match
    monotonically at cost |x - y| or are written off at the cap.  Can be
    strictly below wasserstein_w when uncrossing a saturated pair pays.
    """
    if mu1.n != mu2.n:
        raise ValueError("exact capped cost needs equal atom counts")
    return _capped_cost_dp(mu1.atoms, mu2.atoms)


def _refined_quantile_displacements(mu1, mu2):
    """Weights and |x - y| of the quantile coupling on the refined weight grid."""
    n1, n2 = mu1.n, mu2.n
    bps = np.union1d(np.arange(1, n1) / n1, np.arange(1, n2) / n2)
    bps = np.concatenate(([0.0], bps, [1.0]))
    widths = np.diff(bps)
    mids = 0.5 * (bps[:-1] + bps[1:])
    x = mu1.atoms[np.minimum((mids * n1).astype(int), n1 - 1)]
    y = mu2.atoms[np.minimum((mids * n2).astype(int), n2 - 1)]
    return widths, np.abs(x - y)


def _capped_cost_dp(x: np.ndarray, y: np.ndarray) -> float:
    """Exact mean of min(|x-y|,1) over the best bijection (anti-diagonal DP).

    dp[i][j] = best total of min(|x-y| - 1, 0) over monotone partial
    matchings of the first i and j atoms; unmatched atoms pair off at the
    cap, so the answer is (n + dp[n][n]) / n.
    """
    n = x.size
    big = np.inf
    prev2 = np.full(n + 1, big)
    prev1 = np.full(n + 1, big)
    prev2[0] = 0.0
    prev1[0] = 0.0
    prev1[1] = 0.0
    if n == 1:
        return float(min(abs(x[0] - y[0]), 1.0))
    for d in range(2, 2 * n + 1):
        cur = np.full(n + 1, big)
        if d <= n:
            cur[0] = 0.0
            cur[d] = 0.0
        i0, i1 = max(1, d - n), min(n, d - 1)
        ii = np.arange(i0, i1 + 1)
        c = np.minimum(np.abs(x[ii - 1] - y[d - ii - 1]) - 1.0, 0.0)
        cur[i0:i1 + 1] = np.minimum(
            np.minimum(prev1[i0 - 1:i1], prev1[i0:i1 + 1]),
            prev2[i0 - 1:i1] + c,
        )
        prev2, prev1 = prev1, cur
    return float((n + prev1[n]) / n)


# ---------------------------------------------------------------------------
# Tail CDFs
# ---------------------------------------------------------------------------

class TailCdf:
    """Grid-discretised non-increasing tail function U with U(-inf)=1, U(inf)=0.

    Linear interpolation between grid points; exactly 1 left of the grid and
    exactly 0 right of it.
    """

    def __init__(self, grid, values, validate: bool = True):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if validate:
            self._validate()
        # node tail integrals int_{g_k}^{inf} U, trapezoidal
        seg = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.grid)
        self._node_integral = np.concatenate(
            (np.cumsum(seg[::-1])[::-1], [0.0]))

    def _validate(self):
        g, v = self.grid, self.values
        if g.ndim != 1 or g.size < 2 or v.shape != g.shape:
            raise ValueError("grid and values must be 1-D of equal length >= 2")
        if not np.all(np.diff(g) > 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(v < -TOL_CDF) or np.any(v > 1 + TOL_CDF):
            raise ValueError("tail values must lie in [0, 1]")
        if np.any(np.diff(v) > TOL_CDF):
            raise ValueError("tail values must be non-increasing")
        if abs(v[0] - 1.0) > TOL_CDF:
            raise ValueError("first tail value must be 1")
        if abs(v[-1]) > TOL_CDF:
            raise ValueError("last tail value must be 0")

    @property
    def support_left(self) -> float:
        return float(self.grid[0])

    def value(self, x):
        return np.interp(x, self.grid, self.values, left=1.0, right=0.0)

    def tail(self, x):
        return self.value(x)

    def tail_integral(self, x):
        """I(x) = int_x^inf U, exact for the piecewise-linear interpolant."""
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.grid, x, side="right") - 1, -1, self.grid.size - 1)
        out = np.empty(x.shape)
        left = k < 0
        out[left] = self._node_integral[0] + (self.grid[0] - x[left])
        right = k >= self.grid.size - 1
        out[right] = 0.0
        mid = ~(left | right)
        km = k[mid]
        xm = x[mid]
        ux = self.value(xm)
        out[mid] = self._node_integral[km + 1] + \
            0.5 * (ux + self.values[km + 1]) * (self.grid[km + 1] - xm)
        return out if out.ndim else float(out)

    def quantile(self, y):
        return quantile(self, y)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,U\n")
            for g, v in zip(self.grid, self.values):
                fh.write(f"{float(g)!r},{float(v)!r}\n")


def tailcdf_from_csv(path) -> TailCdf:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return TailCdf(data[:, 0], data[:, 1])


def empirical_tail_on_grid(mu: EmpiricalMeasure, grid) -> TailCdf:
    """Tail CDF of an empirical measure sampled on a grid (grid must bracket it)."""
    grid = np.asarray(grid, dtype=float)
    return TailCdf(grid, mu.tail(grid))


def quantile(u, y):
    """a^y(U) = inf{x : U(x) < y} for y in (0, 1], by interpolation on the grid."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y_arr <= 0.0) or np.any(y_arr > 1.0):
        raise ValueError("quantile level must lie in (0, 1]")
    g, v = u.grid, u.values
    # first index with v < y: count strictly-smaller values from the sorted tail
    cnt = np.searchsorted(v[::-1], y_arr, side="left")
    k = v.size - cnt
    out = np.empty(y_arr.shape)
    out[k == 0] = g[0]
    out[k == v.size] = g[-1]
    mid = (k > 0) & (k < v.size)
    km = k[mid]
    out[mid] = g[km - 1] + (y_arr[mid] - v[km - 1]) * \
        (g[km] - g[km - 1]) / (v[km] - v[km - 1])
    return out if np.ndim(y) else float(out[0])


# ---------------------------------------------------------------------------
# W1 between an empirical measure and an analytic (or gridded) tail function
# ---------------------------------------------------------------------------

def w1_to_analytic(mu: EmpiricalMeasure, f) -> float:
    """W1(mu, f) = int |F_mu - F| dx by exact piecewise integration.

    ``f`` needs tail(x), tail_integral(x), quantile(y) and support_left:
    a TailCdf or one of the travelling-wave objects qualifies.  The tail of
    f beyond the last atom enters through tail_integral, so exponential
    tails are not truncated.
    """
    a = mu.atoms
    n = mu.n
    fa = np.atleast_1d(f.tail(a))
    ia = np.atleast_1d(f.tail_integral(a))
    if not np.all(np.isfinite(ia)):
        raise ValueError("infinite W1")
    total = float(ia[-1])  # right piece: G = 0 beyond the last atom
    # left piece: G = 1 on (-inf, a_1), F = 1 left of support_left
    x_left = f.support_left
    if a[0] > x_left:
        il = float(np.atleast_1d(f.tail_integral(np.array([x_left])))[0])
        total += (a[0] - x_left) - (il - ia[0])
    if n == 1:
        return total
    # interior intervals (a_i, a_{i+1}) with G = (n - i)/n
    gvals = (n - np.arange(1, n)) / n
    dx = np.diff(a)
    d_int = ia[:-1] - ia[1:]
    lo, hi = fa[:-1], fa[1:]
    live = dx > 0
    below = live & (lo <= gvals)            # F <= g on the whole interval
    above = live & (hi >= gvals)            # F >= g on the whole interval
    crossing = live & ~below & ~above
    total += float(np.sum(gvals[below] * dx[below] - d_int[below]))
    total += float(np.sum(d_int[above] - gvals[above] * dx[above]))
    if np.any(crossing):
        c = np.atleast_1d(f.quantile(gvals[crossing]))
        ic = np.atleast_1d(f.tail_integral(c))
        al, ar = a[:-1][crossing], a[1:][crossing]
        total += float(np.sum(
            (ia[:-1][crossing] + ia[1:][crossing] - 2 * ic)
            + gvals[crossing] * (ar + al - 2 * c)))
    return total


def w1_between_tails(u1, u2, grid) -> float:
    """W1 between two tail functions as int |U1 - U2| over a common grid."""
    grid = np.asarray(grid, dtype=float)
    d = np.abs(np.asarray(u1.value(grid)) - np.asarray(u2.value(grid)))
    return float(np.trapezoid(d, grid))
