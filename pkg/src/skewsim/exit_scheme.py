"""Exact interval exit-time/exit-position samplers and the grid schemes C and E.

All kernel series live on the unit interval (0, 1) and are rescaled: the
Brownian exit time from (l, r) started at x is (r-l)^2 times the unit exit time
from x~ = (x-l)/(r-l).  Two series forms are used: method-of-images for small
times and the sine eigenfunction expansion for large times, switched where
t / h^2 = 0.5 for the symmetric interval (unit time 0.125); terms are summed
until two consecutive terms fall below 1e-14 (single-term checks would stop
early at points where sin(n pi x) vanishes).

At a skew point with symmetric neighbors the SBM exit time has the Brownian
law (|SBM| = |BM| in law) and the exit side is an independent Bernoulli(alpha).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfc, ndtr

from .core import ParameterError, RngStream, SkewParameter
from .scale_speed import ScaleSpeedModel, exit_time_moments, hitting_probability
from .transform import BrownianReduction

_TERM_TOL = 1e-14
_MAX_TERMS = 64
_T_SWITCH = 0.125  # unit-interval time equivalent of t/h^2 = 0.5


class SeriesError(RuntimeError):
    """Neither series form converged within the term budget."""


def _phi(z):
    return ndtr(z)


def _sum_series(term_fn, what: str):
    """Sum term_fn(k) for k = 0, 1, ... until two consecutive terms are < tol."""
    acc = None
    small_run = 0
    for k in range(_MAX_TERMS):
        term = term_fn(k)
        acc = term if acc is None else acc + term
        if np.all(np.abs(term) < _TERM_TOL):
            small_run += 1
            if small_run >= 2:
                return acc
        else:
            small_run = 0
    raise SeriesError(f"series for {what} did not converge within {_MAX_TERMS} terms")


def unit_survival(t, x: float = 0.5):
    """P_x[tau > t] for BM on (0,1); vectorized over t."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t <= _T_SWITCH
    if np.any(small):
        rt = np.sqrt(t[small])

        def img_term(k):
            term = np.zeros_like(rt)
            for kk in ((0,) if k == 0 else (k, -k)):
                term += (
                    _phi((1 - x + 2 * kk) / rt)
                    - _phi((-x + 2 * kk) / rt)
                    - _phi((1 + x + 2 * kk) / rt)
                    + _phi((x + 2 * kk) / rt)
                )
            return term

        out[small] = _sum_series(img_term, "survival (images)")
    if np.any(~small):
        tl = t[~small]

        def eig_term(j):
            n = 2 * j + 1  # even modes vanish in the survival integral
            return (4 / np.pi) * np.exp(-(n**2) * np.pi**2 * tl / 2) * np.sin(n * np.pi * x) / n

        out[~small] = _sum_series(eig_term, "survival (eigen)")
    return np.clip(out, 0.0, 1.0)


def unit_exit_cdf_right(t, x: float):
    """P_x[tau <= t, exit through 1] for BM on (0,1); vectorized over t."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t <= _T_SWITCH
    if np.any(small):
        ts = t[small]

        def img_term(k):
            term = np.zeros_like(ts)
            for kk in ((0,) if k == 0 else (k, -k)):
                z = 1 - x + 2 * kk
                term += np.sign(z) * erfc(np.abs(z) / np.sqrt(2 * ts))
            return term

        out[small] = _sum_series(img_term, "exit-side CDF (images)")
    if np.any(~small):
        tl = t[~small]

        def eig_term(j):
            n = j + 1
            if n == 1:
                base = np.full_like(tl, x)
            else:
                base = 0.0
            return base - (2 / np.pi) * ((-1) ** (n + 1) / n) * np.sin(n * np.pi * x) * np.exp(
                -(n**2) * np.pi**2 * tl / 2
            )

        out[~small] = _sum_series(eig_term, "exit-side CDF (eigen)")
    return np.clip(out, 0.0, 1.0)


def unit_exit_cdf_left(t, x: float):
    return unit_exit_cdf_right(t, 1.0 - x)


def unit_killed_cdf(t, z, x: float = 0.5):
    """P_x[B_t <= z, tau > t] for BM on (0,1); t and z broadcast elementwise."""
    t, z = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
    z = np.clip(z, 0.0, 1.0)
    out = np.empty_like(t)
    small = t <= _T_SWITCH
    if np.any(small):
        rt = np.sqrt(t[small])
        zs = z[small]

        def img_term(k):
            term = np.zeros_like(rt)
            for kk in ((0,) if k == 0 else (k, -k)):
                term += (
                    _phi((zs - x + 2 * kk) / rt)
                    - _phi((-x + 2 * kk) / rt)
                    - _phi((zs + x + 2 * kk) / rt)
                    + _phi((x + 2 * kk) / rt)
                )
            return term

        out[small] = _sum_series(img_term, "killed kernel (images)")
    if np.any(~small):
        tl = t[~small]
        zl = z[~small]

        def eig_term(j):
            n = j + 1
            return (
                2
                * np.exp(-(n**2) * np.pi**2 * tl / 2)
                * np.sin(n * np.pi * x)
                * (1 - np.cos(n * np.pi * zl))
                / (n * np.pi)
            )

        out[~small] = _sum_series(eig_term, "killed kernel (eigen)")
    return np.clip(out, 0.0, 1.0)


def _bisect(fn, targets, lo, hi, iters=90, increasing=True, xtol=1e-13):
    """Vectorized bisection for monotone fn (elementwise lo/hi brackets)."""
    lo = np.asarray(lo, dtype=float) * np.ones_like(targets)
    hi = np.asarray(hi, dtype=float) * np.ones_like(targets)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        below = fm < targets if increasing else fm > targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < xtol:
            break
    return 0.5 * (lo + hi)


def sample_unit_exit_time(u, x: float = 0.5):
    """Unit-interval exit times via inverse survival sampling: tau = S^{-1}(u)."""
    u = np.clip(np.asarray(u, dtype=float), 1e-300, 1 - 1e-16)
    hi = 0.5
    u_min = float(np.min(u))
    while float(unit_survival(np.array([hi]), x)[0]) > u_min:
        hi *= 2.0
        if hi > 1e7:
            raise SeriesError("survival bracket expansion failed")
    # survival is decreasing in t: S(t) < u  <=>  t past the root
    return _bisect(lambda t: unit_survival(t, x), u, 1e-14, hi, increasing=False)


def sample_unit_exit_time_conditional(u, t_cap, x: float = 0.5):
    """Exit times conditioned on {tau <= t_cap}: solve 1 - S(t) = u (1 - S(t_cap))."""
    u = np.asarray(u, dtype=float)
    t_cap = np.asarray(t_cap, dtype=float) * np.ones_like(u)
    cap_mass = 1.0 - unit_survival(t_cap, x)
    targets = u * cap_mass
    return _bisect(lambda t: 1.0 - unit_survival(t, x), targets, 1e-14, t_cap)


def sample_unit_killed_abs_offset(u, t, x: float = 0.5):
    """|B_t - x| given {tau > t}, started from the center x = 1/2."""
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float) * np.ones_like(u)
    surv = unit_survival(t, x)

    def cdf(v):
        return (unit_killed_cdf(t, x + v, x) - unit_killed_cdf(t, x - v, x)) / surv

    return _bisect(cdf, u, 0.0, 0.5, iters=60)


@dataclass(frozen=True)
class ExitSample:
    exited: bool
    time: float
    position: float  # +/- h if exited, the killed position at t_max otherwise


def interval_exit_sample(
    h: float,
    alpha: SkewParameter,
    rng: RngStream,
    t_max: Optional[float] = None,
) -> ExitSample:
    """Exit of SBM(alpha) from (-h, h) started at 0 (exact, one path draw).

    The exit time has the Brownian law; the side is an independent
    Bernoulli(alpha).  With a horizon, survival is decided first with the exact
    survival probability, then the killed position at t_max is drawn.
    """
    if h <= 0:
        raise ParameterError(f"half-width must be positive, got {h}")
    g = rng.generator()
    scale = (2.0 * h) ** 2
    if t_max is not None:
        s = float(unit_survival(np.array([t_max / scale]))[0])
        if g.random() < s:
            off = float(sample_unit_killed_abs_offset(np.array([g.random()]),
                                                      t_max / scale)[0])
            sign = 1.0 if g.random() < alpha.alpha else -1.0
            return ExitSample(False, t_max, sign * off * 2.0 * h)
        tau = float(sample_unit_exit_time_conditional(np.array([g.random()]),
                                                      t_max / scale)[0]) * scale
        side = h if g.random() < alpha.alpha else -h
        return ExitSample(True, tau, side)
    tau = float(sample_unit_exit_time(np.array([g.random()]))[0]) * scale
    side = h if g.random() < alpha.alpha else -h
    return ExitSample(True, tau, side)


def interval_exit_sample_batch(
    h: float,
    alpha: SkewParameter,
    rng: RngStream,
    size: int,
    t_max: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized draws: (exited, time, position); same law as the scalar op."""
    if h <= 0:
        raise ParameterError(f"half-width must be positive, got {h}")
    g = rng.generator()
    scale = (2.0 * h) ** 2
    if t_max is None:
        tau = sample_unit_exit_time(g.random(size)) * scale
        side = np.where(g.random(size) < alpha.alpha, h, -h)
        return np.ones(size, dtype=bool), tau, side
    tu = t_max / scale
    surv = float(unit_survival(np.array([tu]))[0])
    survives = g.random(size) < surv
    time = np.full(size, float(t_max))
    position = np.empty(size)
    n_s = int(survives.sum())
    if n_s:
        off = sample_unit_killed_abs_offset(g.random(n_s), tu) * 2.0 * h
        sign = np.where(g.random(n_s) < alpha.alpha, 1.0, -1.0)
        position[survives] = sign * off
    n_e = size - n_s
    if n_e:
        tau = sample_unit_exit_time_conditional(g.random(n_e), tu) * scale
        time[~survives] = tau
        position[~survives] = np.where(g.random(n_e) < alpha.alpha, h, -h)
    return ~survives, time, position


@dataclass(frozen=True)
class ExitGrid:
    """Ascending grid containing every skew point, with symmetric neighbors there."""

    points: tuple[float, ...]
    skew_points: tuple[tuple[float, float], ...] = ()  # (location, beta)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if np.any(np.diff(pts) <= 0):
            raise ParameterError("grid points must be strictly ascending")
        for loc, beta in self.skew_points:
            idx = int(np.searchsorted(pts, loc))
            if idx >= pts.size or pts[idx] != loc:
                raise ParameterError(f"skew point {loc} missing from the grid")
            if idx == 0 or idx == pts.size - 1:
                raise ParameterError(f"skew point {loc} needs two neighbors")
            left, right = loc - pts[idx - 1], pts[idx + 1] - loc
            if not np.isclose(left, right, rtol=1e-12, atol=1e-12):
                raise ParameterError(
                    f"grid violates symmetry at skew point {loc}: {left} vs {right}"
                )
            if not abs(beta) < 1.0:
                raise ParameterError(f"skew weight at {loc} must satisfy |beta| < 1")

    @staticmethod
    def uniform(lo: float, hi: float, n_cells: int,
                skew_points: tuple[tuple[float, float], ...] = ()) -> "ExitGrid":
        pts = np.linspace(lo, hi, n_cells + 1)
        for loc, _ in skew_points:
            j = int(np.argmin(np.abs(pts - loc)))
            if abs(pts[j] - loc) > 1e-12:
                raise ParameterError(f"uniform grid does not contain skew point {loc}")
            pts[j] = loc
        return ExitGrid(tuple(pts), skew_points)


@dataclass(frozen=True)
class SkeletonPath:
    """Event-time path: (time, grid position) plus an optional terminal sample."""

    times: np.ndarray
    positions: np.ndarray
    terminal: Optional[tuple[float, float]] = None

    def interpolate(self, t):
        """Bridge-free linear interpolation for plotting only (not the conditional law)."""
        t = np.asarray(t, dtype=float)
        ts, xs = self.times, self.positions
        if self.terminal is not None:
            ts = np.append(ts, self.terminal[0])
            xs = np.append(xs, self.terminal[1])
        return np.interp(t, ts, xs)


def sample_unit_side_time(u_side, u_time, x_unit: float, rem: float = np.inf):
    """Brownian (side, exit time) from x_unit on the unit interval, vectorized.

    rem = np.inf means no horizon: side from the scale ratio, time from the
    side-specific CDF; a finite rem conditions both on {tau <= rem}.
    """
    u_side = np.asarray(u_side, dtype=float)
    u_time = np.asarray(u_time, dtype=float)
    if np.isfinite(rem):
        pr = float(unit_exit_cdf_right(np.array([rem]), x_unit)[0])
        pl = float(unit_exit_cdf_left(np.array([rem]), x_unit)[0])
        go_right = u_side < pr / (pr + pl)
        cap_r, cap_l = pr, pl
        hi_r = hi_l = rem
    else:
        go_right = u_side < x_unit
        cap_r, cap_l = x_unit, 1.0 - x_unit
        hi_r = hi_l = 0.5
    tau = np.empty_like(u_time)
    for mask, xx, cap, hi in (
        (go_right, x_unit, cap_r, hi_r),
        (~go_right, 1.0 - x_unit, cap_l, hi_l),
    ):
        if not np.any(mask):
            continue
        targets = u_time[mask] * cap
        if not np.isfinite(rem):
            t_max = float(np.max(targets))
            while float(unit_exit_cdf_right(np.array([hi]), xx)[0]) < t_max:
                hi *= 2.0
                if hi > 1e7:
                    raise SeriesError("exit-time bracket expansion failed")
        tau[mask] = _bisect(lambda t: unit_exit_cdf_right(t, xx), targets, 1e-14, hi)
    return go_right, tau


def gen_scheme_C(
    reduction: BrownianReduction,
    grid: ExitGrid,
    horizon: float,
    x0: float,
    rng: RngStream,
    map_back: bool = True,
) -> SkeletonPath:
    """Event-driven exact simulation of the Markov chain (theta^i, Y_theta^i).

    `grid` and `x0` live in the reduced Y-space; positions are mapped through
    G^{-1} back to X-space unless map_back=False.  Grid endpoints absorb
    (choose the grid wide enough for the horizon).
    """
    pts = np.asarray(grid.points, dtype=float)
    betas = dict(grid.skew_points or reduction.skew_points)
    for loc in betas:
        if not np.any(np.isclose(pts, loc, rtol=0, atol=1e-12)):
            raise ParameterError(f"grid misses skew point {loc}")
    i = int(np.argmin(np.abs(pts - x0)))
    if abs(pts[i] - x0) > 1e-12:
        raise ParameterError(f"x0={x0} is not a grid point")
    g = rng.generator()
    theta = 0.0
    times = [0.0]
    positions = [pts[i]]
    terminal = None
    while theta < horizon and 0 < i < pts.size - 1:
        pos = pts[i]
        l, r = pts[i - 1], pts[i + 1]
        beta = betas.get(pos)
        span = r - l
        x_unit = (pos - l) / span
        scale = span * span
        rem = (horizon - theta) / scale
        surv = float(unit_survival(np.array([rem]), x_unit)[0]) if np.isfinite(rem) else 0.0
        if g.random() < surv:
            # survives to the horizon: draw the killed position at t = horizon
            if beta is not None:
                off = float(
                    sample_unit_killed_abs_offset(np.array([g.random()]), rem)[0]
                )
                sign = 1.0 if g.random() < (1.0 + beta) / 2.0 else -1.0
                value = pos + sign * off * span
            else:
                target = np.array([g.random() * surv])
                z = float(_bisect(lambda v: unit_killed_cdf(rem, v, x_unit),
                                  target, 0.0, 1.0, iters=60)[0])
                value = l + z * span
            terminal = (horizon, value)
            theta = horizon
            break
        # exits the interval before the horizon
        if beta is not None:
            go_right = g.random() < (1.0 + beta) / 2.0
            if np.isfinite(rem):
                tau = float(sample_unit_exit_time_conditional(
                    np.array([g.random()]), rem)[0])
            else:
                tau = float(sample_unit_exit_time(np.array([g.random()]))[0])
        else:
            gr, tau_arr = sample_unit_side_time(
                np.array([g.random()]), np.array([g.random()]), x_unit, rem
            )
            go_right, tau = bool(gr[0]), float(tau_arr[0])
        theta += tau * scale
        i = i + 1 if go_right else i - 1
        times.append(theta)
        positions.append(pts[i])
    times_arr = np.asarray(times)
    pos_arr = np.asarray(positions)
    if map_back:
        pos_arr = np.asarray(reduction.G_inv(pos_arr), dtype=float)
        if terminal is not None:
            terminal = (terminal[0], float(reduction.G_inv(terminal[1])))
    return SkeletonPath(times_arr, pos_arr, terminal)


def scheme_C_marginal_batch(
    reduction: BrownianReduction,
    half_span: float,
    n_cells_half: int,
    horizon: float,
    x0: float,
    rng: RngStream,
    n_paths: int,
    map_back: bool = True,
) -> np.ndarray:
    """Vectorized scheme-C terminal values on a uniform symmetric grid.

    The grid is uniform with spacing half_span / n_cells_half on
    [-half_span, half_span] (Y-space), so every interior interval is symmetric
    and all exit times share one unit law; skew points must sit on the grid.
    """
    h = half_span / n_cells_half
    pts = np.linspace(-half_span, half_span, 2 * n_cells_half + 1)
    alpha_on_grid = np.full(pts.size, 0.5)
    for loc, beta in reduction.skew_points:
        j = int(np.argmin(np.abs(pts - loc)))
        if abs(pts[j] - loc) > 1e-12:
            raise ParameterError(f"uniform grid misses skew point {loc}")
        alpha_on_grid[j] = (1.0 + beta) / 2.0
    j0 = int(np.argmin(np.abs(pts - x0)))
    if abs(pts[j0] - x0) > 1e-12:
        raise ParameterError(f"x0={x0} is not a grid point")

    g = rng.generator()
    scale = (2.0 * h) ** 2
    idx = np.full(n_paths, j0, dtype=np.int64)
    theta = np.zeros(n_paths)
    out = np.empty(n_paths)
    alive = np.arange(n_paths)
    max_iter = int(50 * horizon / (h * h)) + 64
    for _ in range(max_iter):
        if alive.size == 0:
            break
        rem = (horizon - theta[alive]) / scale
        surv = unit_survival(rem)
        survives = g.random(alive.size) < surv
        if np.any(survives):
            sel = alive[survives]
            off = sample_unit_killed_abs_offset(g.random(sel.size), rem[survives]) * 2.0 * h
            p_up = alpha_on_grid[idx[sel]]
            sign = np.where(g.random(sel.size) < p_up, 1.0, -1.0)
            out[sel] = pts[idx[sel]] + sign * off
        ex = ~survives
        if np.any(ex):
            sel = alive[ex]
            tau = sample_unit_exit_time_conditional(g.random(sel.size), rem[ex]) * scale
            theta[sel] += tau
            p_up = alpha_on_grid[idx[sel]]
            step = np.where(g.random(sel.size) < p_up, 1, -1)
            idx[sel] += step
            if np.any((idx[sel] == 0) | (idx[sel] == pts.size - 1)):
                raise ParameterError("path reached the grid edge; widen half_span")
        alive = alive[ex]
    if alive.size:
        raise SeriesError("scheme C batch did not finish within the iteration budget")
    if map_back:
        out = np.asarray(reduction.G_inv(out), dtype=float)
    return out


def scheme_C_hit_batch(
    reduction: BrownianReduction,
    grid: ExitGrid,
    x0: float,
    rng: RngStream,
    n_paths: int,
    max_steps: int = 10**7,
) -> np.ndarray:
    """Absorption positions of the embedded scheme-C chain (Y-space grid ends).

    Exit times do not influence which end is hit, so this draws only the side
    uniforms (one per event) of the full scheme.
    """
    pts = np.asarray(grid.points, dtype=float)
    p_up = np.empty(pts.size)
    p_up[1:-1] = [
        (pts[i] - pts[i - 1]) / (pts[i + 1] - pts[i - 1]) for i in range(1, pts.size - 1)
    ]
    for loc, beta in (grid.skew_points or reduction.skew_points):
        j = int(np.argmin(np.abs(pts - loc)))
        if abs(pts[j] - loc) > 1e-12:
            raise ParameterError(f"grid misses skew point {loc}")
        p_up[j] = (1.0 + beta) / 2.0
    j0 = int(np.argmin(np.abs(pts - x0)))
    if abs(pts[j0] - x0) > 1e-12:
        raise ParameterError(f"x0={x0} is not a grid point")
    g = rng.generator()
    idx = np.full(n_paths, j0, dtype=np.int64)
    alive = np.arange(n_paths)
    for _ in range(max_steps):
        if alive.size == 0:
            return pts[idx]
        up = g.random(alive.size) < p_up[idx[alive]]
        idx[alive] += np.where(up, 1, -1)
        absorbed = (idx[alive] == 0) | (idx[alive] == pts.size - 1)
        alive = alive[~absorbed]
    raise SeriesError("scheme C hitting batch exceeded the step budget")


def gen_scheme_E(
    model: ScaleSpeedModel,
    grid: np.ndarray,
    horizon: float,
    x0: float,
    rng: RngStream,
) -> SkeletonPath:
    """Markov chain on an arbitrary ascending grid: sides from the scale ratio,
    clock advanced by the conditional expected exit time given the realized side.

    No symmetry requirement on the grid and no BV requirement on the
    coefficients; grid endpoints absorb.
    """
    pts = np.asarray(grid, dtype=float)
    if np.any(np.diff(pts) <= 0):
        raise ParameterError("grid points must be strictly ascending")
    i = int(np.argmin(np.abs(pts - x0)))
    if abs(pts[i] - x0) > 1e-12:
        raise ParameterError(f"x0={x0} is not a grid point")
    p_up, m_up, m_dn = _scheme_E_tables(model, pts)
    g = rng.generator()
    theta = 0.0
    times = [0.0]
    positions = [pts[i]]
    while theta < horizon and 0 < i < pts.size - 1:
        up = g.random() < p_up[i]
        theta += m_up[i] if up else m_dn[i]
        i += 1 if up else -1
        times.append(theta)
        positions.append(pts[i])
    return SkeletonPath(np.asarray(times), np.asarray(positions), None)


def _scheme_E_tables(model: ScaleSpeedModel, pts: np.ndarray):
    n = pts.size
    p_up = np.full(n, np.nan)
    m_up = np.full(n, np.nan)
    m_dn = np.full(n, np.nan)
    for i in range(1, n - 1):
        a, x, b = pts[i - 1], pts[i], pts[i + 1]
        p_up[i] = hitting_probability(model, x, a, b)
        m_up[i] = exit_time_moments(model, x, a, b, side="right").conditional
        m_dn[i] = exit_time_moments(model, x, a, b, side="left").conditional
    return p_up, m_up, m_dn


def scheme_E_exit_batch(
    model: ScaleSpeedModel,
    grid: np.ndarray,
    x0: float,
    rng: RngStream,
    n_paths: int,
    max_steps: int = 10**7,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized scheme-E runs until absorption at either grid end.

    Returns (clock at absorption, absorbed position); the clock mean is an
    unbiased estimate of the interval exit time by the tower property.
    """
    pts = np.asarray(grid, dtype=float)
    p_up, m_up, m_dn = _scheme_E_tables(model, pts)
    j0 = int(np.argmin(np.abs(pts - x0)))
    if abs(pts[j0] - x0) > 1e-12:
        raise ParameterError(f"x0={x0} is not a grid point")
    g = rng.generator()
    idx = np.full(n_paths, j0, dtype=np.int64)
    clock = np.zeros(n_paths)
    alive = np.arange(n_paths)
    for _ in range(max_steps):
        if alive.size == 0:
            return clock, pts[idx]
        up = g.random(alive.size) < p_up[idx[alive]]
        clock[alive] += np.where(up, m_up[idx[alive]], m_dn[idx[alive]])
        idx[alive] += np.where(up, 1, -1)
        absorbed = (idx[alive] == 0) | (idx[alive] == pts.size - 1)
        alive = alive[~absorbed]
    raise SeriesError("scheme E batch exceeded the step budget")
