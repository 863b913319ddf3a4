"""Four independent SBM path constructions plus coupled-pair generation.

Every generator has a single-path form (one path per RngStream) and a batch
form used by the validation layer; batch path i draws from rng.child(i), so a
path is bit-identical whether generated alone or inside any batch, for any
worker layout.

The lattice walk consumes one uniform per time step.  Off 0 the uniform drives
a symmetric +/-1 step; the step leaving 0 is deterministic in modulus (always
to distance 1), so its uniform is re-read against alpha to sign the excursion.
|path| therefore never depends on alpha: the reflected-modulus identity holds
pathwise under a shared stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from .core import (
    ParameterError,
    PiecewiseDiffusion,
    RngStream,
    SampledPath,
    SkewParameter,
)
from .transform import SkewSDE, legall_function, sde_from_divergence


@dataclass(frozen=True)
class WalkSpec:
    """Random-walk scale (space step 1/n, time step 1/n^2), horizon and start."""

    n: int
    T: float
    alpha: SkewParameter
    x0: float = 0.0
    zero_step_law: Optional[tuple[tuple[int, float], ...]] = None  # (value, prob)

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"walk scale n must be >= 1, got {self.n}")
        if self.T <= 0:
            raise ParameterError(f"horizon must be positive, got {self.T}")
        if abs(self.x0 * self.n - round(self.x0 * self.n)) > 1e-9:
            raise ParameterError(f"x0={self.x0} does not sit on the 1/{self.n} grid")
        if self.zero_step_law is not None:
            probs = np.array([p for _, p in self.zero_step_law])
            vals = np.array([v for v, _ in self.zero_step_law])
            if abs(probs.sum() - 1.0) > 1e-12 or np.any(probs < 0):
                raise ParameterError("zero-step law probabilities must sum to 1")
            if not np.all(vals == np.round(vals)):
                raise ParameterError("zero-step law must be integer valued")

    @property
    def steps(self) -> int:
        return int(np.ceil(self.n * self.n * self.T - 1e-9))

    def effective_alpha(self) -> float:
        """alpha, or E[Z+]/E[|Z|] under a generalized zero-step law."""
        if self.zero_step_law is None:
            return self.alpha.alpha
        vals = np.array([v for v, _ in self.zero_step_law], dtype=float)
        probs = np.array([p for _, p in self.zero_step_law])
        e_abs = float(np.sum(np.abs(vals) * probs))
        if e_abs == 0:
            raise ParameterError("zero-step law is degenerate at 0")
        return float(np.sum(np.clip(vals, 0, None) * probs)) / e_abs


def _walk_from_uniforms(u: np.ndarray, m0: int, alpha: float) -> np.ndarray:
    """One lattice walk from one uniform-per-step stream (reference construction)."""
    steps = u.shape[0]
    drv = np.where(u < 0.5, 1, -1).astype(np.int32)
    w = np.empty(steps + 1, dtype=np.int32)
    w[0] = abs(m0)
    np.cumsum(drv, out=w[1:])
    w[1:] += abs(m0)
    r = np.abs(w)
    zero_pos = np.flatnonzero(w[:-1] == 0)
    head_sign = 1 if m0 >= 0 else -1
    if zero_pos.size == 0:
        return head_sign * r
    eps = np.where(u[zero_pos] < alpha, 1, -1).astype(np.int32)
    # excursion label of each time index: number of zeros strictly before it, -1
    label = np.zeros(steps + 1, dtype=np.int64)
    np.add.at(label, zero_pos + 1, 1)
    label = np.cumsum(label) - 1
    signs = eps[np.clip(label, 0, eps.size - 1)]
    signs[label < 0] = head_sign
    return signs * r


def _walk_zero_law_chunk(spec: WalkSpec, streams: list[RngStream]) -> np.ndarray:
    """Generalized zero-step law (Remark-13 walk): direct per-step construction."""
    steps = spec.steps
    m0 = int(round(spec.x0 * spec.n))
    vals = np.array([v for v, _ in spec.zero_step_law], dtype=np.int32)
    cdf = np.cumsum([p for _, p in spec.zero_step_law])
    n_paths = len(streams)
    u = np.empty((n_paths, steps))
    for i, s in enumerate(streams):
        u[i] = s.generator().random(steps)
    out = np.empty((n_paths, steps + 1), dtype=np.int32)
    pos = np.full(n_paths, m0, dtype=np.int32)
    out[:, 0] = pos
    for k in range(steps):
        uk = u[:, k]
        at_zero = pos == 0
        step = np.where(uk < 0.5, 1, -1).astype(np.int32)
        if np.any(at_zero):
            z_idx = np.searchsorted(cdf, uk[at_zero], side="right")
            step[at_zero] = vals[np.clip(z_idx, 0, vals.size - 1)]
        pos = pos + step
        out[:, k + 1] = pos
    return out


def gen_random_walk(spec: WalkSpec, rng: RngStream) -> SampledPath:
    """Skew random walk (P[up]=1/2 off 0, P[up from 0]=alpha) at scale n:
    values X_k = S_k / n on the uniform grid dt = 1/n^2."""
    if spec.zero_step_law is None:
        lattice = _walk_from_uniforms(
            rng.generator().random(spec.steps), int(round(spec.x0 * spec.n)),
            spec.alpha.alpha,
        )
    else:
        lattice = _walk_zero_law_chunk(spec, [rng])[0]
    return SampledPath(values=lattice / spec.n, dt=1.0 / spec.n**2)


def walk_lattice_chunks(
    spec: WalkSpec, rng: RngStream, n_paths: int, chunk: int = 256
) -> Iterator[np.ndarray]:
    """Yield (chunk, steps+1) int32 lattice matrices; path i uses rng.child(i)."""
    m0 = int(round(spec.x0 * spec.n))
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        if spec.zero_step_law is None:
            block = np.empty((hi - lo, spec.steps + 1), dtype=np.int32)
            for i in range(lo, hi):
                u = rng.child(i).generator().random(spec.steps)
                block[i - lo] = _walk_from_uniforms(u, m0, spec.alpha.alpha)
        else:
            block = _walk_zero_law_chunk(spec, [rng.child(i) for i in range(lo, hi)])
        yield block


def walk_stats_batch(
    spec: WalkSpec, rng: RngStream, n_paths: int, band_eps: float = 0.0
) -> dict:
    """Single-pass walk functionals via the jit kernel (same draws as the
    reference construction): terminal values, occupation fractions of the
    nonnegative half-line (ties at 0 halved), and band counts for the
    local-time estimators at bandwidth band_eps."""
    if spec.zero_step_law is not None:
        raise ParameterError("kernel path supports the default +/-1 walk only")
    from . import _kernels

    steps = spec.steps
    m0 = int(round(spec.x0 * spec.n))
    band_m = int(round(band_eps * spec.n))
    rows = max(16, int(3.2e7 / max(steps, 1)))
    terminal = np.empty(n_paths)
    occupation = np.empty(n_paths)
    n_band = np.empty(n_paths, dtype=np.int64)
    n_bplus = np.empty(n_paths, dtype=np.int64)
    n_bminus = np.empty(n_paths, dtype=np.int64)
    n_zero = np.empty(n_paths, dtype=np.int64)
    buf = np.empty((min(rows, n_paths), steps))
    for lo in range(0, n_paths, rows):
        hi = min(lo + rows, n_paths)
        u = buf[: hi - lo]
        for i in range(lo, hi):
            rng.child(i).generator().random(out=u[i - lo])
        term, npos, nzero, nb, nbp, nbm = _kernels.walk_stats(u, m0, spec.alpha.alpha,
                                                              band_m)
        terminal[lo:hi] = term / spec.n
        occupation[lo:hi] = (npos + 0.5 * nzero) / (steps + 1)
        n_band[lo:hi] = nb
        n_bplus[lo:hi] = nbp
        n_bminus[lo:hi] = nbm
        n_zero[lo:hi] = nzero
    return {
        "terminal": terminal,
        "occupation": occupation,
        "n_band": n_band,
        "n_band_plus": n_bplus,
        "n_band_minus": n_bminus,
        "n_zero": n_zero,
        "steps": steps,
    }


def walk_marginal_batch(spec: WalkSpec, rng: RngStream, n_paths: int) -> np.ndarray:
    """Terminal values X_T of n_paths walks (path i drawn from rng.child(i))."""
    if spec.zero_step_law is None:
        return walk_stats_batch(spec, rng, n_paths)["terminal"]
    out = np.empty(n_paths)
    lo = 0
    for block in walk_lattice_chunks(spec, rng, n_paths):
        out[lo:lo + block.shape[0]] = block[:, -1] / spec.n
        lo += block.shape[0]
    return out


def gen_excursion_flip(n: int, T: float, alpha: SkewParameter, rng: RngStream) -> SampledPath:
    """Reflected walk at scale n with each excursion signed +1 w.p. alpha.

    The reflected walk is |W| for a symmetric walk W; excursion signs come from
    dedicated uniforms drawn after the step stream (one per excursion).
    """
    spec = WalkSpec(n=n, T=T, alpha=alpha)
    g = rng.generator()
    u = g.random(spec.steps)
    w = np.empty(spec.steps + 1, dtype=np.int32)
    w[0] = 0
    np.cumsum(np.where(u < 0.5, 1, -1).astype(np.int32), out=w[1:])
    r = np.abs(w)
    zero_pos = np.flatnonzero(w[:-1] == 0)
    if zero_pos.size == 0:
        return SampledPath(values=r / n, dt=1.0 / n**2)
    eps = np.where(g.random(zero_pos.size) < alpha.alpha, 1, -1).astype(np.int32)
    label = np.zeros(spec.steps + 1, dtype=np.int64)
    np.add.at(label, zero_pos + 1, 1)
    label = np.cumsum(label) - 1
    signs = eps[np.clip(label, 0, eps.size - 1)]
    signs[label < 0] = 1
    return SampledPath(values=signs * r / n, dt=1.0 / n**2)


def excursion_flip_marginal_batch(
    n: int, T: float, alpha: SkewParameter, rng: RngStream, n_paths: int
) -> np.ndarray:
    out = np.empty(n_paths)
    for i in range(n_paths):
        out[i] = gen_excursion_flip(n, T, alpha, rng.child(i)).values[-1]
    return out


def sbm_sde(skew: SkewParameter) -> SkewSDE:
    """dX = dB + beta dL^0(X): unit diffusion, no drift, one atom at 0."""
    if not 0.0 < skew.alpha < 1.0:
        raise ParameterError("the SDE form needs |beta| < 1 (alpha strictly in (0,1))")
    from .core import SignedAtomicMeasure

    ones = lambda x: np.ones_like(np.asarray(x, dtype=float))
    zeros = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return SkewSDE(
        sigma=ones, drift=zeros, nu=SignedAtomicMeasure(((0.0, skew.beta),)),
        sigma_lo=1.0, sigma_hi=1.0,
    )


def _euler_setup(sde: Union[SkewSDE, PiecewiseDiffusion]):
    if isinstance(sde, PiecewiseDiffusion):
        sde = sde_from_divergence(sde)
    tr = legall_function(sde.nu)

    def sigma_y(y):
        x = tr.F_inv(y)
        return tr.f_sym(x) * sde.sigma(x)

    def drift_y(y):
        x = tr.F_inv(y)
        return tr.f_sym(x) * sde.drift(x)

    return sde, tr, sigma_y, drift_y


def gen_euler(
    sde: Union[SkewSDE, PiecewiseDiffusion],
    dt: float,
    T: float,
    x0: float,
    rng: RngStream,
) -> SampledPath:
    """Euler-Maruyama on Y = F_nu(X) (local time removed), mapped back through
    F_nu^{-1}; the Brownian increments are recorded for residual tests."""
    if dt <= 0 or T <= 0:
        raise ParameterError("dt and T must be positive")
    sde, tr, sigma_y, drift_y = _euler_setup(sde)
    steps = int(np.ceil(T / dt - 1e-9))
    db = np.sqrt(dt) * rng.generator().standard_normal(steps)
    y = np.empty(steps + 1)
    y[0] = float(tr.F(x0))
    for k in range(steps):
        yk = np.array([y[k]])
        y[k + 1] = y[k] + float(sigma_y(yk)[0]) * db[k] + float(drift_y(yk)[0]) * dt
    x = np.asarray(tr.F_inv(y), dtype=float)
    if not np.all(np.isfinite(x)):
        raise ParameterError("Euler step overflow")
    return SampledPath(values=x, dt=dt, noise=db)


def euler_marginal_batch(
    sde: Union[SkewSDE, PiecewiseDiffusion],
    dt: float,
    T: float,
    x0: float,
    rng: RngStream,
    n_paths: int,
    chunk: int = 16384,
) -> np.ndarray:
    """Terminal values of the Euler scheme (path i uses rng.child(i))."""
    sde, tr, sigma_y, drift_y = _euler_setup(sde)
    steps = int(np.ceil(T / dt - 1e-9))
    sq = np.sqrt(dt)
    out = np.empty(n_paths)
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        db = np.empty((hi - lo, steps))
        for i in range(lo, hi):
            db[i - lo] = rng.child(i).generator().standard_normal(steps)
        y = np.full(hi - lo, float(tr.F(x0)))
        for k in range(steps):
            y += sigma_y(y) * (sq * db[:, k]) + drift_y(y) * dt
        out[lo:hi] = tr.F_inv(y)
    return out


def euler_sbm_marginal_batch(
    alpha: SkewParameter, dt: float, T: float, x0: float, rng: RngStream, n_paths: int
) -> np.ndarray:
    """Kernel-accelerated terminal values of the SBM Euler scheme (same draws
    and update rule as euler_marginal_batch on sbm_sde(alpha))."""
    from . import _kernels

    if not 0.0 < alpha.alpha < 1.0:
        raise ParameterError("SBM Euler needs alpha strictly in (0, 1)")
    r = (1.0 - alpha.beta) / (1.0 + alpha.beta)
    steps = int(np.ceil(T / dt - 1e-9))
    sq = np.sqrt(dt)
    y0 = x0 * r if x0 >= 0 else x0
    rows = max(16, int(3.2e7 / max(steps, 1)))
    out = np.empty(n_paths)
    buf = np.empty((min(rows, n_paths), steps))
    for lo in range(0, n_paths, rows):
        hi = min(lo + rows, n_paths)
        db = buf[: hi - lo]
        for i in range(lo, hi):
            rng.child(i).generator().standard_normal(out=db[i - lo])
        db *= sq
        out[lo:hi] = _kernels.euler_sbm_terminal(db, r, y0)
    return out


def euler_paths_batch(
    sde: Union[SkewSDE, PiecewiseDiffusion],
    dt: float,
    T: float,
    x0: float,
    rng: RngStream,
    n_paths: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Full Euler paths with their noise record: (paths (n, steps+1), db (n, steps))."""
    sde, tr, sigma_y, drift_y = _euler_setup(sde)
    steps = int(np.ceil(T / dt - 1e-9))
    sq = np.sqrt(dt)
    db = np.empty((n_paths, steps))
    for i in range(n_paths):
        db[i] = rng.child(i).generator().standard_normal(steps)
    db *= sq
    y = np.full(n_paths, float(tr.F(x0)))
    paths = np.empty((n_paths, steps + 1))
    paths[:, 0] = x0
    for k in range(steps):
        y = y + sigma_y(y) * db[:, k] + drift_y(y) * dt
        paths[:, k + 1] = tr.F_inv(y)
    return paths, db


def euler_shared_noise_pair(
    beta1: float,
    beta2: float,
    x0: float,
    dt: float,
    T: float,
    rng: RngStream,
    n_paths: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal values of two SBM Euler runs driven by the same increments."""
    from .core import make_skew

    outs = []
    for beta in (beta1, beta2):
        sde, tr, sigma_y, drift_y = _euler_setup(sbm_sde(make_skew(beta=beta)))
        steps = int(np.ceil(T / dt - 1e-9))
        sq = np.sqrt(dt)
        out = np.empty(n_paths)
        chunk = 16384
        for lo in range(0, n_paths, chunk):
            hi = min(lo + chunk, n_paths)
            db = np.empty((hi - lo, steps))
            for i in range(lo, hi):
                db[i - lo] = rng.child(i).generator().standard_normal(steps)
            y = np.full(hi - lo, float(tr.F(x0)))
            for k in range(steps):
                y += sigma_y(y) * (sq * db[:, k])
            out[lo:hi] = tr.F_inv(y)
        outs.append(out)
    return outs[0], outs[1]


def gen_follow_leader(
    delta: float, T: float, alpha: SkewParameter, rng: RngStream
) -> SampledPath:
    """Follow-the-leader construction: two Brownian clocks, the laggard advances.

    With gamma = (1+beta)/(1-beta), clock 1 advances by delta when
    B2_{T2} > gamma B1_{T1}, else clock 2; X = (gamma U1 - Z2) - (U1 - Z1) and
    L = (1 + gamma) U1 with U1 the running max of Z1.  alpha must lie strictly
    inside (0, 1); the construction is undefined at the boundary.
    """
    gamma = _leader_gamma(alpha)
    steps = _leader_steps(delta, T)
    dn = rng.generator().standard_normal((1, steps))
    x = _follow_leader_from_noise(dn, delta, gamma)
    return SampledPath(values=x[0], dt=delta)


def follow_leader_marginal_batch(
    delta: float, T: float, alpha: SkewParameter, rng: RngStream, n_paths: int,
    chunk: int = 4096,
) -> np.ndarray:
    from . import _kernels

    gamma = _leader_gamma(alpha)
    steps = _leader_steps(delta, T)
    out = np.empty(n_paths)
    chunk = max(16, min(chunk, int(3.2e7 / max(steps, 1))))
    buf = np.empty((min(chunk, n_paths), steps))
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        dn = buf[: hi - lo]
        for i in range(lo, hi):
            rng.child(i).generator().standard_normal(out=dn[i - lo])
        out[lo:hi] = _kernels.leader_terminal(dn, np.sqrt(delta), gamma)
    return out


def follow_leader_paths_batch(
    delta: float, T: float, alpha: SkewParameter, rng: RngStream, n_paths: int
) -> tuple[np.ndarray, np.ndarray]:
    """Full follow-the-leader paths plus the reported local time L = (1+gamma) U1."""
    gamma = _leader_gamma(alpha)
    steps = _leader_steps(delta, T)
    dn = np.empty((n_paths, steps))
    for i in range(n_paths):
        dn[i] = rng.child(i).generator().standard_normal(steps)
    return _follow_leader_from_noise(dn, delta, gamma, with_local_time=True)


def _leader_gamma(alpha: SkewParameter) -> float:
    if not 0.0 < alpha.alpha < 1.0:
        raise ParameterError("follow-the-leader needs alpha strictly in (0, 1)")
    return (1.0 + alpha.beta) / (1.0 - alpha.beta)


def _leader_steps(delta: float, T: float) -> int:
    if delta <= 0 or T <= 0:
        raise ParameterError("delta and T must be positive")
    return int(np.ceil(T / delta - 1e-9))


def _follow_leader_from_noise(dn, delta, gamma, with_local_time=False):
    # one normal per micro-step, routed to whichever clock advances
    n_paths, steps = dn.shape
    z1 = np.zeros(n_paths)
    z2 = np.zeros(n_paths)
    u1 = np.zeros(n_paths)  # running max of z1
    x = np.empty((n_paths, steps + 1))
    x[:, 0] = 0.0
    if with_local_time:
        lt = np.empty((n_paths, steps + 1))
        lt[:, 0] = 0.0
    sq = np.sqrt(delta)
    for k in range(steps):
        advance_1 = z2 > gamma * z1
        inc = sq * dn[:, k]
        z1 = np.where(advance_1, z1 + inc, z1)
        z2 = np.where(advance_1, z2, z2 + inc)
        np.maximum(u1, z1, out=u1)
        x[:, k + 1] = (gamma * u1 - z2) - (u1 - z1)
        if with_local_time:
            lt[:, k + 1] = (1.0 + gamma) * u1
    if with_local_time:
        return x, lt
    return x


def gen_coupled_walk_pair(
    alpha1: SkewParameter,
    alpha2: SkewParameter,
    x1: float,
    x2: float,
    spec: WalkSpec,
    rng: RngStream,
) -> tuple[SampledPath, SampledPath]:
    """Two walks on the same uniform stream: off 0 both move up iff U < 1/2, at 0
    walk i moves up iff U < alpha_i.  With alpha1 <= alpha2 and x1 <= x2 (equal
    lattice parity) the order S1_k <= S2_k holds pathwise, and equal-alpha pairs
    stay glued after they first meet.  spec supplies (n, T); its alpha is unused.
    """
    lat1, lat2 = _coupled_pair_lattice(alpha1, alpha2, x1, x2, spec, [rng])
    dt = 1.0 / spec.n**2
    return (
        SampledPath(values=lat1[0] / spec.n, dt=dt),
        SampledPath(values=lat2[0] / spec.n, dt=dt),
    )


def _coupled_pair_lattice(alpha1, alpha2, x1, x2, spec, streams):
    if alpha1.alpha > alpha2.alpha:
        raise ParameterError("need alpha1 <= alpha2 for the monotone coupling")
    if x1 > x2:
        raise ParameterError("need x1 <= x2 for the monotone coupling")
    m1 = int(round(x1 * spec.n))
    m2 = int(round(x2 * spec.n))
    if abs(x1 * spec.n - m1) > 1e-9 or abs(x2 * spec.n - m2) > 1e-9:
        raise ParameterError("starting points must sit on the 1/n lattice")
    if (m2 - m1) % 2 != 0:
        raise ParameterError(
            f"parity mismatch: lattice starts {m1} and {m2} cannot stay ordered"
        )
    steps = spec.steps
    n_paths = len(streams)
    u = np.empty((n_paths, steps))
    for i, s in enumerate(streams):
        u[i] = s.generator().random(steps)
    lat1 = np.empty((n_paths, steps + 1), dtype=np.int32)
    lat2 = np.empty((n_paths, steps + 1), dtype=np.int32)
    p1 = np.full(n_paths, m1, dtype=np.int32)
    p2 = np.full(n_paths, m2, dtype=np.int32)
    lat1[:, 0] = p1
    lat2[:, 0] = p2
    for k in range(steps):
        uk = u[:, k]
        up_off = uk < 0.5
        s1 = np.where(p1 == 0, np.where(uk < alpha1.alpha, 1, -1),
                      np.where(up_off, 1, -1)).astype(np.int32)
        s2 = np.where(p2 == 0, np.where(uk < alpha2.alpha, 1, -1),
                      np.where(up_off, 1, -1)).astype(np.int32)
        p1 = p1 + s1
        p2 = p2 + s2
        lat1[:, k + 1] = p1
        lat2[:, k + 1] = p2
    return lat1, lat2


def coupled_walk_stats_batch(
    alpha1: SkewParameter,
    alpha2: SkewParameter,
    x1: float,
    x2: float,
    n: int,
    horizons: tuple[float, ...],
    rng: RngStream,
    n_paths: int,
    chunk: int = 4096,
) -> dict:
    """Order violations (exact count) and coalescence fractions by horizon.

    Coalescence means the pair has met AND stays identical afterwards; with
    alpha1 = alpha2 meeting implies gluing, which is what Prop-14-style checks
    use.  Runs one pass to max(horizons).
    """
    from . import _kernels

    T = max(horizons)
    spec = WalkSpec(n=n, T=T, alpha=alpha2)
    m1 = int(round(x1 * n))
    m2 = int(round(x2 * n))
    if (m2 - m1) % 2 != 0:
        raise ParameterError("parity mismatch")
    steps = spec.steps
    violations = 0
    first_meet = np.full(n_paths, np.inf)
    rows = max(16, min(chunk, int(3.2e7 / max(steps, 1))))
    buf = np.empty((min(rows, n_paths), steps))
    for lo in range(0, n_paths, rows):
        hi = min(lo + rows, n_paths)
        u = buf[: hi - lo]
        for i in range(lo, hi):
            rng.child(i).generator().random(out=u[i - lo])
        viol, meet_step = _kernels.coupled_walk_stats(u, m1, m2, alpha1.alpha,
                                                      alpha2.alpha)
        violations += int(viol.sum())
        met = meet_step >= 0
        block = np.full(hi - lo, np.inf)
        block[met] = meet_step[met] / n**2
        first_meet[lo:hi] = block
    coalesced = {
        float(h): float(np.mean(first_meet <= h)) for h in horizons
    }
    return {"order_violations": violations, "coalesced_fraction": coalesced,
            "first_meet_times": first_meet}
