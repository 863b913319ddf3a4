"""Statistical estimators and hypothesis tests against the closed-form laws.

Every check returns a ValidationReport whose pass flag is a pure function of
(estimate, target, tolerance rule); reports serialize to JSON and are
reproducible bit-exactly from their recorded seed and sample size.

KS critical constants are harness parameters (1.628 at 1%, 1.358 at 5%),
cross-checked against a simulated null distribution in the test suite.
Lattice-valued samples add the analytic half-jump of their lattice CDF to the
KS threshold (the discretization bias the generator contracts allow).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad

from .core import ParameterError, RngStream, SampledPath, SkewParameter, make_skew
from .density import transition_cdf
from .generators import (
    WalkSpec,
    coupled_walk_stats_batch,
    euler_paths_batch,
    euler_shared_noise_pair,
    sbm_sde,
    walk_lattice_chunks,
)

KS_CONST = {0.01: 1.628, 0.05: 1.358}


@dataclass(frozen=True)
class ValidationReport:
    name: str
    target: float
    estimate: float
    stat: float  # standard error or test statistic, per tolerance rule
    tolerance: str
    passed: bool
    seed: Optional[int] = None
    sample_size: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def ks_statistic(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample two-sided Kolmogorov-Smirnov statistic."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    f = np.asarray(cdf(s), dtype=float)
    up = np.max(np.arange(1, n + 1) / n - f)
    dn = np.max(f - np.arange(0, n) / n)
    return float(max(up, dn))


def occupation_cdf(x, alpha: SkewParameter):
    """Occupation-fraction CDF of the positive half-line at time 1:
    F(x) = (2/pi) arcsin sqrt(x / (x + (alpha/(1-alpha))^2 (1-x)))."""
    al = alpha.alpha
    if not 0.0 < al < 1.0:
        raise ParameterError("occupation law needs alpha strictly in (0, 1)")
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    r2 = (al / (1.0 - al)) ** 2
    u = x / (x + r2 * (1.0 - x))
    return (2.0 / np.pi) * np.arcsin(np.sqrt(u))


def occupation_fraction(values: np.ndarray) -> np.ndarray:
    """Fraction of grid time spent >= 0, ties at 0 split evenly; values may be a
    single path (1d) or a path matrix (2d, paths in rows)."""
    v = np.asarray(values)
    pos = (v > 0).sum(axis=-1) + 0.5 * (v == 0).sum(axis=-1)
    return pos / v.shape[-1]


def walk_occupation_batch(spec: WalkSpec, rng: RngStream, n_paths: int) -> np.ndarray:
    from .generators import walk_stats_batch

    if spec.zero_step_law is None:
        return walk_stats_batch(spec, rng, n_paths)["occupation"]
    chunk = max(16, int(3e7 / (spec.steps + 1)))
    out = np.empty(n_paths)
    lo = 0
    for block in walk_lattice_chunks(spec, rng, n_paths, chunk=chunk):
        out[lo:lo + block.shape[0]] = occupation_fraction(block)
        lo += block.shape[0]
    return out


def occupation_statistics(
    paths: Union[Sequence[SampledPath], np.ndarray],
    alpha: SkewParameter,
    level: float = 0.01,
    seed: Optional[int] = None,
) -> ValidationReport:
    """KS of per-path occupation fractions A+(1) against the closed-form CDF."""
    if isinstance(paths, np.ndarray) and paths.ndim == 1:
        fracs = paths
        n_paths = fracs.size
    else:
        for p in paths:
            if p.values[0] != 0.0:
                raise ParameterError("occupation statistics need paths started at 0")
        fracs = np.array([occupation_fraction(p.values) for p in paths])
        n_paths = len(paths)
    stat = ks_statistic(fracs, lambda x: occupation_cdf(x, alpha))
    threshold = KS_CONST[level] / np.sqrt(n_paths)
    return ValidationReport(
        name=f"occupation_arcsine_alpha_{alpha.alpha}",
        target=0.0,
        estimate=stat,
        stat=threshold,
        tolerance=f"KS <= {KS_CONST[level]}/sqrt(N) at level {level}",
        passed=bool(stat <= threshold),
        seed=seed,
        sample_size=n_paths,
        extra={"median_fraction": float(np.median(fracs))},
    )


def local_time_statistics(
    paths: Union[Sequence[SampledPath], tuple[np.ndarray, float]],
    alpha: SkewParameter,
    eps: float,
    x0: float = 0.0,
    noise: Optional[np.ndarray] = None,
    residual_threshold: float = 0.05,
    rel_tol: float = 0.05,
    seed: Optional[int] = None,
) -> ValidationReport:
    """Bandwidth-eps local-time estimates: one-sided ratios against 2a and 2(1-a),
    plus the SDE residual max_t |X_t - x0 - B_t - beta L_t| when noise is given.

    Grid points exactly at 0 contribute half to each side (symmetric local time
    convention).  Accepts a list of uniform-grid SampledPath or (matrix, dt).
    """
    if eps <= 0:
        raise ParameterError("bandwidth eps must be positive")
    if isinstance(paths, tuple):
        mat, dt = paths
    else:
        dts = {p.dt for p in paths}
        if len(dts) != 1 or None in dts:
            raise ParameterError("local-time estimation needs one uniform grid")
        dt = dts.pop()
        mat = np.stack([p.values for p in paths])
        if noise is None and all(p.noise is not None for p in paths):
            noise = np.stack([p.noise for p in paths])
    at_zero = mat == 0.0
    l_sym = (np.abs(mat) <= eps).sum(axis=1) * dt / (2 * eps)
    l_plus = (((mat > 0) & (mat <= eps)).sum(axis=1) + 0.5 * at_zero.sum(axis=1)) * dt / eps
    l_minus = (((mat < 0) & (mat >= -eps)).sum(axis=1) + 0.5 * at_zero.sum(axis=1)) * dt / eps
    ratio_plus = float(l_plus.mean() / l_sym.mean())
    ratio_minus = float(l_minus.mean() / l_sym.mean())
    target_plus = 2.0 * alpha.alpha
    target_minus = 2.0 * (1.0 - alpha.alpha)
    err = max(
        abs(ratio_plus - target_plus) / target_plus if target_plus else 0.0,
        abs(ratio_minus - target_minus) / target_minus if target_minus else 0.0,
    )
    extra = {
        "ratio_plus": ratio_plus,
        "ratio_minus": ratio_minus,
        "target_plus": target_plus,
        "target_minus": target_minus,
        "mean_local_time": float(l_sym.mean()),
        "eps": eps,
        "dt": float(dt),
    }
    passed = err <= rel_tol
    if noise is not None:
        beta = alpha.beta
        b_path = np.cumsum(noise, axis=1)
        running = np.cumsum(np.abs(mat[:, 1:]) <= eps, axis=1) * dt / (2 * eps)
        residual = np.max(
            np.abs(mat[:, 1:] - x0 - b_path - beta * running), axis=1
        )
        frac_ok = float(np.mean(residual <= residual_threshold))
        extra["residual_fraction_within"] = frac_ok
        extra["residual_threshold"] = residual_threshold
        extra["residual_p95"] = float(np.quantile(residual, 0.95))
        passed = passed and frac_ok >= 0.95
    elif isinstance(paths, Sequence) and any(getattr(p, "noise", None) is None for p in paths):
        pass  # residual check skipped without a noise record
    return ValidationReport(
        name=f"local_time_ratios_alpha_{alpha.alpha}",
        target=target_plus,
        estimate=ratio_plus,
        stat=err,
        tolerance=f"one-sided ratio relative error <= {rel_tol}"
        + ("; residual fraction >= 0.95" if noise is not None else ""),
        passed=bool(passed),
        seed=seed,
        sample_size=mat.shape[0],
        extra=extra,
    )


def gof_marginal(
    samples: np.ndarray,
    t: float,
    x0: float,
    alpha: SkewParameter,
    level: float = 0.01,
    lattice_allowance: float = 0.0,
    seed: Optional[int] = None,
    name: str = "gof_marginal",
) -> ValidationReport:
    """KS against the closed-form CDF plus a binomial z-test of the sign frequency."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ParameterError("empty sample")
    stat = ks_statistic(samples, lambda z: transition_cdf(t, x0, z, alpha))
    n = samples.size
    threshold = KS_CONST[level] / np.sqrt(n) + lattice_allowance
    sign_target = 1.0 - float(transition_cdf(t, x0, 0.0, alpha))
    sign_freq = float(np.mean(samples >= 0))
    sign_sigma = np.sqrt(max(sign_target * (1 - sign_target), 1e-300) / n)
    sign_ok = abs(sign_freq - sign_target) <= 3 * sign_sigma + lattice_allowance
    return ValidationReport(
        name=name,
        target=sign_target,
        estimate=sign_freq,
        stat=stat,
        tolerance=(
            f"KS <= {KS_CONST[level]}/sqrt(N) + {lattice_allowance:.2e}; "
            f"|sign freq - target| <= 3 sigma + allowance"
        ),
        passed=bool(stat <= threshold and sign_ok),
        seed=seed,
        sample_size=n,
        extra={
            "ks_stat": stat,
            "ks_threshold": threshold,
            "sign_sigma": float(sign_sigma),
            "t": t,
            "x0": x0,
            "alpha": alpha.alpha,
        },
    )


def walk_lattice_allowance(n: int, t: float, alpha: SkewParameter) -> float:
    """Half of the maximal jump of the lattice-walk CDF at scale n: the walk at
    integer time n^2 t lives on a parity sublattice of spacing 2/n, so the CDF
    carries steps of height ~ (2/n) * sup density."""
    density_cap = (1.0 + abs(alpha.beta)) / np.sqrt(2 * np.pi * t)
    return density_cap * (2.0 / n) / 2.0


def convergence_rate(
    alpha: SkewParameter,
    n_list: Sequence[int],
    reference_n: int,
    rng: RngStream,
    T: float = 1.0,
    replications: int = 1000,
    n_probes: int = 65,
    slope_bound: float = -0.35,
    seed: Optional[int] = None,
) -> ValidationReport:
    """Embedded-walk rate experiment: one fine skew walk per replication stands in
    for the diffusion; coarse walks are read off its successive grid-crossing
    times; sup_t E|X^n_t - X_t| is fitted against n on log-log axes."""
    n_list = sorted(int(n) for n in n_list)
    if any(reference_n % n != 0 for n in n_list):
        raise ParameterError("reference_n must be a multiple of every n")
    if reference_n < 16 * max(n_list):
        raise ParameterError(
            f"reference scale {reference_n} too coarse for n={max(n_list)} (ratio < 16)"
        )
    from .generators import _walk_from_uniforms

    steps_ref = int(np.ceil(reference_n**2 * T - 1e-9))
    probes = np.linspace(0.0, T, n_probes)
    probe_idx = np.minimum((probes * reference_n**2).astype(np.int64), steps_ref)
    err_sum = np.zeros((len(n_list), n_probes))
    for r in range(replications):
        u = rng.child(r).generator().random(steps_ref)
        w = _walk_from_uniforms(u, 0, alpha.alpha)
        x_ref = w[probe_idx] / reference_n
        for j, n in enumerate(n_list):
            m = reference_n // n
            mask = w % m == 0
            v = w[mask] // m
            keep = np.concatenate(([True], np.diff(v) != 0))
            coarse = v[keep]
            k_needed = int(np.ceil(n * n * T)) + 1
            if coarse.size < k_needed:  # hold the last crossing value
                coarse = np.concatenate(
                    [coarse, np.full(k_needed - coarse.size, coarse[-1], dtype=coarse.dtype)]
                )
            t_coarse = np.arange(coarse.size) / n**2
            x_n = np.interp(probes, t_coarse, coarse / n)
            err_sum[j] += np.abs(x_n - x_ref)
    sup_err = (err_sum / replications).max(axis=1)
    slope = float(np.polyfit(np.log(n_list), np.log(sup_err), 1)[0])
    decreasing = bool(np.all(np.diff(sup_err) < 0))
    return ValidationReport(
        name=f"embedded_walk_rate_alpha_{alpha.alpha}",
        target=slope_bound,
        estimate=slope,
        stat=float(sup_err[-1]),
        tolerance=f"errors strictly decreasing and slope <= {slope_bound}",
        passed=bool(decreasing and slope <= slope_bound),
        seed=seed,
        sample_size=replications,
        extra={"n_list": list(n_list), "sup_errors": sup_err.tolist(),
               "reference_n": reference_n},
    )


def rescaling_limit(
    b: Callable[[np.ndarray], np.ndarray],
    support: tuple[float, float],
    n: int,
    sample_size: int,
    rng: RngStream,
    dt_near: float = 0.01,
    bias_allowance: float = 0.01,
    seed: Optional[int] = None,
) -> ValidationReport:
    """Sign frequency of X_{n^2}/n for dX = dB + b dt against e^k/(1+e^k), k = 2∫b.

    Outside the drift support the motion is exact Brownian, so steps there grow
    like ((dist-to-support)/4)^2; inside, Euler with dt_near.
    """
    lo_s, hi_s = support
    kappa, _ = quad(lambda y: float(b(np.asarray(y))), lo_s, hi_s, limit=200)
    kappa *= 2.0
    target = np.exp(kappa) / (1.0 + np.exp(kappa))
    horizon = float(n) ** 2
    g = rng.generator()
    x = np.zeros(sample_size)
    t = np.zeros(sample_size)
    active = np.arange(sample_size)
    margin = 1.0
    while active.size:
        xa = x[active]
        dist = np.maximum(np.maximum(lo_s - xa, xa - hi_s), 0.0)
        dt = np.where(dist > margin, (dist / 4.0) ** 2, dt_near)
        dt = np.minimum(dt, horizon - t[active])
        drift = np.asarray(b(xa), dtype=float)
        x[active] = xa + drift * dt + np.sqrt(dt) * g.standard_normal(active.size)
        t[active] += dt
        active = active[t[active] < horizon - 1e-12]
    freq = float(np.mean(x >= 0))
    sigma = np.sqrt(target * (1 - target) / sample_size)
    tol = 3 * sigma + bias_allowance
    return ValidationReport(
        name="rescaling_limit_sign_frequency",
        target=float(target),
        estimate=freq,
        stat=float(sigma),
        tolerance=f"|freq - target| <= 3 sigma + {bias_allowance}",
        passed=bool(abs(freq - target) <= tol),
        seed=seed,
        sample_size=sample_size,
        extra={"kappa": float(kappa), "n": n, "dt_near": dt_near},
    )


def coupling_checks(
    kind: str,
    rng: RngStream,
    n_paths: int,
    alpha1: float = 0.3,
    alpha2: float = 0.7,
    x1: float = 0.0,
    x2: float = 0.0,
    n: int = 16,
    horizons: tuple[float, ...] = (1.0, 4.0, 16.0),
    beta1: float = 0.2,
    beta2: float = 0.6,
    t: float = 1.0,
    dt: float = 1e-3,
    allowance: Optional[float] = None,
    seed: Optional[int] = None,
) -> ValidationReport:
    """Monotone-coupling checks: kind='walk_order' asserts the lattice order and
    coalescence trend; kind='euler_l1' checks the shared-noise L1 bound
    E|X1_t - X2_t| <= |b1 - b2| sqrt(2t/pi) at x = 0."""
    if kind == "walk_order":
        stats = coupled_walk_stats_batch(
            make_skew(alpha=alpha1), make_skew(alpha=alpha2), x1, x2, n,
            horizons, rng, n_paths,
        )
        fr = stats["coalesced_fraction"]
        hs = sorted(fr)
        monotone = all(fr[a] <= fr[b] for a, b in zip(hs[:-1], hs[1:]))
        same_params = alpha1 == alpha2 and x1 == x2
        ok = stats["order_violations"] == 0 and (monotone or same_params)
        return ValidationReport(
            name="walk_monotone_coupling",
            target=0.0,
            estimate=float(stats["order_violations"]),
            stat=float(fr[hs[-1]]),
            tolerance="0 order violations (exact); coalescence fraction monotone",
            passed=bool(ok),
            seed=seed,
            sample_size=n_paths,
            extra={"coalesced_fraction": fr},
        )
    if kind == "euler_l1":
        if allowance is None:
            allowance = 1.5 * np.sqrt(dt)  # interface excess measures ~0.8 sqrt(dt)
        a, b_vals = euler_shared_noise_pair(beta1, beta2, 0.0, dt, t, rng, n_paths)
        dist = np.abs(a - b_vals)
        bound = abs(beta1 - beta2) * np.sqrt(2 * t / np.pi)
        se = float(dist.std() / np.sqrt(n_paths))
        ok = dist.mean() <= bound + 3 * se + allowance
        return ValidationReport(
            name=f"l1_bound_beta_{beta1}_{beta2}",
            target=float(bound),
            estimate=float(dist.mean()),
            stat=se,
            tolerance=f"mean distance <= bound + 3 se + {allowance}",
            passed=bool(ok),
            seed=seed,
            sample_size=n_paths,
            extra={"beta1": beta1, "beta2": beta2, "dt": dt, "t": t},
        )
    raise ParameterError(f"unknown coupling check kind {kind!r}")


def sbm_local_time_ladder(
    alpha: SkewParameter,
    levels: Sequence[tuple[int, float]],
    rng: RngStream,
    n_paths: int,
    T: float = 1.0,
    final_rel_tol: float = 0.05,
    seed: Optional[int] = None,
) -> ValidationReport:
    """Local-time ratio refinement ladder over (n, eps) levels of walk paths
    (so dt = 1/n^2 and eps jointly refine).

    The lattice walk has the exact skew structure at 0, so the one-sided ratio
    error is dominated by the deterministic half-tie offset ~ |1-2a| / (2 eps n);
    levels with growing eps*n give a monotone trend.  Asserts the worst
    one-sided relative error decreases and meets final_rel_tol at the last level.
    """
    from .generators import walk_stats_batch

    errs = []
    ratios = []
    t_plus = 2.0 * alpha.alpha
    t_minus = 2.0 * (1.0 - alpha.alpha)
    for li, (n, eps) in enumerate(levels):
        spec = WalkSpec(n=int(n), T=T, alpha=alpha)
        stats = walk_stats_batch(spec, rng.child(li), n_paths, band_eps=eps)
        l_sym = stats["n_band"].astype(float)  # common dt/(2 eps) factors cancel
        l_plus = stats["n_band_plus"] + 0.5 * stats["n_zero"]
        l_minus = stats["n_band_minus"] + 0.5 * stats["n_zero"]
        rp = 2.0 * l_plus.mean() / l_sym.mean()
        rm = 2.0 * l_minus.mean() / l_sym.mean()
        err = max(abs(rp - t_plus) / t_plus, abs(rm - t_minus) / t_minus)
        errs.append(float(err))
        ratios.append((float(rp), float(rm)))
    decreasing = bool(np.all(np.diff(errs) < 0))
    final_ok = errs[-1] <= final_rel_tol
    return ValidationReport(
        name=f"local_time_ladder_alpha_{alpha.alpha}",
        target=t_plus,
        estimate=ratios[-1][0],
        stat=float(errs[-1]),
        tolerance=f"errors decreasing over levels; final <= {final_rel_tol}",
        passed=bool(decreasing and final_ok),
        seed=seed,
        sample_size=n_paths,
        extra={"levels": [list(map(float, l)) for l in levels], "errors": errs,
               "ratios": ratios},
    )
