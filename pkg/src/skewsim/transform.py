"""Local-time removal machinery: f_nu / F_nu, divergence-form-to-SDE map,
Brownian reduction with skew points, and drift removal.

f_nu(x) = exp(-2 nu^c((-inf, x])) * prod_{y <= x} (1 - nu({y})) / (1 + nu({y}))
is positive, right-continuous and of bounded variation; F_nu(x) = ∫_0^x f_nu is
strictly increasing.  Y = F_nu(X) turns the SDE with local-time term into a
classical SDE, which is what the Euler and interval-exit schemes step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .core import (
    ParameterError,
    PiecewiseDiffusion,
    SignedAtomicMeasure,
    SkewParameter,
    sbm_coefficients,
    validate_piecewise,
)
from .scale_speed import build as build_scale


@dataclass(frozen=True)
class LeGallTransform:
    """The pair (f_nu, F_nu) with an exact inverse of F_nu."""

    f: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]
    F_inv: Callable[[np.ndarray], np.ndarray]
    f_left: Callable[[np.ndarray], np.ndarray]
    nu: SignedAtomicMeasure

    def f_sym(self, x) -> np.ndarray:
        """(f(x+) + f(x-)) / 2, the symmetric value used by the Ito-Tanaka drift."""
        return 0.5 * (self.f(x) + self.f_left(x))


@dataclass(frozen=True)
class SkewSDE:
    """dX = sigma(X) dB + drift(X) dt + ∫ nu(dy) dL_t^y(X)."""

    sigma: Callable[[np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray], np.ndarray]
    nu: SignedAtomicMeasure
    sigma_lo: float = 0.0
    sigma_hi: float = np.inf


@dataclass(frozen=True)
class BrownianReduction:
    """Y = G(X) behaves like Brownian motion away from finitely many skew points."""

    G: Callable[[np.ndarray], np.ndarray]
    G_inv: Callable[[np.ndarray], np.ndarray]
    skew_points: tuple[tuple[float, float], ...]  # (location in Y-space, beta)


def legall_function(nu: SignedAtomicMeasure) -> LeGallTransform:
    """Build f_nu, F_nu and the inverse of F_nu (bracketed root find, tol 1e-12)."""
    locs = nu.locations
    wts = nu.weights
    if np.any(np.abs(wts) >= 1.0):
        raise ParameterError("atom weights must satisfy |w| < 1 (class M)")
    log_ratios = np.log((1.0 - wts) / (1.0 + wts)) if locs.size else np.zeros(0)
    cum_log = np.concatenate(([0.0], np.cumsum(log_ratios)))  # after k-th atom

    def log_f(x, side_right=True):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(locs, x, side="right" if side_right else "left")
        return -2.0 * nu.cum_continuous(x) + cum_log[idx]

    def f(x):
        return np.exp(log_f(x, side_right=True))

    def f_left(x):
        return np.exp(log_f(x, side_right=False))

    if nu.continuous_cum is None:
        # F is piecewise linear between atoms: exact cumulative and inverse
        knots = np.unique(np.concatenate((locs, [0.0])))
        slopes_right = f(knots)  # slope on [knot_i, knot_{i+1})
        slope_leftmost = float(f(knots[0] - 1.0))
        i0 = int(np.searchsorted(knots, 0.0))
        F_knots = np.zeros(knots.size)
        for j in range(i0 + 1, knots.size):
            F_knots[j] = F_knots[j - 1] + slopes_right[j - 1] * (knots[j] - knots[j - 1])
        for j in range(i0 - 1, -1, -1):
            F_knots[j] = F_knots[j + 1] - slopes_right[j] * (knots[j + 1] - knots[j])

        def F(x):
            x = np.asarray(x, dtype=float)
            idx = np.searchsorted(knots, x, side="right")
            anchor = np.clip(idx - 1, 0, knots.size - 1)
            slope = np.where(idx == 0, slope_leftmost, slopes_right[anchor])
            out = F_knots[anchor] + slope * (x - knots[anchor])
            return out if out.shape else float(out)

        def F_inv(y):
            y = np.asarray(y, dtype=float)
            idx = np.searchsorted(F_knots, y, side="right")
            anchor = np.clip(idx - 1, 0, knots.size - 1)
            slope = np.where(idx == 0, slope_leftmost, slopes_right[anchor])
            out = knots[anchor] + (y - F_knots[anchor]) / slope
            return out if out.shape else float(out)

    else:
        knots = np.unique(np.concatenate((locs, [0.0])))

        def F(x):
            x = np.asarray(x, dtype=float)
            scalar = x.ndim == 0
            x = np.atleast_1d(x)
            out = np.empty_like(x)
            for j, xv in enumerate(x):
                pts = [k for k in knots if min(0.0, xv) < k < max(0.0, xv)]
                out[j], _ = quad(lambda z: f(z), 0.0, xv, points=pts or None,
                                 epsabs=1e-13, limit=200)
            return out[0] if scalar else out

        f_min_guess = float(np.min(f(np.concatenate((knots, knots - 1, knots + 1)))))

        def F_inv(y):
            y = np.asarray(y, dtype=float)
            scalar = y.ndim == 0
            y = np.atleast_1d(y)
            out = np.empty_like(y)
            for j, yv in enumerate(y):
                hw = abs(yv) / max(f_min_guess, 1e-12) + 1.0
                out[j] = brentq(lambda z: float(F(z)) - yv, -hw, hw, xtol=1e-13, rtol=8.9e-16)
            return out[0] if scalar else out

    return LeGallTransform(f=f, F=F, F_inv=F_inv, f_left=f_left, nu=nu)


def recover_measure_atoms(f, f_left, locations) -> np.ndarray:
    """Atom weights via nu({x}) = -f'({x}) / (f(x) + f(x-)) = (f(x-) - f(x+)) / (f(x-) + f(x+))."""
    fr = np.asarray(f(locations), dtype=float)
    fl = np.asarray(f_left(locations), dtype=float)
    return (fl - fr) / (fl + fr)


def sde_from_divergence(coeffs: PiecewiseDiffusion) -> SkewSDE:
    """SDE form of the operator (rho/2)(a u')' + b u' (paper's divergence-form map).

    sigma = sqrt(a rho); drift = a' rho / 2 + b within pieces; one local-time
    atom per a-discontinuity with weight (a+ - a-)/(a+ + a-).
    """
    coeffs = validate_piecewise(coeffs)

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(coeffs.a(x) * coeffs.rho(x))

    def drift(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * coeffs.da(x) * coeffs.rho(x) + coeffs.b(x)

    atoms = []
    for xb in coeffs.breakpoints:
        a_plus = float(coeffs.a(xb))
        a_minus = float(coeffs.a(np.nextafter(xb, -np.inf)))
        w = (a_plus - a_minus) / (a_plus + a_minus)
        if w != 0.0:
            atoms.append((float(xb), w))
    lo = coeffs.lambda_lo if coeffs.lambda_lo else 0.0
    hi = coeffs.lambda_hi if coeffs.lambda_hi else np.inf
    return SkewSDE(sigma=sigma, drift=drift, nu=SignedAtomicMeasure(tuple(atoms)),
                   sigma_lo=lo, sigma_hi=hi)


def pushforward_measure(
    F: Callable, f, f_left, nu: SignedAtomicMeasure, locations
) -> tuple[np.ndarray, np.ndarray]:
    """Atomic measure of Y = F(X) at the given x-locations (change-of-variable rule).

    With fb = (f(x+)+f(x-))/2 and df = f(x+)-f(x-), the weight at F(x) is
    (fb*nu({x}) + df/2) / (fb + nu({x})*df/2), which follows from the
    symmetric Ito-Tanaka formula plus the one-sided local-time conversion.
    """
    locations = np.asarray(locations, dtype=float)
    atom_map = dict(nu.atoms)
    w = np.array([atom_map.get(float(x), 0.0) for x in locations])
    fr = np.asarray(f(locations), dtype=float)
    fl = np.asarray(f_left(locations), dtype=float)
    fb = 0.5 * (fr + fl)
    df = fr - fl
    mu = (fb * w + 0.5 * df) / (fb + 0.5 * w * df)
    y_locs = np.asarray(F(locations), dtype=float)
    return y_locs, mu


def _zvonkin_fold(coeffs: PiecewiseDiffusion) -> tuple[Callable, Callable]:
    """Drift-free coefficient pair (a e^{+h}, rho e^{-h}); sign resolved by
    requiring scale-function equality with the original operator."""
    model = build_scale(coeffs)
    candidates = []
    for sign in (+1.0, -1.0):
        a_t = lambda x, s=sign: coeffs.a(x) * np.exp(s * model.h(x))
        r_t = lambda x, s=sign: coeffs.rho(x) * np.exp(-s * model.h(x))
        candidates.append((a_t, r_t))
    probes = np.array([-1.7, -0.4, 0.3, 1.9])
    target = np.array([float(model.S(p)) for p in probes])
    for a_t, r_t in candidates:
        # drift-free scale: S'(x) = 1/a_t(x)
        got = np.empty_like(probes)
        for j, p in enumerate(probes):
            pts = [k for k in coeffs.breakpoints if min(0.0, p) < k < max(0.0, p)]
            got[j], _ = quad(lambda z: 1.0 / a_t(np.asarray(z)), 0.0, p,
                             points=pts or None, epsabs=1e-11, limit=200)
        if np.allclose(got, target, rtol=1e-8, atol=1e-10):
            return a_t, r_t
    raise ParameterError("drift removal failed: neither fold sign matches the scale function")


def brownian_reduction(
    coeffs: PiecewiseDiffusion,
    drift_free: bool = True,
    window: float = 8.0,
    n_sub: int = 64,
) -> BrownianReduction:
    """Map X to Y = G(X), Brownian away from skew points (one per discontinuity).

    G(x) = ∫_0^x dz / sqrt(a rho); the skew weight at G(x_n) is
    (sqrt(a+/rho+) - sqrt(a-/rho-)) / (sqrt(a+/rho+) + sqrt(a-/rho-)).

    drift_free=True asserts b = 0 (error otherwise).  With drift_free=False the
    drift is folded away (Zvonkin) and the folded coefficients are sampled as
    piecewise constants on `n_sub` cells per unit inside [-window, window].
    """
    coeffs = validate_piecewise(coeffs)
    if drift_free:
        if not coeffs.drift_free():
            raise ParameterError("coefficients carry drift; call with drift_free=False")
        if not coeffs.piecewise_constant:
            raise ParameterError("reduction needs piecewise-constant a, rho "
                                 "(approximate smooth pieces first)")
        a_fn, r_fn = coeffs.a, coeffs.rho
        breaks = np.asarray(coeffs.breakpoints, dtype=float)
    else:
        a_t, r_t = _zvonkin_fold(coeffs)
        sub = np.arange(-window, window + 1e-12, 1.0 / n_sub)
        breaks = np.unique(np.concatenate((sub, np.asarray(coeffs.breakpoints))))
        mids = np.concatenate(([breaks[0] - 0.5], (breaks[:-1] + breaks[1:]) / 2,
                               [breaks[-1] + 0.5]))
        a_vals = np.asarray(a_t(mids), dtype=float)
        r_vals = np.asarray(r_t(mids), dtype=float)

        def a_fn(x):
            idx = np.searchsorted(breaks, np.asarray(x, dtype=float), side="right")
            return a_vals[idx]

        def r_fn(x):
            idx = np.searchsorted(breaks, np.asarray(x, dtype=float), side="right")
            return r_vals[idx]

    knots = np.unique(np.concatenate((breaks, [0.0])))
    eps = 1e-9 * (1.0 + np.abs(knots))
    inv_speed_right = 1.0 / np.sqrt(a_fn(knots) * r_fn(knots))
    inv_speed_left = 1.0 / np.sqrt(a_fn(knots - eps) * r_fn(knots - eps))

    # G is piecewise linear with slope 1/sqrt(a rho)
    Gk = np.zeros(knots.size)
    i0 = int(np.searchsorted(knots, 0.0))
    for j in range(i0 + 1, knots.size):
        Gk[j] = Gk[j - 1] + inv_speed_right[j - 1] * (knots[j] - knots[j - 1])
    for j in range(i0 - 1, -1, -1):
        Gk[j] = Gk[j + 1] - inv_speed_right[j] * (knots[j + 1] - knots[j])

    def G(x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(knots, x, side="right")
        anchor = np.clip(idx - 1, 0, knots.size - 1)
        slope = np.where(idx == 0, inv_speed_left[0], inv_speed_right[anchor])
        out = Gk[anchor] + slope * (x - knots[anchor])
        return out if out.shape else float(out)

    def G_inv(y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(Gk, y, side="right")
        anchor = np.clip(idx - 1, 0, knots.size - 1)
        slope = np.where(idx == 0, inv_speed_left[0], inv_speed_right[anchor])
        out = knots[anchor] + (y - Gk[anchor]) / slope
        return out if out.shape else float(out)

    skew_points = []
    for xb in breaks:
        sp = np.sqrt(float(a_fn(xb)) / float(r_fn(xb)))
        sm = np.sqrt(float(a_fn(xb - 1e-9 * (1 + abs(xb)))) / float(r_fn(xb - 1e-9 * (1 + abs(xb)))))
        beta = (sp - sm) / (sp + sm)
        if beta != 0.0:
            skew_points.append((float(G(xb)), beta))
    return BrownianReduction(G=G, G_inv=G_inv, skew_points=tuple(skew_points))


def sbm_reduction(skew: SkewParameter) -> BrownianReduction:
    """Identity reduction of SBM(alpha): single skew point (0, 2*alpha - 1)."""
    if skew.alpha in (0.0, 1.0):
        raise ParameterError("reduction undefined for fully reflecting alpha")
    return brownian_reduction(sbm_coefficients(skew))
