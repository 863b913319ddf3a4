"""Scale function, speed measure, hitting probabilities, Green functions, exit moments.

Under the canonical operator L = (rho/2)(a u')' + b u' the pair (S, V) with

    S'(x) = e^{-h(x)} / a(x),   V'(x) = e^{h(x)} / rho(x),   h(x) = 2 ∫_0^x b/(a rho),

satisfies L = (1/2) d/dV d/dS with S(0) = V(0) = 0.  For SBM(alpha) this reduces
to S(x) = x/alpha on x >= 0, x/(1-alpha) on x < 0 and V(x) = alpha x / (1-alpha) x.
Piecewise-constant coefficients are integrated in closed form; smooth pieces go
through cached adaptive quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .core import ParameterError, PiecewiseDiffusion, SkewParameter, validate_piecewise

_QUAD_ABS = 1e-12


class ExitMoments(NamedTuple):
    mean: float
    conditional: Optional[float]  # E_x[tau | exit through `side`], None for side="either"
    p_side: Optional[float]


@dataclass(frozen=True)
class ScaleSpeedModel:
    """Immutable (S, V, h) evaluators plus densities and internal knots."""

    S: Callable[[np.ndarray], np.ndarray]
    S_inv: Callable[[np.ndarray], np.ndarray]
    V: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    s_density: Callable[[np.ndarray], np.ndarray]
    v_density: Callable[[np.ndarray], np.ndarray]
    knots: tuple[float, ...]
    source: Union[PiecewiseDiffusion, SkewParameter]

    def rescaled(self, kappa: float, lam: float = 0.0, lam2: float = 0.0) -> "ScaleSpeedModel":
        """(kappa S + lam, kappa^{-1} V + lam2): same diffusion, different chart."""
        if kappa <= 0:
            raise ParameterError("kappa must be positive")
        return ScaleSpeedModel(
            S=lambda x: kappa * self.S(x) + lam,
            S_inv=lambda y: self.S_inv((np.asarray(y, dtype=float) - lam) / kappa),
            V=lambda x: self.V(x) / kappa + lam2,
            h=self.h,
            s_density=lambda x: kappa * self.s_density(x),
            v_density=lambda x: self.v_density(x) / kappa,
            knots=self.knots,
            source=self.source,
        )


def _sbm_model(skew: SkewParameter) -> ScaleSpeedModel:
    al = skew.alpha
    if al in (0.0, 1.0):
        raise ParameterError("scale function undefined for fully reflecting alpha in {0,1}")
    sp = np.array([1.0 / al, 1.0 / (1.0 - al)])  # S slopes on R+, R-
    vp = np.array([al, 1.0 - al])

    def S(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, x * sp[0], x * sp[1])

    def S_inv(y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, y / sp[0], y / sp[1])

    def V(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, x * vp[0], x * vp[1])

    return ScaleSpeedModel(
        S=S,
        S_inv=S_inv,
        V=V,
        h=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        s_density=lambda x: np.where(np.asarray(x, dtype=float) >= 0, sp[0], sp[1]),
        v_density=lambda x: np.where(np.asarray(x, dtype=float) >= 0, vp[0], vp[1]),
        knots=(0.0,),
        source=skew,
    )


class _PiecewiseCumulative:
    """Cumulative integral of a piecewise integrand, exact for constant pieces.

    The integrand on piece i is t -> base_i(t) where base_i is either a closed
    form (exp-linear: c * e^{k t}) or a vectorized callable handled by quad.
    """

    def __init__(self, knots, eval_fn, exact_explin=None):
        # knots: sorted interior knots including 0; eval_fn: vectorized integrand
        self.knots = np.asarray(knots, dtype=float)
        self.eval_fn = eval_fn
        self.exact = exact_explin  # list of (c, k, anchor) per piece or None
        self.cum = self._cumulative_at_knots()

    def _piece_integral(self, i, lo, hi):
        if self.exact is not None:
            c, k, anchor = self.exact[i]
            if k == 0.0:
                return c * (hi - lo)
            return (c / k) * (np.exp(k * (hi - anchor)) - np.exp(k * (lo - anchor)))
        val, _ = quad(self.eval_fn, lo, hi, epsabs=_QUAD_ABS, limit=200)
        return val

    def _cumulative_at_knots(self):
        kn = self.knots
        cum = np.zeros(kn.size)
        i0 = int(np.searchsorted(kn, 0.0))
        # kn contains 0.0 exactly; integrate outward from it
        for j in range(i0 + 1, kn.size):
            cum[j] = cum[j - 1] + self._piece_integral(j - 1 + 1, kn[j - 1], kn[j])
        for j in range(i0 - 1, -1, -1):
            cum[j] = cum[j + 1] - self._piece_integral(j + 1, kn[j], kn[j + 1])
        return cum

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        idx = np.searchsorted(self.knots, x, side="right")  # piece index of each x
        out = np.empty_like(x)
        for i in np.unique(idx):
            mask = idx == i
            anchor_j = min(max(i, 1), self.knots.size) - 1
            if i == 0:
                anchor_j = 0
            anchor = self.knots[anchor_j]
            base = self.cum[anchor_j]
            pts = x[mask]
            if self.exact is not None:
                c, k, a0 = self.exact[i]
                if k == 0.0:
                    out[mask] = base + c * (pts - anchor)
                else:
                    out[mask] = base + (c / k) * (np.exp(k * (pts - a0)) - np.exp(k * (anchor - a0)))
            else:
                out[mask] = base + np.array(
                    [quad(self.eval_fn, anchor, p, epsabs=_QUAD_ABS, limit=200)[0] for p in pts]
                )
        return out[0] if scalar else out


def _piecewise_model(coeffs: PiecewiseDiffusion) -> ScaleSpeedModel:
    coeffs = validate_piecewise(coeffs)
    knots = tuple(sorted(set(coeffs.breakpoints) | {0.0}))
    kn = np.asarray(knots)

    if coeffs.piecewise_constant:
        # per piece (between consecutive knots, plus the two tails): constants
        n_pieces = kn.size + 1
        mids = np.concatenate(([kn[0] - 1.0], (kn[:-1] + kn[1:]) / 2.0, [kn[-1] + 1.0]))
        a_vals = coeffs.a(mids)
        r_vals = coeffs.rho(mids)
        b_vals = coeffs.b(mids)
        kappa = 2.0 * b_vals / (a_vals * r_vals)  # h' per piece

        # h at knots by exact accumulation from 0
        h_cum = _PiecewiseCumulative(
            kn, None, exact_explin=[(kappa[i], 0.0, 0.0) for i in range(n_pieces)]
        )

        def h_at(x):
            return h_cum(x)

        h_kn = h_cum(kn)
        # S' = e^{-h}/a: on piece i, equals (e^{-h(anchor)}/a_i) e^{-kappa_i (x-anchor)}
        def explin_terms(sign):
            terms = []
            for i in range(n_pieces):
                anchor_j = 0 if i == 0 else i - 1
                anchor = kn[anchor_j]
                coef = np.exp(sign * h_kn[anchor_j]) / (a_vals[i] if sign < 0 else r_vals[i])
                terms.append((coef, sign * kappa[i], anchor))
            return terms

        S_cum = _PiecewiseCumulative(kn, None, exact_explin=explin_terms(-1.0))
        V_cum = _PiecewiseCumulative(kn, None, exact_explin=explin_terms(+1.0))

        def s_density(x):
            return np.exp(-h_at(x)) / coeffs.a(x)

        def v_density(x):
            return np.exp(h_at(x)) / coeffs.rho(x)

    else:
        def h_integrand(y):
            y = np.asarray(y, dtype=float)
            return 2.0 * coeffs.b(y) / (coeffs.a(y) * coeffs.rho(y))

        h_cum = _PiecewiseCumulative(kn, h_integrand)

        def h_at(x):
            return h_cum(x)

        def s_density(x):
            return np.exp(-h_at(x)) / coeffs.a(x)

        def v_density(x):
            return np.exp(h_at(x)) / coeffs.rho(x)

        S_cum = _PiecewiseCumulative(kn, lambda y: s_density(np.asarray(y, dtype=float)))
        V_cum = _PiecewiseCumulative(kn, lambda y: v_density(np.asarray(y, dtype=float)))

    lam_lo = coeffs.lambda_lo if coeffs.lambda_lo else 1e-6

    def S_inv(y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        out = np.empty_like(y)
        s_kn = S_cum(kn)
        for j, target in enumerate(y):
            lo_i = np.searchsorted(s_kn, target)
            if 0 < lo_i < kn.size:
                lo, hi = kn[lo_i - 1], kn[lo_i]
            else:
                # outside the knot span: expand a bracket (S grows at least
                # e^{-|h|}/Lambda per unit length, so this terminates)
                step = 1.0
                if lo_i == 0:
                    hi = kn[0]
                    lo = hi - step
                    while S_cum(lo) > target:
                        lo -= step
                        step *= 2
                else:
                    lo = kn[-1]
                    hi = lo + step
                    while S_cum(hi) < target:
                        hi += step
                        step *= 2
            out[j] = brentq(lambda z: S_cum(z) - target, lo, hi, xtol=1e-13, rtol=8.9e-16)
        return out[0] if scalar else out

    return ScaleSpeedModel(
        S=S_cum,
        S_inv=S_inv,
        V=V_cum,
        h=h_at,
        s_density=s_density,
        v_density=v_density,
        knots=knots,
        source=coeffs,
    )


def build(source: Union[PiecewiseDiffusion, SkewParameter]) -> ScaleSpeedModel:
    """Scale/speed model from SBM parameters or validated piecewise coefficients."""
    if isinstance(source, SkewParameter):
        return _sbm_model(source)
    if isinstance(source, PiecewiseDiffusion):
        return _piecewise_model(source)
    raise ParameterError(f"unsupported source type {type(source)!r}")


def hitting_probability(model: ScaleSpeedModel, x: float, a: float, b: float) -> float:
    """P_x[hit b before a] = (S(x) - S(a)) / (S(b) - S(a)) for a < x < b."""
    if not a < x < b:
        raise ParameterError(f"need a < x < b, got a={a}, x={x}, b={b}")
    sa, sx, sb = (float(model.S(v)) for v in (a, x, b))
    return (sx - sa) / (sb - sa)


def green_function(model: ScaleSpeedModel, a: float, b: float) -> Callable[[float, float], float]:
    """Two-sided Green function of the interval (a, b), symmetric in (x, y)."""
    sa, sb = float(model.S(a)), float(model.S(b))
    denom = sb - sa

    def G(x: float, y: float) -> float:
        sx, sy = float(model.S(x)), float(model.S(y))
        lo, hi = (sx, sy) if sx <= sy else (sy, sx)
        return 2.0 * (lo - sa) * (sb - hi) / denom

    return G


def _interval_points(model: ScaleSpeedModel, a: float, b: float, x: float) -> list[float]:
    pts = [k for k in model.knots if a < k < b]
    if a < x < b:
        pts.append(x)
    return sorted(set(pts))


def _green_quadrature(model, x, a, b, weight: Callable[[float], float]) -> float:
    G = green_function(model, a, b)

    def integrand(y):
        return G(x, y) * weight(y) * float(model.v_density(y))

    val, _ = quad(
        integrand, a, b, points=_interval_points(model, a, b, x), epsabs=1e-11, limit=400
    )
    return val


def exit_time_moments(
    model: ScaleSpeedModel, x: float, a: float, b: float, side: str = "either"
) -> ExitMoments:
    """E_x[tau_(a,b)] = ∫ G(x, y) dV(y); optionally the conditional mean given the
    exit side, u(x)/v(x) with L u = -v, u(a) = u(b) = 0 (double Green quadrature)."""
    if not a < x < b:
        raise ParameterError(f"need a < x < b, got a={a}, x={x}, b={b}")
    if side not in ("either", "left", "right"):
        raise ParameterError(f"side must be either/left/right, got {side!r}")
    mean = _green_quadrature(model, x, a, b, lambda y: 1.0)
    if side == "either":
        return ExitMoments(mean, None, None)
    sa, sb = float(model.S(a)), float(model.S(b))

    def p_right(y):
        return (float(model.S(y)) - sa) / (sb - sa)

    if side == "right":
        p = p_right(x)
        u = _green_quadrature(model, x, a, b, p_right)
    else:
        p = 1.0 - p_right(x)
        u = _green_quadrature(model, x, a, b, lambda y: 1.0 - p_right(y))
    if p <= 0.0:
        raise ParameterError(f"exit side {side} has zero probability from x={x}")
    return ExitMoments(mean, u / p, p)
