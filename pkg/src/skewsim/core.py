"""Shared domain types: skewness parameters, piecewise coefficients, paths, RNG streams.

Everything here is an immutable value object; the rest of the package builds on
these and on the deterministic stream contract of :class:`RngStream`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class ParameterError(ValueError):
    """A constructor argument lies outside the admissible range."""


class CoefficientError(ValueError):
    """Piecewise coefficients violate ellipticity / ordering / finiteness."""


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One round of splitmix64; stable 64-bit mixing for stream derivation."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream identified by (seed, stream_id).

    Identical (seed, stream_id) always yields the identical draw sequence;
    distinct stream_ids give statistically independent streams.  Workers never
    share generator state: they derive child streams with :meth:`child`.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh numpy Generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=(self.seed & _MASK64, self.stream_id & _MASK64))
        return np.random.Generator(np.random.SFC64(ss))

    def child(self, index: int) -> "RngStream":
        """Derive the index-th child stream (e.g. one per path)."""
        if index < 0:
            raise ParameterError(f"child index must be non-negative, got {index}")
        mixed = _splitmix64((self.stream_id ^ _splitmix64(index + 1)) & _MASK64)
        return RngStream(self.seed, mixed)


@dataclass(frozen=True)
class SkewParameter:
    """The skewness triple (alpha, beta, q) with beta = 2*alpha - 1 and q = beta."""

    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0) or not np.isfinite(self.alpha):
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def beta(self) -> float:
        return 2.0 * self.alpha - 1.0

    @property
    def q(self) -> float:
        return self.beta


def make_skew(
    alpha: Optional[float] = None,
    beta: Optional[float] = None,
    q: Optional[float] = None,
    flux_pair: Optional[tuple[float, float]] = None,
) -> SkewParameter:
    """Build a SkewParameter from exactly one of alpha, beta, q or a flux pair.

    The flux pair (a_plus, a_minus) encodes the transmission condition
    a(0-) u'(0-) = a(0+) u'(0+) and yields alpha = a_plus / (a_plus + a_minus),
    so the canonical two-sided diffusion coefficient (alpha on x >= 0,
    1 - alpha on x < 0) maps to itself.
    """
    given = [v is not None for v in (alpha, beta, q, flux_pair)]
    if sum(given) != 1:
        raise ParameterError("specify exactly one of alpha, beta, q, flux_pair")
    if alpha is not None:
        return SkewParameter(float(alpha))
    if beta is not None:
        if not -1.0 <= beta <= 1.0:
            raise ParameterError(f"beta must lie in [-1, 1], got {beta}")
        return SkewParameter((1.0 + beta) / 2.0)
    if q is not None:
        if not -1.0 <= q <= 1.0:
            raise ParameterError(f"q must lie in [-1, 1], got {q}")
        return SkewParameter((1.0 + q) / 2.0)
    a_plus, a_minus = flux_pair
    if not (a_plus > 0 and a_minus > 0) or not (np.isfinite(a_plus) and np.isfinite(a_minus)):
        raise ParameterError(f"flux pair must be positive, got ({a_plus}, {a_minus})")
    return SkewParameter(a_plus / (a_plus + a_minus))


PieceLike = float | Callable[[np.ndarray], np.ndarray]


def _as_piece_values(pieces: Sequence[PieceLike], x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    for i, piece in enumerate(pieces):
        mask = idx == i
        if not np.any(mask):
            continue
        if callable(piece):
            out[mask] = piece(x[mask])
        else:
            out[mask] = piece
    return out


@dataclass(frozen=True)
class PiecewiseDiffusion:
    """Coefficients (a, rho, b) of L = (rho/2)(a u')' + b u' with jump points.

    a and rho are right-continuous with left limits at each breakpoint; pieces
    may be constants (the canonical case) or smooth evaluators.  Piece i covers
    (breakpoints[i-1], breakpoints[i]); piece 0 is (-inf, breakpoints[0]) and
    the last piece is [breakpoints[-1], inf).
    """

    breakpoints: tuple[float, ...]
    a_pieces: tuple[PieceLike, ...]
    rho_pieces: tuple[PieceLike, ...]
    b_pieces: tuple[PieceLike, ...] = ()
    lambda_lo: Optional[float] = None
    lambda_hi: Optional[float] = None
    da_pieces: tuple[PieceLike, ...] = ()  # optional derivative of a within pieces

    def __post_init__(self):
        n = len(self.breakpoints) + 1
        if len(self.a_pieces) != n or len(self.rho_pieces) != n:
            raise CoefficientError(
                f"need {n} pieces for {len(self.breakpoints)} breakpoints, "
                f"got a:{len(self.a_pieces)} rho:{len(self.rho_pieces)}"
            )
        if self.b_pieces and len(self.b_pieces) != n:
            raise CoefficientError(f"b needs {n} pieces, got {len(self.b_pieces)}")
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.size and (not np.all(np.isfinite(bp)) or np.any(np.diff(bp) <= 0)):
            raise CoefficientError(f"breakpoints must be finite and strictly ascending: {bp}")

    def _piece_index(self, x: np.ndarray) -> np.ndarray:
        # side="right" makes pieces right-continuous at the breakpoints
        return np.searchsorted(np.asarray(self.breakpoints), x, side="right")

    def a(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _as_piece_values(self.a_pieces, x, self._piece_index(x))

    def rho(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _as_piece_values(self.rho_pieces, x, self._piece_index(x))

    def b(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.b_pieces:
            return np.zeros_like(x)
        return _as_piece_values(self.b_pieces, x, self._piece_index(x))

    def da(self, x) -> np.ndarray:
        """Derivative of a within pieces (0 for constant pieces)."""
        x = np.asarray(x, dtype=float)
        if self.da_pieces:
            return _as_piece_values(self.da_pieces, x, self._piece_index(x))
        if all(not callable(p) for p in self.a_pieces):
            return np.zeros_like(x)
        raise CoefficientError("smooth a pieces need da_pieces (piecewise-C1 input required)")

    @property
    def piecewise_constant(self) -> bool:
        return all(
            not callable(p)
            for p in (*self.a_pieces, *self.rho_pieces, *(self.b_pieces or ()))
        )

    def drift_free(self) -> bool:
        if not self.b_pieces:
            return True
        return all((not callable(p)) and p == 0.0 for p in self.b_pieces)


def brownian_coefficients() -> PiecewiseDiffusion:
    """a = rho = 1, b = 0: plain Brownian motion."""
    return PiecewiseDiffusion((), (1.0,), (1.0,), lambda_lo=1.0, lambda_hi=1.0)


def sbm_coefficients(skew: SkewParameter) -> PiecewiseDiffusion:
    """The divergence-form coefficients of SBM(alpha): a = (1-alpha, alpha), rho = 1/a."""
    al = skew.alpha
    if al in (0.0, 1.0):
        raise ParameterError("fully reflecting alpha in {0,1} has no elliptic coefficient form")
    return PiecewiseDiffusion(
        (0.0,),
        (1.0 - al, al),
        (1.0 / (1.0 - al), 1.0 / al),
        lambda_lo=min(al, 1 - al),
        lambda_hi=max(1 / al, 1 / (1 - al)),
    )


_PROBES_PER_PIECE = 257


def validate_piecewise(coeffs: PiecewiseDiffusion) -> PiecewiseDiffusion:
    """Check ellipticity and finiteness; return the input annotated with verified bounds.

    Constant pieces are checked exactly; smooth pieces are probed on a lattice
    within each piece (plus one-sided limits at the breakpoints).
    """
    bp = np.asarray(coeffs.breakpoints, dtype=float)
    span = (bp[-1] - bp[0]) if bp.size > 1 else 1.0
    lo, hi = (bp[0] - max(span, 1.0), bp[-1] + max(span, 1.0)) if bp.size else (-1.0, 1.0)
    edges = np.concatenate(([lo], bp, [hi]))

    def piece_range(pieces, i):
        p = pieces[i]
        if not callable(p):
            v = float(p)
            return v, v
        xs = np.linspace(edges[i], edges[i + 1], _PROBES_PER_PIECE)
        # keep probes inside the half-open piece
        xs = np.nextafter(xs, edges[i + 1], where=xs == edges[i], out=xs.copy())
        vals = np.asarray(p(xs), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise CoefficientError(f"non-finite coefficient value in piece {i}")
        return float(vals.min()), float(vals.max())

    a_lo = r_lo = np.inf
    a_hi = r_hi = b_hi = 0.0
    n = len(coeffs.a_pieces)
    for i in range(n):
        plo, phi = piece_range(coeffs.a_pieces, i)
        a_lo, a_hi = min(a_lo, plo), max(a_hi, phi)
        plo, phi = piece_range(coeffs.rho_pieces, i)
        r_lo, r_hi = min(r_lo, plo), max(r_hi, phi)
        if coeffs.b_pieces:
            plo, phi = piece_range(coeffs.b_pieces, i)
            b_hi = max(b_hi, abs(plo), abs(phi))
    if not np.isfinite(a_lo) or a_lo <= 0.0:
        raise CoefficientError(f"ellipticity violated: min a = {a_lo}")
    if not np.isfinite(r_lo) or r_lo <= 0.0:
        raise CoefficientError(f"ellipticity violated: min rho = {r_lo}")
    lam_lo = min(a_lo, r_lo)
    lam_hi = max(a_hi, r_hi, b_hi)
    if coeffs.lambda_lo is not None and a_lo < coeffs.lambda_lo - 1e-12:
        raise CoefficientError(
            f"declared lambda_lo={coeffs.lambda_lo} not satisfied (min a = {a_lo})"
        )
    if coeffs.lambda_hi is not None and lam_hi > coeffs.lambda_hi + 1e-12:
        raise CoefficientError(
            f"declared lambda_hi={coeffs.lambda_hi} exceeded (max coefficient = {lam_hi})"
        )
    return PiecewiseDiffusion(
        coeffs.breakpoints,
        coeffs.a_pieces,
        coeffs.rho_pieces,
        coeffs.b_pieces,
        lambda_lo=lam_lo,
        lambda_hi=lam_hi,
        da_pieces=coeffs.da_pieces,
    )


@dataclass(frozen=True)
class SignedAtomicMeasure:
    """Finite signed measure: atoms with |weight| < 1 plus an optional continuous part.

    The continuous part is supplied through its cumulative mass function
    M(x) = nu^c((-inf, x]) so that downstream formulas stay in closed form.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    continuous_cum: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        locs = [x for x, _ in self.atoms]
        if sorted(locs) != list(locs) or len(set(locs)) != len(locs):
            object.__setattr__(self, "atoms", tuple(sorted(self.atoms)))
            locs = [x for x, _ in self.atoms]
            if len(set(locs)) != len(locs):
                raise ParameterError("duplicate atom locations")
        for x, w in self.atoms:
            if not abs(w) < 1.0:
                raise ParameterError(f"atom weight at {x} must satisfy |w| < 1, got {w}")

    @property
    def locations(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    def cum_continuous(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.continuous_cum is None:
            return np.zeros_like(x)
        return np.asarray(self.continuous_cum(x), dtype=float)


@dataclass(frozen=True)
class SampledPath:
    """A time grid plus values, optionally with the driving-noise increments.

    Uniform-grid paths carry (t0, dt); skeleton paths carry explicit event
    times.  `noise` holds the Brownian increments consumed per step when the
    generator records them (Euler residual tests need this).
    """

    values: np.ndarray
    t0: float = 0.0
    dt: Optional[float] = None
    event_times: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None
    skeleton: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if (self.dt is None) == (self.event_times is None):
            raise ParameterError("provide exactly one of dt or event_times")
        if self.dt is not None and self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.event_times is not None:
            times = np.asarray(self.event_times, dtype=float)
            object.__setattr__(self, "event_times", times)
            if times.shape != self.values.shape:
                raise ParameterError("event times and values must have equal length")
            if np.any(np.diff(times) <= 0):
                raise ParameterError("event times must be strictly increasing")
        if self.noise is not None:
            noise = np.asarray(self.noise, dtype=float)
            object.__setattr__(self, "noise", noise)
            if noise.shape[0] != self.values.shape[0] - 1:
                raise ParameterError("noise must hold one increment per step")

    @property
    def times(self) -> np.ndarray:
        if self.event_times is not None:
            return self.event_times
        return self.t0 + self.dt * np.arange(self.values.shape[0])
