"""Single-pass numba kernels for the hot per-path loops.

Each kernel consumes exactly the same random numbers in the same order as the
numpy reference construction in generators.py, so outputs are bit-identical;
the test suite asserts that equivalence.  Rows are independent, which makes
prange safe and worker-count-independent.  Inner loops are branchless where
the branch direction would be random (mispredictions dominate otherwise).
"""

from __future__ import annotations

import warnings

import numpy as np

with warnings.catch_warnings():
    # the sandbox TBB is older than numba wants; the omp layer is fine
    warnings.simplefilter("ignore")
    from numba import njit, prange


@njit(cache=True, parallel=True)
def walk_stats(u, m0, alpha, band_m):
    """Per-row walk functionals from one uniform per step.

    Returns (terminal lattice value, #points > 0, #points == 0,
    #points |x| <= band_m, #points 0 < x <= band_m, #points -band_m <= x < 0),
    all counted over the steps+1 grid points including the start.
    """
    rows, steps = u.shape
    terminal = np.empty(rows, dtype=np.int32)
    n_pos = np.zeros(rows, dtype=np.int64)
    n_zero = np.zeros(rows, dtype=np.int64)
    n_band = np.zeros(rows, dtype=np.int64)
    n_bplus = np.zeros(rows, dtype=np.int64)
    n_bminus = np.zeros(rows, dtype=np.int64)
    for i in prange(rows):
        w = abs(m0)
        sign = 1 if m0 >= 0 else -1
        x = sign * w
        in_band = 1 if w <= band_m else 0
        c_band = in_band
        c_pos = 1 if x > 0 else 0
        c_zero = 1 if x == 0 else 0
        c_bplus = in_band if x > 0 else 0
        c_bminus = in_band if x < 0 else 0
        for k in range(steps):
            uk = u[i, k]
            if w == 0:  # rare and cheap: zeros are ~1/sqrt(k) of the steps
                sign = 1 if uk < alpha else -1
            w += 2 * int(uk < 0.5) - 1
            r = -w if w < 0 else w
            x = sign * r
            in_band = int(r <= band_m)
            pos = int(x > 0)
            neg = int(x < 0)
            c_band += in_band
            c_pos += pos
            c_zero += 1 - pos - neg
            c_bplus += in_band * pos
            c_bminus += in_band * neg
        terminal[i] = x
        n_pos[i] = c_pos
        n_zero[i] = c_zero
        n_band[i] = c_band
        n_bplus[i] = c_bplus
        n_bminus[i] = c_bminus
    return terminal, n_pos, n_zero, n_band, n_bplus, n_bminus


@njit(cache=True, parallel=True)
def euler_sbm_terminal(db, r, y0):
    """Terminal X of the transformed SBM Euler scheme: dY = sigma_Y(Y) dB with
    sigma_Y = r on Y > 0, (1+r)/2 at Y = 0, 1 on Y < 0; X = Y/r on Y >= 0."""
    rows, steps = db.shape
    out = np.empty(rows)
    mid = 0.5 * (1.0 + r)
    for i in prange(rows):
        y = y0
        for k in range(steps):
            pos = 1.0 if y > 0.0 else 0.0
            neg = 1.0 if y < 0.0 else 0.0
            s = r * pos + neg + mid * (1.0 - pos - neg)
            y += s * db[i, k]
        out[i] = y / r if y >= 0.0 else y
    return out


@njit(cache=True, parallel=True)
def leader_terminal(dn, sqdelta, gamma):
    """Terminal X of the follow-the-leader scheme (one normal per micro-step)."""
    rows, steps = dn.shape
    out = np.empty(rows)
    for i in prange(rows):
        z1 = 0.0
        z2 = 0.0
        u1 = 0.0
        for k in range(steps):
            inc = sqdelta * dn[i, k]
            a = 1.0 if z2 > gamma * z1 else 0.0
            z1 += a * inc
            z2 += (1.0 - a) * inc
            u1 = max(u1, z1)
        out[i] = (gamma * u1 - z2) - (u1 - z1)
    return out


@njit(cache=True, parallel=True)
def coupled_walk_stats(u, m1, m2, alpha1, alpha2):
    """Order violations and first-meeting step of the monotone-coupled pair."""
    rows, steps = u.shape
    violations = np.zeros(rows, dtype=np.int64)
    meet_step = np.full(rows, -1, dtype=np.int64)
    for i in prange(rows):
        p1 = m1
        p2 = m2
        viol = 0
        met = 0 if p1 != p2 else 1
        met_at = 0
        for k in range(steps):
            uk = u[i, k]
            sym = 2 * int(uk < 0.5) - 1
            s1 = (1 if uk < alpha1 else -1) if p1 == 0 else sym
            s2 = (1 if uk < alpha2 else -1) if p2 == 0 else sym
            p1 += s1
            p2 += s2
            viol += int(p1 > p2)
            if met == 0 and p1 == p2:
                met = 1
                met_at = k + 1
        violations[i] = viol
        meet_step[i] = met_at if met == 1 else -1
    return violations, meet_step