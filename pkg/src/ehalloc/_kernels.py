"""Compiled inner loops.

The outer solvers call these many times on small arrays, where numpy call
overhead dominates; numba removes it. Each kernel mirrors a documented numpy
routine in ``ortho_bw``, ``ortho_energy`` or ``nonortho`` and returns a status
code instead of raising.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK = 0
INFEASIBLE = 1
NO_CONVERGENCE = 2

BDP_CODE = 0
BFP_CODE = 1

_SERIES_D = 1e-10


# ------------------------------------------------------------------ x - ln x


@njit(cache=True, error_model="numpy")
def x_from_d(d, ygrid, utab):
    """Root ``X`` of ``X - ln X = 1 + d`` and ``1 - X``, for ``d > 0``."""
    if d == np.inf:
        return 0.0, 1.0
    if d < _SERIES_D:
        s = math.sqrt(2.0 * d)
        om = s - s * s / 3.0 + s * s * s / 36.0
        return 1.0 - om, om
    y = 1.0 + d
    n = ygrid.size
    ymax = ygrid[n - 1]
    if d < 1e-3:
        u = math.log1p(-math.sqrt(2.0 * d))
    elif y <= ymax:
        t = (y - 1.0) / (ymax - 1.0) * (n - 1)
        i = int(t)
        if i >= n - 1:
            i = n - 2
        f = t - i
        u = utab[i] * (1.0 - f) + utab[i + 1] * f
    else:
        u = -y
    for _ in range(40):
        ex = math.exp(u)
        r = ex - u - y
        if abs(r) <= 1e-15 * y:
            break
        u = u - r / (ex - 1.0)
        if u >= 0.0:
            u = -1e-300
    return math.exp(u), -math.expm1(u)


# ------------------------------------------------------------- taut string


@njit(cache=True, error_model="numpy")
def _row_value(grid, cum, cum_tail, a, b, level):
    """Energy of slots ``a..b-1`` at a common level (rows of cumulative curves)."""
    j = grid.size
    if level >= grid[j - 1]:
        return cum[b, j - 1] - cum[a, j - 1] + (cum_tail[b] - cum_tail[a]) * (level - grid[j - 1])
    i = np.searchsorted(grid, level, side="right") - 1
    if i < 0:
        i = 0
    g0 = cum[b, i] - cum[a, i]
    g1 = cum[b, i + 1] - cum[a, i + 1]
    return g0 + (g1 - g0) * (level - grid[i]) / (grid[i + 1] - grid[i])


@njit(cache=True, error_model="numpy")
def _inv_upper(grid, row, tail, target):
    """``sup{w : G(w) <= target}`` for a nondecreasing piecewise-linear row."""
    j = grid.size
    last = -1
    for q in range(j):
        if row[q] <= target:
            last = q
        else:
            break
    if last < 0:
        return grid[0]
    if last == j - 1:
        if tail > 0:
            return grid[j - 1] + (target - row[j - 1]) / tail
        return np.inf
    dv = row[last + 1] - row[last]
    if dv <= 0:
        return grid[last]
    return grid[last] + (target - row[last]) / dv * (grid[last + 1] - grid[last])


@njit(cache=True, error_model="numpy")
def _inv_lower(grid, row, tail, target):
    """``inf{w : G(w) >= target}``; ``inf`` when unreachable."""
    j = grid.size
    if target <= row[0]:
        return grid[0]
    first = j
    for q in range(j):
        if row[q] >= target:
            first = q
            break
    if first == j:
        if tail > 0:
            return grid[j - 1] + (target - row[j - 1]) / tail
        return np.inf
    dv = row[first] - row[first - 1]
    if dv <= 0:
        return grid[first]
    return grid[first - 1] + (target - row[first - 1]) / dv * (grid[first] - grid[first - 1])


@njit(cache=True, error_model="numpy")
def taut_sweep(grid, cum, cum_tail, lower, upper, start, scale):
    """Forward sweep of the taut-string construction.

    ``cum[k]`` is the cumulative energy of slots ``0..k-1`` on the level grid
    (``cum[0] = 0``); ``cum_tail`` the matching slopes beyond the grid.
    Returns ``(levels, b_slot, b_kind, n_bound, status, bad_slot)``.
    """
    k = lower.size
    j = grid.size
    levels = np.empty(k)
    b_slot = np.empty(k, dtype=np.int64)
    b_kind = np.empty(k, dtype=np.int64)
    nb = 0
    row = np.empty(j)
    a = 0
    s_a = start
    while a < k:
        run_up = np.inf
        run_lo = -np.inf
        end_up = a
        end_lo = a
        cross = 0  # 1: rise (BDP), 2: fall (BFP)
        for b in range(a, k):
            for q in range(j):
                row[q] = cum[b + 1, q] - cum[a, q]
            tail = cum_tail[b + 1] - cum_tail[a]
            t_up = upper[b] - s_a
            if t_up < 0.0:
                t_up = 0.0
            t_lo = lower[b] - s_a
            room = np.inf if tail > 0 else row[j - 1]
            if t_lo > room and t_lo <= room + 1e-10 * scale:
                t_lo = room
            wu = _inv_upper(grid, row, tail, t_up)
            wl = _inv_lower(grid, row, tail, t_lo)
            if wl == np.inf:
                return levels, b_slot, b_kind, nb, INFEASIBLE, b
            if b > a:
                if wl > run_up:
                    cross = 1
                    break
                if wu < run_lo:
                    cross = 2
                    break
            if wu <= run_up:
                run_up = wu
                end_up = b
            if wl >= run_lo:
                run_lo = wl
                end_lo = b
        if cross == 2:
            level = run_lo
            end = end_lo
            kind = BFP_CODE
        else:
            level = run_up
            end = end_up
            kind = BDP_CODE
            if cross == 0 and level == np.inf:
                end = k - 1
        stop = end + 1
        for q in range(a, stop):
            levels[q] = level
        if level != np.inf:
            s_a = s_a + _row_value(grid, cum, cum_tail, a, stop, level)
        if stop < k:
            b_slot[nb] = stop - 1
            b_kind[nb] = kind
            nb += 1
        a = stop
    return levels, b_slot, b_kind, nb, OK, -1


# ------------------------------------------------- safeguarded root update


@njit(cache=True, error_model="numpy")
def _next_price(al, resid, dg, g, target, lo, hi, r_lo, r_hi):
    """Next iterate of the bracketed price search (see ``ortho_bw.solve_bp_slots``)."""
    if hi == np.inf:
        fb = lo * 100.0
    elif lo == 0.0:
        fb = hi / 100.0
    elif hi > 4.0 * lo:
        fb = math.sqrt(lo * hi)
    else:
        den = r_hi - r_lo
        fb = lo - r_lo * (hi - lo) / den if den != 0.0 else 0.5 * (lo + hi)
    nxt = fb
    if dg < 0.0:
        ratio = g / target
        if ratio > 0.0:
            e = -math.log(ratio) * g / (al * dg)
            if e > 50.0:
                e = 50.0
            elif e < -50.0:
                e = -50.0
            cand = al * math.exp(e)
            if cand > lo and cand < hi:
                nxt = cand
        cand = al - resid / dg
        if cand > lo and cand < hi:
            nxt = cand
    if not (nxt > lo and nxt < hi):
        nxt = 0.5 * (lo + hi) if hi < np.inf else lo * 100.0
    return nxt


# -------------------------------------------------- orthogonal bandwidth


@njit(cache=True, error_model="numpy")
def _ortho_demand(al, snr, w, idx, n_on, eps, ygrid, utab, d_out):
    g = 0.0
    dg = 0.0
    for q in range(n_on):
        i = idx[q]
        x, om = x_from_d(al / w[i], ygrid, utab)
        d = snr[i] * x / om if om > 0 else np.inf
        d_out[q] = d
        if d > eps:
            g += d
            dg -= snr[i] * x / (om * om * om * w[i])
        else:
            g += eps
    return g, dg


@njit(cache=True, error_model="numpy")
def _psi(snr, a, w):
    r = snr / a
    if r < 1e-3:
        # log1p(r) - r/(1+r) = sum_j (-1)^j (j-1) r^j / j cancels badly for small r
        return w * r * r * (0.5 - r * (2.0 / 3.0 - r * (0.75 - r * (0.8 - r * (5.0 / 6.0)))))
    return w * (math.log1p(r) - r / (1.0 + r))


@njit(cache=True, error_model="numpy")
def ortho_bp(snr, w, eps, tol, max_iter, ygrid, utab):
    """Per-slot orthogonal bandwidth shares; returns ``(shares, alpha, status)``."""
    m, k = snr.shape
    shares = np.empty((m, k))
    alpha = np.full(k, np.nan)
    idx = np.empty(m, dtype=np.int64)
    d = np.empty(m)
    status = OK
    for col in range(k):
        n_on = 0
        for i in range(m):
            if snr[i, col] > 0 and w[i] > 0:
                idx[n_on] = i
                n_on += 1
        if n_on == 0:
            for i in range(m):
                shares[i, col] = 1.0 / m
            continue
        s = snr[:, col]
        target = 1.0 - (m - n_on) * eps
        if n_on == 1:
            # the lone active receiver takes everything the floors leave; no search
            # (a tiny SNR would push the price towards underflow)
            for i in range(m):
                shares[i, col] = eps
            shares[idx[0], col] = target
            alpha[col] = _psi(s[idx[0]], target, w[idx[0]])
            continue
        lo, hi = 0.0, np.inf
        r_lo, r_hi = np.nan, np.nan
        if eps > 0:
            for q in range(n_on):
                probe = _psi(s[idx[q]], eps, w[idx[q]])
                g_at, _ = _ortho_demand(probe, s, w, idx, n_on, eps, ygrid, utab, d)
                r_at = g_at - target
                if r_at >= 0 and probe > lo:
                    lo, r_lo = probe, r_at
                elif r_at < 0 and probe < hi:
                    hi, r_hi = probe, r_at
        share0 = max(target / n_on, 1e-300)
        al = 0.0
        for q in range(n_on):
            al += _psi(s[idx[q]], share0, w[idx[q]])
        al = max(al / n_on, 1e-300)
        if al <= lo or al >= hi:
            if hi < np.inf:
                al = 0.5 * (lo + hi) if lo > 0 else 0.5 * hi
            else:
                al = 2.0 * lo
        done = False
        for _ in range(max_iter):
            g, dg = _ortho_demand(al, s, w, idx, n_on, eps, ygrid, utab, d)
            resid = g - target
            if abs(resid) < tol:
                done = True
                break
            if resid > 0:
                lo, r_lo = al, resid
            else:
                hi, r_hi = al, resid
            if hi < np.inf and hi - lo <= 4 * 2.220446049250313e-16 * hi:
                done = True
                break
            al = _next_price(al, resid, dg, g, target, lo, hi, r_lo, r_hi)
        if not done:
            status = NO_CONVERGENCE
        _ortho_demand(al, s, w, idx, n_on, eps, ygrid, utab, d)
        alpha[col] = al
        for i in range(m):
            shares[i, col] = eps
        total = (m - n_on) * eps
        free_sum = 0.0
        for q in range(n_on):
            v = d[q] if d[q] > eps else eps
            shares[idx[q], col] = v
            total += v
            if d[q] > eps:
                free_sum += v
        # absorb the rounding residual in the unclamped shares
        if free_sum > 0:
            fix = 1.0 + (1.0 - total) / free_sum
            for q in range(n_on):
                if d[q] > eps:
                    shares[idx[q], col] *= fix
    return shares, alpha, status


# ---------------------------------------------- non-orthogonal bandwidth


@njit(cache=True, error_model="numpy")
def _segment_density(al, lo, w, c, f_lo, h_lo, valid, ygrid, utab):
    """Density ``x`` with ``F(x) - x F'(x) = al`` and ``dx/dal`` on one envelope."""
    s_n = lo.size
    seg = 0
    for s in range(s_n):
        if valid[s] and h_lo[s] <= al:
            seg = s
    y = (al - f_lo[seg]) / w[seg] + math.log1p(lo[seg] / c[seg]) + 1.0
    if not y > 1.0:
        return lo[seg], np.inf
    z, om = x_from_d(y - 1.0, ygrid, utab)
    if z <= 0.0:
        return np.inf, 0.0
    x = c[seg] * om / z
    dx = c[seg] / (z * om * w[seg]) if om > 0 else np.inf
    return x, dx


@njit(cache=True, error_model="numpy")
def _envelope_stationarity(x, lo, hi, w, c, valid):
    f = 0.0
    dmax = 0.0
    for s in range(lo.size):
        if not valid[s]:
            continue
        top = x if x < hi[s] else hi[s]
        span = top - lo[s]
        if span > 0:
            f += w[s] * math.log1p(span / (lo[s] + c[s]))
        v = w[s] / (x + c[s])
        if v > dmax:
            dmax = v
    return f - x * dmax


@njit(cache=True, error_model="numpy")
def _nonortho_demand(al, p, col, idx, n_on, lo, w, c, f_lo, h_lo, valid, eps, ygrid, utab, a_out):
    g = 0.0
    dg = 0.0
    for q in range(n_on):
        n = idx[q]
        x, dx = _segment_density(al, lo[n, col], w[n, col], c[n, col], f_lo[n, col], h_lo[n, col],
                                 valid[n, col], ygrid, utab)
        a = p[n, col] / x
        a_out[q] = a
        if a > eps:
            g += a
            dg -= a / x * dx
        else:
            g += eps
    return g, dg


@njit(cache=True, error_model="numpy")
def nonortho_bp(p, lo, hi, w, c, f_lo, h_lo, valid, empty, eps, tol, max_iter, ygrid, utab):
    """Per-slot transmitter shares in superposition mode; ``(shares, alpha, status)``."""
    n, k = p.shape
    shares = np.empty((n, k))
    alpha = np.full(k, np.nan)
    idx = np.empty(n, dtype=np.int64)
    a = np.empty(n)
    status = OK
    for col in range(k):
        n_on = 0
        for i in range(n):
            if p[i, col] > 0 and not empty[i, col]:
                idx[n_on] = i
                n_on += 1
        if n_on == 0:
            for i in range(n):
                shares[i, col] = 1.0 / n
            continue
        target = 1.0 - (n - n_on) * eps
        lo_b, hi_b = 0.0, np.inf
        r_lo, r_hi = np.nan, np.nan
        if eps > 0:
            for q in range(n_on):
                i = idx[q]
                probe = _envelope_stationarity(p[i, col] / eps, lo[i, col], hi[i, col], w[i, col], c[i, col],
                                               valid[i, col])
                g_at, _ = _nonortho_demand(probe, p, col, idx, n_on, lo, w, c, f_lo, h_lo, valid, eps,
                                           ygrid, utab, a)
                r_at = g_at - target
                if r_at >= 0 and probe > lo_b:
                    lo_b, r_lo = probe, r_at
                elif r_at < 0 and probe < hi_b:
                    hi_b, r_hi = probe, r_at
        share0 = max(target / n_on, 1e-300)
        al = 0.0
        for q in range(n_on):
            i = idx[q]
            al += _envelope_stationarity(p[i, col] / share0, lo[i, col], hi[i, col], w[i, col], c[i, col],
                                         valid[i, col])
        al = max(al / n_on, 1e-300)
        if al <= lo_b or al >= hi_b:
            if hi_b < np.inf:
                al = 0.5 * (lo_b + hi_b) if lo_b > 0 else 0.5 * hi_b
            else:
                al = 2.0 * lo_b
        done = False
        for _ in range(max_iter):
            g, dg = _nonortho_demand(al, p, col, idx, n_on, lo, w, c, f_lo, h_lo, valid, eps, ygrid, utab, a)
            resid = g - target
            if abs(resid) < tol:
                done = True
                break
            if resid > 0:
                lo_b, r_lo = al, resid
            else:
                hi_b, r_hi = al, resid
            if hi_b < np.inf and hi_b - lo_b <= 4 * 2.220446049250313e-16 * hi_b:
                done = True
                break
            al = _next_price(al, resid, dg, g, target, lo_b, hi_b, r_lo, r_hi)
        if not done:
            status = NO_CONVERGENCE
        _nonortho_demand(al, p, col, idx, n_on, lo, w, c, f_lo, h_lo, valid, eps, ygrid, utab, a)
        alpha[col] = al
        for i in range(n):
            shares[i, col] = eps
        total = (n - n_on) * eps
        free_sum = 0.0
        for q in range(n_on):
            v = a[q] if a[q] > eps else eps
            shares[idx[q], col] = v
            total += v
            if a[q] > eps:
                free_sum += v
        if free_sum > 0:
            fix = 1.0 + (1.0 - total) / free_sum
            for q in range(n_on):
                if a[q] > eps:
                    shares[idx[q], col] *= fix
    return shares, alpha, status


# ------------------------------------------------- full water-filling pass


@njit(cache=True, error_model="numpy")
def _uncapped(slopes, thr, use_max, col, level):
    out = 0.0
    for r in range(slopes.shape[0]):
        gap = level - thr[r, col]
        if slopes[r, col] > 0 and gap > 0:
            v = slopes[r, col] * gap
            if use_max:
                if v > out:
                    out = v
            else:
                out += v
    return out


@njit(cache=True, error_model="numpy")
def water_fill(slopes, thr, cap, use_max, lower, upper, start, scale):
    """Level-curve construction plus taut-string sweep in one pass.

    Mirrors ``ortho_energy.LevelCurve`` followed by ``taut_string``.
    ``slopes``/``thr`` are ``(R, K)`` lines with dead lines marked by a
    nonpositive slope. Returns ``(levels, line_energy, cap_points, b_slot,
    b_kind, n_bound, status, bad_slot)``.
    """
    r_n, k = slopes.shape
    live = np.zeros((r_n, k), dtype=np.bool_)
    n_pts = 1
    for c in range(k):
        for r in range(r_n):
            if slopes[r, c] > 0 and np.isfinite(thr[r, c]):
                live[r, c] = True
                n_pts += 1
    if use_max:
        n_pts += k * r_n * r_n
    pts = np.empty(n_pts)
    pts[0] = 0.0
    m = 1
    tail = np.zeros(k)
    for c in range(k):
        for r in range(r_n):
            if not live[r, c]:
                continue
            pts[m] = thr[r, c]
            m += 1
            if use_max:
                if slopes[r, c] > tail[c]:
                    tail[c] = slopes[r, c]
            else:
                tail[c] += slopes[r, c]
            if use_max:
                for q in range(r + 1, r_n):
                    if not live[q, c] or slopes[q, c] == slopes[r, c]:
                        continue
                    x = (slopes[r, c] * thr[r, c] - slopes[q, c] * thr[q, c]) / (slopes[r, c] - slopes[q, c])
                    if np.isfinite(x) and x > 0:
                        pts[m] = x
                        m += 1
    base = np.unique(pts[:m])
    jb = base.size
    cap_points = np.full(k, np.inf)
    capped_tail = tail.copy()
    n_cap = 0
    if np.isfinite(cap):
        raw = np.empty(jb)
        for c in range(k):
            for q in range(jb):
                raw[q] = _uncapped(slopes, thr, use_max, c, base[q])
            cp = _inv_lower(base, raw, tail[c], cap)
            cap_points[c] = cp
            if np.isfinite(cp):
                capped_tail[c] = 0.0
                n_cap += 1
    grid_pts = np.empty(jb + n_cap)
    grid_pts[:jb] = base
    q = jb
    for c in range(k):
        if np.isfinite(cap_points[c]):
            grid_pts[q] = cap_points[c]
            q += 1
    grid = np.unique(grid_pts)
    j = grid.size
    cum = np.zeros((k + 1, j))
    cum_tail = np.zeros(k + 1)
    for c in range(k):
        for q in range(j):
            v = _uncapped(slopes, thr, use_max, c, grid[q])
            if v > cap:
                v = cap
            cum[c + 1, q] = cum[c, q] + v
        cum_tail[c + 1] = cum_tail[c] + capped_tail[c]
    levels, b_slot, b_kind, nb, status, bad = taut_sweep(grid, cum, cum_tail, lower, upper, start, scale)
    energy = np.zeros((r_n, k))
    if status == OK:
        for c in range(k):
            w = levels[c] if levels[c] < cap_points[c] else cap_points[c]
            for r in range(r_n):
                if live[r, c] and w > thr[r, c]:
                    energy[r, c] = slopes[r, c] * (w - thr[r, c])
    return levels, energy, cap_points, b_slot, b_kind, nb, status, bad
