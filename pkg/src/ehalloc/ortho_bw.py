"""Per-slot bandwidth allocation for orthogonal broadcast.

Given the energies of one slot, the optimal shares follow from a single dual
price ``alpha``: every receiver with energy gets
``max(eps, pH * X / (1 - X))`` where ``X - ln X = alpha / W + 1``, and
``alpha`` is the root of a monotone scalar equation per slot.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

__all__ = ["DomainError", "BracketError", "solve_x", "eval_G", "solve_bp", "solve_bp_slots", "stationarity"]


class DomainError(ValueError):
    pass


class BracketError(RuntimeError):
    pass


_TABLE_Y_MAX = 64.0
_TABLE_SIZE = 2**16


def _build_table():
    # dense sampling of u = ln x, inverted onto a uniform y grid
    u = np.concatenate([-np.geomspace(_TABLE_Y_MAX + 8, 1e-9, 400_000), [0.0]])
    y = np.exp(u) - u
    grid = np.linspace(1.0, _TABLE_Y_MAX, _TABLE_SIZE)
    return grid, np.interp(grid, y[::-1], u[::-1])


_Y_GRID, _U_TABLE = _build_table()


def solve_x(y, tol: float = 1e-12):
    """Solve ``x - ln x = y`` for ``x`` in (0, 1); ``y`` must exceed 1.

    Vectorised. ``y = inf`` maps to 0. Uses the lookup table for a starting
    point, then Newton steps on ``u = ln x``.
    """
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 1)):
        raise DomainError("solve_x needs y > 1")
    finite = np.isfinite(y)
    yf = np.where(finite, y, 2.0)
    u = np.where(yf <= _TABLE_Y_MAX, np.interp(yf, _Y_GRID, _U_TABLE), -yf)
    # near y = 1 the root is x ~ 1 - sqrt(2(y - 1)); the table is coarse there
    near = yf < 1.0 + 1e-3
    u = np.where(near, np.log1p(-np.sqrt(2 * np.minimum(yf - 1, 1e-3))), u)
    for _ in range(2):
        u = _newton(u, yf)
    x = np.exp(u)
    resid = np.abs(x - u - yf)
    for _ in range(20):
        if not np.any(resid > tol * np.maximum(1.0, yf)):
            break
        u = _newton(u, yf)
        x = np.exp(u)
        resid = np.abs(x - u - yf)
    x = np.where(finite, x, 0.0)
    return x if x.ndim else float(x)


def _newton(u, y):
    ex = np.exp(u)
    d = ex - 1.0
    step = (ex - u - y) / np.where(d != 0, d, -1e-300)
    return np.minimum(u - step, -1e-300)


def stationarity(a, snr_num, w):
    """``W [log(1 + pH/a) - pH / (a + pH)]``: marginal value of bandwidth."""
    a = np.asarray(a, dtype=float)
    r = snr_num / a
    return w * (np.log1p(r) - r / (1 + r))


def _root_from_d(d):
    """``X`` with ``X - ln X = 1 + d`` and ``1 - X`` computed without cancellation.

    For tiny ``d`` the root is ``1 - X ~ sqrt(2d)`` and ``1 + d`` rounds to 1,
    so a short series replaces the table there. ``d = inf`` gives ``X = 0``.
    """
    d = np.asarray(d, dtype=float)
    small = d < 1e-10
    x = solve_x(np.where(small, 2.0, d + 1.0))
    s = np.sqrt(2 * np.where(small, d, 0.0))
    series = s - s**2 / 3 + s**3 / 36
    one_minus = np.where(small, series, 1.0 - x)
    return np.where(small, 1.0 - series, x), one_minus


def _ratio(alpha, w):
    """``X / (1 - X)`` with ``X = solve_x(alpha / W + 1)``; zero for zero weights."""
    alpha, w = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(w, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(w > 0, alpha / np.where(w > 0, w, 1.0), np.inf)
    x, one_minus = _root_from_d(d)
    with np.errstate(divide="ignore"):
        return x / one_minus


def eval_G(alpha, energy, gains, weights, epsilon: float) -> float:
    """Sum of clamped bandwidth demands of receivers with positive energy."""
    energy = np.asarray(energy, dtype=float)
    snr = energy * np.asarray(gains, dtype=float)
    on = energy > 0
    if not np.any(on):
        return 0.0
    if alpha <= 0:
        raise DomainError("alpha must be > 0")
    demand = snr[on] * _ratio(alpha, np.asarray(weights, dtype=float)[on])
    return float(np.sum(np.maximum(epsilon, demand)))


def solve_bp(energy, gains, weights, epsilon: float, tol: float = 1e-10) -> np.ndarray:
    """Optimal shares for one slot (vectors of length M)."""
    a, _ = solve_bp_slots(np.asarray(energy, float)[:, None], np.asarray(gains, float)[:, None],
                          np.asarray(weights, float), epsilon, tol)
    return a[:, 0]


def solve_bp_slots(energy, gains, weights, epsilon: float, tol: float = 1e-10, max_iter: int = 200):
    """Solve every slot's bandwidth problem at once.

    ``energy`` and ``gains`` are ``(M, K)``, ``weights`` is ``(M,)``. Returns the
    shares ``(M, K)`` and the dual prices ``(K,)`` (``nan`` on all-zero slots,
    which get the uniform split).

    The dual price of each slot is the root of the decreasing function
    ``G(alpha) - (1 - |Z0| eps)``. ``G`` is smooth between the prices at which
    a demand reaches the floor ``eps``; evaluating it there first leaves a
    smooth bracket, searched with Newton steps (on ``ln G`` against
    ``ln alpha``, or plain) and secant or bisection fallbacks whenever a step
    leaves the bracket. Until both sides of the root have been seen, the
    fallback moves a factor of 100 outward.
    """
    energy = np.asarray(energy, dtype=float)
    gains = np.asarray(gains, dtype=float)
    w = np.asarray(weights, dtype=float)
    snr = np.ascontiguousarray(energy * gains)
    shares, alpha, status = _kernels.ortho_bp(snr, w, float(epsilon), tol, max_iter, _Y_GRID, _U_TABLE)
    if status != _kernels.OK:
        raise BracketError("dual price search did not converge")
    return shares, alpha
