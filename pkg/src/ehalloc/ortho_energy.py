"""Energy allocation of one transmitter by two-dimensional dynamic water-filling.

A single water level ``w`` is shared by all receivers of the transmitter in a
slot (``p_m = a_m [W_m w - 1/H_m]^+``, capped at the per-slot power limit) and
is held constant in time between battery depletion points (BDP) and battery
full points (BFP). The level can only rise across a BDP and only fall across
a BFP.

Per-slot energy is a piecewise-linear nondecreasing function of the level, so
segment levels are obtained by exact inversion on the union of all
breakpoints instead of iterative bisection. The boundary set comes from a
forward sweep that grows each constant-level segment until the feasible level
interval closes, then restarts from the binding battery point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

__all__ = [
    "SegmentInfeasible",
    "LevelCurve",
    "WaterLevelProfile",
    "slot_power",
    "segment_level",
    "taut_string",
    "dynamic_wf",
    "check_water_levels",
]

BDP = "BDP"
BFP = "BFP"


class SegmentInfeasible(ValueError):
    """The energy a segment must spend exceeds what its slots can absorb."""


@dataclass
class WaterLevelProfile:
    levels: np.ndarray
    cap_levels: np.ndarray
    boundaries: list[tuple[int, str]] = field(default_factory=list)

    @property
    def effective_levels(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / (1.0 / self.levels + self.cap_levels)


class LevelCurve:
    """Per-slot energy as a function of the water level.

    ``slopes`` and ``thresholds`` are ``(R, K)``: line ``r`` of slot ``k``
    contributes ``slopes[r, k] * (w - thresholds[r, k])^+``. Lines are added
    (``combine="sum"``, orthogonal receivers) or maxed
    (``combine="max"``, superposition total energy). The result is capped at
    ``cap`` per slot.
    """

    def __init__(self, slopes, thresholds, cap: float = np.inf, combine: str = "sum"):
        c = np.atleast_2d(np.asarray(slopes, dtype=float))
        t = np.atleast_2d(np.asarray(thresholds, dtype=float))
        live = (c > 0) & np.isfinite(t)
        self.slopes = np.where(live, c, 0.0)
        self.thresholds = np.where(live, t, np.inf)
        self.cap = float(cap)
        self.combine = combine
        self.n_slots = c.shape[1]

        pts = [np.zeros(1), self.thresholds[live]]
        if combine == "max" and c.shape[0] > 1:
            # crossings of pairs of lines inside one slot
            ci, cj = self.slopes[:, None], self.slopes[None, :]
            ti, tj = self.thresholds[:, None], self.thresholds[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                x = (ci * ti - cj * tj) / (ci - cj)
            ok = live[:, None] & live[None, :] & (ci != cj) & np.isfinite(x) & (x > 0)
            pts.append(x[ok])
        base = np.unique(np.concatenate(pts))
        if combine == "sum":
            self.tail = self.slopes.sum(axis=0)
        else:
            self.tail = self.slopes.max(axis=0)
        raw = self.uncapped(base)
        if np.isfinite(self.cap):
            self.cap_points = _invert(base, raw, self.tail, np.full(self.n_slots, self.cap), upper=False)
        else:
            self.cap_points = np.full(self.n_slots, np.inf)
        extra = self.cap_points[np.isfinite(self.cap_points)]
        self.grid = np.unique(np.concatenate([base, extra]))
        self.values = np.minimum(self.cap, self.uncapped(self.grid))
        self.capped_tail = np.where(np.isfinite(self.cap_points), 0.0, self.tail)

    def uncapped(self, w) -> np.ndarray:
        """Uncapped per-slot energy; ``w`` is a grid ``(J,)`` -> ``(K, J)``."""
        w = np.asarray(w, dtype=float)
        gap = w[None, None, :] - self.thresholds[:, :, None]
        terms = np.where(gap > 0, self.slopes[:, :, None] * np.where(gap > 0, gap, 0.0), 0.0)
        return terms.sum(axis=0) if self.combine == "sum" else terms.max(axis=0)

    def effective(self, levels) -> np.ndarray:
        """Per-slot level after the power cap binds, shape ``(K,)``."""
        return np.minimum(np.asarray(levels, dtype=float), self.cap_points)

    def line_energy(self, levels) -> np.ndarray:
        """Energy on each line ``(R, K)`` at per-slot levels ``(K,)`` (after capping)."""
        w = self.effective(levels)[None, :]
        with np.errstate(invalid="ignore"):
            gap = np.where(np.isfinite(self.thresholds), w - self.thresholds, -np.inf)
        return np.where(gap > 0, self.slopes * np.where(gap > 0, gap, 0.0), 0.0)

    def slot_energy(self, levels) -> np.ndarray:
        e = self.line_energy(levels)
        total = e.sum(axis=0) if self.combine == "sum" else e.max(axis=0)
        return np.minimum(total, self.cap)

    def capacity(self) -> np.ndarray:
        """Largest energy each slot can absorb (``inf`` if unbounded)."""
        return np.where(self.capped_tail > 0, np.inf, self.values[:, -1])


def _invert(grid, vals, tail, target, upper: bool) -> np.ndarray:
    """Row-wise generalized inverse of nondecreasing piecewise-linear rows.

    ``upper=True`` returns ``sup{w : G(w) <= T}``, otherwise
    ``inf{w : G(w) >= T}``; ``inf`` when the set is unbounded/empty.
    """
    vals = np.atleast_2d(vals)
    target = np.asarray(target, dtype=float)
    nj = grid.size
    if upper:
        j = (vals <= target[:, None]).sum(axis=1) - 1
        j = np.clip(j, 0, nj - 1)
        inner = j < nj - 1
        jn = np.minimum(j + 1, nj - 1)
    else:
        first = (vals < target[:, None]).sum(axis=1)
        inner = first < nj
        jn = np.minimum(first, nj - 1)
        j = np.maximum(jn - 1, 0)
    v0 = np.take_along_axis(vals, j[:, None], 1)[:, 0]
    v1 = np.take_along_axis(vals, jn[:, None], 1)[:, 0]
    dv = v1 - v0
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = grid[j] + np.where(dv > 0, (target - v0) / np.where(dv > 0, dv, 1.0), 0.0) * (grid[jn] - grid[j])
        last = vals[:, -1]
        beyond = np.where(tail > 0, grid[-1] + (target - last) / np.where(tail > 0, tail, 1.0), np.inf)
    out = np.where(inner, mid, beyond)
    if not upper:
        out = np.where(target <= vals[:, 0], grid[0], out)
    return out


def taut_string(curve: LevelCurve, lower, upper, start: float = 0.0):
    """Maximise a concave separable utility under cumulative bounds.

    Finds per-slot levels such that the cumulative energy ``S^k`` stays in
    ``[lower[k], upper[k]]`` and the level is constant except across binding
    points: it rises only where ``S^k = upper[k]`` (BDP) and falls only where
    ``S^k = lower[k]`` (BFP). Returns ``(levels, slot_energy, boundaries)``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    k = curve.n_slots
    cum = np.vstack([np.zeros((1, curve.grid.size)), np.cumsum(curve.values, axis=0)])
    cum_tail = np.concatenate([[0.0], np.cumsum(curve.capped_tail)])
    scale = max(1.0, float(np.max(np.abs(upper))))
    levels, b_slot, b_kind, nb, status, bad = _kernels.taut_sweep(
        np.ascontiguousarray(curve.grid), np.ascontiguousarray(cum), cum_tail, lower, upper, float(start), scale)
    if status != _kernels.OK:
        raise SegmentInfeasible(f"slots up to {bad + 1} cannot absorb the required energy")
    boundaries = [(int(b_slot[i]), BDP if b_kind[i] == _kernels.BDP_CODE else BFP) for i in range(nb)]
    energy = curve.slot_energy(levels)
    cum_e = start + np.cumsum(energy)
    if np.any(cum_e > upper + 1e-9 * scale) or np.any(cum_e < lower - 1e-9 * scale):
        raise SegmentInfeasible("water levels violate the cumulative energy bounds")
    return levels, energy, boundaries


def _ortho_curve(bandwidth, weights, gains, max_power) -> LevelCurve:
    slopes, thr = _ortho_lines(bandwidth, weights, gains)
    return LevelCurve(slopes, thr, max_power, "sum")


def slot_power(w: float, cap_level: float, bandwidth, weights, gains) -> np.ndarray:
    """Receiver energies of one slot at water level ``w`` and cap multiplier ``cap_level``.

    The effective level is ``1 / (1/w + cap_level)``; ``cap_level`` is zero
    unless the slot's power limit binds.
    """
    a = np.asarray(bandwidth, dtype=float)
    wm = np.asarray(weights, dtype=float)
    h = np.asarray(gains, dtype=float)
    with np.errstate(divide="ignore"):
        w_eff = 1.0 / (1.0 / w + cap_level)
        p = a * np.maximum(wm * w_eff - 1.0 / h, 0.0)
    return np.where(a > 0, p, 0.0)


def segment_level(energy_target: float, bandwidth, weights, gains, max_power: float = np.inf):
    """Common level spending ``energy_target`` over the given slots.

    ``bandwidth`` and ``gains`` are ``(R, S)`` for the ``S`` slots of the
    segment. Returns ``(w, p)`` with ``p`` the receiver energies ``(R, S)``.
    Bisection is unnecessary here: the slot sum is piecewise linear in ``w``
    and is inverted exactly.
    """
    curve = _ortho_curve(bandwidth, weights, gains, max_power)
    total = curve.values.sum(axis=0)
    tail = curve.capped_tail.sum()
    if energy_target > 0 and tail == 0 and energy_target > total[-1] * (1 + 1e-12):
        raise SegmentInfeasible(f"segment can absorb at most {total[-1]:.6g}")
    w = float(_invert(curve.grid, total[None, :], np.array([tail]), np.array([energy_target]), upper=False)[0])
    levels = np.full(curve.n_slots, w)
    return w, curve.line_energy(levels)


def dynamic_wf(bandwidth, weights, gains, eff_energy, battery_cap: float, max_power: float = np.inf):
    """Optimal receiver energies ``(R, K)`` of one transmitter for fixed bandwidths.

    ``eff_energy`` is the cumulative effective harvest of the transmitter.
    Returns ``(energy, WaterLevelProfile)``.
    """
    slopes, thr = _ortho_lines(bandwidth, weights, gains)
    return fast_fill(slopes, thr, max_power, False, eff_energy, battery_cap)


def _ortho_lines(bandwidth, weights, gains):
    a = np.atleast_2d(np.asarray(bandwidth, dtype=float))
    w = np.asarray(weights, dtype=float).reshape(-1, 1)
    h = np.atleast_2d(np.asarray(gains, dtype=float))
    with np.errstate(divide="ignore"):
        thr = np.where(w > 0, 1.0 / (w * h), np.inf)
    return a * w, thr


def fast_fill(slopes, thr, max_power, use_max: bool, eff_energy, battery_cap: float):
    """Compiled equivalent of ``taut_string(LevelCurve(slopes, thr, P, combine), ...)``.

    Returns the per-line energies ``(R, K)`` and the water-level profile.
    """
    eff = np.asarray(eff_energy, dtype=float)
    lower, upper = eff - battery_cap, eff
    scale = max(1.0, float(np.max(np.abs(upper))))
    levels, energy, cap_points, b_slot, b_kind, nb, status, bad = _kernels.water_fill(
        np.ascontiguousarray(slopes, dtype=float), np.ascontiguousarray(thr, dtype=float), float(max_power),
        use_max, lower, upper, 0.0, scale)
    if status != _kernels.OK:
        raise SegmentInfeasible(f"slots up to {bad + 1} cannot absorb the required energy")
    total = energy.max(axis=0) if use_max else energy.sum(axis=0)
    cum_e = np.cumsum(total)
    if np.any(cum_e > upper + 1e-9 * scale) or np.any(cum_e < lower - 1e-9 * scale):
        raise SegmentInfeasible("water levels violate the cumulative energy bounds")
    boundaries = [(int(b_slot[i]), BDP if b_kind[i] == _kernels.BDP_CODE else BFP) for i in range(nb)]
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.where(cap_points < levels, 1.0 / cap_points - 1.0 / levels, 0.0)
    return energy, WaterLevelProfile(levels, xi, boundaries)


def _profile(curve: LevelCurve, levels, boundaries) -> WaterLevelProfile:
    eff = curve.effective(levels)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.where(eff < levels, 1.0 / eff - 1.0 / levels, 0.0)
    return WaterLevelProfile(np.asarray(levels, dtype=float), np.nan_to_num(xi), list(boundaries))


def check_water_levels(profile: WaterLevelProfile, battery, battery_cap: float, tol: float = 1e-6) -> list[str]:
    """Report water-level changes not justified by a depleted/full battery.

    ``battery`` is the level after each slot. A rise between slots ``k`` and
    ``k+1`` needs ``battery[k] = 0``; a fall needs ``battery[k] = battery_cap``.
    """
    w = profile.levels
    issues = []
    scale = max(1.0, battery_cap)
    for k in range(w.size - 1):
        a, b = w[k], w[k + 1]
        if a == b or (np.isfinite(a) and np.isfinite(b) and abs(b - a) <= tol * max(1.0, abs(a))):
            continue
        if b > a and battery[k] > tol * scale:
            issues.append(f"level rises after slot {k} with battery {battery[k]:.3g} > 0")
        if b < a and battery[k] < battery_cap - tol * scale:
            issues.append(f"level falls after slot {k} with battery {battery[k]:.3g} < cap")
    return issues
