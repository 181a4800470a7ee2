"""Superposition (non-orthogonal) broadcast: the per-transmitter rate function.

For one transmitter in one slot with total energy ``p`` per unit bandwidth,
``F(p)`` is the best weighted superposition rate over all splits of ``p``.
Its derivative is the upper envelope of the hyperbolas
``f_m(p) = W_m / (p + 1/H_m)``; the envelope is a sequence of segments, one
per active receiver, ordered from the strongest channel to the weakest. The
optimal split gives each active receiver exactly the part of ``[0, p)``
covered by its segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ortho_bw import _U_TABLE, _Y_GRID, BracketError, solve_x
from .ortho_energy import fast_fill

__all__ = [
    "EnvelopeSpec",
    "EnvelopeBank",
    "intersection",
    "build_envelope",
    "split_energy",
    "F_value",
    "F_derivative",
    "F_stationarity",
    "solve_ep_nonortho",
    "solve_bp_nonortho",
]


def intersection(a, b):
    """Crossing point ``p >= 0`` of ``W_a/(p + 1/H_a)`` and ``W_b/(p + 1/H_b)``.

    ``a`` and ``b`` are ``(W, H)`` pairs. Returns ``None`` when the curves do
    not cross at a nonnegative ``p`` (always the case for equal weights).
    """
    wa, ha = a
    wb, hb = b
    if wa == wb:
        return None
    x = (hb * wb - ha * wa) / (hb * ha * (wa - wb))
    return float(x) if x >= 0 else None


@dataclass
class EnvelopeSpec:
    """Ordered envelope segments for one transmitter and slot.

    ``receivers[j]`` owns ``[lo[j], hi[j])``. Indices refer to positions in
    the ``weights``/``gains`` given to :func:`build_envelope`; ``cutoffs`` has
    one entry per input receiver (``inf`` if it never gets energy).
    """

    receivers: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    weights: np.ndarray
    gains: np.ndarray
    cutoffs: np.ndarray

    @property
    def n_segments(self) -> int:
        return int(self.receivers.size)

    def F_at_lo(self) -> np.ndarray:
        c = 1.0 / self.gains[self.receivers]
        w = self.weights[self.receivers]
        pieces = w * np.log1p((self.hi - self.lo) / (self.lo + c))
        return np.concatenate([[0.0], np.cumsum(pieces[:-1])])


def build_envelope(weights, gains) -> EnvelopeSpec:
    """Sweep the hyperbola envelope from ``p = 0`` upwards."""
    w = np.asarray(weights, dtype=float)
    h = np.asarray(gains, dtype=float)
    live = np.flatnonzero(w > 0)
    cutoffs = np.full(w.size, np.inf)
    if live.size == 0:
        empty = np.zeros(0)
        return EnvelopeSpec(np.zeros(0, dtype=int), empty, empty, w, h, cutoffs)
    # top of the envelope at p = 0; on a tie the heavier weight wins afterwards
    order = sorted(live, key=lambda r: (w[r] * h[r], w[r]))
    cur = order[-1]
    x = 0.0
    recv, lo, hi = [], [], []
    while True:
        best, best_x = None, np.inf
        for r in live:
            if w[r] <= w[cur]:
                continue
            ix = intersection((w[cur], h[cur]), (w[r], h[r]))
            if ix is None or ix < x:
                continue
            if ix < best_x or (ix == best_x and w[r] > w[best]):
                best, best_x = r, ix
        if best is None:
            recv.append(cur), lo.append(x), hi.append(np.inf)
            break
        if best_x > x:
            recv.append(cur), lo.append(x), hi.append(best_x)
        cur, x = best, best_x
    recv = np.array(recv, dtype=int)
    lo = np.array(lo)
    cutoffs[recv] = lo
    return EnvelopeSpec(recv, lo, np.array(hi), w, h, cutoffs)


def split_energy(p_total: float, env: EnvelopeSpec) -> np.ndarray:
    """Optimal per-receiver split of ``p_total`` along the envelope segments."""
    out = np.zeros(env.weights.size)
    if env.n_segments:
        out[env.receivers] = np.maximum(np.minimum(p_total, env.hi) - env.lo, 0.0)
    return out


def F_value(p: float, env: EnvelopeSpec) -> float:
    """Closed-form integral of the envelope from 0 to ``p``."""
    if env.n_segments == 0 or p <= 0:
        return 0.0
    c = 1.0 / env.gains[env.receivers]
    w = env.weights[env.receivers]
    span = np.maximum(np.minimum(p, env.hi) - env.lo, 0.0)
    return float(np.sum(w * np.log1p(span / (env.lo + c))))


def F_derivative(p: float, env: EnvelopeSpec) -> float:
    """``max_m W_m / (p + 1/H_m)``."""
    if env.weights.size == 0:
        return 0.0
    return float(np.max(env.weights / (p + 1.0 / env.gains)))


def F_stationarity(p: float, env: EnvelopeSpec) -> float:
    """``F(p) - p F'(p)``: marginal value of bandwidth at energy density ``p``."""
    return F_value(p, env) - p * F_derivative(p, env)


class EnvelopeBank:
    """Envelopes of every (transmitter, slot), padded into ``(N, K, S)`` arrays."""

    def __init__(self, envelopes: list[list[EnvelopeSpec]]):
        self.envelopes = envelopes
        n, k = len(envelopes), len(envelopes[0])
        s = max(1, max(e.n_segments for row in envelopes for e in row))
        self.lo = np.full((n, k, s), np.inf)
        self.hi = np.full((n, k, s), np.inf)
        self.w = np.ones((n, k, s))
        self.c = np.ones((n, k, s))
        self.f_lo = np.zeros((n, k, s))
        self.valid = np.zeros((n, k, s), dtype=bool)
        for i, row in enumerate(envelopes):
            for j, env in enumerate(row):
                q = env.n_segments
                if not q:
                    continue
                self.lo[i, j, :q] = env.lo
                self.hi[i, j, :q] = env.hi
                self.w[i, j, :q] = env.weights[env.receivers]
                self.c[i, j, :q] = 1.0 / env.gains[env.receivers]
                self.f_lo[i, j, :q] = env.F_at_lo()
                self.valid[i, j, :q] = True
        self.empty = ~self.valid.any(axis=2)
        with np.errstate(invalid="ignore"):
            h_lo = self.f_lo - self.lo * self.w / (self.lo + self.c)
        self.h_lo = np.where(self.valid, h_lo, np.inf)

    @classmethod
    def from_scenario(cls, scenario) -> "EnvelopeBank":
        rows = []
        for s in scenario.receiver_sets:
            s = list(s)
            w = scenario.weights[s]
            rows.append([build_envelope(w, scenario.gains[s, k]) for k in range(scenario.horizon)])
        return cls(rows)

    def value(self, x) -> np.ndarray:
        """``F(x)`` for densities ``x`` shaped ``(N, K)``."""
        x = np.asarray(x, dtype=float)[..., None]
        with np.errstate(invalid="ignore"):
            span = np.clip(np.minimum(x, self.hi) - self.lo, 0.0, None)
            f = np.where(self.valid, self.w * np.log1p(span / (self.lo + self.c)), 0.0).sum(axis=2)
        return np.where(self.empty, 0.0, f)

    def stationarity(self, x) -> np.ndarray:
        """``F(x) - x F'(x)`` for densities ``x`` shaped ``(N, K)``."""
        x = np.asarray(x, dtype=float)[..., None]
        with np.errstate(invalid="ignore"):
            span = np.clip(np.minimum(x, self.hi) - self.lo, 0.0, None)
            f = np.where(self.valid, self.w * np.log1p(span / (self.lo + self.c)), 0.0).sum(axis=2)
            d = np.where(self.valid, self.w / (x + self.c), 0.0).max(axis=2)
        return np.where(self.empty, 0.0, f - x[..., 0] * d)

    def density(self, alpha) -> np.ndarray:
        """Energy density ``x`` with ``F(x) - x F'(x) = alpha``; ``alpha`` is ``(K,)``."""
        al = np.broadcast_to(np.asarray(alpha, dtype=float)[None, :, None], self.lo.shape)
        seg = np.where(self.h_lo <= al, np.arange(self.lo.shape[2]), -1).max(axis=2)
        seg = np.maximum(seg, 0)[..., None]
        lo, c, w, f_lo = (np.take_along_axis(v, seg, 2)[..., 0] for v in (self.lo, self.c, self.w, self.f_lo))
        a0 = al[..., 0]
        y = (a0 - f_lo) / w + np.log1p(lo / c) + 1.0
        z = solve_x(np.where(self.empty | ~(y > 1), 2.0, y))
        x = c * (1.0 - z) / z
        return np.where(self.empty, 0.0, np.where(y > 1, x, lo))


def solve_ep_nonortho(tx_bandwidth, weights, gains, eff_energy, battery_cap: float, max_power: float = np.inf):
    """Total energy per slot ``(K,)`` of one transmitter for fixed bandwidth shares.

    Same boundary search as the orthogonal case, with the per-slot rule
    ``min(P, a * max_m [W_m w - 1/H_m]^+)``.
    """
    a = np.asarray(tx_bandwidth, dtype=float)
    w = np.asarray(weights, dtype=float).reshape(-1, 1)
    h = np.atleast_2d(np.asarray(gains, dtype=float))
    with np.errstate(divide="ignore"):
        thr = np.where(w > 0, 1.0 / (w * h), np.inf)
    lines, profile = fast_fill(a[None, :] * w, thr, max_power, True, eff_energy, battery_cap)
    return lines.max(axis=0), profile


def solve_bp_nonortho(tot_energy, bank: EnvelopeBank, epsilon: float, tol: float = 1e-10, max_iter: int = 200):
    """Transmitter shares ``(N, K)`` for fixed total energies ``(N, K)``.

    Same price search as the orthogonal case: for a given slot price
    ``alpha`` each transmitter's share solves ``F(p/a) - F'(p/a) p/a = alpha``,
    which on an envelope segment is the ``z - ln z = y`` equation again.
    Returns ``(shares, alpha)``; slots without energy get the uniform split.
    """
    p = np.ascontiguousarray(np.asarray(tot_energy, dtype=float))
    shares, alpha, status = _kernels.nonortho_bp(
        p, bank.lo, bank.hi, bank.w, bank.c, bank.f_lo, bank.h_lo, bank.valid, bank.empty,
        float(epsilon), tol, max_iter, _Y_GRID, _U_TABLE)
    if status != _kernels.OK:
        raise BracketError("slot price search did not converge")
    return shares, alpha


def receiver_energy(tot_energy, tx_bandwidth, bank: EnvelopeBank, receiver_sets, n_receivers: int) -> np.ndarray:
    """Per-receiver energies ``(M, K)`` from transmitter totals via the optimal split."""
    p = np.asarray(tot_energy, dtype=float)
    a = np.asarray(tx_bandwidth, dtype=float)
    out = np.zeros((n_receivers, p.shape[1]))
    for i, s in enumerate(receiver_sets):
        s = list(s)
        for k in range(p.shape[1]):
            if p[i, k] <= 0 or a[i, k] <= 0:
                continue
            out[s, k] = a[i, k] * split_energy(p[i, k] / a[i, k], bank.envelopes[i][k])
    return out
