"""Reference solvers for small instances.

These are deliberately independent of the structured solvers: they optimise
the exact concave objective over the full constraint polytope with a generic
method. ``conic`` hands the problem to cvxpy (orthogonal objectives only, as
the superposition rate function has no conic form), ``slsqp`` runs scipy's
SQP on the same problem for both channel modes, and ``grid`` enumerates a
lattice for the tiniest cases.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from .model import Allocation, Scenario, ScenarioError, effective_energy, evaluate, validate

__all__ = [
    "OracleOptions",
    "InstanceTooLarge",
    "oracle_weighted",
    "oracle_pf",
    "F_quadrature",
    "scenario_hash",
    "append_golden",
    "read_golden",
]

METHODS = ("conic", "slsqp", "grid")


class InstanceTooLarge(ScenarioError):
    def __init__(self, msg: str):
        super().__init__(["instance-too-large"], [f"instance-too-large: {msg}"])


@dataclass
class OracleOptions:
    method: str = "slsqp"
    grid_resolution: int = 100
    max_iter: int = 2000
    feas_tol: float = 1e-9
    max_dim: int = 64

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.grid_resolution < 100:
            raise ValueError("grid resolution must be >= 100")


# -------------------------------------------------------------- shared pieces


def _check_size(sc: Scenario, opts: OracleOptions, n_vars: int):
    if opts.method == "grid":
        if n_vars > 6:
            raise InstanceTooLarge(f"grid method accepts at most 6 free variables, got {n_vars}")
    elif n_vars > opts.max_dim:
        raise InstanceTooLarge(f"{n_vars} variables exceed the oracle limit {opts.max_dim}")


def _energy_constraints(sc: Scenario, rows_of):
    """Linear constraints on the per-transmitter energies as (A, lo, hi) with ``lo <= A x <= hi``.

    ``rows_of(n)`` maps a transmitter to the index block of its energy
    variables laid out as ``(rows, K)`` inside the full decision vector.
    """
    eff = effective_energy(sc)
    k = sc.horizon
    mats, lo, hi = [], [], []
    for n in range(sc.n_transmitters):
        block = rows_of(n)
        for j in range(k):
            cum = np.zeros(block.size_total)
            per = np.zeros(block.size_total)
            for idx in block.indices:
                cum[idx[: j + 1]] = 1.0
                per[idx[j]] = 1.0
            mats.append(cum)
            lo.append(eff[n, j] - sc.battery_cap[n])
            hi.append(eff[n, j])
            if np.isfinite(sc.max_power[n]):
                mats.append(per)
                lo.append(-np.inf)
                hi.append(sc.max_power[n])
    return np.array(mats), np.array(lo), np.array(hi)


@dataclass
class _Block:
    indices: list
    size_total: int


def _linear_for_scipy(A, lo, hi):
    cons = []
    fin_hi = np.isfinite(hi)
    fin_lo = np.isfinite(lo)
    if fin_hi.any():
        Ah, bh = A[fin_hi], hi[fin_hi]
        cons.append({"type": "ineq", "fun": lambda x, Ah=Ah, bh=bh: bh - Ah @ x, "jac": lambda x, Ah=Ah: -Ah})
    if fin_lo.any():
        Al, bl = A[fin_lo], lo[fin_lo]
        cons.append({"type": "ineq", "fun": lambda x, Al=Al, bl=bl: Al @ x - bl, "jac": lambda x, Al=Al: Al})
    return cons


def _greedy(sc: Scenario) -> np.ndarray:
    out = np.zeros(sc.harvest.shape)
    for n in range(sc.n_transmitters):
        level = 0.0
        for k in range(sc.horizon):
            avail = level + sc.harvest[n, k]
            use = min(sc.max_power[n], avail)
            level = min(sc.battery_cap[n], avail - use)
            out[n, k] = use
    return out


# --------------------------------------------------------------- orthogonal


def _ortho_layout(sc: Scenario):
    m, k = sc.n_receivers, sc.horizon
    size = 2 * m * k

    def rows_of(n):
        return _Block([np.arange(r * k, (r + 1) * k) for r in sc.receiver_sets[n]], size)

    return m, k, size, rows_of


def _ortho_utility(sc, pf: bool):
    m, k = sc.n_receivers, sc.horizon
    w, h = sc.weights[:, None], sc.gains

    def fun(x):
        p = x[: m * k].reshape(m, k)
        a = np.maximum(x[m * k :].reshape(m, k), 1e-14)
        r = np.maximum(p, 0) * h / a
        terms = a * np.log1p(r)
        dp = h / (1 + r)
        da = np.log1p(r) - r / (1 + r)
        if pf:
            rates = terms.sum(axis=1)
            if np.any(rates <= 0):
                return 1e6, np.zeros_like(x)
            g = 1.0 / rates[:, None]
            val = np.sum(np.log(rates))
        else:
            g = np.broadcast_to(w, (m, k))
            val = float(np.sum(w * terms))
        grad = np.concatenate([(g * dp).ravel(), (g * da).ravel()])
        return -val, -grad

    return fun


def _ortho_slsqp(sc: Scenario, opts: OracleOptions, pf: bool):
    m, k, size, rows_of = _ortho_layout(sc)
    A, lo, hi = _energy_constraints(sc, rows_of)
    simplex = np.zeros((k, size))
    for j in range(k):
        simplex[j, m * k + np.arange(m) * k + j] = 1.0
    cons = _linear_for_scipy(A, lo, hi)
    cons.append({"type": "eq", "fun": lambda x: simplex @ x - 1.0, "jac": lambda x: simplex})
    eps_lb = max(sc.epsilon, 1e-12)
    bounds = [(0.0, None)] * (m * k) + [(eps_lb, 1.0)] * (m * k)
    # start: greedy energy split evenly inside each transmitter, uniform bandwidth
    tx = _greedy(sc)
    p0 = np.zeros((m, k))
    for n, s in enumerate(sc.receiver_sets):
        p0[list(s)] = tx[n] / len(s)
    x0 = np.concatenate([p0.ravel(), np.full(m * k, 1.0 / m)])
    best = _multi_start(_ortho_utility(sc, pf), x0, bounds, cons, opts)
    p = np.maximum(best[: m * k].reshape(m, k), 0.0)
    a = best[m * k :].reshape(m, k)
    a = np.maximum(a, sc.epsilon)
    a = a / a.sum(axis=0, keepdims=True)
    return Allocation("orthogonal", p, bandwidth=a)


def _multi_start(fun, x0, bounds, cons, opts):
    res = optimize.minimize(fun, x0, jac=True, method="SLSQP", bounds=bounds, constraints=cons,
                            options={"maxiter": opts.max_iter, "ftol": 1e-14})
    # a second pass from the first answer polishes the last digits
    res2 = optimize.minimize(fun, res.x, jac=True, method="SLSQP", bounds=bounds, constraints=cons,
                             options={"maxiter": opts.max_iter, "ftol": 1e-15})
    return res2.x if res2.fun <= res.fun else res.x


def _ortho_conic(sc: Scenario, opts: OracleOptions, pf: bool):
    import cvxpy as cp

    m, k = sc.n_receivers, sc.horizon
    eff = effective_energy(sc)
    p = cp.Variable((m, k), nonneg=True)
    a = cp.Variable((m, k))
    cons = [a >= sc.epsilon, cp.sum(a, axis=0) == 1]
    for n, s in enumerate(sc.receiver_sets):
        tot = cp.sum(p[list(s), :], axis=0)
        cum = cp.cumsum(tot)
        cons += [cum <= eff[n], cum >= eff[n] - sc.battery_cap[n]]
        if np.isfinite(sc.max_power[n]):
            cons.append(tot <= sc.max_power[n])
    terms = -cp.rel_entr(a, a + cp.multiply(sc.gains, p))
    rates = cp.sum(terms, axis=1)
    obj = cp.sum(cp.log(rates)) if pf else sc.weights @ rates
    prob = cp.Problem(cp.Maximize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    if p.value is None:
        raise RuntimeError(f"conic oracle failed: {prob.status}")
    pv = np.maximum(p.value, 0.0)
    av = np.maximum(a.value, sc.epsilon)
    av = av / av.sum(axis=0, keepdims=True)
    return Allocation("orthogonal", pv, bandwidth=av)


# ----------------------------------------------------------- non-orthogonal


def F_quadrature(x: float, weights, gains) -> float:
    """``F(x) = integral_0^x max_m W_m / (t + 1/H_m) dt`` by adaptive quadrature."""
    w = np.asarray(weights, dtype=float)
    c = 1.0 / np.asarray(gains, dtype=float)
    if x <= 0:
        return 0.0
    brk = []
    for i, j in itertools.combinations(range(w.size), 2):
        if w[i] != w[j]:
            t = (w[j] * c[i] - w[i] * c[j]) / (w[i] - w[j])
            if 0 < t < x:
                brk.append(t)
    pts = np.unique([0.0, *brk, x])
    f = lambda t: np.max(w / (t + c))
    return float(sum(integrate.quad(f, u, v, epsabs=1e-13, epsrel=1e-13)[0] for u, v in zip(pts[:-1], pts[1:])))


def _nonortho_slsqp(sc: Scenario, opts: OracleOptions):
    nt, k = sc.n_transmitters, sc.horizon
    size = 2 * nt * k
    sets = [list(s) for s in sc.receiver_sets]

    def rows_of(n):
        return _Block([np.arange(n * k, (n + 1) * k)], size)

    def fun(x):
        p = np.maximum(x[: nt * k].reshape(nt, k), 0)
        a = np.maximum(x[nt * k :].reshape(nt, k), 1e-14)
        val = 0.0
        gp, ga = np.zeros((nt, k)), np.zeros((nt, k))
        for n, s in enumerate(sets):
            w = sc.weights[s]
            for j in range(k):
                xx = p[n, j] / a[n, j]
                fv = F_quadrature(xx, w, sc.gains[s, j])
                fd = np.max(w / (xx + 1.0 / sc.gains[s, j])) if w.any() else 0.0
                val += a[n, j] * fv
                gp[n, j] = fd
                ga[n, j] = fv - xx * fd
        return -val, -np.concatenate([gp.ravel(), ga.ravel()])

    A, lo, hi = _energy_constraints(sc, rows_of)
    simplex = np.zeros((k, size))
    for j in range(k):
        simplex[j, nt * k + np.arange(nt) * k + j] = 1.0
    cons = _linear_for_scipy(A, lo, hi)
    cons.append({"type": "eq", "fun": lambda x: simplex @ x - 1.0, "jac": lambda x: simplex})
    bounds = [(0.0, None)] * (nt * k) + [(max(sc.epsilon, 1e-12), 1.0)] * (nt * k)
    x0 = np.concatenate([_greedy(sc).ravel(), np.full(nt * k, 1.0 / nt)])
    best = _multi_start(fun, x0, bounds, cons, opts)
    tot = np.maximum(best[: nt * k].reshape(nt, k), 0.0)
    tx = np.maximum(best[nt * k :].reshape(nt, k), sc.epsilon)
    tx = tx / tx.sum(axis=0, keepdims=True)
    return _split_allocation(sc, tot, tx)


def _split_allocation(sc: Scenario, tot, tx) -> Allocation:
    """Spread each transmitter's energy over its receivers by a brute-force split search."""
    energy = np.zeros((sc.n_receivers, sc.horizon))
    for n, s in enumerate(sc.receiver_sets):
        s = list(s)
        for j in range(sc.horizon):
            energy[s, j] = tx[n, j] * _best_split(tot[n, j] / tx[n, j], sc.weights[s], sc.gains[s, j])
    return Allocation("nonorthogonal", energy, tx_bandwidth=tx)


def _sic_value(split, w, h):
    order = np.argsort(-h)  # strongest first: it sees no interference
    val, above = 0.0, 0.0
    for i in order:
        val += w[i] * np.log1p(split[i] * h[i] / (1 + above * h[i]))
        above += split[i]
    return val


def _best_split(x, w, h):
    """Split of ``x`` maximising the weighted superposition rate (SLSQP on the simplex)."""
    r = w.size
    if r == 1 or x <= 0:
        out = np.zeros(r)
        out[0 if r == 1 else int(np.argmax(h))] = max(x, 0.0)
        return out
    best, best_val = None, -np.inf
    starts = [np.full(r, x / r)] + [np.eye(r)[i] * x for i in range(r)]
    for s0 in starts:
        res = optimize.minimize(lambda v: -_sic_value(v, w, h), s0, method="SLSQP",
                                bounds=[(0, x)] * r,
                                constraints=[{"type": "eq", "fun": lambda v: v.sum() - x}],
                                options={"ftol": 1e-15, "maxiter": 500})
        if -res.fun > best_val:
            best, best_val = np.clip(res.x, 0, x), -res.fun
    return best * (x / best.sum()) if best.sum() > 0 else best


# ------------------------------------------------------------------- grid


def _grid_weighted(sc: Scenario, opts: OracleOptions, pf: bool):
    """Lattice scan over a single transmitter's free energies and bandwidth shares.

    Supported shape: ``N = 1`` with ``M <= 2`` and ``K <= 3`` (orthogonal).
    Energy lattice points are filtered by the causality constraints.
    """
    if sc.n_transmitters != 1 or sc.n_receivers > 2 or sc.horizon > 3:
        raise InstanceTooLarge("grid method supports N = 1, M <= 2, K <= 3")
    m, k = sc.n_receivers, sc.horizon
    n_free = k * m + k * (m - 1)
    _check_size(sc, opts, n_free)
    res = opts.grid_resolution if n_free <= 2 else max(100, int(round(3e6 ** (1.0 / n_free))))
    eff = effective_energy(sc)[0]
    top = float(min(eff[-1], sc.max_power[0] if np.isfinite(sc.max_power[0]) else eff[-1]))
    e_axis = np.linspace(0.0, top, res + 1)
    eps = sc.epsilon
    a_axis = np.linspace(max(eps, 1e-12), 1 - max(eps, 1e-12), res + 1) if m == 2 else np.ones(1)
    axes = [e_axis] * (k * m) + [a_axis] * (k * (m - 1))
    best_val, best = -np.inf, None
    for combo in itertools.product(*axes):
        p = np.array(combo[: k * m]).reshape(m, k)
        tot = p.sum(axis=0)
        cum = np.cumsum(tot)
        if np.any(cum > eff + 1e-12) or np.any(cum < eff - sc.battery_cap[0] - 1e-12):
            continue
        if np.any(tot > sc.max_power[0] + 1e-12):
            continue
        if m == 2:
            a1 = np.array(combo[k * m :])
            a = np.vstack([a1, 1 - a1])
        else:
            a = np.ones((1, k))
        alloc = Allocation("orthogonal", p, bandwidth=a)
        rep = evaluate(sc, alloc)
        val = rep.pf_utility if pf else rep.weighted_total
        if val > best_val:
            best_val, best = val, alloc
    if best is None:
        raise RuntimeError("grid oracle found no feasible lattice point")
    return best


# ------------------------------------------------------------------ public


def oracle_weighted(scenario: Scenario, mode: str = "orthogonal", options: OracleOptions | None = None):
    """Reference weighted-throughput optimum; returns ``(Allocation, objective)``."""
    sc = validate(scenario)
    opts = options or OracleOptions()
    if sc.n_transmitters > 2 or sc.n_receivers > 4 or sc.horizon > 4:
        raise InstanceTooLarge("oracle accepts N <= 2, M <= 4, K <= 4")
    if mode == "orthogonal":
        _check_size(sc, opts, 2 * sc.n_receivers * sc.horizon)
        alloc = {"conic": _ortho_conic, "slsqp": _ortho_slsqp, "grid": _grid_weighted}[opts.method](sc, opts, False)
    elif mode == "nonorthogonal":
        if opts.method != "slsqp":
            raise ValueError("non-orthogonal oracle supports the slsqp method only")
        alloc = _nonortho_slsqp(sc, opts)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return alloc, evaluate(sc, alloc).weighted_total


def oracle_pf(scenario: Scenario, options: OracleOptions | None = None):
    """Reference proportional-fair optimum (orthogonal); returns ``(Allocation, U)``."""
    sc = validate(scenario)
    opts = options or OracleOptions(method="conic")
    if sc.n_transmitters > 2 or sc.n_receivers > 4 or sc.horizon > 4:
        raise InstanceTooLarge("oracle accepts N <= 2, M <= 4, K <= 4")
    _check_size(sc, opts, 2 * sc.n_receivers * sc.horizon)
    alloc = {"conic": _ortho_conic, "slsqp": _ortho_slsqp, "grid": _grid_weighted}[opts.method](sc, opts, True)
    rep = evaluate(sc, alloc)
    if np.any(rep.per_receiver <= 0):
        raise ScenarioError(["zero-rate"], ["zero-rate: some receiver gets no rate at the optimum"])
    return alloc, rep.pf_utility


# ------------------------------------------------------------ golden values


def scenario_hash(scenario: Scenario) -> str:
    from .model import scenario_to_dict

    doc = scenario_to_dict(scenario)
    doc.pop("metadata", None)
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def append_golden(path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_golden(path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        return []
    return [json.loads(line) for line in p.read_text().splitlines() if line.strip()]
