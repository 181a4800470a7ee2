"""Proportionally fair allocation through PF-weight iteration (orthogonal mode).

A weighted solve with weights ``W`` is PF-optimal exactly when every product
``W_m R_m(W)`` takes the same value. Two families of updates are offered.

``rule="master"`` (default) keeps every weighted solution it has seen and
mixes them: the mixture weights maximise ``sum log`` of the mixed rates, the
next weights are the reciprocals of those rates, and a new weighted solve
either certifies the mixture (``W @ R(W) - M`` is an upper bound on the
utility still missing) or adds a new solution to the pool. Because the
problem is concave, a mixture of feasible allocations is feasible and earns
at least the mixed rates.

``rule="simultaneous"`` and ``rule="alternating"`` are the plain subgradient
updates with a diminishing step. They are kept for comparison: the rate
region has nearly flat faces, so ``R(W)`` jumps under tiny weight changes and
these updates approach the fixed point slowly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .model import Allocation, Scenario, ScenarioError, evaluate, validate
from .solver import SolveOptions, solve

__all__ = [
    "PfState",
    "PfReport",
    "pf_utility",
    "subgradients",
    "check_pf_condition",
    "default_delta0",
    "pf_iterate",
    "mix_rates",
    "approx_pf_weights",
]

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-9
# unserved receivers are priced as if they had this fraction of the best rate
RATE_FLOOR = 1e-3
STABILIZE = 0.5
RULES = ("master", "simultaneous", "alternating")


@dataclass
class PfState:
    weights: np.ndarray
    aux_weights: np.ndarray
    rates: np.ndarray
    theta_residual: float = np.inf
    step: float = 0.0
    iter: int = 0


@dataclass
class PfReport:
    """``pf_utility`` is ``-inf`` only if the iteration stops with an unserved receiver."""

    pf_utility: float
    converged: bool
    residual: float
    iterations: int
    utilities: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    floored: list[tuple[int, int]] = field(default_factory=list)


def pf_utility(rates) -> float:
    """``sum(log R_m)``; every rate must be positive."""
    r = np.asarray(rates, dtype=float)
    if np.any(~(r > 0)):
        bad = np.flatnonzero(~(r > 0)).tolist()
        raise ScenarioError(["zero-rate"], [f"zero-rate: receivers {bad} have no throughput"])
    return float(np.sum(np.log(r)))


def subgradients(state: PfState):
    """Return ``(g_aux, g_w)``: ``R_m - 1/W_m`` and ``aux_m / W_m**2``."""
    w = np.asarray(state.weights, dtype=float)
    g_aux = np.asarray(state.rates, dtype=float) - 1.0 / w
    g_w = np.asarray(state.aux_weights, dtype=float) / w**2
    return g_aux, g_w


def check_pf_condition(weights, rates, tol: float = 1e-3):
    """``(holds, theta)``: whether all ``W_m R_m`` agree within ``tol`` times their mean."""
    prod = np.asarray(weights, dtype=float) * np.asarray(rates, dtype=float)
    theta = float(np.mean(prod))
    return bool(prod.max() - prod.min() <= tol * theta), theta


def default_delta0(weights, rates) -> float:
    """Initial step for weights already normalised so that ``mean(W R) = 1``.

    The update subtracts ``delta * (R - 1/W)``, so the step must scale like
    ``W / R``; using the largest weight and the largest rate gives a step that
    moves every weight by at most a fraction of itself near the fixed point.
    """
    w = np.asarray(weights, dtype=float)
    r = np.asarray(rates, dtype=float)
    return float(w.max() / r.max())


def _solve_rates(sc: Scenario, weights, options: SolveOptions, warm):
    alloc, report, _ = solve(sc.with_weights(weights), options, init_bandwidth=warm)
    return alloc, report.per_receiver


def pf_iterate(
    scenario: Scenario,
    initial_weights=None,
    schedule: Callable[[int], float] | None = None,
    tol: float | None = None,
    max_iters: int = 200,
    rule: str = "master",
    options: SolveOptions | None = None,
    warm_start: bool = False,
):
    """Run the PF-weight iteration; returns ``(Allocation, PfReport, PfState)``.

    The stopping residual depends on the rule: the certified utility gap
    ``W @ R(W) - M`` for ``"master"`` (default ``tol`` 1e-6) and
    ``sum |R_m - 1/W_m|`` for the subgradient rules (default 1e-4).
    ``schedule(i)`` gives the subgradient step of iteration ``i >= 1``; the
    default is ``delta0 / i`` with :func:`default_delta0`, after the initial
    weights are rescaled so that ``mean(W R) = 1`` (this leaves the weighted
    optimum unchanged). ``rule="alternating"`` updates the auxiliary weights
    by their subgradient with the weights held fixed, then pulls the weights
    towards them. ``warm_start`` seeds each weighted solve with the previous
    shares; it saves time but on nearly flat faces the solve can then stop
    short of the optimum, which spoils the master rule's certificate.
    """
    sc = validate(scenario)
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")
    opts = replace(options or SolveOptions(), mode="orthogonal")
    m = sc.n_receivers
    w = np.ones(m) if initial_weights is None else np.array(initial_weights, dtype=float)
    if w.shape != (m,) or np.any(~(w > 0)):
        raise ValueError("initial weights need one positive entry per receiver")
    if rule == "master":
        return _master(sc, w, 1e-6 if tol is None else tol, max_iters, opts, warm_start)
    tol = 1e-4 if tol is None else tol

    alloc, rates = _solve_rates(sc, w, opts, None)
    if not np.any(rates > 0):
        raise ScenarioError(["zero-rate"], ["zero-rate: no receiver can be served"])
    w = w / np.mean(w * rates)
    aux = w.copy()
    delta0 = None
    state = PfState(w, aux, rates)
    report = PfReport(_utility(rates), False, np.inf, 0)
    for i in range(1, max_iters + 1):
        state.iter = i
        # in alternating mode the rates belong to the auxiliary weights
        state.theta_residual = float(np.sum(np.abs(rates - 1.0 / w)))
        report.residuals.append(state.theta_residual)
        report.utilities.append(_utility(rates))
        if state.theta_residual <= tol:
            report.converged = True
            break
        if i == max_iters:
            break
        if delta0 is None:
            delta0 = default_delta0(w, rates)
        step = schedule(i) if schedule is not None else delta0 / i
        state.step = step
        g_aux, _ = subgradients(state)
        if rule == "simultaneous":
            new = w - step * g_aux
            w_next = aux_next = _floor(new, i, report)
        else:
            aux_next = np.maximum(w, _floor(aux - step * g_aux, i, report))
            w_next = np.minimum(aux_next, _floor(w - step * (rates - 1.0 / w), i, report))
        w, aux = w_next, aux_next
        state.weights, state.aux_weights = w, aux
        warm = alloc.bandwidth if warm_start else None
        alloc, rates = _solve_rates(sc, aux, opts, warm)
        state.rates = rates
    report.iterations = state.iter
    report.residual = state.theta_residual
    report.pf_utility = _utility(rates)
    if not report.converged:
        log.info("PF iteration stopped after %d iterations, residual %.3g", state.iter, state.theta_residual)
    return alloc, report, state


def mix_rates(rate_pool, start=None) -> np.ndarray:
    """Mixture weights ``lam`` on the simplex maximising ``sum log(A @ lam)``.

    ``rate_pool`` is ``(M, T)``: one column of receiver rates per solution.
    Each row is scaled by its largest entry first (this only shifts the
    objective) and the search runs from ``start`` and from the uniform mixture.
    """
    a = np.asarray(rate_pool, dtype=float)
    t = a.shape[1]
    if t == 1:
        return np.ones(1)
    top = a.max(axis=1, keepdims=True)
    a = a / np.where(top > 0, top, 1.0)

    def f(lam):
        r = np.maximum(a @ lam, 1e-300)
        return -np.sum(np.log(r)), -(a.T @ (1.0 / r))

    starts = [np.full(t, 1.0 / t)]
    if start is not None:
        starts.append(np.asarray(start, dtype=float))
    best, best_val = None, np.inf
    for lam0 in starts:
        res = minimize(f, lam0, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * t,
                       constraints=[{"type": "eq", "fun": lambda lam: lam.sum() - 1.0, "jac": lambda lam: np.ones(t)}],
                       options={"ftol": 1e-15, "maxiter": 500})
        # SLSQP can stop early; never keep anything worse than its start
        for cand in (res.x, lam0):
            lam = np.maximum(cand, 0.0)
            lam = lam / lam.sum()
            val = f(lam)[0]
            if val < best_val:
                best, best_val = lam, val
    return best


def _upper_bound(w, rates) -> float:
    """Bound ``U* <= -M log(M / (w @ R)) - sum log w`` from one weighted solve.

    For any feasible rates ``r``, ``sum log r <= sum (c w_m r_m - 1 - log(c w_m))``
    for every ``c > 0``; the weighted optimum caps ``w @ r`` and ``c`` is
    chosen to make the bound tightest.
    """
    m = w.size
    h = float(w @ rates)
    if h <= 0:
        return np.inf
    return float(-m * np.log(m / h) - np.sum(np.log(w)))


def _master(sc: Scenario, w, tol, max_iters, opts, warm_start, smoothing=STABILIZE):
    m = sc.n_receivers
    alloc, rates = _solve_rates(sc, w, opts, None)
    if not np.any(rates > 0):
        raise ScenarioError(["zero-rate"], ["zero-rate: no receiver can be served"])
    pool, cols = [alloc], [rates]
    lam = np.ones(1)
    mixed = rates
    # the center is the query with the smallest upper bound, scaled so that w @ R = M
    center, best_ub = w * m / float(w @ rates), _upper_bound(w, rates)
    state = PfState(w, center, rates)
    report = PfReport(_utility(mixed), False, np.inf, 0)
    beta = smoothing
    for i in range(1, max_iters + 1):
        state.iter = i
        lower = _utility(mixed)
        state.theta_residual = best_ub - lower
        report.residuals.append(state.theta_residual)
        report.utilities.append(lower)
        if np.all(mixed > 0) and state.theta_residual <= tol:
            report.converged = True
            break
        if i == max_iters:
            break
        out = 1.0 / np.maximum(mixed, RATE_FLOOR * mixed.max())
        w = beta * center + (1.0 - beta) * out if np.all(mixed > 0) else out
        warm = pool[-1].bandwidth if warm_start else None
        alloc, rates = _solve_rates(sc, w, opts, warm)
        ub = _upper_bound(w, rates)
        if ub < best_ub and np.isfinite(ub):
            center, best_ub = w * m / float(w @ rates), ub
        elif beta > 0 and float(w @ rates) - float(w @ mixed) <= tol:
            # the smoothed query found nothing new: fall back to the plain master step
            beta = 0.0
            continue
        state.weights, state.aux_weights = w, center
        pool.append(alloc)
        cols.append(rates)
        lam = mix_rates(np.array(cols).T, np.append(lam, 0.0))
        mixed = np.array(cols).T @ lam
    keep = lam > 0
    energy = sum(l * a.energy for l, a, k in zip(lam, pool, keep) if k)
    bandwidth = sum(l * a.bandwidth for l, a, k in zip(lam, pool, keep) if k)
    final = Allocation("orthogonal", energy, bandwidth=bandwidth)
    state.weights = 1.0 / mixed
    state.rates = evaluate(sc, final).per_receiver
    report.iterations = state.iter
    report.residual = state.theta_residual
    report.pf_utility = _utility(state.rates)
    if not report.converged:
        log.info("PF master iteration stopped after %d solves, gap %.3g", state.iter, state.theta_residual)
    return final, report, state


def _utility(rates) -> float:
    # early iterates may leave receivers unserved; their utility is -inf
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(rates)))


def _floor(w, i, report: PfReport):
    low = w < WEIGHT_FLOOR
    for m in np.flatnonzero(low):
        report.floored.append((i, int(m)))
    return np.where(low, WEIGHT_FLOOR, w)


def approx_pf_weights(sampler: Callable[[np.random.Generator], Scenario], samples: int = 50, seed: int = 0,
                      proxy_iters: int = 5, options: SolveOptions | None = None) -> np.ndarray:
    """Initial PF weights: ``1/W_m`` is the sample mean of a PF proxy's rates.

    ``sampler(rng)`` draws one scenario realization. The proxy runs
    ``proxy_iters`` master-rule PF steps from equal weights on each draw.
    """
    rng = np.random.default_rng(seed)
    total = None
    for _ in range(samples):
        sc = sampler(rng)
        _, report, state = pf_iterate(sc, max_iters=proxy_iters, tol=1e-3, options=options)
        total = state.rates.copy() if total is None else total + state.rates
    mean_rate = total / samples
    return 1.0 / mean_rate
