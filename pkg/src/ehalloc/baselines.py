"""Heuristic comparison policies.

Every policy returns an :class:`Allocation` that passes ``check_feasible`` on
the scenario it was given; :func:`run_policy` asserts this.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import Allocation, Scenario, ScenarioError, check_feasible, validate
from .solver import SolveOptions, solve

__all__ = [
    "POLICIES",
    "PolicyKind",
    "greedy_budget",
    "run_greedy_energy",
    "run_equal_bandwidth",
    "run_greedy",
    "run_traditional_pf",
    "run_policy",
]

POLICIES = ("greedy-energy", "equal-bandwidth", "greedy", "traditional-pf")
# bandwidth given to a transmitter that must spend energy but was not scheduled
DUMP_SHARE = 1e-9
A_FLOOR = 1e-6


@dataclass(frozen=True)
class PolicyKind:
    name: str
    alpha_avg: float = 0.1

    def __post_init__(self):
        if self.name not in POLICIES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {POLICIES}")
        if not 0 < self.alpha_avg < 1:
            raise ValueError("alpha_avg must lie in (0, 1)")


def greedy_budget(sc: Scenario) -> np.ndarray:
    """Energy each transmitter spends per slot when it always spends ``min(battery, P)``."""
    n, k = sc.harvest.shape
    out = np.zeros((n, k))
    for i in range(n):
        level = 0.0
        for j in range(k):
            avail = level + sc.harvest[i, j]
            out[i, j] = min(sc.max_power[i], avail)
            level = min(sc.battery_cap[i], avail - out[i, j])
    return out


def _slot(sc: Scenario, k: int, harvest, cap) -> Scenario:
    return Scenario(sc.receiver_sets, harvest, sc.gains[:, k:k + 1].copy(), cap, sc.max_power.copy(),
                    sc.weights.copy(), sc.epsilon)


def run_greedy_energy(scenario: Scenario, mode: str = "orthogonal", options: SolveOptions | None = None) -> Allocation:
    """Spend the greedy budget every slot and split it optimally within the slot."""
    sc = validate(scenario)
    opts = replace(options or SolveOptions(), mode=mode)
    budget = greedy_budget(sc)
    energy = np.zeros((sc.n_receivers, sc.horizon))
    rows = sc.n_receivers if mode == "orthogonal" else sc.n_transmitters
    share = np.zeros((rows, sc.horizon))
    for k in range(sc.horizon):
        # a near-empty battery makes the single-slot problem spend its whole budget
        cap = np.maximum(1e-12 * np.maximum(budget[:, k], 1.0), 1e-300)
        alloc, _, _ = solve(_slot(sc, k, budget[:, k:k + 1].copy(), cap), opts)
        energy[:, k] = alloc.energy[:, 0]
        share[:, k] = (alloc.bandwidth if mode == "orthogonal" else alloc.tx_bandwidth)[:, 0]
    if mode == "orthogonal":
        return Allocation(mode, energy, bandwidth=share)
    return Allocation(mode, energy, tx_bandwidth=share)


def run_equal_bandwidth(scenario: Scenario, mode: str = "orthogonal", options: SolveOptions | None = None) -> Allocation:
    """Give every transmitter ``1/N`` of the band and optimise each one alone.

    Inside a ``1/N`` share the rate of energy ``p`` on a fraction ``a`` of
    that share equals ``1/N`` times the full-band rate with gain ``N H``, so
    each transmitter is solved as a one-transmitter scenario with scaled gains.
    """
    sc = validate(scenario)
    opts = replace(options or SolveOptions(), mode=mode)
    n = sc.n_transmitters
    energy = np.zeros((sc.n_receivers, sc.horizon))
    bandwidth = np.zeros((sc.n_receivers, sc.horizon))
    for i, s in enumerate(sc.receiver_sets):
        s = list(s)
        eps = n * sc.epsilon
        if len(s) * eps > 1 + 1e-12:
            raise ScenarioError(["infeasible-epsilon"],
                                [f"infeasible-epsilon: {len(s)} receivers cannot each get {sc.epsilon} of a 1/{n} share"])
        sub = Scenario(((tuple(range(len(s)))),), sc.harvest[i:i + 1].copy(), n * sc.gains[s],
                       sc.battery_cap[i:i + 1].copy(), sc.max_power[i:i + 1].copy(), sc.weights[s].copy(),
                       min(eps, 1.0 / len(s)))
        alloc, _, _ = solve(sub, opts)
        energy[s] = alloc.energy
        if mode == "orthogonal":
            bandwidth[s] = alloc.bandwidth / n
    if mode == "orthogonal":
        return Allocation(mode, energy, bandwidth=bandwidth)
    return Allocation(mode, energy, tx_bandwidth=np.full((n, sc.horizon), 1.0 / n))


def run_greedy(scenario: Scenario) -> Allocation:
    """Split the greedy budget evenly over each transmitter's receivers; equal bandwidth."""
    sc = validate(scenario)
    budget = greedy_budget(sc)
    energy = np.zeros((sc.n_receivers, sc.horizon))
    for i, s in enumerate(sc.receiver_sets):
        energy[list(s)] = budget[i] / len(s)
    return Allocation("orthogonal", energy, bandwidth=np.full_like(energy, 1.0 / sc.n_receivers))


def run_traditional_pf(scenario: Scenario, alpha_avg: float = 0.1) -> Allocation:
    """Classic single-link PF scheduling with moving-average rates.

    In each slot the link maximising ``log(1 + p H) / A`` takes the band,
    where ``p`` is everything its transmitter can spend and ``A`` is the
    link's moving-average rate (floored at ``1e-6``, ties to the lowest
    index). The scheduled transmitter spends ``min(battery, P)`` on that link.
    The others keep their energy and spend only what their battery could not
    hold, over a sliver of bandwidth on their strongest receiver.
    """
    PolicyKind("traditional-pf", alpha_avg)
    sc = validate(scenario)
    m, k = sc.n_receivers, sc.horizon
    owner = sc.owner
    energy = np.zeros((m, k))
    bandwidth = np.zeros((m, k))
    avg = np.full(m, A_FLOOR)
    level = np.zeros(sc.n_transmitters)
    for j in range(k):
        avail = level + sc.harvest[:, j]
        offer = np.minimum(sc.max_power, avail)
        metric = np.log1p(offer[owner] * sc.gains[:, j]) / avg
        pick = int(np.argmax(metric))
        spend = np.minimum(sc.max_power, np.maximum(avail - sc.battery_cap, 0.0))
        spend[owner[pick]] = offer[owner[pick]]
        share = np.full(m, sc.epsilon)
        for i, s in enumerate(sc.receiver_sets):
            if i == owner[pick] or spend[i] <= 0:
                continue
            best = max(s, key=lambda r: sc.gains[r, j])
            energy[best, j] = spend[i]
            share[best] = max(share[best], DUMP_SHARE)
        energy[pick, j] = spend[owner[pick]]
        share[pick] += 1.0 - share.sum()
        bandwidth[:, j] = share
        level = np.minimum(sc.battery_cap, avail - spend)
        rate = share[pick] * np.log1p(energy[pick, j] * sc.gains[pick, j] / share[pick])
        avg *= 1.0 - alpha_avg
        avg[pick] += alpha_avg * rate
        avg = np.maximum(avg, A_FLOOR)
    return Allocation("orthogonal", energy, bandwidth=bandwidth)


def run_policy(scenario: Scenario, policy: str, mode: str = "orthogonal", alpha_avg: float = 0.1,
               options: SolveOptions | None = None) -> Allocation:
    """Dispatch by name and check the result against every constraint."""
    PolicyKind(policy, alpha_avg)
    if policy in ("greedy", "traditional-pf") and mode != "orthogonal":
        raise ValueError(f"policy {policy!r} is defined for orthogonal broadcast only")
    if policy == "greedy-energy":
        alloc = run_greedy_energy(scenario, mode, options)
    elif policy == "equal-bandwidth":
        alloc = run_equal_bandwidth(scenario, mode, options)
    elif policy == "greedy":
        alloc = run_greedy(scenario)
    else:
        alloc = run_traditional_pf(scenario, alpha_avg)
    problems = check_feasible(scenario, alloc)
    if problems:
        raise ScenarioError(problems, [f"{policy} produced an infeasible allocation: {', '.join(problems)}"])
    return alloc
