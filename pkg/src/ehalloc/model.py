"""Scenario and allocation types, validation, effective energy and rate evaluation.

Receivers and transmitters are indexed from 0. Arrays are laid out as
``(entity, slot)``: ``harvest`` is ``(N, K)``, ``gains`` is ``(M, K)`` and so on.
Rates are in nats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = [
    "ScenarioError",
    "Scenario",
    "Allocation",
    "RateReport",
    "validate",
    "check_scenario",
    "effective_energy",
    "rate_orthogonal",
    "rate_nonorthogonal",
    "evaluate",
    "battery_trajectory",
    "check_feasible",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
]


class ScenarioError(ValueError):
    """Raised when a scenario or allocation breaks a model invariant.

    ``codes`` lists every violated invariant (e.g. ``"infeasible-epsilon"``).
    """

    def __init__(self, codes: Sequence[str], messages: Sequence[str] = ()):
        self.codes = list(codes)
        self.messages = list(messages) or list(codes)
        super().__init__("; ".join(self.messages))


@dataclass(frozen=True, eq=False)
class Scenario:
    receiver_sets: tuple[tuple[int, ...], ...]
    harvest: np.ndarray
    gains: np.ndarray
    battery_cap: np.ndarray
    max_power: np.ndarray
    weights: np.ndarray
    epsilon: float = 0.0
    metadata: dict = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        receiver_sets,
        harvest,
        gains,
        battery_cap,
        max_power=None,
        weights=None,
        epsilon: float = 0.0,
        metadata: dict | None = None,
    ) -> "Scenario":
        """Build a scenario from plain sequences, broadcasting scalars.

        ``max_power=None`` (or ``inf`` entries) means unbounded per-slot energy.
        Missing weights default to 1 for every receiver.
        """
        sets = tuple(tuple(int(m) for m in s) for s in receiver_sets)
        harvest = np.atleast_2d(np.asarray(harvest, dtype=float))
        gains = np.atleast_2d(np.asarray(gains, dtype=float))
        n = len(sets)
        m = sum(len(s) for s in sets)
        battery_cap = np.broadcast_to(np.asarray(battery_cap, dtype=float), (n,)).copy()
        if max_power is None:
            max_power = np.full(n, np.inf)
        else:
            max_power = np.array(
                [np.inf if v is None else float(v) for v in np.broadcast_to(np.asarray(max_power, dtype=object), (n,))]
            )
        if weights is None:
            weights = np.ones(m)
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (m,)).copy()
        return cls(sets, harvest, gains, battery_cap, max_power, weights, float(epsilon), dict(metadata or {}))

    @property
    def n_transmitters(self) -> int:
        return len(self.receiver_sets)

    @property
    def n_receivers(self) -> int:
        return self.gains.shape[0]

    @property
    def horizon(self) -> int:
        return self.gains.shape[1]

    @property
    def owner(self) -> np.ndarray:
        """Transmitter index serving each receiver."""
        owner = np.empty(self.n_receivers, dtype=int)
        for n, s in enumerate(self.receiver_sets):
            owner[list(s)] = n
        return owner

    def with_weights(self, weights) -> "Scenario":
        return replace(self, weights=np.asarray(weights, dtype=float).copy())

    def with_epsilon(self, epsilon: float) -> "Scenario":
        return replace(self, epsilon=float(epsilon))


@dataclass(eq=False)
class Allocation:
    """Energy/bandwidth allocation.

    ``energy`` is always the per-receiver energy ``(M, K)``. In orthogonal mode
    ``bandwidth`` holds the per-receiver shares ``(M, K)``; in non-orthogonal
    mode ``tx_bandwidth`` holds the per-transmitter shares ``(N, K)`` and
    ``bandwidth`` is ``None``.
    """

    mode: str
    energy: np.ndarray
    bandwidth: np.ndarray | None = None
    tx_bandwidth: np.ndarray | None = None

    def total_energy(self, scenario: Scenario) -> np.ndarray:
        """Per-transmitter energy spent in each slot, shape ``(N, K)``."""
        return np.stack([self.energy[list(s)].sum(axis=0) for s in scenario.receiver_sets])


@dataclass
class RateReport:
    per_receiver: np.ndarray
    weighted_total: float
    pf_utility: float


# ---------------------------------------------------------------- validation


def validate(scenario: Scenario) -> Scenario:
    """Return ``scenario`` unchanged if every invariant holds.

    Raises ScenarioError listing all violations otherwise.
    """
    codes, msgs = [], []

    def bad(code, msg):
        codes.append(code)
        msgs.append(f"{code}: {msg}")

    sets = scenario.receiver_sets
    n, m = len(sets), scenario.gains.shape[0]
    k = scenario.gains.shape[1] if scenario.gains.ndim == 2 else 0
    flat = [r for s in sets for r in s]
    if n == 0 or any(len(s) == 0 for s in sets):
        bad("bad-partition", "every transmitter needs at least one receiver")
    if sorted(flat) != list(range(m)):
        bad("bad-partition", f"receiver sets {sets} do not partition 0..{m - 1}")
    if scenario.gains.ndim != 2 or scenario.harvest.shape != (n, k):
        bad("bad-shape", f"harvest shape {scenario.harvest.shape}, expected {(n, k)}")
    if k < 1:
        bad("bad-shape", "horizon must be at least one slot")
    if scenario.battery_cap.shape != (n,) or scenario.max_power.shape != (n,):
        bad("bad-shape", "battery_cap and max_power need one entry per transmitter")
    if scenario.weights.shape != (m,):
        bad("bad-shape", f"weights shape {scenario.weights.shape}, expected {(m,)}")
    if codes:
        raise ScenarioError(codes, msgs)

    if not np.all(np.isfinite(scenario.gains)) or np.any(scenario.gains <= 0):
        bad("nonpositive-gain", "all channel gains must be finite and > 0")
    if not np.all(np.isfinite(scenario.harvest)) or np.any(scenario.harvest < 0):
        bad("negative-harvest", "harvested energy must be finite and >= 0")
    if not np.all(np.isfinite(scenario.battery_cap)) or np.any(scenario.battery_cap <= 0):
        bad("nonpositive-battery", "battery capacity must be finite and > 0")
    if np.any(np.isnan(scenario.max_power)) or np.any(scenario.max_power <= 0):
        bad("nonpositive-power", "max power must be > 0 (inf for unbounded)")
    if not np.all(np.isfinite(scenario.weights)) or np.any(scenario.weights < 0):
        bad("negative-weight", "weights must be finite and >= 0")
    eps = scenario.epsilon
    if not np.isfinite(eps) or eps < 0:
        bad("negative-epsilon", "epsilon must be >= 0")
    elif m * eps > 1 + 1e-12:
        bad("infeasible-epsilon", f"M*epsilon = {m * eps:g} > 1")
    for s in sets:
        if len(s) > 1:
            g = np.sort(scenario.gains[list(s)], axis=0)
            if np.any(np.diff(g, axis=0) == 0):
                bad("duplicate-gain", f"equal gains within receiver set {s}")
                break
    if codes:
        raise ScenarioError(codes, msgs)
    return scenario


def check_scenario(scenario) -> Scenario:
    """Coerce a Scenario, mapping or JSON path into a validated Scenario."""
    if isinstance(scenario, Scenario):
        return validate(scenario)
    if isinstance(scenario, (str, Path)):
        return load_scenario(scenario)
    if isinstance(scenario, dict):
        return validate(scenario_from_dict(scenario))
    raise TypeError(f"cannot interpret {type(scenario).__name__} as a Scenario")


# ---------------------------------------------------------- effective energy


def effective_energy(scenario: Scenario) -> np.ndarray:
    """Cumulative effective harvest ``(N, K)``.

    Follows the maximal-discharge battery: each slot spends
    ``min(P, battery + harvest)`` and discards whatever exceeds the capacity.
    The result is the cumulative spend plus the stored level, i.e. the
    cumulative harvest minus the energy that no schedule could ever use.
    With unbounded power this is the plain cumulative harvest.
    """
    n, k = scenario.harvest.shape
    out = np.zeros((n, k))
    for i in range(n):
        cap, pmax = scenario.battery_cap[i], scenario.max_power[i]
        spent = level = 0.0
        for j in range(k):
            avail = level + scenario.harvest[i, j]
            use = min(pmax, avail)
            level = min(cap, avail - use)
            spent += use
            out[i, j] = spent + level
    return out


def battery_trajectory(scenario: Scenario, allocation: Allocation, eff=None) -> np.ndarray:
    """Battery level after each slot, ``Ẽ^k - cumulative spend``, shape ``(N, K)``."""
    eff = effective_energy(scenario) if eff is None else eff
    return eff - np.cumsum(allocation.total_energy(scenario), axis=1)


def check_feasible(scenario: Scenario, allocation: Allocation, tol: float = 1e-7) -> list[str]:
    """List the constraint families violated by ``allocation`` (empty if feasible)."""
    problems = []
    scale = max(1.0, float(np.max(effective_energy(scenario), initial=0.0)))
    if np.any(allocation.energy < -tol * scale):
        problems.append("negative-energy")
    batt = battery_trajectory(scenario, allocation)
    if np.any(batt < -tol * scale):
        problems.append("causality")
    if np.any(batt > scenario.battery_cap[:, None] + tol * scale):
        problems.append("battery-overflow")
    tot = allocation.total_energy(scenario)
    if np.any(tot > scenario.max_power[:, None] + tol * scale):
        problems.append("max-power")
    share = allocation.bandwidth if allocation.mode == "orthogonal" else allocation.tx_bandwidth
    if share is None:
        problems.append("missing-bandwidth")
    else:
        if np.any(np.abs(share.sum(axis=0) - 1) > tol):
            problems.append("bandwidth-sum")
        if np.any(share < scenario.epsilon - tol):
            problems.append("min-bandwidth")
    return problems


# ------------------------------------------------------------------- rates


def _perspective_log(a, snr_num):
    """``a * log(1 + snr_num / a)`` with the 0 * log(1 + 0/0) = 0 extension."""
    a = np.asarray(a, dtype=float)
    snr_num = np.asarray(snr_num, dtype=float)
    if np.any((a <= 0) & (snr_num > 0)):
        raise ScenarioError(["degenerate-allocation"], ["degenerate-allocation: positive energy on zero bandwidth"])
    safe = np.where(a > 0, a, 1.0)
    with np.errstate(over="ignore", divide="ignore"):
        ratio = snr_num / safe
        # a share so small that snr/a overflows: log1p(snr/a) = log(snr) - log(a) to double precision
        val = np.where(np.isfinite(ratio), safe * np.log1p(ratio), safe * (np.log(snr_num) - np.log(safe)))
    return np.where(a > 0, val, 0.0)


def _report(scenario: Scenario, per_receiver: np.ndarray) -> RateReport:
    with np.errstate(divide="ignore"):
        utility = float(np.sum(np.log(per_receiver)))
    return RateReport(per_receiver, float(scenario.weights @ per_receiver), utility)


def rate_orthogonal(scenario: Scenario, allocation: Allocation) -> RateReport:
    """Per-receiver sums of ``a log(1 + pH/a)`` over the horizon."""
    terms = _perspective_log(allocation.bandwidth, allocation.energy * scenario.gains)
    return _report(scenario, terms.sum(axis=1))


def rate_nonorthogonal(scenario: Scenario, allocation: Allocation) -> RateReport:
    """Superposition rates: weaker receivers see the stronger receivers' energy as noise."""
    p, h = allocation.energy, scenario.gains
    out = np.zeros(scenario.n_receivers)
    for n, s in enumerate(scenario.receiver_sets):
        s = list(s)
        ps, hs = p[s], h[s]
        # interference on receiver i: energy of receivers with a strictly larger gain
        stronger = hs[None, :, :] > hs[:, None, :]
        interf = np.einsum("ijk,jk->ik", stronger, ps)
        a = np.broadcast_to(allocation.tx_bandwidth[n], ps.shape)
        out[s] = _perspective_log(a, ps * hs / (1 + interf * hs / np.where(a > 0, a, 1.0))).sum(axis=1)
    return _report(scenario, out)


def evaluate(scenario: Scenario, allocation: Allocation) -> RateReport:
    if allocation.mode == "orthogonal":
        return rate_orthogonal(scenario, allocation)
    return rate_nonorthogonal(scenario, allocation)


# --------------------------------------------------------------- serialization


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "n_transmitters": scenario.n_transmitters,
        "n_receivers": scenario.n_receivers,
        "horizon": scenario.horizon,
        "receiver_sets": [list(s) for s in scenario.receiver_sets],
        "harvest": scenario.harvest.tolist(),
        "gains": scenario.gains.tolist(),
        "battery_cap": scenario.battery_cap.tolist(),
        "weights": scenario.weights.tolist(),
        "epsilon": scenario.epsilon,
    }
    if np.any(np.isfinite(scenario.max_power)):
        doc["max_power"] = [float(v) if np.isfinite(v) else None for v in scenario.max_power]
    if scenario.metadata:
        doc["metadata"] = scenario.metadata
    return doc


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    try:
        sc = Scenario.create(
            doc["receiver_sets"],
            doc["harvest"],
            doc["gains"],
            doc["battery_cap"],
            max_power=doc.get("max_power"),
            weights=doc.get("weights"),
            epsilon=doc.get("epsilon", 0.0),
            metadata=doc.get("metadata"),
        )
    except KeyError as exc:
        raise ScenarioError(["missing-field"], [f"missing-field: {exc.args[0]}"]) from None
    for key, actual in (("n_transmitters", sc.n_transmitters), ("n_receivers", sc.n_receivers), ("horizon", sc.horizon)):
        if key in doc and int(doc[key]) != actual:
            raise ScenarioError(["bad-shape"], [f"bad-shape: {key}={doc[key]} but arrays imply {actual}"])
    return sc


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n")


def load_scenario(path) -> Scenario:
    return validate(scenario_from_dict(json.loads(Path(path).read_text())))
