"""Seeded random scenarios in the style of the reference simulation setup."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .model import Scenario, validate

__all__ = ["GeneratorSpec", "GAIN_CONVENTION", "truncated_normal", "sample_scenario", "gen_scenario"]

GAIN_CONVENTION = "H = A**2 with amplitude A ~ Rayleigh(sigma)"


@dataclass
class GeneratorSpec:
    """Distribution of a scenario.

    Harvests are normal with mean ``harvest_mean`` (one value or one per
    transmitter) and variance ``harvest_var``, truncated below at 0. Gains are
    squared Rayleigh amplitudes with scale ``rayleigh_sigma`` (one value or one
    per receiver). ``receiver_sets=None`` gives each of the ``n_transmitters``
    transmitters ``receivers_per_tx`` consecutive receivers.
    """

    seed: int = 0
    n_transmitters: int = 3
    receivers_per_tx: int = 2
    receiver_sets: tuple | None = None
    horizon: int = 20
    harvest_mean: float | tuple = 10.0
    harvest_var: float = 2.0
    rayleigh_sigma: float | tuple = 2.0
    battery_cap: float = 20.0
    max_power: float | None = None
    weights: tuple | None = None
    epsilon: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1 or self.n_transmitters < 1 or self.receivers_per_tx < 1:
            raise ValueError("horizon and receiver counts must be positive")
        if self.harvest_var < 0:
            raise ValueError("harvest variance must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def sets(self) -> tuple[tuple[int, ...], ...]:
        if self.receiver_sets is not None:
            return tuple(tuple(int(m) for m in s) for s in self.receiver_sets)
        r = self.receivers_per_tx
        return tuple(tuple(range(n * r, (n + 1) * r)) for n in range(self.n_transmitters))


def truncated_normal(rng: np.random.Generator, mean, std: float, shape) -> np.ndarray:
    """Normal draws conditioned on being ``>= 0``, by redrawing the negatives."""
    mean = np.broadcast_to(np.asarray(mean, dtype=float), shape)
    if np.any(mean <= -5 * max(std, 1e-300)):
        raise ValueError("truncation at 0 would reject almost every draw")
    out = rng.normal(mean, std)
    bad = out < 0
    while np.any(bad):
        out[bad] = rng.normal(mean[bad], std)
        bad = out < 0
    return out


def sample_scenario(spec: GeneratorSpec, rng: np.random.Generator) -> Scenario:
    """Draw one realization from ``rng`` (the spec's seed is ignored)."""
    sets = spec.sets()
    n, k = len(sets), spec.horizon
    m = sum(len(s) for s in sets)
    mean = np.asarray(spec.harvest_mean, dtype=float)
    mean = mean[:, None] if mean.ndim == 1 else mean
    harvest = truncated_normal(rng, mean, float(np.sqrt(spec.harvest_var)), (n, k))
    sigma = np.asarray(spec.rayleigh_sigma, dtype=float)
    sigma = sigma[:, None] if sigma.ndim == 1 else sigma
    gains = rng.rayleigh(np.broadcast_to(sigma, (m, k))) ** 2
    meta = {"generator": _spec_record(spec), "gain_convention": GAIN_CONVENTION}
    return Scenario.create(sets, harvest, gains, spec.battery_cap, spec.max_power, spec.weights,
                           spec.epsilon, meta)


def gen_scenario(spec: GeneratorSpec) -> Scenario:
    """The spec's scenario: the same spec always gives the same scenario."""
    return validate(sample_scenario(spec, np.random.default_rng(spec.seed)))


def _spec_record(spec: GeneratorSpec) -> dict:
    rec = asdict(spec)
    for key, val in rec.items():
        if isinstance(val, tuple):
            rec[key] = [list(v) if isinstance(v, tuple) else v for v in val]
    return rec
