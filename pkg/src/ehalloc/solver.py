"""Block coordinate ascent over energy and bandwidth, and the equal-weights reduction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .model import Allocation, RateReport, Scenario, ScenarioError, _perspective_log, effective_energy, evaluate, validate
from .nonortho import EnvelopeBank, receiver_energy, solve_bp_nonortho, solve_ep_nonortho
from .ortho_bw import solve_bp_slots
from .ortho_energy import SegmentInfeasible, WaterLevelProfile, dynamic_wf

__all__ = ["SolveOptions", "SolveTrace", "solve", "project_shares", "reduce_equal_weights", "expand_reduced", "default_schedule"]

log = logging.getLogger(__name__)

MODES = ("orthogonal", "nonorthogonal")
WARMUP_TOL = 1e-5
REVIVE_FLOOR = 1e-3
REVIVE_ROUNDS = 8
FLOOR_ROUNDS = 3
DUMP_SHARES = (1e-6, 1e-4, 1e-2)
PRICE_TOL = 1e-9


@dataclass
class SolveOptions:
    mode: str = "orthogonal"
    epsilon_schedule: tuple[float, ...] | None = None
    max_outer_iters: int = 200
    objective_tol: float = 1e-8
    extrapolate: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_outer_iters < 1 or self.objective_tol <= 0:
            raise ValueError("max_outer_iters must be >= 1 and objective_tol > 0")
        if self.epsilon_schedule is not None:
            sched = tuple(float(e) for e in self.epsilon_schedule)
            if not sched or any(e < 0 for e in sched) or any(e <= 0 for e in sched[:-1]):
                raise ValueError("epsilon schedule must be positive except possibly its last entry")
            self.epsilon_schedule = sched


@dataclass
class SolveTrace:
    objectives: list[float] = field(default_factory=list)
    stages: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stalled: bool = False
    profiles: list[WaterLevelProfile] = field(default_factory=list)
    dual_prices: np.ndarray | None = None

    @property
    def boundaries(self) -> list[list[tuple[int, str]]]:
        return [p.boundaries for p in self.profiles]


def default_schedule(scenario: Scenario) -> tuple[float, ...]:
    """``(eps,)`` for ``eps > 0``; a warm-up at ``1/(2M)`` followed by 0 otherwise."""
    if scenario.epsilon > 0:
        return (scenario.epsilon,)
    return (0.5 / scenario.n_receivers, 0.0)


class _Problem:
    """Mode-specific energy and bandwidth steps on a fixed scenario."""

    def __init__(self, sc: Scenario, mode: str):
        self.sc = sc
        self.mode = mode
        self.eff = effective_energy(sc)
        self.sets = [list(s) for s in sc.receiver_sets]
        self.bank = EnvelopeBank.from_scenario(sc) if mode == "nonorthogonal" else None

    def initial_bandwidth(self):
        if self.mode == "orthogonal":
            return np.full((self.sc.n_receivers, self.sc.horizon), 1.0 / self.sc.n_receivers)
        return np.full((self.sc.n_transmitters, self.sc.horizon), 1.0 / self.sc.n_transmitters)

    def energy_step(self, bw):
        sc = self.sc
        profiles = []
        if self.mode == "orthogonal":
            p = np.zeros((sc.n_receivers, sc.horizon))
            for n, s in enumerate(self.sets):
                p[s], prof = dynamic_wf(bw[s], sc.weights[s], sc.gains[s], self.eff[n],
                                        sc.battery_cap[n], sc.max_power[n])
                profiles.append(prof)
            return p, profiles
        p = np.zeros((sc.n_transmitters, sc.horizon))
        for n, s in enumerate(self.sets):
            p[n], prof = solve_ep_nonortho(bw[n], sc.weights[s], sc.gains[s], self.eff[n],
                                           sc.battery_cap[n], sc.max_power[n])
            profiles.append(prof)
        return p, profiles

    def paired_energy(self, bw):
        """Energy step that may hand empty transmitters a sliver of bandwidth.

        With ``eps = 0`` a transmitter can end up with no bandwidth in a slot
        that its battery forces it to spend in, or with a share so small that
        the water level needed to spend there loses all precision. Raising
        such columns to a small floor (the first of ``DUMP_SHARES`` that
        works) lets the slot absorb that energy at almost no value. Returns
        ``(bw, p, profiles)`` with the shares actually used.
        """
        try:
            p, profiles = self.energy_step(bw)
            return bw, p, profiles
        except SegmentInfeasible:
            if not np.all(np.isfinite(bw)):
                raise
        rows = self.sets if self.mode == "orthogonal" else [[n] for n in range(self.sc.n_transmitters)]
        for floor in DUMP_SHARES:
            fixed = np.array(bw, dtype=float)
            for r in rows:
                low = np.flatnonzero(fixed[r].sum(axis=0) < floor)
                fixed[np.ix_(r, low)] += floor / len(r)
            fixed /= fixed.sum(axis=0, keepdims=True)
            try:
                p, profiles = self.energy_step(fixed)
                return fixed, p, profiles
            except SegmentInfeasible:
                continue
        raise SegmentInfeasible("no bandwidth floor lets every transmitter spend its forced energy")

    def bandwidth_step(self, p, eps):
        if self.mode == "orthogonal":
            return solve_bp_slots(p, self.sc.gains, self.sc.weights, eps)
        return solve_bp_nonortho(p, self.bank, eps)

    def allocation(self, p, bw) -> Allocation:
        if self.mode == "orthogonal":
            return Allocation("orthogonal", p.copy(), bandwidth=bw.copy())
        energy = receiver_energy(p, bw, self.bank, self.sc.receiver_sets, self.sc.n_receivers)
        return Allocation("nonorthogonal", energy, tx_bandwidth=bw.copy())

    def opening_value(self, p, profiles) -> np.ndarray:
        """``max_x [F(x) - mu x]`` per row and slot, ``mu`` being the energy price."""
        sc = self.sc
        out = np.zeros_like(p)
        for n, s in enumerate(self.sets):
            with np.errstate(divide="ignore"):
                mu = 1.0 / profiles[n].effective_levels
            # a slot without bandwidth leaves its level undetermined; price it
            # at the cheapest level the transmitter uses elsewhere
            known = mu[np.isfinite(mu) & (mu > 0)]
            mu = np.where(np.isfinite(mu) & (mu > 0), mu, known.min() if known.size else np.inf)
            w = sc.weights[s][:, None]
            h = sc.gains[s]
            x = np.maximum(w / mu - 1.0 / h, 0.0)
            fin = np.isfinite(mu)
            x = np.where(fin, x, 0.0)
            mu = np.where(fin, mu, 0.0)
            if self.mode == "orthogonal":
                out[s] = w * np.log1p(x * h) - mu * x
            else:
                xn = x.max(axis=0)
                row = np.zeros((sc.n_transmitters, sc.horizon))
                row[n] = xn
                out[n] = self.bank.value(row)[n] - mu * xn
        return out

    def objective(self, p, bw) -> float:
        if self.mode == "orthogonal":
            terms = _perspective_log(bw, np.where(bw > 0, p * self.sc.gains, 0.0))
            return float(self.sc.weights @ terms.sum(axis=1))
        with np.errstate(over="ignore"):
            x = p / np.where(bw > 0, bw, 1.0)
        # an overflowing density means a share worth about bw log(1/bw), i.e. nothing
        on = (bw > 0) & (p > 0) & np.isfinite(x)
        x = np.where(on, x, 0.0)
        return float(np.sum(np.where(on, bw * self.bank.value(x), 0.0)))


def project_shares(z, eps: float) -> np.ndarray:
    """Euclidean projection of every column onto ``{a >= eps, sum(a) = 1}``."""
    z = np.asarray(z, dtype=float)
    m = z.shape[0]
    v = z - eps
    u = -np.sort(-v, axis=0)
    css = np.cumsum(u, axis=0) - (1.0 - m * eps)
    ranks = np.arange(1, m + 1)[:, None]
    r = (u - css / ranks > 0).sum(axis=0) - 1
    theta = css[r, np.arange(z.shape[1])] / (r + 1)
    return np.maximum(v - theta, 0.0) + eps


class _Ascent:
    """Block coordinate ascent with an extrapolated bandwidth step.

    After each plain round (bandwidth block, then energy block) the bandwidth
    is pushed further along the last change, projected back onto the simplex
    and re-paired with its optimal energies. The trial replaces the plain
    iterate only when it raises the objective, so the trace stays monotone;
    the push length doubles after a success and shrinks after a failure.
    """

    def __init__(self, prob: _Problem, trace: SolveTrace, extrapolate: bool):
        self.prob = prob
        self.trace = trace
        self.extrapolate = extrapolate

    def stage(self, p, bw, obj, eps, tol, max_iter):
        prob, trace = self.prob, self.trace
        beta, prev = 1.0, None
        profiles = alpha = None
        for _ in range(max_iter):
            trace.iterations += 1
            bw_new, alpha = prob.bandwidth_step(p, eps)
            trace.objectives.append(prob.objective(p, bw_new))
            bw_new, p_new, profiles = prob.paired_energy(bw_new)
            new = prob.objective(p_new, bw_new)
            trace.objectives.append(new)
            if self.extrapolate and prev is not None:
                z = project_shares(bw_new + beta * (bw_new - prev), eps)
                try:
                    pz, prof_z = prob.energy_step(z)
                    oz = prob.objective(pz, z)
                except SegmentInfeasible:
                    # the trial left some transmitter no room for its forced spend
                    oz = -np.inf
                if oz > new:
                    bw_new, p_new, new, profiles = z, pz, oz, prof_z
                    trace.objectives.append(oz)
                    beta = min(2.0 * beta, 1e6)
                else:
                    beta = max(beta / 4.0, 0.5)
            prev, bw, p = bw, bw_new, p_new
            gain, obj = new - obj, new
            if gain <= tol * max(abs(new), 1e-300):
                return p, bw, obj, profiles, alpha, True
        return p, bw, obj, profiles, alpha, False


def solve(scenario: Scenario, options: SolveOptions | None = None, init_bandwidth=None):
    """Maximise the weighted throughput; returns ``(Allocation, RateReport, SolveTrace)``.

    Alternates the per-transmitter energy problems (bandwidth fixed) with the
    per-slot bandwidth problems (energy fixed) until the objective gain over a
    full round falls below ``objective_tol`` relative. ``init_bandwidth``
    warm-starts the first energy step (per receiver in orthogonal mode, per
    transmitter otherwise).

    Stages of the epsilon schedule before the last one only provide a starting
    point and stop at a looser tolerance. Rows left without energy can only
    regain it very slowly through block steps, so the solver finishes with a
    price test on those rows and a joint line search when the test fails;
    with ``eps = 0`` it also tries a short detour through a small floor.
    Either detour is kept only if the objective improves.
    """
    sc = validate(scenario)
    opts = options or SolveOptions()
    prob = _Problem(sc, opts.mode)
    schedule = opts.epsilon_schedule or default_schedule(sc)
    if init_bandwidth is None:
        bw = prob.initial_bandwidth()
    else:
        # a warm start already carries the shape a warm-up stage would give
        if opts.epsilon_schedule is None:
            schedule = (sc.epsilon,)
        floor = max(schedule[0], REVIVE_FLOOR / sc.n_receivers)
        bw = np.maximum(np.array(init_bandwidth, dtype=float), floor)
        bw = bw / bw.sum(axis=0, keepdims=True)
    trace = SolveTrace()
    bw, p, profiles = prob.paired_energy(bw)
    obj = prob.objective(p, bw)
    trace.objectives.append(obj)
    ascent = _Ascent(prob, trace, opts.extrapolate)
    alpha = None
    for i, eps in enumerate(schedule):
        trace.stages.append(eps)
        last = i == len(schedule) - 1
        tol = opts.objective_tol if last else max(opts.objective_tol, WARMUP_TOL)
        p, bw, obj, prof, al, trace.converged = ascent.stage(p, bw, obj, eps, tol, opts.max_outer_iters)
        profiles, alpha = prof or profiles, al if al is not None else alpha
    p, bw, obj, profiles, alpha = _reopen(prob, ascent, p, bw, obj, profiles, alpha, opts, schedule[-1])
    if schedule[-1] == 0:
        p, bw, obj, profiles, alpha = _revive(prob, ascent, p, bw, obj, profiles, alpha, opts)
    # close on a bandwidth step so the shares are exactly optimal for the
    # returned energies; the energies already came from an energy step
    bw_last, (bw, alpha) = bw, prob.bandwidth_step(p, schedule[-1])
    # a share can underflow to 0 under a sliver of energy; such columns keep
    # the shares the energies were computed from
    bad = np.any((bw <= 0) & (p > 0), axis=0)
    bw[:, bad] = bw_last[:, bad]
    obj = prob.objective(p, bw)
    trace.objectives.append(obj)
    diffs = np.diff(trace.objectives)
    trace.stalled = bool(np.any(diffs < -1e-9 * max(1.0, abs(obj))))
    trace.profiles = profiles
    trace.dual_prices = alpha
    alloc = prob.allocation(p, bw)
    return alloc, evaluate(sc, alloc), trace


def _reopen(prob, ascent, p, bw, obj, profiles, alpha, opts, eps):
    """Reopen rows whose zero energy is no longer justified by the slot prices.

    A row with no energy in slot ``k`` is worth opening when the best value
    it can make of a sliver of bandwidth, ``max_x [F(x) - mu x]`` at the
    transmitter's energy price ``mu``, beats the slot's bandwidth price. Block
    steps cannot leave such a point quickly, so the bandwidth of every
    offending slot is moved towards its best such row by a line search over
    the joint problem, after which the ascent resumes. The detour is kept only
    if it raises the objective.
    """
    for _ in range(REVIVE_ROUNDS):
        _, alpha_now = prob.bandwidth_step(p, eps)
        _, _, prof_now = prob.paired_energy(bw)
        gain = prob.opening_value(p, prof_now) - alpha_now[None, :]
        gain = np.where(p <= 0, gain, -np.inf)
        cols = np.flatnonzero(gain.max(axis=0) > PRICE_TOL * max(1.0, float(np.max(np.abs(alpha_now)))))
        if cols.size == 0:
            break
        target = np.zeros_like(bw)
        target[:, cols] = eps
        target[gain[:, cols].argmax(axis=0), cols] += 1.0 - bw.shape[0] * eps

        def trial(t):
            z = bw.copy()
            z[:, cols] = (1.0 - t) * bw[:, cols] + t * target[:, cols]
            try:
                pz, prof_z = prob.energy_step(z)
            except SegmentInfeasible:
                return -np.inf, None
            return prob.objective(pz, z), (pz, z, prof_z)

        res = minimize_scalar(lambda t: -trial(t)[0], bounds=(0.0, 1.0), method="bounded",
                              options={"xatol": 1e-6})
        o_t, state = trial(float(res.x))
        if state is None or o_t <= obj:
            break
        p_t, bw_t, prof_t = state
        scratch = _Ascent(prob, SolveTrace(), ascent.extrapolate)
        p_t, bw_t, o_t, prof_s, al_s, ok = scratch.stage(p_t, bw_t, o_t, eps, opts.objective_tol, opts.max_outer_iters)
        if o_t <= obj:
            break
        ascent.trace.iterations += scratch.trace.iterations
        ascent.trace.objectives.append(o_t)
        ascent.trace.converged = ok
        p, bw, obj = p_t, bw_t, o_t
        profiles = prof_s or prof_t
        alpha = al_s if al_s is not None else alpha
    return p, bw, obj, profiles, alpha


def _revive(prob, ascent, p, bw, obj, profiles, alpha, opts):
    """Retry zero shares through a small floor; keep the detour only if it pays."""
    n_rows = bw.shape[0]
    for _ in range(FLOOR_ROUNDS):
        if not np.any(bw <= 0):
            break
        bw_f, _ = prob.bandwidth_step(p, REVIVE_FLOOR / n_rows)
        bw_f, p_f, _ = prob.paired_energy(bw_f)
        # run the detour on a scratch trace; only an improvement is recorded
        scratch = _Ascent(prob, SolveTrace(), ascent.extrapolate)
        o_f = prob.objective(p_f, bw_f)
        p_f, bw_f, o_f, prof_f, al_f, ok = scratch.stage(p_f, bw_f, o_f, 0.0, opts.objective_tol,
                                                          opts.max_outer_iters)
        if o_f <= obj * (1 + opts.objective_tol):
            break
        ascent.trace.iterations += scratch.trace.iterations
        ascent.trace.objectives.append(o_f)
        ascent.trace.converged = ok
        p, bw, obj = p_f, bw_f, o_f
        profiles, alpha = prof_f or profiles, al_f if al_f is not None else alpha
    return p, bw, obj, profiles, alpha


# ---------------------------------------------------------- equal weights


def reduce_equal_weights(scenario: Scenario):
    """Point-to-point scenario keeping only each transmitter's strongest receiver per slot.

    Returns ``(reduced, strongest)`` where ``strongest[n, k]`` is the receiver
    index kept for transmitter ``n`` in slot ``k``; reduced receiver ``n``
    belongs to transmitter ``n``.
    """
    sc = validate(scenario)
    if not np.allclose(sc.weights, sc.weights[0], rtol=0, atol=0):
        raise ScenarioError(["weights-not-equal"], ["weights-not-equal: reduction needs identical weights"])
    strongest = np.zeros((sc.n_transmitters, sc.horizon), dtype=int)
    gains = np.zeros((sc.n_transmitters, sc.horizon))
    for n, s in enumerate(sc.receiver_sets):
        s = np.asarray(s)
        idx = np.argmax(sc.gains[s], axis=0)
        strongest[n] = s[idx]
        gains[n] = sc.gains[s[idx], np.arange(sc.horizon)]
    reduced = Scenario(
        tuple((n,) for n in range(sc.n_transmitters)),
        sc.harvest.copy(),
        gains,
        sc.battery_cap.copy(),
        sc.max_power.copy(),
        np.full(sc.n_transmitters, sc.weights[0]),
        sc.epsilon,
        dict(sc.metadata),
    )
    return reduced, strongest


def expand_reduced(scenario: Scenario, strongest, reduced_alloc: Allocation, mode: str = "orthogonal") -> Allocation:
    """Map a reduced-scenario allocation back onto every receiver (zeros elsewhere)."""
    m, k = scenario.n_receivers, scenario.horizon
    energy = np.zeros((m, k))
    cols = np.arange(k)
    for n in range(strongest.shape[0]):
        energy[strongest[n], cols] = reduced_alloc.energy[n]
    if mode == "orthogonal":
        bw = np.zeros((m, k))
        red_bw = reduced_alloc.bandwidth if reduced_alloc.bandwidth is not None else reduced_alloc.tx_bandwidth
        for n in range(strongest.shape[0]):
            bw[strongest[n], cols] = red_bw[n]
        return Allocation("orthogonal", energy, bandwidth=bw)
    tx = reduced_alloc.tx_bandwidth if reduced_alloc.tx_bandwidth is not None else reduced_alloc.bandwidth
    return Allocation("nonorthogonal", energy, tx_bandwidth=tx.copy())
