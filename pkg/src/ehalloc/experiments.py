"""Experiment drivers behind the CLI: policy comparison, rate-region sweeps, PF traces.

Every function returns plain rows (lists of dicts) and leaves file output to
:func:`write_csv`, which prints floats with 17 significant digits so the
tables round-trip exactly.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import POLICIES, run_policy
from .generate import GeneratorSpec, sample_scenario
from .model import Allocation, Scenario, ScenarioError, evaluate, validate
from .pf import approx_pf_weights, pf_iterate
from .solver import SolveOptions, solve

__all__ = [
    "PF_POLICIES",
    "RegionPoint",
    "RegionSweep",
    "write_csv",
    "format_value",
    "run_compare",
    "delta_bound",
    "boundary_gap",
    "sweep_region",
    "region_rows",
    "scenario_sampler",
    "run_pf",
    "allocation_rows",
]

MODES = ("orthogonal", "nonorthogonal")
# PF policies: the PF-weight iteration and a single solve at approximate PF weights
PF_POLICIES = ("pf", "approx-pf")


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(rows: Sequence[dict], path, columns: Sequence[str] | None = None) -> Path:
    """Header row plus one line per row; missing keys are written empty."""
    path = Path(path)
    cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in cols])
    return path


def compare_columns(n_receivers: int) -> list[str]:
    return (["policy", "mode", "weighted_throughput", "pf_utility"]
            + [f"rate_{m}" for m in range(n_receivers)] + ["wall_time"])


def run_compare(
    scenario: Scenario,
    modes: Iterable[str] = MODES,
    policies: Iterable[str] = POLICIES,
    options: SolveOptions | None = None,
    pf_weights=None,
    timing: bool = True,
) -> list[dict]:
    """One row per (policy, mode), starting with the optimal solve of each mode.

    Policies that only exist for orthogonal broadcast are skipped in the other
    mode. ``"pf"`` runs the PF-weight iteration; ``"approx-pf"`` solves once at
    ``pf_weights`` (required for it). With ``timing=False`` the wall-time
    column is left empty so that repeated runs give identical files.
    """
    sc = validate(scenario)
    policies = list(policies)
    for p in policies:
        if p not in POLICIES + PF_POLICIES:
            raise ValueError(f"unknown policy {p!r}")
    if "approx-pf" in policies and pf_weights is None:
        raise ValueError("the approx-pf policy needs pf_weights")
    rows = []
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        opts = replace(options or SolveOptions(), mode=mode)
        runs = [("optimal", lambda: solve(sc, opts)[0])]
        for p in policies:
            if p in ("greedy", "traditional-pf", "pf", "approx-pf") and mode != "orthogonal":
                continue
            if p == "pf":
                runs.append((p, lambda: pf_iterate(sc, initial_weights=pf_weights, options=opts)[0]))
            elif p == "approx-pf":
                runs.append((p, lambda: solve(sc.with_weights(pf_weights), opts)[0]))
            else:
                runs.append((p, lambda p=p: run_policy(sc, p, mode, options=opts)))
        for name, fn in runs:
            t0 = time.perf_counter()
            alloc = fn()
            elapsed = time.perf_counter() - t0
            rep = evaluate(sc, alloc)
            row = {"policy": name, "mode": mode, "weighted_throughput": rep.weighted_total,
                   "pf_utility": rep.pf_utility, "wall_time": elapsed if timing else None}
            row.update({f"rate_{m}": r for m, r in enumerate(rep.per_receiver)})
            rows.append(row)
    return rows


# ------------------------------------------------------------------ region


@dataclass
class RegionPoint:
    w1: float
    w2: float
    r1: float
    r2: float
    mode: str


@dataclass
class RegionSweep:
    points: list[RegionPoint]
    delta: float
    gap: float
    anchor_gap: float
    anchors: dict

    def curve(self, mode: str) -> np.ndarray:
        """``(n, 2)`` rates of one mode in sweep order."""
        return np.array([[p.r1, p.r2] for p in self.points if p.mode == mode])


def delta_bound(r1: float, r2: float, r1s: float, r2s: float) -> float:
    """Largest possible distance between the two boundaries given the three shared points.

    ``(r1, 0)`` and ``(0, r2)`` are the single-receiver optima and
    ``(r1s, r2s)`` the equal-weight optimum. Each region contains the
    triangle through these points and is contained in the region cut by the
    tangent lines there, so the distance is at most the larger height of the
    two corner triangles.
    """
    terms = []
    for top, mid, other in ((r2, r2s, r1s), (r1, r1s, r2s)):
        den = np.hypot(top - mid, other)
        # a corner triangle of zero size (shared point on an axis) adds nothing
        terms.append(0.0 if den == 0 else (top - mid) * (other + mid - top) / den)
    return float(max(terms))


def _segment_distance(p, a, b) -> float:
    d = b - a
    den = float(d @ d)
    t = 0.0 if den == 0 else float(np.clip((p - a) @ d / den, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * d)))


def _inside(p, poly) -> bool:
    # convex polygon listed counter-clockwise
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < -1e-12:
            return False
    return True


def boundary_gap(outer: np.ndarray, inner: np.ndarray) -> float:
    """Largest distance from a point of ``outer`` to the region spanned by ``inner``.

    The inner region is approximated by the polygon through the origin, the
    axis projections and the sweep points; it lies inside the true region, so
    the returned value can only overestimate the true gap.
    """
    inner = np.asarray(inner, dtype=float)
    order = np.argsort(-inner[:, 0] + 1e-15 * inner[:, 1])
    pts = inner[order]
    chain = np.vstack([[pts[:, 0].max(), 0.0], pts, [0.0, pts[:, 1].max()]])
    poly = np.vstack([[0.0, 0.0], chain])
    hull = _convex_hull(poly)
    best = 0.0
    for p in np.asarray(outer, dtype=float):
        if _inside(p, hull):
            continue
        d = min(_segment_distance(p, a, b) for a, b in zip(hull, np.roll(hull, -1, axis=0)))
        best = max(best, d)
    return best


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull (monotone chain); the polygon is convex up to solver noise."""
    pts = sorted(map(tuple, np.round(points, 15)))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def sweep_region(scenario: Scenario, n_points: int = 21, options: SolveOptions | None = None) -> RegionSweep:
    """Sweep ``(W1, 1 - W1)`` over a uniform grid and solve both modes at each point.

    The grid always contains ``W1 = 0, 0.5, 1``, the three weights at which
    the two boundaries meet; ``anchor_gap`` is the largest rate difference
    between the modes there.
    """
    sc = validate(scenario)
    if sc.n_transmitters != 1 or sc.n_receivers != 2:
        raise ScenarioError(["bad-shape"], ["bad-shape: region sweeps need one transmitter with two receivers"])
    if n_points < 3 or n_points % 2 == 0:
        raise ValueError("n_points must be odd and at least 3 so the grid contains 0, 1/2 and 1")
    base = options or SolveOptions()
    points = []
    for w1 in np.linspace(0.0, 1.0, n_points):
        w = np.array([w1, 1.0 - w1])
        for mode in MODES:
            opts = replace(base, mode=mode)
            rates = evaluate(sc, solve(sc.with_weights(w), opts)[0]).per_receiver
            points.append(RegionPoint(float(w1), float(1.0 - w1), float(rates[0]), float(rates[1]), mode))
    ortho = [p for p in points if p.mode == "orthogonal"]
    non = [p for p in points if p.mode == "nonorthogonal"]
    mid = n_points // 2
    r1 = ortho[-1].r1
    r2 = ortho[0].r2
    r1s, r2s = ortho[mid].r1, ortho[mid].r2
    anchor_gap = max(abs(o.r1 - q.r1) + abs(o.r2 - q.r2) for o, q in
                     ((ortho[0], non[0]), (ortho[mid], non[mid]), (ortho[-1], non[-1])))
    anchors = {"r1": r1, "r2": r2, "r1_star": r1s, "r2_star": r2s}
    o_curve = np.array([[p.r1, p.r2] for p in ortho])
    n_curve = np.array([[p.r1, p.r2] for p in non])
    return RegionSweep(points, delta_bound(r1, r2, r1s, r2s), boundary_gap(n_curve, o_curve), anchor_gap, anchors)


def region_rows(sweep: RegionSweep) -> list[dict]:
    return [{"w1": p.w1, "w2": p.w2, "mode": p.mode, "r1": p.r1, "r2": p.r2} for p in sweep.points]


# ---------------------------------------------------------------------- PF


def scenario_sampler(scenario: Scenario):
    """Sampler for :func:`approx_pf_weights`.

    Scenarios made by the generator carry their spec in the metadata, so new
    realizations come from the same distribution; any other scenario is its
    own (deterministic) distribution.
    """
    rec = (scenario.metadata or {}).get("generator")
    if rec is None:
        return lambda rng: scenario
    rec = dict(rec)
    if rec.get("receiver_sets") is not None:
        rec["receiver_sets"] = tuple(tuple(s) for s in rec["receiver_sets"])
    for key in ("harvest_mean", "rayleigh_sigma", "weights"):
        if isinstance(rec.get(key), list):
            rec[key] = tuple(rec[key])
    spec = GeneratorSpec(**rec)
    return lambda rng: sample_scenario(spec, rng).with_weights(scenario.weights)


def run_pf(scenario: Scenario, iters: int = 50, samples: int = 50, seed: int = 0, tol: float = 1e-4,
           rule: str = "master", approx_weights=None) -> tuple[list[dict], dict]:
    """PF convergence traces from equal and from approximate initial weights.

    Returns ``(trace_rows, allocations)`` where ``allocations`` maps the
    initialization name to its final allocation.
    """
    sc = validate(scenario)
    if approx_weights is None:
        draws = samples if sc.metadata.get("generator") else 1
        approx_weights = approx_pf_weights(scenario_sampler(sc), samples=draws, seed=seed)
    rows, finals = [], {}
    for name, w0 in (("equal", None), ("approx", approx_weights)):
        alloc, rep, _ = pf_iterate(sc, initial_weights=w0, max_iters=iters, tol=tol, rule=rule)
        for i, (u, r) in enumerate(zip(rep.utilities, rep.residuals), start=1):
            rows.append({"init": name, "iteration": i, "utility": u, "residual": r,
                         "converged": int(rep.converged and i == rep.iterations)})
        finals[name] = alloc
    return rows, finals


def allocation_rows(alloc: Allocation, label: str = "") -> list[dict]:
    rows = []
    share = alloc.bandwidth if alloc.bandwidth is not None else None
    m, k = alloc.energy.shape
    for i in range(m):
        for j in range(k):
            rows.append({"label": label, "receiver": i, "slot": j, "energy": float(alloc.energy[i, j]),
                         "bandwidth": None if share is None else float(share[i, j])})
    return rows
