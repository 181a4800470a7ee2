"""Command line entry point: ``ehalloc gen|solve|compare|region|pf``.

Failures print one JSON object (``error``, ``codes``, ``message``) on stderr
and exit with status 1 (2 for usage errors).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import experiments as ex
from .baselines import POLICIES
from .generate import GeneratorSpec, gen_scenario
from .model import evaluate, load_scenario, save_scenario
from .pf import approx_pf_weights
from .solver import SolveOptions, solve

MODE_CHOICES = click.Choice(["orthogonal", "nonorthogonal", "both"])


def _modes(mode: str) -> tuple[str, ...]:
    return ("orthogonal", "nonorthogonal") if mode == "both" else (mode,)


def _load(path, epsilon):
    sc = load_scenario(path)
    return sc if epsilon is None else sc.with_epsilon(epsilon)


def _error_record(exc: BaseException) -> dict:
    return {
        "error": type(exc).__name__,
        "codes": list(getattr(exc, "codes", [])),
        "message": str(exc),
    }


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.exceptions.Abort):
            raise
        except click.UsageError as exc:
            click.echo(json.dumps(_error_record(exc)), err=True)
            sys.exit(2)
        except Exception as exc:  # every failure becomes a machine-readable record
            click.echo(json.dumps(_error_record(exc)), err=True)
            sys.exit(1)


@click.group(cls=_Group)
def main():
    """Energy and bandwidth allocation for energy-harvesting broadcast networks."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--epsilon", type=float, default=0.0, show_default=True)
@click.option("--transmitters", type=int, default=3, show_default=True)
@click.option("--receivers-per-tx", type=int, default=2, show_default=True)
@click.option("--horizon", type=int, default=20, show_default=True)
@click.option("--harvest-mean", type=float, default=10.0, show_default=True)
@click.option("--harvest-var", type=float, default=2.0, show_default=True)
@click.option("--sigma", type=float, default=2.0, show_default=True, help="Rayleigh scale of the gain amplitude.")
@click.option("--battery", type=float, default=20.0, show_default=True)
@click.option("--max-power", type=float, default=None)
def gen(seed, out, epsilon, transmitters, receivers_per_tx, horizon, harvest_mean, harvest_var, sigma, battery,
        max_power):
    """Draw a seeded scenario and write it as JSON."""
    spec = GeneratorSpec(seed=seed, n_transmitters=transmitters, receivers_per_tx=receivers_per_tx,
                         horizon=horizon, harvest_mean=harvest_mean, harvest_var=harvest_var,
                         rayleigh_sigma=sigma, battery_cap=battery, max_power=max_power, epsilon=epsilon)
    save_scenario(gen_scenario(spec), out)
    click.echo(out)


@main.command("solve")
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--mode", type=click.Choice(["orthogonal", "nonorthogonal"]), default="orthogonal", show_default=True)
@click.option("--epsilon", type=float, default=None, help="Override the scenario's minimal share.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Allocation CSV.")
def solve_cmd(scenario_path, mode, epsilon, out):
    """Maximise the weighted throughput and print a JSON summary."""
    sc = _load(scenario_path, epsilon)
    alloc, rep, trace = solve(sc, SolveOptions(mode=mode))
    if out:
        rows = ex.allocation_rows(alloc, mode)
        if mode == "nonorthogonal":
            for r in rows:
                r["bandwidth"] = float(alloc.tx_bandwidth[sc.owner[r["receiver"]], r["slot"]])
        ex.write_csv(rows, out, ["label", "receiver", "slot", "energy", "bandwidth"])
    click.echo(json.dumps({
        "mode": mode,
        "weighted_throughput": rep.weighted_total,
        "rates": rep.per_receiver.tolist(),
        "iterations": trace.iterations,
        "converged": trace.converged,
    }))


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--mode", type=MODE_CHOICES, default="both", show_default=True)
@click.option("--policies", default=",".join(POLICIES), show_default=True,
              help="Comma-separated list; also accepts pf and approx-pf. Empty for the optimal rows only.")
@click.option("--epsilon", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the approximate PF weights.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--timing/--no-timing", default=True, show_default=True,
              help="Record wall times (turn off for byte-identical reruns).")
def compare(scenario_path, mode, policies, epsilon, seed, out, timing):
    """Optimal solves and heuristic policies side by side, as CSV."""
    sc = _load(scenario_path, epsilon)
    names = [p.strip() for p in policies.split(",") if p.strip()]
    weights = None
    if "approx-pf" in names:
        weights = approx_pf_weights(ex.scenario_sampler(sc), samples=50 if sc.metadata.get("generator") else 1,
                                    seed=seed)
    rows = ex.run_compare(sc, _modes(mode), names, pf_weights=weights, timing=timing)
    ex.write_csv(rows, out, ex.compare_columns(sc.n_receivers))
    click.echo(out)


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--points", type=int, default=21, show_default=True, help="Odd number of weight-grid points.")
@click.option("--epsilon", type=float, default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def region(scenario_path, points, epsilon, out):
    """Sweep the two-receiver rate region in both modes."""
    sc = _load(scenario_path, epsilon)
    sweep = ex.sweep_region(sc, points)
    ex.write_csv(ex.region_rows(sweep), out, ["w1", "w2", "mode", "r1", "r2"])
    click.echo(json.dumps({"delta_bound": sweep.delta, "max_gap": sweep.gap, "anchor_gap": sweep.anchor_gap,
                           **sweep.anchors}))


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--iters", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--samples", type=int, default=50, show_default=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--rule", type=click.Choice(["master", "simultaneous", "alternating"]), default="master",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Trace CSV.")
def pf(scenario_path, iters, seed, samples, epsilon, rule, out):
    """PF traces from equal and approximate weights; final allocations go next to the trace."""
    sc = _load(scenario_path, epsilon)
    rows, finals = ex.run_pf(sc, iters=iters, samples=samples, seed=seed, rule=rule)
    ex.write_csv(rows, out, ["init", "iteration", "utility", "residual", "converged"])
    alloc_rows = [r for name, a in finals.items() for r in ex.allocation_rows(a, name)]
    alloc_path = Path(out).with_name(Path(out).stem + "_allocation.csv")
    ex.write_csv(alloc_rows, alloc_path, ["label", "receiver", "slot", "energy", "bandwidth"])
    summary = {name: float(evaluate(sc, a).pf_utility) for name, a in finals.items()}
    click.echo(json.dumps({"trace": out, "allocation": str(alloc_path), "pf_utility": summary}))


if __name__ == "__main__":
    main()
