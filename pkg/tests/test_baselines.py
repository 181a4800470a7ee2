import numpy as np
import pytest

from ehalloc.baselines import (
    PolicyKind,
    greedy_budget,
    run_equal_bandwidth,
    run_greedy,
    run_greedy_energy,
    run_policy,
    run_traditional_pf,
)
from ehalloc.generate import GeneratorSpec, gen_scenario
from ehalloc.model import Scenario, ScenarioError, check_feasible, evaluate
from ehalloc.pf import pf_iterate
from ehalloc.solver import SolveOptions, solve

MODES = ("orthogonal", "nonorthogonal")


def section_v(seed):
    return gen_scenario(GeneratorSpec(seed=seed, horizon=8))


def test_greedy_budget_respects_the_battery():
    sc = Scenario.create([(0,)], [[5.0, 0.0, 0.0]], [[1.0, 1.0, 1.0]], 2.0, 1.5)
    np.testing.assert_allclose(greedy_budget(sc), [[1.5, 1.5, 0.5]])


class TestGreedyEnergy:
    @pytest.mark.parametrize("mode", MODES)
    def test_single_slot_is_optimal(self, make_scenario, mode):
        sc = make_scenario(3, k=1)
        alloc = run_greedy_energy(sc, mode)
        best = solve(sc, SolveOptions(mode=mode))[1].weighted_total
        assert evaluate(sc, alloc).weighted_total == pytest.approx(best, rel=1e-7)

    def test_zero_harvest(self):
        sc = Scenario.create([(0, 1)], [[0.0, 0.0]], [[1.0, 2.0], [2.0, 1.0]], 1.0)
        np.testing.assert_array_equal(evaluate(sc, run_greedy_energy(sc)).per_receiver, 0.0)

    @pytest.mark.parametrize("mode", MODES)
    def test_dominated(self, mode):
        sc = section_v(1)
        val = evaluate(sc, run_policy(sc, "greedy-energy", mode)).weighted_total
        assert val <= solve(sc, SolveOptions(mode=mode))[1].weighted_total * (1 + 1e-7)


class TestEqualBandwidth:
    @pytest.mark.parametrize("mode", MODES)
    def test_single_transmitter_is_optimal(self, make_scenario, mode):
        sc = make_scenario(5, n=1)
        alloc = run_equal_bandwidth(sc, mode)
        assert check_feasible(sc, alloc) == []
        best = solve(sc, SolveOptions(mode=mode))[1].weighted_total
        assert evaluate(sc, alloc).weighted_total == pytest.approx(best, rel=1e-6)

    def test_symmetric_transmitters_are_optimal(self):
        sc = Scenario.create([(0,), (1,)], [[1.0, 2.0], [1.0, 2.0]], [[1.0, 0.4], [1.0, 0.4]], 3.0)
        best = solve(sc)[1].weighted_total
        assert evaluate(sc, run_equal_bandwidth(sc)).weighted_total == pytest.approx(best, rel=1e-7)

    @pytest.mark.parametrize("mode", MODES)
    def test_dominated(self, mode):
        sc = section_v(2)
        val = evaluate(sc, run_policy(sc, "equal-bandwidth", mode)).weighted_total
        assert val <= solve(sc, SolveOptions(mode=mode))[1].weighted_total * (1 + 1e-7)

    def test_epsilon_too_large_for_a_share(self):
        sc = gen_scenario(GeneratorSpec(seed=0, receiver_sets=((0, 1, 2), (3,)), horizon=2, epsilon=0.2))
        with pytest.raises(ScenarioError) as err:
            run_equal_bandwidth(sc)
        assert err.value.codes == ["infeasible-epsilon"]


class TestGreedy:
    def test_single_receiver_spends_everything(self):
        sc = Scenario.create([(0,)], [[1.0, 2.0]], [[1.0, 1.0]], 5.0)
        alloc = run_greedy(sc)
        np.testing.assert_allclose(alloc.energy, [[1.0, 2.0]])
        np.testing.assert_allclose(alloc.bandwidth, 1.0)

    def test_two_receivers_split_evenly(self):
        sc = Scenario.create([(0, 1)], [[1.0, 2.0]], [[1.0, 2.0], [2.0, 1.0]], 5.0)
        np.testing.assert_allclose(run_greedy(sc).energy, [[0.5, 1.0], [0.5, 1.0]])

    def test_pf_utility_below_optimum(self):
        sc = section_v(3)
        greedy = evaluate(sc, run_policy(sc, "greedy")).pf_utility
        assert greedy <= pf_iterate(sc, tol=1e-4)[1].pf_utility + 1e-6


class TestTraditionalPf:
    def test_single_receiver_always_scheduled(self):
        sc = Scenario.create([(0,)], [[1.0, 0.0, 2.0]], [[1.0, 2.0, 0.5]], 5.0)
        alloc = run_traditional_pf(sc)
        np.testing.assert_allclose(alloc.bandwidth, 1.0)
        np.testing.assert_allclose(alloc.energy, greedy_budget(sc))

    def test_identical_links_alternate_from_the_lowest_index(self):
        sc = Scenario.create([(0,), (1,)], [[1.0] * 4, [1.0] * 4], [[1.0] * 4, [1.0] * 4], 100.0)
        alloc = run_traditional_pf(sc)
        assert np.argmax(alloc.bandwidth, axis=0).tolist() == [0, 1, 0, 1]

    def test_pf_utility_between_greedy_and_optimum(self):
        sc = section_v(4)
        trad = evaluate(sc, run_policy(sc, "traditional-pf")).pf_utility
        assert trad <= pf_iterate(sc, tol=1e-4)[1].pf_utility + 1e-6

    def test_overflow_is_spent_by_idle_transmitters(self):
        sc = Scenario.create([(0,), (1,)], [[5.0, 5.0], [5.0, 5.0]], [[3.0, 3.0], [1.0, 1.0]], 2.0)
        alloc = run_policy(sc, "traditional-pf")
        assert check_feasible(sc, alloc) == []


def test_policy_checks():
    with pytest.raises(ValueError):
        PolicyKind("round-robin")
    with pytest.raises(ValueError):
        PolicyKind("traditional-pf", alpha_avg=1.5)
    with pytest.raises(ValueError):
        run_policy(section_v(0), "greedy", "nonorthogonal")


@pytest.mark.parametrize("policy", ["greedy-energy", "equal-bandwidth", "greedy", "traditional-pf"])
def test_policies_are_feasible_at_positive_epsilon(policy):
    sc = gen_scenario(GeneratorSpec(seed=9, horizon=6, epsilon=0.02))
    assert check_feasible(sc, run_policy(sc, policy)) == []
