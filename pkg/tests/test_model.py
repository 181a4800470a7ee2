import math

import numpy as np
import pytest

from ehalloc.model import (
    Allocation,
    Scenario,
    ScenarioError,
    check_feasible,
    check_scenario,
    effective_energy,
    evaluate,
    load_scenario,
    rate_nonorthogonal,
    rate_orthogonal,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)


def one_tx(harvest, gains, cap=10.0, pmax=None, weights=None, eps=0.0):
    gains = np.atleast_2d(gains)
    return Scenario.create([tuple(range(gains.shape[0]))], [harvest], gains, cap, pmax, weights, eps)


class TestValidate:
    def test_infeasible_epsilon(self):
        sc = one_tx([1.0], [[1.0], [2.0]], eps=0.6)
        with pytest.raises(ScenarioError) as err:
            validate(sc)
        assert err.value.codes == ["infeasible-epsilon"]

    def test_valid_scenario_is_returned(self, tiny):
        assert validate(tiny) is tiny

    def test_duplicate_gain(self):
        with pytest.raises(ScenarioError) as err:
            validate(one_tx([1.0], [[1.0], [1.0]]))
        assert "duplicate-gain" in err.value.codes

    def test_reports_every_violation(self):
        sc = Scenario.create([(0,)], [[-1.0]], [[0.0]], -1.0, None, [-1.0], 0.0)
        with pytest.raises(ScenarioError) as err:
            validate(sc)
        assert {"negative-harvest", "nonpositive-gain", "nonpositive-battery", "negative-weight"} <= set(err.value.codes)

    def test_bad_partition(self):
        sc = Scenario.create([(0,), (0,)], [[1.0], [1.0]], [[1.0]], 1.0)
        with pytest.raises(ScenarioError) as err:
            validate(sc)
        assert "bad-partition" in err.value.codes

    def test_check_scenario_rejects_other_types(self):
        with pytest.raises(TypeError):
            check_scenario(3)


class TestEffectiveEnergy:
    def test_unbounded_power_is_cumulative_sum(self):
        np.testing.assert_allclose(effective_energy(one_tx([1.0, 2.0], [[1.0, 1.0]])), [[1.0, 3.0]])

    def test_power_and_battery_limits(self):
        sc = one_tx([5.0, 0.0], [[1.0, 1.0]], cap=2.0, pmax=1.0)
        np.testing.assert_allclose(effective_energy(sc), [[3.0, 3.0]])

    def test_zero_harvest(self):
        np.testing.assert_allclose(effective_energy(one_tx([0.0, 0.0], [[1.0, 1.0]])), [[0.0, 0.0]])


class TestRates:
    def test_unit_rate(self):
        sc = one_tx([1.0], [[math.e - 1]])
        rep = rate_orthogonal(sc, Allocation("orthogonal", np.array([[1.0]]), bandwidth=np.array([[1.0]])))
        assert rep.per_receiver[0] == pytest.approx(1.0, abs=1e-14)

    def test_zero_energy(self, tiny):
        alloc = Allocation("orthogonal", np.zeros((2, 2)), bandwidth=np.full((2, 2), 0.5))
        np.testing.assert_array_equal(rate_orthogonal(tiny, alloc).per_receiver, 0.0)
        alloc = Allocation("nonorthogonal", np.zeros((2, 2)), tx_bandwidth=np.ones((1, 2)))
        np.testing.assert_array_equal(rate_nonorthogonal(tiny, alloc).per_receiver, 0.0)

    def test_half_band(self):
        sc = Scenario.create([(0,), (1,)], [[2.0], [0.0]], [[1.0], [1.0]], 5.0)
        alloc = Allocation("orthogonal", np.array([[2.0], [0.0]]), bandwidth=np.array([[0.5], [0.5]]))
        assert rate_orthogonal(sc, alloc).per_receiver[0] == pytest.approx(0.5 * math.log(5), rel=1e-14)

    def test_single_receiver_sets_match_orthogonal(self):
        sc = Scenario.create([(0,), (1,)], [[1.0, 1.0], [1.0, 1.0]], [[1.0, 2.0], [3.0, 0.5]], 5.0)
        energy = np.array([[0.5, 1.0], [1.0, 0.2]])
        share = np.array([[0.3, 0.6], [0.7, 0.4]])
        a = rate_orthogonal(sc, Allocation("orthogonal", energy, bandwidth=share))
        b = rate_nonorthogonal(sc, Allocation("nonorthogonal", energy, tx_bandwidth=share))
        np.testing.assert_allclose(a.per_receiver, b.per_receiver, rtol=1e-14)

    def test_superposition_two_receivers(self):
        sc = one_tx([1.0], [[4.0], [1.0]])
        alloc = Allocation("nonorthogonal", np.array([[0.5], [0.5]]), tx_bandwidth=np.ones((1, 1)))
        rep = rate_nonorthogonal(sc, alloc)
        expected = math.log(3) + math.log(1 + 0.5 / 1.5)
        assert rep.weighted_total == pytest.approx(expected, rel=1e-14)
        # brute force over decode orders: the strong receiver decoding last is the better order
        assert expected > math.log(1 + 0.5 * 4 / (1 + 0.5 * 4)) + math.log(1 + 0.5)

    def test_energy_on_zero_band_is_degenerate(self, tiny):
        alloc = Allocation("orthogonal", np.ones((2, 2)), bandwidth=np.array([[1.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(ScenarioError) as err:
            evaluate(tiny, alloc)
        assert err.value.codes == ["degenerate-allocation"]


class TestFeasibility:
    def test_flags_each_family(self, tiny):
        bad = Allocation("orthogonal", np.array([[5.0, 0.0], [0.0, 0.0]]), bandwidth=np.array([[0.7, 0.5], [0.2, 0.5]]))
        assert set(check_feasible(tiny, bad)) == {"causality", "bandwidth-sum"}

    def test_overflow(self):
        sc = one_tx([5.0, 0.0], [[1.0, 1.0]], cap=1.0)
        alloc = Allocation("orthogonal", np.zeros((1, 2)), bandwidth=np.ones((1, 2)))
        assert "battery-overflow" in check_feasible(sc, alloc)

    def test_greedy_spend_is_feasible(self, tiny):
        alloc = Allocation("orthogonal", np.array([[2.0, 1.0], [0.0, 0.0]]), bandwidth=np.full((2, 2), 0.5))
        assert check_feasible(tiny, alloc) == []


def test_round_trip(tmp_path, tiny):
    path = tmp_path / "sc.json"
    save_scenario(tiny, path)
    back = load_scenario(path)
    assert scenario_to_dict(back) == scenario_to_dict(tiny)
    assert scenario_to_dict(scenario_from_dict(scenario_to_dict(tiny))) == scenario_to_dict(tiny)


def test_unbounded_power_survives_json(tmp_path):
    sc = Scenario.create([(0,), (1,)], [[1.0], [1.0]], [[1.0], [2.0]], 2.0, [None, 3.0])
    save_scenario(sc, tmp_path / "p.json")
    back = load_scenario(tmp_path / "p.json")
    assert np.isinf(back.max_power[0]) and back.max_power[1] == 3.0
