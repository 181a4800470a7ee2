import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehalloc.ortho_bw import eval_G, solve_bp, solve_bp_slots, solve_x
from ehalloc.ortho_energy import BDP, check_water_levels, dynamic_wf, segment_level, slot_power


class TestSolveX:
    def test_near_one(self):
        assert solve_x(1 + 1e-12) == pytest.approx(1.0, abs=2e-6)

    def test_half(self):
        assert solve_x(0.5 - math.log(0.5)) == pytest.approx(0.5, abs=1e-12)

    def test_two(self):
        assert solve_x(2.0) == pytest.approx(0.158594, abs=1e-6)

    @given(st.floats(min_value=1.0 + 1e-9, max_value=700.0))
    def test_forward_map(self, y):
        x = solve_x(y)
        assert 0 < x < 1
        assert x - math.log(x) == pytest.approx(y, rel=1e-11)


class TestBandwidth:
    def test_eval_G_limits(self):
        assert eval_G(1.0, [0.0, 0.0], [1.0, 2.0], [1.0, 1.0], 0.1) == 0.0
        assert eval_G(1e12, [1.0, 1.0, 0.0], [1.0, 2.0, 1.0], [1.0, 1.0, 1.0], 0.05) == pytest.approx(0.1)

    def test_eval_G_unit_demand(self):
        alpha = 0.5 - math.log(0.5) - 1.0
        assert eval_G(alpha, [1.0], [1.0], [1.0], 0.0) == pytest.approx(1.0, rel=1e-9)

    def test_all_zero_energy_is_uniform(self):
        np.testing.assert_allclose(solve_bp([0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [1.0, 1.0, 1.0], 0.0), 1 / 3)

    def test_floor_forced(self):
        np.testing.assert_allclose(solve_bp([1.0, 0.0], [1.0, 1.0], [1.0, 1.0], 0.1), [0.9, 0.1], atol=1e-12)

    def test_symmetric(self):
        np.testing.assert_allclose(solve_bp([1.0, 1.0], [1.0, 1.0], [1.0, 1.0], 0.0), [0.5, 0.5], atol=1e-12)

    def test_against_grid(self):
        grid = np.arange(0.01, 0.99 + 5e-6, 1e-5)
        vals = grid * np.log1p(1 / grid) + 2 * (1 - grid) * np.log1p(1 / (1 - grid))
        a = solve_bp([1.0, 1.0], [1.0, 1.0], [1.0, 2.0], 0.01)
        assert a[0] == pytest.approx(grid[np.argmax(vals)], abs=2e-5)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.0, 5.0), st.floats(0.05, 10.0), st.floats(0.1, 3.0)), min_size=1, max_size=5),
           st.sampled_from([0.0, 0.01, 0.1]))
    def test_shares_form_a_simplex(self, rows, eps):
        p, h, w = (np.array(c) for c in zip(*rows))
        if eps * len(rows) > 1:
            return
        a = solve_bp(p, h, w, eps)
        assert a.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(a >= eps - 1e-12)

    def test_many_slots_at_once(self):
        rng = np.random.default_rng(0)
        p, h = rng.uniform(0, 2, (3, 6)), rng.uniform(0.1, 3, (3, 6))
        w = np.array([1.0, 0.5, 2.0])
        a, alpha = solve_bp_slots(p, h, w, 0.02)
        for k in range(6):
            np.testing.assert_allclose(a[:, k], solve_bp(p[:, k], h[:, k], w, 0.02), atol=1e-10)
        assert alpha.shape == (6,)


class TestEnergy:
    def test_below_thresholds(self):
        np.testing.assert_array_equal(slot_power(0.5, 0.0, [1.0, 1.0], [1.0, 1.0], [1.0, 1.5]), 0.0)

    def test_unit_level(self):
        np.testing.assert_allclose(slot_power(2.0, 0.0, [1.0], [1.0], [1.0]), [1.0])

    def test_two_receivers(self):
        np.testing.assert_allclose(slot_power(2.0, 0.0, [0.5, 0.5], [1.0, 1.0], [2.0, 1.0]), [0.75, 0.5])

    def test_segment_zero_target(self):
        _, p = segment_level(0.0, [[1.0, 1.0]], [1.0], [[1.0, 2.0]])
        np.testing.assert_array_equal(p, 0.0)

    def test_segment_symmetric(self):
        w, p = segment_level(2.0, [[1.0, 1.0]], [1.0], [[1.0, 1.0]])
        assert w == pytest.approx(2.0)
        np.testing.assert_allclose(p, [[1.0, 1.0]])

    def test_segment_uneven_gains(self):
        w, p = segment_level(1.0, [[1.0, 1.0]], [1.0], [[1.0, 3.0]])
        assert w == pytest.approx(7 / 6)
        np.testing.assert_allclose(p, [[1 / 6, 5 / 6]])

    def test_single_slot_spends_everything(self):
        p, _ = dynamic_wf([[1.0]], [1.0], [[2.0]], [3.0], 10.0, 2.5)
        assert p.sum() == pytest.approx(2.5)
        p, _ = dynamic_wf([[1.0]], [1.0], [[2.0]], [3.0], 10.0)
        assert p.sum() == pytest.approx(3.0)

    def test_depletion_point(self):
        p, prof = dynamic_wf([[1.0, 1.0]], [1.0], [[1.0, 1.0]], [1.0, 4.0], 100.0)
        np.testing.assert_allclose(p, [[1.0, 3.0]])
        assert (0, BDP) in prof.boundaries

    def test_small_battery(self):
        p, _ = dynamic_wf([[1.0, 1.0]], [1.0], [[1.0, 1.0]], [1.0, 2.0], 1.0)
        np.testing.assert_allclose(p, [[1.0, 1.0]])

    def test_grid_reference(self):
        # two slots, causality and a battery of 1.5: grid search over the first slot's spend
        eff, cap, h = np.array([2.0, 3.0]), 1.5, np.array([0.5, 2.0])
        p, prof = dynamic_wf([[1.0, 1.0]], [1.0], [h], eff, cap)
        grid = np.linspace(eff[0] - cap, eff[0], 200001)
        vals = np.log1p(grid * h[0]) + np.log1p((eff[1] - grid) * h[1])
        assert p[0, 0] == pytest.approx(grid[np.argmax(vals)], abs=1e-4)
        assert check_water_levels(prof, eff - np.cumsum(p[0]), cap) == []
