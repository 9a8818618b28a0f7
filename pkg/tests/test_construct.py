from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rangewalk.consistency import cell_stats, psi
from rangewalk.construct import (InconsistentMeasure, StoppingRule, Trajectory, cell_reach,
                                 derive_rule, empirical_law, sample, sample_batch, tv_distance)
from rangewalk.measure import GridMeasure, Quad
from rangewalk.oracle import chain_law, reach_probabilities

from .strategies import attainable_measures


class TestDerive:
    def test_m0_cells(self, m0):
        rule = derive_rule(m0)
        assert rule.origin_stop == 0
        c = rule.cell("+", 0, 1)
        assert (c.stop, c.up, c.down) == (0, Fraction(2, 3), Fraction(1, 3))
        c = rule.cell("+", 0, 2)
        assert c.stop == 1 and c.x_law == {2: 1}
        c = rule.cell("-", 1, 0)
        assert c.stop == 1 and c.x_law == {-1: 1}
        c = rule.cell("-", 1, 1)
        assert c.stop == 1 and c.x_law == {-1: 1}

    def test_m0_absorbed_mass(self, m0):
        reach, law = cell_reach(derive_rule(m0))
        assert reach[("-", 1, 0)] == Fraction(1, 2)
        assert reach[("+", 0, 1)] == Fraction(1, 2)
        assert law == dict(m0.atoms)
        assert Fraction(1, 2) + Fraction(1, 2) * Fraction(2, 3) + Fraction(1, 2) * Fraction(1, 3) == 1

    def test_point_mass(self, mpoint):
        assert derive_rule(mpoint).origin_stop == 1

    def test_inconsistent(self):
        with pytest.raises(InconsistentMeasure):
            derive_rule(GridMeasure({Quad(0, 1, 1, 1): Fraction(1)}))

    def test_json_round_trip(self, m0):
        rule = derive_rule(m0)
        again = StoppingRule.from_json(rule.to_json())
        assert again == rule
        assert chain_law(again) == m0

    def test_missing_cell_defaults(self, m0):
        c = derive_rule(m0).cell("+", 7, 7)
        assert c.stop == 0 and c.up + c.down == 1


@settings(max_examples=60)
@given(attainable_measures())
def test_split_is_probability(m):
    rule = derive_rule(m, verify=False)
    for c in rule.cells.values():
        assert c.stop + c.up + c.down == 1
        assert all(0 <= v <= 1 for v in (c.stop, c.up, c.down))


@settings(max_examples=60)
@given(attainable_measures())
def test_exact_in_law(m):
    assert chain_law(derive_rule(m, verify=False)) == m


@settings(max_examples=60)
@given(attainable_measures())
def test_reach_is_psi(m):
    reach = reach_probabilities(derive_rule(m, verify=False))
    for (side, a, b), r in reach.items():
        assert r == psi(m, a, b, side)


@settings(max_examples=60)
@given(attainable_measures())
def test_flow_conservation(m):
    rule = derive_rule(m, verify=False)
    for n in range(1, m.support_range + 1):
        for b in range(n + 1):
            a = n - b
            into_up = psi(m, a, b, "+") * rule.cell("+", a, b).up + psi(m, a, b, "-") * rule.cell("-", a, b).up
            into_down = psi(m, a, b, "+") * rule.cell("+", a, b).down + psi(m, a, b, "-") * rule.cell("-", a, b).down
            assert into_up == psi(m, a, b + 1, "+")
            assert into_down == psi(m, a + 1, b, "-")


@settings(max_examples=60)
@given(attainable_measures())
def test_terminal_law_mean(m):
    rule = derive_rule(m, verify=False)
    for (side, a, b), c in rule.cells.items():
        if c.stop:
            assert sum(c.x_law.values()) == 1
            assert sum(x * p for x, p in c.x_law.items()) == cell_stats(m, side, a, b).v
            assert all(-a <= x <= b for x in c.x_law)


class TestTrajectory:
    def test_from_moves(self):
        t = Trajectory.from_moves([1, -1, -1, 1, 1], 0)
        assert t.extremes == (1, -1, -2, 2, 3)
        assert t.quad == Quad(-2, 0, 3, 1)
        assert t.hit_rank(-2) == 3 and t.hit_rank(4) is None and t.hit_rank(0) == 0
        assert t.min_before(2) == -1 and t.max_before(2) == 1

    def test_empty(self):
        t = Trajectory((), 0, -1)
        assert t.quad == Quad(0, 0, 0, -1)
        assert t.reflect() == t

    @pytest.mark.parametrize("args", [((2,), 0, 1), ((1,), 2, 1), ((1, -1), 0, 1), ((), 0, 1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            Trajectory(*args)

    def test_reflect(self):
        t = Trajectory.from_moves([1, 1, -1], 1)
        assert t.reflect().quad == t.quad.reflect()


class TestSampling:
    def test_point_mass(self, mpoint):
        trajs = sample(derive_rule(mpoint), 5, seed=9)
        assert trajs == [Trajectory((), 0, -1)] * 5

    def test_m0_frequencies(self, m0):
        batch = sample_batch(derive_rule(m0), 10**6, seed=42)
        emp = empirical_law(batch)
        for q, p in m0:
            assert abs(float(emp.prob(q) - p)) <= 0.003
        assert set(emp.atoms) <= set(m0.atoms)

    def test_structure(self, m0):
        for t in sample(derive_rule(m0), 2000, seed=1):
            assert t.quad in m0.atoms
            assert t.i <= t.x <= t.s

    def test_determinism(self, m0):
        rule = derive_rule(m0)
        a = sample_batch(rule, 10000, seed=5)
        b = sample_batch(rule, 10000, seed=5, workers=4)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.moves, b.moves)
        assert a.trajectories() == b.trajectories()

    def test_prefix_stable(self, m0):
        rule = derive_rule(m0)
        long = sample(rule, 9000, seed=3)
        assert sample(rule, 5000, seed=3) == long[:5000]

    def test_seed_matters(self, m0):
        rule = derive_rule(m0)
        assert sample(rule, 500, seed=1) != sample(rule, 500, seed=2)

    def test_unique_counts(self, m0):
        batch = sample_batch(derive_rule(m0), 3000, seed=0)
        uniq = batch.unique()
        assert sum(uniq.values()) == 3000
        assert sum(uniq.values()) == sum(batch.quad_counts().values())

    def test_negative(self, m0):
        with pytest.raises(ValueError):
            sample_batch(derive_rule(m0), -1)


@settings(max_examples=15)
@given(attainable_measures(), st.integers(0, 1000))
def test_sampled_paths_valid(m, seed):
    for t in sample(derive_rule(m), 300, seed):
        assert m.prob(t.quad) > 0


def test_tv():
    m = GridMeasure({Quad(0, 0, 0, -1): Fraction(1, 2), Quad(0, 1, 1, 1): Fraction(1, 2)})
    assert tv_distance(m, m) == 0
    p = GridMeasure({Quad(0, 0, 0, -1): Fraction(1)})
    assert tv_distance(m, p) == 0.5


def test_point_mass_tv_zero(mpoint):
    assert tv_distance(empirical_law(sample_batch(derive_rule(mpoint), 100, 0)), mpoint) == 0
