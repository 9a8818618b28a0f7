import json
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rangewalk.measure import (GridMeasure, MassError, ParseError, Quad, SupportError,
                               coherent_quads, expectation, format_fraction, is_coherent,
                               load_measure, marginal_sx, measure_from_json, random_measure,
                               save_measure, sx_from_json, to_fraction)

from .strategies import measures


def write(tmp_path, atoms, h="1", name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"h": h, "atoms": atoms}))
    return path


def atom(i, x, s, sigma, p):
    return {"i": i, "x": x, "s": s, "sigma": sigma, "p": p}


class TestLoad:
    def test_point_mass(self, tmp_path, mpoint):
        m = load_measure(write(tmp_path, [atom(0, 0, 0, -1, "1")]))
        assert m == mpoint
        assert m.support_range == 0

    def test_m0(self, tmp_path, m0):
        atoms = [atom(-1, -1, 0, -1, "1/2"), atom(-1, -1, 1, -1, "1/6"), atom(0, 2, 2, 1, "1/3")]
        m = load_measure(write(tmp_path, atoms))
        assert m == m0
        assert m.prob(Quad(0, 2, 2, 1)) == Fraction(1, 3)

    def test_forced_plus_signature(self, tmp_path):
        with pytest.raises(SupportError):
            load_measure(write(tmp_path, [atom(0, 1, 1, -1, "1")]))

    @pytest.mark.parametrize("q", [(0, 1, 1, -1), (-1, -1, 0, 1), (0, 0, 0, 1)])
    def test_forced_cases_rejected(self, q):
        assert not is_coherent(Quad(*q))
        with pytest.raises(SupportError):
            GridMeasure({Quad(*q): Fraction(1)})

    @pytest.mark.parametrize("q", [(1, 1, 2, 1), (-2, 3, 2, 1), (-1, 0, 0, 1)])
    def test_ordering_violations(self, q):
        with pytest.raises(SupportError):
            GridMeasure({Quad(*q): Fraction(1)})

    def test_mass_must_be_one(self):
        with pytest.raises(MassError):
            GridMeasure({Quad(0, 0, 0, -1): Fraction(1, 2)})
        with pytest.raises(MassError):
            GridMeasure({Quad(0, 0, 0, -1): Fraction(3, 2), Quad(0, 1, 1, 1): Fraction(-1, 2)})

    def test_zero_atoms_dropped(self):
        m = GridMeasure({Quad(0, 0, 0, -1): Fraction(1), Quad(0, 1, 1, 1): Fraction(0)})
        assert len(m) == 1

    def test_duplicate_quad(self, tmp_path):
        with pytest.raises(ParseError):
            load_measure(write(tmp_path, [atom(0, 0, 0, -1, "1/2"), atom(0, 0, 0, -1, "1/2")]))

    @pytest.mark.parametrize("bad", ["0.5", "1/0", "abc", "", None, 0.5])
    def test_strict_rationals(self, bad):
        with pytest.raises(ParseError):
            to_fraction(bad)

    def test_rational_forms(self):
        assert to_fraction("3/6") == Fraction(1, 2)
        assert to_fraction("-2") == -2
        assert to_fraction(3) == 3
        assert format_fraction(Fraction(4, 2)) == "2"
        assert format_fraction(Fraction(-1, 3)) == "-1/3"

    def test_not_json(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_measure(path)

    def test_nonpositive_step(self):
        with pytest.raises(ParseError):
            measure_from_json({"h": "0", "atoms": [atom(0, 0, 0, -1, "1")]})


class TestMarginal:
    def test_point(self, mpoint):
        assert marginal_sx(mpoint) == {(0, 0): 1}

    def test_m0(self, m0):
        assert marginal_sx(m0) == {(0, -1): Fraction(1, 2), (1, -1): Fraction(1, 6), (2, 2): Fraction(1, 3)}

    @given(measures())
    def test_mass_conserved(self, m):
        assert sum(marginal_sx(m).values()) == 1

    def test_sx_file_checks(self):
        with pytest.raises(SupportError):
            sx_from_json({"atoms": [{"s": 0, "x": 1, "p": "1"}]})
        with pytest.raises(MassError):
            sx_from_json({"atoms": [{"s": 1, "x": 1, "p": "1/2"}]})


class TestExpectation:
    def test_m0_mean(self, m0):
        assert expectation(m0, lambda q: q.x) == 0

    def test_point_range(self, mpoint):
        assert expectation(mpoint, lambda q: q.s - q.i) == 0

    def test_m0_range(self, m0):
        assert expectation(m0, lambda q: q.s - q.i) == Fraction(3, 2)

    @given(measures(), st.fractions(max_denominator=20), st.fractions(max_denominator=20))
    def test_linearity(self, m, alpha, beta):
        f = lambda q: q.s * q.s - q.x
        g = lambda q: q.i + 3 * q.sigma
        lhs = expectation(m, lambda q: alpha * f(q) + beta * g(q))
        assert lhs == alpha * expectation(m, f) + beta * expectation(m, g)


@given(measures())
def test_round_trip(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("rt") / "m.json"
    save_measure(m, path)
    again = load_measure(path)
    assert again == m and again.h == m.h
    assert again.atoms == m.atoms
    save_measure(again, path)
    assert json.loads(path.read_text()) == m.to_json()


def test_reflection_involution():
    rng = random.Random(3)
    for _ in range(50):
        m = random_measure(rng)
        assert m.reflect().reflect() == m
        assert all(is_coherent(q.reflect()) for q in m.atoms)


def test_coherent_quads_counts():
    quads = coherent_quads(1, 1)
    assert len(quads) == len(set(quads))
    assert Quad(0, 0, 0, -1) in quads and Quad(0, 0, 0, 1) not in quads
    # (i, s) in {(0,0),(0,1),(-1,0),(-1,1)}: 1 + 2 + 2 + 3*2 positions-signatures
    assert len(quads) == 11
